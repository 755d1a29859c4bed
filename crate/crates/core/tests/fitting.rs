use fibercouple_core::fitting::{
    fit_decay, fit_g2, fit_saturation, g2_area_method, model_g2, nlls_fit, student_t_975, Bounds, DecayModel,
    FitError, FitOptions, G2Histogram, G2Model, G2Params, Model, SaturationModel, WeightedData,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};

const REP: f64 = 13.16;

struct Line;

impl Model for Line {
    fn n_params(&self) -> usize {
        1
    }
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = x;
        p[0] * x
    }
}

/// y = a·b·x: only the product is identifiable.
struct Product;

impl Model for Product {
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = p[1] * x;
        grad[1] = p[0] * x;
        p[0] * p[1] * x
    }
}

fn g2_params(g2_zero: f64, b: f64) -> G2Params {
    G2Params {
        peak_height: 400.0,
        tau_peak_ns: 1.0 / 1.13,
        bunching: b,
        tau_blink_ns: 30.0,
        g2_zero,
        background: 5.0,
    }
}

fn tau_grid(periods: f64, bin: f64) -> Vec<f64> {
    let n = (periods * REP / bin).round() as i64;
    (-n..=n).map(|k| k as f64 * bin).collect()
}

fn histogram(p: &G2Params, rng: &mut StdRng) -> G2Histogram {
    let tau = tau_grid(15.0, 0.25);
    let counts = model_g2(p, &tau, REP)
        .unwrap()
        .iter()
        .map(|&c| Poisson::new(c).unwrap().sample(rng))
        .collect();
    G2Histogram::new(tau, counts, REP).unwrap()
}

fn covers(value: f64, ci: (f64, f64)) -> bool {
    ci.0 <= value && value <= ci.1
}

#[test]
fn t_quantiles() {
    assert!((student_t_975(1) - 12.7062).abs() < 1e-4);
    assert!((student_t_975(5) - 2.5706).abs() < 1e-4);
    assert!((student_t_975(18) - 2.1009).abs() < 1e-4);
    assert!((student_t_975(1000) - 1.9623).abs() < 1e-4);
}

#[test]
fn exact_linear_model_in_three_iterations() {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.75 * v).collect();
    let data = WeightedData::unweighted(x, y).unwrap();
    let r = nlls_fit(&Line, &data, &[1.0], &Bounds::unbounded(1), &FitOptions::default()).unwrap();
    assert!((r.params[0] - 2.75).abs() <= 4.0 * f64::EPSILON * 2.75);
    assert!(r.iterations <= 3, "{}", r.iterations);
    assert!(r.converged);
}

#[test]
fn engine_errors() {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
    let data = WeightedData::unweighted(x.clone(), y.clone()).unwrap();
    let e = nlls_fit(&Product, &data, &[1.0, 1.0], &Bounds::unbounded(2), &FitOptions::default()).unwrap_err();
    assert!(matches!(e, FitError::SingularJacobian { .. }), "{e:?}");

    let bounds = Bounds::new(vec![0.0], vec![1.0]).unwrap();
    let e = nlls_fit(&Line, &data, &[2.0], &bounds, &FitOptions::default()).unwrap_err();
    assert!(matches!(e, FitError::InitialOutOfBounds { param: 0 }));

    let opts = FitOptions {
        max_iterations: 1,
        ..FitOptions::default()
    };
    let sat = SaturationModel;
    let p: Vec<f64> = (1..=12).map(|k| k as f64 * 0.5).collect();
    let i: Vec<f64> = p.iter().map(|v| 1000.0 * (1.0 - (-v / 2.0f64).exp())).collect();
    let d = WeightedData::unweighted(p, i).unwrap();
    let e = nlls_fit(&sat, &d, &[10.0, 50.0], &Bounds::unbounded(2), &opts).unwrap_err();
    assert!(matches!(e, FitError::IterationCap(1)), "{e:?}");

    assert!(WeightedData::unweighted(vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
    assert!(WeightedData::new(vec![1.0], vec![1.0], vec![-1.0]).is_err());
}

fn check_gradient(model: &dyn Model, p: &[f64], x: f64) {
    let n = model.n_params();
    let mut g = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let f = model.eval(x, p, &mut g);
    for j in 0..n {
        let h = 1e-5 * p[j].abs().max(1e-3);
        let mut up = p.to_vec();
        let mut dn = p.to_vec();
        up[j] += h;
        dn[j] -= h;
        let fd = (model.eval(x, &up, &mut scratch) - model.eval(x, &dn, &mut scratch)) / (2.0 * h);
        let scale = g[j].abs().max(1e-3 * f.abs() / p[j].abs().max(1e-3));
        assert!((g[j] - fd).abs() <= 1e-6 * scale, "param {j} at x={x}: {} vs {fd}", g[j]);
    }
}

#[test]
fn model_gradients_match_central_differences() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let p = [rng.random_range(100.0..5000.0), rng.random_range(0.2..5.0)];
        check_gradient(&SaturationModel, &p, rng.random_range(0.0..10.0));
        let p = [rng.random_range(100.0..5000.0), rng.random_range(0.3..3.0), rng.random_range(0.0..50.0)];
        check_gradient(&DecayModel, &p, rng.random_range(0.0..5.0));
        let g2 = G2Model::new(REP, -6.0 * REP, 6.0 * REP);
        let p = [
            rng.random_range(50.0..500.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.1..1.5),
            rng.random_range(10.0..60.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..10.0),
        ];
        let k = rng.random_range(-5i32..=5) as f64;
        check_gradient(&g2, &p, k * REP + rng.random_range(-3.0..3.0));
    }
}

#[test]
fn g2_model_limits() {
    let tau = tau_grid(8.0, 0.02);
    let at = |v: &[f64], t: f64| v[tau.iter().position(|&x| (x - t).abs() < 1e-9).unwrap()];

    // ideal single emitter: only background at zero delay, equal side peaks
    let ideal = model_g2(&g2_params(0.0, 0.0), &tau, REP).unwrap();
    let p = g2_params(0.0, 0.0);
    let tails = 2.0 * p.peak_height * (-REP / p.tau_peak_ns).exp();
    assert!((at(&ideal, 0.0) - (p.background + tails)).abs() < 1e-9);
    let side = at(&ideal, REP);
    for k in [-6.0, -2.0, 2.0, 6.0] {
        assert!((at(&ideal, k * REP) - side).abs() < 1e-6 * side);
    }

    // Poissonian-like train: all peaks equal
    let flat = model_g2(&g2_params(1.0, 0.0), &tau, REP).unwrap();
    assert!((at(&flat, 0.0) - at(&flat, 3.0 * REP)).abs() < 1e-6 * at(&flat, 0.0));

    // symmetric in delay
    let bl = model_g2(&g2_params(0.3, 0.8), &tau, REP).unwrap();
    for (a, b) in bl.iter().zip(bl.iter().rev()) {
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    // bunching envelope: peak 1 at 1 + b·exp(−T/τ_b), decaying to 1/(1+b) of the envelope at zero delay
    let mut p = g2_params(0.3, 0.8);
    p.tau_blink_ns = 5.0 * REP;
    p.background = 0.0;
    let long = tau_grid(80.0, 0.04);
    let v = model_g2(&p, &long, REP).unwrap();
    let at_long = |t: f64| v[long.iter().position(|&x| (x - t).abs() < 1e-9).unwrap()];
    let peak1 = at_long(REP);
    assert!((peak1 / p.peak_height - (1.0 + 0.8 * (-0.2f64).exp())).abs() < 1e-6);
    let far = at_long(79.0 * REP);
    assert!((far / (p.peak_height * 1.8) - 1.0 / 1.8).abs() < 1e-5);
    assert!((1.0 / 1.8f64 - 0.556).abs() < 5e-4);

    let coarse = tau_grid(8.0, 0.6);
    assert!(matches!(model_g2(&g2_params(0.2, 0.0), &coarse, REP), Err(FitError::UnresolvedPeaks { .. })));
}

#[test]
fn g2_fit_recovers_g2_zero_and_preparation() {
    let mut rng = StdRng::seed_from_u64(3);
    let h = histogram(&g2_params(0.20, 0.4), &mut rng);
    let f = fit_g2(&h).unwrap();
    assert!(covers(0.20, f.g2_zero.ci95), "{:?}", f.g2_zero);

    let b = 1.0 / 0.558 - 1.0;
    let h = histogram(&g2_params(0.20, b), &mut rng);
    let f = fit_g2(&h).unwrap();
    assert!(covers(0.558, f.preparation_efficiency.ci95), "{:?}", f.preparation_efficiency);
    assert!((f.blinking_amplitude.value + f.preparation_efficiency.value - 1.0).abs() < 1e-12);
}

#[test]
fn g2_fit_of_ideal_emitter_without_background() {
    let mut rng = StdRng::seed_from_u64(5);
    let mut p = g2_params(0.0, 0.0);
    p.background = 0.0;
    let tau = tau_grid(15.0, 0.25);
    let counts = model_g2(&p, &tau, REP)
        .unwrap()
        .iter()
        .map(|&c| if c > 0.0 { Poisson::new(c).unwrap().sample(&mut rng) } else { 0.0 })
        .collect();
    let f = fit_g2(&G2Histogram::new(tau, counts, REP).unwrap()).unwrap();
    assert!(covers(0.0, f.g2_zero.ci95), "{:?}", f.g2_zero);
    assert!(f.g2_zero.ci95.0 >= 0.0);
    assert!(f.preparation_efficiency.value > 0.99, "{:?}", f.preparation_efficiency);
    assert!(covers(1.0, f.preparation_efficiency.ci95));
}

#[test]
fn g2_histogram_checks() {
    let tau = tau_grid(15.0, 0.25);
    let flat = vec![7.0; tau.len()];
    let e = fit_g2(&G2Histogram::new(tau.clone(), flat, REP).unwrap()).unwrap_err();
    assert!(matches!(e, FitError::NoPeakStructure), "{e:?}");
    let short = tau_grid(3.0, 0.25);
    assert!(G2Histogram::new(short.clone(), vec![1.0; short.len()], REP).is_err());
    assert!(G2Histogram::new(vec![0.0, -1.0], vec![1.0, 1.0], REP).is_err());
}

#[test]
fn area_method_on_model_output() {
    let tau = tau_grid(15.0, 0.25);
    let tp = 1.0 / 1.13;
    let h = |g: f64| G2Histogram::new(tau.clone(), model_g2(&g2_params(g, 0.8), &tau, REP).unwrap(), REP).unwrap();

    let h46 = h(0.46);
    let g = g2_area_method(&h46, 3.0 * tp, 8).unwrap();
    assert!((g - 0.46).abs() <= 0.02, "{g}");
    let z = g2_area_method(&h(0.0), 3.0 * tp, 8).unwrap();
    assert!(z.abs() < 5e-3, "{z}");

    // window robustness
    let vals: Vec<f64> = (0..=8).map(|k| g2_area_method(&h46, tp * (1.0 + 0.25 * k as f64), 8).unwrap()).collect();
    let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!((hi - lo) / lo < 0.01, "{vals:?}");

    // agrees with the fitted parameter on noiseless data
    let f = fit_g2(&h46).unwrap();
    assert!((f.g2_zero_area.unwrap() - f.g2_zero.value).abs() <= 0.03 * f.g2_zero.value);

    let e = g2_area_method(&h46, 3.0 * tp, 14).unwrap_err();
    assert!(matches!(e, FitError::InsufficientLongDelay { .. }), "{e:?}");
    assert!(g2_area_method(&h46, 0.6 * REP, 8).is_err());
}

#[test]
fn saturation_exact_recovery_and_levels() {
    let p: Vec<f64> = (0..12).map(|k| 0.25 + 0.75 * k as f64).collect();
    let i: Vec<f64> = p.iter().map(|v| 3.37e6 * (1.0 - (-v / 1.7f64).exp())).collect();
    let pts: Vec<(f64, f64)> = p.iter().copied().zip(i.iter().copied()).collect();
    let f = fit_saturation(&pts).unwrap();
    assert!((f.i_max.value / 3.37e6 - 1.0).abs() < 1e-8);
    assert!((f.p_sat.value / 1.7 - 1.0).abs() < 1e-8);
    assert!((f.saturation_level(f.p_sat.value) - 0.632).abs() < 5e-4);
    assert!((f.power_for_level(0.975).unwrap() / f.p_sat.value - 3.689).abs() < 5e-4);

    let same: Vec<(f64, f64)> = (0..5).map(|k| (2.0, 100.0 + k as f64)).collect();
    assert!(matches!(fit_saturation(&same), Err(FitError::AllPowersEqual)));
    assert!(fit_saturation(&pts[..2]).is_err());
}

#[test]
fn decay_recovers_rate_and_rejects_flat_traces() {
    let t: Vec<f64> = (0..60).map(|k| k as f64 * 0.05).collect();
    let y: Vec<f64> = t.iter().map(|v| 1000.0 * (-1.13 * v).exp()).collect();
    let trace: Vec<(f64, f64)> = t.iter().copied().zip(y.iter().copied()).collect();
    let f = fit_decay(&trace).unwrap();
    assert!((f.rate_per_ns.value - 1.13).abs() < 5e-5, "{}", f.rate_per_ns.value);

    let flat: Vec<(f64, f64)> = t.iter().map(|&v| (v, 200.0)).collect();
    assert!(matches!(fit_decay(&flat), Err(FitError::NonDecaying)));
}

fn coverage(hits: &[usize], trials: usize) {
    for (j, &h) in hits.iter().enumerate() {
        let c = h as f64 / trials as f64;
        assert!(c >= 0.90, "parameter {j}: coverage {c}");
    }
}

#[test]
fn saturation_monte_carlo_coverage() {
    let mut rng = StdRng::seed_from_u64(21);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let p: Vec<f64> = (0..20).map(|k| 0.25 + 0.5 * k as f64).collect();
    let trials = 200;
    let mut hits = [0usize; 2];
    for _ in 0..trials {
        let pts: Vec<(f64, f64)> = p
            .iter()
            .map(|&v| {
                let i = 1000.0 * (1.0 - (-v / 2.0f64).exp());
                (v, i * (1.0 + 0.05 * noise.sample(&mut rng)))
            })
            .collect();
        let f = fit_saturation(&pts).unwrap();
        hits[0] += covers(1000.0, f.i_max.ci95) as usize;
        hits[1] += covers(2.0, f.p_sat.ci95) as usize;
    }
    coverage(&hits, trials);
}

#[test]
fn decay_monte_carlo_coverage() {
    // Counting noise, 400 at the peak; the fit assumes Poisson variances.
    let mut rng = StdRng::seed_from_u64(22);
    let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
    let trials = 200;
    let mut hits = [0usize; 1];
    for _ in 0..trials {
        let trace: Vec<(f64, f64)> = t
            .iter()
            .map(|&v| (v, Poisson::new(380.0 * (-1.13 * v).exp() + 20.0).unwrap().sample(&mut rng)))
            .collect();
        let f = fit_decay(&trace).unwrap();
        hits[0] += covers(1.13, f.rate_per_ns.ci95) as usize;
    }
    coverage(&hits, trials);
}

#[test]
fn g2_monte_carlo_coverage() {
    // Counting noise: 400 counts at the long-delay peak maximum is 5 % there.
    let mut rng = StdRng::seed_from_u64(23);
    let truth = g2_params(0.20, 1.0 / 0.558 - 1.0);
    let trials = 200;
    let mut hits = [0usize; 3];
    for _ in 0..trials {
        let f = fit_g2(&histogram(&truth, &mut rng)).unwrap();
        hits[0] += covers(truth.g2_zero, f.g2_zero.ci95) as usize;
        hits[1] += covers(0.558, f.preparation_efficiency.ci95) as usize;
        hits[2] += covers(truth.tau_peak_ns, f.tau_peak_ns.ci95) as usize;
    }
    coverage(&hits, trials);
}

#[test]
fn fits_are_scale_equivariant() {
    let tau = tau_grid(15.0, 0.25);
    let counts = model_g2(&g2_params(0.3, 0.6), &tau, REP).unwrap();
    let c = 7.5;
    let a = fit_g2(&G2Histogram::new(tau.clone(), counts.clone(), REP).unwrap()).unwrap();
    let b = fit_g2(&G2Histogram::new(tau, counts.iter().map(|v| v * c).collect(), REP).unwrap()).unwrap();
    assert!((a.g2_zero.value - b.g2_zero.value).abs() < 1e-6);
    assert!((a.blinking_amplitude.value - b.blinking_amplitude.value).abs() < 1e-6);

    let pts: Vec<(f64, f64)> = (0..10)
        .map(|k| {
            let p = 0.3 + 0.6 * k as f64;
            (p, 800.0 * (1.0 - (-p / 1.5f64).exp()) * (1.0 + 0.02 * ((k * 7 % 5) as f64 - 2.0)))
        })
        .collect();
    let s1 = fit_saturation(&pts).unwrap();
    let s2 = fit_saturation(&pts.iter().map(|&(p, i)| (p, i * c)).collect::<Vec<_>>()).unwrap();
    assert!((s1.p_sat.value - s2.p_sat.value).abs() < 1e-8 * s1.p_sat.value);
    assert!((s2.i_max.value / s1.i_max.value - c).abs() < 1e-8 * c);

    let trace: Vec<(f64, f64)> = (0..30)
        .map(|k| {
            let t = k as f64 * 0.1;
            (t, (500.0 * (-1.13 * t).exp() + 10.0) * (1.0 + 0.03 * ((k * 3 % 7) as f64 - 3.0) / 3.0))
        })
        .collect();
    let d1 = fit_decay(&trace).unwrap();
    let d2 = fit_decay(&trace.iter().map(|&(t, y)| (t, y * c)).collect::<Vec<_>>()).unwrap();
    assert!((d1.rate_per_ns.value - d2.rate_per_ns.value).abs() < 1e-8);
}
