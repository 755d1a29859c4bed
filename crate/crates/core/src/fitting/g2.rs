//! Pulsed second-order correlation: a train of two-sided exponential peaks at
//! multiples of the repetition period, with a reduced zero-delay peak and a
//! blinking-induced bunching envelope on the side peaks,
//!
//! ```text
//! counts(τ) = B + Σ_k A_k·exp(−|τ − kT|/τ_peak)
//! A_0 = g2_zero·A,   A_k = A·(1 + b·exp(−|k|·T/τ_blink))
//! ```
//!
//! The long-delay peaks (height `A`) are the unbunched reference, so the
//! fraction lost to blinking is `b/(1 + b)`.

use alloc::vec;
use alloc::vec::Vec;

use super::{poisson_fit, Bounds, Estimate, FitError, FitOptions, FitResult, Model};
use crate::math;

/// Fewest long-delay peaks the area method accepts.
pub const MIN_LONG_DELAY_PEAKS: usize = 3;
/// Residual bunching below which a side peak counts as long-delay.
const ENVELOPE_CUTOFF: f64 = 0.05;
/// Periods of span required on each side of zero delay.
const MIN_SPAN_PERIODS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Params {
    pub peak_height: f64,
    pub tau_peak_ns: f64,
    /// Bunching amplitude `b` of the side peaks next to zero delay.
    pub bunching: f64,
    pub tau_blink_ns: f64,
    pub g2_zero: f64,
    pub background: f64,
}

impl G2Params {
    pub fn to_array(&self) -> [f64; 6] {
        [self.peak_height, self.tau_peak_ns, self.bunching, self.tau_blink_ns, self.g2_zero, self.background]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        G2Params {
            peak_height: p[0],
            tau_peak_ns: p[1],
            bunching: p[2],
            tau_blink_ns: p[3],
            g2_zero: p[4],
            background: p[5],
        }
    }
}

/// [`G2Params`] order; peaks are summed over every period touching
/// `[tau_min, tau_max]` plus one on each side.
#[derive(Debug, Clone, Copy)]
pub struct G2Model {
    rep_period: f64,
    k_lo: i64,
    k_hi: i64,
}

impl G2Model {
    pub fn new(rep_period_ns: f64, tau_min: f64, tau_max: f64) -> Self {
        G2Model {
            rep_period: rep_period_ns,
            k_lo: math::floor(tau_min / rep_period_ns) as i64 - 1,
            k_hi: math::ceil(tau_max / rep_period_ns) as i64 + 1,
        }
    }
}

impl Model for G2Model {
    fn n_params(&self) -> usize {
        6
    }

    fn eval(&self, tau: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (a, tp, b, tb, g2, bg) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        let t = self.rep_period;
        g.iter_mut().for_each(|v| *v = 0.0);
        g[5] = 1.0;
        let mut f = bg;
        for k in self.k_lo..=self.k_hi {
            let d = (tau - k as f64 * t).abs();
            let e = math::exp(-d / tp);
            if e == 0.0 {
                continue;
            }
            let (mult, ak) = if k == 0 {
                g[4] += a * e;
                (g2, g2 * a)
            } else {
                let kt = k.unsigned_abs() as f64 * t;
                let env = math::exp(-kt / tb);
                g[2] += a * env * e;
                g[3] += a * b * env * kt / (tb * tb) * e;
                (1.0 + b * env, a * (1.0 + b * env))
            };
            g[0] += mult * e;
            g[1] += ak * e * d / (tp * tp);
            f += ak * e;
        }
        f
    }
}

fn check_params(p: &G2Params, rep_period: f64) -> Result<(), FitError> {
    if !(rep_period > 0.0) {
        return Err(FitError::BadParams("repetition period must be positive"));
    }
    if !(p.tau_peak_ns > 0.0 && p.tau_blink_ns > 0.0) {
        return Err(FitError::BadParams("times must be positive"));
    }
    if !(p.peak_height >= 0.0 && p.bunching >= 0.0 && p.g2_zero >= 0.0 && p.background >= 0.0) {
        return Err(FitError::BadParams("amplitudes must be non-negative"));
    }
    Ok(())
}

fn max_spacing(tau: &[f64]) -> f64 {
    tau.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn model_g2(p: &G2Params, tau: &[f64], rep_period_ns: f64) -> Result<Vec<f64>, FitError> {
    check_params(p, rep_period_ns)?;
    if tau.is_empty() || tau.iter().any(|v| !v.is_finite()) || tau.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::BadData("delays must be finite and strictly increasing"));
    }
    let bin = max_spacing(tau);
    if bin > 0.5 * p.tau_peak_ns {
        return Err(FitError::UnresolvedPeaks {
            bin_ns: bin,
            tau_peak_ns: p.tau_peak_ns,
        });
    }
    let model = G2Model::new(rep_period_ns, tau[0], tau[tau.len() - 1]);
    let q = p.to_array();
    let mut g = [0.0; 6];
    Ok(tau.iter().map(|&t| model.eval(t, &q, &mut g)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Histogram {
    tau: Vec<f64>,
    counts: Vec<f64>,
    rep_period: f64,
}

impl G2Histogram {
    pub fn new(tau_ns: Vec<f64>, counts: Vec<f64>, rep_period_ns: f64) -> Result<Self, FitError> {
        if tau_ns.len() != counts.len() || tau_ns.len() < 2 {
            return Err(FitError::BadHistogram("delays and counts must have equal length of at least 2"));
        }
        if tau_ns.iter().chain(&counts).any(|v| !v.is_finite()) || !(rep_period_ns > 0.0) {
            return Err(FitError::BadHistogram("non-finite value or non-positive period"));
        }
        if counts.iter().any(|&c| c < 0.0) {
            return Err(FitError::BadHistogram("negative counts"));
        }
        if tau_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FitError::BadHistogram("delays must be strictly increasing"));
        }
        let span = MIN_SPAN_PERIODS * rep_period_ns;
        if tau_ns[0] > -span || tau_ns[tau_ns.len() - 1] < span {
            return Err(FitError::BadHistogram("need five repetition periods on each side of zero delay"));
        }
        Ok(G2Histogram {
            tau: tau_ns,
            counts,
            rep_period: rep_period_ns,
        })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn rep_period(&self) -> f64 {
        self.rep_period
    }

    fn bin_edges(&self, i: usize) -> (f64, f64) {
        let t = &self.tau;
        let n = t.len();
        let left = if i > 0 { 0.5 * (t[i] - t[i - 1]) } else { 0.5 * (t[1] - t[0]) };
        let right = if i + 1 < n { 0.5 * (t[i + 1] - t[i]) } else { 0.5 * (t[n - 1] - t[n - 2]) };
        (t[i] - left, t[i] + right)
    }

    fn covered(&self) -> (f64, f64) {
        (self.bin_edges(0).0, self.bin_edges(self.tau.len() - 1).1)
    }

    /// Integral over `[a, b]` of the piecewise-constant curve through the
    /// bin values, in counts·ns.
    fn integrate(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.tau.len() {
            let (l, r) = self.bin_edges(i);
            let ov = r.min(b) - l.max(a);
            if ov > 0.0 {
                s += self.counts[i] * ov;
            }
        }
        s
    }

    /// Mean count in bins near the midpoints between peaks, at `|τ| ≥ from`.
    fn midpoint_level(&self, from: f64) -> Option<f64> {
        let t = self.rep_period;
        let band = (1.5 * max_spacing(&self.tau)).max(0.05 * t);
        let (mut s, mut n) = (0.0, 0usize);
        for (&tau, &c) in self.tau.iter().zip(&self.counts) {
            let off = tau - math::round(tau / t) * t;
            if tau.abs() >= from && off.abs() >= 0.5 * t - band {
                s += c;
                n += 1;
            }
        }
        (n > 0).then(|| s / n as f64)
    }

    /// Peak indices whose window `kT ± half` lies inside the histogram.
    fn full_peaks(&self, half: f64) -> (i64, i64) {
        let (lo, hi) = self.covered();
        let t = self.rep_period;
        (math::ceil((lo + half) / t) as i64, math::floor((hi - half) / t) as i64)
    }
}

/// First side-peak index whose bunching `b·exp(−kT/τ_blink)` is below 5 %.
pub fn long_delay_start(bunching: f64, tau_blink_ns: f64, rep_period_ns: f64) -> usize {
    if !(bunching > ENVELOPE_CUTOFF) {
        return 1;
    }
    let k = tau_blink_ns / rep_period_ns * math::ln(bunching / ENVELOPE_CUTOFF);
    (math::floor(k) as usize + 1).max(1)
}

/// Background-subtracted area of the zero-delay peak over the mean area of
/// the peaks with `|k| ≥ k_min`, each integrated over `kT ± half_window`.
/// The background is the mean level midway between long-delay peaks.
pub fn g2_area_method(hist: &G2Histogram, half_window_ns: f64, k_min: usize) -> Result<f64, FitError> {
    let t = hist.rep_period;
    if !(half_window_ns > 0.0 && half_window_ns < 0.5 * t) {
        return Err(FitError::BadWindow(half_window_ns));
    }
    let k_min = k_min.max(1) as i64;
    let (k_lo, k_hi) = hist.full_peaks(half_window_ns);
    let long: Vec<i64> = (k_lo..=k_hi).filter(|k| k.abs() >= k_min).collect();
    if long.len() < MIN_LONG_DELAY_PEAKS {
        return Err(FitError::InsufficientLongDelay {
            available: long.len(),
            needed: MIN_LONG_DELAY_PEAKS,
        });
    }
    let bg = hist
        .midpoint_level((k_min as f64 - 0.5) * t)
        .ok_or(FitError::InsufficientLongDelay {
            available: 0,
            needed: MIN_LONG_DELAY_PEAKS,
        })?;
    let w = 2.0 * half_window_ns;
    let area = |k: i64| hist.integrate(k as f64 * t - half_window_ns, k as f64 * t + half_window_ns) - bg * w;
    let reference = long.iter().map(|&k| area(k)).sum::<f64>() / long.len() as f64;
    if !(reference > 0.0) {
        return Err(FitError::NoPeakStructure);
    }
    Ok(area(0) / reference)
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Fit {
    pub g2_zero: Estimate,
    /// Area-method value using the fitted envelope; `None` when the histogram
    /// holds too few long-delay peaks.
    pub g2_zero_area: Option<f64>,
    pub bunching: Estimate,
    /// `b/(1 + b)`.
    pub blinking_amplitude: Estimate,
    /// `1/(1 + b)`.
    pub preparation_efficiency: Estimate,
    pub peak_height: Estimate,
    pub tau_peak_ns: Estimate,
    pub tau_blink_ns: Estimate,
    pub background: Estimate,
    pub long_delay_start: usize,
    pub fit: FitResult,
}

/// Starting values read off the histogram.
fn initial_guess(h: &G2Histogram) -> Result<G2Params, FitError> {
    let t = h.rep_period;
    let c = &h.counts;
    let (cmin, cmax) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if cmax - cmin <= 1e-12 * cmax.abs().max(1.0) {
        return Err(FitError::NoPeakStructure);
    }
    let bg = h.midpoint_level(1.5 * t).unwrap_or(cmin);
    let spread = {
        let band = (1.5 * max_spacing(&h.tau)).max(0.05 * t);
        let v: Vec<f64> = h
            .tau
            .iter()
            .zip(c)
            .filter(|(&x, _)| x.abs() > 1.5 * t && (x - math::round(x / t) * t).abs() >= 0.5 * t - band)
            .map(|(_, &y)| (y - bg) * (y - bg))
            .collect();
        math::sqrt(v.iter().sum::<f64>() / v.len().max(1) as f64)
    };
    let near = (0.05 * t).max(max_spacing(&h.tau));
    let height = |k: i64| -> f64 {
        let centre = k as f64 * t;
        h.tau
            .iter()
            .zip(c)
            .filter(|(&x, _)| (x - centre).abs() <= near)
            .map(|(_, &y)| y - bg)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let half = 0.4 * t;
    let area = |k: i64| h.integrate(k as f64 * t - half, k as f64 * t + half) - bg * 2.0 * half;
    let (k_lo, k_hi) = h.full_peaks(half);
    let k_far = k_lo.abs().min(k_hi);
    let outer: Vec<i64> = (k_lo..=k_hi).filter(|k| k.abs() * 3 >= 2 * k_far && *k != 0).collect();
    let a0 = outer.iter().map(|&k| height(k)).sum::<f64>() / outer.len() as f64;
    if !(a0 > 3.0 * spread) {
        return Err(FitError::NoPeakStructure);
    }
    let area0 = outer.iter().map(|&k| area(k)).sum::<f64>() / outer.len() as f64;
    let tp0 = (area0 / (2.0 * a0)).clamp(2.0 * max_spacing(&h.tau), 0.2 * t);
    let g2 = (area(0) / area0).clamp(0.0, 5.0);
    let excess = |k: i64| 0.5 * (height(k) + height(-k)) / a0 - 1.0;
    let (e1, e2) = (excess(1), excess(2));
    let (b0, tb0) = if e1 > 0.02 && e2 > 0.0 && e1 > e2 {
        let tb = (t / math::ln(e1 / e2)).clamp(0.1 * t, 100.0 * t);
        (e1 * math::exp(t / tb), tb)
    } else if e1 > 0.02 {
        (e1 * math::exp(0.5), 2.0 * t)
    } else {
        (0.0, 2.0 * t)
    };
    Ok(G2Params {
        peak_height: a0,
        tau_peak_ns: tp0,
        bunching: b0,
        tau_blink_ns: tb0,
        g2_zero: g2,
        background: bg.max(0.0),
    })
}

/// Poisson-weighted fit of [`model_g2`] (see [`poisson_fit`](super::poisson_fit)). When no bunching is resolved the
/// envelope is dropped (`b = 0`) rather than left unidentifiable.
pub fn fit_g2(hist: &G2Histogram) -> Result<G2Fit, FitError> {
    let t = hist.rep_period;
    let start = initial_guess(hist)?;
    let tau = &hist.tau;
    let model = G2Model::new(t, tau[0], tau[tau.len() - 1]);
    let bin = max_spacing(tau);
    let bounds = Bounds::new(
        vec![0.0, 1e-3 * bin, 0.0, 0.05 * t, 0.0, 0.0],
        vec![f64::INFINITY, t, f64::INFINITY, 1e4 * t, f64::INFINITY, f64::INFINITY],
    )?;
    let run = |p: &G2Params, hold_envelope: bool| {
        let opts = FitOptions {
            fixed: if hold_envelope { vec![false, false, true, true, false, false] } else { Vec::new() },
            ..FitOptions::default()
        };
        poisson_fit(&model, tau, &hist.counts, &p.to_array(), &bounds, &opts)
    };
    let flat = |p: &G2Params| G2Params { bunching: 0.0, ..*p };
    let fit = if start.bunching == 0.0 {
        run(&start, true)?
    } else {
        match run(&start, false) {
            Ok(f) if f.params[2] > 1e-9 => f,
            Ok(f) => run(&flat(&G2Params::from_slice(&f.params)), true)?,
            Err(FitError::SingularJacobian { param: 2 | 3 }) => run(&flat(&start), true)?,
            Err(e) => return Err(e),
        }
    };
    let p = G2Params::from_slice(&fit.params);
    if bin > 0.5 * p.tau_peak_ns {
        return Err(FitError::UnresolvedPeaks {
            bin_ns: bin,
            tau_peak_ns: p.tau_peak_ns,
        });
    }
    let b = fit.estimate(2).clipped(0.0, f64::INFINITY);
    let inv = 1.0 / ((1.0 + p.bunching) * (1.0 + p.bunching));
    let k_min = long_delay_start(p.bunching, p.tau_blink_ns, t);
    let window = (3.0 * p.tau_peak_ns).min(0.45 * t);
    Ok(G2Fit {
        g2_zero: fit.estimate(4).clipped(0.0, f64::INFINITY),
        g2_zero_area: g2_area_method(hist, window, k_min).ok(),
        bunching: b,
        blinking_amplitude: b.mapped(|x| x / (1.0 + x), inv),
        preparation_efficiency: b.mapped(|x| 1.0 / (1.0 + x), -inv),
        peak_height: fit.estimate(0),
        tau_peak_ns: fit.estimate(1),
        tau_blink_ns: fit.estimate(3),
        background: fit.estimate(5).clipped(0.0, f64::INFINITY),
        long_delay_start: k_min,
        fit,
    })
}
