//! Saturation curve `I_max·(1 − exp(−P/P_sat))` and single-exponential decay
//! on a flat background, both fitted with Poisson weights.

use alloc::vec::Vec;

use super::{log_space, poisson_fit, scan_linear, Bounds, Estimate, FitError, FitOptions, FitResult, Model, WeightedData};
use crate::math;

/// Parameters `[I_max, P_sat]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaturationModel;

impl Model for SaturationModel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, p: f64, q: &[f64], grad: &mut [f64]) -> f64 {
        let e = math::exp(-p / q[1]);
        grad[0] = 1.0 - e;
        grad[1] = -q[0] * e * p / (q[1] * q[1]);
        q[0] * (1.0 - e)
    }
}

/// Parameters `[A, rate, B]` for `A·exp(−rate·t) + B`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecayModel;

impl Model for DecayModel {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, t: f64, q: &[f64], grad: &mut [f64]) -> f64 {
        let e = math::exp(-q[1] * t);
        grad[0] = e;
        grad[1] = -q[0] * t * e;
        grad[2] = 1.0;
        q[0] * e + q[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationFit {
    pub i_max: Estimate,
    pub p_sat: Estimate,
    pub fit: FitResult,
}

impl SaturationFit {
    /// `1 − exp(−P/P_sat)`.
    pub fn saturation_level(&self, power: f64) -> f64 {
        1.0 - math::exp(-power / self.p_sat.value)
    }

    /// Power at which the level reaches `level` ∈ (0, 1).
    pub fn power_for_level(&self, level: f64) -> Option<f64> {
        (level > 0.0 && level < 1.0).then(|| -self.p_sat.value * math::ln(1.0 - level))
    }
}

fn split(points: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::BadData("non-finite value"));
    }
    Ok(points.iter().copied().unzip())
}

pub fn fit_saturation(points: &[(f64, f64)]) -> Result<SaturationFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let (p, i) = split(points)?;
    if p.iter().any(|&v| v < 0.0) {
        return Err(FitError::BadData("negative power"));
    }
    let (lo, hi) = p.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi {
        return Err(FitError::AllPowersEqual);
    }
    let data = WeightedData::poisson(p, i)?;
    let step = (hi - lo) / (data.len() - 1) as f64;
    let (ps0, [i0]) = scan_linear(&data, log_space(0.1 * step.min(hi), 10.0 * hi, 60), |x, ps| [1.0 - math::exp(-x / ps)])
        .ok_or(FitError::BadData("no usable starting point"))?;
    let bounds = Bounds::new([0.0, 1e-12 * hi].into(), [f64::INFINITY, f64::INFINITY].into())?;
    let fit = poisson_fit(&SaturationModel, &data.x, &data.y, &[i0.max(0.0), ps0], &bounds, &FitOptions::default())?;
    Ok(SaturationFit {
        i_max: fit.estimate(0),
        p_sat: fit.estimate(1),
        fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub amplitude: Estimate,
    pub rate_per_ns: Estimate,
    pub background: Estimate,
    pub fit: FitResult,
}

impl DecayFit {
    pub fn lifetime_ns(&self) -> f64 {
        1.0 / self.rate_per_ns.value
    }
}

pub fn fit_decay(trace: &[(f64, f64)]) -> Result<DecayFit, FitError> {
    if trace.len() < 10 {
        return Err(FitError::TooFewPoints {
            needed: 10,
            got: trace.len(),
        });
    }
    let (t, y) = split(trace)?;
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::BadData("times must be strictly increasing"));
    }
    let q = y.len() / 4;
    let head: f64 = y[..q].iter().sum::<f64>() / q as f64;
    let tail: f64 = y[y.len() - q..].iter().sum::<f64>() / q as f64;
    if !(head > tail) {
        return Err(FitError::NonDecaying);
    }
    let span = t[t.len() - 1] - t[0];
    let t0 = t[0];
    let data = WeightedData::poisson(t, y)?;
    let (rate0, [a0, b0]) = scan_linear(&data, log_space(0.1 / span, 100.0 / span, 80), |x, r| {
        [math::exp(-r * (x - t0)), 1.0]
    })
    .ok_or(FitError::BadData("no usable starting point"))?;
    if !(a0 > 0.0) {
        return Err(FitError::NonDecaying);
    }
    let bounds = Bounds::new(
        [0.0, 1e-9 / span, f64::NEG_INFINITY].into(),
        [f64::INFINITY, f64::INFINITY, f64::INFINITY].into(),
    )?;
    let start = [a0 * math::exp(rate0 * t0), rate0, b0];
    let fit = poisson_fit(&DecayModel, &data.x, &data.y, &start, &bounds, &FitOptions::default())?;
    let rate = fit.params[1];
    if !(fit.params[0] > 0.0) {
        return Err(FitError::NonDecaying);
    }
    if span * rate < 2.0 {
        return Err(FitError::ShortTrace(span * rate));
    }
    Ok(DecayFit {
        amplitude: fit.estimate(0),
        rate_per_ns: fit.estimate(1),
        background: fit.estimate(2),
        fit,
    })
}
