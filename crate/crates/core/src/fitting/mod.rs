//! Weighted nonlinear least squares (Levenberg–Marquardt with box bounds) and
//! the photon-statistics models fitted with it.
//!
//! Residuals are `√w·(y − f(x; p))`; the built-in fits use Poisson weights
//! from the model (see [`poisson_fit`]). The covariance is `s²·(JᵀWJ)⁻¹` with
//! `s²` the weighted residual variance, and 95 % intervals use Student's t on
//! `n − n_free` degrees of freedom.

mod curves;
mod g2;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::math;

pub use curves::{fit_decay, fit_saturation, DecayFit, DecayModel, SaturationFit, SaturationModel};
pub use g2::{
    fit_g2, g2_area_method, long_delay_start, model_g2, G2Fit, G2Histogram, G2Model, G2Params, MIN_LONG_DELAY_PEAKS,
};

pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("invalid data: {0}")]
    BadData(&'static str),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid bounds: {0}")]
    BadBounds(&'static str),
    #[error("initial value of parameter {param} is outside its bounds")]
    InitialOutOfBounds { param: usize },
    #[error("cost increases even at maximum damping")]
    Divergence,
    #[error("Jacobian is singular in parameter {param}")]
    SingularJacobian { param: usize },
    #[error("no convergence within {0} iterations")]
    IterationCap(usize),
    #[error("invalid histogram: {0}")]
    BadHistogram(&'static str),
    #[error("histogram shows no peak structure")]
    NoPeakStructure,
    #[error("bin width {bin_ns} ns is coarser than half the peak decay time {tau_peak_ns} ns")]
    UnresolvedPeaks { bin_ns: f64, tau_peak_ns: f64 },
    #[error("{available} long-delay peaks inside the histogram, need {needed}")]
    InsufficientLongDelay { available: usize, needed: usize },
    #[error("integration half-window {0} ns must be positive and below half the repetition period")]
    BadWindow(f64),
    #[error("invalid model parameters: {0}")]
    BadParams(&'static str),
    #[error("all excitation powers are equal")]
    AllPowersEqual,
    #[error("trace does not decay")]
    NonDecaying,
    #[error("trace spans {0:.2} decay times, need at least 2")]
    ShortTrace(f64),
}

/// A model `f(x; p)` with its parameter gradient.
pub trait Model {
    fn n_params(&self) -> usize;
    /// Returns `f(x; p)` and writes `∂f/∂p` into `grad`.
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl WeightedData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, w: Vec<f64>) -> Result<Self, FitError> {
        if x.len() != y.len() || x.len() != w.len() {
            return Err(FitError::BadData("x, y and weights differ in length"));
        }
        if x.iter().chain(&y).chain(&w).any(|v| !v.is_finite()) {
            return Err(FitError::BadData("non-finite value"));
        }
        if w.iter().any(|&v| v < 0.0) {
            return Err(FitError::BadData("negative weight"));
        }
        Ok(WeightedData { x, y, w })
    }

    pub fn unweighted(x: Vec<f64>, y: Vec<f64>) -> Result<Self, FitError> {
        let w = vec![1.0; y.len()];
        WeightedData::new(x, y, w)
    }

    /// Weights `1/max(y, 1)` for count data.
    pub fn poisson(x: Vec<f64>, y: Vec<f64>) -> Result<Self, FitError> {
        let w = y.iter().map(|&v| 1.0 / v.max(1.0)).collect();
        WeightedData::new(x, y, w)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, FitError> {
        if lower.len() != upper.len() {
            return Err(FitError::BadBounds("lower and upper differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(FitError::BadBounds("need lower <= upper"));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    /// Converged when every free gradient component, as the cosine between the
    /// residual and the Jacobian column, is below this.
    pub grad_tol: f64,
    /// Parameters held at their initial value; empty means none.
    pub fixed: Vec<bool>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: MAX_ITERATIONS,
            cost_tol: 1e-10,
            grad_tol: 1e-8,
            fixed: Vec::new(),
        }
    }
}

/// Point estimate with its standard error and 95 % interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
    pub ci95: (f64, f64),
}

impl Estimate {
    pub fn new(value: f64, sigma: f64, t: f64) -> Self {
        Estimate {
            value,
            sigma,
            ci95: (value - t * sigma, value + t * sigma),
        }
    }

    /// Same estimate with the interval clipped to `[lo, hi]`.
    pub fn clipped(self, lo: f64, hi: f64) -> Self {
        Estimate {
            ci95: (self.ci95.0.clamp(lo, hi), self.ci95.1.clamp(lo, hi)),
            ..self
        }
    }

    /// Image under a monotone map `f` with derivative `df` at the estimate.
    pub fn mapped(self, f: impl Fn(f64) -> f64, df: f64) -> Self {
        let (a, b) = (f(self.ci95.0), f(self.ci95.1));
        Estimate {
            value: f(self.value),
            sigma: (df * self.sigma).abs(),
            ci95: (a.min(b), a.max(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Zero rows and columns for fixed parameters.
    pub covariance: DMatrix<f64>,
    /// `‖√w·(y − f)‖`.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub dof: usize,
    pub fixed: Vec<bool>,
}

impl FitResult {
    pub fn sigma(&self, j: usize) -> f64 {
        math::sqrt(self.covariance[(j, j)].max(0.0))
    }

    pub fn estimate(&self, j: usize) -> Estimate {
        Estimate::new(self.params[j], self.sigma(j), student_t_975(self.dof))
    }
}

/// Two-sided 95 % quantile of Student's t distribution.
pub fn student_t_975(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [
        12.706_204_736, 4.302_652_730, 3.182_446_305, 2.776_445_105, 2.570_581_836, 2.446_911_851, 2.364_624_252,
        2.306_004_135, 2.262_157_163, 2.228_138_852,
    ];
    match dof {
        0 => f64::INFINITY,
        1..=10 => TABLE[dof - 1],
        _ => {
            // Cornish–Fisher expansion about the normal quantile
            let z = 1.959_963_984_540_054;
            let n = dof as f64;
            let z2 = z * z;
            z + z * (z2 + 1.0) / (4.0 * n)
                + z * ((5.0 * z2 + 16.0) * z2 + 3.0) / (96.0 * n * n)
                + z * (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) / (384.0 * n * n * n)
                + z * ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) / (92_160.0 * n * n * n * n)
        }
    }
}

struct Linearised {
    r: DVector<f64>,
    j: DMatrix<f64>,
    cost: f64,
}

fn linearise(model: &dyn Model, data: &WeightedData, p: &[f64]) -> Linearised {
    let n = data.len();
    let np = p.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, np);
    let mut g = vec![0.0; np];
    for i in 0..n {
        let s = math::sqrt(data.w[i]);
        let f = model.eval(data.x[i], p, &mut g);
        r[i] = s * (data.y[i] - f);
        for k in 0..np {
            j[(i, k)] = s * g[k];
        }
    }
    let cost = 0.5 * r.norm_squared();
    Linearised { r, j, cost }
}

fn cost_at(model: &dyn Model, data: &WeightedData, p: &[f64]) -> f64 {
    let mut g = vec![0.0; p.len()];
    let mut c = 0.0;
    for i in 0..data.len() {
        let d = data.y[i] - model.eval(data.x[i], p, &mut g);
        c += data.w[i] * d * d;
    }
    0.5 * c
}

/// Cholesky factor of a symmetric matrix scaled to unit diagonal; on failure
/// returns the index of the column that lost rank.
fn scaled_cholesky(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>), usize> {
    let m = a.nrows();
    let d = DVector::from_fn(m, |i, _| {
        let v = a[(i, i)];
        if v > 0.0 {
            1.0 / math::sqrt(v)
        } else {
            0.0
        }
    });
    if let Some(i) = d.iter().position(|&v| v == 0.0) {
        return Err(i);
    }
    let mut l = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        let mut s = a[(k, k)] * d[k] * d[k];
        for q in 0..k {
            s -= l[(k, q)] * l[(k, q)];
        }
        if s <= 1e-12 {
            return Err(k);
        }
        let lkk = math::sqrt(s);
        l[(k, k)] = lkk;
        for i in k + 1..m {
            let mut t = a[(i, k)] * d[i] * d[k];
            for q in 0..k {
                t -= l[(i, q)] * l[(k, q)];
            }
            l[(i, k)] = t / lkk;
        }
    }
    Ok((l, d))
}

/// At a bound with the gradient pointing outwards.
fn pinned(p: &[f64], g: &DVector<f64>, k: usize, bounds: &Bounds) -> bool {
    (p[k] <= bounds.lower[k] && g[k] < 0.0) || (p[k] >= bounds.upper[k] && g[k] > 0.0)
}

/// Exact fit, or every free gradient component below `grad_tol` as a cosine.
fn stationary(lin: &Linearised, p: &[f64], free: &[usize], bounds: &Bounds, scale: f64, opts: &FitOptions) -> bool {
    if lin.cost <= 1e-28 * scale {
        return true;
    }
    let g = lin.j.transpose() * &lin.r;
    let rnorm = math::sqrt(2.0 * lin.cost);
    free.iter().filter(|&&k| !pinned(p, &g, k, bounds)).all(|&k| {
        let c = lin.j.column(k).norm();
        c == 0.0 || g[k].abs() <= opts.grad_tol * c * rnorm
    })
}

/// Damped Gauss–Newton with box bounds. Parameters pinned at a bound with the
/// gradient pointing outwards are left out of that iteration's step.
pub fn nlls_fit(
    model: &dyn Model,
    data: &WeightedData,
    initial: &[f64],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let np = model.n_params();
    if initial.len() != np || bounds.lower.len() != np {
        return Err(FitError::BadParams("parameter count does not match the model"));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(FitError::BadParams("non-finite initial value"));
    }
    if let Some(k) = (0..np).find(|&k| initial[k] < bounds.lower[k] || initial[k] > bounds.upper[k]) {
        return Err(FitError::InitialOutOfBounds { param: k });
    }
    let fixed: Vec<bool> = if opts.fixed.is_empty() { vec![false; np] } else { opts.fixed.clone() };
    if fixed.len() != np {
        return Err(FitError::BadParams("fixed mask does not match the model"));
    }
    let free: Vec<usize> = (0..np).filter(|&k| !fixed[k]).collect();
    if data.len() <= free.len() {
        return Err(FitError::TooFewPoints {
            needed: free.len() + 1,
            got: data.len(),
        });
    }
    let scale = 0.5 * data.y.iter().zip(&data.w).map(|(y, w)| w * y * y).sum::<f64>();

    let mut p = initial.to_vec();
    let mut lin = linearise(model, data, &p);
    if let Some(&k) = free.iter().find(|&&k| lin.j.column(k).iter().all(|&v| v == 0.0)) {
        return Err(FitError::SingularJacobian { param: k });
    }
    let mut lambda = 1e-4;
    let mut iterations = 0;
    let mut converged = stationary(&lin, &p, &free, bounds, scale, opts);
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let g = lin.j.transpose() * &lin.r;
        let moving: Vec<usize> = free.iter().copied().filter(|&k| !pinned(&p, &g, k, bounds)).collect();
        let m = moving.len();
        let jm = DMatrix::from_fn(data.len(), m, |i, q| lin.j[(i, moving[q])]);
        let jtj = jm.transpose() * &jm;
        let gm = DVector::from_fn(m, |q, _| g[moving[q]]);
        loop {
            let mut a = jtj.clone();
            for q in 0..m {
                a[(q, q)] += lambda * jtj[(q, q)].max(f64::MIN_POSITIVE);
            }
            let step = a.cholesky().map(|c| c.solve(&gm));
            let mut trial = p.clone();
            let mut new_cost = f64::INFINITY;
            if let Some(step) = step {
                for (q, &k) in moving.iter().enumerate() {
                    trial[k] = (p[k] + step[q]).clamp(bounds.lower[k], bounds.upper[k]);
                }
                new_cost = cost_at(model, data, &trial);
            }
            if new_cost < lin.cost {
                let rel = (lin.cost - new_cost) / lin.cost;
                p = trial;
                lin = linearise(model, data, &p);
                lambda = (lambda * 0.1).max(1e-12);
                converged = rel < opts.cost_tol || stationary(&lin, &p, &free, bounds, scale, opts);
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                if (new_cost - lin.cost).abs() <= opts.cost_tol * lin.cost {
                    // no representable improvement left
                    converged = true;
                    break;
                }
                return Err(FitError::Divergence);
            }
        }
    }
    if !converged {
        return Err(FitError::IterationCap(opts.max_iterations));
    }

    let nf = free.len();
    let jf = DMatrix::from_fn(data.len(), nf, |i, q| lin.j[(i, free[q])]);
    let (l, d) = scaled_cholesky(&(jf.transpose() * &jf)).map_err(|q| FitError::SingularJacobian { param: free[q] })?;
    let linv = l.solve_lower_triangular(&DMatrix::identity(nf, nf)).ok_or(FitError::SingularJacobian { param: free[0] })?;
    let dof = data.len() - nf;
    let s2 = 2.0 * lin.cost / dof as f64;
    let inv = linv.transpose() * linv;
    let mut covariance = DMatrix::zeros(np, np);
    for a in 0..nf {
        for b in 0..nf {
            covariance[(free[a], free[b])] = s2 * d[a] * d[b] * inv[(a, b)];
        }
    }
    Ok(FitResult {
        params: p,
        covariance,
        residual_norm: math::sqrt(2.0 * lin.cost),
        converged,
        iterations,
        dof,
        fixed,
    })
}

/// Count-data fit with weights `1/max(μ, 1)` taken from the model `μ` at the
/// current estimate, refreshed until they settle (starting from the observed
/// counts). The fixed point solves the Poisson likelihood equations, which
/// avoids the downward bias of weighting by the observed counts.
pub fn poisson_fit(
    model: &dyn Model,
    x: &[f64],
    y: &[f64],
    initial: &[f64],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let mut data = WeightedData::poisson(x.to_vec(), y.to_vec())?;
    let mut fit = nlls_fit(model, &data, initial, bounds, opts)?;
    let mut g = vec![0.0; model.n_params()];
    for _ in 0..20 {
        let w: Vec<f64> = x.iter().map(|&v| 1.0 / model.eval(v, &fit.params, &mut g).max(1.0)).collect();
        let change = w.iter().zip(&data.w).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        data.w = w;
        let iterations = fit.iterations;
        fit = nlls_fit(model, &data, &fit.params, bounds, opts)?;
        fit.iterations += iterations;
        if change < 1e-6 {
            break;
        }
    }
    Ok(fit)
}

/// Value of `ψ` in `candidates` minimising the cost when the remaining model
/// is linear: `y ≈ Σ c_k·φ_k(x; ψ)`. Returns `ψ` and the coefficients.
pub(crate) fn scan_linear<const K: usize>(
    data: &WeightedData,
    candidates: impl Iterator<Item = f64>,
    basis: impl Fn(f64, f64) -> [f64; K],
) -> Option<(f64, [f64; K])> {
    let mut best: Option<(f64, [f64; K], f64)> = None;
    for psi in candidates {
        let mut a = DMatrix::<f64>::zeros(K, K);
        let mut b = DVector::<f64>::zeros(K);
        for i in 0..data.len() {
            let phi = basis(data.x[i], psi);
            for r in 0..K {
                b[r] += data.w[i] * phi[r] * data.y[i];
                for c in 0..K {
                    a[(r, c)] += data.w[i] * phi[r] * phi[c];
                }
            }
        }
        let Some(sol) = a.lu().solve(&b) else { continue };
        let mut coef = [0.0; K];
        coef.copy_from_slice(sol.as_slice());
        let mut cost = 0.0;
        for i in 0..data.len() {
            let phi = basis(data.x[i], psi);
            let f: f64 = phi.iter().zip(&coef).map(|(u, c)| u * c).sum();
            cost += data.w[i] * (data.y[i] - f) * (data.y[i] - f);
        }
        if cost.is_finite() && best.as_ref().map_or(true, |b| cost < b.2) {
            best = Some((psi, coef, cost));
        }
    }
    best.map(|(psi, coef, _)| (psi, coef))
}

/// `n` points spaced evenly in log between `lo` and `hi`.
pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (math::ln(lo), math::ln(hi));
    (0..n).map(move |k| math::exp(a + (b - a) * k as f64 / (n - 1) as f64))
}
