//! Adiabatic taper synthesis and checks, plus forward eigenmode-expansion
//! propagation through a taper.
//!
//! The adiabaticity condition `dn_WG/dy ≪ k0·(n1 − n2)²` is used as an
//! equality at a safety factor α, which gives the shortest taper for that α.
//! Positions are in µm, widths in nm.

mod eme;
mod interp;

use alloc::vec::Vec;

pub use eme::{
    eme_plan, grid_for, propagate_eme, propagate_mode_sets, solve_plan, sweep_wavelength, ContactWindow, EmeOptions,
    EmePlan, EmeReferences, Launch, SectionRecord, TransferRecord, FIBER_MODE_MIN_OVERLAP,
};
pub use interp::MonotoneCubic;

use crate::math;
use crate::geometry::{CouplerGeometry, GridSpec, GuideSelector, MaterialSet};
use crate::modesolver::{sweep_width, DispersionBranch, ModeError, SolverOptions, SweepOptions};

/// Branch gap below which a taper length would diverge.
pub const MIN_BRANCH_GAP: f64 = 1e-4;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_SAMPLES: usize = 401;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaperError {
    #[error("invalid profile: {0}")]
    BadProfile(&'static str),
    #[error("invalid dispersion table: {0}")]
    BadTable(&'static str),
    #[error("alpha = {0} must lie in (0, 1)")]
    BadAlpha(f64),
    #[error("tip width {tip} nm must be below start width {start} nm")]
    BadWidths { start: f64, tip: f64 },
    #[error("dispersion data covers [{lo}, {hi}] nm but {width} nm is needed")]
    CoverageGap { lo: f64, hi: f64, width: f64 },
    #[error("supermode gap {gap:.2e} at {width_nm} nm is below {MIN_BRANCH_GAP:e}")]
    GapTooSmall { width_nm: f64, gap: f64 },
    #[error("bare-waveguide index is not increasing with width near {width_nm} nm")]
    NonMonotoneIndex { width_nm: f64 },
    #[error("need at least {needed}, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("no final mode has bare-fiber overlap above 0.5 (best {best:.3})")]
    FiberModeNotFound { best: f64 },
    #[error("wavelength grid must be strictly monotone")]
    NonMonotoneWavelengths,
    #[error("at {wavelength_nm} nm: {source}")]
    AtWavelength {
        wavelength_nm: f64,
        #[source]
        source: alloc::boxed::Box<TaperError>,
    },
    #[error("{0}")]
    Mode(#[from] ModeError),
    #[error("{0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Runs the bare-waveguide and coupled sweeps over `widths_nm` and tabulates
/// the top bare-waveguide mode with the two supermodes that are highest at the
/// narrowest width, followed through the sweep by overlap tracking.
pub fn tabulate_dispersion(
    widths_nm: &[f64],
    template: &CouplerGeometry,
    materials: &MaterialSet,
    grid: &GridSpec,
) -> Result<DispersionTable, TaperError> {
    let mut widths = widths_nm.to_vec();
    widths.sort_by(f64::total_cmp);
    let opts = |which, n| SweepOptions {
        grid: *grid,
        solver: SolverOptions::for_selector(which, n),
        keep_modes: false,
    };
    let wg = sweep_width(&widths, template, materials, GuideSelector::WaveguideOnly, &opts(GuideSelector::WaveguideOnly, 1))?;
    let coupled = sweep_width(&widths, template, materials, GuideSelector::Coupled, &opts(GuideSelector::Coupled, 4))?;
    let w0 = widths[0];
    let mut start: Vec<&DispersionBranch> = coupled.branches.iter().filter(|b| b.params.first() == Some(&w0)).collect();
    start.sort_by(|a, b| b.n_eff[0].total_cmp(&a.n_eff[0]));
    // Near cutoff the bare-waveguide mode changes shape quickly with width and
    // overlap tracking can split it; there is only one mode per point anyway.
    let mut top = DispersionBranch::default();
    for b in &wg.branches {
        for (k, &w) in b.params.iter().enumerate() {
            if b.mode_index[k] == 0 {
                top.params.push(w);
                top.n_eff.push(b.n_eff[k]);
            }
        }
    }
    match (start.first(), start.get(1)) {
        (Some(first), Some(second)) => DispersionTable::from_branches(&top, first, second),
        _ => Err(TaperError::BadTable("sweep did not return two supermodes and a waveguide mode")),
    }
}

/// Sampled width profile `w(y)`; `y` starts at 0 and is strictly increasing,
/// `w` is non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperProfile {
    pub y_um: Vec<f64>,
    pub w_nm: Vec<f64>,
}

impl TaperProfile {
    pub fn new(y_um: Vec<f64>, w_nm: Vec<f64>) -> Result<Self, TaperError> {
        if y_um.is_empty() || y_um.len() != w_nm.len() {
            return Err(TaperError::BadProfile("y and w must be non-empty and of equal length"));
        }
        if y_um.iter().chain(&w_nm).any(|v| !v.is_finite()) {
            return Err(TaperError::BadProfile("non-finite sample"));
        }
        if y_um[0] != 0.0 {
            return Err(TaperError::BadProfile("y must start at 0"));
        }
        if y_um.windows(2).any(|p| p[1] <= p[0]) {
            return Err(TaperError::BadProfile("y must be strictly increasing"));
        }
        if w_nm.windows(2).any(|p| p[1] > p[0]) {
            return Err(TaperError::BadProfile("w must be non-increasing"));
        }
        if w_nm.iter().any(|&w| w <= 0.0) {
            return Err(TaperError::BadProfile("w must be positive"));
        }
        Ok(TaperProfile { y_um, w_nm })
    }

    /// Straight taper with `n` samples.
    pub fn linear(w_start: f64, w_tip: f64, length_um: f64, n: usize) -> Result<Self, TaperError> {
        if n < 2 || !(length_um > 0.0) {
            return Err(TaperError::BadProfile("linear taper needs n >= 2 and positive length"));
        }
        let y = (0..n).map(|k| length_um * k as f64 / (n - 1) as f64).collect();
        let w = (0..n).map(|k| w_start + (w_tip - w_start) * k as f64 / (n - 1) as f64).collect();
        TaperProfile::new(y, w)
    }

    pub fn length_um(&self) -> f64 {
        self.y_um[self.y_um.len() - 1]
    }

    pub fn w_start(&self) -> f64 {
        self.w_nm[0]
    }

    pub fn w_tip(&self) -> f64 {
        self.w_nm[self.w_nm.len() - 1]
    }

    /// Linear interpolation, clamped to the ends.
    pub fn width_at(&self, y: f64) -> f64 {
        let n = self.y_um.len();
        if n == 1 || y <= 0.0 {
            return self.w_nm[0];
        }
        if y >= self.length_um() {
            return self.w_nm[n - 1];
        }
        let k = self.y_um.partition_point(|&v| v <= y) - 1;
        let t = (y - self.y_um[k]) / (self.y_um[k + 1] - self.y_um[k]);
        self.w_nm[k] + t * (self.w_nm[k + 1] - self.w_nm[k])
    }

    /// The profile cut at `y_max`, ending on an interpolated sample.
    pub fn truncated(&self, y_max: f64) -> TaperProfile {
        let mut y: Vec<f64> = self.y_um.iter().copied().filter(|&v| v < y_max).collect();
        let mut w: Vec<f64> = self.w_nm[..y.len()].to_vec();
        if y_max > 0.0 && y_max <= self.length_um() {
            y.push(y_max);
            w.push(self.width_at(y_max));
        }
        TaperProfile { y_um: y, w_nm: w }
    }
}

/// Tabulated dispersion for taper design: bare-waveguide index and the two
/// lowest coupled supermodes against width.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    pub widths_nm: Vec<f64>,
    pub n_wg: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
}

impl DispersionTable {
    pub fn new(widths_nm: Vec<f64>, n_wg: Vec<f64>, n1: Vec<f64>, n2: Vec<f64>) -> Result<Self, TaperError> {
        let n = widths_nm.len();
        if n < 2 {
            return Err(TaperError::TooFew { needed: 2, got: n });
        }
        if n_wg.len() != n || n1.len() != n || n2.len() != n {
            return Err(TaperError::BadTable("columns differ in length"));
        }
        if widths_nm.windows(2).any(|p| p[1] <= p[0]) {
            return Err(TaperError::BadTable("widths must be strictly increasing"));
        }
        if widths_nm.iter().chain(&n_wg).chain(&n1).chain(&n2).any(|v| !v.is_finite()) {
            return Err(TaperError::BadTable("non-finite entry"));
        }
        Ok(DispersionTable {
            widths_nm,
            n_wg,
            n1,
            n2,
        })
    }

    /// Joins three tracked branches on the widths they share. Branches may be
    /// sampled in either direction.
    pub fn from_branches(
        wg: &DispersionBranch,
        first: &DispersionBranch,
        second: &DispersionBranch,
    ) -> Result<Self, TaperError> {
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        for (k, &w) in wg.params.iter().enumerate() {
            if let (Some(a), Some(b)) = (first.n_eff_at(w), second.n_eff_at(w)) {
                rows.push((w, wg.n_eff[k], a, b));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        DispersionTable::new(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        )
    }

    fn covers(&self, w: f64) -> Result<(), TaperError> {
        let (lo, hi) = (self.widths_nm[0], self.widths_nm[self.widths_nm.len() - 1]);
        let tol = 1e-9 * hi.abs().max(1.0);
        if w < lo - tol || w > hi + tol {
            return Err(TaperError::CoverageGap { lo, hi, width: w });
        }
        Ok(())
    }

    fn interpolants(&self) -> (MonotoneCubic, MonotoneCubic) {
        let gap: Vec<f64> = self.n1.iter().zip(&self.n2).map(|(a, b)| (a - b).abs()).collect();
        (MonotoneCubic::new(&self.widths_nm, &self.n_wg), MonotoneCubic::new(&self.widths_nm, &gap))
    }

    /// Rejects data that cannot produce a finite, well-defined taper on [lo, hi].
    fn check_range(&self, lo: f64, hi: f64) -> Result<(), TaperError> {
        self.covers(lo)?;
        self.covers(hi)?;
        let w = &self.widths_nm;
        // rows whose interval touches [lo, hi]
        let first = w.partition_point(|&x| x <= lo).saturating_sub(1);
        let last = w.partition_point(|&x| x < hi).min(w.len() - 1);
        for k in first..=last {
            let gap = (self.n1[k] - self.n2[k]).abs();
            if gap < MIN_BRANCH_GAP {
                return Err(TaperError::GapTooSmall { width_nm: w[k], gap });
            }
            if k < last && self.n_wg[k + 1] <= self.n_wg[k] {
                return Err(TaperError::NonMonotoneIndex { width_nm: w[k + 1] });
            }
        }
        Ok(())
    }
}

fn k0_per_um(wavelength_nm: f64) -> f64 {
    math::TWO_PI / (wavelength_nm * 1e-3)
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// Shortest profile from `w_start` down to `w_tip` that keeps
/// `dn_WG/dy = α·k0·(n1 − n2)²` everywhere, sampled at `samples` widths.
pub fn design_taper_sampled(
    table: &DispersionTable,
    w_start: f64,
    w_tip: f64,
    alpha: f64,
    wavelength_nm: f64,
    samples: usize,
) -> Result<TaperProfile, TaperError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TaperError::BadAlpha(alpha));
    }
    if !(w_tip < w_start) {
        return Err(TaperError::BadWidths {
            start: w_start,
            tip: w_tip,
        });
    }
    if samples < 2 {
        return Err(TaperError::TooFew { needed: 2, got: samples });
    }
    table.check_range(w_tip, w_start)?;
    let (n_wg, gap) = table.interpolants();
    let scale = alpha * k0_per_um(wavelength_nm);
    // dy/dw magnitude
    let rate = |w: f64| -> Result<f64, TaperError> {
        let dn = n_wg.derivative(w);
        let g = gap.value(w);
        if g < MIN_BRANCH_GAP {
            return Err(TaperError::GapTooSmall { width_nm: w, gap: g });
        }
        if !(dn > 0.0) {
            return Err(TaperError::NonMonotoneIndex { width_nm: w });
        }
        Ok(dn / (scale * g * g))
    };

    let ws: Vec<f64> = (0..samples)
        .map(|k| w_start + (w_tip - w_start) * k as f64 / (samples - 1) as f64)
        .collect();
    let mut y = Vec::with_capacity(samples);
    y.push(0.0);
    for k in 1..samples {
        let (a, b) = (ws[k], ws[k - 1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, wgt) in GL8 {
            s += wgt * rate(mid + half * x)?;
        }
        y.push(y[k - 1] + s * half);
    }
    rate(w_start)?;
    rate(w_tip)?;
    TaperProfile::new(y, ws)
}

pub fn design_taper(
    table: &DispersionTable,
    w_start: f64,
    w_tip: f64,
    alpha: f64,
    wavelength_nm: f64,
) -> Result<TaperProfile, TaperError> {
    design_taper_sampled(table, w_start, w_tip, alpha, wavelength_nm, DEFAULT_SAMPLES)
}

/// Safety factor whose designed taper has length `length_um`. The length
/// scales exactly as 1/α, so one design at α = 0.5 fixes it.
pub fn alpha_for_length(
    table: &DispersionTable,
    w_start: f64,
    w_tip: f64,
    wavelength_nm: f64,
    length_um: f64,
) -> Result<f64, TaperError> {
    if !(length_um > 0.0) {
        return Err(TaperError::BadProfile("target length must be positive"));
    }
    let reference = design_taper(table, w_start, w_tip, 0.5, wavelength_nm)?;
    let alpha = 0.5 * reference.length_um() / length_um;
    if !(alpha < 1.0) {
        return Err(TaperError::BadAlpha(alpha));
    }
    Ok(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticityReport {
    pub y_um: Vec<f64>,
    pub w_nm: Vec<f64>,
    /// `|dn_WG/dy| / (k0·(n1 − n2)²)` at each profile sample.
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
    pub y_at_max_um: f64,
    pub w_at_max_nm: f64,
}

impl AdiabaticityReport {
    pub fn is_adiabatic(&self, alpha: f64) -> bool {
        self.max_ratio <= alpha
    }
}

/// Derivative of samples `f(x)` by three-point differences, second order on
/// non-uniform grids.
fn derivative_samples(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        let d = (f[1] - f[0]) / (x[1] - x[0]);
        return alloc::vec![d, d];
    }
    let three = |i0: usize, at: usize| {
        let (x0, x1, x2) = (x[i0], x[i0 + 1], x[i0 + 2]);
        let (f0, f1, f2) = (f[i0], f[i0 + 1], f[i0 + 2]);
        let t = x[at];
        // derivative of the interpolating quadratic
        f0 * (2.0 * t - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + f1 * (2.0 * t - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + f2 * (2.0 * t - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..n)
        .map(|k| {
            if k == 0 {
                three(0, 0)
            } else if k == n - 1 {
                three(n - 3, n - 1)
            } else {
                three(k - 1, k)
            }
        })
        .collect()
}

pub fn adiabaticity_margin(
    profile: &TaperProfile,
    table: &DispersionTable,
    wavelength_nm: f64,
) -> Result<AdiabaticityReport, TaperError> {
    if profile.y_um.len() < 2 {
        return Err(TaperError::BadProfile("adiabaticity needs a profile of non-zero length"));
    }
    for &w in &profile.w_nm {
        table.covers(w)?;
    }
    let (n_wg, gap) = table.interpolants();
    let k0 = k0_per_um(wavelength_nm);
    let dwdy = derivative_samples(&profile.y_um, &profile.w_nm);
    let mut ratio = Vec::with_capacity(dwdy.len());
    for (k, &w) in profile.w_nm.iter().enumerate() {
        let g = gap.value(w);
        if g < MIN_BRANCH_GAP {
            return Err(TaperError::GapTooSmall { width_nm: w, gap: g });
        }
        ratio.push((n_wg.derivative(w) * dwdy[k]).abs() / (k0 * g * g));
    }
    let (kmax, &max_ratio) = ratio
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    Ok(AdiabaticityReport {
        y_um: profile.y_um.clone(),
        w_nm: profile.w_nm.clone(),
        max_ratio,
        y_at_max_um: profile.y_um[kmax],
        w_at_max_nm: profile.w_nm[kmax],
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_table(a: f64, gap: f64) -> DispersionTable {
        let w: Vec<f64> = (0..13).map(|k| 50.0 + 25.0 * k as f64).collect();
        let n: Vec<f64> = w.iter().map(|x| a * x).collect();
        let n1 = alloc::vec![1.5; w.len()];
        let n2 = alloc::vec![1.5 - gap; w.len()];
        DispersionTable::new(w, n, n1, n2).unwrap()
    }

    #[test]
    fn linear_dispersion_gives_closed_form_length() {
        let (a, gap, alpha, lam) = (0.004, 0.05, 0.1, 940.0);
        let p = design_taper(&linear_table(a, gap), 300.0, 140.0, alpha, lam).unwrap();
        let expect = a * 160.0 / (alpha * k0_per_um(lam) * gap * gap);
        assert!((p.length_um() - expect).abs() < 1e-9 * expect);
        // linear in y
        for (y, w) in p.y_um.iter().zip(&p.w_nm) {
            assert!((300.0 - 160.0 * y / expect - w).abs() < 1e-6);
        }
        assert_eq!(p.w_start(), 300.0);
        assert!((p.w_tip() - 140.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_alpha_halves_length() {
        let mut t = linear_table(0.004, 0.05);
        t.n_wg = t.widths_nm.iter().map(|w| 1.0 + 1e-5 * w * w).collect();
        t.n2 = t.widths_nm.iter().map(|w| 1.4 - 0.05 * ((w - 160.0) / 100.0).powi(2)).collect();
        let l1 = design_taper(&t, 300.0, 140.0, 0.1, 940.0).unwrap().length_um();
        let l2 = design_taper(&t, 300.0, 140.0, 0.2, 940.0).unwrap().length_um();
        assert!((l1 / l2 - 2.0).abs() < 1e-12);
        let alpha = alpha_for_length(&t, 300.0, 140.0, 940.0, 30.0).unwrap();
        let l = design_taper(&t, 300.0, 140.0, alpha, 940.0).unwrap().length_um();
        assert!((l - 30.0).abs() < 1e-9);
    }

    #[test]
    fn design_round_trips_through_margin() {
        let mut t = linear_table(0.004, 0.05);
        t.n_wg = t.widths_nm.iter().map(|w| 0.9 + 1.8 / (1.0 + libm::exp(-(w - 170.0) / 45.0))).collect();
        t.n2 = t.widths_nm.iter().map(|w| 1.5 - libm::sqrt(((w - 160.0) / 120.0).powi(2) + 0.01)).collect();
        let p = design_taper(&t, 300.0, 140.0, 0.1, 940.0).unwrap();
        let r = adiabaticity_margin(&p, &t, 940.0).unwrap();
        assert!((r.max_ratio - 0.1).abs() < 0.002, "{}", r.max_ratio);
        assert!(r.ratio.iter().all(|&v| v >= 0.0));
        assert!(r.is_adiabatic(0.1 + 0.002));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let t = linear_table(0.004, 0.05);
        assert!(matches!(design_taper(&t, 300.0, 140.0, 1.0, 940.0), Err(TaperError::BadAlpha(_))));
        assert!(matches!(design_taper(&t, 140.0, 300.0, 0.1, 940.0), Err(TaperError::BadWidths { .. })));
        assert!(matches!(design_taper(&t, 400.0, 140.0, 0.1, 940.0), Err(TaperError::CoverageGap { .. })));
        let tiny = linear_table(0.004, 5e-5);
        assert!(matches!(design_taper(&tiny, 300.0, 140.0, 0.1, 940.0), Err(TaperError::GapTooSmall { .. })));
        let mut flat = linear_table(0.004, 0.05);
        flat.n_wg[6] = flat.n_wg[5];
        assert!(matches!(design_taper(&flat, 300.0, 140.0, 0.1, 940.0), Err(TaperError::NonMonotoneIndex { .. })));
        let point = TaperProfile::new(alloc::vec![0.0], alloc::vec![300.0]).unwrap();
        assert!(matches!(adiabaticity_margin(&point, &t, 940.0), Err(TaperError::BadProfile(_))));
    }

    #[test]
    fn profile_validation_and_truncation() {
        assert!(TaperProfile::new(alloc::vec![0.0, 1.0], alloc::vec![100.0, 120.0]).is_err());
        assert!(TaperProfile::new(alloc::vec![0.0, 0.0], alloc::vec![100.0, 90.0]).is_err());
        let p = TaperProfile::linear(300.0, 140.0, 30.0, 31).unwrap();
        assert!((p.width_at(15.0) - 220.0).abs() < 1e-9);
        let t = p.truncated(10.5);
        assert_eq!(t.length_um(), 10.5);
        assert!((t.w_tip() - p.width_at(10.5)).abs() < 1e-12);
    }
}
