//! Guided modes of a [`CrossSection`].
//!
//! The eigenproblem is the full-vector finite-difference formulation in the
//! transverse magnetic field (see [`operator`](self) internals), solved by
//! shift-invert Arnoldi around `n_eff_guess²` with a nested-dissection
//! multifrontal LU as the inner solver.
//!
//! With [`ModeParity::TeLike`] and a mirror-symmetric cross-section only the
//! right half is solved, with an electric wall on the symmetry line. That
//! keeps exactly the modes whose Ex is even in x and halves the unknowns.
//! Fields are always returned on the full grid.

mod branches;
mod operator;

use alloc::vec;
use alloc::vec::Vec;

use crate::eigen::{self, ArnoldiOptions, EigenError};
use crate::geometry::{CrossSection, GuideSelector};
use crate::math;
use crate::sparse::{dot, norm2, FactorError, SparseLu};

pub use branches::{
    find_anticrossings, solve_at_width, sweep_width, sweep_width_partial, track_branches, BranchTracker, DispersionBranch, SweepOptions,
    SweepResult, TrackedPoint, AMBIGUITY_WINDOW, CONTINUITY_MIN,
};
use operator::Operator;

/// Largest accepted relative eigen-residual `‖A v − λ v‖ / ‖λ v‖`.
pub const RESIDUAL_LIMIT: f64 = 1e-8;
/// Boundary field magnitude, relative to the peak, above which a mode is
/// flagged as not converged with respect to the domain size.
pub const DOMAIN_DECAY_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModeError {
    #[error("n_modes must be at least 1")]
    NoModesRequested,
    #[error("n_eff_guess {guess} is outside ({lo}, {hi}]")]
    GuessOutOfRange { guess: f64, lo: f64, hi: f64 },
    #[error("grid too small for the solver ({nx}x{ny} cells)")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("no guided mode found above n = {cutoff}")]
    NoGuidedMode { cutoff: f64 },
    #[error("eigensolver did not converge (relative residual {residual:.3e})")]
    NotConverged { residual: f64 },
    #[error("eigensolver failure: {0}")]
    Eigen(#[from] EigenError),
    #[error("factorisation failure: {0}")]
    Factor(#[from] FactorError),
    #[error("modes live on different grids or wavelengths")]
    GridMismatch,
    #[error("mode has zero power")]
    ZeroField,
    #[error("at width {width_nm} nm: {source}")]
    AtWidth {
        width_nm: f64,
        #[source]
        source: alloc::boxed::Box<ModeError>,
    },
    #[error("need at least 2 sweep points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep parameter {param} breaks strict monotonicity")]
    NonMonotoneSweep { param: f64 },
    #[error("{0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeParity {
    /// Every mode of the cross-section.
    Full,
    /// Modes with Ex even about the vertical symmetry line.
    #[default]
    TeLike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub n_modes: usize,
    pub n_eff_guess: f64,
    pub parity: ModeParity,
}

impl SolverOptions {
    /// Defaults per selector: 3.0 for the bare waveguide, 1.3 for the bare
    /// fiber and 2.0 for the coupled system.
    pub fn for_selector(which: GuideSelector, n_modes: usize) -> Self {
        let n_eff_guess = match which {
            GuideSelector::WaveguideOnly => 3.0,
            GuideSelector::FiberOnly => 1.3,
            GuideSelector::Coupled => 2.0,
        };
        SolverOptions {
            n_modes,
            n_eff_guess,
            parity: ModeParity::default(),
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions::for_selector(GuideSelector::Coupled, 4)
    }
}

/// Full-grid layout shared by all modes of one cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl ModeGrid {
    /// Length of the Hx / Ey arrays.
    pub fn len_y_points(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    /// Length of the Hy / Ex arrays.
    pub fn len_x_points(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    /// Physical position (nm) of the Hx / Ey sample `k`.
    pub fn y_point(&self, k: usize) -> (f64, f64) {
        let i = k / self.ny + 1;
        let j = k % self.ny;
        ((i as f64 - 0.5 * self.nx as f64) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    /// Physical position (nm) of the Hy / Ex sample `k`.
    pub fn x_point(&self, k: usize) -> (f64, f64) {
        let i = k / (self.ny - 1);
        let j = k % (self.ny - 1) + 1;
        ((i as f64 + 0.5 - 0.5 * self.nx as f64) * self.dx, j as f64 * self.dy)
    }
}

/// One guided mode. `hx`, `ey` live on the Y points and `hy`, `ex` on the X
/// points of [`ModeGrid`], all x-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedMode {
    pub n_eff: f64,
    pub wavelength_nm: f64,
    pub grid: ModeGrid,
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub te_fraction: f64,
    pub residual: f64,
    pub domain_converged: bool,
}

impl GuidedMode {
    /// Discrete power flux ∑(Ex·Hy − Ey·Hx)·dx·dy, in the solver's units.
    pub fn power(&self) -> f64 {
        cross(self, self)
    }

    /// The dominant transverse electric component.
    pub fn e_major(&self) -> &[f64] {
        if self.te_fraction >= 0.5 {
            &self.ex
        } else {
            &self.ey
        }
    }

    /// Fraction of |E|² carried in cells where `mask(x_nm, y_nm)` holds.
    pub fn e_fraction_where(&self, mask: impl Fn(f64, f64) -> bool) -> f64 {
        let g = &self.grid;
        let mut inside = 0.0;
        let mut total = 0.0;
        for (k, v) in self.ex.iter().enumerate() {
            let (x, y) = g.x_point(k);
            total += v * v;
            if mask(x, y) {
                inside += v * v;
            }
        }
        for (k, v) in self.ey.iter().enumerate() {
            let (x, y) = g.y_point(k);
            total += v * v;
            if mask(x, y) {
                inside += v * v;
            }
        }
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }
}

/// ⟨a, b⟩ = ∑ (Ex_a·Hy_b − Ey_a·Hx_b)·dx·dy.
fn cross(a: &GuidedMode, b: &GuidedMode) -> f64 {
    (dot(&a.ex, &b.hy) - dot(&a.ey, &b.hx)) * a.grid.dx * a.grid.dy
}

/// Scales the mode to unit power and fixes its sign so that the largest
/// magnetic-field sample is positive.
pub fn normalize(mode: &GuidedMode) -> Result<GuidedMode, ModeError> {
    let p = mode.power();
    if !(p.abs() > 0.0) || !p.is_finite() {
        return Err(ModeError::ZeroField);
    }
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for v in mode.hx.iter().chain(mode.hy.iter()) {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    let s = sign / math::sqrt(p.abs());
    let scale = |v: &Vec<f64>| v.iter().map(|x| x * s).collect::<Vec<f64>>();
    Ok(GuidedMode {
        hx: scale(&mode.hx),
        hy: scale(&mode.hy),
        ex: scale(&mode.ex),
        ey: scale(&mode.ey),
        ..mode.clone()
    })
}

/// Power-coupling coefficient `|⟨a,b⟩⟨b,a⟩| / (⟨a,a⟩⟨b,b⟩)`, clamped to [0, 1].
pub fn mode_overlap(a: &GuidedMode, b: &GuidedMode) -> Result<f64, ModeError> {
    if a.grid != b.grid || a.wavelength_nm != b.wavelength_nm {
        return Err(ModeError::GridMismatch);
    }
    let aa = cross(a, a);
    let bb = cross(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Err(ModeError::ZeroField);
    }
    let v = (cross(a, b) * cross(b, a) / (aa * bb)).abs();
    Ok(v.min(1.0))
}

/// Unnormalised projection `⟨a, b⟩` used by the mode-matching code.
pub(crate) fn projection(a: &GuidedMode, b: &GuidedMode) -> f64 {
    cross(a, b)
}

struct Problem {
    op: Operator,
    /// Solved on the right half with a mirror expansion afterwards.
    half: bool,
}

fn setup(cs: &CrossSection, parity: ModeParity) -> Result<Problem, ModeError> {
    if cs.nx < 4 || cs.ny < 3 {
        return Err(ModeError::GridTooSmall { nx: cs.nx, ny: cs.ny });
    }
    let half = parity == ModeParity::TeLike && cs.is_mirror_symmetric();
    let k0 = crate::math::TWO_PI / cs.geometry.wavelength_nm;
    let (i0, nxs) = if half { (cs.nx / 2, cs.nx / 2) } else { (0, cs.nx) };
    let mut eps = Vec::with_capacity(nxs * cs.ny);
    for i in i0..i0 + nxs {
        for j in 0..cs.ny {
            eps.push(cs.permittivity_at(i, j));
        }
    }
    let op = Operator::assemble(&eps, nxs, cs.ny, k0 * cs.dx, k0 * cs.dy);
    Ok(Problem { op, half })
}

/// Mirror-expands half-domain samples onto the full grid.
/// Y points are odd (Hx, Ey); X points are even (Hy, Ex).
fn expand(half_y: &[f64], half_x: &[f64], nx: usize, ny: usize, mirror: bool) -> (Vec<f64>, Vec<f64>) {
    if !mirror {
        return (half_y.to_vec(), half_x.to_vec());
    }
    let c = nx / 2;
    let mut full_y = vec![0.0; (nx - 1) * ny];
    for i in 1..nx {
        let v = |ih: usize, j: usize| half_y[(ih - 1) * ny + j];
        for j in 0..ny {
            full_y[(i - 1) * ny + j] = match i.cmp(&c) {
                core::cmp::Ordering::Greater => v(i - c, j),
                core::cmp::Ordering::Less => -v(c - i, j),
                core::cmp::Ordering::Equal => 0.0,
            };
        }
    }
    let mut full_x = vec![0.0; nx * (ny - 1)];
    for i in 0..nx {
        let ih = if i >= c { i - c } else { c - 1 - i };
        full_x[i * (ny - 1)..(i + 1) * (ny - 1)].copy_from_slice(&half_x[ih * (ny - 1)..(ih + 1) * (ny - 1)]);
    }
    (full_y, full_x)
}

fn boundary_ratio(hx: &[f64], hy: &[f64], g: &ModeGrid) -> f64 {
    let peak = hx.iter().chain(hy).fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    let mut edge = 0.0f64;
    for i in 1..g.nx {
        for j in 0..g.ny {
            if i == 1 || i == g.nx - 1 || j == 0 || j == g.ny - 1 {
                edge = edge.max(hx[(i - 1) * g.ny + j].abs());
            }
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            if i == 0 || i == g.nx - 1 || j == 1 || j == g.ny - 1 {
                edge = edge.max(hy[i * (g.ny - 1) + j - 1].abs());
            }
        }
    }
    edge / peak
}

fn rayleigh(op: &Operator, h: &[f64]) -> (f64, f64) {
    let ah = op.a.mul_vec(h);
    let left = op.left_vector(h);
    let lam = dot(&left, &ah) / dot(&left, h);
    let r: Vec<f64> = ah.iter().zip(h).map(|(a, x)| a - lam * x).collect();
    let res = norm2(&r) / (lam.abs() * norm2(h)).max(f64::MIN_POSITIVE);
    (lam, res)
}

/// Solves for up to `opts.n_modes` guided modes, sorted by descending n_eff.
pub fn solve_modes(cs: &CrossSection, opts: &SolverOptions) -> Result<Vec<GuidedMode>, ModeError> {
    if opts.n_modes == 0 {
        return Err(ModeError::NoModesRequested);
    }
    let n_bg = cs.materials.n_background;
    let n_max = cs.max_index();
    let guess = opts.n_eff_guess;
    if !(guess > n_bg && guess <= n_max) {
        return Err(ModeError::GuessOutOfRange {
            guess,
            lo: n_bg,
            hi: n_max,
        });
    }
    let prob = setup(cs, opts.parity)?;
    let op = &prob.op;
    // Without the mirror reduction, TE-like modes are picked out afterwards.
    let filter_te = opts.parity == ModeParity::TeLike && !prob.half;
    let sigma = guess * guess;
    let shifted = op.a.shifted(sigma);
    let lu = SparseLu::factor(&shifted, &op.ordering())?;
    let n = op.dim();
    let wanted = if filter_te { 2 * opts.n_modes + 2 } else { opts.n_modes + 2 };
    let aopts = ArnoldiOptions {
        nev: wanted.min(n),
        krylov_dim: 2 * wanted + 20,
        max_restarts: 40,
        tol: 1e-13,
    };
    let result = eigen::arnoldi(n, &aopts, |x, y| {
        let sol = lu.solve_refined(&shifted, x, 1);
        y.copy_from_slice(&sol);
    })?;

    let grid = ModeGrid {
        nx: cs.nx,
        ny: cs.ny,
        dx: cs.dx,
        dy: cs.dy,
    };
    let mut modes = Vec::new();
    let mut worst = 0.0f64;
    for pair in result.pairs {
        let mut h = pair.vector;
        let (mut lam, mut res) = rayleigh(op, &h);
        let mut steps = 0;
        while res >= 0.1 * RESIDUAL_LIMIT && steps < 4 {
            h = lu.solve_refined(&shifted, &h, 1);
            let s = norm2(&h);
            h.iter_mut().for_each(|v| *v /= s);
            (lam, res) = rayleigh(op, &h);
            steps += 1;
        }
        if !(lam > n_bg * n_bg) {
            continue;
        }
        let n_eff = math::sqrt(lam);
        if n_eff >= n_max {
            continue;
        }
        if res >= RESIDUAL_LIMIT {
            worst = worst.max(res);
            continue;
        }
        let (ex_s, ey_s) = op.e_field(&h, n_eff);
        let (hx, hy) = expand(&h[..op.n_y], &h[op.n_y..], cs.nx, cs.ny, prob.half);
        let (ey, ex) = expand(&ey_s, &ex_s, cs.nx, cs.ny, prob.half);
        let sx: f64 = ex.iter().map(|v| v * v).sum();
        let sy: f64 = ey.iter().map(|v| v * v).sum();
        let te_fraction = if sx + sy > 0.0 { sx / (sx + sy) } else { 0.0 };
        if filter_te && te_fraction < 0.5 {
            continue;
        }
        let domain_converged = boundary_ratio(&hx, &hy, &grid) < DOMAIN_DECAY_LIMIT;
        let mode = GuidedMode {
            n_eff,
            wavelength_nm: cs.geometry.wavelength_nm,
            grid,
            hx,
            hy,
            ex,
            ey,
            te_fraction,
            residual: res,
            domain_converged,
        };
        modes.push(normalize(&mode)?);
    }
    modes.sort_by(|a, b| b.n_eff.total_cmp(&a.n_eff));
    // Ritz values can repeat after restarts; drop numerical duplicates.
    modes.dedup_by(|b, a| (a.n_eff - b.n_eff).abs() < 1e-10 && mode_overlap(a, b).map_or(false, |o| o > 0.99));
    modes.truncate(opts.n_modes);
    if modes.is_empty() {
        if worst > 0.0 {
            return Err(ModeError::NotConverged { residual: worst });
        }
        return Err(ModeError::NoGuidedMode { cutoff: n_bg });
    }
    Ok(modes)
}
