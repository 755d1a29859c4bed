//! Forward eigenmode expansion through a taper.
//!
//! The taper is cut into uniform sections evaluated at their midpoint width.
//! Modal amplitudes pick up `exp(i·k0·n_eff·Δy)` inside a section and cross an
//! interface through the mode-matching transfer `T = 2P(I + PᵀP)⁻¹`, with
//! `P_km = ⟨E_m(left), H_k(right)⟩`. That is the transmitted part of the
//! Galerkin matching of E and H across the interface; the reflected part is
//! solved for and then dropped, so `T` never creates power.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{TaperError, TaperProfile};
use crate::geometry::{build_cross_section, CouplerGeometry, GridSpec, GuideSelector, MaterialSet};
use crate::math;
use crate::modesolver::{mode_overlap, projection, solve_modes, GuidedMode, ModeParity, SolverOptions};

/// Bare-fiber overlap a final mode needs to count as fiber-like.
pub const FIBER_MODE_MIN_OVERLAP: f64 = 0.5;

/// Region of the taper where the fiber touches the waveguide; elsewhere the
/// fiber is lifted to `standoff_nm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactWindow {
    pub y_start_um: f64,
    pub y_end_um: f64,
    pub standoff_nm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmeOptions {
    pub grid: GridSpec,
    pub n_sections: usize,
    pub n_modes: usize,
    pub parity: ModeParity,
    /// Full contact when `None`.
    pub contact: Option<ContactWindow>,
}

impl Default for EmeOptions {
    fn default() -> Self {
        EmeOptions {
            grid: GridSpec::default(),
            n_sections: 60,
            n_modes: 4,
            parity: ModeParity::TeLike,
            contact: None,
        }
    }
}

/// Cross-sections visited by the propagation: the start face, one per
/// section, and the tip face.
#[derive(Debug, Clone, PartialEq)]
pub struct EmePlan {
    pub y_um: Vec<f64>,
    pub widths_nm: Vec<f64>,
    pub gaps_nm: Vec<f64>,
    /// Propagation length inside each cross-section (0 for the faces).
    pub lengths_um: Vec<f64>,
}

impl EmePlan {
    pub fn len(&self) -> usize {
        self.y_um.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_um.is_empty()
    }

    /// Index of the first cross-section with the same width and gap; plan
    /// entries that share an index share one mode solve.
    pub fn distinct(&self) -> Vec<usize> {
        (0..self.len())
            .map(|k| {
                (0..=k)
                    .find(|&j| self.widths_nm[j] == self.widths_nm[k] && self.gaps_nm[j] == self.gaps_nm[k])
                    .unwrap()
            })
            .collect()
    }
}

pub fn eme_plan(profile: &TaperProfile, template: &CouplerGeometry, opts: &EmeOptions) -> Result<EmePlan, TaperError> {
    if opts.n_sections < 1 {
        return Err(TaperError::TooFew {
            needed: 1,
            got: opts.n_sections,
        });
    }
    let gap_at = |y: f64| match opts.contact {
        Some(c) if y < c.y_start_um || y > c.y_end_um => c.standoff_nm,
        _ => template.gap_nm,
    };
    let l = profile.length_um();
    let mut plan = EmePlan {
        y_um: alloc::vec![0.0],
        widths_nm: alloc::vec![profile.w_start()],
        gaps_nm: alloc::vec![gap_at(0.0)],
        lengths_um: alloc::vec![0.0],
    };
    if l == 0.0 {
        return Ok(plan);
    }
    let dy = l / opts.n_sections as f64;
    for k in 0..opts.n_sections {
        let y = (k as f64 + 0.5) * dy;
        plan.y_um.push(y);
        plan.widths_nm.push(profile.width_at(y));
        plan.gaps_nm.push(gap_at(y));
        plan.lengths_um.push(dy);
    }
    plan.y_um.push(l);
    plan.widths_nm.push(profile.w_tip());
    plan.gaps_nm.push(gap_at(l));
    plan.lengths_um.push(0.0);
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Launch {
    /// Unit power in the start mode that best overlaps the bare waveguide mode.
    WaveguideMode,
    /// Given amplitudes on the start cross-section's modes.
    Amplitudes(Vec<Complex64>),
}

/// Isolated-guide modes used to label supermodes.
#[derive(Debug, Clone)]
pub struct EmeReferences {
    pub waveguide: GuidedMode,
    pub fiber: GuidedMode,
}

impl EmeReferences {
    pub fn solve(
        template: &CouplerGeometry,
        materials: &MaterialSet,
        grid: &GridSpec,
        parity: ModeParity,
        w_start: f64,
    ) -> Result<Self, TaperError> {
        let one = |which: GuideSelector| -> Result<GuidedMode, TaperError> {
            let cs = build_cross_section(&template.with_width(w_start), materials, grid, which)?;
            let mut o = SolverOptions::for_selector(which, 1);
            o.parity = parity;
            Ok(solve_modes(&cs, &o)?.remove(0))
        };
        Ok(EmeReferences {
            waveguide: one(GuideSelector::WaveguideOnly)?,
            fiber: one(GuideSelector::FiberOnly)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionRecord {
    pub y_um: f64,
    pub width_nm: f64,
    pub n_eff: Vec<f64>,
    /// Amplitudes at the far end of the cross-section.
    pub amplitudes: Vec<Complex64>,
    pub power: f64,
    /// Power carried by the bare-fiber mode.
    pub fiber_projection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub wavelength_nm: f64,
    pub length_um: f64,
    /// Power in the fiber-like mode of the tip cross-section.
    pub t_fiber: f64,
    /// Power carried by the bare-fiber mode at the tip.
    pub fiber_projection: f64,
    pub fiber_mode: usize,
    pub fiber_mode_overlap: f64,
    pub launch_mode: Option<usize>,
    pub launch_power: f64,
    /// Largest power increase over any interface.
    pub max_power_gain: f64,
    pub sections: Vec<SectionRecord>,
}

fn power(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn fiber_power(modes: &[GuidedMode], a: &[Complex64], fiber: &GuidedMode) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (m, &am) in modes.iter().zip(a) {
        let c = 0.5 * (projection(m, fiber) + projection(fiber, m));
        s += am * c;
    }
    s.norm_sqr()
}

/// Transmission matrix from `left` modes to `right` modes.
fn interface(left: &[GuidedMode], right: &[GuidedMode]) -> DMatrix<f64> {
    let p = DMatrix::from_fn(right.len(), left.len(), |k, m| projection(&left[m], &right[k]));
    let g = DMatrix::identity(left.len(), left.len()) + p.transpose() * &p;
    // g is symmetric positive definite
    let inv = g.cholesky().expect("I + PᵀP is positive definite").inverse();
    (p * inv) * 2.0
}

fn apply(t: &DMatrix<f64>, a: &[Complex64]) -> Vec<Complex64> {
    let re = t * DVector::from_iterator(a.len(), a.iter().map(|z| z.re));
    let im = t * DVector::from_iterator(a.len(), a.iter().map(|z| z.im));
    re.iter().zip(im.iter()).map(|(&r, &i)| Complex64::new(r, i)).collect()
}

/// Propagates through already solved cross-sections. `sets[k]` holds the
/// modes of `plan` entry `k`; entries sharing a [`EmePlan::distinct`] index
/// are treated as the same structure.
pub fn propagate_mode_sets(
    sets: &[Vec<GuidedMode>],
    plan: &EmePlan,
    refs: &EmeReferences,
    launch: &Launch,
) -> Result<TransferRecord, TaperError> {
    assert_eq!(sets.len(), plan.len());
    let wavelength_nm = refs.fiber.wavelength_nm;
    let k0 = math::TWO_PI / wavelength_nm;
    let same = plan.distinct();

    let start = &sets[0];
    let (mut a, launch_mode) = match launch {
        Launch::WaveguideMode => {
            let mut best = (0, -1.0);
            for (m, mode) in start.iter().enumerate() {
                let o = mode_overlap(mode, &refs.waveguide)?;
                if o > best.1 {
                    best = (m, o);
                }
            }
            let mut a = alloc::vec![Complex64::new(0.0, 0.0); start.len()];
            a[best.0] = Complex64::new(1.0, 0.0);
            (a, Some(best.0))
        }
        Launch::Amplitudes(v) => {
            if v.len() != start.len() {
                return Err(TaperError::TooFew {
                    needed: start.len(),
                    got: v.len(),
                });
            }
            (v.clone(), None)
        }
    };
    let launch_power = power(&a);
    let mut max_gain = f64::NEG_INFINITY;
    let mut sections = Vec::with_capacity(plan.len());
    for k in 0..plan.len() {
        let modes = &sets[k];
        if k > 0 && same[k] != same[k - 1] {
            let before = power(&a);
            a = apply(&interface(&sets[k - 1], modes), &a);
            max_gain = max_gain.max(power(&a) - before);
        }
        let dz = plan.lengths_um[k] * 1e3;
        if dz > 0.0 {
            for (am, m) in a.iter_mut().zip(modes) {
                *am *= Complex64::from_polar(1.0, k0 * m.n_eff * dz);
            }
        }
        sections.push(SectionRecord {
            y_um: plan.y_um[k] + 0.5 * plan.lengths_um[k],
            width_nm: plan.widths_nm[k],
            n_eff: modes.iter().map(|m| m.n_eff).collect(),
            amplitudes: a.clone(),
            power: power(&a),
            fiber_projection: fiber_power(modes, &a, &refs.fiber),
        });
    }

    let last = &sets[plan.len() - 1];
    let mut best = (0, -1.0);
    for (m, mode) in last.iter().enumerate() {
        let o = mode_overlap(mode, &refs.fiber)?;
        if o > best.1 {
            best = (m, o);
        }
    }
    if best.1 <= FIBER_MODE_MIN_OVERLAP {
        return Err(TaperError::FiberModeNotFound { best: best.1 });
    }
    let end = sections.last().unwrap();
    Ok(TransferRecord {
        wavelength_nm,
        length_um: *plan.y_um.last().unwrap(),
        t_fiber: end.amplitudes[best.0].norm_sqr(),
        fiber_projection: end.fiber_projection,
        fiber_mode: best.0,
        fiber_mode_overlap: best.1,
        launch_mode,
        launch_power,
        max_power_gain: if max_gain.is_finite() { max_gain } else { 0.0 },
        sections,
    })
}

/// Coupled-system modes of every distinct cross-section of the plan.
pub fn solve_plan(
    plan: &EmePlan,
    template: &CouplerGeometry,
    materials: &MaterialSet,
    opts: &EmeOptions,
) -> Result<Vec<Vec<GuidedMode>>, TaperError> {
    let grid = grid_for(template, opts);
    let same = plan.distinct();
    let mut sets: Vec<Vec<GuidedMode>> = Vec::with_capacity(plan.len());
    for k in 0..plan.len() {
        if same[k] != k {
            let copy = sets[same[k]].clone();
            sets.push(copy);
            continue;
        }
        let mut g = template.with_width(plan.widths_nm[k]);
        g.gap_nm = plan.gaps_nm[k];
        let cs = build_cross_section(&g, materials, &grid, GuideSelector::Coupled)?;
        let mut o = SolverOptions::for_selector(GuideSelector::Coupled, opts.n_modes);
        o.parity = opts.parity;
        sets.push(solve_modes(&cs, &o)?);
    }
    Ok(sets)
}

/// Grid that fits every gap the plan can use.
pub fn grid_for(template: &CouplerGeometry, opts: &EmeOptions) -> GridSpec {
    let mut grid = opts.grid;
    if let Some(c) = opts.contact {
        grid.gap_allowance_nm = grid.gap_allowance_nm.max(c.standoff_nm).max(template.gap_nm);
    }
    grid
}

pub fn propagate_eme(
    profile: &TaperProfile,
    template: &CouplerGeometry,
    materials: &MaterialSet,
    wavelength_nm: f64,
    opts: &EmeOptions,
    launch: &Launch,
) -> Result<TransferRecord, TaperError> {
    if opts.n_modes < 2 {
        return Err(TaperError::TooFew {
            needed: 2,
            got: opts.n_modes,
        });
    }
    let geom = template.with_wavelength(wavelength_nm);
    let plan = eme_plan(profile, &geom, opts)?;
    let sets = solve_plan(&plan, &geom, materials, opts)?;
    let refs = EmeReferences::solve(&geom, materials, &grid_for(&geom, opts), opts.parity, profile.w_start())?;
    propagate_mode_sets(&sets, &plan, &refs, launch)
}

/// `propagate_eme` at each wavelength of a strictly monotone grid.
pub fn sweep_wavelength(
    profile: &TaperProfile,
    template: &CouplerGeometry,
    materials: &MaterialSet,
    wavelengths_nm: &[f64],
    opts: &EmeOptions,
) -> Result<Vec<TransferRecord>, TaperError> {
    if wavelengths_nm.is_empty() {
        return Err(TaperError::TooFew { needed: 1, got: 0 });
    }
    if wavelengths_nm.len() > 1 {
        let up = wavelengths_nm[1] > wavelengths_nm[0];
        if wavelengths_nm.windows(2).any(|p| (p[1] > p[0]) != up || p[1] == p[0]) {
            return Err(TaperError::NonMonotoneWavelengths);
        }
    }
    wavelengths_nm
        .iter()
        .map(|&lam| {
            propagate_eme(profile, template, materials, lam, opts, &Launch::WaveguideMode).map_err(|e| {
                TaperError::AtWavelength {
                    wavelength_nm: lam,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}
