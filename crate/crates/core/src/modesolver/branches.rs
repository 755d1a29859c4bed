//! Width sweeps and branch tracking by field identity.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{mode_overlap, solve_modes, GuidedMode, ModeError, SolverOptions};
use crate::geometry::{build_cross_section, CouplerGeometry, GridSpec, GuideSelector, MaterialSet};

/// Minimum overlap between consecutive points of one branch.
pub const CONTINUITY_MIN: f64 = 0.5;
/// Two candidate pairings closer than this in overlap count as a tie.
pub const AMBIGUITY_WINDOW: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispersionBranch {
    pub branch_id: usize,
    pub params: Vec<f64>,
    pub n_eff: Vec<f64>,
    pub te_fraction: Vec<f64>,
    /// Position of the mode in the per-point mode list.
    pub mode_index: Vec<usize>,
    /// Overlap with the previous point of the branch; 1 at its first point.
    pub continuity: Vec<f64>,
    /// Set where the match was a tie broken by nearest n_eff.
    pub ambiguous: Vec<bool>,
}

impl DispersionBranch {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_eff_at(&self, param: f64) -> Option<f64> {
        self.params.iter().position(|&p| p == param).map(|k| self.n_eff[k])
    }
}

/// Assigns each point's modes to branches incrementally, holding only the
/// previous point's modes.
#[derive(Debug, Default)]
pub struct BranchTracker {
    branches: Vec<DispersionBranch>,
    /// Last mode of every branch still open.
    open: Vec<(usize, GuidedMode)>,
    last_param: Option<f64>,
    direction: f64,
}

/// One accepted point, as reported by [`BranchTracker::push`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPoint {
    /// Branch id of every mode at the point, in mode order.
    pub branch_of_mode: Vec<usize>,
    pub ambiguous: bool,
}

impl BranchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, param: f64, modes: &[GuidedMode]) -> Result<TrackedPoint, ModeError> {
        if let Some(prev) = self.last_param {
            let d = param - prev;
            if !(d != 0.0) || (self.direction != 0.0 && d.signum() != self.direction) {
                return Err(ModeError::NonMonotoneSweep { param });
            }
            self.direction = d.signum();
        }
        self.last_param = Some(param);

        let mut pairs = Vec::new();
        for (slot, (_, last)) in self.open.iter().enumerate() {
            for (m, mode) in modes.iter().enumerate() {
                pairs.push((slot, m, mode_overlap(last, mode)?));
            }
        }
        pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
        let mut slot_used = alloc::vec![false; self.open.len()];
        let mut mode_branch: Vec<Option<usize>> = alloc::vec![None; modes.len()];
        let mut any_ambiguous = false;
        let mut assignments = Vec::new();
        for k in 0..pairs.len() {
            let (slot, m, o) = pairs[k];
            if o <= CONTINUITY_MIN {
                break;
            }
            if slot_used[slot] || mode_branch[m].is_some() {
                continue;
            }
            let ties: Vec<(usize, usize, f64)> = pairs[k..]
                .iter()
                .copied()
                .filter(|&(s, mm, oo)| {
                    oo >= o - AMBIGUITY_WINDOW
                        && oo > CONTINUITY_MIN
                        && (s == slot || mm == m)
                        && !slot_used[s]
                        && mode_branch[mm].is_none()
                })
                .collect();
            let ambiguous = ties.len() > 1;
            let (s, mm, oo) = if ambiguous {
                *ties
                    .iter()
                    .min_by(|a, b| {
                        let da = (self.open[a.0].1.n_eff - modes[a.1].n_eff).abs();
                        let db = (self.open[b.0].1.n_eff - modes[b.1].n_eff).abs();
                        da.total_cmp(&db)
                    })
                    .unwrap()
            } else {
                (slot, m, o)
            };
            any_ambiguous |= ambiguous;
            slot_used[s] = true;
            mode_branch[mm] = Some(self.open[s].0);
            assignments.push((s, mm, oo, ambiguous));
        }

        let mut next_open = Vec::new();
        for &(s, mm, oo, amb) in &assignments {
            let id = self.open[s].0;
            let b = &mut self.branches[id];
            b.params.push(param);
            b.n_eff.push(modes[mm].n_eff);
            b.te_fraction.push(modes[mm].te_fraction);
            b.mode_index.push(mm);
            b.continuity.push(oo);
            b.ambiguous.push(amb);
            next_open.push((id, modes[mm].clone()));
        }
        for (m, mode) in modes.iter().enumerate() {
            if mode_branch[m].is_none() {
                let id = self.branches.len();
                self.branches.push(DispersionBranch {
                    branch_id: id,
                    params: alloc::vec![param],
                    n_eff: alloc::vec![mode.n_eff],
                    te_fraction: alloc::vec![mode.te_fraction],
                    mode_index: alloc::vec![m],
                    continuity: alloc::vec![1.0],
                    ambiguous: alloc::vec![false],
                });
                mode_branch[m] = Some(id);
                next_open.push((id, mode.clone()));
            }
        }
        next_open.sort_by_key(|(id, _)| *id);
        self.open = next_open;
        Ok(TrackedPoint {
            branch_of_mode: mode_branch.into_iter().map(|b| b.unwrap()).collect(),
            ambiguous: any_ambiguous,
        })
    }

    pub fn finish(self) -> Vec<DispersionBranch> {
        self.branches
    }
}

/// Tracks modes through a parameter sweep; `points` holds (parameter, modes)
/// with the modes of each point sorted by descending n_eff.
pub fn track_branches(points: &[(f64, Vec<GuidedMode>)]) -> Result<Vec<DispersionBranch>, ModeError> {
    if points.len() < 2 {
        return Err(ModeError::TooFewPoints(points.len()));
    }
    let mut t = BranchTracker::new();
    for (p, modes) in points {
        t.push(*p, modes)?;
    }
    Ok(t.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub grid: GridSpec,
    pub solver: SolverOptions,
    /// Keep every point's modes in the result (memory heavy at fine grids).
    pub keep_modes: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub widths: Vec<f64>,
    pub branches: Vec<DispersionBranch>,
    pub modes: Option<Vec<Vec<GuidedMode>>>,
    /// Widths at which a tie in the tracking was broken by n_eff.
    pub ambiguous_at: Vec<f64>,
}

/// Solves the cross-section at one width of a sweep.
pub fn solve_at_width(
    template: &CouplerGeometry,
    materials: &MaterialSet,
    which: GuideSelector,
    opts: &SweepOptions,
    width_nm: f64,
) -> Result<Vec<GuidedMode>, ModeError> {
    let tag = |e: ModeError| ModeError::AtWidth {
        width_nm,
        source: Box::new(e),
    };
    let geom = template.with_width(width_nm);
    let cs = build_cross_section(&geom, materials, &opts.grid, which).map_err(|e| tag(e.into()))?;
    solve_modes(&cs, &opts.solver).map_err(tag)
}

/// How far above the previous top mode the shift is placed when following
/// the waveguide branch up a sweep.
const GUESS_LEAD: f64 = 0.05;

/// One solve per width followed by branch tracking.
///
/// With the waveguide present the shift follows the top mode of the previous
/// point (never below the configured guess), so a fast-rising waveguide branch
/// is not lost among the near-cutoff box modes.
pub fn sweep_width(
    widths: &[f64],
    template: &CouplerGeometry,
    materials: &MaterialSet,
    which: GuideSelector,
    opts: &SweepOptions,
) -> Result<SweepResult, ModeError> {
    if widths.len() < 2 {
        return Err(ModeError::TooFewPoints(widths.len()));
    }
    match sweep_width_partial(widths, template, materials, which, opts) {
        (r, None) => Ok(r),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`sweep_width`] but stops at the first failing width and returns the
/// points solved before it together with the error.
pub fn sweep_width_partial(
    widths: &[f64],
    template: &CouplerGeometry,
    materials: &MaterialSet,
    which: GuideSelector,
    opts: &SweepOptions,
) -> (SweepResult, Option<ModeError>) {
    let mut tracker = BranchTracker::new();
    let mut kept = Vec::new();
    let mut ambiguous_at = Vec::new();
    let mut done = Vec::new();
    let mut local = opts.clone();
    let mut error = None;
    for &w in widths {
        let step = solve_at_width(template, materials, which, &local, w).and_then(|modes| {
            let t = tracker.push(w, &modes)?;
            Ok((modes, t))
        });
        let (modes, t) = match step {
            Ok(v) => v,
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        if which.has_waveguide() {
            let top = modes[0].n_eff + GUESS_LEAD;
            local.solver.n_eff_guess = opts.solver.n_eff_guess.max(top).min(materials.n_core_wg);
        }
        if t.ambiguous {
            ambiguous_at.push(w);
        }
        done.push(w);
        if opts.keep_modes {
            kept.push(modes);
        }
    }
    let result = SweepResult {
        widths: done,
        branches: tracker.finish(),
        modes: opts.keep_modes.then_some(kept),
        ambiguous_at,
    };
    (result, error)
}

/// Parameters of interior local minima of |n_a − n_b| over the points the two
/// branches share, excluding places where the branches actually cross.
/// Each location is refined by a parabola through the three nearest samples.
pub fn find_anticrossings(a: &DispersionBranch, b: &DispersionBranch) -> Vec<f64> {
    let mut p = Vec::new();
    let mut gap = Vec::new();
    for (k, &x) in a.params.iter().enumerate() {
        if let Some(nb) = b.n_eff_at(x) {
            p.push(x);
            gap.push(a.n_eff[k] - nb);
        }
    }
    let mut out = Vec::new();
    for k in 1..gap.len().saturating_sub(1) {
        let (g0, g1, g2) = (gap[k - 1], gap[k], gap[k + 1]);
        if g0.signum() != g1.signum() || g1.signum() != g2.signum() {
            continue;
        }
        let (a0, a1, a2) = (g0.abs(), g1.abs(), g2.abs());
        if !(a1 < a0 && a1 <= a2) {
            continue;
        }
        let (x0, x1, x2) = (p[k - 1], p[k], p[k + 1]);
        let d1 = (a1 - a0) / (x1 - x0);
        let d2 = (a2 - a1) / (x2 - x1);
        let curv = (d2 - d1) / (x2 - x0);
        let xm = if curv > 0.0 { 0.5 * (x0 + x1) - d1 / (2.0 * curv) } else { x1 };
        out.push(xm.clamp(x0.min(x2), x0.max(x2)));
    }
    out
}
