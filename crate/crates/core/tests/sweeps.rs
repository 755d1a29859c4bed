use fibercouple_core::geometry::build_cross_section;
use fibercouple_core::modesolver::{
    find_anticrossings, mode_overlap, solve_at_width, solve_modes, sweep_width, SweepOptions, RESIDUAL_LIMIT,
};
use fibercouple_core::{CouplerGeometry, GridSpec, GuideSelector, MaterialSet, SolverOptions};

const RES: f64 = 20.0;

fn opts(which: GuideSelector, n: usize, keep: bool) -> SweepOptions {
    SweepOptions {
        grid: GridSpec::with_resolution(RES),
        solver: SolverOptions::for_selector(which, n),
        keep_modes: keep,
    }
}

fn fiber_mode(w: f64) -> fibercouple_core::GuidedMode {
    let o = opts(GuideSelector::FiberOnly, 1, false);
    solve_at_width(&CouplerGeometry::DESIGN, &MaterialSet::GAAS_SILICA_AIR, GuideSelector::FiberOnly, &o, w)
        .unwrap()
        .remove(0)
}

#[test]
fn coupled_sweep_has_a_single_anticrossing_near_the_tip_width() {
    let widths: Vec<f64> = (0..15).map(|k| 50.0 + 300.0 * k as f64 / 14.0).collect();
    let o = opts(GuideSelector::Coupled, 4, true);
    let s = sweep_width(&widths, &CouplerGeometry::DESIGN, &MaterialSet::GAAS_SILICA_AIR, GuideSelector::Coupled, &o)
        .unwrap();
    let modes = s.modes.as_ref().unwrap();
    let mut start: Vec<_> = s.branches.iter().filter(|b| b.params[0] == widths[0]).collect();
    start.sort_by(|a, b| b.n_eff[0].total_cmp(&a.n_eff[0]));
    let (b0, b1) = (start[0], start[1]);
    assert_eq!(b0.len(), widths.len());
    assert_eq!(b1.len(), widths.len());
    assert!(b0.continuity.iter().all(|&c| c > 0.5));
    for (k, &w) in widths.iter().enumerate() {
        assert!(b0.n_eff[k] > b1.n_eff[k], "branches cross at {w}");
    }
    let ac = find_anticrossings(b0, b1);
    assert_eq!(ac.len(), 1, "{ac:?}");
    assert!((140.0..=200.0).contains(&ac[0]), "{}", ac[0]);

    // the fundamental supermode is the fiber mode at the narrow end
    let f = fiber_mode(50.0);
    assert!(mode_overlap(&modes[0][0], &f).unwrap() > 0.8);
    for set in modes {
        for m in set {
            assert!(m.residual < RESIDUAL_LIMIT);
        }
    }
}

#[test]
fn fundamental_overlaps_bare_fiber_at_tip_width() {
    let o = opts(GuideSelector::Coupled, 2, false);
    let m = solve_at_width(&CouplerGeometry::DESIGN, &MaterialSet::GAAS_SILICA_AIR, GuideSelector::Coupled, &o, 140.0)
        .unwrap();
    let ov = mode_overlap(&m[0], &fiber_mode(140.0)).unwrap();
    assert!(ov >= 0.90, "{ov}");
}

#[test]
fn bare_waveguide_index_rises_with_width() {
    let widths = [180.0, 220.0, 260.0, 300.0, 350.0];
    let o = opts(GuideSelector::WaveguideOnly, 1, false);
    let s = sweep_width(&widths, &CouplerGeometry::DESIGN, &MaterialSet::GAAS_SILICA_AIR, GuideSelector::WaveguideOnly, &o)
        .unwrap();
    let b = &s.branches[0];
    assert_eq!(b.len(), widths.len());
    assert!(b.n_eff.windows(2).all(|p| p[1] > p[0]), "{:?}", b.n_eff);
    assert!(b.n_eff_at(300.0).unwrap() > 2.0);
}

#[test]
fn bare_fiber_ignores_waveguide_width() {
    let widths = [100.0, 250.0];
    let o = opts(GuideSelector::FiberOnly, 1, false);
    let s = sweep_width(&widths, &CouplerGeometry::DESIGN, &MaterialSet::GAAS_SILICA_AIR, GuideSelector::FiberOnly, &o)
        .unwrap();
    let n = &s.branches[0].n_eff;
    assert!((n[0] - n[1]).abs() < 1e-9, "{n:?}");
}

#[test]
fn coupled_modes_are_orthogonal() {
    let geom = CouplerGeometry::DESIGN.with_width(250.0);
    let cs = build_cross_section(&geom, &MaterialSet::GAAS_SILICA_AIR, &GridSpec::with_resolution(RES), GuideSelector::Coupled)
        .unwrap();
    let modes = solve_modes(&cs, &SolverOptions::for_selector(GuideSelector::Coupled, 4)).unwrap();
    assert!(modes.len() >= 3);
    for a in 0..modes.len() {
        for b in a + 1..modes.len() {
            let o = mode_overlap(&modes[a], &modes[b]).unwrap();
            assert!(o < 1e-6, "{a} {b} {o:e}");
        }
    }
}
