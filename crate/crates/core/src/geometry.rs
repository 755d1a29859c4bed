//! Cross-section geometry of the waveguide/microfiber coupler.
//!
//! The computational domain is a rectangle in the transverse (x, y) plane.
//! x runs from `-width/2` to `+width/2` with the guides centred on x = 0;
//! y runs upward from 0. The rectangular GaAs waveguide sits at the bottom,
//! `padding` above the lower edge, and the fiber disk rests on top of it,
//! separated by `gap`. Cells cut by a material boundary carry the
//! area-weighted average of n².

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Largest grid spacing accepted by [`build_cross_section`], in nm.
pub const MAX_RESOLUTION_NM: f64 = 20.0;
/// Minimum number of cells across the waveguide thickness and fiber diameter.
pub const MIN_CELLS_PER_FEATURE: f64 = 8.0;
/// Minimum background padding around the guides, in nm.
pub const MIN_PADDING_NM: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("{key} must be positive, got {value}")]
    NonPositive { key: &'static str, value: f64 },
    #[error("{key} must be finite, got {value}")]
    NonFinite { key: &'static str, value: f64 },
    #[error("gap_nm must be non-negative, got {0}")]
    NegativeGap(f64),
    #[error("{key} = {value} is below 1.0")]
    IndexBelowUnity { key: &'static str, value: f64 },
    #[error("{key} = {value} does not exceed n_bg = {background}; no guidance possible")]
    NoIndexContrast {
        key: &'static str,
        value: f64,
        background: f64,
    },
    #[error("resolution_nm = {0} exceeds the {MAX_RESOLUTION_NM} nm limit")]
    ResolutionTooCoarse(f64),
    #[error("{feature} spans only {cells:.2} cells at this resolution (need at least {MIN_CELLS_PER_FEATURE})")]
    FeatureUnderResolved { feature: &'static str, cells: f64 },
    #[error("padding_nm = {0} is below the {MIN_PADDING_NM} nm minimum")]
    PaddingTooSmall(f64),
    #[error("index map has {got} values, expected {expected}")]
    MapSize { expected: usize, got: usize },
}

/// Refractive indices of the three materials in the cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSet {
    pub n_core_wg: f64,
    pub n_fiber: f64,
    pub n_background: f64,
}

impl MaterialSet {
    /// GaAs (3.46) waveguide, silica (1.45) fiber, suspended in vacuum.
    pub const GAAS_SILICA_AIR: MaterialSet = MaterialSet {
        n_core_wg: 3.46,
        n_fiber: 1.45,
        n_background: 1.0,
    };

    pub fn new(n_core_wg: f64, n_fiber: f64, n_background: f64) -> Result<Self, GeometryError> {
        let m = MaterialSet {
            n_core_wg,
            n_fiber,
            n_background,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (key, value) in [
            ("n_wg", self.n_core_wg),
            ("n_fiber", self.n_fiber),
            ("n_bg", self.n_background),
        ] {
            if !value.is_finite() {
                return Err(GeometryError::NonFinite { key, value });
            }
            if value < 1.0 {
                return Err(GeometryError::IndexBelowUnity { key, value });
            }
        }
        for (key, value) in [("n_wg", self.n_core_wg), ("n_fiber", self.n_fiber)] {
            if value <= self.n_background {
                return Err(GeometryError::NoIndexContrast {
                    key,
                    value,
                    background: self.n_background,
                });
            }
        }
        Ok(())
    }

    pub fn max_index(&self) -> f64 {
        self.n_core_wg.max(self.n_fiber).max(self.n_background)
    }
}

impl Default for MaterialSet {
    fn default() -> Self {
        Self::GAAS_SILICA_AIR
    }
}

/// Physical dimensions of the coupler, all in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerGeometry {
    pub wg_width_nm: f64,
    pub wg_thickness_nm: f64,
    pub fiber_diameter_nm: f64,
    /// Vertical separation between fiber bottom and waveguide top; 0 is contact.
    pub gap_nm: f64,
    pub wavelength_nm: f64,
    /// Lateral displacement of the fiber axis from the waveguide centre.
    pub fiber_offset_nm: f64,
}

impl CouplerGeometry {
    /// Design values: 300 nm wide, 160 nm thick GaAs beam under a 1 µm fiber
    /// in contact, at 940 nm.
    pub const DESIGN: CouplerGeometry = CouplerGeometry {
        wg_width_nm: 300.0,
        wg_thickness_nm: 160.0,
        fiber_diameter_nm: 1000.0,
        gap_nm: 0.0,
        wavelength_nm: 940.0,
        fiber_offset_nm: 0.0,
    };

    /// Diameter of the fabricated fiber at the dimple.
    pub const FABRICATED_FIBER_DIAMETER_NM: f64 = 1900.0;

    pub fn with_width(mut self, w: f64) -> Self {
        self.wg_width_nm = w;
        self
    }

    pub fn with_wavelength(mut self, lambda: f64) -> Self {
        self.wavelength_nm = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (key, value) in [
            ("wg_width_nm", self.wg_width_nm),
            ("wg_thickness_nm", self.wg_thickness_nm),
            ("fiber_diameter_nm", self.fiber_diameter_nm),
            ("gap_nm", self.gap_nm),
            ("wavelength_nm", self.wavelength_nm),
            ("fiber_offset_nm", self.fiber_offset_nm),
        ] {
            if !value.is_finite() {
                return Err(GeometryError::NonFinite { key, value });
            }
        }
        for (key, value) in [
            ("wg_width_nm", self.wg_width_nm),
            ("wg_thickness_nm", self.wg_thickness_nm),
            ("fiber_diameter_nm", self.fiber_diameter_nm),
            ("wavelength_nm", self.wavelength_nm),
        ] {
            if value <= 0.0 {
                return Err(GeometryError::NonPositive { key, value });
            }
        }
        if self.gap_nm < 0.0 {
            return Err(GeometryError::NegativeGap(self.gap_nm));
        }
        Ok(())
    }

    /// Whether `w` lies in the 50–350 nm envelope the sweep was validated over.
    pub fn width_in_validated_envelope(&self) -> bool {
        (50.0..=350.0).contains(&self.wg_width_nm)
    }
}

impl Default for CouplerGeometry {
    fn default() -> Self {
        Self::DESIGN
    }
}

/// Which guides are rasterised into the index map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GuideSelector {
    WaveguideOnly,
    FiberOnly,
    Coupled,
}

impl GuideSelector {
    pub fn has_waveguide(self) -> bool {
        matches!(self, GuideSelector::WaveguideOnly | GuideSelector::Coupled)
    }

    pub fn has_fiber(self) -> bool {
        matches!(self, GuideSelector::FiberOnly | GuideSelector::Coupled)
    }

    pub fn name(self) -> &'static str {
        match self {
            GuideSelector::WaveguideOnly => "waveguide",
            GuideSelector::FiberOnly => "fiber",
            GuideSelector::Coupled => "coupled",
        }
    }
}

impl core::str::FromStr for GuideSelector {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "waveguide" | "wg" | "waveguide-only" => Ok(GuideSelector::WaveguideOnly),
            "fiber" | "fiber-only" => Ok(GuideSelector::FiberOnly),
            "coupled" => Ok(GuideSelector::Coupled),
            _ => Err(()),
        }
    }
}

/// Discretisation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub resolution_nm: f64,
    pub padding_nm: f64,
    /// The domain height is sized for a gap of at least this much, so that
    /// sections with different gaps share one grid.
    pub gap_allowance_nm: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution_nm: 10.0,
            padding_nm: MIN_PADDING_NM,
            gap_allowance_nm: 0.0,
        }
    }
}

impl GridSpec {
    pub fn with_resolution(resolution_nm: f64) -> Self {
        GridSpec {
            resolution_nm,
            ..Self::default()
        }
    }
}

/// A pixelised refractive-index map.
///
/// Cell `(i, j)` covers `x ∈ [x0 + i·dx, x0 + (i+1)·dx]`,
/// `y ∈ [j·dy, (j+1)·dy]` with `x0 = -nx·dx/2`. Values are stored x-major:
/// `index[i * ny + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    index: Vec<f64>,
    pub geometry: CouplerGeometry,
    pub materials: MaterialSet,
    pub which: GuideSelector,
}

impl CrossSection {
    /// Wraps an arbitrary index map, e.g. a slab that spans the full width.
    ///
    /// `geometry` only supplies the wavelength and bookkeeping; the solver
    /// reads the map itself.
    pub fn from_index_map(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        index: Vec<f64>,
        geometry: CouplerGeometry,
        materials: MaterialSet,
        which: GuideSelector,
    ) -> Result<Self, GeometryError> {
        if nx * ny != index.len() {
            return Err(GeometryError::MapSize {
                expected: nx * ny,
                got: index.len(),
            });
        }
        for (key, value) in [("dx", dx), ("dy", dy)] {
            if !(value > 0.0) {
                return Err(GeometryError::NonPositive { key, value });
            }
        }
        Ok(CrossSection {
            nx,
            ny,
            dx,
            dy,
            index,
            geometry,
            materials,
            which,
        })
    }

    pub fn index_map(&self) -> &[f64] {
        &self.index
    }

    #[inline]
    pub fn index_at(&self, i: usize, j: usize) -> f64 {
        self.index[i * self.ny + j]
    }

    #[inline]
    pub fn permittivity_at(&self, i: usize, j: usize) -> f64 {
        let n = self.index_at(i, j);
        n * n
    }

    pub fn width_nm(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn height_nm(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    /// Left edge of cell `i`.
    pub fn x_edge(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * self.nx as f64) * self.dx
    }

    pub fn max_index(&self) -> f64 {
        self.index.iter().copied().fold(f64::MIN, f64::max)
    }

    /// ∑ (n² − n_bg²)·dx·dy over the map, in nm².
    pub fn dielectric_area(&self) -> f64 {
        let bg = self.materials.n_background * self.materials.n_background;
        self.index.iter().map(|n| n * n - bg).sum::<f64>() * self.dx * self.dy
    }

    /// True when the map is bit-identical under x → −x.
    pub fn is_mirror_symmetric(&self) -> bool {
        if self.nx % 2 != 0 {
            return false;
        }
        (0..self.nx / 2).all(|i| {
            let a = &self.index[i * self.ny..(i + 1) * self.ny];
            let k = self.nx - 1 - i;
            let b = &self.index[k * self.ny..(k + 1) * self.ny];
            a == b
        })
    }

    /// Same geometry and grid as `other`, so that fields can be overlapped.
    pub fn same_grid(&self, other: &CrossSection) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx == other.dx && self.dy == other.dy
    }
}

/// Rasterises the coupler geometry.
///
/// The domain is `(max(w, d + 2|offset|) + 2·padding) × (t + d + gap + 2·padding)`
/// regardless of `which`, so that cross-sections built from one geometry share
/// a grid. The cell count across x is forced even so the centre line x = 0 is
/// a grid line.
pub fn build_cross_section(
    geom: &CouplerGeometry,
    materials: &MaterialSet,
    grid: &GridSpec,
    which: GuideSelector,
) -> Result<CrossSection, GeometryError> {
    geom.validate()?;
    materials.validate()?;
    let res = grid.resolution_nm;
    if !res.is_finite() {
        return Err(GeometryError::NonFinite {
            key: "resolution_nm",
            value: res,
        });
    }
    if res <= 0.0 {
        return Err(GeometryError::NonPositive {
            key: "resolution_nm",
            value: res,
        });
    }
    if res > MAX_RESOLUTION_NM {
        return Err(GeometryError::ResolutionTooCoarse(res));
    }
    if !(grid.padding_nm >= MIN_PADDING_NM) {
        return Err(GeometryError::PaddingTooSmall(grid.padding_nm));
    }
    // The swept width is exempt: it legitimately drops to a few cells and is
    // handled by the sub-cell smoothing.
    let mut features: Vec<(&'static str, f64)> = Vec::new();
    if which.has_waveguide() {
        features.push(("wg_thickness_nm", geom.wg_thickness_nm));
    }
    if which.has_fiber() {
        features.push(("fiber_diameter_nm", geom.fiber_diameter_nm));
    }
    for (feature, size) in features {
        let cells = size / res;
        if cells + 1e-9 < MIN_CELLS_PER_FEATURE {
            return Err(GeometryError::FeatureUnderResolved { feature, cells });
        }
    }

    let pad = grid.padding_nm;
    let w = geom.wg_width_nm;
    let t = geom.wg_thickness_nm;
    let d = geom.fiber_diameter_nm;
    let off = geom.fiber_offset_nm;
    let width = w.max(d + 2.0 * off.abs()) + 2.0 * pad;
    let height = t + d + geom.gap_nm.max(grid.gap_allowance_nm) + 2.0 * pad;

    let mut nx = math::round(width / res) as usize;
    if nx % 2 == 1 {
        nx += 1;
    }
    let ny = math::round(height / res).max(1.0) as usize;
    let dx = width / nx as f64;
    let dy = height / ny as f64;

    let eps_bg = materials.n_background * materials.n_background;
    let eps_wg = materials.n_core_wg * materials.n_core_wg;
    let eps_f = materials.n_fiber * materials.n_fiber;

    let wg_bottom = pad;
    let wg_top = pad + t;
    let disk = Disk {
        xc: off,
        yc: wg_top + geom.gap_nm + 0.5 * d,
        r: 0.5 * d,
    };

    let x_edge = |i: usize| (i as f64 - 0.5 * nx as f64) * dx;
    let symmetric = off == 0.0;
    // With a centred fiber only the right half is rasterised and then mirrored,
    // which makes the map exactly symmetric.
    let i_start = if symmetric { nx / 2 } else { 0 };

    let mut eps = vec![eps_bg; nx * ny];
    for i in i_start..nx {
        let (x0, x1) = (x_edge(i), x_edge(i + 1));
        let fx_wg = if which.has_waveguide() {
            interval_overlap(x0, x1, -0.5 * w, 0.5 * w) / dx
        } else {
            0.0
        };
        for j in 0..ny {
            let (y0, y1) = (j as f64 * dy, (j + 1) as f64 * dy);
            let f_wg = if fx_wg > 0.0 {
                fx_wg * interval_overlap(y0, y1, wg_bottom, wg_top) / dy
            } else {
                0.0
            };
            let f_fiber = if which.has_fiber() {
                disk.cell_fraction(x0, x1, y0, y1)
            } else {
                0.0
            };
            let f_bg = (1.0 - f_wg - f_fiber).max(0.0);
            eps[i * ny + j] = f_wg * eps_wg + f_fiber * eps_f + f_bg * eps_bg;
        }
    }
    if symmetric {
        for i in 0..nx / 2 {
            let src = nx - 1 - i;
            for j in 0..ny {
                eps[i * ny + j] = eps[src * ny + j];
            }
        }
    }

    let index = eps.into_iter().map(math::sqrt).collect();
    Ok(CrossSection {
        nx,
        ny,
        dx,
        dy,
        index,
        geometry: *geom,
        materials: *materials,
        which,
    })
}

fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

struct Disk {
    xc: f64,
    yc: f64,
    r: f64,
}

// 8-point Gauss–Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

impl Disk {
    fn half_chord(&self, x: f64) -> f64 {
        let u = x - self.xc;
        let s = self.r * self.r - u * u;
        if s > 0.0 {
            math::sqrt(s)
        } else {
            0.0
        }
    }

    /// Fraction of the cell `[x0,x1]×[y0,y1]` covered by the disk.
    fn cell_fraction(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let r2 = self.r * self.r;
        // nearest point of the cell to the centre
        let nxp = self.xc.clamp(x0, x1) - self.xc;
        let nyp = self.yc.clamp(y0, y1) - self.yc;
        if nxp * nxp + nyp * nyp >= r2 {
            return 0.0;
        }
        let far = |a: f64, b: f64, c: f64| (a - c).abs().max((b - c).abs());
        let fx = far(x0, x1, self.xc);
        let fy = far(y0, y1, self.yc);
        if fx * fx + fy * fy <= r2 {
            return 1.0;
        }
        // Integrate the clipped chord length over x, splitting where the
        // integrand has kinks so each piece is smooth.
        let mut breaks: Vec<f64> = vec![x0, x1];
        for xb in [self.xc - self.r, self.xc + self.r] {
            if xb > x0 && xb < x1 {
                breaks.push(xb);
            }
        }
        for yb in [y0, y1] {
            let dyb = yb - self.yc;
            let s = r2 - dyb * dyb;
            if s > 0.0 {
                let h = math::sqrt(s);
                for xb in [self.xc - h, self.xc + h] {
                    if xb > x0 && xb < x1 {
                        breaks.push(xb);
                    }
                }
            }
        }
        breaks.sort_by(|a, b| a.total_cmp(b));
        let mut area = 0.0;
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let mut acc = 0.0;
            for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                let x = mid + half * node;
                let h = self.half_chord(x);
                let len = (y1.min(self.yc + h) - y0.max(self.yc - h)).max(0.0);
                acc += weight * len;
            }
            area += acc * half;
        }
        (area / ((x1 - x0) * (y1 - y0))).clamp(0.0, 1.0)
    }
}
