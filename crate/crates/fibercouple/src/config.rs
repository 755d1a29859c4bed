//! Run configuration: defaults, then a `key = value` file, then flags.
//!
//! One assignment per line, `#` starts a comment, keys are dotted
//! (`geometry.width_nm`). Uncertain values are written `v ± s` (or `v +- s`)
//! and a trailing `%` on a number divides it by 100.
//!
//! Budget stages are `stage.<name> = v ± s`. Stages named
//! `stage.onchip.<name>` form the on-chip chain; every other stage is
//! off-chip. `expect.<quantity>` records a reference value that the budget
//! report compares against.

use std::fmt;
use std::path::{Path, PathBuf};

use fibercouple_core::budget::Measured;
use fibercouple_core::{CouplerGeometry, GridSpec, MaterialSet, ModeParity};

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag(flag) => write!(f, "{flag}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: {key}: {msg}")]
    Value { origin: Origin, key: String, msg: String },
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

/// A number as written, with its uncertainty and the size of the last digit
/// of each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub value: f64,
    pub sigma: f64,
    pub last_digit: f64,
    pub sigma_last_digit: f64,
}

impl Reading {
    pub fn measured(&self, label: &str) -> Measured {
        Measured::labelled(label, self.value, self.sigma).expect("validated at parse time")
    }
}

fn parse_number(text: &str) -> Result<(f64, f64), String> {
    let t = text.trim();
    let (body, per) = match t.strip_suffix('%') {
        Some(b) => (b.trim_end(), true),
        None => (t, false),
    };
    let v: f64 = body.parse().map_err(|_| format!("cannot parse `{t}` as a number"))?;
    if !v.is_finite() {
        return Err(format!("`{t}` is not finite"));
    }
    let mantissa = body.split(['e', 'E']).next().unwrap_or(body);
    let exp: i32 = body.split(['e', 'E']).nth(1).map_or(Ok(0), str::parse).map_err(|_| format!("bad exponent in `{t}`"))?;
    let decimals = mantissa.split_once('.').map_or(0, |(_, d)| d.len()) as i32;
    if per {
        // shift the exponent so the parser rounds once
        let v: f64 = format!("{mantissa}e{}", exp - 2).parse().map_err(|_| format!("cannot parse `{t}` as a number"))?;
        return Ok((v, format!("1e{}", exp - decimals - 2).parse().unwrap_or(0.0)));
    }
    Ok((v, format!("1e{}", exp - decimals).parse().unwrap_or(0.0)))
}

pub fn parse_reading(text: &str) -> Result<Reading, String> {
    let (v, s) = match text.split_once('±').or_else(|| text.split_once("+-")) {
        Some((v, s)) => (v, Some(s)),
        None => (text, None),
    };
    let (value, last_digit) = parse_number(v)?;
    let (sigma, sigma_last_digit) = match s {
        Some(s) => parse_number(s)?,
        None => (0.0, last_digit),
    };
    if sigma < 0.0 {
        return Err(format!("negative uncertainty in `{}`", text.trim()));
    }
    Ok(Reading {
        value,
        sigma,
        last_digit,
        sigma_last_digit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub n_modes: usize,
    /// Per-guide default when unset.
    pub n_eff_guess: Option<f64>,
    pub parity: ModeParity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaperSettings {
    pub w_start_nm: f64,
    pub w_tip_nm: f64,
    pub alpha: f64,
    /// Overrides `alpha` when set.
    pub length_um: Option<f64>,
    pub sections: usize,
    pub modes: usize,
    pub table_step_nm: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub rep_period_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chain {
    OffChip,
    OnChip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub chain: Chain,
    pub reading: Reading,
}

/// Quantities the budget report can be checked against.
pub const EXPECTABLE: [&str; 6] = [
    "offchip",
    "onchip",
    "single_photon_rate_mhz",
    "fiber_rate_mhz",
    "source_efficiency",
    "detector_rate_mhz",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BudgetSettings {
    pub rep_rate_mhz: f64,
    pub snspd_rate_mhz: Option<Reading>,
    pub single_photon_rate_mhz: Option<Reading>,
    pub g2_zero: Option<Reading>,
    pub eta_cf: Option<Reading>,
    pub gamma_total_per_ns: Option<Reading>,
    pub gamma_ref_per_ns: Option<Reading>,
    pub stages: Vec<Stage>,
    pub expect: Vec<(String, Reading)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub overridden: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: CouplerGeometry,
    pub materials: MaterialSet,
    pub grid: GridSpec,
    pub solver: SolverSettings,
    pub taper: TaperSettings,
    pub fit: FitSettings,
    pub budget: BudgetSettings,
    pub provenance: Provenance,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: CouplerGeometry::DESIGN,
            materials: MaterialSet::GAAS_SILICA_AIR,
            grid: GridSpec::default(),
            solver: SolverSettings {
                n_modes: 4,
                n_eff_guess: None,
                parity: ModeParity::TeLike,
            },
            taper: TaperSettings {
                w_start_nm: 300.0,
                w_tip_nm: 140.0,
                alpha: fibercouple_core::taper::DEFAULT_ALPHA,
                length_um: None,
                sections: 60,
                modes: 4,
                table_step_nm: 10.0,
                samples: fibercouple_core::taper::DEFAULT_SAMPLES,
            },
            fit: FitSettings {
                rep_period_ns: 1e3 / 76.0,
            },
            budget: BudgetSettings {
                rep_rate_mhz: 76.0,
                ..BudgetSettings::default()
            },
            provenance: Provenance::default(),
        }
    }
}

enum Check {
    Positive,
    NonNegative,
    Finite,
    Unit,
    Index,
}

fn number(raw: &str, check: Check) -> Result<f64, String> {
    let r = parse_reading(raw)?;
    if r.sigma != 0.0 {
        return Err("an uncertainty is not allowed here".into());
    }
    let v = r.value;
    match check {
        Check::Positive if v <= 0.0 => Err(format!("must be positive, got {v}")),
        Check::NonNegative if v < 0.0 => Err(format!("must be non-negative, got {v}")),
        Check::Unit if !(v > 0.0 && v < 1.0) => Err(format!("must lie in (0, 1), got {v}")),
        Check::Index if v < 1.0 => Err(format!("refractive index must be at least 1, got {v}")),
        _ => Ok(v),
    }
}

fn count(raw: &str, min: usize) -> Result<usize, String> {
    let n: usize = raw.trim().parse().map_err(|_| format!("cannot parse `{}` as a count", raw.trim()))?;
    if n < min {
        return Err(format!("must be at least {min}, got {n}"));
    }
    Ok(n)
}

fn reading(raw: &str, non_negative: bool) -> Result<Reading, String> {
    let r = parse_reading(raw)?;
    if non_negative && r.value < 0.0 {
        return Err(format!("must be non-negative, got {}", r.value));
    }
    Ok(r)
}

impl RunConfig {
    /// Defaults overlaid with the file at `path`.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        cfg.provenance.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (k, line) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: k + 1,
            };
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    origin,
                    text: body.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() || value.trim().is_empty() {
                return Err(ConfigError::Syntax {
                    origin,
                    text: body.to_string(),
                });
            }
            self.set(key, value.trim(), origin)?;
        }
        Ok(())
    }

    /// Applies a command-line setting; it wins over the file.
    pub fn set_flag(&mut self, key: &str, value: &str, flag: &str) -> Result<(), ConfigError> {
        self.set(key, value, Origin::Flag(flag.to_string()))?;
        if !self.provenance.overridden.iter().any(|k| k == key) {
            self.provenance.overridden.push(key.to_string());
        }
        Ok(())
    }

    fn set(&mut self, key: &str, raw: &str, origin: Origin) -> Result<(), ConfigError> {
        let known = self.assign(key, raw).map_err(|msg| ConfigError::Value {
            origin: origin.clone(),
            key: key.to_string(),
            msg,
        })?;
        if known {
            Ok(())
        } else {
            Err(ConfigError::UnknownKey {
                origin,
                key: key.to_string(),
            })
        }
    }

    /// `Ok(false)` for an unknown key.
    fn assign(&mut self, key: &str, raw: &str) -> Result<bool, String> {
        use Check::*;
        let g = &mut self.geometry;
        let t = &mut self.taper;
        let b = &mut self.budget;
        match key {
            "geometry.width_nm" => g.wg_width_nm = number(raw, Positive)?,
            "geometry.thickness_nm" => g.wg_thickness_nm = number(raw, Positive)?,
            "geometry.fiber_diameter_nm" => g.fiber_diameter_nm = number(raw, Positive)?,
            "geometry.gap_nm" => g.gap_nm = number(raw, NonNegative)?,
            "geometry.wavelength_nm" => g.wavelength_nm = number(raw, Positive)?,
            "geometry.fiber_offset_nm" => g.fiber_offset_nm = number(raw, Finite)?,
            "materials.n_wg" => self.materials.n_core_wg = number(raw, Index)?,
            "materials.n_fiber" => self.materials.n_fiber = number(raw, Index)?,
            "materials.n_background" => self.materials.n_background = number(raw, Index)?,
            "grid.resolution_nm" => self.grid.resolution_nm = number(raw, Positive)?,
            "grid.padding_nm" => self.grid.padding_nm = number(raw, Positive)?,
            "solver.modes" => self.solver.n_modes = count(raw, 1)?,
            "solver.n_eff_guess" => self.solver.n_eff_guess = Some(number(raw, Positive)?),
            "solver.parity" => {
                self.solver.parity = match raw.trim() {
                    "te" | "te-like" => ModeParity::TeLike,
                    "full" => ModeParity::Full,
                    other => return Err(format!("expected `te` or `full`, got `{other}`")),
                }
            }
            "taper.w_start_nm" => t.w_start_nm = number(raw, Positive)?,
            "taper.w_tip_nm" => t.w_tip_nm = number(raw, Positive)?,
            "taper.alpha" => t.alpha = number(raw, Unit)?,
            "taper.length_um" => t.length_um = Some(number(raw, Positive)?),
            "taper.sections" => t.sections = count(raw, 1)?,
            "taper.modes" => t.modes = count(raw, 2)?,
            "taper.table_step_nm" => t.table_step_nm = number(raw, Positive)?,
            "taper.samples" => t.samples = count(raw, 2)?,
            "fit.rep_period_ns" => self.fit.rep_period_ns = number(raw, Positive)?,
            "budget.rep_rate_mhz" => b.rep_rate_mhz = number(raw, Positive)?,
            "budget.snspd_rate_mhz" => b.snspd_rate_mhz = Some(reading(raw, true)?),
            "budget.single_photon_rate_mhz" => b.single_photon_rate_mhz = Some(reading(raw, true)?),
            "budget.g2_zero" => b.g2_zero = Some(reading(raw, true)?),
            "budget.eta_cf" => b.eta_cf = Some(reading(raw, true)?),
            "budget.gamma_total_per_ns" => b.gamma_total_per_ns = Some(reading(raw, true)?),
            "budget.gamma_ref_per_ns" => b.gamma_ref_per_ns = Some(reading(raw, true)?),
            _ => {
                if let Some(name) = key.strip_prefix("stage.") {
                    let r = reading(raw, true)?;
                    if r.value > 1.0 {
                        return Err(format!("efficiency {} exceeds 1", r.value));
                    }
                    let (chain, name) = match name.strip_prefix("onchip.") {
                        Some(n) => (Chain::OnChip, n),
                        None => (Chain::OffChip, name.strip_prefix("offchip.").unwrap_or(name)),
                    };
                    if name.is_empty() {
                        return Err("empty stage name".into());
                    }
                    let stage = Stage {
                        name: name.to_string(),
                        chain,
                        reading: r,
                    };
                    match b.stages.iter_mut().find(|s| s.name == stage.name && s.chain == chain) {
                        Some(s) => *s = stage,
                        None => b.stages.push(stage),
                    }
                } else if let Some(q) = key.strip_prefix("expect.") {
                    if !EXPECTABLE.contains(&q) {
                        return Ok(false);
                    }
                    let r = reading(raw, true)?;
                    match b.expect.iter_mut().find(|(k, _)| k == q) {
                        Some(e) => e.1 = r,
                        None => b.expect.push((q.to_string(), r)),
                    }
                } else {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Cross-field checks that single assignments cannot make.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, msg: String| ConfigError::Invalid { key: key.into(), msg };
        self.geometry.validate().map_err(|e| invalid("geometry", e.to_string()))?;
        self.materials.validate().map_err(|e| invalid("materials", e.to_string()))?;
        if self.taper.w_tip_nm >= self.taper.w_start_nm {
            return Err(invalid(
                "taper.w_tip_nm",
                format!("tip width {} must be below start width {}", self.taper.w_tip_nm, self.taper.w_start_nm),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readings_keep_their_last_digit() {
        let r = parse_reading("82.1 % ± 1.8 %").unwrap();
        assert_eq!((r.value, r.sigma), (0.821, 0.018));
        assert!((r.last_digit - 0.001).abs() < 1e-15);
        let r = parse_reading("8.24 +- 1.7").unwrap();
        assert_eq!((r.value, r.sigma), (8.24, 1.7));
        assert!((r.last_digit - 0.01).abs() < 1e-15);
        assert_eq!(parse_reading("76").unwrap().last_digit, 1.0);
        assert!(parse_reading("1.0 ± -0.1").is_err());
        assert!(parse_reading("abc").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("geometry.width_nm = 200\n\nbogus = 1\n", Path::new("a.cfg")).unwrap_err();
        assert_eq!(e.to_string(), "a.cfg:3: unknown key `bogus`");
        let e = c.apply_text("# ok\ngeometry.gap_nm = -1\n", Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().starts_with("a.cfg:2: geometry.gap_nm:"), "{e}");
        let e = c.apply_text("just words\n", Path::new("a.cfg")).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { .. }));
        assert!(c.apply_text("expect.nonsense = 1\n", Path::new("a.cfg")).is_err());
    }

    #[test]
    fn flags_win_over_the_file() {
        let mut c = RunConfig::default();
        c.apply_text("geometry.width_nm = 200\nstage.detector = 0.8 ± 0.05\n", Path::new("a.cfg")).unwrap();
        c.set_flag("geometry.width_nm", "250", "--width").unwrap();
        c.set_flag("stage.detector", "0.7", "--set").unwrap();
        assert_eq!(c.geometry.wg_width_nm, 250.0);
        assert_eq!(c.budget.stages.len(), 1);
        assert_eq!(c.budget.stages[0].reading.value, 0.7);
        assert_eq!(c.provenance.overridden, ["geometry.width_nm", "stage.detector"]);
        let e = c.set_flag("geometry.width_nm", "-5", "--width").unwrap_err();
        assert_eq!(e.to_string(), "--width: geometry.width_nm: must be positive, got -5");
    }

    #[test]
    fn stages_split_into_chains_in_file_order() {
        let mut c = RunConfig::default();
        c.apply_text(
            "stage.fiber = 0.821\nstage.onchip.beta = 0.91 ± 0.01\nstage.offchip.detector = 80.5 %\n",
            Path::new("a.cfg"),
        )
        .unwrap();
        let names: Vec<_> = c.budget.stages.iter().map(|s| (s.name.as_str(), s.chain)).collect();
        assert_eq!(names, [("fiber", Chain::OffChip), ("beta", Chain::OnChip), ("detector", Chain::OffChip)]);
        assert!(c.apply_text("stage.x = 1.2\n", Path::new("a.cfg")).is_err());
    }
}
