//! Efficiency-chain arithmetic with first-order uncertainty propagation.
//!
//! Stages are treated as independent, so relative sigmas of a product add in
//! quadrature. Every sigma is a one-standard-deviation absolute value.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BudgetError {
    #[error("{label}: value and sigma must be finite")]
    NonFinite { label: String },
    #[error("{label}: negative sigma {sigma}")]
    NegativeSigma { label: String, sigma: f64 },
    #[error("{label}: efficiency {value} outside [0, 1]")]
    OutOfRange { label: String, value: f64 },
    #[error("{label}: negative power {value}")]
    NegativePower { label: String, value: f64 },
    #[error("input power must be positive, got {0}")]
    NonPositiveInput(f64),
    #[error("beam-splitter efficiency {0} outside (0, 1]")]
    BadSplitter(f64),
    #[error("fiber transmission {0} outside (0, 1]")]
    NonPositiveTransmission(f64),
    #[error("g2(0) = {0} leaves no single-photon content")]
    NoSinglePhotonContent(f64),
    #[error("rate {0} must be non-negative")]
    NegativeRate(f64),
    #[error("efficiency chain is empty")]
    EmptyChain,
    #[error("off-chip product must be in (0, 1], got {0}")]
    BadProduct(f64),
    #[error("repetition rate must be positive, got {0}")]
    BadRepRate(f64),
    #[error("reference rate {gamma_ref} is not below the total rate {gamma_total}")]
    NonPhysicalBeta { gamma_total: f64, gamma_ref: f64 },
}

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
    pub label: String,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Result<Self, BudgetError> {
        Self::labelled("", value, sigma)
    }

    pub fn labelled(label: &str, value: f64, sigma: f64) -> Result<Self, BudgetError> {
        if !value.is_finite() || !sigma.is_finite() {
            return Err(BudgetError::NonFinite { label: label.to_string() });
        }
        if sigma < 0.0 {
            return Err(BudgetError::NegativeSigma {
                label: label.to_string(),
                sigma,
            });
        }
        Ok(Self {
            value,
            sigma,
            label: label.to_string(),
        })
    }

    /// Zero uncertainty.
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            sigma: 0.0,
            label: String::new(),
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// `σ/|v|`, infinite for a zero value with nonzero sigma.
    pub fn relative(&self) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            self.sigma / self.value.abs()
        }
    }

    fn check_efficiency(&self) -> Result<(), BudgetError> {
        if (0.0..=1.0).contains(&self.value) {
            Ok(())
        } else {
            Err(BudgetError::OutOfRange {
                label: self.label.clone(),
                value: self.value,
            })
        }
    }
}

/// Ordered stages and their product.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyChain {
    pub stages: Vec<Measured>,
    pub product: Measured,
}

/// Product of efficiencies in `[0, 1]`. The sigma is
/// `√Σ (σ_i·∏_{j≠i} v_j)²`, which equals the quadrature of relative sigmas
/// when no stage is zero.
pub fn chain(stages: &[Measured]) -> Result<EfficiencyChain, BudgetError> {
    if stages.is_empty() {
        return Err(BudgetError::EmptyChain);
    }
    for s in stages {
        s.check_efficiency()?;
    }
    let value = stages.iter().map(|s| s.value).product();
    let var: f64 = (0..stages.len())
        .map(|i| {
            let others: f64 = stages.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s.value).product();
            let d = stages[i].sigma * others;
            d * d
        })
        .sum();
    Ok(EfficiencyChain {
        stages: stages.to_vec(),
        product: Measured {
            value,
            sigma: math::sqrt(var),
            label: "product".to_string(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaCf {
    pub eta_cf: Measured,
    /// `P_R/(P_I·η_FBS) > 1`: the reflector would need gain.
    pub unphysical: bool,
}

/// `η_CF = √(P_R/(P_I·η_FBS))` from a round trip off an on-chip reflector.
pub fn extract_eta_cf(p_r: &Measured, p_i: &Measured, eta_fbs: &Measured) -> Result<EtaCf, BudgetError> {
    for p in [p_r, p_i] {
        if p.value < 0.0 {
            return Err(BudgetError::NegativePower {
                label: p.label.clone(),
                value: p.value,
            });
        }
    }
    if !(p_i.value > 0.0) {
        return Err(BudgetError::NonPositiveInput(p_i.value));
    }
    if !(eta_fbs.value > 0.0 && eta_fbs.value <= 1.0) {
        return Err(BudgetError::BadSplitter(eta_fbs.value));
    }
    let den = p_i.value * eta_fbs.value;
    let ratio = p_r.value / den;
    let value = math::sqrt(ratio);
    let sigma = if p_r.value > 0.0 {
        0.5 * value * math::sqrt(sq(p_r.relative()) + sq(p_i.relative()) + sq(eta_fbs.relative()))
    } else {
        // the derivative diverges at zero; report the one-sigma excursion
        math::sqrt(p_r.sigma / den)
    };
    Ok(EtaCf {
        eta_cf: Measured {
            value,
            sigma,
            label: "eta_cf".to_string(),
        },
        unphysical: ratio > 1.0,
    })
}

/// One pass through a fiber whose round-trip transmission is `T`, assuming
/// symmetric losses.
pub fn one_way_fiber(t_total: &Measured) -> Result<Measured, BudgetError> {
    if !(t_total.value > 0.0 && t_total.value <= 1.0) {
        return Err(BudgetError::NonPositiveTransmission(t_total.value));
    }
    let value = math::sqrt(t_total.value);
    Ok(Measured {
        value,
        sigma: t_total.sigma / (2.0 * value),
        label: "one-way fiber".to_string(),
    })
}

/// `Γ·√(1 − g²(0))`, the rate with a Poissonian background removed.
pub fn pure_single_photon_rate(rate: &Measured, g2_zero: &Measured) -> Result<Measured, BudgetError> {
    if rate.value < 0.0 {
        return Err(BudgetError::NegativeRate(rate.value));
    }
    if !(g2_zero.value < 1.0) {
        return Err(BudgetError::NoSinglePhotonContent(g2_zero.value));
    }
    if g2_zero.value < 0.0 {
        return Err(BudgetError::OutOfRange {
            label: g2_zero.label.clone(),
            value: g2_zero.value,
        });
    }
    let root = math::sqrt(1.0 - g2_zero.value);
    let value = rate.value * root;
    let sigma = math::sqrt(sq(rate.sigma * root) + sq(rate.value * g2_zero.sigma / (2.0 * root)));
    Ok(Measured {
        value,
        sigma,
        label: "single-photon rate".to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceEfficiency {
    /// Single photons entering the fiber, same unit as the input rate.
    pub fiber_rate: Measured,
    /// Per-pulse probability of a photon in the fiber.
    pub efficiency: Measured,
}

/// Divides out the off-chip chain and relates the result to the pump
/// repetition rate (same unit as `rate_sp`).
pub fn source_efficiency(
    rate_sp: &Measured,
    offchip: &EfficiencyChain,
    rep_rate: f64,
) -> Result<SourceEfficiency, BudgetError> {
    if !(rep_rate > 0.0) || !rep_rate.is_finite() {
        return Err(BudgetError::BadRepRate(rep_rate));
    }
    if rate_sp.value < 0.0 {
        return Err(BudgetError::NegativeRate(rate_sp.value));
    }
    let p = &offchip.product;
    if !(p.value > 0.0 && p.value <= 1.0) {
        return Err(BudgetError::BadProduct(p.value));
    }
    let value = rate_sp.value / p.value;
    let sigma = math::sqrt(sq(rate_sp.sigma / p.value) + sq(value * p.relative()));
    Ok(SourceEfficiency {
        fiber_rate: Measured {
            value,
            sigma,
            label: "fiber rate".to_string(),
        },
        efficiency: Measured {
            value: value / rep_rate,
            sigma: sigma / rep_rate,
            label: "source efficiency".to_string(),
        },
    })
}

/// `rep_rate·on-chip·η_CF·off-chip`.
pub fn expected_detector_rate(
    onchip: &EfficiencyChain,
    eta_cf: &Measured,
    offchip: &EfficiencyChain,
    rep_rate: f64,
) -> Result<Measured, BudgetError> {
    if !(rep_rate > 0.0) || !rep_rate.is_finite() {
        return Err(BudgetError::BadRepRate(rep_rate));
    }
    let all = chain(&[onchip.product.clone(), eta_cf.clone(), offchip.product.clone()])?;
    Ok(Measured {
        value: rep_rate * all.product.value,
        sigma: rep_rate * all.product.sigma,
        label: "expected detector rate".to_string(),
    })
}

/// `β = 1 − γ_ref/γ_total`, with `γ_ref` the decay rate into everything but
/// the guided mode.
pub fn beta_factor(gamma_total: &Measured, gamma_ref: &Measured) -> Result<Measured, BudgetError> {
    let (t, r) = (gamma_total.value, gamma_ref.value);
    if !(r > 0.0 && r < t) {
        return Err(BudgetError::NonPhysicalBeta {
            gamma_total: t,
            gamma_ref: r,
        });
    }
    Ok(Measured {
        value: 1.0 - r / t,
        sigma: math::sqrt(sq(gamma_ref.sigma / t) + sq(r * gamma_total.sigma / (t * t))),
        label: "beta".to_string(),
    })
}

fn sq(x: f64) -> f64 {
    x * x
}
