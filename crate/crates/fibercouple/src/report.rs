//! Efficiency-budget report in the layout of the source-efficiency table.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use fibercouple_core::budget::{
    beta_factor, chain, expected_detector_rate, pure_single_photon_rate, source_efficiency, EfficiencyChain, Measured,
};

use crate::config::{BudgetSettings, Chain, Reading};
use crate::io::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Percent,
    Mhz,
}

impl Unit {
    fn scale(self) -> f64 {
        match self {
            Unit::Percent => 100.0,
            Unit::Mhz => 1.0,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Unit::Percent => "%",
            Unit::Mhz => "MHz",
        }
    }

    fn decimals(self) -> usize {
        match self {
            Unit::Percent => 1,
            Unit::Mhz => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub key: String,
    pub label: String,
    pub value: Measured,
    pub unit: Unit,
    /// Reference value and whether the computed value agrees with it to its
    /// last written digit.
    pub expected: Option<(Reading, bool)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BudgetReport {
    pub lines: Vec<Line>,
    /// Lines separated by a rule before them.
    pub breaks: Vec<usize>,
}

fn with_digits(v: f64, unit: Unit, digits: usize) -> String {
    format!("{:.*} {}", digits, v * unit.scale(), unit.symbol())
}

fn shown(m: &Measured, unit: Unit, digits: usize) -> String {
    let mut s = with_digits(m.value, unit, digits);
    if m.sigma > 0.0 {
        s.push_str(" ± ");
        s.push_str(&with_digits(m.sigma, unit, digits));
    }
    s
}

fn digits_of(last_digit: f64, unit: Unit) -> usize {
    (-(last_digit * unit.scale()).log10()).round().max(0.0) as usize
}

impl BudgetReport {
    fn push(&mut self, key: &str, label: &str, value: Measured, unit: Unit) {
        self.lines.push(Line {
            key: key.to_string(),
            label: label.to_string(),
            value,
            unit,
            expected: None,
        });
    }

    fn rule(&mut self) {
        self.breaks.push(self.lines.len());
    }

    pub fn get(&self, key: &str) -> Option<&Line> {
        self.lines.iter().find(|l| l.key == key)
    }

    /// Whether every compared line agrees with its reference.
    pub fn all_agree(&self) -> bool {
        self.lines.iter().all(|l| l.expected.is_none_or(|(_, ok)| ok))
    }

    pub fn render(&self) -> String {
        let cells: Vec<(String, String, String)> = self
            .lines
            .iter()
            .map(|l| {
                let exp = match &l.expected {
                    Some((r, ok)) => {
                        let mut text = with_digits(r.value, l.unit, digits_of(r.last_digit, l.unit));
                        if r.sigma > 0.0 {
                            text.push_str(" ± ");
                            text.push_str(&with_digits(r.sigma, l.unit, digits_of(r.sigma_last_digit, l.unit)));
                        }
                        format!("expected {text} ({})", if *ok { "ok" } else { "DEVIATES" })
                    }
                    None => String::new(),
                };
                (l.label.clone(), shown(&l.value, l.unit, l.unit.decimals()), exp)
            })
            .collect();
        let wl = cells.iter().map(|c| c.0.chars().count()).max().unwrap_or(0);
        let wv = cells.iter().map(|c| c.1.chars().count()).max().unwrap_or(0);
        let width = wl + wv + 2;
        let mut s = String::new();
        for (k, (label, value, exp)) in cells.iter().enumerate() {
            if self.breaks.contains(&k) {
                let _ = writeln!(s, "{}", "-".repeat(width));
            }
            let pad_l = wl - label.chars().count();
            let pad_v = wv - value.chars().count();
            let line = format!("{label}{}  {}{value}  {exp}", " ".repeat(pad_l), " ".repeat(pad_v));
            let _ = writeln!(s, "{}", line.trim_end());
        }
        s
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["quantity", "value", "sigma", "unit", "expected", "expected_sigma", "agrees"]);
        for l in &self.lines {
            let unit = match l.unit {
                Unit::Percent => "fraction",
                Unit::Mhz => "MHz",
            };
            let (e, es, ok) = match &l.expected {
                Some((r, ok)) => (r.value.to_string(), r.sigma.to_string(), ok.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            t.push(vec![l.key.clone(), l.value.value.to_string(), l.value.sigma.to_string(), unit.into(), e, es, ok]);
        }
        t
    }
}

fn stage_chain(b: &BudgetSettings, which: Chain) -> Result<Option<EfficiencyChain>> {
    let stages: Vec<Measured> = b.stages.iter().filter(|s| s.chain == which).map(|s| s.reading.measured(&s.name)).collect();
    if stages.is_empty() {
        return Ok(None);
    }
    Ok(Some(chain(&stages)?))
}

fn pretty(name: &str) -> String {
    let s = name.replace('_', " ");
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => s,
    }
}

/// Builds the report. `expected_rate` adds the detector rate predicted from
/// the on-chip chain, `budget.eta_cf` and the off-chip chain.
pub fn budget_report(b: &BudgetSettings, expected_rate: bool) -> Result<BudgetReport> {
    let mut r = BudgetReport::default();
    let reading = |x: &Option<Reading>, label: &str| x.as_ref().map(|v| v.measured(label));

    let snspd = reading(&b.snspd_rate_mhz, "snspd rate");
    let g2 = reading(&b.g2_zero, "g2(0)");
    if let Some(s) = &snspd {
        r.push("snspd_rate_mhz", "SNSPD count rate", s.clone(), Unit::Mhz);
    }
    let formula = match (&snspd, &g2) {
        (Some(s), Some(g)) => Some(pure_single_photon_rate(s, g)?),
        _ => None,
    };
    let given = reading(&b.single_photon_rate_mhz, "single-photon rate");
    let rate_sp = match (given, formula) {
        (Some(v), f) => {
            if let Some(f) = f {
                r.push("single_photon_rate_formula_mhz", "Single-photon rate from g2(0)", f, Unit::Mhz);
            }
            r.push("single_photon_rate_mhz", "Single-photon count rate", v.clone(), Unit::Mhz);
            v
        }
        (None, Some(f)) => {
            r.push("single_photon_rate_mhz", "Single-photon count rate", f.clone(), Unit::Mhz);
            f
        }
        (None, None) => bail!("budget needs budget.single_photon_rate_mhz, or budget.snspd_rate_mhz with budget.g2_zero"),
    };

    let Some(off) = stage_chain(b, Chain::OffChip)? else {
        bail!("budget needs at least one off-chip stage (stage.<name> = value ± sigma)");
    };
    r.rule();
    for s in &off.stages {
        r.push(&format!("stage.{}", s.label), &pretty(&s.label), s.clone(), Unit::Percent);
    }
    r.push("offchip", "Off-chip product", off.product.clone(), Unit::Percent);

    let mut on_stages: Vec<Measured> =
        b.stages.iter().filter(|s| s.chain == Chain::OnChip).map(|s| s.reading.measured(&s.name)).collect();
    if let (Some(t), Some(f)) = (&b.gamma_total_per_ns, &b.gamma_ref_per_ns) {
        if !on_stages.iter().any(|s| s.label == "beta") {
            on_stages.push(beta_factor(&t.measured("gamma total"), &f.measured("gamma ref"))?);
        }
    }
    let on = if on_stages.is_empty() { None } else { Some(chain(&on_stages)?) };
    if let Some(on) = &on {
        r.rule();
        for s in &on.stages {
            r.push(&format!("stage.onchip.{}", s.label), &pretty(&s.label), s.clone(), Unit::Percent);
        }
        r.push("onchip", "On-chip product", on.product.clone(), Unit::Percent);
    }

    let src = source_efficiency(&rate_sp, &off, b.rep_rate_mhz)?;
    r.rule();
    r.push("fiber_rate_mhz", "Single photons in the fiber", src.fiber_rate, Unit::Mhz);
    r.push("source_efficiency", "Source efficiency", src.efficiency, Unit::Percent);

    if expected_rate {
        let Some(on) = &on else {
            bail!("--expected needs on-chip stages (stage.onchip.<name>)");
        };
        let Some(eta) = &b.eta_cf else {
            bail!("--expected needs budget.eta_cf");
        };
        let rate = expected_detector_rate(on, &eta.measured("eta_cf"), &off, b.rep_rate_mhz)?;
        r.push("detector_rate_mhz", "Expected detector rate", rate, Unit::Mhz);
    }

    for (key, reading) in &b.expect {
        if let Some(l) = r.lines.iter_mut().find(|l| l.key == *key) {
            let ok = (l.value.value - reading.value).abs() <= reading.last_digit * (1.0 + 1e-9);
            l.expected = Some((*reading, ok));
        }
    }
    Ok(r)
}
