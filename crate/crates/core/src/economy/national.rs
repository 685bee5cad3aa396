//! National three-input Cobb-Douglas economy: informal labor `I`, formal
//! low-skilled labor `L`, and high-skilled labor `H`.
//!
//! Output is `Y = H^alpha * L^beta * I^(1 - alpha - beta)` and each wage equals
//! the marginal product of its input. An immigration shock scales informal
//! labor by `1 + mu` and formal low-skilled labor by `1 + eta`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for `(1 + delta) = (1 + eta)(1 - s_I) + (1 + mu) s_I`.
pub const SHOCK_CONSISTENCY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomyParams {
    /// Output elasticity of high-skilled labor.
    pub alpha: f64,
    /// Output elasticity of formal low-skilled labor.
    pub beta: f64,
    /// Low-skilled labor endowment.
    pub l_bar: f64,
    /// High-skilled labor endowment.
    pub h_bar: f64,
    /// Baseline fraction of `l_bar` supplied informally.
    pub informal_share: f64,
}

impl Default for EconomyParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.4,
            l_bar: 1.0,
            h_bar: 1.0,
            informal_share: 0.45,
        }
    }
}

impl EconomyParams {
    pub fn new(alpha: f64, beta: f64, l_bar: f64, h_bar: f64, informal_share: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            l_bar,
            h_bar,
            informal_share,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            alpha,
            beta,
            l_bar,
            h_bar,
            informal_share,
        } = *self;
        if !(alpha > 0.0 && beta > 0.0 && alpha + beta < 1.0) {
            return Err(Error::domain(format!(
                "need alpha > 0, beta > 0, alpha + beta < 1 (alpha={alpha}, beta={beta})"
            )));
        }
        if !(l_bar > 0.0 && h_bar > 0.0 && l_bar.is_finite() && h_bar.is_finite()) {
            return Err(Error::domain(format!(
                "labor endowments must be positive (l_bar={l_bar}, h_bar={h_bar})"
            )));
        }
        if !(informal_share > 0.0 && informal_share < 1.0) {
            return Err(Error::domain(format!(
                "informal_share must lie in (0, 1), got {informal_share}"
            )));
        }
        Ok(())
    }

    /// Elasticity of the informal input, `1 - alpha - beta`.
    pub fn informal_elasticity(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    /// Reads `alpha`, `beta`, `l_bar`, `h_bar`, `informal_share`; missing keys keep defaults.
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let d = Self::default();
        let get = |k: &str, v: f64| map.get(k).copied().unwrap_or(v);
        Self::new(
            get("alpha", d.alpha),
            get("beta", d.beta),
            get("l_bar", d.l_bar),
            get("h_bar", d.h_bar),
            get("informal_share", d.informal_share),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationShock {
    /// Immigrant fraction of the low-skilled population.
    pub delta: f64,
    /// Immigrant proportion absorbed into the formal low-skilled sector.
    pub eta: f64,
    /// Immigrant proportion absorbed into the informal sector.
    pub mu: f64,
}

pub fn implied_delta(eta: f64, mu: f64, informal_share: f64) -> f64 {
    (1.0 + eta) * (1.0 - informal_share) + (1.0 + mu) * informal_share - 1.0
}

impl ImmigrationShock {
    /// Shock from sectoral absorption rates; `delta` follows from low-skilled clearing.
    pub fn from_absorption(eta: f64, mu: f64, informal_share: f64) -> Result<Self> {
        let delta = implied_delta(eta, mu, informal_share);
        Self::new(delta, eta, mu, informal_share)
    }

    pub fn new(delta: f64, eta: f64, mu: f64, informal_share: f64) -> Result<Self> {
        let s = Self { delta, eta, mu };
        s.validate(informal_share)?;
        Ok(s)
    }

    /// Reads `eta` and `mu` (default 0.02 and 0.10).
    pub fn from_map(map: &BTreeMap<String, f64>, informal_share: f64) -> Result<Self> {
        let eta = map.get("eta").copied().unwrap_or(0.02);
        let mu = map.get("mu").copied().unwrap_or(0.10);
        Self::from_absorption(eta, mu, informal_share)
    }

    pub fn none() -> Self {
        Self {
            delta: 0.0,
            eta: 0.0,
            mu: 0.0,
        }
    }

    pub fn validate(&self, informal_share: f64) -> Result<()> {
        if !(self.eta >= 0.0 && self.mu >= 0.0) {
            return Err(Error::domain(format!(
                "absorption rates must be nonnegative (eta={}, mu={})",
                self.eta, self.mu
            )));
        }
        // delta = 0 is the no-shock identity.
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        let gap = (1.0 + self.delta) - (1.0 + implied_delta(self.eta, self.mu, informal_share));
        if gap.abs() > SHOCK_CONSISTENCY_TOL {
            return Err(Error::domain(format!(
                "inconsistent shock: delta={} but eta={}, mu={}, s_I={informal_share} imply {}",
                self.delta,
                self.eta,
                self.mu,
                implied_delta(self.eta, self.mu, informal_share)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub output: f64,
    pub labor_informal: f64,
    pub labor_formal_low: f64,
    pub labor_high: f64,
    pub wage_informal: f64,
    pub wage_formal_low: f64,
    pub wage_high: f64,
}

impl EquilibriumState {
    /// Absolute marginal-product residuals `(w_i, w_l, w_h)`.
    pub fn foc_residuals(&self, params: &EconomyParams) -> [f64; 3] {
        [
            self.wage_informal - params.informal_elasticity() * self.output / self.labor_informal,
            self.wage_formal_low - params.beta * self.output / self.labor_formal_low,
            self.wage_high - params.alpha * self.output / self.labor_high,
        ]
    }
}

/// Firm optimum at given input quantities. `price` scales the value of output
/// and therefore every wage; relative quantities are pinned by the FOCs alone.
pub fn solve_at_labor(
    params: &EconomyParams,
    informal: f64,
    formal_low: f64,
    high: f64,
    price: f64,
) -> Result<EquilibriumState> {
    params.validate()?;
    if !(informal > 0.0 && formal_low > 0.0 && high > 0.0) {
        return Err(Error::domain("labor inputs must be positive"));
    }
    if !(price > 0.0 && price.is_finite()) {
        return Err(Error::domain(format!("normalization must be positive, got {price}")));
    }
    let output = price
        * high.powf(params.alpha)
        * formal_low.powf(params.beta)
        * informal.powf(params.informal_elasticity());
    Ok(EquilibriumState {
        output,
        labor_informal: informal,
        labor_formal_low: formal_low,
        labor_high: high,
        wage_informal: params.informal_elasticity() * output / informal,
        wage_formal_low: params.beta * output / formal_low,
        wage_high: params.alpha * output / high,
    })
}

pub fn solve_baseline(params: &EconomyParams, normalization: f64) -> Result<EquilibriumState> {
    params.validate()?;
    let informal = params.informal_share * params.l_bar;
    let formal_low = (1.0 - params.informal_share) * params.l_bar;
    solve_at_labor(params, informal, formal_low, params.h_bar, normalization)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WageMultipliers {
    pub informal: f64,
    pub formal_low: f64,
    pub high: f64,
}

impl WageMultipliers {
    pub fn identity() -> Self {
        Self {
            informal: 1.0,
            formal_low: 1.0,
            high: 1.0,
        }
    }

    pub fn ln(&self) -> (f64, f64, f64) {
        (self.informal.ln(), self.formal_low.ln(), self.high.ln())
    }
}

/// Post-shock wage over pre-shock wage for each input.
pub fn shock_multipliers(params: &EconomyParams, shock: &ImmigrationShock) -> Result<WageMultipliers> {
    params.validate()?;
    shock.validate(params.informal_share)?;
    let (a, b) = (params.alpha, params.beta);
    let formal = 1.0 + shock.eta;
    let informal = 1.0 + shock.mu;
    Ok(WageMultipliers {
        informal: formal.powf(b) / informal.powf(a + b),
        formal_low: informal.powf(1.0 - a - b) / formal.powf(1.0 - b),
        high: formal.powf(b) * informal.powf(1.0 - a - b),
    })
}

/// Equilibrium after the shock, obtained by re-solving the firm problem at the
/// shocked labor allocation.
pub fn solve_shocked(
    params: &EconomyParams,
    shock: &ImmigrationShock,
    normalization: f64,
) -> Result<EquilibriumState> {
    shock.validate(params.informal_share)?;
    let base = solve_baseline(params, normalization)?;
    solve_at_labor(
        params,
        base.labor_informal * (1.0 + shock.mu),
        base.labor_formal_low * (1.0 + shock.eta),
        base.labor_high,
        normalization,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparativeStatics {
    pub baseline: EquilibriumState,
    pub shocked: EquilibriumState,
    pub multipliers: WageMultipliers,
    pub output_ratio: f64,
    pub high_rises: bool,
    pub formal_low_rises: bool,
    pub informal_rises: bool,
    pub mu_exceeds_eta: bool,
    /// Set when `mu > eta` yet the informal multiplier is below one. The
    /// informal multiplier is `(1+eta)^beta / (1+mu)^(alpha+beta)`, which is
    /// always below one once `mu > eta`.
    pub informal_falls_despite_mu_gt_eta: bool,
}

pub fn comparative_statics_report(
    params: &EconomyParams,
    shock: &ImmigrationShock,
    normalization: f64,
) -> Result<ComparativeStatics> {
    let baseline = solve_baseline(params, normalization)?;
    let multipliers = shock_multipliers(params, shock)?;
    let shocked = EquilibriumState {
        output: baseline.output
            * (1.0 + shock.eta).powf(params.beta)
            * (1.0 + shock.mu).powf(params.informal_elasticity()),
        labor_informal: baseline.labor_informal * (1.0 + shock.mu),
        labor_formal_low: baseline.labor_formal_low * (1.0 + shock.eta),
        labor_high: baseline.labor_high,
        wage_informal: baseline.wage_informal * multipliers.informal,
        wage_formal_low: baseline.wage_formal_low * multipliers.formal_low,
        wage_high: baseline.wage_high * multipliers.high,
    };
    let mu_exceeds_eta = shock.mu > shock.eta;
    let informal_rises = multipliers.informal > 1.0;
    Ok(ComparativeStatics {
        output_ratio: shocked.output / baseline.output,
        baseline,
        shocked,
        multipliers,
        high_rises: multipliers.high > 1.0,
        formal_low_rises: multipliers.formal_low > 1.0,
        informal_rises,
        mu_exceeds_eta,
        informal_falls_despite_mu_gt_eta: mu_exceeds_eta && !informal_rises,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormalLowSignScan {
    /// An `alpha` where the formal low-skilled wage rises.
    pub rising_alpha: Option<f64>,
    /// An `alpha` where it falls.
    pub falling_alpha: Option<f64>,
}

/// Scans `alpha` over an interior grid of `(0, 1 - beta)` holding the rest of
/// `params` and the shock fixed, recording the first rising and falling case.
pub fn scan_formal_low_sign(
    params: &EconomyParams,
    shock: &ImmigrationShock,
    steps: usize,
) -> Result<FormalLowSignScan> {
    let mut out = FormalLowSignScan {
        rising_alpha: None,
        falling_alpha: None,
    };
    let upper = 1.0 - params.beta;
    for i in 1..steps {
        let alpha = upper * i as f64 / steps as f64;
        let p = EconomyParams { alpha, ..*params };
        let m = shock_multipliers(&p, shock)?.formal_low;
        if m > 1.0 && out.rising_alpha.is_none() {
            out.rising_alpha = Some(alpha);
        }
        if m < 1.0 && out.falling_alpha.is_none() {
            out.falling_alpha = Some(alpha);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub w_i: f64,
    pub w_l: f64,
    pub w_h: f64,
    pub m_i: f64,
    pub m_l: f64,
    pub m_h: f64,
}

impl ComparativeStatics {
    pub fn rows(&self) -> Vec<ReportRow> {
        let row = |scenario: &str, s: &EquilibriumState, m: WageMultipliers| ReportRow {
            scenario: scenario.to_string(),
            w_i: s.wage_informal,
            w_l: s.wage_formal_low,
            w_h: s.wage_high,
            m_i: m.informal,
            m_l: m.formal_low,
            m_h: m.high,
        };
        vec![
            row("baseline", &self.baseline, WageMultipliers::identity()),
            row("shocked", &self.shocked, self.multipliers),
        ]
    }
}

/// CSV with header `scenario,w_i,w_l,w_h,m_i,m_l,m_h`.
pub fn write_report_csv<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
