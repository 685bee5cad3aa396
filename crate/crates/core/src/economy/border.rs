//! Two-sector border-town economy with log technologies and log-utility households.
//!
//! An informal firm (technology `psi`) and a formal firm (technology `phi`,
//! labor tax `tau`) hire at a common wage. Firm demand for effective labor is
//! `psi / w` and `phi / (w (1 + tau))`. Natives supply `nu` units of labor;
//! refugees, when present, supply `rho` units at productivity `delta_penalty`.
//! Labor clearing then pins the wage in closed form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorderTownParams {
    pub phi: f64,
    pub psi: f64,
    pub tau: f64,
    /// Native consumption preference.
    pub nu: f64,
    /// Refugee consumption preference.
    pub rho: f64,
    /// Refugee productivity and wage penalty.
    pub delta_penalty: f64,
}

impl Default for BorderTownParams {
    fn default() -> Self {
        Self {
            phi: 1.0,
            psi: 1.0,
            tau: 0.25,
            nu: 0.5,
            rho: 0.4,
            delta_penalty: 0.5,
        }
    }
}

impl BorderTownParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        let ok = p.phi > 0.0
            && p.psi > 0.0
            && p.tau >= 0.0
            && p.nu > 0.0
            && p.nu < 1.0
            && p.rho >= 0.0
            && p.rho < 1.0
            && p.delta_penalty > 0.0
            && p.delta_penalty < 1.0
            && [p.phi, p.psi, p.tau].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid border-town parameters: {p:?}")))
        }
    }

    /// Reads `phi`, `psi`, `tau`, `nu`, `rho`, `delta_penalty`; missing keys keep defaults.
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let d = Self::default();
        let get = |k: &str, v: f64| map.get(k).copied().unwrap_or(v);
        let p = Self {
            phi: get("phi", d.phi),
            psi: get("psi", d.psi),
            tau: get("tau", d.tau),
            nu: get("nu", d.nu),
            rho: get("rho", d.rho),
            delta_penalty: get("delta_penalty", d.delta_penalty),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorderTownEquilibrium {
    pub wage: f64,
    pub native_labor: f64,
    pub refugee_labor: f64,
    /// Native plus penalty-weighted refugee labor hired informally. The split
    /// between households is not determined by the model.
    pub effective_informal_labor: f64,
    pub effective_formal_labor: f64,
    pub output_informal: f64,
    pub output_formal: f64,
    pub native_consumption: f64,
    pub refugee_consumption: f64,
    pub transfer: f64,
    /// `Y_i + Y_f - (c_n + c_r)`; reported, not imposed.
    pub goods_market_residual: f64,
}

/// Native-only wage `phi / (nu (1 + tau)) + psi / nu`.
pub fn native_only_wage(p: &BorderTownParams) -> f64 {
    p.phi / (p.nu * (1.0 + p.tau)) + p.psi / p.nu
}

pub fn solve_border_town(params: &BorderTownParams, with_refugees: bool) -> Result<BorderTownEquilibrium> {
    params.validate()?;
    let p = params;
    let w1 = native_only_wage(p);
    let (wage, refugee_labor) = if with_refugees {
        (p.nu / (p.delta_penalty * p.rho + p.nu) * w1, p.rho)
    } else {
        (w1, 0.0)
    };
    let effective_informal_labor = p.psi / wage;
    let effective_formal_labor = p.phi / (wage * (1.0 + p.tau));
    let output_informal = p.psi * effective_informal_labor.ln();
    let output_formal = p.phi * effective_formal_labor.ln();
    let native_consumption = wage * p.nu;
    let refugee_consumption = p.delta_penalty * wage * refugee_labor;
    Ok(BorderTownEquilibrium {
        wage,
        native_labor: p.nu,
        refugee_labor,
        effective_informal_labor,
        effective_formal_labor,
        output_informal,
        output_formal,
        native_consumption,
        refugee_consumption,
        transfer: wage * p.tau,
        goods_market_residual: output_informal + output_formal
            - native_consumption
            - refugee_consumption,
    })
}

impl BorderTownEquilibrium {
    /// Effective labor supplied minus effective labor demanded.
    pub fn labor_clearing_residual(&self, params: &BorderTownParams) -> f64 {
        self.native_labor + params.delta_penalty * self.refugee_labor
            - self.effective_informal_labor
            - self.effective_formal_labor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bisect_root;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(p: &BorderTownParams, refugees: bool) -> f64 {
        let supply = p.nu + if refugees { p.delta_penalty * p.rho } else { 0.0 };
        bisect_root(
            |w| p.psi / w + p.phi / (w * (1.0 + p.tau)) - supply,
            1e-8,
            1e8,
            1e-14,
        )
        .unwrap()
    }

    #[test]
    fn native_only_example() {
        let p = BorderTownParams {
            rho: 0.4,
            delta_penalty: 0.5,
            ..Default::default()
        };
        let eq = solve_border_town(&p, false).unwrap();
        assert!((eq.wage - 3.6).abs() < 1e-14);
        assert!((oracle(&p, false) - 3.6).abs() < 1e-10 * 3.6);
        assert_eq!(eq.refugee_labor, 0.0);
        assert!((eq.native_consumption - 3.6 * 0.5).abs() < 1e-14);
        assert!((eq.transfer - 3.6 * 0.25).abs() < 1e-14);
        assert!(eq.labor_clearing_residual(&p).abs() < 1e-12);
    }

    #[test]
    fn refugee_example() {
        let p = BorderTownParams::default();
        let eq = solve_border_town(&p, true).unwrap();
        assert!((eq.wage - 0.5 / 0.7 * 3.6).abs() < 1e-14);
        assert!((eq.wage - 2.57143).abs() < 1e-5);
        assert!((eq.wage - oracle(&p, true)).abs() < 1e-10 * eq.wage);
        assert!((eq.refugee_consumption - 0.5 * eq.wage * 0.4).abs() < 1e-14);
        assert!(eq.labor_clearing_residual(&p).abs() < 1e-12);
    }

    #[test]
    fn zero_refugee_supply_leaves_wage_unchanged() {
        let p = BorderTownParams {
            rho: 0.0,
            ..Default::default()
        };
        let a = solve_border_town(&p, false).unwrap().wage;
        let b = solve_border_town(&p, true).unwrap().wage;
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            BorderTownParams { phi: 0.0, ..Default::default() },
            BorderTownParams { nu: 1.0, ..Default::default() },
            BorderTownParams { tau: -0.1, ..Default::default() },
            BorderTownParams { delta_penalty: 1.0, ..Default::default() },
        ];
        for p in bad {
            assert!(solve_border_town(&p, true).is_err());
        }
    }

    #[test]
    fn random_draws_match_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = BorderTownParams {
                phi: rng.random_range(0.1..5.0),
                psi: rng.random_range(0.1..5.0),
                tau: rng.random_range(0.0..1.0),
                nu: rng.random_range(0.05..0.95),
                rho: rng.random_range(0.05..0.95),
                delta_penalty: rng.random_range(0.05..0.95),
            };
            let w1 = solve_border_town(&p, false).unwrap();
            let w2 = solve_border_town(&p, true).unwrap();
            assert!((w1.wage - oracle(&p, false)).abs() <= 1e-10 * w1.wage);
            assert!((w2.wage - oracle(&p, true)).abs() <= 1e-10 * w2.wage);
            let ratio = p.nu / (p.delta_penalty * p.rho + p.nu);
            assert!((w2.wage / w1.wage - ratio).abs() <= 1e-12);
            for eq in [w1, w2] {
                assert!(eq.labor_clearing_residual(&p).abs() <= 1e-10 * (p.nu + p.rho));
                assert!((eq.effective_informal_labor - p.psi / eq.wage).abs() <= 1e-10 * eq.effective_informal_labor);
            }
        }
    }

    #[test]
    fn wage_decreases_in_nu_and_tau() {
        let base = BorderTownParams::default();
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let p = BorderTownParams { nu: i as f64 / 100.0, ..base };
            let w = native_only_wage(&p);
            assert!(w < prev);
            prev = w;
        }
        prev = f64::INFINITY;
        for i in 0..100 {
            let p = BorderTownParams { tau: i as f64 / 50.0, ..base };
            let w = native_only_wage(&p);
            assert!(w < prev);
            prev = w;
        }
    }
}
