use serde::{Deserialize, Serialize};

use super::Panel;
use crate::error::{Error, Result};
use crate::numerics::{nearest_rank, sorted_copy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorMode {
    /// Rows outside the band are removed.
    Drop,
    /// Wages outside the band are set to the nearest bound.
    Winsorize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleRules {
    pub wage_trim_upper: f64,
    pub wage_trim_lower: f64,
    pub mode: CensorMode,
}

impl Default for SampleRules {
    fn default() -> Self {
        Self {
            wage_trim_upper: 0.9975,
            wage_trim_lower: 0.0025,
            mode: CensorMode::Drop,
        }
    }
}

/// Monthly-wage bounds (nearest-rank quantiles of the positive wages).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WageBand {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReport {
    pub dropped_nonpositive: usize,
    pub dropped_lower: usize,
    pub dropped_upper: usize,
    pub winsorized: usize,
    pub band: WageBand,
}

/// Drops nonpositive wages, then censors the wage distribution at the rule's
/// quantiles. The band is computed on the first application and stored on the
/// panel; later applications reuse it, so the rules are idempotent.
pub fn apply_sample_rules(panel: &Panel, rules: &SampleRules) -> Result<(Panel, SampleReport)> {
    if panel.is_empty() {
        return Err(Error::EmptyResult("sample rules applied to an empty panel".into()));
    }
    let SampleRules {
        wage_trim_upper: hi_q,
        wage_trim_lower: lo_q,
        mode,
    } = *rules;
    if !(0.0 <= lo_q && lo_q < hi_q && hi_q <= 1.0) {
        return Err(Error::domain(format!("invalid wage quantiles ({lo_q}, {hi_q})")));
    }

    let positive: Vec<_> = panel
        .observations()
        .iter()
        .filter(|o| o.monthly_wage > 0.0)
        .cloned()
        .collect();
    let dropped_nonpositive = panel.len() - positive.len();
    if positive.is_empty() {
        return Err(Error::EmptyResult("no positive wages".into()));
    }

    let band = match panel.wage_band {
        Some(b) => b,
        None => {
            let wages: Vec<f64> = positive.iter().map(|o| o.monthly_wage).collect();
            let sorted = sorted_copy(&wages);
            WageBand {
                lower: nearest_rank(&sorted, lo_q),
                upper: nearest_rank(&sorted, hi_q),
            }
        }
    };

    let mut report = SampleReport {
        dropped_nonpositive,
        dropped_lower: 0,
        dropped_upper: 0,
        winsorized: 0,
        band,
    };
    let mut kept = Vec::with_capacity(positive.len());
    for mut o in positive {
        let below = o.monthly_wage < band.lower;
        let above = o.monthly_wage > band.upper;
        match (mode, below, above) {
            (CensorMode::Drop, true, _) => report.dropped_lower += 1,
            (CensorMode::Drop, _, true) => report.dropped_upper += 1,
            (CensorMode::Winsorize, true, _) => {
                o.monthly_wage = band.lower;
                report.winsorized += 1;
                kept.push(o);
            }
            (CensorMode::Winsorize, _, true) => {
                o.monthly_wage = band.upper;
                report.winsorized += 1;
                kept.push(o);
            }
            _ => kept.push(o),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyResult("all rows removed by sample rules".into()));
    }
    let mut out = panel.with_observations(kept);
    out.wage_band = Some(band);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::test_support::obs;
    use std::collections::BTreeMap;

    fn panel_from_wages(wages: &[f64]) -> Panel {
        let rows = wages
            .iter()
            .enumerate()
            .map(|(i, &w)| obs(&format!("W{i:05}"), 2010, "RR", "m", w))
            .collect();
        Panel::new(rows, "RR", 2014, BTreeMap::new()).unwrap()
    }

    #[test]
    fn zero_wage_row_dropped() {
        let p = panel_from_wages(&[0.0, 1000.0, 1200.0, 1500.0]);
        let rules = SampleRules {
            wage_trim_lower: 0.0,
            wage_trim_upper: 1.0,
            ..Default::default()
        };
        let (out, rep) = apply_sample_rules(&p, &rules).unwrap();
        assert_eq!(rep.dropped_nonpositive, 1);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn uniform_wages_match_sort_oracle() {
        // Wages are a shuffled 1..=10_000 grid so ranks are unambiguous.
        let n = 10_000usize;
        let wages: Vec<f64> = (0..n).map(|i| ((i * 7919) % n + 1) as f64).collect();
        let p = panel_from_wages(&wages);
        let (out, rep) = apply_sample_rules(&p, &SampleRules::default()).unwrap();

        let mut sorted = wages.clone();
        sorted.sort_by(f64::total_cmp);
        let upper = sorted[(0.9975f64 * n as f64).round() as usize - 1];
        let lower = sorted[(0.0025f64 * n as f64).round() as usize - 1];
        let oracle_upper = wages.iter().filter(|&&w| w > upper).count();
        let oracle_lower = wages.iter().filter(|&&w| w < lower).count();
        assert_eq!((rep.dropped_lower, rep.dropped_upper), (oracle_lower, oracle_upper));
        assert_eq!((oracle_lower, oracle_upper), (24, 25));
        assert_eq!(out.len(), n - 49);
    }

    #[test]
    fn idempotent() {
        let wages: Vec<f64> = (1..=2000).map(|i| (i as f64).powf(1.3)).collect();
        let p = panel_from_wages(&wages);
        for mode in [CensorMode::Drop, CensorMode::Winsorize] {
            let rules = SampleRules { mode, ..Default::default() };
            let (once, _) = apply_sample_rules(&p, &rules).unwrap();
            let (twice, rep) = apply_sample_rules(&once, &rules).unwrap();
            assert_eq!(once, twice);
            assert_eq!(rep.dropped_lower + rep.dropped_upper + rep.winsorized, 0);
        }
    }

    #[test]
    fn panel_inside_band_unchanged() {
        let p = panel_from_wages(&[1000.0, 1000.0, 1000.0]);
        let (out, _) = apply_sample_rules(&p, &SampleRules::default()).unwrap();
        assert_eq!(out.observations(), p.observations());
    }

    #[test]
    fn all_zero_is_empty_error() {
        let p = panel_from_wages(&[0.0, 0.0]);
        assert!(matches!(
            apply_sample_rules(&p, &SampleRules::default()),
            Err(Error::EmptyResult(_))
        ));
    }
}
