//! Acceptance suite. Each criterion runs with its tolerance and time budget
//! and reports one PASS/FAIL line on stdout.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use borderlab::dgp::{generate, generate_shock_consistent, Confounding, DgpConfig, EffectProfile};
use borderlab::did::{
    estimate, fit_design, heterogeneity_split, trim_mask, EstimationSpec, ExposureFlag, HeterogeneityDimension,
    Treatment,
};
use borderlab::economy::{shock_multipliers, solve_border_town, BorderTownParams, EconomyParams, ImmigrationShock};
use borderlab::numerics::{log_likelihood, logit_fit, score, wls_solve, WlsProblem};
use borderlab::panel::build_design;
use borderlab::synth::{scm_fit, sdid_estimate, sdid_fit, AggregatePanel, DEFAULT_RIDGE};
use borderlab_cli::{run_pipeline, RunConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

// ---------------------------------------------------------------- 1

/// Wages from first-order conditions of Y = H^a L^b I^(1-a-b).
fn foc_wages(a: f64, b: f64, h: f64, l: f64, i: f64) -> [f64; 3] {
    let y = h.powf(a) * l.powf(b) * i.powf(1.0 - a - b);
    [(1.0 - a - b) * y / i, b * y / l, a * y / h]
}

fn structural_statics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let alpha = rng.random_range(0.05..0.6);
        let beta = rng.random_range(0.05..(0.95 - alpha));
        let s = rng.random_range(0.1..0.9);
        let eta = rng.random_range(0.0..0.2);
        let mu = eta + rng.random_range(1e-4..0.3);
        let (l_bar, h_bar) = (rng.random_range(0.5..5.0), rng.random_range(0.5..5.0));
        let params = EconomyParams::new(alpha, beta, l_bar, h_bar, s).map_err(|e| e.to_string())?;
        let shock = ImmigrationShock::from_absorption(eta, mu, s).map_err(|e| e.to_string())?;
        let m = shock_multipliers(&params, &shock).map_err(|e| e.to_string())?;
        ensure(m.high > 1.0, || format!("draw {k}: m_h = {} <= 1", m.high))?;
        ensure(m.informal < 1.0, || format!("draw {k}: m_i = {} >= 1", m.informal))?;
        let base = foc_wages(alpha, beta, h_bar, (1.0 - s) * l_bar, s * l_bar);
        let shocked = foc_wages(alpha, beta, h_bar, (1.0 - s) * l_bar * (1.0 + eta), s * l_bar * (1.0 + mu));
        for (got, (w1, w0)) in [m.informal, m.formal_low, m.high].iter().zip(shocked.iter().zip(&base)) {
            worst = worst.max(rel(*got, w1 / w0));
        }
    }
    ensure(worst <= 1e-12, || format!("max relative gap to FOC oracle {worst:.2e}"))?;
    Ok(format!("1000 draws, max relative gap {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn border_town() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_w, mut worst_ratio): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let p = BorderTownParams {
            phi: rng.random_range(0.1..5.0),
            psi: rng.random_range(0.1..5.0),
            tau: rng.random_range(0.0..1.0),
            nu: rng.random_range(0.05..0.95),
            rho: rng.random_range(0.05..0.95),
            delta_penalty: rng.random_range(0.05..0.95),
        };
        let w1 = solve_border_town(&p, false).map_err(|e| e.to_string())?.wage;
        let w2 = solve_border_town(&p, true).map_err(|e| e.to_string())?.wage;
        // Labor demand psi/w + phi/(w(1+tau)) against effective supply.
        let excess = |supply: f64| move |w: f64| p.psi / w + p.phi / (w * (1.0 + p.tau)) - supply;
        let o1 = bisect(excess(p.nu), 1e-8, 1e8);
        let o2 = bisect(excess(p.nu + p.delta_penalty * p.rho), 1e-8, 1e8);
        worst_w = worst_w.max(rel(w1, o1)).max(rel(w2, o2));
        worst_ratio = worst_ratio.max((w2 / w1 - p.nu / (p.delta_penalty * p.rho + p.nu)).abs());
    }
    ensure(worst_w <= 1e-10, || format!("wage vs bisection {worst_w:.2e}"))?;
    ensure(worst_ratio <= 1e-12, || format!("ratio gap {worst_ratio:.2e}"))?;
    Ok(format!("1000 draws, wage gap {worst_w:.1e}, ratio gap {worst_ratio:.1e}"))
}

// ---------------------------------------------------------------- 3

struct DenseFit {
    coef: DVector<f64>,
    se: DVector<f64>,
}

/// Least squares with explicit worker and year dummies, and the CR1 sandwich
/// computed from the full dummy design.
fn dense_dummy_fit(y: &DVector<f64>, treat: &DMatrix<f64>, workers: &[String], years: &[i32], clusters: &[String], w: &DVector<f64>) -> DenseFit {
    let n = y.len();
    let wk: Vec<&String> = workers.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let yr: Vec<i32> = years.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let k = treat.ncols();
    let p = k + wk.len() + yr.len() - 1;
    let mut x = DMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..k {
            x[(r, c)] = treat[(r, c)];
        }
        x[(r, k + wk.iter().position(|v| **v == workers[r]).unwrap())] = 1.0;
        let t = yr.iter().position(|v| *v == years[r]).unwrap();
        if t > 0 {
            x[(r, k + wk.len() + t - 1)] = 1.0;
        }
    }
    let sw = w.map(f64::sqrt);
    let xw = DMatrix::from_fn(n, p, |r, c| x[(r, c)] * sw[r]);
    let yw = y.component_mul(&sw);
    let qr = xw.clone().qr();
    let r = qr.r();
    let rank = (0..p).filter(|&j| r[(j, j)].abs() > 1e-10 * xw.column(j).norm()).count();
    assert_eq!(rank, p, "dense dummy design is rank deficient");
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).unwrap();
    let beta = &r_inv * (qr.q().transpose() * &yw);
    let resid = &yw - &xw * &beta;
    let xtx_inv = &r_inv * r_inv.transpose();
    let groups: BTreeSet<&String> = clusters.iter().collect();
    let mut meat = DMatrix::zeros(p, p);
    for g in &groups {
        let mut s = DVector::zeros(p);
        for r in (0..n).filter(|&r| clusters[r] == **g) {
            s += xw.row(r).transpose() * resid[r];
        }
        meat += &s * s.transpose();
    }
    let big_g = groups.len() as f64;
    let factor = big_g / (big_g - 1.0) * (n as f64 - 1.0) / (n as f64 - rank as f64);
    let v = &xtx_inv * meat * &xtx_inv * factor;
    DenseFit {
        coef: beta.rows(0, k).into_owned(),
        se: DVector::from_fn(k, |c, _| v[(c, c)].sqrt()),
    }
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut coef_gap, mut se_gap): (f64, f64) = (0.0, 0.0);
    let mut fits = 0;
    for inst in 0..20 {
        let cfg = DgpConfig {
            n_workers_treated: rng.random_range(5..=20),
            n_workers_control: rng.random_range(10..=30),
            seed: 1000 + inst,
            ..Default::default()
        };
        let (panel, _) = generate(&cfg).map_err(|e| e.to_string())?;
        let obs = panel.observations();
        let workers: Vec<String> = obs.iter().map(|o| o.worker_id.clone()).collect();
        let years: Vec<i32> = obs.iter().map(|o| o.year).collect();
        let clusters: Vec<String> = obs.iter().map(|o| o.municipality_key()).collect();
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.log_wage()));
        let ones = DVector::from_element(obs.len(), 1.0);
        let specs = [
            EstimationSpec::twfe(Treatment::Binary),
            EstimationSpec::twfe(Treatment::Continuous),
            EstimationSpec::event_study(2013),
        ];
        for spec in &specs {
            let design = build_design(&panel, spec).map_err(|e| e.to_string())?;
            let ours = estimate(&panel, spec).map_err(|e| e.to_string())?;
            let treat = design.regressors.clone();
            let dense = dense_dummy_fit(&y, &treat, &workers, &years, &clusters, &ones);
            for (c, name) in design.names.iter().enumerate() {
                coef_gap = coef_gap.max((ours.coef[name] - dense.coef[c]).abs());
                se_gap = se_gap.max((ours.se[name] - dense.se[c]).abs());
            }
            fits += 1;
        }
        // Weighted demeaning against dense WLS with the same weights.
        let mut design = build_design(&panel, &specs[0]).map_err(|e| e.to_string())?;
        let w = DVector::from_fn(obs.len(), |_, _| rng.random_range(0.2..3.0));
        design.weights = w.clone();
        let ours = fit_design(&design, &specs[0]).map_err(|e| e.to_string())?;
        let dense = dense_dummy_fit(&y, &design.regressors, &workers, &years, &clusters, &w);
        coef_gap = coef_gap.max((ours.beta() - dense.coef[0]).abs());
        se_gap = se_gap.max((ours.beta_se() - dense.se[0]).abs());
        fits += 1;
    }
    ensure(coef_gap <= 1e-8, || format!("coefficient gap {coef_gap:.2e}"))?;
    ensure(se_gap <= 1e-10, || format!("standard error gap {se_gap:.2e}"))?;
    Ok(format!("{fits} fits on 20 instances, coef gap {coef_gap:.1e}, se gap {se_gap:.1e}"))
}

// ---------------------------------------------------------------- 4

fn dr_round_trip() -> Check {
    const REPS: u64 = 200;
    let mut dr = Vec::new();
    let mut wins = 0;
    for r in 0..REPS {
        let cfg = DgpConfig {
            n_workers_treated: 1000,
            n_workers_control: 1000,
            effect_profile: EffectProfile::Flat,
            cohort_multipliers: [1.0, 1.0, 1.0],
            confounding: Some(Confounding::default()),
            seed: 40_000 + r,
            ..Default::default()
        };
        let (panel, _) = generate(&cfg).map_err(|e| e.to_string())?;
        let d = estimate(&panel, &EstimationSpec::doubly_robust(Treatment::Binary)).map_err(|e| e.to_string())?;
        let t = estimate(&panel, &EstimationSpec::twfe(Treatment::Binary)).map_err(|e| e.to_string())?;
        if (d.beta() - 0.022).abs() < (t.beta() - 0.022).abs() {
            wins += 1;
        }
        dr.push(d.beta());
    }
    let (m, sd) = mean_sd(&dr);
    let share = wins as f64 / REPS as f64;
    ensure((m - 0.022).abs() <= 0.003, || format!("mean DR {m:.5} (sd {sd:.4})"))?;
    ensure(share >= 0.95, || format!("DR beats TWFE in {share:.3} of replications"))?;
    Ok(format!("mean DR {m:.5} (sd {sd:.4}), DR closer in {wins}/{REPS}"))
}

// ---------------------------------------------------------------- 5

fn noiseless(true_effect: f64) -> DgpConfig {
    DgpConfig {
        n_workers_treated: 200,
        n_workers_control: 400,
        noise_sd: 0.0,
        true_effect,
        cohort_multipliers: [1.0, 1.0, 1.0],
        exposure_multipliers: [1.0, 1.0],
        ..Default::default()
    }
}

fn event_study_paths() -> Check {
    let spec = EstimationSpec::event_study(2013);
    let (panel, _) = generate(&noiseless(0.0)).map_err(|e| e.to_string())?;
    let flat = estimate(&panel, &spec).map_err(|e| e.to_string())?;
    let pre_max = flat
        .event_years
        .iter()
        .flatten()
        .filter(|e| e.year < 2014)
        .map(|e| e.coef.abs())
        .fold(0.0, f64::max);
    ensure(pre_max <= 1e-10, || format!("pre-period coefficient {pre_max:.2e} under parallel trends"))?;

    let cfg = noiseless(0.022);
    let (panel, _) = generate(&cfg).map_err(|e| e.to_string())?;
    let ramp = estimate(&panel, &spec).map_err(|e| e.to_string())?;
    let mut gap: f64 = 0.0;
    let mut post = Vec::new();
    for e in ramp.event_years.iter().flatten() {
        let target = cfg.true_effect * (cfg.profile_weight(e.year) - cfg.profile_weight(2013));
        gap = gap.max((e.coef - target).abs());
        if e.year >= 2014 {
            post.push(e.coef);
        }
    }
    ensure(gap <= 1e-10, || format!("ramp path gap {gap:.2e}"))?;
    ensure(post.windows(2).all(|w| w[1] > w[0]), || format!("post path not increasing: {post:?}"))?;
    Ok(format!("pre max {pre_max:.1e}, ramp gap {gap:.1e}, post path increasing"))
}

// ---------------------------------------------------------------- 6

fn heterogeneity_signs() -> Check {
    const REPS: u64 = 40;
    const Z: f64 = 2.576;
    let params = EconomyParams::default();
    let shock = ImmigrationShock::from_absorption(0.02, 0.10, params.informal_share).map_err(|e| e.to_string())?;
    let cohorts = ["less_than_hs", "high_school", "college", "interaction"];
    let mut est: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut bias: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut truth_mean: BTreeMap<&str, f64> = BTreeMap::new();
    for r in 0..REPS {
        let cfg = DgpConfig {
            informal_share: 0.45,
            seed: 60_000 + r,
            ..Default::default()
        };
        let (panel, truth) = generate_shock_consistent(&cfg, &params, &shock).map_err(|e| e.to_string())?;
        let formal = panel.filter(|o| !o.informal);
        let informal = panel.filter(|o| o.informal);
        let split = heterogeneity_split(
            &formal,
            &EstimationSpec::doubly_robust(Treatment::Binary),
            HeterogeneityDimension::Education,
        )
        .map_err(|e| e.to_string())?;
        let pooled = estimate(&informal, &EstimationSpec::pooled_ols(Some(ExposureFlag::Activity))).map_err(|e| e.to_string())?;
        for c in cohorts {
            let (e, t) = if c == "interaction" {
                (pooled.coef["treat_x_exposed_activity"], truth.cohort_effects["informal_exposed_activity_gap"])
            } else {
                (split[c].beta(), truth.cohort_effects[c])
            };
            est.entry(c).or_default().push(e);
            bias.entry(c).or_default().push(e - t);
            *truth_mean.entry(c).or_default() += t / REPS as f64;
        }
    }
    let m: BTreeMap<&str, f64> = est.iter().map(|(k, v)| (*k, mean_sd(v).0)).collect();
    ensure(m["college"] < 0.0, || format!("college mean {:.4} not negative", m["college"]))?;
    ensure(m["high_school"] > 0.0, || format!("high school mean {:.4} not positive", m["high_school"]))?;
    ensure(m["less_than_hs"] > m["high_school"] && m["less_than_hs"] > 0.0, || {
        format!("low-education mean {:.4} not the largest positive", m["less_than_hs"])
    })?;
    ensure(m["interaction"] < 0.0, || format!("informal interaction mean {:.4} not negative", m["interaction"]))?;
    let mut parts = Vec::new();
    for c in cohorts {
        let (b, sd) = mean_sd(&bias[c]);
        let half = Z * sd / (REPS as f64).sqrt();
        ensure(b.abs() <= half, || format!("{c}: mean bias {b:.4} outside +/-{half:.4}"))?;
        parts.push(format!("{c} {:.4} vs {:.4}", m[c], truth_mean[c]));
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------- 7

fn aggregate(rows: &[Vec<f64>], treatment_year: i32) -> AggregatePanel {
    let names: Vec<String> = (0..rows.len())
        .map(|i| if i + 1 == rows.len() { "TR".to_string() } else { format!("D{i}") })
        .collect();
    let years: Vec<i32> = (0..rows[0].len() as i32).map(|t| 2008 + t).collect();
    let m = DMatrix::from_fn(rows.len(), years.len(), |i, t| rows[i][t]);
    AggregatePanel::new(names, years, m, "TR", treatment_year).unwrap()
}

/// Best weight on the first of two donors over a 1e-4 grid.
fn grid_weight(a: &[f64], b: &[f64], target: &[f64]) -> f64 {
    (0..=10_000)
        .map(|k| k as f64 / 10_000.0)
        .map(|w| {
            let loss: f64 = (0..target.len()).map(|t| (target[t] - w * a[t] - (1.0 - w) * b[t]).powi(2)).sum();
            (w, loss)
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
        .0
}

fn synthetic_control() -> Check {
    let exact = aggregate(
        &[
            vec![1.0, 1.2, 1.1, 1.3, 1.5, 1.6],
            vec![2.0, 1.0, 3.0, 2.2, 1.0, 1.0],
            vec![1.0, 1.2, 1.1, 1.3, 1.8, 1.9],
        ],
        2012,
    );
    let s = scm_fit(&exact).map_err(|e| e.to_string())?;
    ensure((s.weight("D0") - 1.0).abs() <= 1e-9 && s.mspe <= 1e-18, || {
        format!("exact match: weight {} mspe {:.2e}", s.weight("D0"), s.mspe)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = vec![(
        vec![1.0, 1.1, 1.3, 1.2, 1.4],
        vec![2.0, 2.1, 2.3, 2.2, 2.4],
        vec![1.5, 1.6, 1.8, 1.7, 1.9],
    )];
    for _ in 0..20 {
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0)).collect();
        let w = rng.random_range(0.0..1.0);
        let t: Vec<f64> = (0..5).map(|i| w * a[i] + (1.0 - w) * b[i] + rng.random_range(-0.05..0.05)).collect();
        cases.push((a, b, t));
    }
    let mut grid_gap: f64 = 0.0;
    for (a, b, t) in &cases {
        let agg = aggregate(&[a.clone(), b.clone(), t.clone()], 2012);
        let s = scm_fit(&agg).map_err(|e| e.to_string())?;
        grid_gap = grid_gap.max((s.weight("D0") - grid_weight(&a[..4], &b[..4], &t[..4])).abs());
    }
    let mid = scm_fit(&aggregate(&[cases[0].0.clone(), cases[0].1.clone(), cases[0].2.clone()], 2012))
        .map_err(|e| e.to_string())?;
    ensure((mid.weight("D0") - 0.5).abs() <= 1e-4, || format!("midpoint weight {}", mid.weight("D0")))?;
    ensure(grid_gap <= 1e-4, || format!("grid oracle gap {grid_gap:.2e}"))?;

    let mut shift_gap: f64 = 0.0;
    let mut two_by_two_gap: f64 = 0.0;
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..7).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
        let agg = aggregate(&rows, 2012);
        let base = sdid_fit(&agg, DEFAULT_RIDGE).map_err(|e| e.to_string())?.effect;
        for unit in 0..4 {
            let moved = sdid_fit(&agg.shifted(unit, rng.random_range(-5.0..5.0)), DEFAULT_RIDGE)
                .map_err(|e| e.to_string())?
                .effect;
            shift_gap = shift_gap.max((moved - base).abs());
        }
        let uniform = sdid_estimate(&agg, &DVector::from_element(3, 1.0 / 3.0), &DVector::from_element(4, 0.25))
            .map_err(|e| e.to_string())?;
        let mean = |r: &[f64], a: usize, b: usize| r[a..b].iter().sum::<f64>() / (b - a) as f64;
        let change = |r: &Vec<f64>| mean(r, 4, 7) - mean(r, 0, 4);
        let did = change(&rows[3]) - (change(&rows[0]) + change(&rows[1]) + change(&rows[2])) / 3.0;
        two_by_two_gap = two_by_two_gap.max((uniform - did).abs());
    }
    ensure(shift_gap <= 1e-8, || format!("SDID shift gap {shift_gap:.2e}"))?;
    ensure(two_by_two_gap <= 1e-14, || format!("uniform SDID vs 2x2 gap {two_by_two_gap:.2e}"))?;
    Ok(format!(
        "grid gap {grid_gap:.1e}, shift gap {shift_gap:.1e}, 2x2 gap {two_by_two_gap:.1e}"
    ))
}

// ---------------------------------------------------------------- 8

fn numerics_kernels() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut intercept_gap: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(20..400);
        let p = rng.random_range(0.05..0.95);
        let z: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(p)))).collect();
        let k = z.iter().sum::<f64>();
        if k == 0.0 || k == n as f64 {
            continue;
        }
        let fit = logit_fit(&DMatrix::from_element(n, 1, 1.0), &z, 1e-10, 200).map_err(|e| e.to_string())?;
        intercept_gap = intercept_gap.max((fit.coefficients[0] - (k / (n as f64 - k)).ln()).abs());
    }
    ensure(intercept_gap <= 1e-10, || format!("intercept-only gap {intercept_gap:.2e}"))?;

    let mut grad_gap: f64 = 0.0;
    for _ in 0..100 {
        let (n, k) = (rng.random_range(10..60), rng.random_range(1..5));
        let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0));
        let z: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let theta = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let g = score(&x, &z, &theta);
        for j in 0..k {
            let h = 1e-5;
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (log_likelihood(&x, &z, &up) - log_likelihood(&x, &z, &down)) / (2.0 * h);
            grad_gap = grad_gap.max((g[j] - fd).abs() / g[j].abs().max(1.0));
        }
    }
    ensure(grad_gap <= 1e-6, || format!("gradient vs finite differences {grad_gap:.2e}"))?;

    let mut wls_gap: f64 = 0.0;
    for _ in 0..50 {
        let (n, k) = (rng.random_range(10..80), rng.random_range(1..6));
        let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let w = DVector::from_fn(n, |_, _| rng.random_range(0.1..3.0));
        let fit = wls_solve(&WlsProblem::new(x.clone(), y.clone(), w.clone()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let wx = DMatrix::from_fn(n, k, |r, c| x[(r, c)] * w[r]);
        let closed = (wx.transpose() * &x).try_inverse().unwrap() * (wx.transpose() * &y);
        wls_gap = wls_gap.max((fit.coefficients - closed).amax());
    }
    ensure(wls_gap <= 1e-10, || format!("WLS vs closed form {wls_gap:.2e}"))?;
    Ok(format!("intercept gap {intercept_gap:.1e}, gradient gap {grad_gap:.1e}, WLS gap {wls_gap:.1e}"))
}

// ---------------------------------------------------------------- 9

fn pipeline_determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::default();
    cfg.apply_seed(Some(20140101));
    let mut manifests = Vec::new();
    for (run, threads) in [1, 1, 4].into_iter().enumerate() {
        let dir = root.path().join(format!("run{run}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let report = pool.install(|| run_pipeline(&cfg, &dir)).map_err(|e| format!("{e:#}"))?;
        ensure(report.manifest.complete, || format!("pipeline incomplete: {:?}", report.failure()))?;
        manifests.push(std::fs::read(dir.join("manifest.json")).map_err(|e| e.to_string())?);
    }
    ensure(manifests[0] == manifests[1], || "same seed, different manifests".into())?;
    ensure(manifests[0] == manifests[2], || "manifest depends on thread count".into())?;
    Ok(format!("3 runs (1, 1, 4 threads), {} manifest bytes identical", manifests[0].len()))
}

// ---------------------------------------------------------------- 10

fn trimming_rule() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut report = Vec::new();
    for ties in [false, true] {
        let w: Vec<f64> = (0..10_000)
            .map(|_| {
                let v: f64 = 1.0 / rng.random_range(0.001..1.0);
                if ties {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        let (keep, _) = trim_mask(&w, 0.9975);
        let excluded = keep.iter().filter(|k| !**k).count();
        let mut sorted = w.clone();
        sorted.sort_by(f64::total_cmp);
        let threshold = sorted[(0.9975f64 * 10_000.0).ceil() as usize - 1];
        let oracle = w.iter().filter(|v| **v > threshold).count();
        ensure(excluded == oracle, || format!("excluded {excluded}, sort oracle {oracle} (ties: {ties})"))?;
        report.push(format!("{excluded} excluded{}", if ties { " with ties" } else { "" }));
    }
    Ok(report.join(", "))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (1, "structural comparative statics", Duration::from_secs(1), structural_statics),
        (2, "border-town equilibrium", Duration::from_secs(1), border_town),
        (3, "TWFE and sandwich oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        (4, "DR-DiD round trip", Duration::from_secs(300), dr_round_trip),
        (5, "event-study paths", Duration::from_secs(10), event_study_paths),
        (6, "heterogeneity signs", Duration::from_secs(120), heterogeneity_signs),
        (7, "SCM and SDID", Duration::from_secs(5), synthetic_control),
        (8, "numerics kernels", Duration::from_secs(5), numerics_kernels),
        (9, "pipeline determinism", Duration::from_secs(300), pipeline_determinism),
        (10, "trimming rule", Duration::from_secs(5), trimming_rule),
    ];
    let mut failures = Vec::new();
    let mut out = std::io::stdout();
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        let line = match &result {
            Ok(detail) => format!("PASS criterion {id:>2} {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => format!("FAIL criterion {id:>2} {name}: {why} [{elapsed:.2?}]"),
        };
        writeln!(out, "{line}").unwrap();
        if result.is_err() {
            failures.push(line);
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
