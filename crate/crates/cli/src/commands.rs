use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use pitchfork::asymptotic_maps::{compute_constants, ModelConstants};
use pitchfork::integrator::sample_trajectory;
use pitchfork::orbits::{
    fit_log_square, scan_census, section_phase, CensusResult, OrbitRecord, Stability,
};
use pitchfork::painleve::{default_connection_samples, jacobian_growth_check, verify_connection};
use pitchfork::predictor::{
    continue_seed, interval_cover_analysis, stable_census_sweep, AnalyticSeed, Case, CoverMode,
    Predictor, SolveOptions,
};
use pitchfork::{ExtendedState, ModelSpec};

use crate::config::{CaseChoice, RunConfig};
use crate::output::{label, num, usize_s, Run, Table};
use crate::CliError;

fn constants(model: &ModelSpec, cfg: &RunConfig) -> Result<ModelConstants, CliError> {
    Ok(compute_constants(model, cfg.constants.quad_tol)?)
}

pub fn validate(cfg: &RunConfig, grid: usize) -> Result<(), CliError> {
    let model = cfg.model()?;
    let mut run = Run::new("validate", cfg)?;
    let report = run.timed("checks", || model.validate_assumptions(grid));
    let mut t = Table::new(
        "model",
        &[
            "check",
            "passed",
            "worst_u[rad]",
            "worst_value[-]",
            "detail",
        ],
    );
    for c in &report.checks {
        t.push(vec![
            c.name.to_string(),
            c.passed.to_string(),
            num(c.worst_u),
            num(c.worst_value),
            c.detail.clone(),
        ]);
    }
    run.table("validate", &t)?;
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    run.finish(json!({ "model": report.model, "grid_size": grid, "failed": failed }))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "model '{}' fails: {}",
            report.model,
            failed.join(", ")
        )))
    }
}

pub fn integrate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let eps = cfg.eps()?;
    let icfg = cfg.integrator();
    icfg.validate()?;
    let s = &cfg.integrate;
    let u0 = s.u0.unwrap_or_else(|| section_phase(&model));
    let start = ExtendedState::new(s.x0, s.y0, u0, 0.0);
    let t_end = s.periods * TAU / eps;
    let mut run = Run::new("integrate", cfg)?;
    let traj = run.timed("integrate", || {
        sample_trajectory(&start, &model, eps, t_end, &icfg, s.stride)
    })?;
    let rows = traj.rows(&model);
    let mut t = Table::new(
        "integrator",
        &["t[time]", "x[-]", "y[-]", "u[rad]", "v[-]", "H[-]"],
    );
    for r in &rows {
        t.push(r.iter().map(|v| num(*v)).collect());
    }
    run.table("trajectory", &t)?;
    let drift = rows
        .iter()
        .map(|r| (r[5] - rows[0][5]).abs())
        .fold(0.0, f64::max);
    run.finish(json!({ "samples": rows.len(), "t_end": t_end, "max_energy_drift": drift }))?;
    Ok(())
}

const ORBIT_HEADER: [&str; 14] = [
    "eps[-]",
    "x0[-]",
    "y0[-]",
    "period_mult[count]",
    "residual[-]",
    "closure_defect[-]",
    "trace[-]",
    "det[-]",
    "log_max_multiplier[-]",
    "stability",
    "symmetry",
    "max_singular_distance[-]",
    "newton_iterations[count]",
    "small",
];

fn orbit_row(eps: f64, o: &OrbitRecord, small_bound: f64) -> Vec<String> {
    vec![
        num(eps),
        num(o.x0),
        num(o.y0),
        o.period_mult.to_string(),
        num(o.residual),
        num(o.closure_defect),
        num(o.trace),
        num(o.det),
        num(o.log_max_multiplier),
        label(&o.stability),
        o.symmetry.label().to_string(),
        num(o.max_singular_distance),
        usize_s(o.newton_iterations),
        (o.x0 <= small_bound).to_string(),
    ]
}

pub const CENSUS_HEADER: [&str; 12] = [
    "eps[-]",
    "pos_count[count]",
    "spos_count[count]",
    "spos_small_count[count]",
    "upos_small_count[count]",
    "marginal_count[count]",
    "period2_count[count]",
    "period2_stable_count[count]",
    "small_bound[-]",
    "grid_size[count]",
    "integrations[count]",
    "refine_budget_hit",
];

fn census_rows(
    cfg: &RunConfig,
    model: &ModelSpec,
    run: &mut Run,
) -> Result<Vec<CensusResult>, CliError> {
    let eps_list = match cfg.eps {
        Some(_) => vec![cfg.eps()?],
        None => cfg.eps_grid.clone(),
    };
    if eps_list.is_empty() {
        return Err(CliError::Config("eps_grid is empty".into()));
    }
    let icfg = cfg.integrator();
    icfg.validate()?;
    let controls = cfg.census_controls();
    let mut out = Vec::new();
    for eps in eps_list {
        info!("census at eps={eps}");
        let r = run.timed(&format!("census eps={eps}"), || {
            scan_census(eps, cfg.census.window, model, &icfg, &controls)
        })?;
        out.push(r);
    }
    Ok(out)
}

pub fn census(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let mut run = Run::new("census", cfg)?;
    let results = census_rows(cfg, &model, &mut run)?;
    let mut summary = Table::new("orbits", &CENSUS_HEADER);
    let mut orbits = Table::new("orbits", &ORBIT_HEADER);
    for r in &results {
        let w = &r.row;
        summary.push(vec![
            num(w.eps),
            usize_s(w.pos_count),
            usize_s(w.spos_count),
            usize_s(w.spos_small_count),
            usize_s(w.upos_small_count),
            usize_s(w.marginal_count),
            usize_s(w.period2_count),
            usize_s(w.period2_stable_count),
            num(w.small_bound),
            usize_s(w.n0),
            usize_s(w.integrations),
            w.refine_budget_hit.to_string(),
        ]);
        for o in r.orbits.iter().chain(&r.period2_orbits) {
            orbits.push(orbit_row(w.eps, o, w.small_bound));
        }
    }
    run.table("census_summary", &summary)?;
    run.table("census_orbits", &orbits)?;
    let rows: Vec<_> = results.iter().map(|r| &r.row).collect();
    run.finish(json!({ "rows": rows }))?;
    Ok(())
}

/// (ε, UPOS-small) pairs from census summary files.
fn read_census_summaries(paths: &[impl AsRef<Path>]) -> Result<Vec<(f64, f64)>, CliError> {
    let mut data = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let mut rdr =
            csv::Reader::from_path(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let head = rdr
            .headers()
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
            .clone();
        let col = |name: &str| {
            head.iter().position(|h| h == name).ok_or_else(|| {
                CliError::Config(format!("{}: missing column '{name}'", p.display()))
            })
        };
        let (ie, ic) = (col(CENSUS_HEADER[0])?, col(CENSUS_HEADER[4])?);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let parse = |i: usize| {
                rec[i].parse::<f64>().map_err(|e| {
                    CliError::Config(format!("{}: bad number '{}': {e}", p.display(), &rec[i]))
                })
            };
            data.push((parse(ie)?, parse(ic)?));
        }
    }
    Ok(data)
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let mut run = Run::new("fit", cfg)?;
    let data = if cfg.fit.inputs.is_empty() {
        let model = cfg.model()?;
        census_rows(cfg, &model, &mut run)?
            .iter()
            .map(|r| (r.row.eps, r.row.upos_small_count as f64))
            .collect()
    } else {
        read_census_summaries(&cfg.fit.inputs)?
    };
    let fit = fit_log_square(&data)?;
    let mut t = Table::new(
        "orbits",
        &[
            "eps[-]",
            "upos_small_count[count]",
            "fitted[count]",
            "relative_error[-]",
        ],
    );
    for &(e, c, f, r) in &fit.rows {
        t.push(vec![num(e), num(c), num(f), num(r)]);
    }
    run.table("fit", &t)?;
    run.finish(json!({
        "a": fit.a,
        "b": fit.b,
        "max_relative_error": fit.max_relative_error(),
    }))?;
    Ok(())
}

const SEED_HEADER: [&str; 11] = [
    "case",
    "eps[-]",
    "z0_hat[-]",
    "w0[rad]",
    "lambda_l[rad]",
    "rho0_hat[-]",
    "predicted_trace[-]",
    "predicted_stability",
    "period_mult[count]",
    "symmetry",
    "residual[rad]",
];

fn seed_row(s: &AnalyticSeed) -> Vec<String> {
    vec![
        label(&s.case),
        num(s.eps),
        num(s.z0_hat),
        num(s.w0),
        num(s.lambda_l),
        num(s.rho0_hat),
        num(s.predicted_trace),
        label(&s.predicted_stability),
        s.period_mult.to_string(),
        s.symmetry.label().to_string(),
        num(s.residual),
    ]
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let eps = cfg.eps()?;
    let mut run = Run::new("predict", cfg)?;
    let consts = run.timed("constants", || constants(&model, cfg))?;
    let pred = Predictor::new(eps, &consts)?;
    let opts = SolveOptions {
        z0_window: cfg.predict.z0_window,
        admissible: cfg.admissible(),
        cot_margin: cfg.predict.cot_margin,
        ..SolveOptions::default()
    };
    let cases: &[Case] = match cfg.predict.case {
        CaseChoice::I => &[Case::I],
        CaseChoice::Ii => &[Case::II],
        CaseChoice::Both => &[Case::I, Case::II],
    };
    let mut t = Table::new("predictor", &SEED_HEADER);
    let mut per_case = BTreeMap::new();
    for &case in cases {
        let rep = run.timed(&format!("solve {}", label(&case)), || {
            pred.solve_fixed_points(case, &opts)
        })?;
        for s in &rep.seeds {
            t.push(seed_row(s));
        }
        let stable = rep
            .seeds
            .iter()
            .filter(|s| s.predicted_stability == Stability::Stable)
            .count();
        per_case.insert(
            label(&case),
            json!({
                "seeds": rep.seeds.len(),
                "stable": stable,
                "strips": rep.strips,
                "excluded_cot": rep.excluded_cot,
                "excluded_domain": rep.excluded_domain,
            }),
        );
    }
    run.table("seeds", &t)?;
    run.finish(json!({ "cases": per_case }))?;
    Ok(())
}

pub fn continuation(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let eps = cfg.eps()?;
    let icfg = cfg.integrator();
    icfg.validate()?;
    let c = &cfg.continuation;
    let mut run = Run::new("continue", cfg)?;
    let consts = run.timed("constants", || constants(&model, cfg))?;
    let pred = Predictor::new(eps, &consts)?;
    let opts = SolveOptions {
        z0_window: c.z0_window,
        admissible: cfg.admissible(),
        ..SolveOptions::default()
    };
    let mut seeds: Vec<AnalyticSeed> = pred
        .solve_fixed_points(Case::I, &opts)?
        .seeds
        .into_iter()
        .filter(|s| (1.0 / s.lambda_l.tan()).abs() >= c.min_abs_cot)
        .collect();
    let pool = seeds.len();
    seeds.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    seeds.truncate(c.count);
    let results = run.timed("newton", || {
        seeds
            .iter()
            .map(|s| continue_seed(s, &model, &icfg, c.max_iter))
            .collect::<Vec<_>>()
    });
    let mut t = Table::new(
        "predictor",
        &[
            "z0_hat[-]",
            "w0[rad]",
            "period_mult[count]",
            "predicted_trace[-]",
            "x_seed[-]",
            "y_seed[-]",
            "x[-]",
            "y[-]",
            "converged",
            "iterations[count]",
            "residual[-]",
            "trace[-]",
            "stability",
            "error",
        ],
    );
    let mut converged = 0;
    let mut unstable = 0;
    for (s, r) in seeds.iter().zip(&results) {
        match r {
            Ok(c) => {
                converged += usize::from(c.converged);
                unstable += usize::from(c.converged && c.stability == Stability::Unstable);
                t.push(vec![
                    num(c.z0_hat),
                    num(c.w0),
                    c.period_mult.to_string(),
                    num(c.predicted_trace),
                    num(c.x_seed),
                    num(c.y_seed),
                    num(c.x),
                    num(c.y),
                    c.converged.to_string(),
                    usize_s(c.iterations),
                    num(c.residual),
                    num(c.trace),
                    label(&c.stability),
                    String::new(),
                ]);
            }
            Err(e) => {
                let mut row = vec![num(s.z0_hat), num(s.w0), s.period_mult.to_string()];
                row.push(num(s.predicted_trace));
                row.extend(std::iter::repeat_n(String::new(), 4));
                row.push("false".into());
                row.extend(std::iter::repeat_n(String::new(), 4));
                row.push(e.to_string());
                t.push(row);
            }
        }
    }
    run.table("continuation", &t)?;
    run.finish(json!({
        "pool": pool,
        "attempted": seeds.len(),
        "converged": converged,
        "converged_unstable": unstable,
    }))?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let mut run = Run::new("sweep", cfg)?;
    let consts = run.timed("constants", || constants(&model, cfg))?;
    let rep = run.timed("sweep", || stable_census_sweep(&consts, &cfg.sweep()))?;
    let mut t = Table::new(
        "predictor",
        &[
            "inv_log[-]",
            "eps[-]",
            "stable_w0_0[count]",
            "stable_w0_half_pi[count]",
            "stable_total[count]",
        ],
    );
    for s in &rep.samples {
        t.push(vec![
            num(s.inv_log),
            num(s.eps),
            usize_s(s.stable_w0_0),
            usize_s(s.stable_w0_half_pi),
            usize_s(s.stable_total),
        ]);
    }
    run.table("sweep_samples", &t)?;
    let mut h = Table::new("predictor", &["stable_total[count]", "samples[count]"]);
    for (k, n) in rep.histogram.iter().enumerate() {
        h.push(vec![usize_s(k), usize_s(*n)]);
    }
    run.table("sweep_histogram", &h)?;
    run.finish(json!({
        "no_stable_fraction": rep.no_stable_fraction,
        "some_stable_fraction": rep.some_stable_fraction,
    }))?;
    Ok(())
}

pub fn cover(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let cc = cfg.cover()?;
    let mut run = Run::new("cover", cfg)?;
    let consts = run.timed("constants", || constants(&model, cfg))?;
    let rep = run.timed("cover", || interval_cover_analysis(&consts, &cc))?;
    let mut t = Table::new(
        "predictor",
        &[
            "n[count]",
            "eps[-]",
            "z0[-]",
            "z0_right[-]",
            "f[rad]",
            "image_len[rad]",
            "step[rad]",
            "step_predicted[rad]",
            "stable[count]",
        ],
    );
    for s in &rep.steps {
        t.push(vec![
            usize_s(s.n),
            num(s.eps),
            num(s.z0),
            num(s.z0_right),
            num(s.f),
            num(s.image_len),
            num(s.step),
            num(s.step_predicted),
            usize_s(s.stable),
        ]);
    }
    run.table("cover_steps", &t)?;
    if cc.mode == CoverMode::Part3 {
        let mut e = Table::new("predictor", &["eps[-]", "stable[count]"]);
        for &(eps, n) in &rep.eps_counts {
            e.push(vec![num(eps), usize_s(n)]);
        }
        run.table("cover_eps", &e)?;
    }
    run.finish(json!({
        "mode": rep.mode,
        "eps": rep.eps,
        "longest_gap": rep.longest_gap,
        "mean_gap": rep.mean_gap,
        "upper_estimate": rep.upper_estimate,
        "stable_eps_intervals": rep.stable_eps_intervals,
        "count_changes": rep.count_changes,
        "drift_rate": rep.drift_rate,
        "overlap_fraction": rep.overlap_fraction,
        "separation_predicted": rep.separation_predicted,
        "coverage": rep.coverage,
    }))?;
    Ok(())
}

pub fn verify_painleve(cfg: &RunConfig) -> Result<(), CliError> {
    let p = &cfg.painleve;
    if p.n_phase == 0 {
        return Err(CliError::Config("painleve.n_phase must be positive".into()));
    }
    let pcfg = cfg.painleve();
    let samples = default_connection_samples(p.n_phase);
    let mut run = Run::new("verify-painleve", cfg)?;
    let conn = run.timed("connection", || {
        verify_connection(&samples, &p.deltas, &pcfg, &cfg.admissible())
    })?;
    let growth_adm = pitchfork::asymptotic_maps::Admissible {
        margin: p.growth_margin,
    };
    let growth = run.timed("growth", || {
        jacobian_growth_check(&samples, &p.deltas, &pcfg, &growth_adm)
    })?;

    let mut lv = Table::new(
        "painleve",
        &[
            "delta[-]",
            "samples[count]",
            "skipped[count]",
            "mean_action_error[-]",
            "max_action_error[-]",
            "mean_phase_error[rad]",
            "mean_phase_error_reflected[rad]",
        ],
    );
    for l in &conn.levels {
        lv.push(vec![
            num(l.delta),
            usize_s(l.samples),
            usize_s(l.skipped),
            num(l.mean_action_error),
            num(l.max_action_error),
            num(l.mean_phase_error),
            num(l.mean_phase_error_reflected),
        ]);
    }
    run.table("painleve_levels", &lv)?;

    let mut ex = Table::new(
        "painleve",
        &[
            "delta[-]",
            "z0_hat[-]",
            "w0[rad]",
            "lambda[rad]",
            "theta[rad]",
            "rho0_measured[-]",
            "phi0_measured[rad]",
            "eta_measured",
            "rho0_predicted[-]",
            "phi0_predicted[rad]",
            "eta_predicted",
            "action_error[-]",
            "phase_error[rad]",
            "phase_error_reflected[rad]",
            "branch_ok",
        ],
    );
    for e in &conn.experiments {
        ex.push(vec![
            num(e.delta),
            num(e.initial.z0_hat),
            num(e.initial.w0),
            num(e.lambda),
            num(e.theta),
            num(e.measured.rho0_hat),
            num(e.measured.phi0),
            e.measured.eta.to_string(),
            num(e.predicted.rho0_hat),
            num(e.predicted.phi0),
            e.predicted.eta.to_string(),
            num(e.action_error),
            num(e.phase_error),
            num(e.phase_error_reflected),
            e.branch_ok.to_string(),
        ]);
    }
    run.table("painleve_experiments", &ex)?;

    let mut gr = Table::new(
        "painleve",
        &[
            "delta[-]",
            "samples[count]",
            "norm[-]",
            "det_defect[-]",
            "ratio[-]",
            "interior_ratio[-]",
        ],
    );
    for g in &growth.entries {
        gr.push(vec![
            num(g.delta),
            usize_s(g.samples),
            num(g.norm),
            num(g.det_defect),
            num(g.ratio),
            num(g.interior_ratio),
        ]);
    }
    run.table("painleve_growth", &gr)?;
    run.finish(json!({
        "action_slope": conn.action_slope,
        "phase_slope": conn.phase_slope,
        "branch_mismatches": conn.branch_mismatches,
        "growth_tail_slope": growth.tail_slope,
        "growth_tail_non_increasing": growth.tail_non_increasing,
        "growth_max_ratio": growth.max_ratio,
    }))?;
    Ok(())
}

pub fn constants_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let mut run = Run::new("constants", cfg)?;
    let c = run.timed("quadrature", || constants(&model, cfg))?;
    let mut t = Table::new("asymptotic_maps", &["name", "value[-]"]);
    for (k, v) in [
        ("e1", c.e1),
        ("e2", c.e2),
        ("e3", c.e3),
        ("e4", c.e4),
        ("e4_raw", c.e4_raw),
        ("c2", c.c2),
        ("c4", c.c4),
        ("c2_cross_check", c.c2_cross_check),
        ("c4_cross_check", c.c4_cross_check),
    ] {
        t.push(vec![k.to_string(), num(v)]);
    }
    run.table("constants", &t)?;
    let mut tab = Table::new("asymptotic_maps", &["constant", "u_star[rad]", "value[-]"]);
    for (name, rows) in [("c2", &c.c2_table), ("c4", &c.c4_table)] {
        for r in rows.iter() {
            tab.push(vec![name.to_string(), num(r[0]), num(r[1])]);
        }
    }
    run.table("constants_extrapolation", &tab)?;
    let summary: Value = serde_json::to_value(&c).unwrap_or(Value::Null);
    run.finish(summary)?;
    Ok(())
}
