use std::path::{Path, PathBuf};

use difflab::gaussian_oracle::{compare_schedulers, schedule_energy, write_comparison};
use difflab::jump::{jump_error_experiment, JumpConfig, JumpScore};
use difflab::report::{write_csv, write_svg, Panel, Series};
use difflab::rng::derive_seed;
use difflab::stats::loglog_slope;
use difflab::variational::{
    euler_lagrange_residuals, minimize, objective_continuous, objective_discrete, remark_gap, ObjectiveMode,
    VariationalProblem,
};
use difflab::weak_error::{stat_error_experiment, weak_error_experiment};
use difflab::{ReverseConfig, Scheduler, SchedulerKind, ScoreModel};
use serde_json::{json, Value};

use crate::config::{
    GaussianBiasParams, JumpParams, Parameters, SchedulersParams, StatErrorParams, VariationalParams, WeakErrorParams,
};
use crate::error::{finite, CliError};

/// Artifacts written by a command plus a small machine-readable summary.
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

pub fn run(params: &Parameters, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(dir).map_err(difflab::LabError::from)?;
    match params {
        Parameters::Schedulers(p) => schedulers(p, dir),
        Parameters::GaussianBias(p) => gaussian_bias(p, dir),
        Parameters::WeakError(p) => weak_error(p, seed, dir),
        Parameters::StatError(p) => stat_error(p, seed, dir),
        Parameters::Variational(p) => variational(p, dir),
        Parameters::Jump(p) => jump(p, seed, dir),
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn schedulers(p: &SchedulersParams, dir: &Path) -> Result<Outcome, CliError> {
    if p.points < 2 {
        return Err(CliError::Config { key: "parameters.points".into(), reason: "need at least 2 grid points".into() });
    }
    let kinds = SchedulerKind::CLOSED_FORM;
    let scheds: Vec<Scheduler> =
        kinds.iter().map(|&k| Scheduler::closed_form(k, p.horizon, p.terminal)).collect::<Result<_, _>>()?;
    let optimal = &scheds[1];
    let mut header = vec!["t".to_string()];
    for k in kinds {
        header.push(format!("g_{}", k.as_str()));
        header.push(format!("gdot_{}", k.as_str()));
    }
    header.push("el_residual_optimal".into());
    let mut rows = Vec::with_capacity(p.points);
    let mut g_series = vec![Vec::new(); kinds.len()];
    let mut gdot_series = vec![Vec::new(); kinds.len()];
    for i in 0..p.points {
        let t = if i + 1 == p.points { p.horizon } else { p.horizon * i as f64 / (p.points - 1) as f64 };
        let mut row = vec![t.to_string()];
        for (j, s) in scheds.iter().enumerate() {
            let (g, gd) = (s.eval_g(t)?, s.eval_gdot(t)?);
            g_series[j].push((t, g));
            gdot_series[j].push((t, gd));
            row.push(g.to_string());
            row.push(gd.to_string());
        }
        row.push(finite("Euler-Lagrange residual", optimal.euler_lagrange_residual(t)?)?.to_string());
        rows.push(row);
    }
    let csv = dir.join("schedulers.csv");
    write_csv(&csv, &header, &rows)?;

    let mut energies = Vec::new();
    let mut obj_rows = Vec::new();
    for (k, s) in kinds.iter().zip(&scheds) {
        let j = finite("objective", schedule_energy(s)?)?;
        energies.push((k.as_str(), j));
        obj_rows.push(vec![k.as_str().to_string(), j.to_string()]);
    }
    let obj_csv = dir.join("objectives.csv");
    write_csv(&obj_csv, &strings(&["scheduler", "objective"]), &obj_rows)?;

    let mut pg = Panel::new("g(t)", "t", "g");
    let mut pd = Panel::new("g'(t)", "t", "g'").log_y();
    for (j, k) in kinds.iter().enumerate() {
        pg = pg.with(Series::line(k.as_str(), g_series[j].clone()));
        pd = pd.with(Series::line(k.as_str(), gdot_series[j].clone()));
    }
    let svg = dir.join("schedulers.svg");
    write_svg(&svg, &[pg, pd])?;
    let summary = json!({ "objective": energies.into_iter().map(|(k, j)| (k.to_string(), json!(j))).collect::<serde_json::Map<_, _>>() });
    Ok(Outcome { artifacts: vec![csv, obj_csv, svg], summary })
}

fn gaussian_bias(p: &GaussianBiasParams, dir: &Path) -> Result<Outcome, CliError> {
    let rows = compare_schedulers(p.mu, &p.sigma2, &p.steps, p.terminal)?;
    for r in &rows {
        finite("bias", r.bias)?;
    }
    let artifacts = write_comparison(dir, &rows)?;
    let mut cells = 0;
    let mut near_best = 0;
    for &s2 in &p.sigma2 {
        for &k in &p.steps {
            let cell: Vec<_> = rows.iter().filter(|r| r.sigma2 == s2 && r.steps == k).collect();
            let opt = cell.iter().find(|r| r.scheduler == SchedulerKind::Optimal).map(|r| r.abs_bias);
            let others = cell
                .iter()
                .filter(|r| r.scheduler != SchedulerKind::Optimal)
                .map(|r| r.abs_bias)
                .fold(f64::INFINITY, f64::min);
            cells += 1;
            if opt.is_some_and(|o| o <= 1.05 * others) {
                near_best += 1;
            }
        }
    }
    Ok(Outcome { artifacts, summary: json!({ "cells": cells, "optimal_within_5_percent_of_best": near_best }) })
}

fn weak_error(p: &WeakErrorParams, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let dim = p.target.dim();
    let wave = p.wave.clone().unwrap_or_else(|| vec![1.0; dim]);
    if wave.len() != dim {
        return Err(CliError::Config {
            key: "parameters.wave".into(),
            reason: format!("length {} != target dimension {dim}", wave.len()),
        });
    }
    if p.steps.is_empty() || p.eps.is_empty() {
        let key = if p.steps.is_empty() { "parameters.K" } else { "parameters.eps" };
        return Err(CliError::Config { key: key.into(), reason: "need at least one value".into() });
    }
    let header = strings(&[
        "K",
        "eps",
        "g_target",
        "bias",
        "bias_se",
        "abs_bias",
        "mse",
        "mse_lo",
        "mse_hi",
        "mixing",
        "inv_n",
        "eps2",
        "discretization",
        "reps",
        "n_paths",
    ]);
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (ki, &k) in p.steps.iter().enumerate() {
        // one seed per K: the eps cells share random numbers, so their
        // differences isolate the score-error contribution
        let cell_seed = derive_seed(seed, ki as u64);
        for &eps in &p.eps {
            let cfg = ReverseConfig::new(p.scheduler.clone(), p.delta, k, cell_seed).with_integrator(p.integrator);
            let score = if eps == 0.0 {
                ScoreModel::exact(p.target.clone(), p.scheduler.clone())
            } else {
                ScoreModel::perturbed(p.target.clone(), p.scheduler.clone(), eps, wave.clone())
            };
            let r = weak_error_experiment(&p.target, &score, &cfg, &p.phi, p.reps, p.n_paths)?;
            finite("weak error", r.bias.mean)?;
            let b = r.budget;
            rows.push(
                [
                    k as f64,
                    eps,
                    r.g_target,
                    r.bias.mean,
                    r.bias.se,
                    r.bias.mean.abs(),
                    r.mse,
                    r.mse_ci.0,
                    r.mse_ci.1,
                    b.mixing,
                    b.inv_n,
                    b.eps2,
                    b.discretization,
                ]
                .iter()
                .map(|v| v.to_string())
                .chain([p.reps.to_string(), r.n_paths.to_string()])
                .collect(),
            );
            cells.push((k, eps, r.bias.mean, r.mse));
        }
    }
    let csv = dir.join("weak_error.csv");
    write_csv(&csv, &header, &rows)?;

    // against the exact-score cell when there is one, otherwise raw |bias|
    let mut by_eps = Panel::new("score-error part of the bias", "eps", "|bias - bias(eps = 0)|").log_log();
    let mut slopes = serde_json::Map::new();
    for &k in &p.steps {
        let base = cells.iter().find(|c| c.0 == k && c.1 == 0.0).map_or(0.0, |c| c.2);
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.0 == k && c.1 > 0.0)
            .map(|c| (c.1, (c.2 - base).abs()))
            .filter(|pt| pt.1 > 0.0)
            .collect();
        if pts.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            if let Some(s) = loglog_slope(&x, &y) {
                slopes.insert(format!("K={k}"), json!(s));
            }
        }
        by_eps = by_eps.with(Series::line(format!("K = {k}"), pts));
    }
    let mut by_k = Panel::new("MSE vs K", "K", "mean squared error").log_log();
    for &eps in &p.eps {
        let pts = cells.iter().filter(|c| c.1 == eps && c.3 > 0.0).map(|c| (c.0 as f64, c.3)).collect();
        by_k = by_k.with(Series::line(format!("eps = {eps}"), pts));
    }
    let svg = dir.join("weak_error.svg");
    write_svg(&svg, &[by_eps, by_k])?;
    Ok(Outcome { artifacts: vec![csv, svg], summary: json!({ "eps_slope": slopes }) })
}

fn stat_error(p: &StatErrorParams, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let r = stat_error_experiment(&p.target, &p.phi, &p.scheduler, p.t, &p.sizes, p.reps, seed)?;
    for row in &r.rows {
        finite("mean squared gap", row.mean_sq_gap)?;
    }
    let artifacts = r.write(dir, "stat_error")?;
    Ok(Outcome { artifacts, summary: json!({ "slope": r.slope, "degenerate": r.degenerate }) })
}

fn variational(p: &VariationalParams, dir: &Path) -> Result<Outcome, CliError> {
    let problem = match p.mode {
        ObjectiveMode::ContinuousObjective => {
            let n = p.n_knots.ok_or_else(|| CliError::Config {
                key: "parameters.n_knots".into(),
                reason: "missing field `n_knots` (required for the continuous objective)".into(),
            })?;
            VariationalProblem::continuous(p.horizon, p.terminal, n)
        }
        ObjectiveMode::DiscreteObjective { steps, delta } => {
            if p.n_knots.is_some_and(|n| n != steps + 1) {
                return Err(CliError::Config {
                    key: "parameters.n_knots".into(),
                    reason: format!("the discrete objective uses K + 1 = {} knots", steps + 1),
                });
            }
            VariationalProblem::discrete(p.horizon, p.terminal, steps, delta)
        }
    };
    let m = minimize(&problem, p.iters, p.step)?;
    let opt = Scheduler::make_optimal(p.horizon, p.terminal)?;
    let g_opt: Vec<f64> = m.times.iter().map(|&t| opt.eval_g(t)).collect::<Result<_, _>>()?;
    let sup = m.path.iter().zip(&g_opt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let continuous = matches!(problem.mode, ObjectiveMode::ContinuousObjective);
    let residuals = if continuous { euler_lagrange_residuals(&m.path, p.horizon) } else { Vec::new() };
    let mut header = strings(&["t", "g", "g_closed_form"]);
    if continuous {
        header.push("el_residual".into());
    }
    let last = m.times.len() - 1;
    let rows: Vec<Vec<String>> = (0..m.times.len())
        .map(|i| {
            let mut r = vec![
                m.times[i].to_string(),
                finite("minimizer", m.path[i]).map(|v| v.to_string())?,
                g_opt[i].to_string(),
            ];
            if continuous {
                // the residual is defined at interior knots only
                r.push(if i == 0 || i == last { String::new() } else { residuals[i - 1].to_string() });
            }
            Ok(r)
        })
        .collect::<Result<_, CliError>>()?;
    let csv = dir.join("variational.csv");
    write_csv(&csv, &header, &rows)?;
    let trace_rows: Vec<Vec<String>> =
        m.trace.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]).collect();
    let trace_csv = dir.join("variational_trace.csv");
    write_csv(&trace_csv, &strings(&["iteration", "objective"]), &trace_rows)?;

    let pts = |ys: &[f64]| m.times.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
    let paths = Panel::new("minimizer", "t", "g")
        .with(Series::scatter("gradient descent", pts(&m.path)))
        .with(Series::line("closed form", pts(&g_opt)));
    let best = m.trace.iter().copied().fold(f64::INFINITY, f64::min);
    let excess: Vec<(f64, f64)> =
        m.trace.iter().enumerate().filter(|(_, v)| **v > best).map(|(i, v)| (i as f64, v - best)).collect();
    let trace =
        Panel::new("objective trace", "iteration", "objective - final").log_y().with(Series::line("excess", excess));
    let svg = dir.join("variational.svg");
    write_svg(&svg, &[paths, trace])?;

    let objective = *m.trace.last().expect("trace starts with the initial value");
    let mut summary = json!({
        "objective": objective,
        "iterations": m.iterations,
        "convex": m.convex,
        "sup_error_vs_closed_form": sup,
    });
    match problem.mode {
        ObjectiveMode::ContinuousObjective => {
            summary["closed_form_objective"] = json!(objective_continuous(&g_opt, p.horizon)?);
        }
        ObjectiveMode::DiscreteObjective { steps, delta } => {
            summary["closed_form_objective"] = json!(objective_discrete(&opt, p.horizon, delta, steps)?);
            summary["remark_gap"] =
                serde_json::to_value(remark_gap(p.horizon, p.terminal, steps, delta, p.iters)?).expect("plain struct");
        }
    }
    Ok(Outcome { artifacts: vec![csv, trace_csv, svg], summary })
}

fn jump(p: &JumpParams, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let cfg = JumpConfig { lambda: p.lambda, horizon: p.horizon, ode_steps: p.ode_steps, score: JumpScore::Exact };
    let r = jump_error_experiment(p.functional, &p.m0, &p.sizes, &p.eps, &p.horizons, &cfg, p.reps, seed)?;
    for row in r.rows() {
        finite("jump error", row.abs_error)?;
    }
    let artifacts = r.write(dir)?;
    Ok(Outcome { artifacts, summary: json!({ "t_slope": r.t_slope, "eps_slope": r.eps_slope, "n_slope": r.n_slope }) })
}
