//! Exact first-moment analysis of the discretized reversal for a 1-D
//! Gaussian target `N(mu, sigma2)`.
//!
//! The p-score of the forward marginal is affine,
//! `grad log p_t(x) = -(x - a mu)/v + 2x` with `a = e^{-g(t)}` and
//! `v = 1/2 + a^2 (sigma2 - 1/2)`, so the frozen-score step is affine in the
//! start state and the mean obeys an exact scalar recursion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::marginals::ou_variance;
use crate::quadrature::GaussLegendre;
use crate::report::{self, Panel, Series};
use crate::reverse::ReverseConfig;
use crate::scheduler::{Scheduler, SchedulerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianExperiment {
    pub mu: f64,
    pub sigma2: f64,
    pub scheduler: Scheduler,
    #[serde(rename = "K")]
    pub steps: usize,
    #[serde(default)]
    pub delta: f64,
}

impl GaussianExperiment {
    pub fn new(mu: f64, sigma2: f64, scheduler: Scheduler, steps: usize) -> Self {
        GaussianExperiment { mu, sigma2, scheduler, steps, delta: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(LabError::invalid("mu", "must be finite"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(LabError::invalid("sigma2", format!("must be positive, got {}", self.sigma2)));
        }
        let cfg = self.grid();
        let h = cfg.horizon;
        if !(self.delta >= 0.0 && self.delta < h) {
            return Err(LabError::invalid("delta", format!("need 0 <= delta < T, got {}", self.delta)));
        }
        if self.steps == 0 {
            return Err(LabError::invalid("K", "need at least one step"));
        }
        Ok(())
    }

    /// The reverse-simulation grid this experiment describes.
    pub fn grid(&self) -> ReverseConfig {
        ReverseConfig::new(self.scheduler.clone(), self.delta, self.steps, 0)
    }

    pub fn step_size(&self) -> f64 {
        self.grid().step_size()
    }
}

/// `E[Y_{t_k}]` for `k = 0..=K`, starting from `E[Y_0] = 0`.
pub fn mean_recursion(e: &GaussianExperiment) -> Result<Vec<f64>> {
    e.validate()?;
    let levels = e.grid().levels()?;
    let mut means = Vec::with_capacity(e.steps + 1);
    let mut m = 0.0;
    means.push(m);
    for k in 0..e.steps {
        let a = (-levels[k]).exp();
        let v = ou_variance(levels[k], e.sigma2);
        let drift = m * (2.0 - 1.0 / v) + a * e.mu / v;
        let u = levels[k] - levels[k + 1];
        let decay = (-u).exp();
        m = m * decay + drift * -(-u).exp_m1();
        means.push(m);
    }
    Ok(means)
}

/// `Var[Y_{t_k}]` for `k = 0..=K`, starting from `Var[Y_0] = 1/2`.
pub fn variance_recursion(e: &GaussianExperiment) -> Result<Vec<f64>> {
    e.validate()?;
    let levels = e.grid().levels()?;
    let mut out = Vec::with_capacity(e.steps + 1);
    let mut var = 0.5;
    out.push(var);
    for k in 0..e.steps {
        let v = ou_variance(levels[k], e.sigma2);
        let u = levels[k] - levels[k + 1];
        let decay = (-u).exp();
        let gain = decay + (1.0 - decay) * (2.0 - 1.0 / v);
        var = gain * gain * var - 0.5 * (-2.0 * u).exp_m1();
        out.push(var);
    }
    Ok(out)
}

/// Discretization bias `mu e^{-g(delta)} - E[Y_{T - delta}]`.
pub fn bias(e: &GaussianExperiment) -> Result<f64> {
    let means = mean_recursion(e)?;
    let target = e.mu * (-e.scheduler.eval_g(e.delta)?).exp();
    Ok(target - means[e.steps])
}

/// The small-step approximation `4 mu h^2 sum_l e^{-2g(T - t_{l-1})} g'(T - t_{l-1})^2`,
/// stated for `sigma2 = 1/2` only.
pub fn bias_approx(e: &GaussianExperiment) -> Result<f64> {
    e.validate()?;
    if e.sigma2 != 0.5 {
        return Err(LabError::Unsupported(format!("the bias approximation assumes sigma2 = 1/2, got {}", e.sigma2)));
    }
    let cfg = e.grid();
    let h = cfg.step_size();
    let mut sum = 0.0;
    for &s in &cfg.forward_times()[..e.steps] {
        let g = e.scheduler.eval_g(s)?;
        let gd = e.scheduler.eval_gdot(s)?;
        sum += (-2.0 * g).exp() * gd * gd;
    }
    Ok(4.0 * e.mu * h * h * sum)
}

/// `J(g) = int_0^T e^{-2g} g'^2 dt` by composite Gauss-Legendre quadrature.
pub fn schedule_energy(s: &Scheduler) -> Result<f64> {
    let gl = GaussLegendre::new(16)?;
    let panels = 256;
    let w = s.horizon() / panels as f64;
    let mut total = 0.0;
    let mut err = None;
    for i in 0..panels {
        total += gl.integrate(i as f64 * w, (i + 1) as f64 * w, |t| match (s.eval_g(t), s.eval_gdot(t)) {
            (Ok(g), Ok(gd)) => (-2.0 * g).exp() * gd * gd,
            (Err(e), _) | (_, Err(e)) => {
                err = Some(e);
                f64::NAN
            }
        });
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub sigma2: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub scheduler: SchedulerKind,
    pub bias: f64,
    pub abs_bias: f64,
}

/// `|bias|` for every `(sigma2, K)` and each closed-form scheduler on `T = 1`.
pub fn compare_schedulers(mu: f64, sigma2_list: &[f64], k_list: &[usize], terminal: f64) -> Result<Vec<BiasRow>> {
    if let Some(bad) = sigma2_list.iter().find(|s| !(**s > 0.0)) {
        return Err(LabError::invalid("sigma2", format!("must be positive, got {bad}")));
    }
    let schedulers = SchedulerKind::CLOSED_FORM
        .iter()
        .map(|&k| Scheduler::closed_form(k, 1.0, terminal))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &sigma2 in sigma2_list {
        for &steps in k_list {
            for s in &schedulers {
                let b = bias(&GaussianExperiment::new(mu, sigma2, s.clone(), steps))?;
                rows.push(BiasRow { sigma2, steps, scheduler: s.kind(), bias: b, abs_bias: b.abs() });
            }
        }
    }
    Ok(rows)
}

/// One log-log panel per `sigma2`, one series per scheduler.
pub fn comparison_panels(rows: &[BiasRow]) -> Vec<Panel> {
    let mut sigmas: Vec<f64> = Vec::new();
    for r in rows {
        if !sigmas.contains(&r.sigma2) {
            sigmas.push(r.sigma2);
        }
    }
    sigmas
        .iter()
        .map(|&s2| {
            let mut p = Panel::new(format!("sigma2 = {s2}"), "K", "|bias|").log_log();
            for kind in SchedulerKind::CLOSED_FORM {
                let pts = rows
                    .iter()
                    .filter(|r| r.sigma2 == s2 && r.scheduler == kind)
                    .map(|r| (r.steps as f64, r.abs_bias))
                    .collect();
                p = p.with(Series::line(kind.as_str(), pts));
            }
            p
        })
        .collect()
}

/// Writes `bias.csv` (`sigma2,K,scheduler,bias,abs_bias`) and `bias.svg` into `dir`.
pub fn write_comparison(dir: &Path, rows: &[BiasRow]) -> Result<Vec<std::path::PathBuf>> {
    let header: Vec<String> = ["sigma2", "K", "scheduler", "bias", "abs_bias"].iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.sigma2.to_string(),
                r.steps.to_string(),
                r.scheduler.as_str().to_string(),
                r.bias.to_string(),
                r.abs_bias.to_string(),
            ]
        })
        .collect();
    let csv = dir.join("bias.csv");
    let svg = dir.join("bias.svg");
    report::write_csv(&csv, &header, &body)?;
    report::write_svg(&svg, &comparison_panels(rows))?;
    Ok(vec![csv, svg])
}
