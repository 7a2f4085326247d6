//! Linear test functionals `G(m) = <phi, m>` and the weak and statistical
//! error experiments built on them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::marginals::{Marginal, TargetSpec};
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::report::{self, Panel, Series};
use crate::reverse::{map_paths, run_reverse_map, ReverseConfig, ScoreModel, ScoreVariant};
use crate::rng::{derive_seed, stream};
use crate::scheduler::Scheduler;
use crate::stats::{bootstrap_mean_ci, loglog_slope, Estimate};

pub const DEFAULT_HERMITE_ORDER: usize = 64;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_TAG: u64 = 0xB007;

/// Bounded smooth `phi` with bounded derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctional {
    /// `tanh(a x[axis] + b)`.
    TanhCoord { axis: usize, a: f64, b: f64 },
    /// `exp(-|x - center|^2 / (2 width^2))`.
    GaussBump { center: Vec<f64>, width: f64 },
}

/// `sup |phi|`, `sup |grad phi|`, `sup |laplacian phi|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorms {
    pub phi: f64,
    pub grad: f64,
    pub laplacian: f64,
}

impl TestFunctional {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            TestFunctional::TanhCoord { axis, a, b } => {
                if *axis >= dim {
                    return Err(LabError::invalid("axis", format!("{axis} out of range for dimension {dim}")));
                }
                if !(a.is_finite() && b.is_finite()) {
                    return Err(LabError::invalid("a", "scale and shift must be finite"));
                }
            }
            TestFunctional::GaussBump { center, width } => {
                if center.len() != dim {
                    return Err(LabError::invalid("center", format!("length {} != dimension {dim}", center.len())));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(LabError::invalid("width", format!("must be positive, got {width}")));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunctional::TanhCoord { axis, a, b } => (a * x[*axis] + b).tanh(),
            TestFunctional::GaussBump { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TestFunctional::TanhCoord { axis, a, b } => {
                let th = (a * x[*axis] + b).tanh();
                let mut g = vec![0.0; x.len()];
                g[*axis] = a * (1.0 - th * th);
                g
            }
            TestFunctional::GaussBump { center, width } => {
                let f = self.value(x);
                let s2 = width * width;
                x.iter().zip(center).map(|(v, c)| -(v - c) / s2 * f).collect()
            }
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        match self {
            TestFunctional::TanhCoord { axis, a, b } => {
                let th = (a * x[*axis] + b).tanh();
                -2.0 * a * a * th * (1.0 - th * th)
            }
            TestFunctional::GaussBump { center, width } => {
                let s2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                (r2 / (s2 * s2) - x.len() as f64 / s2) * self.value(x)
            }
        }
    }

    pub fn sup_norms(&self, dim: usize) -> SupNorms {
        match self {
            TestFunctional::TanhCoord { a, b, .. } => {
                if *a == 0.0 {
                    SupNorms { phi: b.tanh().abs(), grad: 0.0, laplacian: 0.0 }
                } else {
                    // max |tanh''| = 4/(3 sqrt 3) at tanh^2 = 1/3
                    SupNorms { phi: 1.0, grad: a.abs(), laplacian: a * a * 4.0 / (3.0 * 3f64.sqrt()) }
                }
            }
            TestFunctional::GaussBump { width, .. } => {
                let s2 = width * width;
                SupNorms { phi: 1.0, grad: (-0.5f64).exp() / width, laplacian: dim as f64 / s2 }
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, TestFunctional::TanhCoord { a, .. } if *a == 0.0)
    }
}

/// Sample mean of `phi` over `xs` with its standard error.
pub fn eval_g_samples(phi: &TestFunctional, xs: &[Vec<f64>]) -> Result<Estimate> {
    if xs.len() < 2 {
        return Err(LabError::invalid("samples", format!("need at least 2 samples, got {}", xs.len())));
    }
    phi.validate(xs[0].len())?;
    let vals: Vec<f64> = xs.iter().map(|x| phi.value(x)).collect();
    Ok(estimate_of(&vals))
}

fn estimate_of(vals: &[f64]) -> Estimate {
    if vals.iter().all(|v| *v == vals[0]) {
        Estimate { mean: vals[0], se: 0.0 }
    } else {
        Estimate::from_samples(vals)
    }
}

/// `<phi, m>` by Gauss-Hermite quadrature per mixture component. Both
/// functionals are separable across coordinates, so the cost is linear in
/// the dimension and no Monte Carlo fallback is needed.
pub fn eval_g_exact(phi: &TestFunctional, m: &Marginal) -> Result<f64> {
    eval_g_exact_with(phi, m, &GaussHermite::new(DEFAULT_HERMITE_ORDER)?)
}

pub fn eval_g_exact_with(phi: &TestFunctional, m: &Marginal, gh: &GaussHermite) -> Result<f64> {
    phi.validate(m.dim())?;
    let var = m.variance();
    let mut total = 0.0;
    for (i, &w) in m.weights().iter().enumerate() {
        let c = m.center(i);
        let v = match phi {
            TestFunctional::TanhCoord { axis, a, b } => {
                if var == 0.0 {
                    (a * c[*axis] + b).tanh()
                } else {
                    gh.expect_normal(c[*axis], var, |z| (a * z + b).tanh())
                }
            }
            TestFunctional::GaussBump { center, width } => {
                let k = 0.5 / (width * width);
                c.iter()
                    .zip(center)
                    .map(|(&ci, &bi)| {
                        if var == 0.0 {
                            (-k * (ci - bi) * (ci - bi)).exp()
                        } else {
                            gh.expect_normal(ci, var, |z| (-k * (z - bi) * (z - bi)).exp())
                        }
                    })
                    .product()
            }
        };
        total += w * v;
    }
    Ok(total)
}

/// `G(m_0)` for the target itself.
pub fn eval_g_target(phi: &TestFunctional, target: &TargetSpec) -> Result<f64> {
    eval_g_exact(phi, &Marginal::at_level(target, 0.0, 0.0))
}

/// The terms of the weak-error bound for one configured run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetTerms {
    /// `e^{-g(T)}`.
    pub mixing: f64,
    /// `1/N` for an `N`-point empirical target, 0 for a Gaussian target.
    pub inv_n: f64,
    /// Squared perturbation magnitude of the score model.
    pub eps2: f64,
    /// `h sum_k int_{t_k}^{t_{k+1}} g'(T-t)^2 dt e^{2(delta - g(T - t_{k+1}))}`.
    pub discretization: f64,
}

pub fn budget_terms(target: &TargetSpec, score: &ScoreModel, cfg: &ReverseConfig) -> Result<BudgetTerms> {
    let s = &cfg.scheduler;
    let gl = GaussLegendre::new(16)?;
    let times = cfg.times();
    let levels = cfg.levels()?;
    let mut disc = 0.0;
    let mut err = None;
    for k in 0..cfg.steps {
        let inner =
            gl.integrate(times[k], times[k + 1], |t| match s.eval_gdot((cfg.horizon - t).clamp(0.0, cfg.horizon)) {
                Ok(v) => v * v,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            });
        disc += inner * (2.0 * (cfg.delta - levels[k + 1])).exp();
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BudgetTerms {
        mixing: (-s.eval_g(cfg.horizon)?).exp(),
        inv_n: target.n_points().map_or(0.0, |n| 1.0 / n as f64),
        eps2: match &score.variant {
            ScoreVariant::ExactP => 0.0,
            ScoreVariant::Perturbed { eps, .. } => eps * eps,
        },
        discretization: cfg.step_size() * disc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorReport {
    /// `G(m_0)`.
    pub g_target: f64,
    /// `G_hat - G(m_0)` per replicate.
    pub signed_errors: Vec<f64>,
    /// Mean over replicates of `(G_hat - G(m_0))^2`.
    pub mse: f64,
    /// Bootstrap interval for `mse`.
    pub mse_ci: (f64, f64),
    /// Mean signed error across replicates.
    pub bias: Estimate,
    pub budget: BudgetTerms,
    pub n_paths: usize,
}

/// Runs `reps` independent batches of `n_paths` backward paths, each with
/// seed `derive_seed(cfg.seed, rep)`, and compares the sample mean of `phi`
/// with `G(m_0)`.
pub fn weak_error_experiment(
    target: &TargetSpec,
    score: &ScoreModel,
    cfg: &ReverseConfig,
    phi: &TestFunctional,
    reps: usize,
    n_paths: usize,
) -> Result<WeakErrorReport> {
    if reps < 10 {
        return Err(LabError::invalid("reps", format!("need at least 10 replicates, got {reps}")));
    }
    if n_paths < 2 {
        return Err(LabError::invalid("n_paths", "need at least 2 paths"));
    }
    if &score.target != target {
        return Err(LabError::invalid("target", "score model is built on a different target"));
    }
    phi.validate(target.dim())?;
    let g_target = eval_g_target(phi, target)?;
    let mut signed = Vec::with_capacity(reps);
    for rep in 0..reps {
        let run = ReverseConfig { seed: derive_seed(cfg.seed, rep as u64), ..cfg.clone() };
        let vals = run_reverse_map(score, &run, n_paths, |x| phi.value(x))?;
        signed.push(vals.iter().sum::<f64>() / n_paths as f64 - g_target);
    }
    let squares: Vec<f64> = signed.iter().map(|e| e * e).collect();
    let mut rng = stream(derive_seed(cfg.seed, BOOTSTRAP_TAG), 0);
    let mse_ci = bootstrap_mean_ci(&squares, BOOTSTRAP_RESAMPLES, 0.95, &mut rng);
    Ok(WeakErrorReport {
        g_target,
        mse: squares.iter().sum::<f64>() / reps as f64,
        mse_ci,
        bias: estimate_of(&signed),
        signed_errors: signed,
        budget: budget_terms(target, score, cfg)?,
        n_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatErrorRow {
    #[serde(rename = "N")]
    pub n: usize,
    /// Mean over replicates of `|<phi, m_t^N> - <phi, m_t>|^2`.
    pub mean_sq_gap: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatErrorReport {
    pub rows: Vec<StatErrorRow>,
    /// Log-log slope of `mean_sq_gap` against `N`; `None` when degenerate.
    pub slope: Option<f64>,
    /// Every gap vanished (constant `phi` or a one-point target).
    pub degenerate: bool,
}

/// Statistical error of the empirical measure propagated to time `t`:
/// for each `N`, `reps` empirical samples of size `N` are drawn from the
/// target and their time-`t` marginal is compared with the true one.
pub fn stat_error_experiment(
    target: &TargetSpec,
    phi: &TestFunctional,
    s: &Scheduler,
    t: f64,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<StatErrorReport> {
    if n_list.len() < 4 {
        return Err(LabError::invalid("N", "need at least 4 sample sizes"));
    }
    if n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::invalid("N", "must be positive and strictly increasing"));
    }
    if reps < 2 {
        return Err(LabError::invalid("reps", "need at least 2 replicates"));
    }
    target.validate()?;
    phi.validate(target.dim())?;
    let g = s.eval_g(t)?;
    let gh = GaussHermite::new(DEFAULT_HERMITE_ORDER)?;
    let exact = eval_g_exact_with(phi, &Marginal::at_level(target, t, g), &gh)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let gaps = map_paths(reps, |rep| {
            let mut rng = stream(derive_seed(seed, n as u64), rep as u64);
            let emp = TargetSpec::Empirical { points: target.sample(&mut rng, n) };
            let v = eval_g_exact_with(phi, &Marginal::at_level(&emp, t, g), &gh)?;
            Ok((v - exact) * (v - exact))
        })?;
        let e = estimate_of(&gaps);
        rows.push(StatErrorRow { n, mean_sq_gap: e.mean, se: e.se });
    }
    let degenerate = phi.is_constant() || rows.iter().all(|r| r.mean_sq_gap < 1e-28);
    let slope = if degenerate {
        None
    } else {
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean_sq_gap).collect();
        loglog_slope(&x, &y)
    };
    Ok(StatErrorReport { rows, slope, degenerate })
}

impl StatErrorReport {
    pub fn panel(&self, title: &str) -> Panel {
        let pts = self.rows.iter().map(|r| (r.n as f64, r.mean_sq_gap)).collect();
        let reference = self
            .rows
            .first()
            .map(|r0| self.rows.iter().map(|r| (r.n as f64, r0.mean_sq_gap * r0.n as f64 / r.n as f64)).collect());
        let mut p = Panel::new(title, "N", "mean squared gap").log_log().with(Series::scatter("measured", pts));
        if let Some(r) = reference {
            p = p.with(Series::line("1/N", r));
        }
        p
    }

    /// Writes `<stem>.csv` (`N,mean_sq_gap,se`) and `<stem>.svg` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let header: Vec<String> = ["N", "mean_sq_gap", "se"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> =
            self.rows.iter().map(|r| vec![r.n.to_string(), r.mean_sq_gap.to_string(), r.se.to_string()]).collect();
        let csv = dir.join(format!("{stem}.csv"));
        let svg = dir.join(format!("{stem}.svg"));
        report::write_csv(&csv, &header, &rows)?;
        report::write_svg(&svg, &[self.panel(stem)])?;
        Ok(vec![csv, svg])
    }
}
