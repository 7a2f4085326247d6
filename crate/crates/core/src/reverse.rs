//! Discretized time reversal of the scheduled OU process.
//!
//! On the uniform grid `t_k = k h`, `h = (T - delta)/K`, the sampler solves
//!
//! ```text
//! dY = g'(T-t) (-Y + S_{T-t_k}(Y_{t_k})) dt + sqrt(g'(T-t)) dW,   t in [t_k, t_{k+1})
//! ```
//!
//! from `Y_0 ~ N(0, I/2)`, with the score frozen at the start of each
//! interval. With the score frozen the interval dynamics are a unit-rate OU
//! process in the clock `g`, so one step is an exact Gaussian draw with
//! `u = g(T - t_k) - g(T - t_{k+1})`:
//!
//! ```text
//! Y_{k+1} ~ N(Y_k e^{-u} + S (1 - e^{-u}), (1 - e^{-2u})/2 I)
//! ```

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::marginals::{InvariantMeasure, Marginal, TargetSpec, DEFAULT_TIME_FLOOR};
use crate::report;
use crate::rng::{stream, LabRng};
use crate::scheduler::Scheduler;
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrator {
    /// Exact conditional Gaussian per interval.
    ExactOu,
    /// Euler-Maruyama substeps of the same frozen-score SDE; for validation.
    Euler { substeps: usize },
}

/// Everything that defines one backward run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub scheduler: Scheduler,
    pub integrator: Integrator,
    pub seed: u64,
}

impl ReverseConfig {
    pub fn new(scheduler: Scheduler, delta: f64, steps: usize, seed: u64) -> Self {
        ReverseConfig { horizon: scheduler.horizon(), delta, steps, scheduler, integrator: Integrator::ExactOu, seed }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self, target: &TargetSpec) -> Result<()> {
        let sh = self.scheduler.horizon();
        if (self.horizon - sh).abs() > 1e-12 * sh {
            return Err(LabError::invalid("T", format!("{} differs from the scheduler horizon {sh}", self.horizon)));
        }
        if !(self.delta >= 0.0 && self.delta < self.horizon) {
            return Err(LabError::invalid("delta", format!("need 0 <= delta < T, got {}", self.delta)));
        }
        if self.steps == 0 {
            return Err(LabError::invalid("K", "need at least one step"));
        }
        if let Integrator::Euler { substeps: 0 } = self.integrator {
            return Err(LabError::invalid("integrator.substeps", "need at least one substep"));
        }
        if matches!(target, TargetSpec::Empirical { .. }) && self.delta < DEFAULT_TIME_FLOOR {
            return Err(LabError::invalid("delta", "empirical targets need delta > 0 (early stopping)"));
        }
        target.validate()
    }

    pub fn step_size(&self) -> f64 {
        (self.horizon - self.delta) / self.steps as f64
    }

    /// Backward grid `t_0 = 0 < ... < t_K = T - delta`.
    pub fn times(&self) -> Vec<f64> {
        let h = self.step_size();
        (0..=self.steps).map(|k| if k == self.steps { self.horizon - self.delta } else { k as f64 * h }).collect()
    }

    /// Forward times `T - t_k`, clamped into the scheduler domain.
    pub fn forward_times(&self) -> Vec<f64> {
        self.times().iter().map(|t| (self.horizon - t).clamp(0.0, self.horizon)).collect()
    }

    /// `g(T - t_k)` for every grid point.
    pub fn levels(&self) -> Result<Vec<f64>> {
        self.forward_times().iter().map(|&s| self.scheduler.eval_g(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreVariant {
    /// The exact p-score of the forward marginal.
    ExactP,
    /// Exact p-score plus `eps sin(wave . x) (1, ..., 1)/sqrt(d)`.
    Perturbed { eps: f64, wave: Vec<f64> },
}

/// Provider of `S*_t(x)`, an approximation of `grad log p_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    pub variant: ScoreVariant,
    pub target: TargetSpec,
    pub scheduler: Scheduler,
}

impl ScoreModel {
    pub fn exact(target: TargetSpec, scheduler: Scheduler) -> Self {
        ScoreModel { variant: ScoreVariant::ExactP, target, scheduler }
    }

    pub fn perturbed(target: TargetSpec, scheduler: Scheduler, eps: f64, wave: Vec<f64>) -> Self {
        ScoreModel { variant: ScoreVariant::Perturbed { eps, wave }, target, scheduler }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if let ScoreVariant::Perturbed { eps, wave } = &self.variant {
            if !eps.is_finite() {
                return Err(LabError::invalid("eps", "must be finite"));
            }
            if wave.len() != self.target.dim() {
                return Err(LabError::invalid(
                    "wave",
                    format!("length {} != dimension {}", wave.len(), self.target.dim()),
                ));
            }
        }
        Ok(())
    }

    /// Forward marginal at time `t` (no time floor is applied; callers
    /// guarantee `g(t) > 0` for empirical targets).
    pub fn marginal(&self, t: f64) -> Result<Marginal> {
        Ok(Marginal::at_level(&self.target, t, self.scheduler.eval_g(t)?))
    }

    /// Perturbation term at `x`, added onto `out`.
    fn add_perturbation(&self, x: &[f64], out: &mut [f64]) {
        if let ScoreVariant::Perturbed { eps, wave } = &self.variant {
            let phase: f64 = wave.iter().zip(x).map(|(w, v)| w * v).sum();
            let amp = eps * phase.sin() / (x.len() as f64).sqrt();
            for o in out.iter_mut() {
                *o += amp;
            }
        }
    }

    /// `S*(x)` given the marginal at the evaluation time.
    pub fn eval_into(&self, m: &Marginal, x: &[f64], out: &mut [f64]) {
        m.score_p_into(x, out);
        self.add_perturbation(x, out);
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.marginal(t)?;
        let mut out = vec![0.0; x.len()];
        self.eval_into(&m, x, &mut out);
        Ok(out)
    }

    /// Monte Carlo estimate of the frozen-score matching error
    /// `sum_k (g(T-t_k) - g(T-t_{k+1})) E_{m_{T-t_k}} |grad log p - S*|^2`.
    pub fn matching_error_mc(&self, cfg: &ReverseConfig, n: usize, seed: u64) -> Result<Estimate> {
        cfg.validate(&self.target)?;
        let levels = cfg.levels()?;
        let fwd = cfg.forward_times();
        let d = self.target.dim();
        let (mut total, mut var) = (0.0, 0.0);
        let mut x = vec![0.0; d];
        let mut exact = vec![0.0; d];
        let mut approx = vec![0.0; d];
        for k in 0..cfg.steps {
            let m = Marginal::at_level(&self.target, fwd[k], levels[k]);
            let mut rng = stream(seed, k as u64);
            let vals: Vec<f64> = (0..n)
                .map(|_| {
                    m.sample_into(&mut rng, None, &mut x);
                    m.score_p_into(&x, &mut exact);
                    self.eval_into(&m, &x, &mut approx);
                    exact.iter().zip(&approx).map(|(a, b)| (a - b) * (a - b)).sum()
                })
                .collect();
            let e = Estimate::from_samples(&vals);
            let du = levels[k] - levels[k + 1];
            total += du * e.mean;
            var += du * du * e.se * e.se;
        }
        Ok(Estimate { mean: total, se: var.sqrt() })
    }
}

/// Mean contraction and variance of the OU kernel over clock increment `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuKernel {
    pub decay: f64,
    pub variance: f64,
}

impl OuKernel {
    pub fn new(u: f64) -> Self {
        OuKernel { decay: (-u).exp(), variance: -0.5 * (-2.0 * u).exp_m1() }
    }

    /// Conditional mean from state `x` with frozen drift target `s`.
    pub fn mean(&self, x: f64, s: f64) -> f64 {
        x * self.decay + s * (1.0 - self.decay)
    }

    /// Kernel of this step followed by `next`, for the same frozen drift.
    pub fn then(&self, next: &OuKernel) -> OuKernel {
        OuKernel { decay: self.decay * next.decay, variance: self.variance * next.decay * next.decay + next.variance }
    }

    pub fn step_in_place<R: Rng + ?Sized>(&self, x: &mut [f64], s: &[f64], rng: &mut R) {
        let sd = self.variance.sqrt();
        for (xi, si) in x.iter_mut().zip(s) {
            let z: f64 = rng.sample(StandardNormal);
            *xi = self.mean(*xi, *si) + sd * z;
        }
    }
}

/// One exact step of the frozen-score reverse dynamics from backward time
/// `t_k` to `t_next`.
pub fn exact_ou_step<R: Rng + ?Sized>(
    x: &[f64],
    s_frozen: &[f64],
    s: &Scheduler,
    horizon: f64,
    t_k: f64,
    t_next: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let u = s.eval_g(horizon - t_k)? - s.eval_g(horizon - t_next)?;
    if u < 0.0 {
        return Err(LabError::Integrator(format!("negative clock increment {u} between t = {t_k} and t = {t_next}")));
    }
    let mut out = x.to_vec();
    OuKernel::new(u).step_in_place(&mut out, s_frozen, rng);
    Ok(out)
}

/// Per-interval data precomputed once per run.
struct Plan {
    marginals: Vec<Marginal>,
    kernels: Vec<OuKernel>,
    /// `(g'(T - t), dt)` for each Euler substep, per interval.
    substeps: Vec<Vec<(f64, f64)>>,
}

fn plan(score: &ScoreModel, cfg: &ReverseConfig, all_substeps: Option<usize>) -> Result<Plan> {
    let levels = cfg.levels()?;
    let fwd = cfg.forward_times();
    let times = cfg.times();
    let mut marginals = Vec::with_capacity(cfg.steps);
    let mut kernels = Vec::with_capacity(cfg.steps);
    let mut substeps = Vec::new();
    for k in 0..cfg.steps {
        let u = levels[k] - levels[k + 1];
        if u < 0.0 {
            return Err(LabError::Integrator(format!("negative clock increment at step {k}")));
        }
        marginals.push(Marginal::at_level(&score.target, fwd[k], levels[k]));
        kernels.push(OuKernel::new(u));
        if let Some(m) = all_substeps {
            let dt = (times[k + 1] - times[k]) / m as f64;
            let sub = (0..m)
                .map(|j| {
                    let t = times[k] + j as f64 * dt;
                    Ok((cfg.scheduler.eval_gdot((cfg.horizon - t).clamp(0.0, cfg.horizon))?, dt))
                })
                .collect::<Result<Vec<_>>>()?;
            substeps.push(sub);
        }
    }
    Ok(Plan { marginals, kernels, substeps })
}

pub(crate) fn map_paths<T: Send>(n_paths: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_paths).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_paths).map(f).collect()
    }
}

fn check_finite(x: &[f64], step: usize, path: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LabError::NonFinite { step, path })
    }
}

/// Runs `n_paths` backward paths and maps each terminal state through `f`.
/// Path `i` uses random stream `i` under `cfg.seed`, so outputs do not
/// depend on the degree of parallelism.
pub fn run_reverse_map<T: Send>(
    score: &ScoreModel,
    cfg: &ReverseConfig,
    n_paths: usize,
    f: impl Fn(&[f64]) -> T + Sync + Send,
) -> Result<Vec<T>> {
    cfg.validate(&score.target)?;
    score.validate()?;
    if score.scheduler != cfg.scheduler {
        return Err(LabError::invalid("scheduler", "score model and config use different schedulers"));
    }
    let euler = match cfg.integrator {
        Integrator::Euler { substeps } => Some(substeps),
        Integrator::ExactOu => None,
    };
    let plan = plan(score, cfg, euler)?;
    let d = score.target.dim();
    let star = InvariantMeasure::new(d);
    map_paths(n_paths, |path| {
        let mut rng: LabRng = stream(cfg.seed, path as u64);
        let mut x = vec![0.0; d];
        let mut s = vec![0.0; d];
        star.sample_into(&mut rng, &mut x);
        for k in 0..cfg.steps {
            score.eval_into(&plan.marginals[k], &x, &mut s);
            match euler {
                None => plan.kernels[k].step_in_place(&mut x, &s, &mut rng),
                Some(_) => {
                    for &(rate, dt) in &plan.substeps[k] {
                        let sd = (rate * dt).sqrt();
                        for (xi, si) in x.iter_mut().zip(&s) {
                            let z: f64 = rng.sample(StandardNormal);
                            *xi += rate * (si - *xi) * dt + sd * z;
                        }
                    }
                }
            }
            check_finite(&x, k, path)?;
        }
        Ok(f(&x))
    })
}

/// Terminal states `Y_{T - delta}` of `n_paths` backward paths.
pub fn run_reverse(score: &ScoreModel, cfg: &ReverseConfig, n_paths: usize) -> Result<Vec<Vec<f64>>> {
    run_reverse_map(score, cfg, n_paths, |x| x.to_vec())
}

/// Fine Euler-Maruyama discretization of the continuous reversal with the
/// exact score re-evaluated at every step; `cfg.steps` sets the resolution
/// and `cfg.integrator` is ignored.
pub fn run_reverse_reference(target: &TargetSpec, cfg: &ReverseConfig, n_paths: usize) -> Result<Vec<Vec<f64>>> {
    cfg.validate(target)?;
    if n_paths == 0 {
        return Ok(Vec::new());
    }
    let score = ScoreModel::exact(target.clone(), cfg.scheduler.clone());
    let times = cfg.times();
    let fwd = cfg.forward_times();
    let levels = cfg.levels()?;
    let mut marginals = Vec::with_capacity(cfg.steps);
    let mut rates = Vec::with_capacity(cfg.steps);
    for k in 0..cfg.steps {
        marginals.push(Marginal::at_level(target, fwd[k], levels[k]));
        rates.push((cfg.scheduler.eval_gdot(fwd[k])?, times[k + 1] - times[k]));
    }
    let d = target.dim();
    let star = InvariantMeasure::new(d);
    map_paths(n_paths, |path| {
        let mut rng: LabRng = stream(cfg.seed, path as u64);
        let mut x = vec![0.0; d];
        let mut s = vec![0.0; d];
        star.sample_into(&mut rng, &mut x);
        for k in 0..cfg.steps {
            score.eval_into(&marginals[k], &x, &mut s);
            let (rate, dt) = rates[k];
            let sd = (rate * dt).sqrt();
            for (xi, si) in x.iter_mut().zip(&s) {
                let z: f64 = rng.sample(StandardNormal);
                *xi += rate * (si - *xi) * dt + sd * z;
            }
            check_finite(&x, k, path)?;
        }
        Ok(x)
    })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a ReverseConfig,
    score: &'a ScoreModel,
    n_paths: usize,
}

/// Writes samples as CSV (`x0,...,x{d-1}`, one row per path) plus a JSON
/// sidecar `<csv>.json` holding the config and score model.
pub fn write_samples(csv_path: &Path, samples: &[Vec<f64>], cfg: &ReverseConfig, score: &ScoreModel) -> Result<()> {
    let d = score.target.dim();
    let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let rows: Vec<Vec<String>> = samples.iter().map(|x| x.iter().map(|v| v.to_string()).collect()).collect();
    report::write_csv(csv_path, &header, &rows)?;
    let sidecar = Sidecar { config: cfg, score, n_paths: samples.len() };
    let mut json_path = csv_path.as_os_str().to_owned();
    json_path.push(".json");
    report::write_atomic(Path::new(&json_path), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::SchedulerKind;

    fn mean_se(xs: &[Vec<f64>], j: usize) -> Estimate {
        Estimate::from_samples(&xs.iter().map(|x| x[j]).collect::<Vec<_>>())
    }

    #[test]
    fn kernel_limits() {
        let s = Scheduler::linear(1.0, 2.0).unwrap();
        let mut rng = stream(0, 0);
        let x = vec![0.3, -1.2];
        let same = exact_ou_step(&x, &[5.0, 5.0], &s, 1.0, 0.4, 0.4, &mut rng).unwrap();
        assert_eq!(same, x);
        let k = OuKernel::new(0.7);
        assert_eq!(k.mean(2.0, 2.0), 2.0);
        assert!((k.variance - (1.0 - (-1.4f64).exp()) / 2.0).abs() < 1e-15);
        assert!(exact_ou_step(&x, &x, &s, 1.0, 0.5, 0.4, &mut rng).is_err());
    }

    #[test]
    fn kernel_mean_closed_form() {
        let s_frozen = 2.0 * (-5.0f64).exp();
        let k = OuKernel::new(5.0);
        let m = k.mean(0.0, s_frozen);
        assert!((m - 2.0 * (-5.0f64).exp() * (1.0 - (-5.0f64).exp())).abs() < 1e-17);
        assert!((m - 0.0133851).abs() < 1e-7);
    }

    #[test]
    fn kernel_composition_is_exact() {
        for (u1, u2) in [(0.1, 0.2), (1.5, 0.01), (3.0, 4.0), (1e-9, 2.0)] {
            let a = OuKernel::new(u1).then(&OuKernel::new(u2));
            let b = OuKernel::new(u1 + u2);
            assert!((a.decay - b.decay).abs() <= 1e-12 * b.decay);
            assert!((a.variance - b.variance).abs() <= 1e-12 * b.variance);
            let (x, s) = (0.7, -1.3);
            let two = OuKernel::new(u2).mean(OuKernel::new(u1).mean(x, s), s);
            assert!((two - b.mean(x, s)).abs() <= 1e-12);
        }
    }

    #[test]
    fn stationary_target_stays_centered() {
        let sched = Scheduler::linear(1.0, 5.0).unwrap();
        let target = TargetSpec::gaussian(vec![0.0], 0.5).unwrap();
        let cfg = ReverseConfig::new(sched.clone(), 0.0, 10, 4);
        let out = run_reverse(&ScoreModel::exact(target, sched), &cfg, 100_000).unwrap();
        let e = mean_se(&out, 0);
        assert!(e.agrees_with(0.0, 4.0), "{e:?}");
    }

    #[test]
    fn euler_substeps_agree_with_exact_kernel() {
        let sched = Scheduler::make_optimal(1.0, 3.0).unwrap();
        let target = TargetSpec::gaussian(vec![1.0], 1.0).unwrap();
        let score = ScoreModel::exact(target, sched.clone());
        let exact = ReverseConfig::new(sched.clone(), 0.0, 10, 1);
        let euler = ReverseConfig::new(sched, 0.0, 10, 2).with_integrator(Integrator::Euler { substeps: 100 });
        let a = mean_se(&run_reverse(&score, &exact, 50_000).unwrap(), 0);
        let b = mean_se(&run_reverse(&score, &euler, 50_000).unwrap(), 0);
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!((a.mean - b.mean).abs() <= 4.0 * se, "{a:?} {b:?}");
    }

    #[test]
    fn seed_determinism() {
        let sched = Scheduler::cosine(1.0, 2.0).unwrap();
        let target = TargetSpec::empirical(vec![vec![1.0, 0.0], vec![-1.0, 0.5]]).unwrap();
        let score = ScoreModel::perturbed(target, sched.clone(), 0.1, vec![1.0, 2.0]);
        let cfg = ReverseConfig::new(sched, 0.05, 15, 99);
        let a = run_reverse(&score, &cfg, 500).unwrap();
        let b = run_reverse(&score, &cfg, 500).unwrap();
        assert_eq!(a, b);
        let c = run_reverse(&score, &ReverseConfig { seed: 100, ..cfg }, 500).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        let sched = Scheduler::linear(1.0, 2.0).unwrap();
        let gauss = TargetSpec::gaussian(vec![0.0], 1.0).unwrap();
        let emp = TargetSpec::empirical(vec![vec![0.0]]).unwrap();
        assert!(ReverseConfig::new(sched.clone(), 0.0, 5, 0).validate(&gauss).is_ok());
        assert!(ReverseConfig::new(sched.clone(), 0.0, 5, 0).validate(&emp).is_err());
        assert!(ReverseConfig::new(sched.clone(), 0.01, 5, 0).validate(&emp).is_ok());
        assert!(ReverseConfig::new(sched.clone(), 1.0, 5, 0).validate(&gauss).is_err());
        assert!(ReverseConfig::new(sched.clone(), 0.0, 0, 0).validate(&gauss).is_err());
        let mut cfg = ReverseConfig::new(sched.clone(), 0.0, 5, 0);
        cfg.horizon = 2.0;
        assert!(cfg.validate(&gauss).is_err());
        let other = ScoreModel::exact(gauss.clone(), Scheduler::linear(1.0, 3.0).unwrap());
        assert!(run_reverse(&other, &ReverseConfig::new(sched, 0.0, 5, 0), 1).is_err());
    }

    #[test]
    fn grid_is_uniform_and_ends_at_t_minus_delta() {
        let cfg = ReverseConfig::new(Scheduler::make_optimal(2.0, 1.0).unwrap(), 0.1, 7, 0);
        let t = cfg.times();
        assert_eq!(t.len(), 8);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[7], 1.9);
        for w in t.windows(2) {
            assert!((w[1] - w[0] - cfg.step_size()).abs() < 1e-14);
        }
        assert_eq!(cfg.forward_times()[0], 2.0);
    }

    #[test]
    fn perturbed_matching_error_within_budget() {
        let sched = Scheduler::linear(1.0, 3.0).unwrap();
        let target = TargetSpec::empirical(vec![vec![0.5, -0.2], vec![-1.0, 1.0]]).unwrap();
        let eps = 0.2;
        let score = ScoreModel::perturbed(target, sched.clone(), eps, vec![1.5, -0.5]);
        let cfg = ReverseConfig::new(sched.clone(), 0.05, 20, 0);
        let e = score.matching_error_mc(&cfg, 4000, 17).unwrap();
        let budget = eps * eps * (sched.eval_g(1.0).unwrap() - sched.eval_g(0.05).unwrap());
        assert!(e.mean >= -3.0 * e.se && e.mean <= budget + 3.0 * e.se, "{e:?} budget {budget}");
        assert!(e.mean > 0.0);
        let exact = ScoreModel::exact(score.target.clone(), sched);
        assert_eq!(exact.matching_error_mc(&cfg, 200, 1).unwrap().mean, 0.0);
    }

    #[test]
    fn reference_handles_empty_runs() {
        let sched = Scheduler::closed_form(SchedulerKind::Linear, 1.0, 5.0).unwrap();
        let cfg = ReverseConfig::new(sched, 0.0, 10, 0);
        let target = TargetSpec::gaussian(vec![1.0], 0.5).unwrap();
        assert!(run_reverse_reference(&target, &cfg, 0).unwrap().is_empty());
    }

    #[test]
    fn samples_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let sched = Scheduler::linear(1.0, 1.0).unwrap();
        let target = TargetSpec::gaussian(vec![0.0, 1.0], 0.5).unwrap();
        let score = ScoreModel::exact(target, sched.clone());
        let cfg = ReverseConfig::new(sched, 0.0, 3, 5);
        let xs = run_reverse(&score, &cfg, 4).unwrap();
        let path = dir.path().join("samples.csv");
        write_samples(&path, &xs, &cfg, &score).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), vec!["x0", "x1"]);
        let back: Vec<Vec<f64>> =
            rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(back, xs);
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("samples.csv.json")).unwrap()).unwrap();
        let cfg_back: ReverseConfig = serde_json::from_value(side["config"].clone()).unwrap();
        assert_eq!(cfg_back, cfg);
    }
}
