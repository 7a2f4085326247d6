//! Numerical solution of the scheduler variational problem
//!
//! ```text
//! minimize  int_0^T g'(t)^2 e^{-2g(t)} dt   subject to  g(0) = 0, g(T) = T'
//! ```
//!
//! In `y = e^{-g}` the integrand is `y'^2`, so the minimizer has `y` affine
//! in `t`. Paths are represented by knot values and interpolated linearly
//! in `y`, which makes the discrete objective the exact integral of the
//! interpolant and keeps the closed-form optimum a discrete minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature::GaussLegendre;
use crate::scheduler::{Scheduler, SchedulerKind};

/// Lower clamp for `y = e^{-g}` keeping `g` finite.
const Y_FLOOR: f64 = 1e-300;
/// Relative objective rise that counts as an increase in the trace.
const TRACE_TOL: f64 = 1e-12;
const MAX_RISES: usize = 10;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveMode {
    ContinuousObjective,
    /// The frozen-score sum on the grid of `K` steps with early stop `delta`.
    DiscreteObjective {
        #[serde(rename = "K")]
        steps: usize,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalProblem {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "Tprime")]
    pub terminal: f64,
    pub n_knots: usize,
    pub mode: ObjectiveMode,
}

impl VariationalProblem {
    pub fn continuous(horizon: f64, terminal: f64, n_knots: usize) -> Self {
        VariationalProblem { horizon, terminal, n_knots, mode: ObjectiveMode::ContinuousObjective }
    }

    pub fn discrete(horizon: f64, terminal: f64, steps: usize, delta: f64) -> Self {
        VariationalProblem {
            horizon,
            terminal,
            n_knots: steps + 1,
            mode: ObjectiveMode::DiscreteObjective { steps, delta },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(LabError::invalid("T", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.terminal >= 0.0 && self.terminal.is_finite()) {
            return Err(LabError::invalid("Tprime", format!("must be nonnegative, got {}", self.terminal)));
        }
        match self.mode {
            ObjectiveMode::ContinuousObjective => {
                if self.n_knots < 3 {
                    return Err(LabError::invalid("n_knots", format!("need at least 3, got {}", self.n_knots)));
                }
            }
            ObjectiveMode::DiscreteObjective { steps, delta } => {
                if steps < 2 {
                    return Err(LabError::invalid("K", format!("need at least 2 steps, got {steps}")));
                }
                if !(delta >= 0.0 && delta < self.horizon) {
                    return Err(LabError::invalid("delta", format!("need 0 <= delta < T, got {delta}")));
                }
                if delta > self.terminal {
                    return Err(LabError::invalid("delta", "the pin g(delta) = delta needs delta <= Tprime"));
                }
            }
        }
        Ok(())
    }

    /// Knot times and the two pinned values `(g_first, g_last)`.
    fn layout(&self) -> (Vec<f64>, f64) {
        match self.mode {
            ObjectiveMode::ContinuousObjective => (grid(0.0, self.horizon, self.n_knots - 1), 0.0),
            ObjectiveMode::DiscreteObjective { steps, delta } => (grid(delta, self.horizon, steps), delta),
        }
    }
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
}

/// `int_0^T g'^2 e^{-2g} dt` for `g` sampled on a uniform grid of `[0, T]`,
/// taken as the exact integral of the path that is linear in `e^{-g}`
/// between samples: `sum_i (e^{-g_{i+1}} - e^{-g_i})^2 / dt`.
pub fn objective_continuous(g: &[f64], horizon: f64) -> Result<f64> {
    if g.len() < 3 {
        return Err(LabError::invalid("g", format!("need at least 3 samples, got {}", g.len())));
    }
    if g[0].abs() > 1e-9 {
        return Err(LabError::invalid("g", format!("g(0) must be 0, got {}", g[0])));
    }
    if g.windows(2).any(|w| w[1] < w[0]) {
        log::warn!("objective evaluated on a decreasing path");
    }
    let dt = horizon / (g.len() - 1) as f64;
    Ok(g.windows(2)
        .map(|w| {
            let dy = (-w[1]).exp() - (-w[0]).exp();
            dy * dy
        })
        .sum::<f64>()
        / dt)
}

/// `sum_k int_{t_k}^{t_{k+1}} g'(T-t)^2 dt e^{-2g(T-t_{k+1})}` on the grid
/// `t_k = k (T - delta)/K`, inner integrals by 16-point Gauss-Legendre.
pub fn objective_discrete(s: &Scheduler, horizon: f64, delta: f64, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(LabError::invalid("K", "need at least one step"));
    }
    if !(delta >= 0.0 && delta < horizon) {
        return Err(LabError::invalid("delta", format!("need 0 <= delta < T, got {delta}")));
    }
    let gl = GaussLegendre::new(16)?;
    let h = (horizon - delta) / steps as f64;
    let mut total = 0.0;
    for k in 0..steps {
        let (t0, t1) = (k as f64 * h, if k + 1 == steps { horizon - delta } else { (k + 1) as f64 * h });
        let mut err = None;
        let inner = gl.integrate(t0, t1, |t| match s.eval_gdot((horizon - t).clamp(0.0, horizon)) {
            Ok(v) => v * v,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += inner * (-2.0 * s.eval_g(horizon - t1)?).exp();
    }
    Ok(total)
}

/// `g'' - g'^2 = -y''/y` at interior knots of a uniform path, with `y''`
/// by second differences of `y = e^{-g}`.
pub fn euler_lagrange_residuals(g: &[f64], horizon: f64) -> Vec<f64> {
    let dt = horizon / (g.len() - 1) as f64;
    let y: Vec<f64> = g.iter().map(|v| (-v).exp()).collect();
    y.windows(3).map(|w| -(w[2] - 2.0 * w[1] + w[0]) / (dt * dt * w[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    /// Knot times.
    pub times: Vec<f64>,
    /// `g` at the knots.
    pub path: Vec<f64>,
    /// Objective after every accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub convex: bool,
}

impl Minimizer {
    /// The minimizer as a piecewise-linear scheduler on `[0, T]`; in
    /// discrete mode with `delta > 0` the segment `[0, delta]` has slope 1.
    pub fn to_scheduler(&self) -> Result<Scheduler> {
        let mut knots = Vec::with_capacity(self.times.len() + 1);
        if self.times[0] > 0.0 {
            knots.push((0.0, 0.0));
        }
        knots.extend(self.times.iter().copied().zip(self.path.iter().copied()));
        Scheduler::piecewise(knots)
    }
}

enum Objective {
    /// `sum (y_{i+1} - y_i)^2 / dt` in the variable `y`.
    Continuous { dt: f64 },
    /// `sum e^{-2 g_j} (g_{j+1} - g_j)^2 / h` in the variable `g`.
    Discrete { h: f64 },
}

impl Objective {
    fn value(&self, z: &[f64]) -> f64 {
        match *self {
            Objective::Continuous { dt } => z.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / dt,
            Objective::Discrete { h } => {
                z.windows(2).map(|w| (-2.0 * w[0]).exp() * (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / h
            }
        }
    }

    /// Gradient with respect to the interior entries; the ends are pinned.
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let n = z.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = match *self {
                Objective::Continuous { dt } => 2.0 * (2.0 * z[i] - z[i - 1] - z[i + 1]) / dt,
                Objective::Discrete { h } => {
                    let d = z[i + 1] - z[i];
                    let dm = z[i] - z[i - 1];
                    let wi = (-2.0 * z[i]).exp();
                    (-2.0 * wi * d * d - 2.0 * wi * d + 2.0 * (-2.0 * z[i - 1]).exp() * dm) / h
                }
            };
        }
    }

    fn project(&self, z: &mut [f64]) {
        if let Objective::Continuous { .. } = self {
            for v in z.iter_mut() {
                *v = v.clamp(Y_FLOOR, 1.0);
            }
        }
    }
}

/// Projected gradient descent from the linear scheduler.
pub fn minimize(p: &VariationalProblem, iters: usize, step: f64) -> Result<Minimizer> {
    p.validate()?;
    let (times, g_first) = p.layout();
    let span = p.horizon - times[0];
    let init: Vec<f64> = times.iter().map(|t| g_first + (p.terminal - g_first) * (t - times[0]) / span).collect();
    minimize_from(p, &init, iters, step)
}

/// Projected gradient descent with Armijo backtracking from the knot
/// values `g_init`; the first and last entries are pinned and kept exactly.
pub fn minimize_from(p: &VariationalProblem, g_init: &[f64], iters: usize, step: f64) -> Result<Minimizer> {
    p.validate()?;
    if iters == 0 {
        return Err(LabError::invalid("iters", "need at least one iteration"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(LabError::invalid("step", format!("must be positive, got {step}")));
    }
    let (times, g_first) = p.layout();
    if g_init.len() != times.len() {
        return Err(LabError::invalid("g_init", format!("need {} knot values, got {}", times.len(), g_init.len())));
    }
    let dt = times[1] - times[0];
    let (obj, mut z) = match p.mode {
        ObjectiveMode::ContinuousObjective => {
            (Objective::Continuous { dt }, g_init.iter().map(|g| (-g).exp()).collect::<Vec<_>>())
        }
        ObjectiveMode::DiscreteObjective { .. } => (Objective::Discrete { h: dt }, g_init.to_vec()),
    };
    let n = z.len();
    let (first, last) = match obj {
        Objective::Continuous { .. } => ((-g_first).exp(), (-p.terminal).exp()),
        Objective::Discrete { .. } => (g_first, p.terminal),
    };
    z[0] = first;
    z[n - 1] = last;
    obj.project(&mut z);

    let mut f = obj.value(&z);
    let mut trace = vec![f];
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut alpha = step;
    let mut rises = 0;
    let mut iterations = 0;
    while iterations < iters {
        obj.gradient(&z, &mut grad);
        let gnorm2: f64 = grad.iter().map(|v| v * v).sum();
        if gnorm2 == 0.0 {
            break;
        }
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..MAX_HALVINGS {
            for i in 0..n {
                trial[i] = z[i] - a * grad[i];
            }
            trial[0] = first;
            trial[n - 1] = last;
            obj.project(&mut trial);
            let ft = obj.value(&trial);
            // projected Armijo condition
            let moved: f64 = trial.iter().zip(&z).map(|(t, v)| (t - v) * (t - v)).sum();
            if ft.is_finite() && ft <= f - 1e-4 * moved / a {
                accepted = Some((a, ft));
                break;
            }
            a *= 0.5;
        }
        let Some((a, ft)) = accepted else { break };
        if ft > f + TRACE_TOL * f.abs() {
            rises += 1;
            if rises >= MAX_RISES {
                return Err(LabError::StepSize { step: a, count: rises });
            }
        } else {
            rises = 0;
        }
        let stalled = f - ft <= 1e-16 * f.abs();
        std::mem::swap(&mut z, &mut trial);
        f = ft;
        trace.push(f);
        iterations += 1;
        alpha = (2.0 * a).min(step);
        if stalled {
            break;
        }
    }

    let path: Vec<f64> = match obj {
        Objective::Continuous { .. } => z.iter().map(|y| -y.ln()).collect(),
        Objective::Discrete { .. } => z.clone(),
    };
    let mut path = path;
    path[0] = g_first;
    path[n - 1] = p.terminal;
    let m = Minimizer { times, path, trace, iterations, convex: true };
    let convex = m.to_scheduler().map(|s| s.is_convex()).unwrap_or(false);
    if !convex {
        log::warn!("minimizer is not convex");
    }
    Ok(Minimizer { convex, ..m })
}

/// Gap between the closed-form optimum and the best of the tested
/// schedulers under the discrete objective, with the `O(h) + O(e^{-T'})`
/// reference scale `h + e^{-T'}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemarkGap {
    pub discrete_optimal: f64,
    pub best: f64,
    pub best_name: String,
    pub gap: f64,
    pub scale: f64,
}

pub fn remark_gap(horizon: f64, terminal: f64, steps: usize, delta: f64, iters: usize) -> Result<RemarkGap> {
    let p = VariationalProblem::discrete(horizon, terminal, steps, delta);
    let opt = Scheduler::make_optimal(horizon, terminal)?;
    let discrete_optimal = objective_discrete(&opt, horizon, delta, steps)?;
    let mut candidates = Vec::new();
    for kind in SchedulerKind::CLOSED_FORM {
        let s = Scheduler::closed_form(kind, horizon, terminal)?;
        candidates.push((kind.as_str().to_string(), objective_discrete(&s, horizon, delta, steps)?));
    }
    let h = (horizon - delta) / steps as f64;
    let m = minimize(&p, iters, 0.25 * h)?;
    candidates.push(("discrete minimizer".into(), objective_discrete(&m.to_scheduler()?, horizon, delta, steps)?));
    let (best_name, best) = candidates.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty candidate list");
    Ok(RemarkGap { discrete_optimal, best, best_name, gap: discrete_optimal - best, scale: h + (-terminal).exp() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup_dist(m: &Minimizer, s: &Scheduler) -> f64 {
        m.times.iter().zip(&m.path).map(|(&t, &g)| (g - s.eval_g(t).unwrap()).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn continuous_objective_values() {
        assert_eq!(objective_continuous(&[0.0; 11], 1.0).unwrap(), 0.0);
        let lin = Scheduler::linear(1.0, 5.0).unwrap();
        let v = objective_continuous(&lin.sample_path(10_001).unwrap(), 1.0).unwrap();
        assert!((v - 2.5 * (1.0 - (-10.0f64).exp())).abs() < 1e-6, "{v}");
        let opt = Scheduler::make_optimal(1.0, 5.0).unwrap();
        let v = objective_continuous(&opt.sample_path(101).unwrap(), 1.0).unwrap();
        assert!((v - 0.986570).abs() < 1e-6, "{v}");
        assert!(objective_continuous(&[0.1, 0.2, 0.3], 1.0).is_err());
        assert!(objective_continuous(&[0.0, 0.2], 1.0).is_err());
    }

    #[test]
    fn discrete_objective_limits() {
        let flat = Scheduler::linear(1.0, 0.0).unwrap();
        assert_eq!(objective_discrete(&flat, 1.0, 0.0, 50).unwrap(), 0.0);
        for s in [Scheduler::linear(1.0, 5.0).unwrap(), Scheduler::make_optimal(1.0, 5.0).unwrap()] {
            let c = objective_continuous(&s.sample_path(20_001).unwrap(), 1.0).unwrap();
            let d1 = objective_discrete(&s, 1.0, 0.0, 1000).unwrap();
            let d2 = objective_discrete(&s, 1.0, 0.0, 2000).unwrap();
            let richardson = 2.0 * d2 - d1;
            assert!((richardson - c).abs() <= 1e-4 * c, "{richardson} vs {c}");
        }
        let lin = objective_discrete(&Scheduler::linear(1.0, 5.0).unwrap(), 1.0, 0.0, 100).unwrap();
        let opt = objective_discrete(&Scheduler::make_optimal(1.0, 5.0).unwrap(), 1.0, 0.0, 100).unwrap();
        assert!(opt < lin);
    }

    #[test]
    fn recovers_closed_form_optimum() {
        for tp in [1.0, 5.0] {
            let p = VariationalProblem::continuous(1.0, tp, 101);
            let m = minimize(&p, 200_000, 1.0).unwrap();
            let opt = Scheduler::make_optimal(1.0, tp).unwrap();
            assert!(sup_dist(&m, &opt) <= 1e-3, "T'={tp}: {}", sup_dist(&m, &opt));
            let f_opt = objective_continuous(&opt.sample_path(101).unwrap(), 1.0).unwrap();
            let f_min = objective_continuous(&m.path, 1.0).unwrap();
            assert!((f_min - f_opt).abs() <= 1e-6);
            assert!(m.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
            assert_eq!(m.path[0], 0.0);
            assert_eq!(m.path[100], tp);
            assert!(m.convex);
        }
    }

    #[test]
    fn closed_form_is_stationary() {
        let opt = Scheduler::make_optimal(1.0, 3.0).unwrap();
        let p = VariationalProblem::continuous(1.0, 3.0, 51);
        let m = minimize_from(&p, &opt.sample_path(51).unwrap(), 20, 1.0).unwrap();
        for w in m.trace.windows(2) {
            assert!((w[0] - w[1]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_terminal_gives_zero_path() {
        let m = minimize(&VariationalProblem::continuous(1.0, 0.0, 21), 100, 1.0).unwrap();
        assert!(m.path.iter().all(|&g| g.abs() < 1e-15));
    }

    #[test]
    fn euler_lagrange_of_minimizer() {
        let m = minimize(&VariationalProblem::continuous(1.0, 5.0, 201), 400_000, 1.0).unwrap();
        let r = euler_lagrange_residuals(&m.path, 1.0);
        let worst = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 1e-2, "{worst}");
    }

    #[test]
    fn discrete_mode_pins_and_improves() {
        let p = VariationalProblem::discrete(1.0, 5.0, 50, 0.01);
        let m = minimize(&p, 200_000, 0.005).unwrap();
        assert_eq!(m.path[0], 0.01);
        assert_eq!(m.times[0], 0.01);
        let s = m.to_scheduler().unwrap();
        assert_eq!(s.eval_g(0.01).unwrap(), 0.01);
        let fm = objective_discrete(&s, 1.0, 0.01, 50).unwrap();
        for kind in SchedulerKind::CLOSED_FORM {
            let other = objective_discrete(&Scheduler::closed_form(kind, 1.0, 5.0).unwrap(), 1.0, 0.01, 50).unwrap();
            assert!(fm <= other + 1e-9, "{kind:?}: {fm} > {other}");
        }
    }

    #[test]
    fn remark_gap_is_small() {
        let r = remark_gap(1.0, 5.0, 100, 0.0, 100_000).unwrap();
        assert!(r.gap >= 0.0 && r.gap <= 5.0 * r.scale, "{r:?}");
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(minimize(&VariationalProblem::continuous(1.0, 1.0, 2), 10, 1.0).is_err());
        assert!(minimize(&VariationalProblem::continuous(1.0, 1.0, 11), 0, 1.0).is_err());
        assert!(minimize(&VariationalProblem::continuous(1.0, 1.0, 11), 10, -1.0).is_err());
        assert!(minimize(&VariationalProblem::discrete(1.0, 1.0, 10, 1.0), 10, 1.0).is_err());
    }

    #[test]
    fn exports_usable_scheduler_json() {
        let m = minimize(&VariationalProblem::continuous(1.0, 2.0, 11), 10_000, 1.0).unwrap();
        let s = m.to_scheduler().unwrap();
        let back = Scheduler::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.terminal(), 2.0);
    }
}
