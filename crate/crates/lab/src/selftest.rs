//! Fast deterministic subset of the acceptance checks.

use difflab::gaussian_oracle::{bias, mean_recursion, GaussianExperiment};
use difflab::jump::{reverse_ode, JumpConfig, JumpScore, TokenDist};
use difflab::marginals::Marginal;
use difflab::reverse::{run_reverse, run_reverse_map, OuKernel};
use difflab::rng::{derive_seed, stream};
use difflab::stats::Estimate;
use difflab::variational::{minimize, objective_continuous, VariationalProblem};
use difflab::{ReverseConfig, Scheduler, ScoreModel, TargetSpec};
use rand::Rng;

/// Deliberate corruption used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Shifts the optimal scheduler's terminal value by 1e-6.
    Boundary,
}

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

type CheckResult = difflab::Result<Check>;

fn boundary(fault: Option<Fault>) -> CheckResult {
    let shift = if fault == Some(Fault::Boundary) { 1e-6 } else { 0.0 };
    let mut worst: f64 = 0.0;
    for (horizon, terminal) in [(1.0, 5.0), (2.0, 3.0), (0.5, 1.0)] {
        let s = Scheduler::make_optimal(horizon, terminal)?;
        let g_end = s.eval_g(horizon)? + shift;
        worst = worst.max(s.eval_g(0.0)?.abs()).max((g_end - terminal).abs());
    }
    Ok(check("optimal boundary values", worst <= 1e-12, format!("max error {worst:.3e}")))
}

fn euler_lagrange() -> CheckResult {
    let s = Scheduler::make_optimal(1.0, 5.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        worst = worst.max(s.euler_lagrange_residual(i as f64 / 999.0)?.abs());
    }
    Ok(check("euler-lagrange residual", worst <= 1e-5, format!("max {worst:.3e}")))
}

fn objectives() -> CheckResult {
    let lin = objective_continuous(&Scheduler::linear(1.0, 5.0)?.sample_path(20_001)?, 1.0)?;
    let opt = objective_continuous(&Scheduler::make_optimal(1.0, 5.0)?.sample_path(101)?, 1.0)?;
    let lin_exact = 2.5 * -(-10.0f64).exp_m1();
    let pass = (lin - lin_exact).abs() <= 1e-6 && (opt - 0.986570).abs() <= 1e-6;
    Ok(check("objective values", pass, format!("linear {lin:.7}, optimal {opt:.7}")))
}

fn kernel() -> CheckResult {
    let mut worst: f64 = 0.0;
    for (u1, u2) in [(0.01, 0.02), (0.5, 1.5), (3.0, 0.25)] {
        let a = OuKernel::new(u1).then(&OuKernel::new(u2));
        let b = OuKernel::new(u1 + u2);
        worst = worst.max(((a.decay - b.decay) / b.decay).abs()).max(((a.variance - b.variance) / b.variance).abs());
    }
    Ok(check("ou kernel composition", worst <= 1e-12, format!("max rel error {worst:.3e}")))
}

fn scores(seed: u64) -> CheckResult {
    let mut rng = stream(seed, 1);
    let centers: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let m = Marginal::mixture(centers, vec![0.2; 5], 0.4)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = m.score_m(&x)?;
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        for j in 0..2 {
            let h = 1e-5;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (m.log_density(&xp)? - m.log_density(&xm)?) / (2.0 * h);
            worst = worst.max((fd - s[j]).abs() / norm);
        }
    }
    Ok(check("mixture score vs finite differences", worst <= 1e-6, format!("max rel error {worst:.3e}")))
}

fn bias_order() -> CheckResult {
    let s = Scheduler::linear(1.0, 5.0)?;
    let b = |k| bias(&GaussianExperiment::new(1.0, 0.5, s.clone(), k));
    let r = b(100)? / b(200)?;
    Ok(check("first-order bias", (1.8..=2.2).contains(&r), format!("bias(100)/bias(200) = {r:.4}")))
}

fn oracle_mc(seed: u64) -> CheckResult {
    let s = Scheduler::make_optimal(1.0, 5.0)?;
    let target = TargetSpec::gaussian(vec![1.0], 0.5)?;
    let cfg = ReverseConfig::new(s.clone(), 0.0, 20, derive_seed(seed, 2));
    let xs = run_reverse_map(&ScoreModel::exact(target, s.clone()), &cfg, 20_000, |x| x[0])?;
    let e = Estimate::from_samples(&xs);
    let m = mean_recursion(&GaussianExperiment::new(1.0, 0.5, s, 20))?[20];
    let z = (e.mean - m) / e.se;
    Ok(check("mean recursion vs monte carlo", z.abs() <= 4.5, format!("z = {z:.3}")))
}

fn jump() -> CheckResult {
    let cfg = JumpConfig { lambda: 1.0, horizon: 10.0, ode_steps: 2000, score: JumpScore::Exact };
    let out = reverse_ode(&TokenDist::new(0.9, 0.1)?, &cfg)?;
    let dev = (out.p0 - 0.9).abs();
    Ok(check("jump reverse recovery", dev <= 2e-4, format!("error {dev:.3e}")))
}

fn variational() -> CheckResult {
    let m = minimize(&VariationalProblem::continuous(1.0, 1.0, 101), 200_000, 1.0)?;
    let opt = Scheduler::make_optimal(1.0, 1.0)?;
    let mut sup: f64 = 0.0;
    for (&t, &g) in m.times.iter().zip(&m.path) {
        sup = sup.max((g - opt.eval_g(t)?).abs());
    }
    Ok(check("variational recovery", sup <= 1e-3, format!("sup error {sup:.3e}")))
}

fn reproducible(seed: u64) -> CheckResult {
    let s = Scheduler::cosine(1.0, 3.0)?;
    let target = TargetSpec::empirical(vec![vec![1.0], vec![-0.5]])?;
    let score = ScoreModel::perturbed(target, s.clone(), 0.1, vec![1.0]);
    let cfg = ReverseConfig::new(s, 0.01, 15, derive_seed(seed, 3));
    let same = run_reverse(&score, &cfg, 500)? == run_reverse(&score, &cfg, 500)?;
    Ok(check("same seed, same samples", same, if same { "identical".into() } else { "differ".into() }))
}

/// Runs every check; an error inside a check becomes a failed row.
pub fn run(seed: u64, fault: Option<Fault>) -> Vec<Check> {
    let named: [(&'static str, Box<dyn Fn() -> CheckResult>); 10] = [
        ("optimal boundary values", Box::new(move || boundary(fault))),
        ("euler-lagrange residual", Box::new(euler_lagrange)),
        ("objective values", Box::new(objectives)),
        ("ou kernel composition", Box::new(kernel)),
        ("mixture score vs finite differences", Box::new(move || scores(seed))),
        ("first-order bias", Box::new(bias_order)),
        ("mean recursion vs monte carlo", Box::new(move || oracle_mc(seed))),
        ("jump reverse recovery", Box::new(jump)),
        ("variational recovery", Box::new(variational)),
        ("same seed, same samples", Box::new(move || reproducible(seed))),
    ];
    named.into_iter().map(|(name, f)| f().unwrap_or_else(|e| check(name, false, format!("error: {e}")))).collect()
}

pub fn render(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!("{:<width$}  {}  {}\n", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail));
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    out.push_str(&format!("{passed}/{} checks passed\n", checks.len()));
    out
}
