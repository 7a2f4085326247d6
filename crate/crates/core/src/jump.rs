//! Two-token jump-process analogue of the diffusion model.
//!
//! The forward chain jumps at rate `lambda` to a uniformly chosen token, so
//! `m_t(i) = e^{-lambda t} m_0(i) + (1 - e^{-lambda t})/2`. With the score
//! `s_t(i) = (m_t(i) - m_t(1-i))/m_t(i)` the reversed law solves
//!
//! ```text
//! d/dt mu_t(i) = lambda/2 ((1 - s_{T-t}(1-i)) mu_t(1-i) - (1 - s_{T-t}(i)) mu_t(i))
//! ```
//!
//! which is integrated here with classical RK4.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::report::{self, Panel, Series};
use crate::reverse::map_paths;
use crate::rng::{derive_seed, stream};
use crate::stats::{linear_fit, loglog_slope};

/// Perturbed scores are clipped here so reverse rates stay positive.
pub const SCORE_CAP: f64 = 2.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenDist {
    pub p0: f64,
    pub p1: f64,
}

impl TokenDist {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        let d = TokenDist { p0, p1 };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform() -> Self {
        TokenDist { p0: 0.5, p1: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 >= 0.0 && self.p1 >= 0.0) {
            return Err(LabError::invalid("m0", format!("probabilities must be nonnegative, got {self:?}")));
        }
        if (self.p0 + self.p1 - 1.0).abs() > 1e-12 {
            return Err(LabError::invalid("m0", format!("probabilities must sum to 1, got {}", self.p0 + self.p1)));
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            self.p0
        } else {
            self.p1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpScore {
    Exact,
    /// `s*(i) = s(i) + eps (-1)^i`, clipped at `SCORE_CAP`.
    Perturbed {
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub ode_steps: usize,
    pub score: JumpScore,
}

impl JumpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(LabError::invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(LabError::invalid("T", format!("must be positive, got {}", self.horizon)));
        }
        if self.ode_steps < 10 {
            return Err(LabError::invalid("ode_steps", format!("need at least 10, got {}", self.ode_steps)));
        }
        if let JumpScore::Perturbed { eps } = self.score {
            if !eps.is_finite() {
                return Err(LabError::invalid("eps", "must be finite"));
            }
        }
        Ok(())
    }
}

pub fn forward_marginal(m0: &TokenDist, lambda: f64, t: f64) -> TokenDist {
    let p0 = 0.5 + (-lambda * t).exp() * (m0.p0 - 0.5);
    TokenDist { p0, p1: 1.0 - p0 }
}

fn score_at(m: &TokenDist, i: usize, t: f64) -> Result<f64> {
    let (a, b) = (m.get(i), m.get(1 - i));
    if a <= 0.0 {
        return Err(LabError::SingularScore { token: i, t });
    }
    Ok((a - b) / a)
}

/// `s(i) = (m(i) - m(1-i))/m(i)`.
pub fn score_s(m: &TokenDist, i: usize) -> Result<f64> {
    score_at(m, i, f64::NAN)
}

/// Total reverse jump rate and its kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverseRates {
    pub rate: f64,
    pub stay: f64,
    pub flip: f64,
}

pub fn reverse_rates(s_val: f64, lambda: f64) -> Result<ReverseRates> {
    if !(s_val < 2.0) {
        return Err(LabError::InvalidScore(s_val));
    }
    let rate = 0.5 * lambda * (2.0 - s_val);
    let flip = 0.5 * lambda * (1.0 - s_val) / rate;
    Ok(ReverseRates { rate, stay: 1.0 - flip, flip })
}

fn model_score(source: &TokenDist, cfg: &JumpConfig, forward_t: f64, i: usize) -> Result<f64> {
    let m = forward_marginal(source, cfg.lambda, forward_t);
    let s = score_at(&m, i, forward_t)?;
    Ok(match cfg.score {
        JumpScore::Exact => s,
        JumpScore::Perturbed { eps } => {
            let sign = if i == 0 { 1.0 } else { -1.0 };
            (s + sign * eps).min(SCORE_CAP)
        }
    })
}

/// `d mu(0)/dt` at reverse time `t`; `d mu(1)/dt` is its negative.
fn rhs(source: &TokenDist, cfg: &JumpConfig, t: f64, mu0: f64) -> Result<f64> {
    let fwd = (cfg.horizon - t).max(0.0);
    let s0 = model_score(source, cfg, fwd, 0)?;
    let s1 = model_score(source, cfg, fwd, 1)?;
    Ok(0.5 * cfg.lambda * ((1.0 - s1) * (1.0 - mu0) - (1.0 - s0) * mu0))
}

/// Reverse-ODE law at every grid time `k T / ode_steps`, started from `start`.
pub fn reverse_ode_path(start: TokenDist, m0_source: &TokenDist, cfg: &JumpConfig) -> Result<Vec<TokenDist>> {
    cfg.validate()?;
    start.validate()?;
    m0_source.validate()?;
    let n = cfg.ode_steps;
    let dt = cfg.horizon / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut mu = start;
    out.push(mu);
    for k in 0..n {
        let t = k as f64 * dt;
        let x = mu.p0;
        let k1 = rhs(m0_source, cfg, t, x)?;
        let k2 = rhs(m0_source, cfg, t + 0.5 * dt, x + 0.5 * dt * k1)?;
        let k3 = rhs(m0_source, cfg, t + 0.5 * dt, x + 0.5 * dt * k2)?;
        let k4 = rhs(m0_source, cfg, if k + 1 == n { cfg.horizon } else { t + dt }, x + dt * k3)?;
        let p0 = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // the right side sums to zero; renormalize the rounding defect
        let p1 = mu.p1 - (p0 - x);
        let total = p0 + p1;
        mu = TokenDist { p0: p0 / total, p1: p1 / total };
        // a perturbed score above 1 gives a negative flip probability, which
        // can push the law off the simplex
        if !(mu.p0 >= 0.0 && mu.p1 >= 0.0) {
            return Err(LabError::Integrator(format!("reverse law left the simplex at step {}: {mu:?}", k + 1)));
        }
        out.push(mu);
    }
    Ok(out)
}

/// Reverse-ODE law at time `T` from the uniform start.
pub fn reverse_ode(m0_source: &TokenDist, cfg: &JumpConfig) -> Result<TokenDist> {
    Ok(*reverse_ode_path(TokenDist::uniform(), m0_source, cfg)?.last().expect("nonempty path"))
}

/// Smooth test functionals on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpFunctional {
    /// `tanh(x0 - x1)`.
    TanhDiff,
    /// `x0^2 + x1^2`.
    Quadratic,
}

impl JumpFunctional {
    pub fn eval(&self, m: &TokenDist) -> f64 {
        match self {
            JumpFunctional::TanhDiff => (m.p0 - m.p1).tanh(),
            JumpFunctional::Quadratic => m.p0 * m.p0 + m.p1 * m.p1,
        }
    }
}

/// Empirical frequency of `n` tokens drawn from `m0`.
pub fn empirical_frequency<R: Rng + ?Sized>(m0: &TokenDist, n: usize, rng: &mut R) -> TokenDist {
    let zeros = (0..n).filter(|_| rng.random::<f64>() < m0.p0).count();
    let p0 = zeros as f64 / n as f64;
    TokenDist { p0, p1: 1.0 - p0 }
}

/// Empirical frequency conditioned on both tokens being observed; a
/// one-token sample has a score that is singular at forward time 0.
fn empirical_frequency_nondegenerate<R: Rng + ?Sized>(m0: &TokenDist, n: usize, rng: &mut R) -> TokenDist {
    loop {
        let f = empirical_frequency(m0, n, rng);
        if f.p0 > 0.0 && f.p1 > 0.0 {
            return f;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRow {
    /// Sample size of the empirical start; `None` for the exact `m0`.
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub eps: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lambda: f64,
    pub abs_error: f64,
    pub rep: usize,
}

/// The three one-knob sweeps and their fitted rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub t_rows: Vec<JumpRow>,
    pub eps_rows: Vec<JumpRow>,
    pub n_rows: Vec<JumpRow>,
    /// Slope of `ln |error|` against `T` (exact `m0`, `eps = 0`).
    pub t_slope: f64,
    /// Log-log slope of `|error|` against `eps` (exact `m0`, horizon `cfg.T`).
    pub eps_slope: f64,
    /// Log-log slope of the mean squared error against `N` (`eps = 0`, horizon `cfg.T`).
    pub n_slope: f64,
}

/// Errors are floored at machine epsilon before taking logarithms.
fn floored(x: f64) -> f64 {
    x.max(f64::EPSILON)
}

fn cell(g: JumpFunctional, m0: &TokenDist, source: &TokenDist, cfg: &JumpConfig) -> Result<f64> {
    Ok((g.eval(m0) - g.eval(&reverse_ode(source, cfg)?)).abs())
}

/// Varies one knob at a time around `cfg`: the horizon over `t_list` with
/// the exact score and exact `m0`; `eps` over `eps_list` with exact `m0`;
/// and the empirical sample size over `n_list` with the exact score, `reps`
/// replicates each. Empirical samples that miss a token are redrawn.
#[allow(clippy::too_many_arguments)]
pub fn jump_error_experiment(
    g: JumpFunctional,
    m0: &TokenDist,
    n_list: &[usize],
    eps_list: &[f64],
    t_list: &[f64],
    cfg: &JumpConfig,
    reps: usize,
    seed: u64,
) -> Result<JumpReport> {
    cfg.validate()?;
    m0.validate()?;
    if n_list.len() < 2 || eps_list.len() < 2 || t_list.len() < 2 {
        return Err(LabError::invalid("sweeps", "each sweep needs at least two values"));
    }
    if n_list.contains(&0) || n_list.contains(&1) {
        return Err(LabError::invalid("N", "sample sizes must be at least 2"));
    }
    if !(m0.p0 > 0.0 && m0.p1 > 0.0) {
        return Err(LabError::invalid("m0", "both tokens need positive mass (the score is singular otherwise)"));
    }
    if reps == 0 {
        return Err(LabError::invalid("reps", "need at least one replicate"));
    }
    let exact = JumpConfig { score: JumpScore::Exact, ..*cfg };

    let mut t_rows = Vec::new();
    for &t in t_list {
        let c = JumpConfig { horizon: t, ..exact };
        t_rows.push(JumpRow {
            n: None,
            eps: 0.0,
            horizon: t,
            lambda: c.lambda,
            abs_error: cell(g, m0, m0, &c)?,
            rep: 0,
        });
    }
    let mut eps_rows = Vec::new();
    for &eps in eps_list {
        let c = JumpConfig { score: JumpScore::Perturbed { eps }, ..*cfg };
        eps_rows.push(JumpRow {
            n: None,
            eps,
            horizon: c.horizon,
            lambda: c.lambda,
            abs_error: cell(g, m0, m0, &c)?,
            rep: 0,
        });
    }
    let mut n_rows = Vec::new();
    let mut n_mse = Vec::new();
    for &n in n_list {
        let errs = map_paths(reps, |rep| {
            let mut rng = stream(derive_seed(seed, n as u64), rep as u64);
            let source = empirical_frequency_nondegenerate(m0, n, &mut rng);
            cell(g, m0, &source, &exact)
        })?;
        n_mse.push(errs.iter().map(|e| e * e).sum::<f64>() / reps as f64);
        for (rep, e) in errs.into_iter().enumerate() {
            n_rows.push(JumpRow {
                n: Some(n),
                eps: 0.0,
                horizon: exact.horizon,
                lambda: exact.lambda,
                abs_error: e,
                rep,
            });
        }
    }

    let t_slope = linear_fit(t_list, &t_rows.iter().map(|r| floored(r.abs_error).ln()).collect::<Vec<_>>()).0;
    let eps_err: Vec<f64> = eps_rows.iter().map(|r| floored(r.abs_error)).collect();
    let eps_abs: Vec<f64> = eps_list.iter().map(|e| e.abs()).collect();
    let eps_slope = loglog_slope(&eps_abs, &eps_err).unwrap_or(f64::NAN);
    let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let n_slope = loglog_slope(&ns, &n_mse.iter().map(|&v| floored(v)).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    Ok(JumpReport { t_rows, eps_rows, n_rows, t_slope, eps_slope, n_slope })
}

impl JumpReport {
    pub fn rows(&self) -> impl Iterator<Item = &JumpRow> {
        self.t_rows.iter().chain(&self.eps_rows).chain(&self.n_rows)
    }

    pub fn panels(&self) -> Vec<Panel> {
        let mut n_mse: Vec<(f64, f64)> = Vec::new();
        for r in &self.n_rows {
            let n = r.n.unwrap_or(0) as f64;
            match n_mse.iter_mut().find(|p| p.0 == n) {
                Some(p) => p.1 += r.abs_error * r.abs_error,
                None => n_mse.push((n, r.abs_error * r.abs_error)),
            }
        }
        let reps = self.n_rows.iter().map(|r| r.rep + 1).max().unwrap_or(1) as f64;
        for p in &mut n_mse {
            p.1 /= reps;
        }
        vec![
            Panel::new("horizon", "T", "|error|").log_y().with(Series::line(
                "exact score",
                self.t_rows.iter().map(|r| (r.horizon, floored(r.abs_error))).collect(),
            )),
            Panel::new("score error", "eps", "|error|").log_log().with(Series::line(
                "perturbed score",
                self.eps_rows.iter().map(|r| (r.eps.abs(), floored(r.abs_error))).collect(),
            )),
            Panel::new("sample size", "N", "mean squared error").log_log().with(Series::line("empirical m0", n_mse)),
        ]
    }

    /// Writes `jump.csv` (`N,eps,T,lambda,abs_error,rep`, with `N = inf`
    /// for the exact start) and `jump.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let header: Vec<String> =
            ["N", "eps", "T", "lambda", "abs_error", "rep"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = self
            .rows()
            .map(|r| {
                vec![
                    r.n.map_or("inf".to_string(), |n| n.to_string()),
                    r.eps.to_string(),
                    r.horizon.to_string(),
                    r.lambda.to_string(),
                    r.abs_error.to_string(),
                    r.rep.to_string(),
                ]
            })
            .collect();
        let csv = dir.join("jump.csv");
        let svg = dir.join("jump.svg");
        report::write_csv(&csv, &header, &rows)?;
        report::write_svg(&svg, &self.panels())?;
        Ok(vec![csv, svg])
    }
}
