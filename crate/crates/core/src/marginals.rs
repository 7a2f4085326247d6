//! Forward marginals of the scheduled OU process.
//!
//! Started from `N(mu, sigma2 I)` the law at time `t` is
//! `N(e^{-g} mu, (1/2 + e^{-2g}(sigma2 - 1/2)) I)` with `g = g(t)`. Started
//! from an empirical measure it is the equal-weight mixture of such Gaussians
//! with `sigma2 = 0`, one per data point. Both are represented as an
//! isotropic Gaussian mixture sharing one variance.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scheduler::Scheduler;
use crate::stats::Estimate;

/// Empirical marginals are singular at `t = 0`; below this time they are refused.
pub const DEFAULT_TIME_FLOOR: f64 = 1e-6;

/// Posterior weights below this fraction of the largest are dropped.
const WEIGHT_CUTOFF: f64 = 1e-300;

/// Data distribution the forward process starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian { mu: Vec<f64>, sigma2: f64 },
    Empirical { points: Vec<Vec<f64>> },
}

impl TargetSpec {
    pub fn gaussian(mu: Vec<f64>, sigma2: f64) -> Result<Self> {
        let t = TargetSpec::Gaussian { mu, sigma2 };
        t.validate()?;
        Ok(t)
    }

    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self> {
        let t = TargetSpec::Empirical { points };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSpec::Gaussian { mu, sigma2 } => {
                if mu.is_empty() {
                    return Err(LabError::invalid("mu", "dimension must be positive"));
                }
                if mu.iter().any(|v| !v.is_finite()) {
                    return Err(LabError::invalid("mu", "non-finite entry"));
                }
                if !(sigma2.is_finite() && *sigma2 > 0.0) {
                    return Err(LabError::invalid("sigma2", format!("must be positive, got {sigma2}")));
                }
            }
            TargetSpec::Empirical { points } => {
                let Some(first) = points.first() else {
                    return Err(LabError::invalid("points", "need at least one point"));
                };
                if first.is_empty() {
                    return Err(LabError::invalid("points", "dimension must be positive"));
                }
                for (i, p) in points.iter().enumerate() {
                    if p.len() != first.len() {
                        return Err(LabError::invalid("points", format!("point {i} has dimension {}", p.len())));
                    }
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(LabError::invalid("points", format!("point {i} is not finite")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mu, .. } => mu.len(),
            TargetSpec::Empirical { points } => points[0].len(),
        }
    }

    /// Number of data points, `None` for a Gaussian target.
    pub fn n_points(&self) -> Option<usize> {
        match self {
            TargetSpec::Gaussian { .. } => None,
            TargetSpec::Empirical { points } => Some(points.len()),
        }
    }

    /// Law at forward time zero. Gaussian targets only; empirical targets
    /// are singular there.
    pub fn initial(&self) -> Result<Marginal> {
        match self {
            TargetSpec::Gaussian { .. } => Ok(Marginal::at_level(self, 0.0, 0.0)),
            TargetSpec::Empirical { .. } => Err(LabError::DegenerateMarginal { t: 0.0, floor: DEFAULT_TIME_FLOOR }),
        }
    }

    /// `n` i.i.d. draws from the target itself (uniform resampling for
    /// empirical targets).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        match self {
            TargetSpec::Gaussian { mu, sigma2 } => {
                let sd = sigma2.sqrt();
                (0..n).map(|_| mu.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
            }
            TargetSpec::Empirical { points } => {
                (0..n).map(|_| points[rng.random_range(0..points.len())].clone()).collect()
            }
        }
    }
}

/// Law of the forward process at one time: an isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    t: f64,
    g_t: f64,
    dim: usize,
    /// Row-major `n_components x dim`.
    centers: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    variance: f64,
}

/// `(1 - e^{-2g})/2 + e^{-2g} sigma2`, i.e. `1/2 + e^{-2g}(sigma2 - 1/2)`.
pub fn ou_variance(g: f64, sigma2: f64) -> f64 {
    -0.5 * (-2.0 * g).exp_m1() + (-2.0 * g).exp() * sigma2
}

/// `m_t` for `target` under scheduler `s`, refusing empirical targets below
/// [`DEFAULT_TIME_FLOOR`].
pub fn marginal_at(target: &TargetSpec, s: &Scheduler, t: f64) -> Result<Marginal> {
    marginal_at_with_floor(target, s, t, DEFAULT_TIME_FLOOR)
}

pub fn marginal_at_with_floor(target: &TargetSpec, s: &Scheduler, t: f64, floor: f64) -> Result<Marginal> {
    target.validate()?;
    let g = s.eval_g(t)?;
    if matches!(target, TargetSpec::Empirical { .. }) && (t < floor || g <= 0.0) {
        return Err(LabError::DegenerateMarginal { t, floor });
    }
    Ok(Marginal::at_level(target, t, g))
}

impl Marginal {
    /// Marginal for a known value `g = g(t)`; the caller is responsible for
    /// the degenerate `g = 0` empirical case.
    pub fn at_level(target: &TargetSpec, t: f64, g: f64) -> Self {
        let decay = (-g).exp();
        let (dim, centers, n, sigma2) = match target {
            TargetSpec::Gaussian { mu, sigma2 } => {
                (mu.len(), mu.iter().map(|m| decay * m).collect::<Vec<_>>(), 1, *sigma2)
            }
            TargetSpec::Empirical { points } => {
                (points[0].len(), points.iter().flat_map(|p| p.iter().map(|x| decay * x)).collect(), points.len(), 0.0)
            }
        };
        let w = 1.0 / n as f64;
        Marginal {
            t,
            g_t: g,
            dim,
            centers,
            weights: vec![w; n],
            log_weights: vec![w.ln(); n],
            variance: ou_variance(g, sigma2),
        }
    }

    /// General isotropic mixture; weights are normalized.
    pub fn mixture(centers: Vec<Vec<f64>>, weights: Vec<f64>, variance: f64) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(LabError::invalid("weights", "need one weight per center"));
        }
        let dim = centers[0].len();
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(LabError::invalid("centers", "inconsistent dimensions"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(LabError::invalid("weights", "must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(LabError::invalid("weights", "sum must be positive"));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(LabError::invalid("variance", "must be positive"));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Marginal {
            t: f64::NAN,
            g_t: f64::NAN,
            dim,
            centers: centers.concat(),
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            variance,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn g(&self) -> f64 {
        self.g_t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mj, cj) in m.iter_mut().zip(self.center(i)) {
                *mj += w * cj;
            }
        }
        m
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(LabError::invalid("x", format!("dimension {} != {}", x.len(), self.dim)));
        }
        Ok(())
    }

    fn sq_dist(&self, i: usize, x: &[f64]) -> f64 {
        self.center(i).iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let inv2v = 0.5 / self.variance;
        let mut max = f64::NEG_INFINITY;
        for i in 0..self.n_components() {
            max = max.max(self.log_weights[i] - self.sq_dist(i, x) * inv2v);
        }
        let sum: f64 =
            (0..self.n_components()).map(|i| (self.log_weights[i] - self.sq_dist(i, x) * inv2v - max).exp()).sum();
        let norm = -0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * self.variance).ln();
        Ok(max + sum.ln() + norm)
    }

    /// Writes `grad log m(x)` into `out`: posterior-weighted center minus `x`,
    /// over the variance.
    pub fn score_m_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        out.fill(0.0);
        if self.n_components() == 1 {
            for ((o, c), v) in out.iter_mut().zip(self.center(0)).zip(x) {
                *o = (c - v) / self.variance;
            }
            return;
        }
        let inv2v = 0.5 / self.variance;
        let mut max = f64::NEG_INFINITY;
        for i in 0..self.n_components() {
            max = max.max(self.log_weights[i] - self.sq_dist(i, x) * inv2v);
        }
        let mut total = 0.0;
        for i in 0..self.n_components() {
            let r = (self.log_weights[i] - self.sq_dist(i, x) * inv2v - max).exp();
            if r < WEIGHT_CUTOFF {
                continue;
            }
            total += r;
            for (o, c) in out.iter_mut().zip(self.center(i)) {
                *o += r * c;
            }
        }
        for (o, v) in out.iter_mut().zip(x) {
            *o = (*o / total - v) / self.variance;
        }
    }

    pub fn score_m(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.score_m_into(x, &mut out);
        Ok(out)
    }

    /// `grad log (m / m*)(x) = grad log m(x) + 2x`.
    pub fn score_p_into(&self, x: &[f64], out: &mut [f64]) {
        self.score_m_into(x, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o += 2.0 * v;
        }
    }

    pub fn score_p(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.score_p_into(x, &mut out);
        Ok(out)
    }

    /// Draws one point into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, picker: Option<&WeightedIndex<f64>>, out: &mut [f64]) {
        let i = match picker {
            Some(p) => p.sample(rng),
            None if self.n_components() == 1 => 0,
            None => rng.random_range(0..self.n_components()),
        };
        let sd = self.variance.sqrt();
        for (o, c) in out.iter_mut().zip(self.center(i)) {
            *o = c + sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    fn picker(&self) -> Option<WeightedIndex<f64>> {
        let w0 = self.weights[0];
        if self.weights.iter().all(|&w| w == w0) {
            None
        } else {
            Some(WeightedIndex::new(&self.weights).expect("weights validated"))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        let picker = self.picker();
        (0..n)
            .map(|_| {
                let mut x = vec![0.0; self.dim];
                self.sample_into(rng, picker.as_ref(), &mut x);
                x
            })
            .collect()
    }

    /// Monte Carlo estimate of the relative Fisher information
    /// `I(m | m*) = E_m |grad log m(X) + 2X|^2`.
    pub fn relative_fisher_mc<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Estimate> {
        if n < 100 {
            return Err(LabError::invalid("n", format!("need at least 100 samples, got {n}")));
        }
        let picker = self.picker();
        let mut x = vec![0.0; self.dim];
        let mut s = vec![0.0; self.dim];
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                self.sample_into(rng, picker.as_ref(), &mut x);
                self.score_p_into(&x, &mut s);
                s.iter().map(|v| v * v).sum()
            })
            .collect();
        Ok(Estimate::from_samples(&vals))
    }
}

/// The stationary law `N(0, I/2)` of the scheduled OU process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvariantMeasure {
    pub dim: usize,
}

impl InvariantMeasure {
    pub fn new(dim: usize) -> Self {
        InvariantMeasure { dim }
    }

    pub fn as_marginal(&self) -> Marginal {
        Marginal::mixture(vec![vec![0.0; self.dim]], vec![1.0], 0.5).expect("valid invariant measure")
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        -r2 - 0.5 * self.dim as f64 * std::f64::consts::PI.ln()
    }

    /// `grad log m*(x) = -2x`.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| -2.0 * v).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let sd = std::f64::consts::FRAC_1_SQRT_2;
        for o in out.iter_mut() {
            *o = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
}
