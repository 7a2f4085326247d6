//! Time changes `g(t)` for the scheduled forward diffusion
//! `dX = -g'(t) X dt + sqrt(g'(t)) dW`.
//!
//! Every scheduler satisfies `g(0) = 0` and `g(T) = T'`. The closed-form
//! kinds are evaluated in forms that keep `g(T) = T'` accurate to a few ulps
//! even when `e^{-T'}` is tiny:
//!
//! * linear: `g(t) = T' t / T`
//! * optimal: `g(t) = -ln(1 - (t/T)(1 - e^{-T'}))`, the minimizer of
//!   `int_0^T g'(t)^2 e^{-2 g(t)} dt` with pinned endpoints
//! * cosine: `g(t) = -ln cos(pi a t / (2T))` with `cos(pi a / 2) = e^{-T'}`.
//!   The `t/T` rescaling for `T != 1` is our own convention.
//! * piecewise: linear interpolation of `(t, g)` knots.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Linear,
    Optimal,
    Cosine,
    Piecewise,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Linear => "linear",
            SchedulerKind::Optimal => "optimal",
            SchedulerKind::Cosine => "cosine",
            SchedulerKind::Piecewise => "piecewise",
        }
    }

    /// The three closed-form kinds compared throughout the experiments.
    pub const CLOSED_FORM: [SchedulerKind; 3] = [SchedulerKind::Linear, SchedulerKind::Optimal, SchedulerKind::Cosine];
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An immutable time change on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchedulerRepr", into = "SchedulerRepr")]
pub struct Scheduler {
    kind: SchedulerKind,
    horizon: f64,
    terminal: f64,
    knots: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchedulerRepr {
    kind: SchedulerKind,
    #[serde(rename = "T", default)]
    horizon: Option<f64>,
    #[serde(rename = "Tprime", default)]
    terminal: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    knots: Vec<[f64; 2]>,
}

impl TryFrom<SchedulerRepr> for Scheduler {
    type Error = LabError;

    fn try_from(r: SchedulerRepr) -> Result<Self> {
        if r.kind == SchedulerKind::Piecewise {
            let s = Scheduler::piecewise(r.knots.iter().map(|k| (k[0], k[1])).collect())?;
            for (name, given, actual) in [("T", r.horizon, s.horizon), ("Tprime", r.terminal, s.terminal)] {
                if let Some(v) = given {
                    if (v - actual).abs() > 1e-12 * actual.abs().max(1.0) {
                        return Err(LabError::invalid(name, format!("{v} disagrees with the last knot ({actual})")));
                    }
                }
            }
            return Ok(s);
        }
        if !r.knots.is_empty() {
            return Err(LabError::invalid("knots", "only allowed for kind = piecewise"));
        }
        let horizon = r.horizon.ok_or_else(|| LabError::invalid("T", "missing"))?;
        let terminal = r.terminal.ok_or_else(|| LabError::invalid("Tprime", "missing"))?;
        Scheduler::closed_form(r.kind, horizon, terminal)
    }
}

impl From<Scheduler> for SchedulerRepr {
    fn from(s: Scheduler) -> Self {
        SchedulerRepr {
            kind: s.kind,
            horizon: Some(s.horizon),
            terminal: Some(s.terminal),
            knots: s.knots.iter().map(|&(t, g)| [t, g]).collect(),
        }
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(LabError::invalid("T", format!("must be positive and finite, got {horizon}")));
    }
    Ok(())
}

fn check_terminal(terminal: f64, strict: bool) -> Result<()> {
    let ok = terminal.is_finite() && if strict { terminal > 0.0 } else { terminal >= 0.0 };
    if !ok {
        let bound = if strict { "positive" } else { "nonnegative" };
        return Err(LabError::invalid("Tprime", format!("must be {bound} and finite, got {terminal}")));
    }
    Ok(())
}

impl Scheduler {
    pub fn linear(horizon: f64, terminal: f64) -> Result<Self> {
        check_horizon(horizon)?;
        check_terminal(terminal, false)?;
        Ok(Scheduler { kind: SchedulerKind::Linear, horizon, terminal, knots: Vec::new() })
    }

    /// The closed-form optimal scheduler `g*(t) = -ln(1 - (t/T)(1 - e^{-T'}))`.
    /// It solves `g'' = (g')^2`, i.e. `e^{-g*}` is affine in `t`.
    pub fn make_optimal(horizon: f64, terminal: f64) -> Result<Self> {
        check_horizon(horizon)?;
        check_terminal(terminal, true)?;
        Ok(Scheduler { kind: SchedulerKind::Optimal, horizon, terminal, knots: Vec::new() })
    }

    pub fn cosine(horizon: f64, terminal: f64) -> Result<Self> {
        check_horizon(horizon)?;
        check_terminal(terminal, false)?;
        Ok(Scheduler { kind: SchedulerKind::Cosine, horizon, terminal, knots: Vec::new() })
    }

    pub fn closed_form(kind: SchedulerKind, horizon: f64, terminal: f64) -> Result<Self> {
        match kind {
            SchedulerKind::Linear => Self::linear(horizon, terminal),
            SchedulerKind::Optimal => Self::make_optimal(horizon, terminal),
            SchedulerKind::Cosine => Self::cosine(horizon, terminal),
            SchedulerKind::Piecewise => Err(LabError::invalid("kind", "piecewise schedulers are built from knots")),
        }
    }

    /// Piecewise-linear scheduler through `knots`. The first knot must be
    /// `(0, 0)`; `T` and `T'` are read off the last one.
    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(LabError::invalid("knots", "need at least two knots"));
        }
        if knots.iter().any(|&(t, g)| !t.is_finite() || !g.is_finite()) {
            return Err(LabError::invalid("knots", "non-finite knot"));
        }
        if knots[0] != (0.0, 0.0) {
            return Err(LabError::invalid("knots", format!("first knot must be (0, 0), got {:?}", knots[0])));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(LabError::invalid(
                    "knots",
                    format!("knot times not strictly increasing at index {}", i + 1),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(LabError::invalid("knots", format!("knot values decrease at index {}", i + 1)));
            }
        }
        let &(horizon, terminal) = knots.last().unwrap();
        let s = Scheduler { kind: SchedulerKind::Piecewise, horizon, terminal, knots };
        if !s.is_convex() {
            log::warn!("piecewise scheduler is not convex (slopes decrease somewhere)");
        }
        Ok(s)
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    /// The horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The terminal value `T' = g(T)`.
    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Cosine parameter `a` with `cos(pi a / 2) = e^{-T'}`.
    pub fn cosine_a(&self) -> f64 {
        1.0 - (-self.terminal).exp().asin() / FRAC_PI_2
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(LabError::Domain { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// `1 - (t/T)(1 - e^{-T'})` for the optimal kind, without cancellation.
    fn optimal_w(&self, r: f64) -> f64 {
        let c0 = -(-self.terminal).exp_m1();
        let x = r * c0;
        if x < 0.5 {
            1.0 - x
        } else {
            (1.0 - r) + r * (-self.terminal).exp()
        }
    }

    /// Complementary cosine angle `pi/2 - theta(t)`; `g = -ln sin(phi)`.
    fn cosine_phi(&self, r: f64) -> (f64, f64) {
        let beta = (-self.terminal).exp().asin();
        let phi = (1.0 - r) * FRAC_PI_2 + r * beta;
        (phi, FRAC_PI_2 - beta)
    }

    fn segment(&self, t: f64) -> usize {
        // Index i of the segment [t_i, t_{i+1}) containing t; the last
        // segment also owns t = T.
        let n = self.knots.len();
        let i = self.knots.partition_point(|&(tk, _)| tk <= t);
        i.saturating_sub(1).min(n - 2)
    }

    pub fn eval_g(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let r = t / self.horizon;
        Ok(match self.kind {
            SchedulerKind::Linear => self.terminal * r,
            SchedulerKind::Optimal => {
                let x = r * -(-self.terminal).exp_m1();
                if x < 0.5 {
                    -(-x).ln_1p()
                } else {
                    -self.optimal_w(r).ln()
                }
            }
            SchedulerKind::Cosine => {
                let (phi, _) = self.cosine_phi(r);
                -phi.sin().ln()
            }
            SchedulerKind::Piecewise => {
                let i = self.segment(t);
                let (t0, g0) = self.knots[i];
                let (t1, g1) = self.knots[i + 1];
                g0 + (g1 - g0) * (t - t0) / (t1 - t0)
            }
        })
    }

    /// `g'(t)`. For piecewise schedulers the slope of the segment to the
    /// right of `t` (the last segment at `t = T`).
    pub fn eval_gdot(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.gdot_unchecked(t))
    }

    /// `g'` without the domain check. Closed forms extend analytically a
    /// little past `[0, T]`, which lets finite differences stay centered.
    fn gdot_unchecked(&self, t: f64) -> f64 {
        let r = t / self.horizon;
        match self.kind {
            SchedulerKind::Linear => self.terminal / self.horizon,
            SchedulerKind::Optimal => {
                let c = -(-self.terminal).exp_m1() / self.horizon;
                c / self.optimal_w(r)
            }
            SchedulerKind::Cosine => {
                let (phi, theta_end) = self.cosine_phi(r);
                theta_end / self.horizon * phi.cos() / phi.sin()
            }
            SchedulerKind::Piecewise => {
                let i = self.segment(t);
                let (t0, g0) = self.knots[i];
                let (t1, g1) = self.knots[i + 1];
                (g1 - g0) / (t1 - t0)
            }
        }
    }

    /// Euler-Lagrange residual `g'' - (g')^2` at `t`, with `g''` taken as a
    /// fourth-order centered difference of the analytic `g'`. The step scales
    /// with `1/g'`, so truncation and rounding both stay near 1e-12 relative
    /// to `(g')^2`.
    pub fn euler_lagrange_residual(&self, t: f64) -> Result<f64> {
        let gdot = self.eval_gdot(t)?;
        let h = 1e-3 * self.horizon / (1.0 + gdot * self.horizon);
        let f = |k: f64| self.gdot_unchecked(t + k * h);
        let gddot = (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h);
        Ok(gddot - gdot * gdot)
    }

    /// Whether `g'` is nondecreasing. Closed-form kinds are convex by
    /// construction; piecewise kinds compare consecutive slopes.
    pub fn is_convex(&self) -> bool {
        match self.kind {
            SchedulerKind::Piecewise => {
                let slopes: Vec<f64> = self.knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
                slopes.windows(2).all(|s| s[1] >= s[0] - 1e-9 * s[0].abs().max(1.0))
            }
            _ => true,
        }
    }

    /// Samples `g` at `n` equally spaced points of `[0, T]` (endpoints included).
    pub fn sample_path(&self, n: usize) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(LabError::invalid("n", "need at least two grid points"));
        }
        (0..n)
            .map(|i| {
                let t = if i == n - 1 { self.horizon } else { self.horizon * i as f64 / (n - 1) as f64 };
                self.eval_g(t)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scheduler serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds(horizon: f64, terminal: f64) -> Vec<Scheduler> {
        let mut v: Vec<Scheduler> =
            SchedulerKind::CLOSED_FORM.iter().map(|&k| Scheduler::closed_form(k, horizon, terminal).unwrap()).collect();
        v.push(
            Scheduler::piecewise(vec![
                (0.0, 0.0),
                (0.3 * horizon, 0.1 * terminal),
                (0.8 * horizon, 0.5 * terminal),
                (horizon, terminal),
            ])
            .unwrap(),
        );
        v
    }

    #[test]
    fn optimal_values() {
        let s = Scheduler::make_optimal(1.0, 1.0).unwrap();
        assert_eq!(s.eval_g(0.0).unwrap(), 0.0);
        let expected = -(1.0 - 0.5 * (1.0 - (-1.0f64).exp())).ln();
        assert!((expected - 0.379885).abs() < 1e-6);
        // bisection on the closed form: solve e^{-g} = 1 - 0.5(1 - e^{-1})
        let target = 1.0 - 0.5 * (1.0 - (-1.0f64).exp());
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (-mid).exp() > target {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((s.eval_g(0.5).unwrap() - lo).abs() < 1e-14);
        assert!((s.eval_g(0.5).unwrap() - 0.379885).abs() < 1e-6);
    }

    #[test]
    fn optimal_rescales_with_horizon() {
        let s = Scheduler::make_optimal(2.0, 1.0).unwrap();
        assert!((s.eval_g(1.0).unwrap() - 0.379885).abs() < 1e-6);
        let s = Scheduler::make_optimal(1.0, 5.0).unwrap();
        assert!((s.eval_g(1.0).unwrap() - 5.0).abs() <= 1e-12 * 5.0);
    }

    #[test]
    fn gdot_examples() {
        let lin = Scheduler::linear(1.0, 5.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(lin.eval_gdot(t).unwrap(), 5.0);
        }
        let opt = Scheduler::make_optimal(1.0, 1.0).unwrap();
        let c = 1.0 - (-1.0f64).exp();
        assert!((opt.eval_gdot(0.0).unwrap() - c).abs() < 1e-15);
        assert!((c - 0.632121).abs() < 1e-6);
        let h = 1e-6;
        let fd = (opt.eval_g(h).unwrap() - opt.eval_g(0.0).unwrap()) / h;
        // forward difference: O(h) truncation of g''(0)/2 = c^2/2
        assert!((fd - c - 0.5 * c * c * h).abs() < 1e-8);

        let opt5 = Scheduler::make_optimal(1.0, 5.0).unwrap();
        let expected = (1.0 - (-5.0f64).exp()) * 5.0f64.exp();
        assert!((opt5.eval_gdot(1.0).unwrap() - expected).abs() < 1e-9 * expected);
        assert!((expected - 147.413).abs() < 1e-3);
        let fd = (opt5.eval_g(1.0).unwrap() - opt5.eval_g(1.0 - 1e-7).unwrap()) / 1e-7;
        assert!((fd - expected).abs() / expected < 1e-3);
    }

    #[test]
    fn cosine_hits_terminal() {
        let s = Scheduler::cosine(1.0, 1.0).unwrap();
        assert!((s.eval_g(1.0).unwrap() - 1.0).abs() < 1e-14);
        let a = s.cosine_a();
        assert!(((FRAC_PI_2 * a).cos() - (-1.0f64).exp()).abs() < 1e-15);
        // agrees with the textbook form away from the end point
        for t in [0.1, 0.5, 0.9] {
            let direct = -(FRAC_PI_2 * a * t).cos().ln();
            assert!((s.eval_g(t).unwrap() - direct).abs() < 1e-13);
        }
        // large T' stays accurate without clamping
        let s = Scheduler::cosine(1.0, 40.0).unwrap();
        assert!((s.eval_g(1.0).unwrap() - 40.0).abs() < 1e-12 * 40.0);
    }

    #[test]
    fn boundaries_and_monotonicity() {
        for horizon in [0.5, 1.0, 3.0] {
            for terminal in [0.1, 1.0, 5.0, 20.0] {
                for s in all_kinds(horizon, terminal) {
                    assert!(s.eval_g(0.0).unwrap().abs() <= 1e-12, "{:?}", s.kind());
                    let end = s.eval_g(horizon).unwrap();
                    assert!((end - terminal).abs() <= 1e-12 * terminal, "{:?} {end} {terminal}", s.kind());
                    let path = s.sample_path(10_000).unwrap();
                    assert!(path.windows(2).all(|w| w[1] >= w[0]), "{:?}", s.kind());
                    let mut prev = 0.0;
                    for i in 0..1000 {
                        let t = horizon * i as f64 / 1000.0;
                        let d = s.eval_gdot(t).unwrap();
                        assert!(d >= 0.0);
                        if s.kind() != SchedulerKind::Piecewise {
                            assert!(d >= prev * (1.0 - 1e-12), "{:?} convexity at {t}", s.kind());
                        }
                        prev = d;
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for terminal in [0.5, 1.0, 5.0] {
            for s in all_kinds(1.0, terminal) {
                for i in 1..200 {
                    let t = i as f64 / 200.0;
                    if s.knots().iter().any(|&(tk, _)| (tk - t).abs() < 2.0 * h) {
                        continue;
                    }
                    let fd = (s.eval_g(t + h).unwrap() - s.eval_g(t - h).unwrap()) / (2.0 * h);
                    let d = s.eval_gdot(t).unwrap();
                    assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "{:?} t={t} {d} {fd}", s.kind());
                }
            }
        }
    }

    #[test]
    fn euler_lagrange_holds_for_optimal() {
        for (horizon, terminal) in [(1.0, 1.0), (1.0, 5.0), (2.0, 1.0), (0.5, 3.0)] {
            let s = Scheduler::make_optimal(horizon, terminal).unwrap();
            for i in 0..1000 {
                let t = horizon * i as f64 / 999.0;
                let r = s.euler_lagrange_residual(t.min(horizon)).unwrap();
                assert!(r.abs() <= 1e-5, "T={horizon} T'={terminal} t={t} residual {r}");
            }
        }
        // the linear scheduler is not stationary
        let lin = Scheduler::linear(1.0, 1.0).unwrap();
        assert!((lin.euler_lagrange_residual(0.5).unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let s = Scheduler::make_optimal(1.0, 1.0).unwrap();
        assert!(matches!(s.eval_g(-0.1), Err(LabError::Domain { .. })));
        assert!(matches!(s.eval_gdot(1.5), Err(LabError::Domain { .. })));
        assert!(Scheduler::make_optimal(0.0, 1.0).is_err());
        assert!(Scheduler::make_optimal(1.0, 0.0).is_err());
        assert!(Scheduler::make_optimal(-1.0, 1.0).is_err());
        assert!(Scheduler::piecewise(vec![(0.0, 0.0), (0.5, 0.2), (0.4, 0.3)]).is_err());
        assert!(Scheduler::piecewise(vec![(0.0, 0.1), (1.0, 1.0)]).is_err());
        assert!(Scheduler::piecewise(vec![(0.0, 0.0)]).is_err());
    }

    #[test]
    fn piecewise_slopes_from_the_right() {
        let s = Scheduler::piecewise(vec![(0.0, 0.0), (0.5, 0.5), (1.0, 2.0)]).unwrap();
        assert_eq!(s.eval_gdot(0.5).unwrap(), 3.0);
        assert_eq!(s.eval_gdot(0.49).unwrap(), 1.0);
        assert_eq!(s.eval_gdot(1.0).unwrap(), 3.0);
        assert_eq!(s.eval_g(0.75).unwrap(), 1.25);
        assert!(s.is_convex());
        let concave = Scheduler::piecewise(vec![(0.0, 0.0), (0.5, 1.5), (1.0, 2.0)]).unwrap();
        assert!(!concave.is_convex());
    }

    #[test]
    fn json_schema() {
        let s = Scheduler::make_optimal(1.0, 5.0).unwrap();
        let j = s.to_json();
        assert_eq!(j, r#"{"kind":"optimal","T":1.0,"Tprime":5.0}"#);
        assert_eq!(Scheduler::from_json(&j).unwrap(), s);
        let p = Scheduler::from_json(r#"{"kind":"piecewise","knots":[[0,0],[0.5,1],[1,3]]}"#).unwrap();
        assert_eq!(p.horizon(), 1.0);
        assert_eq!(p.terminal(), 3.0);
        assert_eq!(Scheduler::from_json(&p.to_json()).unwrap(), p);
        assert!(Scheduler::from_json(r#"{"kind":"linear","T":1}"#).is_err());
        assert!(Scheduler::from_json(r#"{"kind":"linear","T":1,"Tprime":1,"extra":2}"#).is_err());
        assert!(Scheduler::from_json(r#"{"kind":"piecewise","T":2,"knots":[[0,0],[1,1]]}"#).is_err());
    }
}
