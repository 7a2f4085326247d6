//! Browser demo. Each export renders one self-contained SVG string; the
//! page swaps it into the DOM.

use difflab::gaussian_oracle::{compare_schedulers, comparison_panels, schedule_energy};
use difflab::jump::{forward_marginal, reverse_ode_path, JumpConfig, JumpScore, TokenDist};
use difflab::report::{render_svg, Panel, Series};
use difflab::{LabError, Scheduler, SchedulerKind};
use wasm_bindgen::prelude::*;

const CURVE_POINTS: usize = 201;
const JUMP_STEPS: usize = 400;

/// `g` and `g'` of the three closed-form schedulers on `[0, T]`, with the
/// objective value of each in the legend.
pub fn render_schedulers(horizon: f64, terminal: f64) -> Result<String, LabError> {
    let mut pg = Panel::new(format!("g(t), T' = {terminal}"), "t", "g");
    let mut pd = Panel::new("g'(t)", "t", "g'").log_y();
    for kind in SchedulerKind::CLOSED_FORM {
        let s = Scheduler::closed_form(kind, horizon, terminal)?;
        let mut g = Vec::with_capacity(CURVE_POINTS);
        let mut gd = Vec::with_capacity(CURVE_POINTS);
        for i in 0..CURVE_POINTS {
            let t = i as f64 / (CURVE_POINTS - 1) as f64 * horizon;
            g.push((t, s.eval_g(t)?));
            gd.push((t, s.eval_gdot(t)?));
        }
        let label = format!("{} (J = {:.4})", kind.as_str(), schedule_energy(&s)?);
        pg = pg.with(Series::line(label.clone(), g));
        pd = pd.with(Series::line(label, gd));
    }
    Ok(render_svg(&[pg, pd]))
}

/// Exact `|bias|` against `K` for one Gaussian target, `K` doubling from 5
/// up to `k_max`.
pub fn render_bias(mu: f64, sigma2: f64, terminal: f64, k_max: usize) -> Result<String, LabError> {
    if !(5..=5120).contains(&k_max) {
        return Err(invalid("k_max", format!("need 5 <= k_max <= 5120, got {k_max}")));
    }
    let ks: Vec<usize> = std::iter::successors(Some(5usize), |k| Some(k * 2)).take_while(|&k| k <= k_max).collect();
    let rows = compare_schedulers(mu, &[sigma2], &ks, terminal)?;
    if ks.len() < 2 {
        // a single K has no slope to draw, so plot markers only
        let mut p = Panel::new(format!("sigma2 = {sigma2}"), "K", "|bias|");
        for r in &rows {
            p = p.with(Series::scatter(r.scheduler.as_str(), vec![(r.steps as f64, r.abs_bias)]));
        }
        return Ok(render_svg(&[p]));
    }
    Ok(render_svg(&comparison_panels(&rows)))
}

/// Reverse-ODE law of token 0 from the uniform start, exact against
/// perturbed score, next to the forward marginal read backwards.
pub fn render_jump(p0: f64, lambda: f64, horizon: f64, eps: f64) -> Result<String, LabError> {
    let m0 = TokenDist::new(p0, 1.0 - p0)?;
    if !(m0.p0 > 0.0 && m0.p1 > 0.0) {
        return Err(invalid("p0", "both tokens need positive mass".into()));
    }
    let exact = JumpConfig { lambda, horizon, ode_steps: JUMP_STEPS, score: JumpScore::Exact };
    let perturbed = JumpConfig { score: JumpScore::Perturbed { eps }, ..exact };
    let dt = horizon / JUMP_STEPS as f64;
    let trace = |cfg: &JumpConfig| -> Result<Vec<(f64, f64)>, LabError> {
        let path = reverse_ode_path(TokenDist::uniform(), &m0, cfg)?;
        Ok(path.iter().enumerate().map(|(k, m)| (k as f64 * dt, m.p0)).collect())
    };
    let forward: Vec<(f64, f64)> = (0..=JUMP_STEPS)
        .map(|k| {
            let t = k as f64 * dt;
            (t, forward_marginal(&m0, lambda, (horizon - t).max(0.0)).p0)
        })
        .collect();
    let p = Panel::new(format!("reverse law of token 0, m0 = ({p0}, {:.3})", 1.0 - p0), "reverse time t", "mu_t(0)")
        .with(Series::line("forward marginal at T - t", forward))
        .with(Series::line("exact score", trace(&exact)?))
        .with(Series::line(format!("score + eps, eps = {eps}"), trace(&perturbed)?));
    Ok(render_svg(&[p]))
}

fn invalid(field: &str, reason: String) -> LabError {
    LabError::Validation { field: field.into(), reason }
}

fn js(r: Result<String, LabError>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = schedulersSvg)]
pub fn schedulers_svg(horizon: f64, terminal: f64) -> Result<String, JsError> {
    js(render_schedulers(horizon, terminal))
}

#[wasm_bindgen(js_name = biasSvg)]
pub fn bias_svg(mu: f64, sigma2: f64, terminal: f64, k_max: usize) -> Result<String, JsError> {
    js(render_bias(mu, sigma2, terminal, k_max))
}

#[wasm_bindgen(js_name = jumpSvg)]
pub fn jump_svg(p0: f64, lambda: f64, horizon: f64, eps: f64) -> Result<String, JsError> {
    js(render_jump(p0, lambda, horizon, eps))
}
