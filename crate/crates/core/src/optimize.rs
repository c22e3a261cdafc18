//! Tikhonov functional and its minimization by projected gradient descent
//! with a strong-Wolfe line search.

use crate::error::{Error, Result};
use crate::grid::{check_finite, dot};
use crate::model::{check_data, check_domain, misfit_gradient, residual_norm, Bounds, ForwardModel};
use crate::penalty::Penalty;

/// Regularization parameter and misfit exponent of
/// `‖F(x) − y^δ‖^p + α f_{x0}(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TikhonovConfig {
    pub alpha: f64,
    pub p: f64,
}

impl TikhonovConfig {
    pub fn new(alpha: f64, p: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        Self::evaluation_only(alpha, p)
    }

    /// Like [`TikhonovConfig::new`] but also accepts `α = 0`. Such a config
    /// evaluates the plain misfit and is never handed to a minimizer.
    pub fn evaluation_only(alpha: f64, p: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
        }
        Ok(TikhonovConfig { alpha, p })
    }
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        TikhonovConfig { alpha: 1.0, p: 2.0 }
    }
}

/// `‖F(x) − y^δ‖^p + α f_{x0}(x)`.
pub fn tikhonov_value(
    x: &[f64],
    model: &(impl ForwardModel + ?Sized),
    ydelta: &[f64],
    penalty: &Penalty,
    cfg: &TikhonovConfig,
) -> Result<f64> {
    check_domain(model, x)?;
    let r = residual_norm(model, x, ydelta)?;
    let h = penalty.value(x)?;
    Ok(r.powf(cfg.p) + cfg.alpha * h)
}

/// Everything needed to evaluate the functional at one level.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub model: &'a dyn ForwardModel,
    pub ydelta: &'a [f64],
    pub penalty: &'a Penalty,
    pub cfg: TikhonovConfig,
}

/// Functional value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub residual: f64,
    pub penalty: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a dyn ForwardModel,
        ydelta: &'a [f64],
        penalty: &'a Penalty,
        cfg: TikhonovConfig,
    ) -> Result<Self> {
        check_data(model, ydelta)?;
        if penalty.dim() != model.domain_dim() {
            return Err(Error::ShapeMismatch {
                expected: model.domain_dim(),
                actual: penalty.dim(),
            });
        }
        Ok(Objective {
            model,
            ydelta,
            penalty,
            cfg,
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        check_domain(self.model, x)?;
        let residual = residual_norm(self.model, x, self.ydelta)?;
        let penalty = self.penalty.value(x)?;
        Ok(Evaluation {
            value: residual.powf(self.cfg.p) + self.cfg.alpha * penalty,
            residual,
            penalty,
        })
    }

    /// Value and coordinate gradient of the full functional.
    pub fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        let (residual, mut g) = misfit_gradient(self.model, x, self.ydelta, self.cfg.p)?;
        let penalty = self.penalty.value(x)?;
        if self.cfg.alpha != 0.0 {
            let gp = self.penalty.subgradient(x)?;
            for (a, b) in g.iter_mut().zip(gp) {
                *a += self.cfg.alpha * b;
            }
        }
        let eval = Evaluation {
            value: residual.powf(self.cfg.p) + self.cfg.alpha * penalty,
            residual,
            penalty,
        };
        Ok((eval, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_bracket_steps: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        WolfeParams {
            c1: 1e-8,
            c2: 0.95,
            max_bracket_steps: 50,
        }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.max_bracket_steps == 0 {
            return Err(Error::InvalidParameter("max_bracket_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Stop as soon as the residual lies in `[lower, upper]`.
    pub band: Option<(f64, f64)>,
    pub max_iters: usize,
    /// Stop when `|r_k − r_{k−1}| < tol · r_{k−1}`.
    pub rel_residual_tol: f64,
    /// Stop when the projected gradient norm falls below this fraction of
    /// its initial value.
    pub grad_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            band: None,
            max_iters: 500,
            rel_residual_tol: 1e-4,
            grad_tol: 1e-10,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.band {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("band [{lo}, {hi}] is empty")));
            }
        }
        if self.max_iters == 0 || !(self.rel_residual_tol > 0.0) || !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "max_iters and tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    BandHit,
    MaxIters,
    Stalled,
    GradientZero,
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::BandHit => "band-hit",
            StopReason::MaxIters => "max-iters",
            StopReason::Stalled => "stalled",
            StopReason::GradientZero => "gradient-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub penalty: f64,
    pub value: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub alpha: f64,
    pub level: usize,
}

/// Trial step for the next line search, relative to the previous accepted
/// step: `prev_grad_sqnorm / cur_grad_sqnorm`, or 1 on the first iteration.
pub fn initial_step(prev_grad_sqnorm: Option<f64>, cur_grad_sqnorm: f64) -> Result<f64> {
    if !(cur_grad_sqnorm > 0.0) {
        return Err(Error::InvalidParameter(
            "current gradient norm is zero; the iteration has converged".into(),
        ));
    }
    Ok(match prev_grad_sqnorm {
        Some(prev) => prev / cur_grad_sqnorm,
        None => 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearch {
    /// A step satisfying both strong-Wolfe conditions.
    Accepted { step: f64, value: f64, slope: f64 },
    /// No admissible step within the budget. `best` holds the best trial
    /// that satisfied sufficient decrease, if any.
    Exhausted { best: Option<(f64, f64)> },
}

/// Strong-Wolfe line search (bracketing phase followed by zoom).
///
/// `phi(t)` returns the value and slope along the ray at step `t`.
pub fn wolfe_line_search<F>(
    mut phi: F,
    phi0: f64,
    slope0: f64,
    params: &WolfeParams,
    initial: f64,
) -> Result<LineSearch>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    params.validate()?;
    if !(slope0 < 0.0) {
        return Err(Error::NotDescent(slope0));
    }
    if !(initial > 0.0 && initial.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial step must be > 0, got {initial}")));
    }
    let curvature = |s: f64| s.abs() <= -params.c2 * slope0;

    let mut best: Option<(f64, f64)> = None;
    let mut note = |t: f64, v: f64, s: f64, best: &mut Option<(f64, f64)>| {
        if decrease_ok(phi0, slope0, params.c1, t, v, s) && best.is_none_or(|(_, b)| v < b) {
            *best = Some((t, v));
        }
    };

    let mut budget = params.max_bracket_steps;
    let (mut t_prev, mut v_prev, mut s_prev) = (0.0, phi0, slope0);
    let mut t = initial;
    let mut first = true;
    while budget > 0 {
        budget -= 1;
        let (v, s) = phi(t)?;
        note(t, v, s, &mut best);
        let flat = is_flat(phi0, v);
        if !decrease_ok(phi0, slope0, params.c1, t, v, s) || (!first && v >= v_prev && !flat) {
            return zoom(&mut phi, (t_prev, v_prev, s_prev), (t, v, s), phi0, slope0, params, budget, best, &mut note);
        }
        if curvature(s) {
            return Ok(LineSearch::Accepted { step: t, value: v, slope: s });
        }
        if s >= 0.0 {
            return zoom(&mut phi, (t, v, s), (t_prev, v_prev, s_prev), phi0, slope0, params, budget, best, &mut note);
        }
        (t_prev, v_prev, s_prev) = (t, v, s);
        t *= 2.0;
        first = false;
    }
    Ok(LineSearch::Exhausted { best })
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, N>(
    phi: &mut F,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    phi0: f64,
    slope0: f64,
    params: &WolfeParams,
    mut budget: usize,
    mut best: Option<(f64, f64)>,
    note: &mut N,
) -> Result<LineSearch>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
    N: FnMut(f64, f64, f64, &mut Option<(f64, f64)>),
{
    while budget > 0 {
        budget -= 1;
        let t = interpolate_step(lo, hi);
        if !(t != lo.0 && t != hi.0) {
            break;
        }
        let (v, s) = phi(t)?;
        note(t, v, s, &mut best);
        if !decrease_ok(phi0, slope0, params.c1, t, v, s) || (v >= lo.1 && !is_flat(phi0, v)) {
            hi = (t, v, s);
        } else {
            if s.abs() <= -params.c2 * slope0 {
                return Ok(LineSearch::Accepted { step: t, value: v, slope: s });
            }
            if s * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t, v, s);
        }
    }
    Ok(LineSearch::Exhausted { best })
}

/// Relative size below which value differences are rounding noise.
const FLAT: f64 = 1e-12;

fn is_flat(phi0: f64, v: f64) -> bool {
    (v - phi0).abs() <= FLAT * phi0.abs()
}

/// Sufficient decrease. When the values differ by rounding noise only, the
/// slope form `φ'(t) ≤ (2c1 − 1) φ'(0)` stands in for it; it is equivalent
/// for quadratics and stays decidable close to a minimizer.
fn decrease_ok(phi0: f64, slope0: f64, c1: f64, t: f64, v: f64, s: f64) -> bool {
    v <= phi0 + c1 * t * slope0 || (is_flat(phi0, v) && s <= (2.0 * c1 - 1.0) * slope0)
}

/// Minimizer of the quadratic through `lo` (value, slope) and `hi` (value),
/// kept inside the middle 80% of the interval; bisection otherwise.
fn interpolate_step(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a, fa, da) = lo;
    let (b, fb, _) = hi;
    let h = b - a;
    let (left, right) = if h > 0.0 { (a, b) } else { (b, a) };
    let w = right - left;
    let denom = 2.0 * (fb - fa - da * h);
    let mut t = if denom > 0.0 { a - da * h * h / denom } else { f64::NAN };
    if !(t.is_finite() && t >= left + 0.1 * w && t <= right - 0.1 * w) {
        t = 0.5 * (a + b);
    }
    t
}

/// Projected gradient descent on one level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Minimizer {
    pub wolfe: WolfeParams,
    pub stop: StopRule,
}

impl Minimizer {
    pub fn new(wolfe: WolfeParams, stop: StopRule) -> Result<Self> {
        wolfe.validate()?;
        stop.validate()?;
        Ok(Minimizer { wolfe, stop })
    }

    pub fn with_band(mut self, band: Option<(f64, f64)>) -> Self {
        self.stop.band = band;
        self
    }

    /// Minimize `objective` starting from `start` (the prior when `None`).
    ///
    /// `metric` holds lumped-mass weights: the descent direction is
    /// `−g_k / metric_k`, which makes steps comparable across mesh sizes.
    pub fn minimize(
        &self,
        objective: &Objective<'_>,
        start: Option<&[f64]>,
        metric: Option<&[f64]>,
        level: usize,
    ) -> Result<RegularizedSolution> {
        if !(objective.cfg.alpha > 0.0) {
            return Err(Error::InvalidParameter("minimization needs alpha > 0".into()));
        }
        if objective.cfg.p <= 1.0 {
            return Err(Error::InvalidParameter(
                "gradient minimization needs p > 1; the p = 1 misfit is not differentiable".into(),
            ));
        }
        let n = objective.model.domain_dim();
        let bounds = objective.model.bounds();
        let mut x = start.unwrap_or(objective.penalty.prior()).to_vec();
        check_finite(&x)?;
        check_domain(objective.model, &x)?;
        if let Some(m) = metric {
            if m.len() != n || m.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::InvalidParameter("metric weights must be positive, one per unknown".into()));
            }
        }

        let (mut eval, mut grad) = objective.evaluate_with_gradient(&x)?;
        finite_or_dump(eval.value, 0, &x)?;

        let mut iterations = 0;
        let mut prev_gsq: Option<f64> = None;
        let mut prev_step = 1.0;
        let mut failures = 0;
        let mut g0_norm: Option<f64> = None;
        let mut direction = vec![0.0; n];

        let stop = loop {
            if let Some((lo, hi)) = self.stop.band {
                if eval.residual >= lo && eval.residual <= hi {
                    break StopReason::BandHit;
                }
            }
            if iterations >= self.stop.max_iters {
                break StopReason::MaxIters;
            }
            for k in 0..n {
                let w = metric.map_or(1.0, |m| m[k]);
                direction[k] = -grad[k] / w;
            }
            if let Some(b) = bounds {
                mask_active(&x, &mut direction, &b);
            }
            let gsq = (0..n)
                .map(|k| metric.map_or(1.0, |m| m[k]) * direction[k] * direction[k])
                .sum::<f64>();
            let g_norm = gsq.sqrt();
            let g0 = *g0_norm.get_or_insert(g_norm);
            if gsq == 0.0 || g_norm <= self.stop.grad_tol * g0 {
                break StopReason::GradientZero;
            }
            let slope0 = dot(&grad, &direction);
            if !(slope0 < 0.0) {
                break StopReason::GradientZero;
            }
            let trial = if failures > 0 {
                prev_step * 1e-4
            } else {
                prev_step * initial_step(prev_gsq, gsq)?
            };
            let trial = if trial.is_finite() && trial > 0.0 { trial } else { 1.0 };

            let mut last: Option<(f64, Vec<f64>, Evaluation, Vec<f64>)> = None;
            let search = {
                let phi = |t: f64| -> Result<(f64, f64)> {
                    let mut xt: Vec<f64> = x.iter().zip(&direction).map(|(a, d)| a + t * d).collect();
                    if let Some(b) = bounds {
                        b.clamp(&mut xt);
                    }
                    let (e, g) = objective.evaluate_with_gradient(&xt)?;
                    finite_or_dump(e.value, iterations + 1, &xt)?;
                    // slope along the projected path: clamped coordinates do not move
                    let mut s = 0.0;
                    for k in 0..n {
                        let free = bounds.is_none_or(|b| {
                            let raw = x[k] + t * direction[k];
                            raw > b.lower && raw < b.upper
                        });
                        if free {
                            s += g[k] * direction[k];
                        }
                    }
                    last = Some((t, xt, e, g));
                    Ok((e.value, s))
                };
                wolfe_line_search(phi, eval.value, slope0, &self.wolfe, trial)?
            };

            let accepted = match search {
                LineSearch::Accepted { step, .. } => {
                    failures = 0;
                    Some(step)
                }
                LineSearch::Exhausted { best } => {
                    failures += 1;
                    best.map(|(t, _)| t)
                }
            };
            let Some(step) = accepted else {
                if failures >= 2 {
                    break StopReason::Stalled;
                }
                continue;
            };
            let (xt, et, gt) = match last {
                Some((t, xt, e, g)) if t == step => (xt, e, g),
                _ => {
                    let mut xt: Vec<f64> = x.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
                    if let Some(b) = bounds {
                        b.clamp(&mut xt);
                    }
                    let (e, g) = objective.evaluate_with_gradient(&xt)?;
                    (xt, e, g)
                }
            };
            assert!(
                et.value <= eval.value + 1e-12 * eval.value.abs().max(1.0),
                "accepted step increased the functional: {} -> {}",
                eval.value,
                et.value
            );
            let prev_residual = eval.residual;
            x = xt;
            eval = et;
            grad = gt;
            iterations += 1;
            prev_gsq = Some(gsq);
            prev_step = step;

            let change = (eval.residual - prev_residual).abs();
            if change < self.stop.rel_residual_tol * prev_residual {
                if let Some((lo, hi)) = self.stop.band {
                    if eval.residual >= lo && eval.residual <= hi {
                        break StopReason::BandHit;
                    }
                }
                break StopReason::Stalled;
            }
            if failures >= 2 {
                break StopReason::Stalled;
            }
        };

        Ok(RegularizedSolution {
            x,
            residual: eval.residual,
            penalty: eval.penalty,
            value: eval.value,
            iterations,
            stop_reason: stop,
            alpha: objective.cfg.alpha,
            level,
        })
    }
}

fn mask_active(x: &[f64], d: &mut [f64], b: &Bounds) {
    for (xi, di) in x.iter().zip(d.iter_mut()) {
        if (*xi <= b.lower && *di < 0.0) || (*xi >= b.upper && *di > 0.0) {
            *di = 0.0;
        }
    }
}

fn finite_or_dump(value: f64, iteration: usize, x: &[f64]) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteFunctional {
            iteration,
            iterate: x.to_vec(),
        })
    }
}
