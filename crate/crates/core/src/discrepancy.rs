//! Parameter choice by the discrepancy principle: the per-level search for
//! `α`, the joint search over `(m, α)`, and the sequential variant.

use crate::error::{Error, Result};
use crate::model::{residual_norm, ForwardModel};
use crate::optimize::{tikhonov_value, RegularizedSolution, StopReason, TikhonovConfig};
use crate::parallel::Execution;
use crate::penalty::Penalty;
use crate::problem::{LadderProblem, LevelProblem, TikhonovSolver};

/// Multipliers of the discrepancy principle.
///
/// The accepted residual range is `[τδ, λδ]`; the level-wise target is
/// `[τ1(δ+γ_m), τ2(δ+γ_m)]`; `ε` is the margin of the sets
/// `{x : ‖F(x) − y^δ‖ < (τ − ε)δ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyBand {
    pub tau: f64,
    pub lambda: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub epsilon: f64,
}

impl DiscrepancyBand {
    /// `τ1 = τ`, `τ2 = (τ + λ)/2`, `ε = (τ − 1)/2`.
    pub fn new(tau: f64, lambda: f64) -> Result<Self> {
        let b = DiscrepancyBand {
            tau,
            lambda,
            tau1: tau,
            tau2: 0.5 * (tau + lambda),
            epsilon: 0.5 * (tau - 1.0),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_discrete(mut self, tau1: f64, tau2: f64) -> Result<Self> {
        self.tau1 = tau1;
        self.tau2 = tau2;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let DiscrepancyBand {
            tau,
            lambda,
            tau1,
            tau2,
            epsilon,
        } = *self;
        if !(1.0 < tau && tau <= tau1 && tau1 <= tau2 && tau2 < lambda && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 1 < tau <= tau1 <= tau2 < lambda, got tau={tau} tau1={tau1} tau2={tau2} lambda={lambda}"
            )));
        }
        if !(0.0 < epsilon && epsilon < tau - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < epsilon < tau - 1, got {epsilon}"
            )));
        }
        Ok(())
    }

    /// `[τδ, λδ]`.
    pub fn bounds(&self, delta: f64) -> (f64, f64) {
        (self.tau * delta, self.lambda * delta)
    }

    /// `[τ1(δ+γ), τ2(δ+γ)]`.
    pub fn target(&self, delta: f64, gamma: f64) -> (f64, f64) {
        (self.tau1 * (delta + gamma), self.tau2 * (delta + gamma))
    }

    /// Largest admissible `γ_m`: `(λ/τ2 − 1) δ`.
    pub fn gamma_bound(&self, delta: f64) -> f64 {
        (self.lambda / self.tau2 - 1.0) * delta
    }
}

/// `τδ ≤ residual ≤ λδ` (both ends inclusive).
pub fn check_band(residual: f64, delta: f64, band: &DiscrepancyBand) -> bool {
    let (lo, hi) = band.bounds(delta);
    residual >= lo && residual <= hi
}

/// Membership in `H_m`: `‖F(x) − y^δ‖ < (τ − ε)δ`.
pub fn in_h_set(residual: f64, delta: f64, band: &DiscrepancyBand) -> bool {
    residual < (band.tau - band.epsilon) * delta
}

/// `L(x) = ‖F(x) − y^δ‖`.
pub fn residual_l(model: &(impl ForwardModel + ?Sized), ydelta: &[f64], x: &[f64]) -> Result<f64> {
    residual_norm(model, x, ydelta)
}

/// `H(x) = f_{x0}(x)`.
pub fn penalty_h(penalty: &Penalty, x: &[f64]) -> Result<f64> {
    penalty.value(x)
}

/// `I(x) = L(x)^p + α H(x)`; `α = 0` is allowed here.
pub fn value_i(
    model: &(impl ForwardModel + ?Sized),
    ydelta: &[f64],
    penalty: &Penalty,
    cfg: &TikhonovConfig,
    x: &[f64],
) -> Result<f64> {
    tikhonov_value(x, model, ydelta, penalty, cfg)
}

/// Settings of the bisection on `log α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSearch {
    /// Initial bracket `(α_min, α_max)`.
    pub bracket: (f64, f64),
    /// Stop bisecting once `log(α_hi/α_lo)` falls below this.
    pub tol: f64,
    /// Factor-10 expansions allowed at each end of the bracket.
    pub max_expansions: usize,
    pub p: f64,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch {
            bracket: (1e-6, 1.0),
            tol: 1e-3,
            max_expansions: 12,
            p: 2.0,
        }
    }
}

impl AlphaSearch {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.bracket;
        if !(a > 0.0 && a < b && b.is_finite()) || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha bracket must satisfy 0 < min < max and tol > 0, got {:?}, tol {}",
                self.bracket, self.tol
            )));
        }
        Ok(())
    }

    /// Upper bound on the number of minimizations one search performs.
    pub fn budget(&self) -> usize {
        let (a, b) = self.bracket;
        let span = b.ln() - a.ln();
        2 + 2 * self.max_expansions + ((span / self.tol).log2().ceil().max(0.0) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorozovStatus {
    InBand,
    /// `‖F(P_m x0) − y^δ‖` does not exceed the upper target, so no `α` can
    /// bracket the target from above.
    NoUpperBracket,
    /// The budget ran out. `jump` marks a bracket that collapsed with
    /// residuals on both sides of the target: the residual function jumps
    /// across it.
    Exhausted { jump: bool },
}

impl MorozovStatus {
    pub fn label(&self) -> &'static str {
        match self {
            MorozovStatus::InBand => "in-band",
            MorozovStatus::NoUpperBracket => "no-upper-bracket",
            MorozovStatus::Exhausted { .. } => "exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorozovResult {
    pub level: usize,
    pub alpha: f64,
    pub solution: RegularizedSolution,
    pub gamma_m: f64,
    /// Residual range the search aimed at.
    pub band: (f64, f64),
    pub status: MorozovStatus,
    pub minimizations: usize,
}

impl MorozovResult {
    pub fn residual(&self) -> f64 {
        self.solution.residual
    }

    pub fn in_band(&self) -> bool {
        self.status == MorozovStatus::InBand
    }
}

fn inside(r: f64, (lo, hi): (f64, f64)) -> bool {
    r >= lo && r <= hi
}

/// Distance of `r` to `[lo, hi]` relative to the band centre.
fn band_gap(r: f64, (lo, hi): (f64, f64)) -> f64 {
    let c = 0.5 * (lo + hi);
    if r < lo {
        (lo - r) / c
    } else if r > hi {
        (r - hi) / c
    } else {
        0.0
    }
}

/// Search `α` at one level so that the residual lands in `target`.
pub(crate) fn search_level(
    lvl: &LevelProblem<'_>,
    ydelta: &[f64],
    solver: &dyn TikhonovSolver,
    target: (f64, f64),
    gamma_m: f64,
    search: &AlphaSearch,
) -> Result<MorozovResult> {
    search.validate()?;
    let (lo, hi) = target;
    let count = std::cell::Cell::new(0usize);
    let finish = |solution: RegularizedSolution, status, count| MorozovResult {
        level: lvl.level,
        alpha: solution.alpha,
        solution,
        gamma_m,
        band: target,
        status,
        minimizations: count,
    };

    let r0 = lvl.prior_residual(ydelta)?;
    if r0 <= hi {
        let penalty = lvl.penalty.value(lvl.start())?;
        let prior = RegularizedSolution {
            x: lvl.start().to_vec(),
            residual: r0,
            penalty,
            value: r0.powf(search.p),
            iterations: 0,
            stop_reason: StopReason::GradientZero,
            alpha: search.bracket.1,
            level: lvl.level,
        };
        return Ok(finish(prior, MorozovStatus::NoUpperBracket, 0));
    }

    let solve = |alpha: f64| -> Result<RegularizedSolution> {
        count.set(count.get() + 1);
        solver.solve(lvl, ydelta, TikhonovConfig::new(alpha, search.p)?, Some(target))
    };

    let (mut a_hi, mut a_lo) = (search.bracket.1, search.bracket.0);
    let mut s_hi = solve(a_hi)?;
    let mut grow = 0;
    while s_hi.residual < lo && grow < search.max_expansions {
        a_hi *= 10.0;
        s_hi = solve(a_hi)?;
        grow += 1;
    }
    if inside(s_hi.residual, target) {
        return Ok(finish(s_hi, MorozovStatus::InBand, count.get()));
    }
    if s_hi.residual < lo {
        return Ok(finish(s_hi, MorozovStatus::Exhausted { jump: false }, count.get()));
    }

    let mut s_lo = solve(a_lo)?;
    let mut shrink = 0;
    while s_lo.residual > hi && shrink < search.max_expansions {
        a_lo /= 10.0;
        s_lo = solve(a_lo)?;
        shrink += 1;
    }
    if inside(s_lo.residual, target) {
        return Ok(finish(s_lo, MorozovStatus::InBand, count.get()));
    }
    if s_lo.residual > hi {
        return Ok(finish(s_lo, MorozovStatus::Exhausted { jump: false }, count.get()));
    }

    // residual(a_lo) < lo and residual(a_hi) > hi
    while (a_hi / a_lo).ln() > search.tol {
        let mid = (a_lo * a_hi).sqrt();
        let s = solve(mid)?;
        if inside(s.residual, target) {
            return Ok(finish(s, MorozovStatus::InBand, count.get()));
        }
        if s.residual > hi {
            a_hi = mid;
            s_hi = s;
        } else {
            a_lo = mid;
            s_lo = s;
        }
    }
    // The residual grows at most linearly in α, so across a collapsed bracket
    // a continuous residual moves by about `tol · r` at most.
    let jump = s_hi.residual - s_lo.residual > (hi - lo) + 2.0 * search.tol * hi;
    let closest = if band_gap(s_lo.residual, target) <= band_gap(s_hi.residual, target) {
        s_lo
    } else {
        s_hi
    };
    // A degenerate band is hit only up to the bisection tolerance.
    let status = if !jump && lo == hi {
        MorozovStatus::InBand
    } else {
        MorozovStatus::Exhausted { jump }
    };
    Ok(finish(closest, status, count.get()))
}

/// Find `α` with `τ1(δ+γ_m) ≤ ‖F(x^δ_{m,α}) − y^δ‖ ≤ τ2(δ+γ_m)` at one level.
#[allow(clippy::too_many_arguments)]
pub fn morozov_alpha_search(
    problem: &(impl LadderProblem + ?Sized),
    solver: &dyn TikhonovSolver,
    level: usize,
    band: &DiscrepancyBand,
    delta: f64,
    gamma_m: f64,
    search: &AlphaSearch,
) -> Result<MorozovResult> {
    check_delta(delta)?;
    if !(gamma_m >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma_m must be >= 0, got {gamma_m}")));
    }
    let lvl = problem.level(level)?;
    search_level(&lvl, problem.ydelta(), solver, band.target(delta, gamma_m), gamma_m, search)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level must be > 0, got {delta}")));
    }
    Ok(())
}

/// Order in which levels are tried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LevelOrder {
    #[default]
    CoarseToFine,
    FineToCoarse,
}

impl LevelOrder {
    pub fn indices(&self, n: usize) -> Vec<usize> {
        match self {
            LevelOrder::CoarseToFine => (0..n).collect(),
            LevelOrder::FineToCoarse => (0..n).rev().collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LevelOrder::CoarseToFine => "coarse-to-fine",
            LevelOrder::FineToCoarse => "fine-to-coarse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "coarse-to-fine" => Ok(LevelOrder::CoarseToFine),
            "fine-to-coarse" => Ok(LevelOrder::FineToCoarse),
            _ => Err(Error::Parse(format!("unknown level order {s:?}"))),
        }
    }
}

/// First level, in `order`, with `γ_m ≤ (λ/τ2 − 1)δ`.
pub fn select_level(gammas: &[f64], delta: f64, band: &DiscrepancyBand, order: LevelOrder) -> Result<usize> {
    check_delta(delta)?;
    if gammas.is_empty() {
        return Err(Error::InvalidLadder("no levels".into()));
    }
    let bound = band.gamma_bound(delta);
    if let Some(m) = order.indices(gammas.len()).into_iter().find(|&m| gammas[m] <= bound) {
        return Ok(m);
    }
    let (best_level, best) = gammas
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Err(Error::LevelNotFound {
        bound,
        best,
        best_level,
    })
}

/// Source of the per-level values `γ_m`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSupply {
    /// Computed from a known exact solution.
    Exact(Vec<f64>),
    /// Upper bounds supplied by the user.
    Bound(Vec<f64>),
    /// `C·K·φ_m^l` for a Hölder-continuous operator with constant `C·K`
    /// and exponent `l`, given projection errors `φ_m`.
    Holder {
        ck: f64,
        exponent: f64,
        proj_errors: Vec<f64>,
    },
    /// `γ_m = 0` on every level.
    Zero,
}

impl GammaSupply {
    pub fn values(&self, levels: usize) -> Result<Vec<f64>> {
        let v = match self {
            GammaSupply::Exact(v) | GammaSupply::Bound(v) => v.clone(),
            GammaSupply::Holder {
                ck,
                exponent,
                proj_errors,
            } => proj_errors.iter().map(|p| ck * p.powf(*exponent)).collect(),
            GammaSupply::Zero => vec![0.0; levels],
        };
        if v.len() != levels {
            return Err(Error::ShapeMismatch {
                expected: levels,
                actual: v.len(),
            });
        }
        if v.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidParameter("gamma values must be >= 0".into()));
        }
        Ok(v)
    }
}

/// Which target a level was searched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// `γ_m` small enough: target `[τ(δ+γ_m), τ2(δ+γ_m)]`.
    Gamma,
    /// Fallback straight at `[τδ, λδ]`.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub level: usize,
    pub route: Route,
    pub gamma_m: f64,
    pub outcome: std::result::Result<MorozovResult, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcome {
    /// The in-band selection, or the closest failed attempt.
    pub result: MorozovResult,
    pub attempts: Vec<Attempt>,
}

impl JointOutcome {
    pub fn in_band(&self) -> bool {
        self.result.in_band()
    }
}

/// Settings of the joint `(m, α)` search.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointSearch {
    pub alpha: AlphaSearch,
    pub order: LevelOrder,
    pub execution: Execution,
}

/// Select `(m, α)` with `τδ ≤ ‖F(x^δ_{m,α}) − y^δ‖ ≤ λδ`.
///
/// Levels whose `γ_m` obeys `γ_m ≤ (λ/τ2 − 1)δ` are searched first against
/// `[τ(δ+γ_m), τ2(δ+γ_m)] ⊂ [τδ, λδ]`. If none succeeds, every level is
/// searched against `[τδ, λδ]` directly. Per-level searches are independent
/// and may run concurrently; the first success in `order` is returned.
pub fn joint_discrepancy_search(
    problem: &(impl LadderProblem + ?Sized),
    solver: &dyn TikhonovSolver,
    band: &DiscrepancyBand,
    delta: f64,
    gammas: &GammaSupply,
    settings: &JointSearch,
) -> Result<JointOutcome> {
    check_delta(delta)?;
    band.validate()?;
    let n = problem.num_levels();
    let gamma = gammas.values(n)?;
    let bound = band.gamma_bound(delta);
    let order = settings.order.indices(n);
    let direct = DiscrepancyBand {
        tau1: band.tau,
        tau2: band.lambda,
        ..*band
    };

    let run = |levels: &[usize], route: Route| -> Vec<Attempt> {
        settings.execution.map(levels.len(), |k| {
            let m = levels[k];
            let (g, target) = match route {
                Route::Gamma => (gamma[m], (band.tau * (delta + gamma[m]), band.tau2 * (delta + gamma[m]))),
                Route::Direct => (gamma[m], direct.target(delta, 0.0)),
            };
            let outcome = problem
                .level(m)
                .and_then(|lvl| search_level(&lvl, problem.ydelta(), solver, target, g, &settings.alpha));
            Attempt {
                level: m,
                route,
                gamma_m: g,
                outcome,
            }
        })
    };

    let feasible: Vec<usize> = order.iter().copied().filter(|&m| gamma[m] <= bound).collect();
    let mut attempts = run(&feasible, Route::Gamma);
    let hit = |a: &[Attempt]| {
        a.iter()
            .find_map(|t| t.outcome.as_ref().ok().filter(|r| r.in_band()).cloned())
    };
    if let Some(result) = hit(&attempts) {
        return Ok(JointOutcome { result, attempts });
    }
    let fallback = run(&order, Route::Direct);
    let found = hit(&fallback);
    attempts.extend(fallback);
    if let Some(result) = found {
        return Ok(JointOutcome { result, attempts });
    }

    let (lo, hi) = band.bounds(delta);
    let closest = attempts
        .iter()
        .filter_map(|a| a.outcome.as_ref().ok())
        .min_by(|a, b| band_gap(a.residual(), (lo, hi)).total_cmp(&band_gap(b.residual(), (lo, hi))))
        .cloned();
    match closest {
        Some(mut result) => {
            if result.status == MorozovStatus::InBand {
                result.status = MorozovStatus::Exhausted { jump: false };
            }
            Ok(JointOutcome { result, attempts })
        }
        None => Err(attempts
            .into_iter()
            .find_map(|a| a.outcome.err())
            .unwrap_or(Error::InvalidLadder("no levels".into()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialResult {
    pub k: usize,
    pub alpha: f64,
    pub solution: RegularizedSolution,
    /// Residual at `α_{k−1}`; absent when `k = 0`.
    pub bracket_residual_prev: Option<f64>,
    /// Residuals at `α_0, …, α_k`.
    pub trace: Vec<f64>,
}

/// Smallest `k ≤ kmax` with `‖F(x_{α_k}) − y^δ‖ ≤ τ̃δ`, `α_k = q^k α_0`.
#[allow(clippy::too_many_arguments)]
pub fn sequential_discrepancy(
    problem: &(impl LadderProblem + ?Sized),
    solver: &dyn TikhonovSolver,
    level: usize,
    tau_tilde: f64,
    alpha0: f64,
    q: f64,
    kmax: usize,
    delta: f64,
) -> Result<SequentialResult> {
    check_delta(delta)?;
    if !(tau_tilde > 1.0) || !(alpha0 > 0.0) || !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need tau_tilde > 1, alpha0 > 0, 0 < q < 1; got {tau_tilde}, {alpha0}, {q}"
        )));
    }
    let lvl = problem.level(level)?;
    let threshold = tau_tilde * delta;
    let mut trace = Vec::new();
    for k in 0..=kmax {
        let alpha = alpha0 * q.powi(k as i32);
        let solution = solver.solve(&lvl, problem.ydelta(), TikhonovConfig::new(alpha, 2.0)?, None)?;
        let r = solution.residual;
        let prev = trace.last().copied();
        trace.push(r);
        if r <= threshold {
            return Ok(SequentialResult {
                k,
                alpha,
                solution,
                bracket_residual_prev: prev,
                trace,
            });
        }
    }
    Err(Error::SequentialExhausted { trace })
}

/// Whether the ladder's γ values admit the selection `γ_m ≤ (λ/τ2 − 1)δ`.
pub fn gamma_feasible(gammas: &[f64], delta: f64, band: &DiscrepancyBand) -> bool {
    let bound = band.gamma_bound(delta);
    gammas.iter().any(|g| *g <= bound)
}
