//! Regularization problems posed over a discretization ladder, and the
//! solvers that produce `x^δ_{m,α}` at one level.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Surface;
use crate::ladder::{DiscretizationLadder, LevelSpec};
use crate::model::{ForwardModel, Truncated};
use crate::optimize::{Minimizer, Objective, RegularizedSolution, TikhonovConfig};
use crate::pde::{PdeForward, PdeModel};
use crate::penalty::{Measure, Penalty, PenaltyKind};

/// Everything needed to minimize at one level.
pub struct LevelProblem<'a> {
    pub level: usize,
    pub model: Box<dyn ForwardModel + 'a>,
    pub penalty: Penalty,
    /// Lumped-mass weights for the descent direction (mesh levels).
    pub metric: Option<Vec<f64>>,
}

impl<'a> LevelProblem<'a> {
    pub fn dim(&self) -> usize {
        self.model.domain_dim()
    }

    /// `P_m x0`, the deterministic starting point.
    pub fn start(&self) -> &[f64] {
        self.penalty.prior()
    }

    pub fn objective<'s>(&'s self, ydelta: &'s [f64], cfg: TikhonovConfig) -> Result<Objective<'s>> {
        Objective::new(self.model.as_ref(), ydelta, &self.penalty, cfg)
    }

    /// `‖F(x) − y^δ‖` at the level's starting point.
    pub fn prior_residual(&self, ydelta: &[f64]) -> Result<f64> {
        crate::model::residual_norm(self.model.as_ref(), self.start(), ydelta)
    }
}

/// A family of level problems sharing the data `y^δ`.
pub trait LadderProblem: Sync {
    fn ladder(&self) -> &DiscretizationLadder;

    fn ydelta(&self) -> &[f64];

    fn level(&self, m: usize) -> Result<LevelProblem<'_>>;

    fn num_levels(&self) -> usize {
        self.ladder().len()
    }
}

/// Computes one regularized solution at one level.
pub trait TikhonovSolver: Sync {
    /// `band`, when given, is the discrepancy band of the current selection
    /// rule; iterative solvers may stop as soon as the residual enters it.
    fn solve(
        &self,
        problem: &LevelProblem<'_>,
        ydelta: &[f64],
        cfg: TikhonovConfig,
        band: Option<(f64, f64)>,
    ) -> Result<RegularizedSolution>;
}

/// Projected gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientSolver {
    pub minimizer: Minimizer,
    /// Stop once the residual enters the band handed in by the caller.
    pub stop_in_band: bool,
}

impl TikhonovSolver for GradientSolver {
    fn solve(
        &self,
        problem: &LevelProblem<'_>,
        ydelta: &[f64],
        cfg: TikhonovConfig,
        band: Option<(f64, f64)>,
    ) -> Result<RegularizedSolution> {
        let objective = problem.objective(ydelta, cfg)?;
        let band = if self.stop_in_band { band } else { None };
        self.minimizer.with_band(band).minimize(
            &objective,
            None,
            problem.metric.as_deref(),
            problem.level,
        )
    }
}

/// Linear or nonlinear model on a coordinate ladder with a quadratic penalty.
pub struct CoordinateProblem<M: ForwardModel> {
    model: M,
    ydelta: Vec<f64>,
    ladder: DiscretizationLadder,
    prior: Vec<f64>,
}

impl<M: ForwardModel> CoordinateProblem<M> {
    /// `prior` is an ambient vector and must lie in the coarsest level.
    pub fn new(model: M, ydelta: Vec<f64>, ladder: DiscretizationLadder, prior: Vec<f64>) -> Result<Self> {
        let n = ladder
            .ambient_dim()
            .ok_or_else(|| Error::InvalidLadder("coordinate problems need a coordinate ladder".into()))?;
        if model.domain_dim() != n || prior.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                actual: if model.domain_dim() != n { model.domain_dim() } else { prior.len() },
            });
        }
        if ydelta.len() != model.data_dim() {
            return Err(Error::ShapeMismatch {
                expected: model.data_dim(),
                actual: ydelta.len(),
            });
        }
        let m0 = ladder.levels()[0].dim();
        if prior[m0..].iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter(
                "the prior must lie in the coarsest level (zero trailing coordinates)".into(),
            ));
        }
        let ladder = match model.bounds() {
            Some(b) => ladder.with_bounds(b),
            None => ladder,
        };
        Ok(CoordinateProblem {
            model,
            ydelta,
            ladder,
            prior,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Quadratic penalty on the ambient space.
    pub fn ambient_penalty(&self) -> Penalty {
        Penalty::quadratic(self.prior.clone())
    }
}

impl<M: ForwardModel> LadderProblem for CoordinateProblem<M> {
    fn ladder(&self) -> &DiscretizationLadder {
        &self.ladder
    }

    fn ydelta(&self) -> &[f64] {
        &self.ydelta
    }

    fn level(&self, m: usize) -> Result<LevelProblem<'_>> {
        let dim = match self.ladder.spec(m)? {
            LevelSpec::Coordinate(d) => *d,
            LevelSpec::Mesh(_) => unreachable!("coordinate ladder"),
        };
        Ok(LevelProblem {
            level: m,
            model: Box::new(Truncated::new(&self.model, dim)?),
            penalty: Penalty::quadratic(self.prior[..dim].to_vec()),
            metric: None,
        })
    }
}

/// Weights of the smoothing penalty on mesh levels: `β2 = beta2_per_dy · Δy`
/// and `β3 = beta3_per_dt · Δτ` of each level's mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Weights {
    pub beta1: f64,
    pub beta2_per_dy: f64,
    pub beta3_per_dt: f64,
}

impl Default for H1Weights {
    fn default() -> Self {
        H1Weights {
            beta1: 0.5,
            beta2_per_dy: 0.25,
            beta3_per_dt: 0.25,
        }
    }
}

/// Coefficient calibration: the coefficient lives on the ladder's meshes,
/// the data on the solver mesh.
pub struct PdeProblem {
    forward: Arc<PdeForward>,
    ydelta: Vec<f64>,
    ladder: DiscretizationLadder,
    weights: H1Weights,
}

impl PdeProblem {
    /// `u_delta` is the measured solution on the solver mesh.
    pub fn new(
        forward: Arc<PdeForward>,
        u_delta: &Surface,
        ladder: DiscretizationLadder,
        weights: H1Weights,
    ) -> Result<Self> {
        if ladder.ambient_dim().is_some() {
            return Err(Error::InvalidLadder("calibration needs a mesh ladder".into()));
        }
        let ydelta = forward.data_from_measurement(u_delta)?;
        let ladder = ladder.with_bounds(forward.params().bounds);
        Ok(PdeProblem {
            forward,
            ydelta,
            ladder,
            weights,
        })
    }

    pub fn forward(&self) -> &Arc<PdeForward> {
        &self.forward
    }

    pub fn weights(&self) -> &H1Weights {
        &self.weights
    }

    /// The level's penalty: smoothing H¹ form around the constant prior.
    pub fn penalty(&self, m: usize) -> Result<Penalty> {
        let g = match self.ladder.spec(m)? {
            LevelSpec::Mesh(g) => *g,
            LevelSpec::Coordinate(_) => unreachable!("mesh ladder"),
        };
        Penalty::new(
            PenaltyKind::WeightedH1 {
                beta1: self.weights.beta1,
                beta2: self.weights.beta2_per_dy * g.dy,
                beta3: self.weights.beta3_per_dt * g.dt,
            },
            vec![self.forward.params().a0; g.len()],
            Measure::Mesh(g),
        )
    }
}

impl LadderProblem for PdeProblem {
    fn ladder(&self) -> &DiscretizationLadder {
        &self.ladder
    }

    fn ydelta(&self) -> &[f64] {
        &self.ydelta
    }

    fn level(&self, m: usize) -> Result<LevelProblem<'_>> {
        let g = match self.ladder.spec(m)? {
            LevelSpec::Mesh(g) => *g,
            LevelSpec::Coordinate(_) => unreachable!("mesh ladder"),
        };
        Ok(LevelProblem {
            level: m,
            model: Box::new(PdeModel::new(self.forward.clone(), g)?),
            penalty: self.penalty(m)?,
            metric: Some(g.trapezoid_weights()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::MatrixModel;
    use crate::optimize::{tikhonov_value, StopReason};
    use crate::pde::PdeParams;

    #[test]
    fn coordinate_levels_truncate() {
        let ladder = DiscretizationLadder::coordinate(3, &[1, 3]).unwrap();
        let p = CoordinateProblem::new(MatrixModel::identity(3), vec![1.0, 2.0, 3.0], ladder, vec![0.0; 3]).unwrap();
        let lvl = p.level(0).unwrap();
        assert_eq!(lvl.dim(), 1);
        assert_eq!(lvl.prior_residual(p.ydelta()).unwrap(), 14f64.sqrt());
        let sol = GradientSolver::default()
            .solve(&lvl, p.ydelta(), TikhonovConfig::new(1.0, 2.0).unwrap(), None)
            .unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn prior_outside_coarsest_level_is_rejected() {
        let ladder = DiscretizationLadder::coordinate(2, &[1, 2]).unwrap();
        assert!(CoordinateProblem::new(MatrixModel::identity(2), vec![0.0; 2], ladder, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn pde_value_at_prior_is_plain_misfit() {
        let solver = Grid::from_steps(0.05, 0.25).unwrap();
        let fwd = Arc::new(PdeForward::new(PdeParams::default(), solver).unwrap());
        let u = Surface::from_fn(solver, |t, y| (1.0 - y.exp()).max(0.0) * (1.0 - 0.1 * t));
        let ladder = DiscretizationLadder::free_list(vec![Grid::from_steps(0.1, 0.5).unwrap()]).unwrap();
        let prob = PdeProblem::new(fwd, &u, ladder, H1Weights::default()).unwrap();
        let lvl = prob.level(0).unwrap();
        let cfg = TikhonovConfig::new(0.3, 2.0).unwrap();
        let v = tikhonov_value(lvl.start(), lvl.model.as_ref(), prob.ydelta(), &lvl.penalty, &cfg).unwrap();
        let r = lvl.prior_residual(prob.ydelta()).unwrap();
        assert_eq!(v, r.powi(2));
        let sol = GradientSolver::default().solve(&lvl, prob.ydelta(), cfg, None).unwrap();
        assert!(sol.value <= v);
        assert_ne!(sol.stop_reason, StopReason::BandHit);
    }
}
