//! Small linear inverse problems with closed-form Tikhonov minimizers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ladder::DiscretizationLadder;
use crate::model::{ForwardModel, MatrixModel};
use crate::optimize::{RegularizedSolution, StopReason, TikhonovConfig};
use crate::penalty::{Measure, PenaltyKind};
use crate::problem::{LevelProblem, TikhonovSolver};

/// `y = A x†` with known `x†`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub model: MatrixModel,
    pub x_true: Vec<f64>,
    pub y: Vec<f64>,
}

impl LinearModel {
    pub fn new(matrix: DMatrix<f64>, x_true: Vec<f64>) -> Result<Self> {
        if matrix.ncols() != x_true.len() {
            return Err(Error::ShapeMismatch {
                expected: matrix.ncols(),
                actual: x_true.len(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        let model = MatrixModel::new(matrix);
        let y = model.apply(&x_true)?;
        Ok(LinearModel { model, x_true, y })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.model.matrix()
    }

    pub fn dim(&self) -> usize {
        self.x_true.len()
    }

    /// `y + δ e/‖e‖` with a seeded standard normal `e`: the data error has
    /// norm exactly `δ` up to rounding.
    pub fn noisy_data(&self, delta: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..self.y.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.y.iter().zip(&e).map(|(y, e)| y + delta * e / norm).collect()
    }
}

/// Solve `(AᵀA + αI) x = Aᵀy^δ + α x0`.
pub fn closed_form_minimizer(a: &DMatrix<f64>, ydelta: &[f64], alpha: f64, x0: &[f64]) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if ydelta.len() != a.nrows() || x0.len() != a.ncols() {
        return Err(Error::ShapeMismatch {
            expected: a.nrows(),
            actual: ydelta.len(),
        });
    }
    let n = a.ncols();
    let h = a.tr_mul(a) + DMatrix::identity(n, n) * alpha;
    let rhs = a.tr_mul(&DVector::from_column_slice(ydelta)) + DVector::from_column_slice(x0) * alpha;
    let x = match h.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => h.lu().solve(&rhs).ok_or(Error::Singular)?,
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x.as_slice().to_vec())
}

/// Exact Tikhonov minimizers on coordinate levels of a matrix model with the
/// quadratic penalty and `p = 2`.
#[derive(Debug, Clone)]
pub struct ClosedFormSolver {
    matrix: DMatrix<f64>,
}

impl ClosedFormSolver {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        ClosedFormSolver { matrix }
    }
}

impl TikhonovSolver for ClosedFormSolver {
    fn solve(
        &self,
        problem: &LevelProblem<'_>,
        ydelta: &[f64],
        cfg: TikhonovConfig,
        _band: Option<(f64, f64)>,
    ) -> Result<RegularizedSolution> {
        if cfg.p != 2.0
            || *problem.penalty.kind() != PenaltyKind::Quadratic
            || *problem.penalty.measure() != Measure::Counting
        {
            return Err(Error::InvalidParameter(
                "closed-form solutions need p = 2 and the plain quadratic penalty".into(),
            ));
        }
        if problem.model.bounds().is_some() {
            return Err(Error::InvalidParameter("closed-form solutions ignore bounds".into()));
        }
        let m = problem.dim();
        if m > self.matrix.ncols() || problem.model.data_dim() != self.matrix.nrows() {
            return Err(Error::ShapeMismatch {
                expected: self.matrix.ncols(),
                actual: m,
            });
        }
        let am = self.matrix.columns(0, m).into_owned();
        let x = closed_form_minimizer(&am, ydelta, cfg.alpha, problem.start())?;
        let eval = problem.objective(ydelta, cfg)?.evaluate(&x)?;
        Ok(RegularizedSolution {
            x,
            residual: eval.residual,
            penalty: eval.penalty,
            value: eval.value,
            iterations: 0,
            stop_reason: StopReason::GradientZero,
            alpha: cfg.alpha,
            level: problem.level,
        })
    }
}

/// Matrix family for [`make_ladder_model_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestbedKind {
    /// `U Σ Vᵀ` with Haar-random orthogonal factors and singular values
    /// spread over `[1/c, 1]`, where `c` is drawn log-uniformly from
    /// `[1, max_condition]`.
    Random { max_condition: f64 },
    Identity,
    /// Symmetric positive definite `Q diag(i^(−decay)) Qᵀ`, with
    /// `x† = A ω` (so `x†` lies in the range of `Aᵀ`).
    SymmetricSource { decay: f64 },
}

/// Random matrix with condition number at most 100 on a coordinate ladder.
pub fn make_ladder_model(n: usize, levels: &[usize], seed: u64) -> Result<(LinearModel, DiscretizationLadder)> {
    make_ladder_model_with(n, levels, seed, TestbedKind::Random { max_condition: 100.0 }, None)
}

/// Build a test problem. `support`, when given, zeroes `x†` beyond its first
/// `support` coordinates (ignored for the symmetric source family).
pub fn make_ladder_model_with(
    n: usize,
    levels: &[usize],
    seed: u64,
    kind: TestbedKind,
    support: Option<usize>,
) -> Result<(LinearModel, DiscretizationLadder)> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let ladder = DiscretizationLadder::coordinate(n, levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
        DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    };
    let (matrix, x_true) = match kind {
        TestbedKind::Identity => (DMatrix::identity(n, n), random_solution(n, support, &mut rng)),
        TestbedKind::Random { max_condition } => {
            if !(max_condition >= 1.0) {
                return Err(Error::InvalidParameter("max_condition must be >= 1".into()));
            }
            let u = gauss(n, n, &mut rng).qr().q();
            let v = gauss(n, n, &mut rng).qr().q();
            let cond = max_condition.powf(rng.random::<f64>());
            let s: Vec<f64> = (0..n)
                .map(|i| match i {
                    0 => 1.0,
                    1 => 1.0 / cond,
                    _ => cond.powf(-rng.random::<f64>()),
                })
                .collect();
            let a = &u * DMatrix::from_diagonal(&DVector::from_vec(s)) * v.transpose();
            (a, random_solution(n, support, &mut rng))
        }
        TestbedKind::SymmetricSource { decay } => {
            let q = gauss(n, n, &mut rng).qr().q();
            let s: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-decay)).collect();
            let a = &q * DMatrix::from_diagonal(&DVector::from_vec(s)) * q.transpose();
            let a = 0.5 * (&a + a.transpose());
            let omega = DVector::from_vec(random_solution(n, None, &mut rng));
            let x = &a * omega;
            (a, x.as_slice().to_vec())
        }
    };
    Ok((LinearModel::new(matrix, x_true)?, ladder))
}

fn random_solution(n: usize, support: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = support.unwrap_or(n).min(n);
    (0..n)
        .map(|i| if i < k { rng.sample(StandardNormal) } else { 0.0 })
        .collect()
}

/// Ratio of the extreme singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}
