//! Diffusion-coefficient calibration for the parabolic problem
//!
//! ```text
//! u_τ = a(τ, y) (u_yy − u_y) + b u_y,   (τ, y) ∈ [0, 1] × [−5, 5]
//! u(0, y) = max(0, 1 − e^y),   u(τ, −5) = 1,   u(τ, 5) = 0
//! ```
//!
//! discretized by Crank–Nicolson with mesh ratios `η = Δτ/Δy²` and
//! `μ = Δτ/Δy`. Each step solves one tridiagonal system. The scheme is
//! consistent with `u_τ = a u_yy + (b − a) u_y`; the advection velocity is
//! `b − a`.
//!
//! Gradients of the data misfit are computed with the discrete adjoint of
//! the scheme: the transposed step matrices are swept backwards in time and
//! combined with the stencil sensitivities `∂(step)/∂a`, so the result is
//! the exact derivative of the discrete misfit.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Element, Grid, Surface};
use crate::ladder::ElementModel;
use crate::model::{check_data, check_domain, Bounds, ForwardModel};
use crate::transfer::{interpolate, Interpolator};
use crate::tridiag;

/// Physical parameters of the calibration problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeParams {
    /// Drift coefficient `b`.
    pub b: f64,
    /// Constant prior coefficient `a0`.
    pub a0: f64,
    /// Admissible box `[a1, a2]` for the coefficient.
    pub bounds: Bounds,
}

impl Default for PdeParams {
    fn default() -> Self {
        PdeParams {
            b: 0.03,
            a0: 0.08,
            bounds: Bounds {
                lower: 0.005,
                upper: 1.0,
            },
        }
    }
}

impl PdeParams {
    pub fn validate(&self) -> Result<()> {
        let Bounds { lower, upper } = self.bounds;
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient bounds need 0 < a1 <= a2 < inf, got [{lower}, {upper}]"
            )));
        }
        if !(self.a0 >= lower && self.a0 <= upper) {
            return Err(Error::InvalidParameter(format!(
                "prior a0 = {} outside [{lower}, {upper}]",
                self.a0
            )));
        }
        if !self.b.is_finite() {
            return Err(Error::InvalidParameter("drift b must be finite".into()));
        }
        Ok(())
    }
}

/// Synthetic volatility: a cosine dip around `y = 0` that relaxes in time.
pub fn true_sigma(tau: f64, y: f64) -> f64 {
    if (-0.4..=0.4).contains(&y) {
        0.4 - 0.16 * (-tau / 2.0).exp() * (4.0 * std::f64::consts::PI * y / 5.0).cos()
    } else {
        0.4
    }
}

/// True diffusion coefficient `a = σ²/2`.
pub fn true_coefficient(tau: f64, y: f64) -> f64 {
    let s = true_sigma(tau, y);
    0.5 * s * s
}

pub fn true_coefficient_surface(grid: Grid) -> Surface {
    Surface::from_fn(grid, true_coefficient)
}

/// Put payoff `max(0, 1 − e^y)`.
pub fn initial_condition(y: f64) -> f64 {
    (1.0 - y.exp()).max(0.0)
}

/// Value held on the left boundary column.
pub const LEFT_BOUNDARY: f64 = 1.0;
/// Value held on the right boundary column.
pub const RIGHT_BOUNDARY: f64 = 0.0;

/// Crank–Nicolson stencil on one mesh.
#[derive(Debug, Clone, Copy)]
pub struct CnSystem {
    pub grid: Grid,
    pub b: f64,
    /// `Δτ / Δy²`
    pub eta: f64,
    /// `Δτ / Δy`
    pub mesh_ratio: f64,
}

/// Tridiagonal left-hand matrix for the interior nodes of one time row.
#[derive(Debug, Clone, Default)]
pub struct StepMatrix {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl CnSystem {
    pub fn new(grid: Grid, b: f64) -> Result<Self> {
        if grid.ny < 3 {
            return Err(Error::InvalidGrid("solver grid needs at least 3 space nodes".into()));
        }
        Ok(CnSystem {
            grid,
            b,
            eta: grid.dt / (grid.dy * grid.dy),
            mesh_ratio: grid.dt / grid.dy,
        })
    }

    /// Left-hand matrix coefficients for coefficient row `a` (length ny),
    /// with the diagonal-dominance check.
    pub fn assemble(&self, a: &[f64], row: usize, m: &mut StepMatrix) -> Result<()> {
        let n = self.grid.ny - 2;
        m.sub.resize(n, 0.0);
        m.diag.resize(n, 0.0);
        m.sup.resize(n, 0.0);
        for k in 0..n {
            let j = k + 1;
            let diff = 0.5 * self.eta * a[j];
            let adv = 0.25 * self.mesh_ratio * (self.b - a[j]);
            let (lo, d, up) = (-diff + adv, 1.0 + 2.0 * diff, -diff - adv);
            if d.abs() < lo.abs() + up.abs() {
                return Err(Error::NotDominant {
                    row,
                    node: j,
                    eta: self.eta,
                    mesh_ratio: self.mesh_ratio,
                });
            }
            m.sub[k] = lo;
            m.diag[k] = d;
            m.sup[k] = up;
        }
        Ok(())
    }

    /// Explicit half-step `R(a) u` on the interior nodes.
    fn explicit(&self, a: &[f64], u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let j = k + 1;
            let diff = 0.5 * self.eta * a[j];
            let adv = 0.25 * self.mesh_ratio * (self.b - a[j]);
            *o = u[j] + diff * (u[j + 1] - 2.0 * u[j] + u[j - 1]) + adv * (u[j + 1] - u[j - 1]);
        }
    }

    /// `∂(R(a)u)_j / ∂a_j = ½η δ²u_j − ¼μ (u_{j+1} − u_{j−1})`.
    fn sensitivity(&self, u: &[f64], j: usize) -> f64 {
        0.5 * self.eta * (u[j + 1] - 2.0 * u[j] + u[j - 1]) - 0.25 * self.mesh_ratio * (u[j + 1] - u[j - 1])
    }
}

/// Forward and adjoint solver on a fixed mesh.
#[derive(Debug, Clone)]
pub struct CnSolver {
    system: CnSystem,
    initial: Vec<f64>,
}

impl CnSolver {
    pub fn new(grid: Grid, b: f64) -> Result<Self> {
        let system = CnSystem::new(grid, b)?;
        let mut initial: Vec<f64> = (0..grid.ny).map(|j| initial_condition(grid.y(j))).collect();
        initial[0] = LEFT_BOUNDARY;
        initial[grid.ny - 1] = RIGHT_BOUNDARY;
        Ok(CnSolver { system, initial })
    }

    pub fn grid(&self) -> &Grid {
        &self.system.grid
    }

    pub fn system(&self) -> &CnSystem {
        &self.system
    }

    /// Solve for `u` given the coefficient sampled on the solver grid.
    pub fn solve(&self, a: &[f64]) -> Result<Vec<f64>> {
        let g = self.system.grid;
        if a.len() != g.len() {
            return Err(Error::ShapeMismatch {
                expected: g.len(),
                actual: a.len(),
            });
        }
        let (nt, ny) = (g.nt, g.ny);
        let n = ny - 2;
        let mut u = vec![0.0; g.len()];
        u[..ny].copy_from_slice(&self.initial);
        let mut m = StepMatrix::default();
        let mut rhs = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for step in 1..nt {
            let (prev, next) = u.split_at_mut(step * ny);
            let prev = &prev[(step - 1) * ny..];
            let next = &mut next[..ny];
            let a_prev = &a[(step - 1) * ny..step * ny];
            let a_next = &a[step * ny..(step + 1) * ny];
            self.system.assemble(a_next, step, &mut m)?;
            self.system.explicit(a_prev, prev, &mut rhs);
            rhs[0] -= m.sub[0] * LEFT_BOUNDARY;
            rhs[n - 1] -= m.sup[n - 1] * RIGHT_BOUNDARY;
            tridiag::solve_in_place(&m.sub, &m.diag, &m.sup, &mut rhs, &mut scratch);
            next[0] = LEFT_BOUNDARY;
            next[1..ny - 1].copy_from_slice(&rhs);
            next[ny - 1] = RIGHT_BOUNDARY;
        }
        Ok(u)
    }

    /// `J = Σ w (u(a) − target)²` and `∂J/∂a` on the solver grid.
    pub fn misfit_gradient(&self, a: &[f64], target: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g = self.system.grid;
        let u = self.solve(a)?;
        let (nt, ny) = (g.nt, g.ny);
        let n = ny - 2;
        let mut misfit = 0.0;
        let mut source = vec![0.0; g.len()];
        for k in 0..g.len() {
            let r = u[k] - target[k];
            misfit += weights[k] * r * r;
            source[k] = 2.0 * weights[k] * r;
        }

        let mut grad = vec![0.0; g.len()];
        let mut m = StepMatrix::default();
        let mut lam_next = vec![0.0; n]; // λ^{n+1}
        let mut lam = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let (sub_t, sup_t) = (&mut vec![0.0; n], &mut vec![0.0; n]);
        let sys = &self.system;

        for step in (1..nt).rev() {
            let a_row = &a[step * ny..(step + 1) * ny];
            let u_row = &u[step * ny..(step + 1) * ny];
            // rhs = ∂J/∂u^n + R(a^n)ᵀ λ^{n+1}
            for k in 0..n {
                lam[k] = source[step * ny + k + 1];
            }
            if step + 1 < nt {
                for (k, &lj) in lam_next.iter().enumerate() {
                    let j = k + 1;
                    let diff = 0.5 * sys.eta * a_row[j];
                    let adv = 0.25 * sys.mesh_ratio * (sys.b - a_row[j]);
                    // row j of R touches columns j-1, j, j+1
                    if k > 0 {
                        lam[k - 1] += (diff - adv) * lj;
                    }
                    lam[k] += (1.0 - 2.0 * diff) * lj;
                    if k + 1 < n {
                        lam[k + 1] += (diff + adv) * lj;
                    }
                }
            }
            // L(a^n)ᵀ λ^n = rhs
            sys.assemble(a_row, step, &mut m)?;
            for k in 0..n {
                sub_t[k] = if k > 0 { m.sup[k - 1] } else { 0.0 };
                sup_t[k] = if k + 1 < n { m.sub[k + 1] } else { 0.0 };
            }
            tridiag::solve_in_place(sub_t, &m.diag, sup_t, &mut lam, &mut scratch);
            // dJ/da^n_j = (λ^n_j + λ^{n+1}_j) s^n_j
            for k in 0..n {
                let j = k + 1;
                let carry = if step + 1 < nt { lam_next[k] } else { 0.0 };
                grad[step * ny + j] = (lam[k] + carry) * sys.sensitivity(u_row, j);
            }
            std::mem::swap(&mut lam, &mut lam_next);
        }
        // row 0 only enters through R(a^0) in the first step
        if nt > 1 {
            let u_row = &u[..ny];
            for k in 0..n {
                grad[k + 1] = lam_next[k] * sys.sensitivity(u_row, k + 1);
            }
        }
        Ok((misfit, grad))
    }
}

/// Solve the forward problem for a coefficient surface; the coefficient is
/// interpolated to `grid` when it lives on another mesh.
pub fn solve_forward(a: &Surface, params: &PdeParams, grid: &Grid) -> Result<Surface> {
    let solver = CnSolver::new(*grid, params.b)?;
    let coeff = if a.grid() == grid {
        a.values().to_vec()
    } else {
        Interpolator::new(a.grid(), grid)?.apply(a.values())
    };
    params.bounds.check(&coeff)?;
    Surface::new(*grid, solver.solve(&coeff)?)
}

/// Shared state of the calibration forward operator on a solver mesh.
#[derive(Debug)]
pub struct PdeForward {
    params: PdeParams,
    solver: CnSolver,
    weights: Vec<f64>,
    u_prior: Vec<f64>,
}

impl PdeForward {
    pub fn new(params: PdeParams, solver_grid: Grid) -> Result<Self> {
        params.validate()?;
        let solver = CnSolver::new(solver_grid, params.b)?;
        let u_prior = solver.solve(&vec![params.a0; solver_grid.len()])?;
        Ok(PdeForward {
            params,
            weights: solver_grid.trapezoid_weights(),
            solver,
            u_prior,
        })
    }

    pub fn params(&self) -> &PdeParams {
        &self.params
    }

    pub fn solver(&self) -> &CnSolver {
        &self.solver
    }

    pub fn solver_grid(&self) -> &Grid {
        self.solver.grid()
    }

    /// `u(a0)` on the solver grid.
    pub fn prior_solution(&self) -> &[f64] {
        &self.u_prior
    }

    /// Map measured data `u^δ` to the operator's data space: `u^δ − u(a0)`.
    pub fn data_from_measurement(&self, u_delta: &Surface) -> Result<Vec<f64>> {
        if u_delta.grid() != self.solver_grid() {
            return Err(Error::InvalidGrid("data must live on the solver grid".into()));
        }
        Ok(u_delta.values().iter().zip(&self.u_prior).map(|(u, p)| u - p).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `F(a) = u(a) − u(a0)` for a coefficient given on any mesh covering the
/// solver mesh.
impl ElementModel for PdeForward {
    fn apply_element(&self, x: &Element) -> Result<Vec<f64>> {
        let Element::Surface(a) = x else {
            return Err(Error::InvalidParameter("the coefficient must be a surface".into()));
        };
        let coeff = interpolate(a, self.solver_grid())?;
        self.params.bounds.check(coeff.values())?;
        let u = self.solver.solve(coeff.values())?;
        Ok(u.iter().zip(&self.u_prior).map(|(u, p)| u - p).collect())
    }

    fn element_norm_sq(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.weights).map(|(r, w)| w * r * r).sum()
    }
}

/// `F(a) = u(a) − u(a0)` with the coefficient living on its own mesh.
///
/// The coefficient is prolonged to the solver mesh by bilinear
/// interpolation before every solve; gradients are restricted back with the
/// transpose of that interpolation.
#[derive(Debug, Clone)]
pub struct PdeModel {
    forward: Arc<PdeForward>,
    coef_grid: Grid,
    prolong: Option<Interpolator>,
    name: String,
}

impl PdeModel {
    pub fn new(forward: Arc<PdeForward>, coef_grid: Grid) -> Result<Self> {
        let prolong = if &coef_grid == forward.solver_grid() {
            None
        } else {
            Some(Interpolator::new(&coef_grid, forward.solver_grid())?)
        };
        Ok(PdeModel {
            name: format!("crank-nicolson[{}x{}]", coef_grid.nt, coef_grid.ny),
            forward,
            coef_grid,
            prolong,
        })
    }

    pub fn coef_grid(&self) -> &Grid {
        &self.coef_grid
    }

    pub fn forward(&self) -> &PdeForward {
        &self.forward
    }

    fn to_solver(&self, a: &[f64]) -> Vec<f64> {
        match &self.prolong {
            Some(p) => p.apply(a),
            None => a.to_vec(),
        }
    }

    /// `u(a)` on the solver grid.
    pub fn solution(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_domain(self, a)?;
        self.forward.solver.solve(&self.to_solver(a))
    }
}

impl ForwardModel for PdeModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain_dim(&self) -> usize {
        self.coef_grid.len()
    }

    fn data_dim(&self) -> usize {
        self.forward.solver_grid().len()
    }

    fn bounds(&self) -> Option<Bounds> {
        Some(self.forward.params.bounds)
    }

    fn apply(&self, a: &[f64]) -> Result<Vec<f64>> {
        let u = self.solution(a)?;
        Ok(u.iter().zip(&self.forward.u_prior).map(|(u, p)| u - p).collect())
    }

    fn data_norm_sq(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.forward.weights).map(|(r, w)| w * r * r).sum()
    }

    fn misfit_sq_gradient(&self, a: &[f64], ydelta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_domain(self, a)?;
        check_data(self, ydelta)?;
        let target: Vec<f64> = ydelta.iter().zip(&self.forward.u_prior).map(|(d, p)| d + p).collect();
        let (j, g) = self
            .forward
            .solver
            .misfit_gradient(&self.to_solver(a), &target, &self.forward.weights)?;
        let g = match &self.prolong {
            Some(p) => p.apply_transpose(&g),
            None => g,
        };
        Ok((j, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_reference_values() {
        assert!((true_sigma(0.0, 0.0) - 0.24).abs() < 1e-15);
        assert_eq!(true_sigma(0.3, 1.0), 0.4);
        assert_eq!(true_sigma(0.9, -3.0), 0.4);
        let expected = 0.4 - 0.16 * (std::f64::consts::PI / 5.0).cos();
        assert!((true_sigma(0.0, 0.25) - expected).abs() < 1e-15);
        assert!((true_sigma(0.0, 0.25) - 0.270557).abs() < 1e-6);
    }

    #[test]
    fn payoff_values() {
        assert_eq!(initial_condition(0.0), 0.0);
        assert_eq!(initial_condition(2.0), 0.0);
        assert!((initial_condition(-5.0) - 0.993262).abs() < 1e-6);
    }

    #[test]
    fn zero_coefficients_freeze_the_solution() {
        let g = Grid::from_steps(0.1, 0.5).unwrap();
        let solver = CnSolver::new(g, 0.0).unwrap();
        let u = solver.solve(&vec![0.0; g.len()]).unwrap();
        let first = &u[..g.ny];
        let last = &u[(g.nt - 1) * g.ny..];
        assert_eq!(first, last);
    }

    #[test]
    fn boundaries_hold_on_every_row() {
        let g = Grid::from_steps(0.02, 0.1).unwrap();
        let p = PdeParams::default();
        let u = solve_forward(&true_coefficient_surface(g), &p, &g).unwrap();
        for i in 0..g.nt {
            assert_eq!(u.at(i, 0), 1.0);
            assert_eq!(u.at(i, g.ny - 1), 0.0);
        }
    }

    #[test]
    fn dominance_violation_is_reported() {
        let g = Grid::from_steps(0.5, 0.01).unwrap();
        let sys = CnSystem::new(g, 50.0).unwrap();
        let mut m = StepMatrix::default();
        let err = sys.assemble(&vec![0.0; g.ny], 1, &mut m).unwrap_err();
        assert!(matches!(err, Error::NotDominant { .. }));
    }

    #[test]
    fn adjoint_gradient_matches_central_differences() {
        let g = Grid::with_nodes(6, 11).unwrap();
        let p = PdeParams::default();
        let fwd = Arc::new(PdeForward::new(p, g).unwrap());
        let model = PdeModel::new(fwd, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.03..0.2)).collect();
        let data: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-0.05..0.05)).collect();
        let (_, grad) = model.misfit_sq_gradient(&a, &data).unwrap();
        let h = 1e-6;
        for k in 0..g.len() {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += h;
            am[k] -= h;
            let fp = model.misfit_sq_gradient(&ap, &data).unwrap().0;
            let fm = model.misfit_sq_gradient(&am, &data).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() <= 1e-6 * grad.iter().map(|v| v.abs()).fold(0.0, f64::max),
                "node {k}: fd {fd} vs adjoint {}",
                grad[k]
            );
        }
    }
}
