//! Convex penalty functionals `f_{x0}` with values and gradients.
//!
//! Every kind vanishes exactly at the prior `x0` and is non-negative
//! elsewhere. Integrals over a mesh use trapezoid weights; plain vectors
//! use unit weights.
//!
//! The `KullbackLeibler` kind uses the standard integrand
//! `x log(x/x0) − x + x0`, which is convex and non-negative. The variant
//! `log(x/x0) − (x0 − x)` is not provided: it takes negative values for
//! `x < x0` and is not convex.

use crate::error::{Error, Result};
use crate::grid::{check_finite, Grid};

/// Quadrature underlying the penalty integrals.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    /// Unit weights: the Euclidean `ℓ²` setting.
    Counting,
    /// Trapezoid weights on a mesh.
    Mesh(Grid),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    /// `‖x − x0‖²`
    Quadratic,
    /// `β1 ‖d‖² + β2 ‖∂_y d‖² + β3 ‖∂_τ d‖²` with `d = x − x0`; forward
    /// differences, backward at the last column/row.
    WeightedH1 { beta1: f64, beta2: f64, beta3: f64 },
    /// `∫ x log(x/x0) − x + x0`
    KullbackLeibler,
}

impl PenaltyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PenaltyKind::Quadratic => "quadratic",
            PenaltyKind::WeightedH1 { .. } => "weighted-h1",
            PenaltyKind::KullbackLeibler => "kullback-leibler",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    kind: PenaltyKind,
    x0: Vec<f64>,
    measure: Measure,
    weights: Option<Vec<f64>>,
}

impl Penalty {
    pub fn new(kind: PenaltyKind, x0: Vec<f64>, measure: Measure) -> Result<Self> {
        check_finite(&x0)?;
        let weights = match &measure {
            Measure::Counting => None,
            Measure::Mesh(g) => {
                if g.len() != x0.len() {
                    return Err(Error::ShapeMismatch {
                        expected: g.len(),
                        actual: x0.len(),
                    });
                }
                Some(g.trapezoid_weights())
            }
        };
        match kind {
            PenaltyKind::WeightedH1 { beta1, beta2, beta3 } => {
                if !matches!(measure, Measure::Mesh(_)) {
                    return Err(Error::InvalidParameter("weighted-H1 penalty needs a mesh".into()));
                }
                if [beta1, beta2, beta3].iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "H1 weights must be finite and >= 0, got ({beta1}, {beta2}, {beta3})"
                    )));
                }
            }
            PenaltyKind::KullbackLeibler => check_positive(&x0)?,
            PenaltyKind::Quadratic => {}
        }
        Ok(Penalty {
            kind,
            x0,
            measure,
            weights,
        })
    }

    pub fn quadratic(x0: Vec<f64>) -> Self {
        Penalty::new(PenaltyKind::Quadratic, x0, Measure::Counting).expect("finite prior")
    }

    pub fn kind(&self) -> &PenaltyKind {
        &self.kind
    }

    pub fn prior(&self) -> &[f64] {
        &self.x0
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Quadrature weights (`None` for unit weights).
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Norm of `x` in the penalty's underlying L²/ℓ² geometry.
    pub fn norm(&self, x: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => x.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
            None => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.x0.len() {
            return Err(Error::ShapeMismatch {
                expected: self.x0.len(),
                actual: x.len(),
            });
        }
        check_finite(x)?;
        if self.kind == PenaltyKind::KullbackLeibler {
            check_positive(x)?;
        }
        Ok(())
    }

    #[inline]
    fn w(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let v = match self.kind {
            PenaltyKind::Quadratic => (0..x.len())
                .map(|k| {
                    let d = x[k] - self.x0[k];
                    self.w(k) * d * d
                })
                .sum(),
            PenaltyKind::WeightedH1 { beta1, beta2, beta3 } => {
                let d: Vec<f64> = x.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
                let w = self.weights.as_ref().expect("mesh weights");
                let g = self.grid();
                let mut l2 = 0.0;
                let mut dy2 = 0.0;
                let mut dt2 = 0.0;
                for i in 0..g.nt {
                    for j in 0..g.ny {
                        let k = g.index(i, j);
                        l2 += w[k] * d[k] * d[k];
                        let gy = diff_y(&d, g, i, j);
                        let gt = diff_t(&d, g, i, j);
                        dy2 += w[k] * gy * gy;
                        dt2 += w[k] * gt * gt;
                    }
                }
                beta1 * l2 + beta2 * dy2 + beta3 * dt2
            }
            PenaltyKind::KullbackLeibler => (0..x.len())
                .map(|k| {
                    let (a, b) = (x[k], self.x0[k]);
                    self.w(k) * (a * (a / b).ln() - a + b)
                })
                .sum(),
        };
        Ok(v)
    }

    /// Gradient of [`Penalty::value`] with respect to the coordinates of `x`.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let g = match self.kind {
            PenaltyKind::Quadratic => (0..x.len()).map(|k| 2.0 * self.w(k) * (x[k] - self.x0[k])).collect(),
            PenaltyKind::WeightedH1 { beta1, beta2, beta3 } => {
                let d: Vec<f64> = x.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
                let w = self.weights.as_ref().expect("mesh weights");
                let grid = self.grid();
                let mut out: Vec<f64> = (0..d.len()).map(|k| 2.0 * beta1 * w[k] * d[k]).collect();
                for i in 0..grid.nt {
                    for j in 0..grid.ny {
                        let k = grid.index(i, j);
                        // ∂/∂d of w_k (D d)_k² = 2 w_k (D d)_k ∂(D d)_k/∂d
                        let cy = 2.0 * beta2 * w[k] * diff_y(&d, grid, i, j) / grid.dy;
                        let (jl, jr) = if j + 1 < grid.ny { (j, j + 1) } else { (j - 1, j) };
                        out[grid.index(i, jr)] += cy;
                        out[grid.index(i, jl)] -= cy;
                        let ct = 2.0 * beta3 * w[k] * diff_t(&d, grid, i, j) / grid.dt;
                        let (il, ir) = if i + 1 < grid.nt { (i, i + 1) } else { (i - 1, i) };
                        out[grid.index(ir, j)] += ct;
                        out[grid.index(il, j)] -= ct;
                    }
                }
                out
            }
            PenaltyKind::KullbackLeibler => (0..x.len()).map(|k| self.w(k) * (x[k] / self.x0[k]).ln()).collect(),
        };
        Ok(g)
    }

    fn grid(&self) -> &Grid {
        match &self.measure {
            Measure::Mesh(g) => g,
            Measure::Counting => unreachable!("mesh penalty without mesh"),
        }
    }
}

#[inline]
fn diff_y(d: &[f64], g: &Grid, i: usize, j: usize) -> f64 {
    if j + 1 < g.ny {
        (d[g.index(i, j + 1)] - d[g.index(i, j)]) / g.dy
    } else {
        (d[g.index(i, j)] - d[g.index(i, j - 1)]) / g.dy
    }
}

#[inline]
fn diff_t(d: &[f64], g: &Grid, i: usize, j: usize) -> f64 {
    if i + 1 < g.nt {
        (d[g.index(i + 1, j)] - d[g.index(i, j)]) / g.dt
    } else {
        (d[g.index(i, j)] - d[g.index(i - 1, j)]) / g.dt
    }
}

fn check_positive(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !(*v > 0.0)) {
        Some(index) => Err(Error::NonPositive { index, value: x[index] }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dot, Surface};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h1(grid: Grid) -> Penalty {
        Penalty::new(
            PenaltyKind::WeightedH1 {
                beta1: 0.5,
                beta2: 0.25 * grid.dy,
                beta3: 0.25 * grid.dt,
            },
            vec![0.08; grid.len()],
            Measure::Mesh(grid),
        )
        .unwrap()
    }

    fn kl(n: usize) -> Penalty {
        Penalty::new(PenaltyKind::KullbackLeibler, vec![1.0; n], Measure::Counting).unwrap()
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let p = Penalty::quadratic(vec![0.0, 0.0]);
        assert_eq!(p.value(&[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(p.subgradient(&[3.0, 4.0]).unwrap(), vec![6.0, 8.0]);
    }

    #[test]
    fn vanishes_at_prior() {
        let g = Grid::from_steps(0.1, 0.25).unwrap();
        let p = h1(g);
        assert_eq!(p.value(p.prior()).unwrap(), 0.0);
        assert_eq!(kl(4).value(&[1.0; 4]).unwrap(), 0.0);
        assert_eq!(Penalty::quadratic(vec![1.0, -2.0]).value(&[1.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn h1_constant_shift_is_pure_l2() {
        // oracle: ∫_D c² = c² · |D| and every difference quotient of a constant is zero
        let g = Grid::from_steps(0.07, 0.22).unwrap();
        let p = h1(g);
        let c = 0.013;
        let x: Vec<f64> = p.prior().iter().map(|v| v + c).collect();
        let expected = 0.5 * c * c * 10.0;
        assert!((p.value(&x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn h1_gradient_matches_finite_differences() {
        let g = Grid::with_nodes(5, 7).unwrap();
        let p = h1(g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.0..0.2)).collect();
        let grad = p.subgradient(&x).unwrap();
        for k in 0..g.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.value(&xp).unwrap() - p.value(&xm).unwrap()) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-8, "node {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn kl_rejects_non_positive_entries() {
        assert!(matches!(
            kl(3).value(&[1.0, 0.0, 2.0]),
            Err(Error::NonPositive { index: 1, .. })
        ));
        assert!(Penalty::new(PenaltyKind::KullbackLeibler, vec![1.0, -1.0], Measure::Counting).is_err());
    }

    #[test]
    fn h1_requires_a_mesh() {
        let kind = PenaltyKind::WeightedH1 {
            beta1: 1.0,
            beta2: 0.0,
            beta3: 0.0,
        };
        assert!(Penalty::new(kind, vec![0.0; 4], Measure::Counting).is_err());
    }

    #[test]
    fn positivity_and_convexity_on_random_samples() {
        let g = Grid::with_nodes(4, 6).unwrap();
        let kinds = [Penalty::quadratic(vec![0.3; g.len()]), h1(g), kl(g.len())];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in &kinds {
            for _ in 0..1000 {
                let u: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.05..2.0)).collect();
                let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.05..2.0)).collect();
                let fu = p.value(&u).unwrap();
                let fv = p.value(&v).unwrap();
                assert!(fu > 0.0, "{} not positive", p.kind().label());
                let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
                assert!(p.value(&mid).unwrap() <= 0.5 * (fu + fv) + 1e-10);
                // first-order convexity with the computed gradient
                let gv = p.subgradient(&v).unwrap();
                let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
                assert!(fu - fv - dot(&gv, &diff) >= -1e-10);
            }
        }
    }

    #[test]
    fn surface_norm_matches_weights() {
        let g = Grid::from_steps(0.1, 0.25).unwrap();
        let p = h1(g);
        let s = Surface::constant(g, 2.0);
        assert!((p.norm(s.values()) - 2.0 * 10f64.sqrt()).abs() < 1e-12);
    }
}
