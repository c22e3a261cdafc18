//! Bregman distances, error norms, coercivity checks and convergence-rate
//! tables.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrepancy::MorozovResult;
use crate::error::{Error, Result};
use crate::grid::{dot, Element};
use crate::ladder::DiscretizationLadder;
use crate::penalty::Penalty;

#[derive(Debug, Clone, PartialEq)]
pub struct BregmanReport {
    /// `D_ξ(u, v)`.
    pub distance: f64,
    /// The `ξ` used, taken at `v`.
    pub subgradient: Vec<f64>,
}

/// `D_ξ(u, v) = f(u) − f(v) − ⟨ξ, u − v⟩`, with `ξ = ∇f(v)` unless given.
///
/// `ξ` is the gradient with respect to the coordinates, so the pairing is the
/// plain dot product (quadrature weights are already inside `ξ`). Rounding
/// below zero is clipped.
pub fn bregman_distance(penalty: &Penalty, u: &[f64], v: &[f64], xi: Option<&[f64]>) -> Result<BregmanReport> {
    let fu = penalty.value(u)?;
    let fv = penalty.value(v)?;
    let subgradient = match xi {
        Some(x) => {
            if x.len() != v.len() {
                return Err(Error::ShapeMismatch {
                    expected: v.len(),
                    actual: x.len(),
                });
            }
            x.to_vec()
        }
        None => penalty.subgradient(v)?,
    };
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let raw = fu - fv - dot(&subgradient, &diff);
    Ok(BregmanReport {
        distance: raw.max(0.0),
        subgradient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub holds: bool,
    /// Smallest `D(ũ, u)/‖ũ − u‖^q` over the sample.
    pub worst_ratio: f64,
    pub samples: usize,
}

/// Sample `samples` pairs with coordinates uniform in `range` and test
/// `D_ξ(ũ, u) ≥ ζ ‖ũ − u‖^q` (relative slack `1e-12`). The norm is the
/// penalty's own L²/ℓ² norm.
pub fn q_coercivity_check(
    penalty: &Penalty,
    q: f64,
    zeta: f64,
    samples: usize,
    seed: u64,
    range: (f64, f64),
) -> Result<CoercivityReport> {
    if !(q >= 1.0) || !(zeta > 0.0) || !(range.0 < range.1) || samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need q >= 1, zeta > 0, a non-empty range and samples > 0; got q={q}, zeta={zeta}, range={range:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = penalty.dim();
    let mut worst = f64::INFINITY;
    let mut holds = true;
    for _ in 0..samples {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(range.0..range.1)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(range.0..range.1)).collect();
        let d = bregman_distance(penalty, &a, &b, None)?.distance;
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let nq = penalty.norm(&diff).powf(q);
        if nq == 0.0 {
            continue;
        }
        worst = worst.min(d / nq);
        if d < zeta * nq * (1.0 - 1e-12) {
            holds = false;
        }
    }
    Ok(CoercivityReport {
        holds,
        worst_ratio: worst,
        samples,
    })
}

/// Discrete L² (surfaces) or Euclidean (vectors) norm of `x − x_true`. Both
/// must share the representation; use [`l2_error_interpolated`] otherwise.
pub fn l2_error(x: &Element, x_true: &Element) -> Result<f64> {
    match (x, x_true) {
        (Element::Surface(a), Element::Surface(b)) if a.grid() != b.grid() => Err(Error::InvalidParameter(
            "surfaces live on different meshes; interpolate first".into(),
        )),
        _ => DiscretizationLadder::distance(x, x_true),
    }
}

/// L² error after interpolating `x` onto the mesh of `x_true`.
pub fn l2_error_interpolated(x: &Element, x_true: &Element) -> Result<f64> {
    DiscretizationLadder::distance(x_true, x)
}

/// `x` in the coordinates of `reference` (interpolated for surfaces).
fn in_reference(reference: &Element, x: &Element) -> Result<Vec<f64>> {
    let diff = DiscretizationLadder::align(reference, x)?;
    Ok(reference.values().iter().zip(&diff).map(|(r, d)| r - d).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub delta: f64,
    pub alpha: f64,
    pub level: usize,
    pub residual: f64,
    /// `D_{ξ†}(x^δ, x†)`.
    pub bregman: f64,
    pub l2_error: f64,
    pub gamma_m: f64,
    pub phi_m: f64,
    /// `D_{ξ†}(P_m x†, x†)`.
    pub eta_m: f64,
}

/// Least-squares slopes of `log(column)` against `log δ`. A slope is `None`
/// when fewer than two rows have a positive entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSlopes {
    pub residual: Option<f64>,
    pub bregman: Option<f64>,
    pub l2_error: Option<f64>,
    pub alpha: Option<f64>,
    /// `δ^p/α`.
    pub delta_p_over_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    /// Sorted by `δ`, largest first.
    pub rows: Vec<RateRow>,
    pub slopes: RateSlopes,
    pub p: f64,
}

pub const RATE_HEADER: &str = "delta,alpha,level,residual,bregman,l2_error,gamma_m,phi_m,eta_m";

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RATE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.delta, r.alpha, r.level, r.residual, r.bregman, r.l2_error, r.gamma_m, r.phi_m, r.eta_m
            );
        }
        s
    }

    /// `δ^p/α` per row, in row order.
    pub fn delta_p_over_alpha(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta.powf(self.p) / r.alpha).collect()
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`, skipping
/// non-positive entries.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-`δ` diagnostics of discrepancy-selected solutions against a known
/// `x†`. `penalty` acts on the representation of `x_true` (ambient vector or
/// reference mesh); solutions are embedded from their level and, for
/// meshes, interpolated onto it.
pub fn rate_table(
    runs: &[(f64, MorozovResult)],
    penalty: &Penalty,
    x_true: &Element,
    ladder: &DiscretizationLadder,
    p: f64,
) -> Result<RateTable> {
    let mut deltas: Vec<f64> = runs.iter().map(|r| r.0).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    if deltas.len() < 3 {
        return Err(Error::TooFewRows(deltas.len()));
    }
    if penalty.dim() != x_true.len() {
        return Err(Error::ShapeMismatch {
            expected: x_true.len(),
            actual: penalty.dim(),
        });
    }
    let xd = x_true.values();
    let xi = penalty.subgradient(xd)?;
    let mut rows = Vec::with_capacity(runs.len());
    for (delta, res) in runs {
        let m = res.level;
        let x = ladder.embed(m, &res.solution.x)?;
        let xr = in_reference(x_true, &x)?;
        let pm = in_reference(x_true, &ladder.project(m, x_true)?)?;
        rows.push(RateRow {
            delta: *delta,
            alpha: res.alpha,
            level: m,
            residual: res.residual(),
            bregman: bregman_distance(penalty, &xr, xd, Some(&xi))?.distance,
            l2_error: l2_error_interpolated(&x, x_true)?,
            gamma_m: res.gamma_m,
            phi_m: ladder.phi_m(m, x_true)?,
            eta_m: bregman_distance(penalty, &pm, xd, Some(&xi))?.distance,
        });
    }
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let col = |f: fn(&RateRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let d = col(|r| r.delta);
    let slopes = RateSlopes {
        residual: loglog_slope(&d, &col(|r| r.residual)),
        bregman: loglog_slope(&d, &col(|r| r.bregman)),
        l2_error: loglog_slope(&d, &col(|r| r.l2_error)),
        alpha: loglog_slope(&d, &col(|r| r.alpha)),
        delta_p_over_alpha: loglog_slope(&d, &rows.iter().map(|r| r.delta.powf(p) / r.alpha).collect::<Vec<_>>()),
    };
    Ok(RateTable { rows, slopes, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Surface};
    use crate::penalty::{Measure, PenaltyKind};

    #[test]
    fn bregman_examples() {
        let q = Penalty::quadratic(vec![0.0, 0.0]);
        assert_eq!(bregman_distance(&q, &[1.0, 0.0], &[0.0, 0.0], None).unwrap().distance, 1.0);
        assert_eq!(bregman_distance(&q, &[0.3, 0.7], &[0.3, 0.7], None).unwrap().distance, 0.0);

        let g = Grid::from_steps(0.1, 0.5).unwrap();
        let h1 = Penalty::new(
            PenaltyKind::WeightedH1 {
                beta1: 0.5,
                beta2: 0.125,
                beta3: 0.025,
            },
            vec![0.08; g.len()],
            Measure::Mesh(g),
        )
        .unwrap();
        let v = Surface::from_fn(g, |t, y| 0.08 + 0.01 * t * (y * 0.3).sin());
        let c = 0.02;
        let u: Vec<f64> = v.values().iter().map(|x| x + c).collect();
        let d = bregman_distance(&h1, &u, v.values(), None).unwrap().distance;
        assert!((d - 0.5 * c * c * 10.0).abs() < 1e-14, "{d}");
    }

    #[test]
    fn quadratic_bregman_is_squared_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d = bregman_distance(&Penalty::quadratic(x0), &u, &v, None).unwrap().distance;
            let sq: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((d - sq).abs() <= 1e-12 * sq.max(1.0));
        }
    }

    #[test]
    fn coercivity() {
        let q = Penalty::quadratic(vec![0.0; 3]);
        let r = q_coercivity_check(&q, 2.0, 1.0, 200, 1, (-2.0, 2.0)).unwrap();
        assert!(r.holds);
        assert!((r.worst_ratio - 1.0).abs() < 1e-12);
        assert!(!q_coercivity_check(&q, 2.0, 1.5, 200, 1, (-2.0, 2.0)).unwrap().holds);
        let kl = Penalty::new(PenaltyKind::KullbackLeibler, vec![1.0; 3], Measure::Counting).unwrap();
        let r = q_coercivity_check(&kl, 2.0, 0.1, 500, 2, (0.5, 2.0)).unwrap();
        // x log(x/y) − x + y ≥ (x−y)²/(2 max(x, y)) ≥ (x−y)²/4 on [0.5, 2]
        assert!(r.worst_ratio >= 0.25 - 1e-12 && r.worst_ratio.is_finite());
        assert!(q_coercivity_check(&q, 0.5, 1.0, 10, 1, (0.0, 1.0)).is_err());
    }

    #[test]
    fn l2_error_examples() {
        let g = Grid::from_steps(0.1, 0.5).unwrap();
        let a = Surface::from_fn(g, |t, y| t * y);
        let b = Surface::from_fn(g, |t, y| t * y + 0.03);
        let (a, b) = (Element::Surface(a), Element::Surface(b));
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);
        let e = l2_error(&a, &b).unwrap();
        assert!((e - 0.03 * 10f64.sqrt()).abs() < 1e-14);
        assert_eq!(e, l2_error(&b, &a).unwrap());
        let other = Element::Surface(Surface::constant(Grid::from_steps(0.2, 0.5).unwrap(), 0.0));
        assert!(l2_error(&a, &other).is_err());
        assert!(l2_error(&Element::Vector(vec![1.0]), &Element::Vector(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn slopes() {
        let x = [1.0, 0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&[1.0], &[1.0]), None);
        assert_eq!(loglog_slope(&[1.0, 2.0], &[0.0, 0.0]), None);
    }
}
