//! Forward operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::dot;

/// Pointwise box constraint `lower <= x <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidParameter(format!(
                "bounds need lower <= upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        for (index, &value) in x.iter().enumerate() {
            if !(value >= self.lower && value <= self.upper) {
                return Err(Error::OutOfBounds {
                    index,
                    value,
                    lower: self.lower,
                    upper: self.upper,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(self.lower, self.upper);
        }
    }
}

/// A forward operator `F` acting on coordinate vectors.
///
/// Implementations must be deterministic: equal inputs give bitwise-equal
/// outputs.
pub trait ForwardModel: Sync {
    fn name(&self) -> &str;

    fn domain_dim(&self) -> usize;

    fn data_dim(&self) -> usize;

    /// Box constraints on the domain, if any.
    fn bounds(&self) -> Option<Bounds> {
        None
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Squared data-space norm. Defaults to the Euclidean one.
    fn data_norm_sq(&self, r: &[f64]) -> f64 {
        dot(r, r)
    }

    /// `‖F(x) - y‖²` together with its gradient in `x`.
    ///
    /// The gradient is the vector of partial derivatives with respect to
    /// the coordinates of `x`.
    fn misfit_sq_gradient(&self, x: &[f64], ydelta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// `‖F(x) - y‖` in the model's data norm.
pub fn residual_norm(model: &(impl ForwardModel + ?Sized), x: &[f64], ydelta: &[f64]) -> Result<f64> {
    check_data(model, ydelta)?;
    let fx = model.apply(x)?;
    let r: Vec<f64> = fx.iter().zip(ydelta).map(|(a, b)| a - b).collect();
    Ok(model.data_norm_sq(&r).sqrt())
}

/// Gradient of `‖F(x) - y‖^p`; returns the residual norm and the gradient.
///
/// Uses `∇‖r‖^p = (p/2) ‖r‖^(p-2) ∇‖r‖²`. At a zero residual the gradient
/// is reported as zero.
pub fn misfit_gradient(
    model: &(impl ForwardModel + ?Sized),
    x: &[f64],
    ydelta: &[f64],
    p: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("misfit exponent p must be >= 1, got {p}")));
    }
    check_data(model, ydelta)?;
    let (sq, mut g) = model.misfit_sq_gradient(x, ydelta)?;
    let r = sq.sqrt();
    if p != 2.0 {
        let scale = if r > 0.0 { 0.5 * p * r.powf(p - 2.0) } else { 0.0 };
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((r, g))
}

pub(crate) fn check_data(model: &(impl ForwardModel + ?Sized), ydelta: &[f64]) -> Result<()> {
    if ydelta.len() != model.data_dim() {
        return Err(Error::ShapeMismatch {
            expected: model.data_dim(),
            actual: ydelta.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_domain(model: &(impl ForwardModel + ?Sized), x: &[f64]) -> Result<()> {
    if x.len() != model.domain_dim() {
        return Err(Error::ShapeMismatch {
            expected: model.domain_dim(),
            actual: x.len(),
        });
    }
    crate::grid::check_finite(x)?;
    if let Some(b) = model.bounds() {
        b.check(x)?;
    }
    Ok(())
}

/// Dense linear operator `x ↦ A x`.
#[derive(Debug, Clone)]
pub struct MatrixModel {
    matrix: DMatrix<f64>,
    bounds: Option<Bounds>,
    name: String,
}

impl MatrixModel {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        MatrixModel {
            matrix,
            bounds: None,
            name: "matrix".into(),
        }
    }

    pub fn identity(n: usize) -> Self {
        MatrixModel {
            matrix: DMatrix::identity(n, n),
            bounds: None,
            name: "identity".into(),
        }
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ForwardModel for MatrixModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn data_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn bounds(&self) -> Option<Bounds> {
        self.bounds
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_domain(self, x)?;
        let y = &self.matrix * DVector::from_column_slice(x);
        Ok(y.as_slice().to_vec())
    }

    fn misfit_sq_gradient(&self, x: &[f64], ydelta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_domain(self, x)?;
        check_data(self, ydelta)?;
        let r = &self.matrix * DVector::from_column_slice(x) - DVector::from_column_slice(ydelta);
        let g = self.matrix.tr_mul(&r) * 2.0;
        Ok((r.norm_squared(), g.as_slice().to_vec()))
    }
}

/// Restriction of an ambient model to the first `dim` coordinates: the
/// remaining coordinates are held at zero.
pub struct Truncated<'a, M: ForwardModel + ?Sized> {
    inner: &'a M,
    dim: usize,
    name: String,
}

impl<'a, M: ForwardModel + ?Sized> Truncated<'a, M> {
    pub fn new(inner: &'a M, dim: usize) -> Result<Self> {
        if dim == 0 || dim > inner.domain_dim() {
            return Err(Error::InvalidParameter(format!(
                "truncation dimension {dim} outside 1..={}",
                inner.domain_dim()
            )));
        }
        Ok(Truncated {
            inner,
            dim,
            name: format!("{}[..{dim}]", inner.name()),
        })
    }

    pub fn pad(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.inner.domain_dim()];
        full[..x.len()].copy_from_slice(x);
        full
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for Truncated<'_, M> {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain_dim(&self) -> usize {
        self.dim
    }

    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn bounds(&self) -> Option<Bounds> {
        self.inner.bounds()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_domain(self, x)?;
        self.inner.apply(&self.pad(x))
    }

    fn data_norm_sq(&self, r: &[f64]) -> f64 {
        self.inner.data_norm_sq(r)
    }

    fn misfit_sq_gradient(&self, x: &[f64], ydelta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_domain(self, x)?;
        let (v, mut g) = self.inner.misfit_sq_gradient(&self.pad(x), ydelta)?;
        g.truncate(self.dim);
        Ok((v, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_gradient_matches_finite_differences() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, 3.0]);
        let m = MatrixModel::new(a);
        let y = [0.2, -0.1, 1.0];
        let x = [0.7, -0.4];
        let (_, g) = m.misfit_sq_gradient(&x, &y).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fp = m.misfit_sq_gradient(&xp, &y).unwrap().0;
            let fm = m.misfit_sq_gradient(&xm, &y).unwrap().0;
            assert!(((fp - fm) / (2.0 * h) - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn p_power_chain_rule() {
        let m = MatrixModel::identity(2);
        let (r, g) = misfit_gradient(&m, &[3.0, 4.0], &[0.0, 0.0], 3.0).unwrap();
        assert_eq!(r, 5.0);
        // ∇‖x‖³ = 3‖x‖ x
        assert!((g[0] - 45.0).abs() < 1e-12 && (g[1] - 60.0).abs() < 1e-12);
        assert!(misfit_gradient(&m, &[0.0, 0.0], &[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn bounds_report_offending_entry() {
        let m = MatrixModel::identity(3).with_bounds(Bounds::new(0.0, 1.0).unwrap());
        match m.apply(&[0.5, 1.5, 0.2]) {
            Err(Error::OutOfBounds { index, value, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(value, 1.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_pads_with_zeros() {
        let m = MatrixModel::identity(3);
        let t = Truncated::new(&m, 2).unwrap();
        assert_eq!(t.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0, 0.0]);
        let (_, g) = t.misfit_sq_gradient(&[1.0, 2.0], &[0.0, 0.0, 5.0]).unwrap();
        assert_eq!(g, vec![2.0, 4.0]);
    }
}
