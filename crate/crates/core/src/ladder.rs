//! Discretization ladders: ordered families of coordinate subspaces or
//! meshes, with the projections `P_m` onto them.

use crate::error::{Error, Result};
use crate::grid::{check_finite, dot, Element, Grid, Surface};
use crate::model::{Bounds, ForwardModel};
use crate::transfer::interpolate;

/// One rung of a ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelSpec {
    /// The span of the first `m` coordinate vectors of the ambient space.
    Coordinate(usize),
    /// Piecewise bilinear fields on a mesh.
    Mesh(Grid),
}

impl LevelSpec {
    pub fn dim(&self) -> usize {
        match self {
            LevelSpec::Coordinate(m) => *m,
            LevelSpec::Mesh(g) => g.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationLadder {
    levels: Vec<LevelSpec>,
    nested: bool,
    /// Ambient dimension for coordinate ladders.
    ambient: Option<usize>,
    bounds: Option<Bounds>,
}

impl DiscretizationLadder {
    /// Coordinate ladder in `R^ambient`; `dims` must be strictly increasing.
    pub fn coordinate(ambient: usize, dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLadder("a ladder needs at least one level".into()));
        }
        if dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLadder(format!("dimensions must increase strictly: {dims:?}")));
        }
        if dims[0] == 0 || *dims.last().unwrap() > ambient {
            return Err(Error::InvalidLadder(format!(
                "dimensions must lie in 1..={ambient}: {dims:?}"
            )));
        }
        Ok(DiscretizationLadder {
            levels: dims.iter().map(|&m| LevelSpec::Coordinate(m)).collect(),
            nested: true,
            ambient: Some(ambient),
            bounds: None,
        })
    }

    /// Nested mesh ladder: `levels` meshes, each refining the previous one
    /// by a factor of two, starting from `coarsest`.
    pub fn nested_grids(coarsest: Grid, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidLadder("a ladder needs at least one level".into()));
        }
        let mut grids = vec![coarsest];
        for _ in 1..levels {
            let next = grids.last().unwrap().refine();
            grids.push(next);
        }
        Ok(DiscretizationLadder {
            levels: grids.into_iter().map(LevelSpec::Mesh).collect(),
            nested: true,
            ambient: None,
            bounds: None,
        })
    }

    /// Arbitrary list of meshes, not necessarily nested.
    pub fn free_list(grids: Vec<Grid>) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::InvalidLadder("a ladder needs at least one level".into()));
        }
        let nested = grids.windows(2).all(|w| w[0].nodes_subset_of(&w[1]));
        Ok(DiscretizationLadder {
            levels: grids.into_iter().map(LevelSpec::Mesh).collect(),
            nested,
            ambient: None,
            bounds: None,
        })
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn bounds(&self) -> Option<Bounds> {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn is_nested(&self) -> bool {
        self.nested
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        self.ambient
    }

    pub fn spec(&self, level: usize) -> Result<&LevelSpec> {
        self.levels.get(level).ok_or(Error::LevelOutOfRange {
            level,
            levels: self.levels.len(),
        })
    }

    /// `P_m x`: restriction to the level followed by clamping to the bounds.
    ///
    /// Coordinate levels return an ambient vector whose trailing entries are
    /// zero; mesh levels return a surface on the level mesh.
    pub fn project(&self, level: usize, x: &Element) -> Result<Element> {
        let spec = *self.spec(level)?;
        check_finite(x.values())?;
        match (spec, x) {
            (LevelSpec::Coordinate(m), Element::Vector(v)) => {
                let n = self.ambient.expect("coordinate ladder");
                if v.len() != n {
                    return Err(Error::ShapeMismatch {
                        expected: n,
                        actual: v.len(),
                    });
                }
                let mut out = vec![0.0; n];
                out[..m].copy_from_slice(&v[..m]);
                if let Some(b) = self.bounds {
                    b.clamp(&mut out[..m]);
                }
                Ok(Element::Vector(out))
            }
            (LevelSpec::Mesh(g), Element::Surface(s)) => {
                let mut r = interpolate(s, &g)?;
                if let Some(b) = self.bounds {
                    b.clamp(r.values_mut());
                }
                Ok(Element::Surface(r))
            }
            _ => Err(Error::InvalidParameter(
                "element kind does not match the ladder (vector vs surface)".into(),
            )),
        }
    }

    /// Level coordinates of `x` (the optimization variables at that level).
    pub fn restrict(&self, level: usize, x: &Element) -> Result<Vec<f64>> {
        let p = self.project(level, x)?;
        Ok(match (self.spec(level)?, p) {
            (LevelSpec::Coordinate(m), Element::Vector(mut v)) => {
                v.truncate(*m);
                v
            }
            (_, e) => e.values().to_vec(),
        })
    }

    /// Inverse of [`DiscretizationLadder::restrict`]: level coordinates as an
    /// element (zero-padded vector or surface on the level mesh).
    pub fn embed(&self, level: usize, x: &[f64]) -> Result<Element> {
        let spec = *self.spec(level)?;
        if x.len() != spec.dim() {
            return Err(Error::ShapeMismatch {
                expected: spec.dim(),
                actual: x.len(),
            });
        }
        Ok(match spec {
            LevelSpec::Coordinate(_) => {
                let mut v = vec![0.0; self.ambient.expect("coordinate ladder")];
                v[..x.len()].copy_from_slice(x);
                Element::Vector(v)
            }
            LevelSpec::Mesh(g) => Element::Surface(Surface::new(g, x.to_vec())?),
        })
    }

    /// `‖x − y‖` after bringing `y` to `x`'s representation (prolongation to
    /// `x`'s mesh for surfaces).
    pub fn distance(x: &Element, y: &Element) -> Result<f64> {
        let diff = Self::align(x, y)?;
        Ok(match x {
            Element::Vector(_) => dot(&diff, &diff).sqrt(),
            Element::Surface(s) => {
                let w = s.grid().trapezoid_weights();
                diff.iter().zip(&w).map(|(d, w)| w * d * d).sum::<f64>().sqrt()
            }
        })
    }

    /// `x − y` with `y` interpolated onto `x`'s representation.
    pub fn align(x: &Element, y: &Element) -> Result<Vec<f64>> {
        match (x, y) {
            (Element::Vector(a), Element::Vector(b)) => {
                if a.len() != b.len() {
                    return Err(Error::ShapeMismatch {
                        expected: a.len(),
                        actual: b.len(),
                    });
                }
                Ok(a.iter().zip(b).map(|(p, q)| p - q).collect())
            }
            (Element::Surface(a), Element::Surface(b)) => {
                let b = interpolate(b, a.grid())?;
                Ok(a.values().iter().zip(b.values()).map(|(p, q)| p - q).collect())
            }
            _ => Err(Error::InvalidParameter("cannot compare a vector with a surface".into())),
        }
    }

    /// `φ_m = ‖x† − P_m x†‖`.
    pub fn phi_m(&self, level: usize, xdagger: &Element) -> Result<f64> {
        let p = self.project(level, xdagger)?;
        Self::distance(xdagger, &p)
    }

    /// `γ_m = ‖F(x†) − F(P_m x†)‖`.
    pub fn gamma_m(&self, level: usize, model: &dyn ElementModel, xdagger: &Element) -> Result<f64> {
        let p = self.project(level, xdagger)?;
        let a = model.apply_element(xdagger)?;
        let b = model.apply_element(&p)?;
        let r: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        Ok(model.element_norm_sq(&r).sqrt())
    }

    /// `γ_m` for every level.
    pub fn gammas(&self, model: &dyn ElementModel, xdagger: &Element) -> Result<Vec<f64>> {
        (0..self.len()).map(|m| self.gamma_m(m, model, xdagger)).collect()
    }

    /// `φ_m` for every level.
    pub fn phis(&self, xdagger: &Element) -> Result<Vec<f64>> {
        (0..self.len()).map(|m| self.phi_m(m, xdagger)).collect()
    }
}

/// A forward operator defined on whole elements of the ambient space, used
/// to evaluate `γ_m` across levels.
pub trait ElementModel: Sync {
    fn apply_element(&self, x: &Element) -> Result<Vec<f64>>;

    fn element_norm_sq(&self, r: &[f64]) -> f64 {
        dot(r, r)
    }
}

impl<M: ForwardModel> ElementModel for M {
    fn apply_element(&self, x: &Element) -> Result<Vec<f64>> {
        match x {
            Element::Vector(v) => self.apply(v),
            Element::Surface(s) => self.apply(s.values()),
        }
    }

    fn element_norm_sq(&self, r: &[f64]) -> f64 {
        self.data_norm_sq(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MatrixModel;
    use nalgebra::DMatrix;

    fn v(x: &[f64]) -> Element {
        Element::Vector(x.to_vec())
    }

    #[test]
    fn coordinate_projection() {
        let l = DiscretizationLadder::coordinate(3, &[1, 2, 3]).unwrap();
        assert_eq!(l.project(1, &v(&[1.0, 2.0, 3.0])).unwrap(), v(&[1.0, 2.0, 0.0]));
        assert_eq!(l.project(1, &v(&[1.0, 2.0, 0.0])).unwrap(), v(&[1.0, 2.0, 0.0]));
        assert!(matches!(
            l.project(3, &v(&[1.0, 2.0, 3.0])),
            Err(Error::LevelOutOfRange { level: 3, levels: 3 })
        ));
        assert_eq!(l.restrict(1, &v(&[1.0, 2.0, 3.0])).unwrap(), vec![1.0, 2.0]);
        assert_eq!(l.embed(0, &[4.0]).unwrap(), v(&[4.0, 0.0, 0.0]));
    }

    #[test]
    fn projection_clamps_to_bounds() {
        let l = DiscretizationLadder::coordinate(3, &[2, 3])
            .unwrap()
            .with_bounds(Bounds::new(0.0, 1.5).unwrap());
        assert_eq!(l.project(0, &v(&[-1.0, 2.0, 3.0])).unwrap(), v(&[0.0, 1.5, 0.0]));
    }

    #[test]
    fn constant_surface_survives_every_level() {
        let l = DiscretizationLadder::nested_grids(Grid::with_nodes(3, 5).unwrap(), 4).unwrap();
        let fine = Surface::constant(Grid::from_steps(0.01, 0.05).unwrap(), 0.08);
        for m in 0..l.len() {
            let p = l.project(m, &Element::Surface(fine.clone())).unwrap();
            assert!(p.values().iter().all(|x| *x == 0.08));
        }
    }

    #[test]
    fn gamma_and_phi_by_hand() {
        let l = DiscretizationLadder::coordinate(3, &[2, 3]).unwrap();
        let id = MatrixModel::identity(3);
        let xd = v(&[1.0, 2.0, 3.0]);
        assert_eq!(l.gamma_m(0, &id, &xd).unwrap(), 3.0);
        assert_eq!(l.phi_m(0, &xd).unwrap(), 3.0);
        assert_eq!(l.gamma_m(1, &id, &xd).unwrap(), 0.0);
        assert_eq!(l.phi_m(1, &xd).unwrap(), 0.0);
    }

    #[test]
    fn gamma_matches_matrix_vector_oracle() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.3, -1.2, 0.7, 2.0, 1.1, 0.4, -0.5, 0.9, -0.8, 1.5, 0.2, -0.3, 0.6, 0.1, 1.7, -1.4,
            ],
        );
        let l = DiscretizationLadder::coordinate(4, &[2, 4]).unwrap();
        let xd = [0.5, -1.0, 2.0, 0.25];
        let tail = nalgebra::DVector::from_vec(vec![0.0, 0.0, 2.0, 0.25]);
        let expected = (&a * tail).norm();
        let got = l.gamma_m(0, &MatrixModel::new(a), &v(&xd)).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn phi_decreases_on_nested_grids() {
        let l = DiscretizationLadder::nested_grids(Grid::with_nodes(3, 5).unwrap(), 5).unwrap();
        assert!(l.is_nested());
        let reference = Grid::with_nodes(129, 257).unwrap();
        let xd = Element::Surface(Surface::from_fn(reference, |t, y| (2.0 * t).sin() * (0.7 * y).cos()));
        let phis = l.phis(&xd).unwrap();
        for w in phis.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{phis:?}");
        }
        assert!(phis[4] < phis[0] / 20.0);
    }

    #[test]
    fn free_list_detects_nesting() {
        let a = Grid::from_steps(0.1, 0.25).unwrap();
        let b = Grid::from_steps(0.08, 0.22).unwrap();
        assert!(!DiscretizationLadder::free_list(vec![a, b]).unwrap().is_nested());
        assert!(DiscretizationLadder::free_list(vec![a, a.refine()]).unwrap().is_nested());
    }

    #[test]
    fn rejects_bad_ladders() {
        assert!(DiscretizationLadder::coordinate(3, &[]).is_err());
        assert!(DiscretizationLadder::coordinate(3, &[2, 2]).is_err());
        assert!(DiscretizationLadder::coordinate(3, &[1, 4]).is_err());
        assert!(DiscretizationLadder::free_list(vec![]).is_err());
    }
}
