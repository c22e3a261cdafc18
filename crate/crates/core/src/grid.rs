//! Uniform tensor meshes on a time-space rectangle and the fields sampled on them.
//!
//! Values are stored row-major with time as the slow index, so node `(i, j)`
//! (time row `i`, space column `j`) lives at `i * ny + j`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const EXTENT_RTOL: f64 = 1e-12;

/// Uniform mesh on `[t_min, t_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t_min: f64,
    pub t_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub dt: f64,
    pub dy: f64,
    pub nt: usize,
    pub ny: usize,
}

impl Grid {
    /// Default calibration domain `[0, 1] x [-5, 5]`.
    pub const T_MIN: f64 = 0.0;
    pub const T_MAX: f64 = 1.0;
    pub const Y_MIN: f64 = -5.0;
    pub const Y_MAX: f64 = 5.0;

    pub fn new(t_min: f64, t_max: f64, y_min: f64, y_max: f64, nt: usize, ny: usize) -> Result<Self> {
        if nt < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes per axis, got {nt}x{ny}")));
        }
        if !(t_max > t_min) || !(y_max > y_min) || !t_min.is_finite() || !y_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "degenerate extents [{t_min}, {t_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Grid {
            t_min,
            t_max,
            y_min,
            y_max,
            dt: (t_max - t_min) / (nt - 1) as f64,
            dy: (y_max - y_min) / (ny - 1) as f64,
            nt,
            ny,
        })
    }

    /// Grid on the default domain with the given node counts.
    pub fn with_nodes(nt: usize, ny: usize) -> Result<Self> {
        Grid::new(Self::T_MIN, Self::T_MAX, Self::Y_MIN, Self::Y_MAX, nt, ny)
    }

    /// Grid on the default domain whose steps are as close as possible to
    /// `dt`, `dy` without exceeding them.
    ///
    /// When a step does not divide its extent the node count is rounded up,
    /// so the realized step is slightly smaller than requested.
    pub fn from_steps(dt: f64, dy: f64) -> Result<Self> {
        Grid::from_steps_on(Self::T_MIN, Self::T_MAX, Self::Y_MIN, Self::Y_MAX, dt, dy)
    }

    pub fn from_steps_on(t_min: f64, t_max: f64, y_min: f64, y_max: f64, dt: f64, dy: f64) -> Result<Self> {
        if !(dt > 0.0) || !(dy > 0.0) {
            return Err(Error::InvalidGrid(format!("steps must be positive, got dt={dt}, dy={dy}")));
        }
        let nt = intervals(t_max - t_min, dt) + 1;
        let ny = intervals(y_max - y_min, dy) + 1;
        Grid::new(t_min, t_max, y_min, y_max, nt, ny)
    }

    pub fn len(&self) -> usize {
        self.nt * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn area(&self) -> f64 {
        (self.t_max - self.t_min) * (self.y_max - self.y_min)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        if i + 1 == self.nt {
            self.t_max
        } else {
            self.t_min + i as f64 * self.dt
        }
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        if j + 1 == self.ny {
            self.y_max
        } else {
            self.y_min + j as f64 * self.dy
        }
    }

    /// True when `other` lies inside this grid's extents (up to rounding).
    pub fn covers(&self, other: &Grid) -> bool {
        let tt = EXTENT_RTOL * (self.t_max - self.t_min).abs().max(1.0);
        let ty = EXTENT_RTOL * (self.y_max - self.y_min).abs().max(1.0);
        other.t_min >= self.t_min - tt
            && other.t_max <= self.t_max + tt
            && other.y_min >= self.y_min - ty
            && other.y_max <= self.y_max + ty
    }

    /// True when every node of `self` is also a node of `finer`.
    pub fn nodes_subset_of(&self, finer: &Grid) -> bool {
        if self.t_min != finer.t_min
            || self.t_max != finer.t_max
            || self.y_min != finer.y_min
            || self.y_max != finer.y_max
        {
            return false;
        }
        (finer.nt - 1).is_multiple_of(self.nt - 1) && (finer.ny - 1).is_multiple_of(self.ny - 1)
    }

    /// Trapezoidal quadrature weights; they sum to the grid area.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let wt = trapezoid_1d(self.nt, self.dt);
        let wy = trapezoid_1d(self.ny, self.dy);
        let mut w = Vec::with_capacity(self.len());
        for a in &wt {
            for b in &wy {
                w.push(a * b);
            }
        }
        w
    }

    /// Halve the node spacing in both directions.
    pub fn refine(&self) -> Grid {
        Grid {
            nt: 2 * (self.nt - 1) + 1,
            ny: 2 * (self.ny - 1) + 1,
            dt: self.dt / 2.0,
            dy: self.dy / 2.0,
            ..*self
        }
    }

    /// Double the node spacing; `None` when the interval counts are odd.
    pub fn coarsen(&self) -> Option<Grid> {
        if !(self.nt - 1).is_multiple_of(2) || !(self.ny - 1).is_multiple_of(2) || self.nt < 3 || self.ny < 3 {
            return None;
        }
        Grid::new(
            self.t_min,
            self.t_max,
            self.y_min,
            self.y_max,
            (self.nt - 1) / 2 + 1,
            (self.ny - 1) / 2 + 1,
        )
        .ok()
    }
}

fn intervals(extent: f64, step: f64) -> usize {
    let ratio = extent / step;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        (rounded as usize).max(1)
    } else {
        (ratio.ceil() as usize).max(1)
    }
}

pub(crate) fn trapezoid_1d(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Real-valued samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    grid: Grid,
    values: Vec<f64>,
}

impl Surface {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Surface { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Surface {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nt {
            let t = grid.t(i);
            for j in 0..grid.ny {
                values.push(f(t, grid.y(j)));
            }
        }
        Surface { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.grid.ny..(i + 1) * self.grid.ny]
    }

    /// Discrete L2(D) norm by the trapezoidal rule.
    pub fn l2_norm(&self) -> f64 {
        weighted_norm(&self.values, &self.grid.trapezoid_weights())
    }

    /// Serialize to the plain-text matrix format: a header line
    /// `nt ny dt dy t_min y_min`, then `nt` rows of `ny` values.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::with_capacity(self.values.len() * 22);
        let _ = writeln!(s, "{} {} {} {} {} {}", g.nt, g.ny, g.dt, g.dy, g.t_min, g.y_min);
        for i in 0..g.nt {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty surface file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(Error::Parse(format!("surface header needs 6 fields, got {}", h.len())));
        }
        let nt: usize = parse_field(h[0], "nt")?;
        let ny: usize = parse_field(h[1], "ny")?;
        let dt: f64 = parse_field(h[2], "dt")?;
        let dy: f64 = parse_field(h[3], "dy")?;
        let t_min: f64 = parse_field(h[4], "t_min")?;
        let y_min: f64 = parse_field(h[5], "y_min")?;
        if nt < 2 || ny < 2 {
            return Err(Error::Parse(format!("invalid node counts {nt}x{ny}")));
        }
        let grid = Grid::new(
            t_min,
            t_min + dt * (nt - 1) as f64,
            y_min,
            y_min + dy * (ny - 1) as f64,
            nt,
            ny,
        )?;
        let mut values = Vec::with_capacity(grid.len());
        for (row_no, line) in lines.enumerate() {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(parse_field::<f64>(tok, "value")?);
            }
            if values.len() - before != ny {
                return Err(Error::Parse(format!(
                    "row {row_no} has {} values, expected {ny}",
                    values.len() - before
                )));
            }
        }
        Surface::new(grid, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Surface::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_field<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {what} from {tok:?}")))
}

/// An element of a domain or data space: a plain coordinate vector or a
/// field on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Vector(Vec<f64>),
    Surface(Surface),
}

impl Element {
    pub fn values(&self) -> &[f64] {
        match self {
            Element::Vector(v) => v,
            Element::Surface(s) => s.values(),
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    /// Quadrature weights of the natural inner product: ones for vectors,
    /// trapezoid weights for surfaces.
    pub fn weights(&self) -> Option<Vec<f64>> {
        match self {
            Element::Vector(_) => None,
            Element::Surface(s) => Some(s.grid().trapezoid_weights()),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Element::Vector(v) => dot(v, v).sqrt(),
            Element::Surface(s) => s.l2_norm(),
        }
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn weighted_norm(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}
