//! Bilinear grid transfer.
//!
//! An [`Interpolator`] stores, for every target node, the lower-left source
//! node and the fractional offsets of the bilinear interpolant. Values are
//! formed by nested linear interpolation `a + f (b − a)`, which reproduces
//! constants exactly; the transpose uses the matching tensor weights.

use crate::error::{Error, Result};
use crate::grid::{Grid, Surface};

/// Offsets closer than this (in units of the source step) snap to the node.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Interpolator {
    source: Grid,
    target: Grid,
    ts: Vec<Stencil1d>,
    ys: Vec<Stencil1d>,
}

#[derive(Debug, Clone, Copy)]
struct Stencil1d {
    lo: usize,
    // weight of lo + 1; zero when the point sits on a node
    frac: f64,
}

fn stencil(pos: f64, origin: f64, step: f64, n: usize) -> Stencil1d {
    let p = (pos - origin) / step;
    let k = p.round();
    if (p - k).abs() <= SNAP {
        let lo = (k.max(0.0) as usize).min(n - 1);
        return Stencil1d { lo, frac: 0.0 };
    }
    let lo = (p.floor().max(0.0) as usize).min(n - 2);
    let frac = (p - lo as f64).clamp(0.0, 1.0);
    Stencil1d { lo, frac }
}

#[inline]
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + f * (b - a)
}

impl Interpolator {
    pub fn new(source: &Grid, target: &Grid) -> Result<Self> {
        if !source.covers(target) {
            return Err(Error::ExtentMismatch);
        }
        let ts = (0..target.nt)
            .map(|i| stencil(target.t(i), source.t_min, source.dt, source.nt))
            .collect();
        let ys = (0..target.ny)
            .map(|j| stencil(target.y(j), source.y_min, source.dy, source.ny))
            .collect();
        Ok(Interpolator {
            source: *source,
            target: *target,
            ts,
            ys,
        })
    }

    pub fn source(&self) -> &Grid {
        &self.source
    }

    pub fn target(&self) -> &Grid {
        &self.target
    }

    /// Interpolate source-grid values onto the target grid.
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        debug_assert_eq!(src.len(), self.source.len());
        let ny = self.source.ny;
        let row = |i: usize, sy: &Stencil1d| {
            let k = i * ny + sy.lo;
            if sy.frac == 0.0 {
                src[k]
            } else {
                lerp(src[k], src[k + 1], sy.frac)
            }
        };
        let mut out = Vec::with_capacity(self.target.len());
        for st in &self.ts {
            for sy in &self.ys {
                let v = if st.frac == 0.0 {
                    row(st.lo, sy)
                } else {
                    lerp(row(st.lo, sy), row(st.lo + 1, sy), st.frac)
                };
                out.push(v);
            }
        }
        out
    }

    /// Apply the transpose: accumulate target-grid values back onto the source grid.
    pub fn apply_transpose(&self, tgt: &[f64]) -> Vec<f64> {
        debug_assert_eq!(tgt.len(), self.target.len());
        let ny = self.source.ny;
        let mut out = vec![0.0; self.source.len()];
        let mut k = 0;
        for st in &self.ts {
            for sy in &self.ys {
                let v = tgt[k];
                k += 1;
                for (ti, a) in [(st.lo, 1.0 - st.frac), (st.lo + 1, st.frac)] {
                    if a == 0.0 {
                        continue;
                    }
                    for (yj, b) in [(sy.lo, 1.0 - sy.frac), (sy.lo + 1, sy.frac)] {
                        if b == 0.0 {
                            continue;
                        }
                        out[ti * ny + yj] += a * b * v;
                    }
                }
            }
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        self.source == self.target
    }
}

/// Bilinear interpolation of `u` onto `target`.
pub fn interpolate(u: &Surface, target: &Grid) -> Result<Surface> {
    if u.grid() == target {
        return Ok(u.clone());
    }
    let it = Interpolator::new(u.grid(), target)?;
    Surface::new(*target, it.apply(u.values()))
}
