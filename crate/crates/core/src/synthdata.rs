//! Synthetic calibration data: fine-mesh solve, Gaussian noise, transfer to
//! the data mesh, and the noise-level estimate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Grid, Surface};
use crate::pde::{solve_forward, PdeParams};
use crate::transfer::interpolate;

/// Composite Simpson integral with its parity handling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// The time axis had an even node count; its last panel used the trapezoid rule.
    pub closure_t: bool,
    /// Same for the space axis.
    pub closure_y: bool,
}

fn simpson_1d(n: usize, h: f64) -> Result<(Vec<f64>, bool)> {
    if n < 3 {
        return Err(Error::InvalidGrid(format!("Simpson's rule needs at least 3 nodes, got {n}")));
    }
    let odd = n % 2 == 1;
    let m = if odd { n } else { n - 1 };
    let mut w = vec![0.0; n];
    for (k, wk) in w.iter_mut().enumerate().take(m) {
        *wk = if k == 0 || k == m - 1 {
            h / 3.0
        } else if k % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    if !odd {
        w[n - 2] += 0.5 * h;
        w[n - 1] += 0.5 * h;
    }
    Ok((w, !odd))
}

/// Tensor-product composite Simpson rule over the surface's grid.
pub fn simpson_2d(u: &Surface) -> Result<Quadrature> {
    let g = u.grid();
    let (wt, closure_t) = simpson_1d(g.nt, g.dt)?;
    let (wy, closure_y) = simpson_1d(g.ny, g.dy)?;
    let mut value = 0.0;
    for (i, a) in wt.iter().enumerate() {
        let row = u.row(i);
        let s: f64 = row.iter().zip(&wy).map(|(v, b)| v * b).sum();
        value += a * s;
    }
    Ok(Quadrature {
        value,
        closure_t,
        closure_y,
    })
}

/// Mesh on which the noise-level integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseGrid {
    /// The data mesh: the clean reference is interpolated onto it. This is
    /// the mesh on which residuals are measured.
    #[default]
    Data,
    /// The reference mesh: the noisy data is prolonged onto it.
    Reference,
}

impl NoiseGrid {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseGrid::Data => "data",
            NoiseGrid::Reference => "reference",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "data" => Ok(NoiseGrid::Data),
            "reference" => Ok(NoiseGrid::Reference),
            _ => Err(Error::Parse(format!("unknown noise grid {s:?} (expected data|reference)"))),
        }
    }
}

/// `‖ũ − u^δ‖_{L²}` by Simpson's rule, both fields linearly interpolated to
/// the mesh selected by `on`.
pub fn estimate_noise_level(u_clean: &Surface, u_delta: &Surface, on: NoiseGrid) -> Result<f64> {
    let target = match on {
        NoiseGrid::Data => *u_delta.grid(),
        NoiseGrid::Reference => *u_clean.grid(),
    };
    let a = interpolate(u_clean, &target)?;
    let b = interpolate(u_delta, &target)?;
    let sq: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).collect();
    let q = simpson_2d(&Surface::new(target, sq)?)?;
    Ok(q.value.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    /// Noisy data on the data mesh.
    pub u_delta: Surface,
    /// Noise-free solution on the reference mesh.
    pub u_clean_fine: Surface,
    pub delta: f64,
    pub seed: u64,
    pub noise_std: f64,
    pub noise_grid: NoiseGrid,
}

impl NoisyDataset {
    pub fn fine_grid(&self) -> &Grid {
        self.u_clean_fine.grid()
    }

    pub fn coarse_grid(&self) -> &Grid {
        self.u_delta.grid()
    }

    /// Store as `u_delta.txt`, `u_clean.txt` and `meta.txt` inside `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.u_delta.write(dir.join("u_delta.txt"))?;
        self.u_clean_fine.write(dir.join("u_clean.txt"))?;
        let mut meta = String::new();
        let _ = writeln!(meta, "seed={}", self.seed);
        let _ = writeln!(meta, "noise_std={}", self.noise_std);
        let _ = writeln!(meta, "delta={}", self.delta);
        let _ = writeln!(meta, "noise_grid={}", self.noise_grid.label());
        let _ = writeln!(meta, "fine_grid={}", grid_spec(self.fine_grid()));
        let _ = writeln!(meta, "coarse_grid={}", grid_spec(self.coarse_grid()));
        std::fs::write(dir.join("meta.txt"), meta)?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let u_delta = Surface::read(dir.join("u_delta.txt"))?;
        let u_clean_fine = Surface::read(dir.join("u_clean.txt"))?;
        let text = std::fs::read_to_string(dir.join("meta.txt"))?;
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("meta line without '=': {line:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Parse(format!("meta.txt lacks {k}")));
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Parse(format!("meta.txt: bad value for {k}")))
        };
        Ok(NoisyDataset {
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::Parse("meta.txt: bad seed".into()))?,
            noise_std: num("noise_std")?,
            delta: num("delta")?,
            noise_grid: NoiseGrid::parse(get("noise_grid")?)?,
            u_delta,
            u_clean_fine,
        })
    }
}

fn grid_spec(g: &Grid) -> String {
    format!("{} {} {} {} {} {}", g.nt, g.ny, g.t_min, g.t_max, g.y_min, g.y_max)
}

/// Solve on `fine` with `a_true`, add i.i.d. `N(0, noise_std²)` noise at
/// every fine node, interpolate to `coarse`, and estimate `δ`.
pub fn generate_data(
    a_true: &Surface,
    params: &PdeParams,
    fine: &Grid,
    coarse: &Grid,
    noise_std: f64,
    seed: u64,
    noise_grid: NoiseGrid,
) -> Result<NoisyDataset> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let clean = solve_forward(a_true, params, fine)?;
    let mut noisy = clean.clone();
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in noisy.values_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let u_delta = interpolate(&noisy, coarse)?;
    let delta = estimate_noise_level(&clean, &u_delta, noise_grid)?;
    Ok(NoisyDataset {
        u_delta,
        u_clean_fine: clean,
        delta,
        seed,
        noise_std,
        noise_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::true_coefficient_surface;

    #[test]
    fn simpson_area_and_symmetry() {
        let g = Grid::with_nodes(5, 11).unwrap();
        assert!((simpson_2d(&Surface::constant(g, 1.0)).unwrap().value - 10.0).abs() < 1e-12);
        assert!(simpson_2d(&Surface::from_fn(g, |_, y| y)).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn simpson_exact_for_cubics() {
        let g = Grid::with_nodes(101, 101).unwrap();
        let q = simpson_2d(&Surface::from_fn(g, |_, y| y * y)).unwrap();
        assert!((q.value - 250.0 / 3.0).abs() < 1e-6);
        let q = simpson_2d(&Surface::from_fn(g, |t, y| t * t * t * y * y * y + 2.0 * t * y * y)).unwrap();
        // ∫₀¹∫₋₅⁵ t³y³ + 2ty² = 0 + 2·(1/2)·(250/3)
        assert!((q.value - 250.0 / 3.0).abs() <= 1e-10 * 250.0 / 3.0);
        assert!(!q.closure_t && !q.closure_y);
    }

    #[test]
    fn simpson_even_counts_use_closure() {
        let g = Grid::with_nodes(4, 6).unwrap();
        let q = simpson_2d(&Surface::constant(g, 2.0)).unwrap();
        assert!(q.closure_t && q.closure_y);
        assert!((q.value - 20.0).abs() < 1e-12);
        assert!(simpson_2d(&Surface::constant(Grid::with_nodes(2, 5).unwrap(), 1.0)).is_err());
    }

    #[test]
    fn constant_offset_noise_level() {
        let g = Grid::from_steps(0.02, 0.1).unwrap();
        let u = Surface::from_fn(g, |t, y| t - 0.1 * y);
        let c = 0.003;
        let v = Surface::from_fn(g, |t, y| t - 0.1 * y + c);
        for on in [NoiseGrid::Data, NoiseGrid::Reference] {
            let d = estimate_noise_level(&u, &v, on).unwrap();
            assert!((d - c * 10f64.sqrt()).abs() < 1e-10);
        }
        assert_eq!(estimate_noise_level(&u, &u, NoiseGrid::Data).unwrap(), 0.0);
    }

    #[test]
    fn noise_free_data_on_nested_grids_has_zero_delta() {
        let fine = Grid::from_steps(0.01, 0.05).unwrap();
        let coarse = Grid::from_steps(0.02, 0.1).unwrap();
        let a = true_coefficient_surface(fine);
        let ds = generate_data(&a, &PdeParams::default(), &fine, &coarse, 0.0, 1, NoiseGrid::Data).unwrap();
        assert!(ds.delta < 1e-12);
        let ds = generate_data(&a, &PdeParams::default(), &fine, &coarse, 0.0, 1, NoiseGrid::Reference).unwrap();
        // pure interpolation error of the smooth-ish solution
        assert!(ds.delta > 0.0 && ds.delta < 1e-2);
    }

    #[test]
    fn seeded_generation_is_reproducible_and_round_trips() {
        let fine = Grid::from_steps(0.01, 0.05).unwrap();
        let coarse = Grid::from_steps(0.02, 0.1).unwrap();
        let a = true_coefficient_surface(fine);
        let p = PdeParams::default();
        let x = generate_data(&a, &p, &fine, &coarse, 0.01, 42, NoiseGrid::Data).unwrap();
        let y = generate_data(&a, &p, &fine, &coarse, 0.01, 42, NoiseGrid::Data).unwrap();
        assert_eq!(x, y);
        assert!(x.delta > 0.0);
        let dir = tempfile::tempdir().unwrap();
        x.write_dir(dir.path()).unwrap();
        assert_eq!(NoisyDataset::read_dir(dir.path()).unwrap(), x);
    }
}
