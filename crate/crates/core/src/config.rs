//! Experiment configuration: flat `key = value` text with `[section]`
//! headers, comma-separated lists and `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::discrepancy::{AlphaSearch, DiscrepancyBand, LevelOrder};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::Bounds;
use crate::optimize::{Minimizer, StopRule, WolfeParams};
use crate::parallel::Execution;
use crate::pde::PdeParams;
use crate::problem::H1Weights;
use crate::synthdata::NoiseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    PdeSweep,
    LinearOracle,
    RateStudy,
    SequentialDemo,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::PdeSweep => "pde-sweep",
            ExperimentKind::LinearOracle => "linear-oracle",
            ExperimentKind::RateStudy => "rate-study",
            ExperimentKind::SequentialDemo => "sequential-demo",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pde-sweep" => Ok(ExperimentKind::PdeSweep),
            "linear-oracle" => Ok(ExperimentKind::LinearOracle),
            "rate-study" => Ok(ExperimentKind::RateStudy),
            "sequential-demo" => Ok(ExperimentKind::SequentialDemo),
            _ => Err("expected pde-sweep, linear-oracle, rate-study or sequential-demo".into()),
        }
    }
}

/// How the `dtau` and `dy` lists combine into meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    Zipped,
    Crossed,
}

impl FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zipped" => Ok(Pairing::Zipped),
            "crossed" => Ok(Pairing::Crossed),
            _ => Err("expected zipped or crossed".into()),
        }
    }
}

impl Pairing {
    pub fn label(&self) -> &'static str {
        match self {
            Pairing::Zipped => "zipped",
            Pairing::Crossed => "crossed",
        }
    }
}

/// An entry of the `α` grid, possibly depending on the noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    Value(f64),
    SqrtDelta,
    Delta,
    DeltaSquared,
}

impl AlphaSpec {
    pub fn resolve(&self, delta: f64) -> f64 {
        match self {
            AlphaSpec::Value(v) => *v,
            AlphaSpec::SqrtDelta => delta.sqrt(),
            AlphaSpec::Delta => delta,
            AlphaSpec::DeltaSquared => delta * delta,
        }
    }

    fn render(&self) -> String {
        match self {
            AlphaSpec::Value(v) => format!("{v}"),
            AlphaSpec::SqrtDelta => "sqrt(delta)".into(),
            AlphaSpec::Delta => "delta".into(),
            AlphaSpec::DeltaSquared => "delta^2".into(),
        }
    }
}

impl FromStr for AlphaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sqrt(delta)" => Ok(AlphaSpec::SqrtDelta),
            "delta" => Ok(AlphaSpec::Delta),
            "delta^2" => Ok(AlphaSpec::DeltaSquared),
            _ => match s.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(AlphaSpec::Value(v)),
                _ => Err("expected a number >= 0, delta, sqrt(delta) or delta^2".into()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Testbed {
    Identity,
    Random,
}

impl FromStr for Testbed {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(Testbed::Identity),
            "random" => Ok(Testbed::Random),
            _ => Err("expected identity or random".into()),
        }
    }
}

impl Testbed {
    pub fn label(&self) -> &'static str {
        match self {
            Testbed::Identity => "identity",
            Testbed::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandConfig {
    pub tau: f64,
    pub lambda: f64,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

impl BandConfig {
    pub fn band(&self) -> Result<DiscrepancyBand> {
        let b = DiscrepancyBand::new(self.tau, self.lambda)?;
        b.with_discrete(self.tau1.unwrap_or(b.tau1), self.tau2.unwrap_or(b.tau2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub rel_residual_tol: f64,
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    /// Stop each minimization once its residual is in the band.
    pub stop_in_band: bool,
}

impl OptimizerConfig {
    pub fn minimizer(&self) -> Result<Minimizer> {
        Minimizer::new(
            WolfeParams {
                c1: self.c1,
                c2: self.c2,
                ..WolfeParams::default()
            },
            StopRule {
                max_iters: self.max_iters,
                rel_residual_tol: self.rel_residual_tol,
                grad_tol: self.grad_tol,
                ..StopRule::default()
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig {
    pub b: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub beta1: f64,
    pub beta2_per_dy: f64,
    pub beta3_per_dt: f64,
    /// `(Δτ, Δy)` of the reference mesh used for data generation.
    pub fine: (f64, f64),
    /// `(Δτ, Δy)` of the data and solver mesh.
    pub solver: (f64, f64),
    pub dtau: Vec<f64>,
    pub dy: Vec<f64>,
    pub pairing: Pairing,
    pub noise_std: f64,
    pub noise_grid: NoiseGrid,
    pub alphas: Vec<AlphaSpec>,
}

impl PdeConfig {
    pub fn params(&self) -> Result<PdeParams> {
        let p = PdeParams {
            b: self.b,
            a0: self.a0,
            bounds: Bounds::new(self.a1, self.a2)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn weights(&self) -> H1Weights {
        H1Weights {
            beta1: self.beta1,
            beta2_per_dy: self.beta2_per_dy,
            beta3_per_dt: self.beta3_per_dt,
        }
    }

    pub fn fine_grid(&self) -> Result<Grid> {
        Grid::from_steps(self.fine.0, self.fine.1)
    }

    pub fn solver_grid(&self) -> Result<Grid> {
        Grid::from_steps(self.solver.0, self.solver.1)
    }

    /// Coefficient meshes as `(Δτ, Δy)` pairs, in sweep order.
    pub fn meshes(&self) -> Vec<(f64, f64)> {
        match self.pairing {
            Pairing::Zipped => self.dtau.iter().copied().zip(self.dy.iter().copied()).collect(),
            Pairing::Crossed => self
                .dtau
                .iter()
                .flat_map(|t| self.dy.iter().map(move |y| (*t, *y)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConfig {
    pub n: usize,
    /// Coordinate ladder dimensions; empty means the single level `[n]`.
    pub levels: Vec<usize>,
    pub instances: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub max_condition: f64,
    pub deltas: Vec<f64>,
    pub decay: f64,
    /// Oracle runs stop on the projected gradient only.
    pub oracle_grad_tol: f64,
    pub oracle_max_iters: usize,
}

impl LinearConfig {
    pub fn ladder_dims(&self) -> Vec<usize> {
        if self.levels.is_empty() {
            vec![self.n]
        } else {
            self.levels.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub tol: f64,
    pub max_expansions: usize,
    pub order: LevelOrder,
}

impl SearchConfig {
    pub fn alpha_search(&self) -> AlphaSearch {
        AlphaSearch {
            bracket: (self.alpha_min, self.alpha_max),
            tol: self.tol,
            max_expansions: self.max_expansions,
            p: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialConfig {
    pub testbed: Testbed,
    pub n: usize,
    pub delta: f64,
    pub tau_tilde: f64,
    pub alpha0: f64,
    pub q: f64,
    pub kmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// 0: every available core; 1: sequential.
    pub workers: usize,
    pub band: BandConfig,
    pub optimizer: OptimizerConfig,
    pub search: SearchConfig,
    pub pde: PdeConfig,
    pub linear: LinearConfig,
    pub sequential: SequentialConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::PdeSweep,
            seed: 1,
            workers: 0,
            band: BandConfig {
                tau: 1.025,
                lambda: 1.125,
                tau1: None,
                tau2: None,
            },
            optimizer: OptimizerConfig {
                max_iters: 500,
                rel_residual_tol: 1e-4,
                grad_tol: 1e-10,
                c1: 1e-8,
                c2: 0.95,
                stop_in_band: true,
            },
            search: SearchConfig {
                alpha_min: 1e-10,
                alpha_max: 1.0,
                tol: 1e-3,
                max_expansions: 12,
                order: LevelOrder::CoarseToFine,
            },
            pde: PdeConfig {
                b: 0.03,
                a0: 0.08,
                a1: 0.005,
                a2: 1.0,
                beta1: 0.5,
                beta2_per_dy: 0.25,
                beta3_per_dt: 0.25,
                fine: (0.0025, 0.01),
                solver: (0.02, 0.1),
                dtau: vec![0.1, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0075, 0.005, 0.0025],
                dy: vec![0.25, 0.22, 0.2, 0.17, 0.15, 0.13, 0.11, 0.1, 0.05, 0.04, 0.02, 0.01],
                pairing: Pairing::Zipped,
                noise_std: 0.01,
                noise_grid: NoiseGrid::Data,
                alphas: vec![
                    AlphaSpec::Value(0.25),
                    AlphaSpec::Value(0.1),
                    AlphaSpec::SqrtDelta,
                    AlphaSpec::Value(0.01),
                    AlphaSpec::Value(0.006),
                    AlphaSpec::Delta,
                    AlphaSpec::Value(0.001),
                    AlphaSpec::Value(5e-4),
                    AlphaSpec::Value(1e-4),
                    AlphaSpec::Value(5e-5),
                    AlphaSpec::DeltaSquared,
                    AlphaSpec::Value(0.0),
                ],
            },
            linear: LinearConfig {
                n: 8,
                levels: Vec::new(),
                instances: 100,
                alpha_min: 1e-4,
                alpha_max: 1e2,
                max_condition: 100.0,
                deltas: vec![1e-1, 1e-2, 1e-3, 1e-4],
                decay: 1.0,
                oracle_grad_tol: 1e-14,
                oracle_max_iters: 2_000_000,
            },
            sequential: SequentialConfig {
                testbed: Testbed::Identity,
                n: 4,
                delta: 0.1,
                tau_tilde: 1.2,
                alpha0: 1.0,
                q: 0.5,
                kmax: 50,
            },
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

/// Raw `section.key → value` map that remembers line numbers and which keys
/// were consumed.
struct Raw {
    entries: BTreeMap<String, Entry>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(name) = s.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    key: s.to_string(),
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| Error::Config {
                line,
                key: s.to_string(),
                message: "expected key = value".into(),
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            if let Some(prev) = entries.get(&full) {
                let prev: &Entry = prev;
                return Err(Error::Config {
                    line,
                    key: full,
                    message: format!("duplicate key (first set on line {})", prev.line),
                });
            }
            entries.insert(
                full,
                Entry {
                    line,
                    value: value.trim().to_string(),
                },
            );
        }
        Ok(Raw { entries })
    }

    fn take<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(e) = self.entries.remove(key) {
            *target = e.value.parse().map_err(|err: T::Err| Error::Config {
                line: e.line,
                key: key.to_string(),
                message: format!("cannot parse {:?}: {err}", e.value),
            })?;
        }
        Ok(())
    }

    fn take_opt(&mut self, key: &str, target: &mut Option<f64>) -> Result<()> {
        let mut v = f64::NAN;
        let present = self.entries.contains_key(key);
        self.take(key, &mut v)?;
        if present {
            *target = Some(v);
        }
        Ok(())
    }

    fn take_list<T: FromStr>(&mut self, key: &str, target: &mut Vec<T>) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(e) = self.entries.remove(key) {
            let mut out = Vec::new();
            for tok in e.value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                out.push(tok.parse().map_err(|err: T::Err| Error::Config {
                    line: e.line,
                    key: key.to_string(),
                    message: format!("cannot parse list item {tok:?}: {err}"),
                })?);
            }
            *target = out;
        }
        Ok(())
    }

    fn take_pair(&mut self, key: &str, target: &mut (f64, f64)) -> Result<()> {
        let line = self.entries.get(key).map(|e| e.line);
        let mut v: Vec<f64> = Vec::new();
        self.take_list(key, &mut v)?;
        if let Some(line) = line {
            if v.len() != 2 {
                return Err(Error::Config {
                    line,
                    key: key.to_string(),
                    message: "expected two values: dtau, dy".into(),
                });
            }
            *target = (v[0], v[1]);
        }
        Ok(())
    }
}

/// Newtype so `FromStr` can be used for the level order.
struct Order(LevelOrder);

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LevelOrder::parse(s).map(Order).map_err(|e| e.to_string())
    }
}

struct Noise(NoiseGrid);

impl FromStr for Noise {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        NoiseGrid::parse(s).map(Noise).map_err(|e| e.to_string())
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parse over the defaults. Unknown and duplicate keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Raw::parse(text)?;
        let mut c = ExperimentConfig::default();
        raw.take("kind", &mut c.kind)?;
        raw.take("seed", &mut c.seed)?;
        raw.take("workers", &mut c.workers)?;

        raw.take("band.tau", &mut c.band.tau)?;
        raw.take("band.lambda", &mut c.band.lambda)?;
        raw.take_opt("band.tau1", &mut c.band.tau1)?;
        raw.take_opt("band.tau2", &mut c.band.tau2)?;

        let o = &mut c.optimizer;
        raw.take("optimizer.max_iters", &mut o.max_iters)?;
        raw.take("optimizer.rel_residual_tol", &mut o.rel_residual_tol)?;
        raw.take("optimizer.grad_tol", &mut o.grad_tol)?;
        raw.take("optimizer.c1", &mut o.c1)?;
        raw.take("optimizer.c2", &mut o.c2)?;
        raw.take("optimizer.stop_in_band", &mut o.stop_in_band)?;

        let s = &mut c.search;
        raw.take("search.alpha_min", &mut s.alpha_min)?;
        raw.take("search.alpha_max", &mut s.alpha_max)?;
        raw.take("search.tol", &mut s.tol)?;
        raw.take("search.max_expansions", &mut s.max_expansions)?;
        let mut order = Order(s.order);
        raw.take("search.order", &mut order)?;
        s.order = order.0;

        let p = &mut c.pde;
        raw.take("pde.b", &mut p.b)?;
        raw.take("pde.a0", &mut p.a0)?;
        raw.take("pde.a1", &mut p.a1)?;
        raw.take("pde.a2", &mut p.a2)?;
        raw.take("pde.beta1", &mut p.beta1)?;
        raw.take("pde.beta2_per_dy", &mut p.beta2_per_dy)?;
        raw.take("pde.beta3_per_dt", &mut p.beta3_per_dt)?;
        raw.take_pair("pde.fine", &mut p.fine)?;
        raw.take_pair("pde.solver", &mut p.solver)?;
        raw.take_list("pde.dtau", &mut p.dtau)?;
        raw.take_list("pde.dy", &mut p.dy)?;
        raw.take("pde.pairing", &mut p.pairing)?;
        raw.take("pde.noise_std", &mut p.noise_std)?;
        let mut ng = Noise(p.noise_grid);
        raw.take("pde.noise_grid", &mut ng)?;
        p.noise_grid = ng.0;
        raw.take_list("pde.alphas", &mut p.alphas)?;

        let l = &mut c.linear;
        raw.take("linear.n", &mut l.n)?;
        raw.take_list("linear.levels", &mut l.levels)?;
        raw.take("linear.instances", &mut l.instances)?;
        raw.take("linear.alpha_min", &mut l.alpha_min)?;
        raw.take("linear.alpha_max", &mut l.alpha_max)?;
        raw.take("linear.max_condition", &mut l.max_condition)?;
        raw.take_list("linear.deltas", &mut l.deltas)?;
        raw.take("linear.decay", &mut l.decay)?;
        raw.take("linear.oracle_grad_tol", &mut l.oracle_grad_tol)?;
        raw.take("linear.oracle_max_iters", &mut l.oracle_max_iters)?;

        let q = &mut c.sequential;
        raw.take("sequential.testbed", &mut q.testbed)?;
        raw.take("sequential.n", &mut q.n)?;
        raw.take("sequential.delta", &mut q.delta)?;
        raw.take("sequential.tau_tilde", &mut q.tau_tilde)?;
        raw.take("sequential.alpha0", &mut q.alpha0)?;
        raw.take("sequential.q", &mut q.q)?;
        raw.take("sequential.kmax", &mut q.kmax)?;

        if let Some((key, e)) = raw.entries.iter().min_by_key(|(_, e)| e.line) {
            return Err(Error::Config {
                line: e.line,
                key: key.clone(),
                message: "unknown key".into(),
            });
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks that do not need data (grids, band, lists).
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Error::Config {
            line: 0,
            key: key.to_string(),
            message,
        };
        self.band.band()?;
        self.optimizer.minimizer()?;
        self.search.alpha_search().validate()?;
        self.pde.params()?;
        let p = &self.pde;
        if p.dtau.is_empty() || p.dy.is_empty() {
            return Err(bad("pde.dtau", "mesh lists must be non-empty".into()));
        }
        if p.pairing == Pairing::Zipped && p.dtau.len() != p.dy.len() {
            return Err(bad(
                "pde.dy",
                format!("zipped pairing needs equal lengths, got {} and {}", p.dtau.len(), p.dy.len()),
            ));
        }
        if p.alphas.is_empty() {
            return Err(bad("pde.alphas", "the alpha grid must be non-empty".into()));
        }
        if !(p.noise_std >= 0.0) {
            return Err(bad("pde.noise_std", "must be >= 0".into()));
        }
        p.fine_grid()?;
        p.solver_grid()?;
        for (t, y) in p.meshes() {
            Grid::from_steps(t, y)?;
        }
        let l = &self.linear;
        if l.n == 0 || l.ladder_dims().iter().any(|&m| m == 0 || m > l.n) {
            return Err(bad("linear.levels", format!("level dimensions must lie in 1..={}", l.n)));
        }
        if !(0.0 < l.alpha_min && l.alpha_min <= l.alpha_max) {
            return Err(bad("linear.alpha_min", "need 0 < alpha_min <= alpha_max".into()));
        }
        if l.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(bad("linear.deltas", "noise levels must be > 0".into()));
        }
        let q = &self.sequential;
        if q.n == 0 || !(q.delta > 0.0) {
            return Err(bad("sequential.n", "need n > 0 and delta > 0".into()));
        }
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        match self.workers {
            0 => Execution::default(),
            n => Execution::with_workers(n),
        }
    }

    /// The effective configuration in the input format, every key resolved.
    pub fn to_text(&self) -> String {
        fn list<T: std::fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "kind = {}", self.kind.label());
        let _ = writeln!(w, "seed = {}", self.seed);
        let _ = writeln!(w, "workers = {}", self.workers);
        let band = self.band.band().ok();
        let _ = writeln!(w, "\n[band]");
        let _ = writeln!(w, "tau = {}", self.band.tau);
        let _ = writeln!(w, "lambda = {}", self.band.lambda);
        if let Some(b) = band {
            let _ = writeln!(w, "tau1 = {}", b.tau1);
            let _ = writeln!(w, "tau2 = {}", b.tau2);
        }
        let o = &self.optimizer;
        let _ = writeln!(w, "\n[optimizer]");
        let _ = writeln!(w, "max_iters = {}", o.max_iters);
        let _ = writeln!(w, "rel_residual_tol = {}", o.rel_residual_tol);
        let _ = writeln!(w, "grad_tol = {}", o.grad_tol);
        let _ = writeln!(w, "c1 = {}", o.c1);
        let _ = writeln!(w, "c2 = {}", o.c2);
        let _ = writeln!(w, "stop_in_band = {}", o.stop_in_band);
        let sc = &self.search;
        let _ = writeln!(w, "\n[search]");
        let _ = writeln!(w, "alpha_min = {}", sc.alpha_min);
        let _ = writeln!(w, "alpha_max = {}", sc.alpha_max);
        let _ = writeln!(w, "tol = {}", sc.tol);
        let _ = writeln!(w, "max_expansions = {}", sc.max_expansions);
        let _ = writeln!(w, "order = {}", sc.order.label());
        let p = &self.pde;
        let _ = writeln!(w, "\n[pde]");
        let _ = writeln!(w, "b = {}", p.b);
        let _ = writeln!(w, "a0 = {}", p.a0);
        let _ = writeln!(w, "a1 = {}", p.a1);
        let _ = writeln!(w, "a2 = {}", p.a2);
        let _ = writeln!(w, "beta1 = {}", p.beta1);
        let _ = writeln!(w, "beta2_per_dy = {}", p.beta2_per_dy);
        let _ = writeln!(w, "beta3_per_dt = {}", p.beta3_per_dt);
        let _ = writeln!(w, "fine = {}, {}", p.fine.0, p.fine.1);
        let _ = writeln!(w, "solver = {}, {}", p.solver.0, p.solver.1);
        let _ = writeln!(w, "dtau = {}", list(&p.dtau));
        let _ = writeln!(w, "dy = {}", list(&p.dy));
        let _ = writeln!(w, "pairing = {}", p.pairing.label());
        let _ = writeln!(w, "noise_std = {}", p.noise_std);
        let _ = writeln!(w, "noise_grid = {}", p.noise_grid.label());
        let alphas: Vec<String> = p.alphas.iter().map(AlphaSpec::render).collect();
        let _ = writeln!(w, "alphas = {}", alphas.join(", "));
        let l = &self.linear;
        let _ = writeln!(w, "\n[linear]");
        let _ = writeln!(w, "n = {}", l.n);
        let _ = writeln!(w, "levels = {}", list(&l.ladder_dims()));
        let _ = writeln!(w, "instances = {}", l.instances);
        let _ = writeln!(w, "alpha_min = {}", l.alpha_min);
        let _ = writeln!(w, "alpha_max = {}", l.alpha_max);
        let _ = writeln!(w, "max_condition = {}", l.max_condition);
        let _ = writeln!(w, "deltas = {}", list(&l.deltas));
        let _ = writeln!(w, "decay = {}", l.decay);
        let _ = writeln!(w, "oracle_grad_tol = {}", l.oracle_grad_tol);
        let _ = writeln!(w, "oracle_max_iters = {}", l.oracle_max_iters);
        let q = &self.sequential;
        let _ = writeln!(w, "\n[sequential]");
        let _ = writeln!(w, "testbed = {}", q.testbed.label());
        let _ = writeln!(w, "n = {}", q.n);
        let _ = writeln!(w, "delta = {}", q.delta);
        let _ = writeln!(w, "tau_tilde = {}", q.tau_tilde);
        let _ = writeln!(w, "alpha0 = {}", q.alpha0);
        let _ = writeln!(w, "q = {}", q.q);
        let _ = writeln!(w, "kmax = {}", q.kmax);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(c.pde.meshes().len(), 12);
        assert_eq!(c.pde.alphas.len(), 12);
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        // tau1/tau2 come back resolved
        assert_eq!(back.band.band().unwrap(), c.band.band().unwrap());
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn overrides_and_lists() {
        let c = ExperimentConfig::parse(
            "kind = rate-study # trailing comment\nseed = 9\n[pde]\ndtau = 0.1, 0.05\ndy = 0.5\npairing = crossed\nalphas = 0.1, delta, sqrt(delta), delta^2, 0\n",
        )
        .unwrap();
        assert_eq!(c.kind, ExperimentKind::RateStudy);
        assert_eq!(c.seed, 9);
        assert_eq!(c.pde.meshes(), vec![(0.1, 0.5), (0.05, 0.5)]);
        let a: Vec<f64> = c.pde.alphas.iter().map(|s| s.resolve(0.04)).collect();
        assert_eq!(a, vec![0.1, 0.04, 0.2, 0.0016, 0.0]);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        match ExperimentConfig::parse("seed = 1\n\n[band]\ntua = 1.1\n") {
            Err(Error::Config { line, key, .. }) => assert_eq!((line, key.as_str()), (4, "band.tua")),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("seed = x\n") {
            Err(Error::Config { line: 1, key, .. }) => assert_eq!(key, "seed"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("seed = 1\nseed = 2\n").is_err());
        assert!(ExperimentConfig::parse("[pde]\ndtau = 0.1\n").is_err());
        assert!(ExperimentConfig::parse("[band]\ntau = 1.2\nlambda = 1.1\n").is_err());
    }
}
