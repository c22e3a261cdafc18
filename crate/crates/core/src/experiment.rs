//! Experiment runners behind the command-line tool. Every runner writes CSV
//! files plus `summary.txt` (the effective configuration followed by
//! commented results) into an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, Testbed};
use crate::diagnostics::{l2_error_interpolated, rate_table, RateTable};
use crate::discrepancy::{
    check_band, joint_discrepancy_search, sequential_discrepancy, GammaSupply, JointSearch,
};
use crate::error::{Error, Result};
use crate::grid::{Element, Grid, Surface};
use crate::linear_testbed::{
    closed_form_minimizer, condition_number, make_ladder_model_with, ClosedFormSolver, TestbedKind,
};
use crate::model::residual_norm;
use crate::optimize::{Minimizer, Objective, StopRule, TikhonovConfig};
use crate::pde::{true_coefficient_surface, PdeForward, PdeModel};
use crate::penalty::{Measure, Penalty, PenaltyKind};
use crate::problem::CoordinateProblem;
use crate::synthdata::generate_data;

pub const RESIDUAL_HEADER: &str = "dtau,dy,n_points,alpha,residual,in_band";
pub const ERROR_HEADER: &str = "dtau,dy,n_points,alpha,l2_error,in_band";
pub const CELLS_HEADER: &str = "dtau,dy,n_points,alpha,residual,l2_error,in_band,iterations,stop,error";

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub files: Vec<PathBuf>,
    /// Human-readable result lines (also appended to `summary.txt`).
    pub lines: Vec<String>,
    /// A selection rule found nothing acceptable.
    pub exhausted: bool,
}

/// Run the experiment selected by `cfg.kind` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut report = match cfg.kind {
        ExperimentKind::PdeSweep => run_pde_sweep(cfg, out)?,
        ExperimentKind::LinearOracle => run_linear_oracle(cfg, out)?,
        ExperimentKind::RateStudy => run_rate_study(cfg, out)?,
        ExperimentKind::SequentialDemo => run_sequential_demo(cfg, out)?,
    };
    let mut summary = cfg.to_text();
    summary.push_str("\n# results\n");
    for l in &report.lines {
        let _ = writeln!(summary, "# {l}");
    }
    let path = out.join("summary.txt");
    std::fs::write(&path, summary)?;
    report.files.push(path);
    Ok(report)
}

fn write(out: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = out.join(name);
    std::fs::write(&p, text)?;
    files.push(p);
    Ok(())
}

/// One `(mesh, α)` cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub mesh: usize,
    pub dtau: f64,
    pub dy: f64,
    pub n_points: usize,
    pub alpha: f64,
    pub residual: f64,
    pub l2_error: f64,
    pub in_band: bool,
    pub iterations: usize,
    pub stop: String,
    pub error: Option<String>,
    pub x: Option<Surface>,
}

/// Per-mesh selection: the in-band cell of lowest residual, or else the
/// closest to the band (marked out of band).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshRow {
    pub dtau: f64,
    pub dy: f64,
    pub n_points: usize,
    pub cell: Option<usize>,
    pub alpha: f64,
    pub residual: f64,
    pub l2_error: f64,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub delta: f64,
    pub band: (f64, f64),
    pub cells: Vec<SweepCell>,
    pub rows: Vec<MeshRow>,
}

impl SweepResult {
    pub fn residual_csv(&self) -> String {
        let mut s = format!("{RESIDUAL_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.dtau, r.dy, r.n_points, r.alpha, r.residual, r.in_band);
        }
        s
    }

    pub fn error_csv(&self) -> String {
        let mut s = format!("{ERROR_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.dtau, r.dy, r.n_points, r.alpha, r.l2_error, r.in_band);
        }
        s
    }

    pub fn cells_csv(&self) -> String {
        let mut s = format!("{CELLS_HEADER}\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.dtau,
                c.dy,
                c.n_points,
                c.alpha,
                c.residual,
                c.l2_error,
                c.in_band,
                c.iterations,
                c.stop,
                c.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }
}

fn gap(r: f64, (lo, hi): (f64, f64)) -> f64 {
    if r < lo {
        lo - r
    } else if r > hi {
        r - hi
    } else {
        0.0
    }
}

/// Generate data, then minimize on every `(mesh, α)` cell. `α = 0` cells
/// are evaluated at the prior (residual and error only) and never selected.
pub fn pde_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let pc = &cfg.pde;
    let params = pc.params()?;
    let fine = pc.fine_grid()?;
    let solver_grid = pc.solver_grid()?;
    let a_true = true_coefficient_surface(fine);
    let data = generate_data(&a_true, &params, &fine, &solver_grid, pc.noise_std, cfg.seed, pc.noise_grid)?;
    let delta = data.delta;
    let band = cfg.band.band()?;
    let bounds = band.bounds(delta);
    let forward = Arc::new(PdeForward::new(params, solver_grid)?);
    let ydelta = forward.data_from_measurement(&data.u_delta)?;
    let minimizer = cfg.optimizer.minimizer()?;
    let minimizer = if cfg.optimizer.stop_in_band {
        minimizer.with_band(Some(bounds))
    } else {
        minimizer
    };
    let weights = pc.weights();
    let meshes = pc.meshes();
    let alphas: Vec<f64> = pc.alphas.iter().map(|a| a.resolve(delta)).collect();
    let truth = Element::Surface(a_true);

    let n_alpha = alphas.len();
    let cells = cfg.execution().map(meshes.len() * n_alpha, |k| {
        let (mi, ai) = (k / n_alpha, k % n_alpha);
        let (dtau, dy) = meshes[mi];
        let alpha = alphas[ai];
        let mut cell = SweepCell {
            mesh: mi,
            dtau,
            dy,
            n_points: 0,
            alpha,
            residual: f64::NAN,
            l2_error: f64::NAN,
            in_band: false,
            iterations: 0,
            stop: String::new(),
            error: None,
            x: None,
        };
        let run = || -> Result<(Vec<f64>, f64, usize, String, Grid)> {
            let g = Grid::from_steps(dtau, dy)?;
            let model = PdeModel::new(forward.clone(), g)?;
            let penalty = Penalty::new(
                PenaltyKind::WeightedH1 {
                    beta1: weights.beta1,
                    beta2: weights.beta2_per_dy * g.dy,
                    beta3: weights.beta3_per_dt * g.dt,
                },
                vec![params.a0; g.len()],
                Measure::Mesh(g),
            )?;
            if alpha == 0.0 {
                let x = penalty.prior().to_vec();
                let r = residual_norm(&model, &x, &ydelta)?;
                return Ok((x, r, 0, "evaluated".into(), g));
            }
            let obj = Objective::new(&model, &ydelta, &penalty, TikhonovConfig::new(alpha, 2.0)?)?;
            let s = minimizer.minimize(&obj, None, Some(&g.trapezoid_weights()), mi)?;
            Ok((s.x, s.residual, s.iterations, s.stop_reason.label().into(), g))
        };
        match run().and_then(|(x, r, it, stop, g)| {
            let sx = Surface::new(g, x)?;
            let e = l2_error_interpolated(&Element::Surface(sx.clone()), &truth)?;
            Ok((sx, r, it, stop, e))
        }) {
            Ok((sx, r, it, stop, e)) => {
                cell.n_points = sx.grid().len();
                cell.residual = r;
                cell.l2_error = e;
                cell.in_band = alpha > 0.0 && check_band(r, delta, &band);
                cell.iterations = it;
                cell.stop = stop;
                cell.x = Some(sx);
            }
            Err(e) => {
                cell.n_points = Grid::from_steps(dtau, dy).map(|g| g.len()).unwrap_or(0);
                cell.stop = "error".into();
                cell.error = Some(e.to_string());
            }
        }
        cell
    });

    let rows = meshes
        .iter()
        .enumerate()
        .map(|(mi, &(dtau, dy))| {
            let mine: Vec<usize> = (0..cells.len())
                .filter(|&k| cells[k].mesh == mi && cells[k].alpha > 0.0 && cells[k].residual.is_finite())
                .collect();
            let inband = mine
                .iter()
                .copied()
                .filter(|&k| cells[k].in_band)
                .min_by(|a, b| cells[*a].residual.total_cmp(&cells[*b].residual));
            let pick = inband.or_else(|| {
                mine.iter()
                    .copied()
                    .min_by(|a, b| gap(cells[*a].residual, bounds).total_cmp(&gap(cells[*b].residual, bounds)))
            });
            let n_points = Grid::from_steps(dtau, dy).map(|g| g.len()).unwrap_or(0);
            match pick {
                Some(k) => MeshRow {
                    dtau,
                    dy,
                    n_points,
                    cell: Some(k),
                    alpha: cells[k].alpha,
                    residual: cells[k].residual,
                    l2_error: cells[k].l2_error,
                    in_band: cells[k].in_band,
                },
                None => MeshRow {
                    dtau,
                    dy,
                    n_points,
                    cell: None,
                    alpha: f64::NAN,
                    residual: f64::NAN,
                    l2_error: f64::NAN,
                    in_band: false,
                },
            }
        })
        .collect();
    Ok(SweepResult {
        delta,
        band: bounds,
        cells,
        rows,
    })
}

fn run_pde_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let sweep = pde_sweep(cfg)?;
    let mut files = Vec::new();
    write(out, "residual.csv", &sweep.residual_csv(), &mut files)?;
    write(out, "error.csv", &sweep.error_csv(), &mut files)?;
    write(out, "cells.csv", &sweep.cells_csv(), &mut files)?;
    let mut recon = 0;
    for row in sweep.rows.iter().filter(|r| r.in_band).take(2) {
        recon += 1;
        if let Some(x) = row.cell.and_then(|k| sweep.cells[k].x.as_ref()) {
            write(out, &format!("reconstruction_{recon}.txt"), &x.to_text(), &mut files)?;
        }
    }
    let inband = sweep.rows.iter().filter(|r| r.in_band).count();
    let best = sweep
        .rows
        .iter()
        .filter(|r| r.l2_error.is_finite())
        .min_by(|a, b| a.l2_error.total_cmp(&b.l2_error));
    let mut lines = vec![
        format!("delta = {}", sweep.delta),
        format!("band = [{}, {}]", sweep.band.0, sweep.band.1),
        format!("meshes in band = {inband} of {}", sweep.rows.len()),
    ];
    if let Some(b) = best {
        lines.push(format!(
            "minimal error mesh = dtau {} dy {} (alpha {}, l2 error {}, in band {})",
            b.dtau, b.dy, b.alpha, b.l2_error, b.in_band
        ));
    }
    let failed = sweep.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        lines.push(format!("cells rejected by the solver = {failed}"));
    }
    Ok(RunReport {
        kind: ExperimentKind::PdeSweep,
        files,
        lines,
        exhausted: inband == 0,
    })
}

/// One comparison of gradient descent against the normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub instance: usize,
    pub n: usize,
    pub condition: f64,
    pub alpha: f64,
    pub rel_error: f64,
    pub iterations: usize,
    pub stop: &'static str,
}

/// `instances` random problems with `n ≤ linear.n`, `cond(A) ≤ max_condition`
/// and `α` log-uniform in `[alpha_min, alpha_max]`.
pub fn linear_oracle(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    let lc = &cfg.linear;
    let base = cfg.optimizer.minimizer()?;
    let minimizer = Minimizer::new(
        base.wolfe,
        StopRule {
            band: None,
            max_iters: lc.oracle_max_iters,
            rel_residual_tol: f64::MIN_POSITIVE,
            grad_tol: lc.oracle_grad_tol,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jobs: Vec<(usize, u64, f64, f64)> = (0..lc.instances)
        .map(|_| {
            let n = rng.random_range(1..=lc.n);
            let seed = rng.random::<u64>();
            let alpha = lc.alpha_min * (lc.alpha_max / lc.alpha_min).powf(rng.random::<f64>());
            let delta = 10f64.powf(rng.random_range(-3.0..-1.0));
            (n, seed, alpha, delta)
        })
        .collect();
    cfg.execution()
        .map(jobs.len(), |i| -> Result<OracleRow> {
            let (n, seed, alpha, delta) = jobs[i];
            let (lm, _) = make_ladder_model_with(
                n,
                &[n],
                seed,
                TestbedKind::Random {
                    max_condition: lc.max_condition,
                },
                None,
            )?;
            let yd = lm.noisy_data(delta, seed ^ 0x5eed);
            let x0 = vec![0.0; n];
            let exact = closed_form_minimizer(lm.matrix(), &yd, alpha, &x0)?;
            let penalty = Penalty::quadratic(x0);
            let obj = Objective::new(&lm.model, &yd, &penalty, TikhonovConfig::new(alpha, 2.0)?)?;
            let s = minimizer.minimize(&obj, None, None, 0)?;
            let num: f64 = s.x.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(OracleRow {
                instance: i,
                n,
                condition: condition_number(lm.matrix()),
                alpha,
                rel_error: if den > 0.0 { num / den } else { num },
                iterations: s.iterations,
                stop: s.stop_reason.label(),
            })
        })
        .into_iter()
        .collect()
}

fn run_linear_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let rows = linear_oracle(cfg)?;
    let mut s = String::from("instance,n,condition,alpha,rel_error,iterations,stop\n");
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.instance, r.n, r.condition, r.alpha, r.rel_error, r.iterations, r.stop
        );
    }
    let mut files = Vec::new();
    write(out, "oracle.csv", &s, &mut files)?;
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(RunReport {
        kind: ExperimentKind::LinearOracle,
        files,
        lines: vec![
            format!("instances = {}", rows.len()),
            format!("max relative error = {worst:e}"),
        ],
        exhausted: false,
    })
}

/// Symmetric positive definite instance with `x† = Aω`, one joint search
/// per noise level. Noise levels whose search fails are skipped.
pub fn rate_study(cfg: &ExperimentConfig) -> Result<(Option<RateTable>, Vec<String>)> {
    let lc = &cfg.linear;
    let dims = lc.ladder_dims();
    let (lm, ladder) = make_ladder_model_with(
        lc.n,
        &dims,
        cfg.seed,
        TestbedKind::SymmetricSource { decay: lc.decay },
        None,
    )?;
    let band = cfg.band.band()?;
    let solver = ClosedFormSolver::new(lm.matrix().clone());
    let x_true = Element::Vector(lm.x_true.clone());
    let gammas = ladder.gammas(&lm.model, &x_true)?;
    let settings = JointSearch {
        alpha: cfg.search.alpha_search(),
        order: cfg.search.order,
        execution: cfg.execution(),
    };
    let mut runs = Vec::new();
    let mut notes = Vec::new();
    for (k, &delta) in lc.deltas.iter().enumerate() {
        let yd = lm.noisy_data(delta, cfg.seed.wrapping_add(1 + k as u64));
        let problem = CoordinateProblem::new(lm.model.clone(), yd, ladder.clone(), vec![0.0; lc.n])?;
        match joint_discrepancy_search(&problem, &solver, &band, delta, &GammaSupply::Exact(gammas.clone()), &settings)
        {
            Ok(o) if o.in_band() => runs.push((delta, o.result)),
            Ok(o) => notes.push(format!(
                "delta {delta}: search exhausted ({}), closest residual {}",
                o.result.status.label(),
                o.result.residual()
            )),
            Err(e) => notes.push(format!("delta {delta}: {e}")),
        }
    }
    let penalty = Penalty::quadratic(vec![0.0; lc.n]);
    let table = match rate_table(&runs, &penalty, &x_true, &ladder, 2.0) {
        Ok(t) => Some(t),
        Err(Error::TooFewRows(n)) => {
            notes.push(format!("only {n} noise levels succeeded; no slopes fitted"));
            None
        }
        Err(e) => return Err(e),
    };
    Ok((table, notes))
}

fn run_rate_study(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let (table, mut lines) = rate_study(cfg)?;
    let mut files = Vec::new();
    let exhausted = table.is_none();
    match &table {
        Some(t) => {
            write(out, "rates.csv", &t.to_csv(), &mut files)?;
            let sl = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x}"));
            let s = &t.slopes;
            let text = format!(
                "column,slope\nresidual,{}\nbregman,{}\nl2_error,{}\nalpha,{}\ndelta_p_over_alpha,{}\n",
                sl(s.residual),
                sl(s.bregman),
                sl(s.l2_error),
                sl(s.alpha),
                sl(s.delta_p_over_alpha)
            );
            write(out, "slopes.csv", &text, &mut files)?;
            lines.push(format!("rows = {}", t.rows.len()));
            lines.push(format!("bregman slope = {}", sl(s.bregman)));
            lines.push(format!("residual slope = {}", sl(s.residual)));
        }
        None => {
            write(out, "rates.csv", &format!("{}\n", crate::diagnostics::RATE_HEADER), &mut files)?;
        }
    }
    Ok(RunReport {
        kind: ExperimentKind::RateStudy,
        files,
        lines,
        exhausted,
    })
}

fn run_sequential_demo(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let sc = &cfg.sequential;
    let (model, ydelta) = match sc.testbed {
        Testbed::Identity => {
            let (lm, _) = make_ladder_model_with(sc.n, &[sc.n], cfg.seed, TestbedKind::Identity, None)?;
            let mut y = vec![0.0; sc.n];
            y[0] = 1.0;
            (lm, y)
        }
        Testbed::Random => {
            let (lm, _) = make_ladder_model_with(
                sc.n,
                &[sc.n],
                cfg.seed,
                TestbedKind::Random {
                    max_condition: cfg.linear.max_condition,
                },
                None,
            )?;
            let y = lm.noisy_data(sc.delta, cfg.seed.wrapping_add(1));
            (lm, y)
        }
    };
    let ladder = crate::ladder::DiscretizationLadder::coordinate(sc.n, &[sc.n])?;
    let problem = CoordinateProblem::new(model.model.clone(), ydelta, ladder, vec![0.0; sc.n])?;
    let solver = ClosedFormSolver::new(model.matrix().clone());
    let mut files = Vec::new();
    let (trace, lines, exhausted) =
        match sequential_discrepancy(&problem, &solver, 0, sc.tau_tilde, sc.alpha0, sc.q, sc.kmax, sc.delta) {
            Ok(r) => {
                let lines = vec![
                    format!("k = {}", r.k),
                    format!("alpha = {}", r.alpha),
                    format!("residual = {}", r.solution.residual),
                    format!(
                        "previous residual = {}",
                        r.bracket_residual_prev.map_or("none".into(), |v| v.to_string())
                    ),
                ];
                (r.trace, lines, false)
            }
            Err(Error::SequentialExhausted { trace }) => {
                let lines = vec![format!("no k <= {} reached the threshold", sc.kmax)];
                (trace, lines, true)
            }
            Err(e) => return Err(e),
        };
    let mut s = String::from("k,alpha,residual\n");
    for (k, r) in trace.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{r}", sc.alpha0 * sc.q.powi(k as i32));
    }
    write(out, "sequential.csv", &s, &mut files)?;
    Ok(RunReport {
        kind: ExperimentKind::SequentialDemo,
        files,
        lines,
        exhausted,
    })
}
