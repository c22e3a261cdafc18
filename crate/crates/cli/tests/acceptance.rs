//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion over all of them.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use discreg::config::{ExperimentConfig, ExperimentKind};
use discreg::discrepancy::{
    check_band, joint_discrepancy_search, sequential_discrepancy, AlphaSearch, DiscrepancyBand, GammaSupply,
    JointSearch,
};
use discreg::experiment::{linear_oracle, pde_sweep, rate_study};
use discreg::grid::{Element, Grid, Surface};
use discreg::ladder::DiscretizationLadder;
use discreg::linear_testbed::{make_ladder_model, make_ladder_model_with, ClosedFormSolver, TestbedKind};
use discreg::model::{misfit_gradient, MatrixModel};
use discreg::optimize::TikhonovConfig;
use discreg::pde::{solve_forward, true_coefficient_surface, PdeForward, PdeModel, PdeParams};
use discreg::problem::{CoordinateProblem, LadderProblem, TikhonovSolver};
use discreg::synthdata::{estimate_noise_level, simpson_2d, NoiseGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn linear_oracle_equivalence() -> Outcome {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::LinearOracle,
        seed: 11,
        ..ExperimentConfig::default()
    };
    let rows = match linear_oracle(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let shapes_ok = rows.len() == 100
        && rows.iter().all(|r| {
            r.n <= 8 && r.condition <= 100.0 * (1.0 + 1e-9) && (1e-4..=1e2).contains(&r.alpha)
        });
    outcome(shapes_ok && worst <= 1e-6, format!("100 instances, max relative error {worst:.2e}"))
}

fn monotonicity() -> Outcome {
    let grid: Vec<f64> = (0..100).map(|k| 1e-6 * 1e8f64.powf(k as f64 / 99.0)).collect();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let (lm, ladder) = make_ladder_model(6, &[6], seed).unwrap();
        let yd = lm.noisy_data(0.05, seed + 100);
        let p = CoordinateProblem::new(lm.model.clone(), yd.clone(), ladder, vec![0.0; 6]).unwrap();
        let lvl = p.level(0).unwrap();
        let solver = ClosedFormSolver::new(lm.matrix().clone());
        let sols: Vec<_> = grid
            .iter()
            .map(|&a| solver.solve(&lvl, &yd, TikhonovConfig::new(a, 2.0).unwrap(), None).unwrap())
            .collect();
        for w in sols.windows(2) {
            let scale = 1.0f64.max(w[0].value.abs());
            // L non-decreasing, H non-increasing, I non-decreasing
            worst = worst
                .max((w[0].residual - w[1].residual) / scale)
                .max((w[1].penalty - w[0].penalty) / scale)
                .max((w[0].value - w[1].value) / scale);
        }
    }
    outcome(worst <= 1e-10, format!("5 instances x 100 alphas, worst violation {worst:.2e}"))
}

/// Exhaustive scan: does any `(m, α)` on the grid give a residual in `[τδ, λδ]`?
fn grid_scan<P: LadderProblem>(p: &P, solver: &ClosedFormSolver, band: &DiscrepancyBand, delta: f64, alphas: &[f64]) -> bool {
    (0..p.num_levels()).any(|m| {
        let lvl = p.level(m).unwrap();
        alphas.iter().any(|&a| {
            let s = solver.solve(&lvl, p.ydelta(), TikhonovConfig::new(a, 2.0).unwrap(), None).unwrap();
            check_band(s.residual, delta, band)
        })
    })
}

fn joint_soundness() -> Outcome {
    let band = DiscrepancyBand::new(1.025, 1.125).unwrap();
    let (amin, amax) = (1e-6f64, 1e2f64);
    // ratio 1e8^(1/199) ≈ 1.097 < λ/τ: a continuous crossing cannot skip the band
    let alphas: Vec<f64> = (0..200).map(|k| amin * (amax / amin).powf(k as f64 / 199.0)).collect();
    let settings = JointSearch {
        alpha: AlphaSearch {
            bracket: (amin, amax),
            max_expansions: 0,
            tol: 1e-4,
            p: 2.0,
        },
        ..JointSearch::default()
    };
    let (mut found, mut agree, mut sound) = (0, 0, 0);
    for seed in 0..20u64 {
        let (lm, ladder) =
            make_ladder_model_with(8, &[2, 4, 6, 8], seed, TestbedKind::Random { max_condition: 100.0 }, Some(4))
                .unwrap();
        let ynorm = lm.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        // every fifth instance is infeasible: ‖y^δ‖ ≤ ‖y‖ + δ < τδ bounds every residual
        let delta = if seed % 5 == 4 { 50.0 * ynorm } else { 0.05 * ynorm };
        let yd = lm.noisy_data(delta, seed + 1000);
        let x_true = Element::Vector(lm.x_true.clone());
        let gammas = ladder.gammas(&lm.model, &x_true).unwrap();
        let p = CoordinateProblem::new(lm.model.clone(), yd.clone(), ladder, vec![0.0; 8]).unwrap();
        let solver = ClosedFormSolver::new(lm.matrix().clone());
        let out = joint_discrepancy_search(&p, &solver, &band, delta, &GammaSupply::Exact(gammas), &settings).unwrap();
        let scan = grid_scan(&p, &solver, &band, delta, &alphas);
        if out.in_band() {
            found += 1;
            let mut x = out.result.solution.x.clone();
            x.resize(8, 0.0);
            let r = discreg::model::residual_norm(&lm.model, &x, &yd).unwrap();
            if check_band(r, delta, &band) {
                sound += 1;
            }
        } else {
            sound += 1;
        }
        if out.in_band() == scan {
            agree += 1;
        }
    }
    outcome(
        sound == 20 && agree == 20 && found == 16,
        format!("{found}/20 in band, {sound}/20 re-validated, {agree}/20 agree with the grid scan"),
    )
}

fn sequential_principle() -> Outcome {
    let band_example = {
        let ladder = DiscretizationLadder::coordinate(3, &[3]).unwrap();
        let p = CoordinateProblem::new(MatrixModel::identity(3), vec![1.0, 0.0, 0.0], ladder, vec![0.0; 3]).unwrap();
        let s = sequential_discrepancy(&p, &ClosedFormSolver::new(MatrixModel::identity(3).matrix().clone()), 0, 1.2, 1.0, 0.5, 50, 0.1).unwrap();
        s.k == 3 && s.alpha == 0.125 && (s.bracket_residual_prev.unwrap() - 0.2).abs() < 1e-12
    };
    let mut matches = 0;
    for seed in 0..10u64 {
        let (lm, ladder) = make_ladder_model(6, &[6], seed).unwrap();
        let delta = 0.01 * (1 + seed) as f64;
        let yd = lm.noisy_data(delta, seed);
        let p = CoordinateProblem::new(lm.model.clone(), yd.clone(), ladder, vec![0.0; 6]).unwrap();
        let solver = ClosedFormSolver::new(lm.matrix().clone());
        let (tt, a0, q) = (1.5, 10.0, 0.7);
        let s = sequential_discrepancy(&p, &solver, 0, tt, a0, q, 200, delta).unwrap();
        let lvl = p.level(0).unwrap();
        let brute = (0..=200)
            .map(|k| {
                let a = a0 * q.powi(k);
                solver.solve(&lvl, &yd, TikhonovConfig::new(a, 2.0).unwrap(), None).unwrap().residual
            })
            .position(|r| r <= tt * delta)
            .unwrap();
        let bracket = s.solution.residual <= tt * delta && s.bracket_residual_prev.is_none_or(|r| r > tt * delta);
        if brute == s.k && bracket {
            matches += 1;
        }
    }
    outcome(
        band_example && matches == 10,
        format!("worked example k=3 alpha=0.125: {band_example}; brute-force agreement {matches}/10"),
    )
}

fn gradient_exactness() -> Outcome {
    let g = Grid::with_nodes(6, 11).unwrap();
    let fwd = Arc::new(PdeForward::new(PdeParams::default(), g).unwrap());
    let model = PdeModel::new(fwd, g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.03..0.2)).collect();
    let y: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-0.05..0.05)).collect();
    let (_, grad) = misfit_gradient(&model, &a, &y, 2.0).unwrap();
    let phi = |x: &[f64]| discreg::model::residual_norm(&model, x, &y).unwrap().powi(2);
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let h: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ap: Vec<f64> = a.iter().zip(&h).map(|(x, d)| x + eps * d).collect();
        let am: Vec<f64> = a.iter().zip(&h).map(|(x, d)| x - eps * d).collect();
        let fd = (phi(&ap) - phi(&am)) / (2.0 * eps);
        let ad: f64 = grad.iter().zip(&h).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - ad).abs() / ad.abs().max(1e-12));
    }
    outcome(worst <= 1e-5, format!("20 directions on 6x11, worst relative error {worst:.2e}"))
}

fn cn_properties() -> Outcome {
    let params = PdeParams::default();
    let mut boundary = true;
    let mut range = true;
    for (dt, dy) in [(0.1, 0.25), (0.05, 0.15), (0.02, 0.1), (0.01, 0.05)] {
        let g = Grid::from_steps(dt, dy).unwrap();
        let u = solve_forward(&true_coefficient_surface(g), &params, &g).unwrap();
        for i in 0..g.nt {
            boundary &= u.at(i, 0) == 1.0 && u.at(i, g.ny - 1) == 0.0;
        }
        range &= u.values().iter().all(|v| *v >= -1e-10 && *v <= 1.0 + 1e-10);
    }
    let constant = |g: Grid| solve_forward(&Surface::constant(g, 0.08), &params, &g).unwrap();
    let reference = constant(Grid::from_steps(0.0025, 0.01).unwrap());
    let err = |dt: f64, dy: f64| {
        let g = Grid::from_steps(dt, dy).unwrap();
        let u = Element::Surface(constant(g));
        discreg::diagnostics::l2_error_interpolated(&Element::Surface(reference.clone()), &u).unwrap()
    };
    let (e1, e2) = (err(0.02, 0.1), err(0.01, 0.05));
    let order = (e1 / e2).log2();
    outcome(
        boundary && range && (1.7..=2.3).contains(&order),
        format!("boundary rows exact: {boundary}; 0<=u<=1: {range}; order {order:.3}"),
    )
}

fn trend_reproduction() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for seed in [1u64, 2, 3] {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        let sweep = match pde_sweep(&cfg) {
            Ok(s) => s,
            Err(e) => return outcome(false, e.to_string()),
        };
        let band = cfg.band.band().unwrap();
        let revalidated = sweep.rows.iter().all(|r| r.in_band == check_band(r.residual, sweep.delta, &band));
        let any = sweep.rows.iter().any(|r| r.in_band);
        let finest = sweep.rows.iter().map(|r| r.n_points).max().unwrap();
        let best = sweep
            .rows
            .iter()
            .filter(|r| r.l2_error.is_finite())
            .min_by(|a, b| a.l2_error.total_cmp(&b.l2_error))
            .unwrap();
        let ok = sweep.rows.len() == 12 && revalidated && any && best.in_band && best.n_points != finest;
        pass &= ok;
        details.push(format!(
            "seed {seed}: best mesh {}x{} err {:.4} in band {}",
            best.dtau, best.dy, best.l2_error, best.in_band
        ));
    }
    outcome(pass, details.join("; "))
}

fn rate_study_criterion() -> Outcome {
    let mut cfg = ExperimentConfig {
        kind: ExperimentKind::RateStudy,
        seed: 7,
        ..ExperimentConfig::default()
    };
    cfg.linear.n = 20;
    let (table, notes) = rate_study(&cfg).unwrap();
    let Some(t) = table else {
        return outcome(false, notes.join("; "));
    };
    let band = cfg.band.band().unwrap();
    let all_in = t.rows.len() == 4 && t.rows.iter().all(|r| check_band(r.residual, r.delta, &band));
    let b = t.slopes.bregman.unwrap_or(f64::NAN);
    let r = t.slopes.residual.unwrap_or(f64::NAN);
    let alpha_dec = t.rows.windows(2).all(|w| w[1].alpha < w[0].alpha);
    let q = t.delta_p_over_alpha();
    let q_dec = q.windows(2).all(|w| w[1] < w[0]);
    outcome(
        all_in && b >= 0.9 && (0.95..=1.05).contains(&r) && alpha_dec && q_dec,
        format!("bregman slope {b:.3}, residual slope {r:.4}, alpha decreasing {alpha_dec}, delta^2/alpha decreasing {q_dec}"),
    )
}

fn noise_estimator() -> Outcome {
    let g = Grid::from_steps(0.02, 0.1).unwrap();
    let u = Surface::from_fn(g, |t, y| (1.0 - y.exp()).max(0.0) * (1.0 - 0.2 * t));
    let mut worst_const = 0.0f64;
    for c in [0.003, -0.01, 0.25] {
        let v = Surface::from_fn(g, |t, y| (1.0 - y.exp()).max(0.0) * (1.0 - 0.2 * t) + c);
        let d = estimate_noise_level(&u, &v, NoiseGrid::Data).unwrap();
        worst_const = worst_const.max((d - c.abs() * 10f64.sqrt()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_simpson = 0.0f64;
    for (nt, ny) in [(51, 101), (11, 21), (5, 3)] {
        let grid = Grid::with_nodes(nt, ny).unwrap();
        let ct: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cy: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let poly = |c: &[f64], x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let s = Surface::from_fn(grid, |t, y| poly(&ct, t) * poly(&cy, y));
        let it = ct[0] + ct[1] / 2.0 + ct[2] / 3.0 + ct[3] / 4.0;
        let iy = cy[0] * 10.0 + cy[2] * 250.0 / 3.0;
        let exact = it * iy;
        let q = simpson_2d(&s).unwrap().value;
        worst_simpson = worst_simpson.max((q - exact).abs() / exact.abs());
    }
    outcome(
        worst_const <= 1e-10 && worst_simpson <= 1e-10,
        format!("constant offset error {worst_const:.1e}, Simpson relative error {worst_simpson:.1e}"),
    )
}

fn run_cli(cfg: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_discreg"))
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut checked = Vec::new();
    for name in ["pde_sweep", "oracle", "rates", "sequential"] {
        let cfg = root.join(format!("{name}.conf"));
        let (a, b) = (tmp.path().join(format!("{name}_a")), tmp.path().join(format!("{name}_b")));
        if !run_cli(&cfg, &a) || !run_cli(&cfg, &b) {
            return outcome(false, format!("{name}: run failed"));
        }
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa != fb {
            return outcome(false, format!("{name}: CSV output differs between runs"));
        }
        checked.push(format!("{name} ({} csv)", fa.len()));
    }
    outcome(true, format!("identical: {}", checked.join(", ")))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("1 linear oracle equivalence", linear_oracle_equivalence, Duration::from_secs(10)),
        ("2 monotonicity of L, H, I", monotonicity, Duration::from_secs(5)),
        ("3 joint discrepancy soundness", joint_soundness, Duration::from_secs(30)),
        ("4 sequential principle", sequential_principle, Duration::from_secs(1)),
        ("5 adjoint gradient exactness", gradient_exactness, Duration::from_secs(30)),
        ("6 Crank-Nicolson properties", cn_properties, Duration::from_secs(60)),
        ("7 mesh sweep trend over 3 seeds", trend_reproduction, Duration::from_secs(900)),
        ("8 rate study", rate_study_criterion, Duration::from_secs(60)),
        ("9 noise-level estimator", noise_estimator, Duration::from_secs(5)),
        ("10 CLI determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failed = Vec::new();
    for (name, f, limit) in criteria {
        let t = Instant::now();
        let o = f();
        let took = t.elapsed();
        let pass = o.pass && took <= limit;
        println!(
            "[{}] criterion {name}: {} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
        if !pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
