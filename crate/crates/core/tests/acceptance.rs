//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::f64::consts::{LN_2, PI};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stefan_core::certify::{bounds_from_norms, certify, constants_from_norm, default_b2, empirical_contraction, window};
use stefan_core::fd::{compare_trajectories, fd_solve, FdConfig};
use stefan_core::hodograph::{x_from_z_parametric, x_nodes, z_nodes};
use stefan_core::kernel::{abel_row, eval_k, eval_k_t, eval_k_z};
use stefan_core::volterra::{convergence_study, ConvergenceReference};
use stefan_core::{
    make_front, reconstruct_field, solve, BoundaryLaw, FrontSolution, LinearizedProfile, PhysicalProfile, ProblemSpec,
    SolverConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn front() -> FrontSolution {
    make_front(2.0, -2.0, LN_2).unwrap()
}

fn front_spec(dz: f64) -> ProblemSpec {
    let p = front().initial_profile(None, dz).unwrap();
    ProblemSpec::new(p, 2.0, -2.0, 1.0, BoundaryLaw::FrozenH, None).unwrap()
}

fn front_cfg() -> SolverConfig {
    SolverConfig {
        dt: 1e-3,
        t_end: 0.3,
        ..SolverConfig::default()
    }
}

fn criterion_1() -> Outcome {
    let f = front();
    let spec = front_spec(1e-3);
    let cfg = front_cfg();
    let start = Instant::now();
    let traj = solve(&spec, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (mut nu_rel, mut zbar_err, mut s_err) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..traj.len() {
        let t = traj.times[i];
        if t < 5.0 * cfg.dt - 1e-15 {
            continue;
        }
        nu_rel = nu_rel.max((traj.nu[i] / f.nu_const - 1.0).abs());
        zbar_err = zbar_err.max((traj.zbar[i] - (LN_2 - t)).abs());
        s_err = s_err.max((traj.s[i] - (spec.b - 2.0 * t)).abs());
    }
    outcome(
        nu_rel <= 0.01 && zbar_err <= 5e-3 && s_err <= 5e-3 && secs < 60.0,
        format!("max |nu/nu_front - 1| = {nu_rel:.2e}, max zbar err = {zbar_err:.2e}, max s err = {s_err:.2e}, runtime {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    // datum resolved finely enough that its interpolation error sits below the time error
    let spec = front_spec(1e-4);
    let rows = convergence_study(&spec, &front_cfg(), &[4e-3, 2e-3, 1e-3], ConvergenceReference::Front(front())).unwrap();
    let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
    let errors: Vec<String> = rows.iter().map(|r| format!("{:.2e}", r.sup_error)).collect();
    outcome(
        orders.len() == 2 && orders.iter().all(|&p| p >= 0.9),
        format!("sup errors [{}], orders [{}]", errors.join(", "), orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(", ")),
    )
}

fn criterion_3() -> Outcome {
    let p = LinearizedProfile::cosine_blend(2.0, -2.0, -5.0, LN_2, 1e-3).unwrap();
    let spec = ProblemSpec::new(p, 2.0, -2.0, 1.0, BoundaryLaw::FrozenH, None).unwrap();
    let run = |dt: f64, fd: FdConfig| {
        let ie = solve(&spec, &SolverConfig { dt, t_end: 0.3, ..SolverConfig::default() }).unwrap();
        let (fdt, _) = fd_solve(&spec, &fd, 0.3, &[]).unwrap();
        compare_trajectories(&ie, &fdt).unwrap()
    };
    let base = run(1e-3, FdConfig::default());
    let fine = run(5e-4, FdConfig { ny: 800, dt: 5e-5, ..FdConfig::default() });
    let pass = base.zbar.max <= 1e-2 && base.nu.max <= 5e-2 && fine.zbar.max < base.zbar.max && fine.nu.max < base.nu.max;
    outcome(
        pass,
        format!(
            "default: |dzbar| {:.2e}, |dnu| {:.2e}; refined: |dzbar| {:.2e}, |dnu| {:.2e}",
            base.zbar.max, base.nu.max, fine.zbar.max, fine.nu.max
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut norm_err = 0.0f64;
    for t in [1e-4f64, 0.03, 0.5, 2.0, 17.0] {
        let h = 0.05 * t.sqrt();
        let n = (40.0 * t.sqrt() / h) as i64;
        let sum: f64 = (-n..=n).map(|i| eval_k(i as f64 * h, t).unwrap()).sum::<f64>() * h;
        norm_err = norm_err.max((sum - 1.0).abs());
    }
    let mut deriv_err = 0.0f64;
    for &(z, t) in &[(0.3, 0.2), (-1.1, 0.7), (2.0, 1.5), (0.05, 0.01)] {
        let e = 1e-6 * t;
        let kz = (eval_k(z + e, t).unwrap() - eval_k(z - e, t).unwrap()) / (2.0 * e);
        let kt = (eval_k(z, t + e).unwrap() - eval_k(z, t - e).unwrap()) / (2.0 * e);
        let kzz = (eval_k(z + 1e-4, t).unwrap() - 2.0 * eval_k(z, t).unwrap() + eval_k(z - 1e-4, t).unwrap()) / 1e-8;
        let scale = eval_k(0.0, t).unwrap() / t;
        deriv_err = deriv_err
            .max((kz - eval_k_z(z, t).unwrap()).abs() / scale)
            .max((kt - eval_k_t(z, t).unwrap()).abs() / scale)
            .max((kzz - eval_k_t(z, t).unwrap()).abs() / scale);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut abel_err = 0.0f64;
    for _ in 0..50 {
        let mut grid = vec![0.0];
        for _ in 0..rng.random_range(1..40) {
            let last = *grid.last().unwrap();
            grid.push(last + rng.random_range(1e-3..0.1));
        }
        let target = grid[rng.random_range(1..grid.len())];
        let row = abel_row(&grid, target).unwrap();
        abel_err = abel_err
            .max((row.apply(&vec![1.0; grid.len()]) - 2.0 * target.sqrt()).abs())
            .max((row.apply(&grid) - 4.0 / 3.0 * target.powf(1.5)).abs());
    }
    outcome(
        norm_err <= 1e-12 && deriv_err <= 1e-6 && abel_err <= 1e-12,
        format!("normalization {norm_err:.1e}, derivatives {deriv_err:.1e}, abel {{1, tau}} {abel_err:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let base = constants_from_norm(PI.sqrt(), -1.0).unwrap();
    let (bounds, _) = bounds_from_norms(&base, 1.0, -1.0).unwrap();
    let win = window(&base, &bounds, 1.0, -1.0, 1.0).unwrap();
    let exact = (base.a1 - 1.0).abs() <= 1e-12
        && (base.m - 3.0).abs() <= 1e-12
        && (base.b1 - 6.0).abs() <= 1e-12
        && (win.sigma2 - PI / 5184.0).abs() <= 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dpsi = rng.random_range(0.0..6.0);
        let beta2 = -rng.random_range(0.51..5.0);
        let psi_norm = rng.random_range(0.1..5.0);
        let b2 = rng.random_range(0.01..10.0);
        let base = constants_from_norm(dpsi, beta2).unwrap();
        let (b, _) = bounds_from_norms(&base, psi_norm, beta2).unwrap();
        let w = window(&base, &b, b2, beta2, rng.random_range(-3.0..3.0)).unwrap();
        let rel = |a: f64, e: f64| if a == e { 0.0 } else { ((a - e) / e).abs() };
        worst = worst
            .max(rel(base.m, 2.0 * base.a1 + 1.0))
            .max(rel(base.b1, base.m * base.b3))
            .max(rel(b.b8, b.b4 + b.b5 + b.b6 + b.b7))
            .max(rel(w.sigma, w.sigma1.min(w.sigma2).min(w.sigma3)));
    }
    outcome(
        exact && worst <= 1e-12,
        format!(
            "A1 = {}, M = {}, B1 = {}, sigma2 - pi/5184 = {:.1e}; identities on 1000 random inputs to {worst:.1e}",
            base.a1,
            base.m,
            base.b1,
            win.sigma2 - PI / 5184.0
        ),
    )
}

fn criterion_6() -> Outcome {
    let spec = front_spec(1e-3);
    let cert = certify(&spec.profile, 2.0, -2.0, default_b2(LN_2).unwrap()).unwrap();
    let stats = empirical_contraction(&spec, &front_cfg(), &cert, 100, 2024).unwrap();
    outcome(
        stats.pass && stats.evaluated == 100,
        format!(
            "sigma = {:.3e}, window [0, {:.3e}] in {} steps, max ratio {:.4}, mean {:.4}",
            cert.sigma, stats.horizon, stats.steps, stats.max_ratio, stats.mean_ratio
        ),
    )
}

fn criterion_7() -> Outcome {
    let f = front();
    let spec = front_spec(1e-3);
    let traj = solve(&spec, &front_cfg()).unwrap();
    let mut residual = 0.0f64;
    for t in [0.01, 0.1, 0.2, 0.3] {
        let n = traj.node_index(t).unwrap();
        let snap = reconstruct_field(&traj, &spec, traj.times[n], &[traj.zbar[n]]).unwrap();
        residual = residual.max(snap.boundary_residual(spec.beta2));
    }
    let n = traj.node_index(0.1).unwrap();
    let t = traj.times[n];
    let zb = traj.zbar[n];
    let grid: Vec<f64> = (0..=400).map(|i| if i == 400 { zb } else { -3.0 + i as f64 * (zb + 3.0) / 400.0 }).collect();
    let snap = reconstruct_field(&traj, &spec, t, &grid).unwrap();
    let field_err = grid
        .iter()
        .zip(&snap.psi)
        .map(|(&z, &p)| (p - f.psi(z.min(f.zbar(t)), t).unwrap()).abs())
        .fold(0.0f64, f64::max);
    outcome(
        residual <= 1e-2 * 2.0 && field_err <= 1e-2,
        format!("max |psi(zbar) - beta2| = {residual:.2e}, sup |psi - psi_front| at t = 0.1: {field_err:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut round_trip = 0.0f64;
    for _ in 0..40 {
        let n = rng.random_range(8..400);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut x: Vec<f64> = vec![rng.random_range(-3.0..0.0)];
        for _ in 0..n {
            let last = *x.last().unwrap();
            x.push(last + rng.random_range(1e-3..0.05));
        }
        let theta: Vec<f64> = x.iter().map(|&v| sign * (1.0 + 0.5 * (2.0 * v).sin() + rng.random_range(0.0..0.3))).collect();
        let tail = theta[0];
        let p = PhysicalProfile::new(x.clone(), theta, tail).unwrap();
        let anchor = rng.random_range(x[0]..*x.last().unwrap());
        let z = z_nodes(&p, anchor).unwrap();
        let back = x_nodes(&z, &p.theta_values, anchor).unwrap();
        round_trip = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(round_trip, f64::max);
    }
    let spec = front_spec(1e-3);
    let traj = solve(&spec, &front_cfg()).unwrap();
    let n = traj.node_index(0.2).unwrap();
    let zb = traj.zbar[n];
    let grid: Vec<f64> = (0..=600).map(|i| if i == 600 { zb } else { zb - 3.0 + i as f64 * 0.005 }).collect();
    let snap = reconstruct_field(&traj, &spec, traj.times[n], &grid).unwrap();
    let pts = x_from_z_parametric(&snap, traj.s[n], zb).unwrap();
    // theta crosses zero inside the window, so 1/theta is compared only away from it
    let (mut slope, mut inverse) = (0.0f64, 0.0f64);
    for i in 1..pts.len() - 1 {
        let dx = pts[i + 1].0 - pts[i - 1].0;
        let dz = grid[i + 1] - grid[i - 1];
        inverse = inverse.max((dx / dz - pts[i].1).abs());
        if pts[i].1.abs() >= 0.5 {
            slope = slope.max((dz / dx - 1.0 / pts[i].1).abs());
        }
    }
    outcome(
        round_trip <= 1e-8 && slope <= 1e-4 && inverse <= 1e-4,
        format!(
            "x -> z -> x max error {round_trip:.1e} on 40 random profiles; parametric |dz/dx - 1/theta| {slope:.1e} (|theta| >= 1/2), |dx/dz - theta| {inverse:.1e}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_stefan");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("front.cfg");
    fs::write(
        &cfg,
        "problem.beta1 = 2\nproblem.beta2 = -2\nproblem.b_bar = 0.6931471805599453\nproblem.law = frozen_h\n\
         solver.dt = 2e-3\nsolver.t_end = 0.1\noutput.snapshot_times = 0.05, 0.1\nfd.dt = 2e-4\nfd.ny = 200\n\
         convergence.dts = 4e-3, 2e-3\ncertify.trials = 20\n",
    )
    .unwrap();
    let mut failures = Vec::new();
    let commands = ["solve", "oracle", "certify", "fd", "compare", "convergence"];
    for cmd in commands {
        let out = dir.path().join(cmd);
        let mut first = None;
        for _ in 0..2 {
            let status = Command::new(exe)
                .args([cmd, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "11"])
                .status()
                .unwrap();
            if !status.success() {
                failures.push(format!("{cmd} exited with {status}"));
            }
            let files = read_tree(&out);
            match &first {
                None => first = Some(files),
                Some(prev) if *prev != files || prev.is_empty() => failures.push(format!("{cmd} outputs differ")),
                Some(_) => {}
            }
        }
    }
    let pass = failures.is_empty();
    outcome(
        pass,
        if pass {
            format!("{} commands produced byte-identical outputs on rerun", commands.len())
        } else {
            failures.join("; ")
        },
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("traveling-front regression", criterion_1),
        ("convergence order", criterion_2),
        ("cross-solver agreement", criterion_3),
        ("kernel identities", criterion_4),
        ("certificate arithmetic", criterion_5),
        ("empirical contraction", criterion_6),
        ("field reconstruction", criterion_7),
        ("hodograph round trip", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {} ({name}): {}", i + 1, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
