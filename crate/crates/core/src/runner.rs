//! Command dispatch for the `stefan` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::certify::{certify, empirical_contraction, spot_checks};
use crate::config::{parse_config, ReferenceKind, RunConfig};
use crate::csvio::{fmt_f64, read_trajectory, render_snapshot, render_table, render_trajectory, write_text, Provenance};
use crate::error::{Result, StefanError};
use crate::fd::{compare_trajectories, fd_solve, TrajectoryDiff};
use crate::hodograph::uniform_grid;
use crate::volterra::{
    convergence_study, reconstruct_field, solve, ConvergenceReference, FieldSnapshot, FreeBoundaryTrajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Oracle,
    Certify,
    Fd,
    Compare,
    Convergence,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Oracle => "oracle",
            Command::Certify => "certify",
            Command::Fd => "fd",
            Command::Compare => "compare",
            Command::Convergence => "convergence",
        }
    }

    /// Stem of the file that receives a partial trajectory on failure.
    fn partial_stem(&self) -> &'static str {
        match self {
            Command::Fd => "fd_trajectory",
            _ => "trajectory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Exit code for an error: numerical failures are 1, everything else 2.
pub fn exit_code(err: &StefanError) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    prov: Provenance,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Runs one command and returns the process exit code; errors go to stderr.
pub fn run(manifest: &RunManifest) -> i32 {
    match run_checked(manifest) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("stefan {}: {e}", manifest.command.as_str());
            exit_code(&e)
        }
    }
}

/// Like [`run`] but returns the list of files written.
pub fn run_checked(manifest: &RunManifest) -> Result<Vec<String>> {
    let cfg = parse_config(&manifest.config_path)?;
    fs::create_dir_all(&manifest.output_dir).map_err(|source| StefanError::Io {
        path: manifest.output_dir.display().to_string(),
        source,
    })?;
    let hash = cfg.hash(manifest.seed);
    let mut out = Outputs {
        dir: &manifest.output_dir,
        prov: Provenance {
            config_hash: hash.clone(),
            law: cfg.spec.boundary_law.as_str().to_string(),
            ktau_mode: cfg.solver.ktau_mode.as_str().to_string(),
        },
        written: Vec::new(),
    };
    let result = match manifest.command {
        Command::Solve => run_solve(&cfg, &mut out),
        Command::Oracle => run_oracle(&cfg, &mut out),
        Command::Certify => run_certify(&cfg, manifest.seed, &mut out),
        Command::Fd => run_fd(&cfg, &mut out),
        Command::Compare => run_compare(&cfg, &mut out),
        Command::Convergence => run_convergence(&cfg, &mut out),
    };
    if let Err(StefanError::NonConvergence { partial, .. }) = &result {
        let name = format!("{}.partial.csv", manifest.command.partial_stem());
        out.put(&name, &render_trajectory(&out.prov, partial))?;
    }
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    let manifest_name = format!("manifest_{}_{hash}.txt", manifest.command.as_str());
    let mut text = out.prov.line();
    text.push('\n');
    let _ = writeln!(text, "command = {}", manifest.command.as_str());
    let _ = writeln!(text, "config_path = {}", manifest.config_path.display());
    let _ = writeln!(text, "output_dir = {}", manifest.output_dir.display());
    let _ = writeln!(text, "seed = {}", manifest.seed);
    let _ = writeln!(text, "status = {status}");
    let _ = writeln!(text, "files = {}", out.written.join(","));
    text.push_str("[resolved]\n");
    text.push_str(&cfg.echo);
    out.put(&manifest_name, &text)?;
    result.map(|_| out.written)
}

fn snapshot_grid(zbar: f64, depth: f64, dz: f64) -> Vec<f64> {
    uniform_grid(zbar - depth, zbar, dz)
}

fn run_solve(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let traj = solve(&cfg.spec, &cfg.solver)?;
    out.put("trajectory.csv", &render_trajectory(&out.prov, &traj))?;
    let mut rows = Vec::new();
    for (k, &t) in cfg.snapshot_times.iter().enumerate() {
        let n = traj.node_index(t).ok_or_else(|| StefanError::usage(format!("t = {t} is not a node")))?;
        let grid = snapshot_grid(traj.zbar[n], cfg.solver.z_tail, cfg.snapshot_dz);
        let mut snap = reconstruct_field(&traj, &cfg.spec, traj.times[n], &grid)?;
        snap.attach_parametric(traj.s[n], traj.zbar[n])?;
        rows.push(vec![fmt_f64(snap.t), fmt_f64(snap.boundary_residual(cfg.spec.beta2))]);
        out.put(&format!("snapshot_{k}.csv"), &render_snapshot(&out.prov, &snap))?;
    }
    if !rows.is_empty() {
        out.put("boundary_residual.csv", &render_table(&out.prov, &["t", "residual"], &rows))?;
    }
    Ok(())
}

fn run_oracle(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let f = cfg
        .front
        .ok_or_else(|| StefanError::domain("no traveling front through the configured beta1, beta2, b_bar"))?;
    let b = cfg.spec.b;
    let steps = cfg.solver.steps();
    let rows: Vec<Vec<String>> = (0..=steps)
        .map(|i| {
            let t = i as f64 * cfg.solver.dt;
            vec![fmt_f64(t), fmt_f64(f.nu_const), fmt_f64(f.zbar(t)), fmt_f64(f.s(b, t))]
        })
        .collect();
    out.put("oracle_trajectory.csv", &render_table(&out.prov, &["t", "nu", "zbar", "s"], &rows))?;
    for (k, &t) in cfg.snapshot_times.iter().enumerate() {
        let zb = f.zbar(t);
        let grid = snapshot_grid(zb, cfg.solver.z_tail, cfg.snapshot_dz);
        let psi: Vec<f64> = grid.iter().map(|&z| f.psi(z.min(zb), t)).collect::<Result<_>>()?;
        // parametric abscissa anchored at the physical front
        let x_front = f.x(zb, t);
        let x: Vec<f64> = grid.iter().map(|&z| f.s(b, t) - (x_front - f.x(z, t))).collect();
        let snap = FieldSnapshot {
            t,
            z_grid: grid,
            theta: Some(psi.clone()),
            psi,
            x: Some(x),
        };
        out.put(&format!("oracle_snapshot_{k}.csv"), &render_snapshot(&out.prov, &snap))?;
    }
    let mut text = out.prov.line();
    text.push('\n');
    for (name, v) in [
        ("speed", f.speed),
        ("nu_const", f.nu_const),
        ("s_dot", f.s_dot),
        ("alpha", f.alpha),
        ("consistency_residual", f.consistency_residual()),
    ] {
        let _ = writeln!(text, "{name} = {}", fmt_f64(v));
    }
    out.put("oracle_summary.txt", &text)
}

fn run_certify(cfg: &RunConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let spec = &cfg.spec;
    let cert = certify(&spec.profile, spec.beta1, spec.beta2, cfg.b2)?;
    let mut rows: Vec<Vec<String>> = cert
        .rows()
        .into_iter()
        .map(|(n, v, f)| vec![n.to_string(), fmt_f64(v), f.to_string()])
        .collect();
    let mut report = out.prov.line();
    report.push('\n');
    let _ = writeln!(report, "Contraction certificate");
    for (n, v, f) in cert.rows() {
        let _ = writeln!(report, "  {n:<12} {:>24} {f}", fmt_f64(v));
    }
    if cert.sigma > 0.0 {
        let stats = empirical_contraction(spec, &cfg.solver, &cert, cfg.trials, seed)?;
        let verdict = if stats.pass { "PASS" } else { "FAIL" };
        for (n, v) in [
            ("contraction_horizon", stats.horizon),
            ("contraction_max_ratio", stats.max_ratio),
            ("contraction_mean_ratio", stats.mean_ratio),
        ] {
            rows.push(vec![n.to_string(), fmt_f64(v), String::new()]);
        }
        rows.push(vec!["contraction_steps".into(), stats.steps.to_string(), String::new()]);
        rows.push(vec!["contraction_pairs".into(), stats.evaluated.to_string(), verdict.to_lowercase()]);
        let _ = writeln!(report, "\nEmpirical contraction on [0, {}] with {} steps", fmt_f64(stats.horizon), stats.steps);
        let _ = writeln!(
            report,
            "  pairs {}  max ratio {}  mean ratio {}  {verdict}",
            stats.evaluated,
            fmt_f64(stats.max_ratio),
            fmt_f64(stats.mean_ratio)
        );
    } else {
        let _ = writeln!(report, "\nEmpirical contraction skipped: the certified window is empty");
    }
    let traj = solve(spec, &cfg.solver)?;
    let _ = writeln!(report, "\nA-priori bounds along the solver trajectory on [0, {}] (reported, not enforced)", fmt_f64(cfg.solver.t_end));
    for c in spot_checks(&traj, spec, &cert, cfg.solver.t_end) {
        let _ = writeln!(
            report,
            "  {:<26} bound {}  observed {}  {}",
            c.name,
            fmt_f64(c.bound),
            fmt_f64(c.observed),
            if c.holds { "holds" } else { "violated" }
        );
    }
    out.put("certificate.csv", &render_table(&out.prov, &["name", "value", "flag"], &rows))?;
    out.put("report.txt", &report)
}

fn run_fd(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (traj, snaps) = fd_solve(&cfg.spec, &cfg.fd, cfg.solver.t_end, &cfg.snapshot_times)?;
    out.put("fd_trajectory.csv", &render_trajectory(&out.prov, &traj))?;
    for (k, mut snap) in snaps.into_iter().enumerate() {
        let n = traj.node_index(snap.t).expect("snapshot at a grid time");
        snap.attach_parametric(traj.s[n], traj.zbar[n])?;
        out.put(&format!("fd_snapshot_{k}.csv"), &render_snapshot(&out.prov, &snap))?;
    }
    Ok(())
}

fn diff_rows(d: &TrajectoryDiff) -> Vec<Vec<String>> {
    [("nu", d.nu), ("zbar", d.zbar), ("s", d.s)]
        .iter()
        .map(|(n, c)| vec![n.to_string(), fmt_f64(c.max), fmt_f64(c.mean), fmt_f64(c.rms)])
        .collect()
}

fn run_compare(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (a, b, label): (FreeBoundaryTrajectory, FreeBoundaryTrajectory, String) = match (&cfg.compare_a, &cfg.compare_b) {
        (Some(pa), Some(pb)) => (
            read_trajectory(pa)?,
            read_trajectory(pb)?,
            format!("{} vs {}", pa.display(), pb.display()),
        ),
        _ => {
            let ie = solve(&cfg.spec, &cfg.solver)?;
            let (fd, _) = fd_solve(&cfg.spec, &cfg.fd, cfg.solver.t_end, &[])?;
            (ie, fd, "integral equation vs finite differences".to_string())
        }
    };
    let d = compare_trajectories(&a, &b)?;
    let mut text = render_table(&out.prov, &["column", "max", "mean", "rms"], &diff_rows(&d));
    let _ = writeln!(text, "# compared {label} on {} nodes in [{}, {}]", d.nodes, fmt_f64(d.t_start), fmt_f64(d.t_stop));
    out.put("compare.csv", &text)
}

fn run_convergence(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let reference = match (cfg.reference, cfg.front) {
        (ReferenceKind::Front, Some(f)) => ConvergenceReference::Front(f),
        _ => ConvergenceReference::Finest,
    };
    let rows = convergence_study(&cfg.spec, &cfg.solver, &cfg.dts, reference)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt_f64(r.dt), fmt_f64(r.sup_error), r.order.map(fmt_f64).unwrap_or_default()])
        .collect();
    out.put("convergence.csv", &render_table(&out.prov, &["dt", "sup_error", "order"], &table))
}
