//! Plain CSV reading and writing with a provenance comment line on top.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, StefanError};
use crate::volterra::{FieldSnapshot, FreeBoundaryTrajectory};

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// First line of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub law: String,
    pub ktau_mode: String,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!(
            "# stefan {} config_hash={} law={} ktau_mode={}",
            env!("CARGO_PKG_VERSION"),
            self.config_hash,
            self.law,
            self.ktau_mode
        )
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| StefanError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| StefanError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Renders a table; `rows` hold preformatted cells.
pub fn render_table(prov: &Provenance, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = prov.line();
    out.push('\n');
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn render_trajectory(prov: &Provenance, traj: &FreeBoundaryTrajectory) -> String {
    let rows: Vec<Vec<String>> = (0..traj.len())
        .map(|i| {
            vec![
                fmt_f64(traj.times[i]),
                fmt_f64(traj.nu[i]),
                fmt_f64(traj.zbar[i]),
                fmt_f64(traj.s[i]),
                traj.picard_iters[i].to_string(),
            ]
        })
        .collect();
    render_table(prov, &["t", "nu", "zbar", "s", "picard_iters"], &rows)
}

pub fn render_snapshot(prov: &Provenance, snap: &FieldSnapshot) -> String {
    let mut out = prov.line();
    let _ = writeln!(out, " t={}", fmt_f64(snap.t));
    match (&snap.x, &snap.theta) {
        (Some(x), Some(theta)) => {
            out.push_str("z,psi,x,theta\n");
            for i in 0..snap.z_grid.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(snap.z_grid[i]),
                    fmt_f64(snap.psi[i]),
                    fmt_f64(x[i]),
                    fmt_f64(theta[i])
                );
            }
        }
        _ => {
            out.push_str("z,psi\n");
            for i in 0..snap.z_grid.len() {
                let _ = writeln!(out, "{},{}", fmt_f64(snap.z_grid[i]), fmt_f64(snap.psi[i]));
            }
        }
    }
    out
}

/// Reads the named numeric columns of a CSV file; `#` lines are skipped and
/// the first other line is the header. Extra columns are ignored.
pub fn read_columns(path: &Path, wanted: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let bad = |line: usize, message: String| StefanError::Data {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| bad(0, "no header line".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut index = Vec::with_capacity(wanted.len());
    for w in wanted {
        let i = names
            .iter()
            .position(|n| n == w)
            .ok_or_else(|| bad(hline + 1, format!("missing column '{w}'")))?;
        index.push(i);
    }
    let mut cols = vec![Vec::new(); wanted.len()];
    for (ln, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(bad(ln + 1, format!("expected {} cells, found {}", names.len(), cells.len())));
        }
        for (c, &i) in index.iter().enumerate() {
            let v: f64 = cells[i]
                .parse()
                .map_err(|_| bad(ln + 1, format!("'{}' is not a number", cells[i])))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub fn read_trajectory(path: &Path) -> Result<FreeBoundaryTrajectory> {
    let mut cols = read_columns(path, &["t", "nu", "zbar", "s", "picard_iters"])?;
    let iters = cols.pop().unwrap().into_iter().map(|v| v as usize).collect();
    let s = cols.pop().unwrap();
    let zbar = cols.pop().unwrap();
    let nu = cols.pop().unwrap();
    let times = cols.pop().unwrap();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StefanError::Data {
            path: path.display().to_string(),
            line: 0,
            message: "times are not strictly increasing".into(),
        });
    }
    Ok(FreeBoundaryTrajectory {
        times,
        nu,
        zbar,
        s,
        picard_iters: iters,
    })
}
