//! Flat `key = value` run configuration.
//!
//! Keys carry a dotted section prefix (`solver.dt`). `#` starts a comment.
//! Unknown and duplicate keys are rejected with the offending line number;
//! every key, defaulted or not, is echoed in resolved form so the echo (and
//! its hash) describes the run completely.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::certify::default_b2;
use crate::csvio::read_columns;
use crate::error::{Result, StefanError};
use crate::fd::FdConfig;
use crate::front::{make_front, FrontSolution};
use crate::hodograph::{LinearizedProfile, PhysicalProfile};
use crate::volterra::{BoundaryLaw, KtauMode, ProblemSpec, SolverConfig};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "problem.beta1",
    "problem.beta2",
    "problem.b_bar",
    "problem.b",
    "problem.law",
    "problem.physical_profile",
    "profile.kind",
    "profile.path",
    "profile.z_min",
    "profile.z_start",
    "profile.dz",
    "solver.dt",
    "solver.t_end",
    "solver.picard_tol",
    "solver.picard_max",
    "solver.z_tail",
    "solver.ktau_mode",
    "fd.depth",
    "fd.ny",
    "fd.dt",
    "fd.theta_scheme",
    "certify.b2",
    "certify.trials",
    "output.snapshot_times",
    "output.snapshot_dz",
    "convergence.dts",
    "convergence.reference",
    "compare.a",
    "compare.b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// Exact traveling-front datum.
    Front,
    /// Cosine blend from `beta1` at `z_start` to `beta2` at `b_bar`.
    Cosine,
    /// Columns `z,psi,dpsi` from a file.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Front,
    Finest,
}

/// Everything a run needs, fully resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub solver: SolverConfig,
    pub fd: FdConfig,
    pub profile_kind: ProfileKind,
    /// Front through `(beta1, beta2, b_bar)`, when those admit one.
    pub front: Option<FrontSolution>,
    pub b2: f64,
    pub trials: usize,
    pub snapshot_times: Vec<f64>,
    pub snapshot_dz: f64,
    pub dts: Vec<f64>,
    pub reference: ReferenceKind,
    pub compare_a: Option<PathBuf>,
    pub compare_b: Option<PathBuf>,
    /// Sorted `key = value` lines of the resolved configuration.
    pub echo: String,
}

impl RunConfig {
    /// First 16 hex digits of the SHA-256 of the echo plus the seed.
    pub fn hash(&self, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(self.echo.as_bytes());
        h.update(format!("run.seed = {seed}\n").as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Typed access to the raw entries; records the resolved value of every key read.
struct Reader {
    entries: BTreeMap<String, Entry>,
    echo: BTreeMap<&'static str, String>,
    base: PathBuf,
}

impl Reader {
    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn f64(&mut self, key: &'static str, default: Option<f64>) -> Result<f64> {
        let v = match self.raw(key) {
            Some(e) => e
                .value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| StefanError::config(e.line, format!("{key}: '{}' is not a finite number", e.value)))?,
            None => default.ok_or_else(|| StefanError::config(0, format!("missing required key {key}")))?,
        };
        self.echo.insert(key, format!("{v:e}"));
        Ok(v)
    }

    fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>> {
        match self.raw(key) {
            Some(e) if e.value != "auto" => self.f64(key, None).map(Some),
            _ => {
                self.echo.insert(key, "auto".into());
                Ok(None)
            }
        }
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let v = self.f64(key, Some(default))?;
        if !(v > 0.0) {
            return Err(StefanError::config(self.line(key), format!("{key} must be positive, got {v}")));
        }
        Ok(v)
    }

    fn usize(&mut self, key: &'static str, default: usize) -> Result<usize> {
        let v = match self.raw(key) {
            Some(e) => e
                .value
                .parse::<usize>()
                .map_err(|_| StefanError::config(e.line, format!("{key}: '{}' is not a nonnegative integer", e.value)))?,
            None => default,
        };
        self.echo.insert(key, v.to_string());
        Ok(v)
    }

    fn word(&mut self, key: &'static str, default: &str) -> (String, usize) {
        let (v, line) = match self.raw(key) {
            Some(e) => (e.value.clone(), e.line),
            None => (default.to_string(), 0),
        };
        self.echo.insert(key, v.clone());
        (v, line)
    }

    fn path(&mut self, key: &'static str) -> Option<PathBuf> {
        let v = self.raw(key).map(|e| e.value.clone());
        self.echo.insert(key, v.clone().unwrap_or_else(|| "none".into()));
        v.map(|p| self.base.join(p))
    }

    fn list(&mut self, key: &'static str, default: &[f64]) -> Result<Vec<f64>> {
        let out = match self.raw(key) {
            Some(e) if e.value.trim().is_empty() => Vec::new(),
            Some(e) => e
                .value
                .split(',')
                .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| StefanError::config(e.line, format!("{key}: '{}' is not a list of numbers", e.value)))?,
            None => default.to_vec(),
        };
        let text: Vec<String> = out.iter().map(|v| format!("{v:e}")).collect();
        self.echo.insert(key, text.join(","));
        Ok(out)
    }
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| StefanError::config(line, format!("expected 'key = value', found '{content}'")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(StefanError::config(line, format!("unknown key '{key}'")));
        }
        if let Some(prev) = entries.get(key) {
            let prev: &Entry = prev;
            return Err(StefanError::config(
                line,
                format!("duplicate key '{key}' (first set at line {})", prev.line),
            ));
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line,
            },
        );
    }
    Ok(entries)
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let mut r = Reader {
        entries: parse_entries(text)?,
        echo: BTreeMap::new(),
        base: base.to_path_buf(),
    };
    let as_config = |line: usize| move |e: StefanError| StefanError::config(line, e.to_string());

    let beta1 = r.f64("problem.beta1", None)?;
    let beta2 = r.f64("problem.beta2", None)?;
    let b_bar = r.f64("problem.b_bar", None)?;
    let b = r.f64("problem.b", Some(1.0))?;
    if !(beta1 > 0.0) {
        return Err(StefanError::config(r.line("problem.beta1"), format!("beta1 must be positive, got {beta1}")));
    }
    if !(beta2 < -0.5) {
        return Err(StefanError::config(
            r.line("problem.beta2"),
            format!("beta2 must be below -1/2 (prefactor regime), got {beta2}"),
        ));
    }
    let (law_word, law_line) = r.word("problem.law", "frozen_h");
    let law: BoundaryLaw = law_word.parse().map_err(|m| StefanError::config(law_line, m))?;
    let phys_line = r.line("problem.physical_profile");
    let physical = match r.path("problem.physical_profile") {
        Some(p) => {
            let cols = read_columns(&p, &["x", "theta"]).map_err(as_config(phys_line))?;
            let mut it = cols.into_iter();
            let (x, theta) = (it.next().unwrap(), it.next().unwrap());
            Some(PhysicalProfile::new(x, theta, beta1).map_err(as_config(phys_line))?)
        }
        None => None,
    };

    let (kind_word, kind_line) = r.word("profile.kind", "front");
    let kind = match kind_word.as_str() {
        "front" => ProfileKind::Front,
        "cosine" => ProfileKind::Cosine,
        "csv" => ProfileKind::Csv,
        other => {
            return Err(StefanError::config(
                kind_line,
                format!("unknown profile kind '{other}' (expected front, cosine or csv)"),
            ))
        }
    };
    let dz = r.positive("profile.dz", 1e-3)?;
    let z_min = r.opt_f64("profile.z_min")?;
    let z_start = r.f64("profile.z_start", Some(-5.0))?;
    let path_line = r.line("profile.path");
    let profile_path = r.path("profile.path");
    let front = make_front(beta1, beta2, b_bar).ok();
    let profile = match kind {
        ProfileKind::Front => {
            let f = front.ok_or_else(|| StefanError::config(kind_line, "no traveling front through these parameters"))?;
            f.initial_profile(z_min, dz).map_err(as_config(r.line("profile.z_min")))?
        }
        ProfileKind::Cosine => {
            LinearizedProfile::cosine_blend(beta1, beta2, z_start, b_bar, dz).map_err(as_config(r.line("profile.z_start")))?
        }
        ProfileKind::Csv => {
            let p = profile_path.ok_or_else(|| StefanError::config(kind_line, "profile.kind = csv needs profile.path"))?;
            let cols = read_columns(&p, &["z", "psi", "dpsi"]).map_err(as_config(path_line))?;
            let mut it = cols.into_iter();
            let (z, psi, dpsi) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            let prof = LinearizedProfile::new(z, psi, dpsi, beta1, beta2).map_err(as_config(path_line))?;
            if (prof.b_bar - b_bar).abs() > 1e-12 * (1.0 + b_bar.abs()) {
                return Err(StefanError::config(
                    path_line,
                    format!("profile ends at z = {}, not at problem.b_bar = {b_bar}", prof.b_bar),
                ));
            }
            prof
        }
    };
    let spec = ProblemSpec::new(profile, beta1, beta2, b, law, physical).map_err(as_config(law_line))?;

    let (mode_word, mode_line) = r.word("solver.ktau_mode", "limit");
    let solver = SolverConfig {
        dt: r.positive("solver.dt", 1e-3)?,
        t_end: r.positive("solver.t_end", 0.3)?,
        picard_tol: r.positive("solver.picard_tol", 1e-12)?,
        picard_max: r.usize("solver.picard_max", 200)?,
        z_tail: r.positive("solver.z_tail", 5.0)?,
        ktau_mode: mode_word.parse::<KtauMode>().map_err(|m| StefanError::config(mode_line, m))?,
    };
    solver.validate().map_err(as_config(r.line("solver.dt")))?;

    let fd = FdConfig {
        depth: r.positive("fd.depth", 10.0)?,
        ny: r.usize("fd.ny", 400)?,
        dt: r.positive("fd.dt", 1e-4)?,
        theta_scheme: r.f64("fd.theta_scheme", Some(0.5))?,
    };
    fd.validate().map_err(as_config(r.line("fd.ny")))?;

    let b2 = match r.opt_f64("certify.b2")? {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(StefanError::config(r.line("certify.b2"), format!("certify.b2 must be positive, got {v}"))),
        None => default_b2(b_bar).map_err(as_config(r.line("problem.b_bar")))?,
    };
    let trials = r.usize("certify.trials", 100)?;
    if trials == 0 {
        return Err(StefanError::config(r.line("certify.trials"), "certify.trials must be positive"));
    }

    let snapshot_times = r.list("output.snapshot_times", &[])?;
    let steps = solver.steps();
    for &t in &snapshot_times {
        let k = (t / solver.dt).round();
        if !(t >= 0.0) || (k * solver.dt - t).abs() > 1e-9 * solver.dt.max(t) || k as usize > steps {
            return Err(StefanError::config(
                r.line("output.snapshot_times"),
                format!("snapshot time {t} is not a node of the solver grid"),
            ));
        }
    }
    let snapshot_dz = r.positive("output.snapshot_dz", 1e-2)?;

    let dts = r.list("convergence.dts", &[4e-3, 2e-3, 1e-3])?;
    if dts.len() < 2 || dts.iter().any(|&d| !(d > 0.0)) || dts.windows(2).any(|w| w[1] > w[0]) {
        return Err(StefanError::config(
            r.line("convergence.dts"),
            "convergence.dts needs at least two positive, non-increasing steps",
        ));
    }
    let default_ref = if kind == ProfileKind::Front { "front" } else { "finest" };
    let (ref_word, ref_line) = r.word("convergence.reference", default_ref);
    let reference = match ref_word.as_str() {
        "front" if front.is_some() && kind == ProfileKind::Front => ReferenceKind::Front,
        "front" => return Err(StefanError::config(ref_line, "reference = front needs profile.kind = front")),
        "finest" => ReferenceKind::Finest,
        other => return Err(StefanError::config(ref_line, format!("unknown reference '{other}'"))),
    };
    let compare_a = r.path("compare.a");
    let compare_b = r.path("compare.b");
    if compare_a.is_some() != compare_b.is_some() {
        return Err(StefanError::config(
            r.line("compare.a").max(r.line("compare.b")),
            "compare.a and compare.b must be given together",
        ));
    }
    // keys read only under some settings still appear in the echo
    for key in KEYS {
        r.echo.entry(key).or_insert_with(|| "unused".into());
    }

    let echo = r.echo.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "{k} = {v}");
        s
    });
    Ok(RunConfig {
        spec,
        solver,
        fd,
        profile_kind: kind,
        front,
        b2,
        trials,
        snapshot_times,
        snapshot_dz,
        dts,
        reference,
        compare_a,
        compare_b,
        echo,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| StefanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, path.parent().unwrap_or_else(|| Path::new(".")))
}
