//! Contraction constants, the certified existence window, and an empirical
//! test of the contraction property of the discrete flux operator.

use std::f64::consts::PI;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StefanError};
use crate::hodograph::LinearizedProfile;
use crate::kernel::k;
use crate::volterra::{apply_operator, gaussian_convolution, FreeBoundaryTrajectory, ProblemSpec, SolverConfig};

/// Fewest steps used to discretize the window in [`empirical_contraction`].
pub const MIN_WINDOW_STEPS: usize = 16;

/// Caveat attached to a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertFlag {
    /// `exp(B1^2)` overflowed; `B6` and `B8` are infinite.
    B6Overflow,
    /// `sigma` is zero or below `1e-12`: nothing useful is certified.
    WindowVacuous,
    /// `sigma1` is the binding minimum, so the window rests on the supplied `B2`.
    B2Binding,
}

impl CertFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertFlag::B6Overflow => "b6_overflow",
            CertFlag::WindowVacuous => "window_vacuous",
            CertFlag::B2Binding => "b2_binding",
        }
    }
}

/// The constants that depend only on the flux norm and `beta2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseConstants {
    pub a1: f64,
    pub m: f64,
    pub b1: f64,
    pub b3: f64,
    /// `sup |psi_0'|`.
    pub dpsi_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub b4: f64,
    pub b5: f64,
    pub b6: f64,
    pub b7: f64,
    pub b8: f64,
    /// `max(beta1, |beta2|, sup |psi_0|)`.
    pub psi_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub a1: f64,
    pub m: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
    pub b6: f64,
    pub b7: f64,
    pub b8: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma: f64,
    pub psi_norm: f64,
    pub dpsi_norm: f64,
    pub flags: Vec<CertFlag>,
}

impl Certificate {
    /// `(name, value, flag)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, f64, &'static str)> {
        let has = |f: CertFlag| if self.flags.contains(&f) { f.as_str() } else { "" };
        vec![
            ("A1", self.a1, ""),
            ("M", self.m, ""),
            ("B1", self.b1, ""),
            ("B2", self.b2, has(CertFlag::B2Binding)),
            ("B3", self.b3, ""),
            ("B4", self.b4, ""),
            ("B5", self.b5, ""),
            ("B6", self.b6, has(CertFlag::B6Overflow)),
            ("B7", self.b7, ""),
            ("B8", self.b8, has(CertFlag::B6Overflow)),
            ("sigma1", self.sigma1, has(CertFlag::B2Binding)),
            ("sigma2", self.sigma2, ""),
            ("sigma3", self.sigma3, ""),
            ("sigma", self.sigma, has(CertFlag::WindowVacuous)),
            ("psi0_norm", self.psi_norm, ""),
            ("dpsi0_norm", self.dpsi_norm, ""),
        ]
    }
}

fn check_regime(beta2: f64) -> Result<()> {
    if !(beta2.abs() > 0.5) {
        return Err(StefanError::OutOfRegime(format!(
            "the contraction constants need |beta2| > 1/2, got {beta2}"
        )));
    }
    Ok(())
}

/// `A1 = sup|psi_0'| / sqrt(pi)`, `M = 2 A1 + 1`, `B3 = (1 + 1/|beta2|)/|beta2|`, `B1 = M B3`.
pub fn constants_from_norm(dpsi_norm: f64, beta2: f64) -> Result<BaseConstants> {
    check_regime(beta2)?;
    if !(dpsi_norm >= 0.0 && dpsi_norm.is_finite()) {
        return Err(StefanError::domain(format!("flux norm must be finite and nonnegative, got {dpsi_norm}")));
    }
    let ab = beta2.abs();
    let a1 = dpsi_norm / PI.sqrt();
    let m = 2.0 * a1 + 1.0;
    let b3 = (1.0 + 1.0 / ab) / ab;
    Ok(BaseConstants {
        a1,
        m,
        b1: m * b3,
        b3,
        dpsi_norm,
    })
}

pub fn constants(profile: &LinearizedProfile, beta2: f64) -> Result<BaseConstants> {
    constants_from_norm(profile.dpsi_norm(), beta2)
}

/// `B4..B8` from the base constants and the two profile norms.
pub fn bounds_from_norms(base: &BaseConstants, psi_norm: f64, beta2: f64) -> Result<(Bounds, bool)> {
    check_regime(beta2)?;
    let ab = beta2.abs();
    let sp = PI.sqrt();
    let BaseConstants { m, b1, b3, dpsi_norm, .. } = *base;
    let b4 = psi_norm * b1 * b3 / (4.0 * sp);
    let b5 = dpsi_norm * b3 / (2.0 * sp);
    let growth = (b1 * b1).exp();
    let b6 = (b1 / sp + 3.0 * m / (sp * ab) + 0.25 * ab * b1 * b3 * growth) / ab;
    let b7 = ab * b1 * b3 / (4.0 * sp);
    let overflow = !growth.is_finite();
    let b6 = if overflow { f64::INFINITY } else { b6 };
    Ok((
        Bounds {
            b4,
            b5,
            b6,
            b7,
            b8: b4 + b5 + b6 + b7,
            psi_norm,
        },
        overflow,
    ))
}

/// Like [`bounds_from_norms`] with `sup |psi_0|` taken over the stored
/// profile and the asymptote `beta1`.
pub fn bound_set(base: &BaseConstants, profile: &LinearizedProfile, beta1: f64, beta2: f64) -> Result<(Bounds, bool)> {
    let psi_norm = profile.psi_norm().max(beta1.abs()).max(beta2.abs());
    bounds_from_norms(base, psi_norm, beta2)
}

/// The three window conditions and their minimum.
pub fn window(base: &BaseConstants, bounds: &Bounds, b2: f64, beta2: f64, psi0_at_bbar: f64) -> Result<Window> {
    if !(b2 > 0.0) || !(base.m > 0.0) || !(base.b1 > 0.0) || !(bounds.b8 > 0.0) || beta2 == 0.0 {
        return Err(StefanError::domain("window constants must be positive"));
    }
    let ab = beta2.abs();
    let sigma1 = 1.0 / (4.0 * b2 * (ab + psi0_at_bbar.abs()));
    let r = ab * PI.sqrt() / (4.0 * base.m * base.b1);
    let sigma2 = r * r;
    let sigma3 = 1.0 / (bounds.b8 * bounds.b8);
    Ok(Window {
        sigma1,
        sigma2,
        sigma3,
        sigma: sigma1.min(sigma2).min(sigma3),
    })
}

/// Default `B2 = 1 / (2 sqrt(pi) b_bar)`.
pub fn default_b2(b_bar: f64) -> Result<f64> {
    if !(b_bar > 0.0) {
        return Err(StefanError::domain(format!("default B2 needs b_bar > 0, got {b_bar}")));
    }
    Ok(1.0 / (2.0 * PI.sqrt() * b_bar))
}

/// Full certificate for a problem's initial datum.
pub fn certify(profile: &LinearizedProfile, beta1: f64, beta2: f64, b2: f64) -> Result<Certificate> {
    let base = constants(profile, beta2)?;
    let (bounds, overflow) = bound_set(&base, profile, beta1, beta2)?;
    let win = window(&base, &bounds, b2, beta2, profile.psi_at_front())?;
    let mut flags = Vec::new();
    if overflow {
        flags.push(CertFlag::B6Overflow);
    }
    if win.sigma < 1e-12 {
        flags.push(CertFlag::WindowVacuous);
    }
    if win.sigma1 == win.sigma {
        flags.push(CertFlag::B2Binding);
    }
    Ok(Certificate {
        a1: base.a1,
        m: base.m,
        b1: base.b1,
        b2,
        b3: base.b3,
        b4: bounds.b4,
        b5: bounds.b5,
        b6: bounds.b6,
        b7: bounds.b7,
        b8: bounds.b8,
        sigma1: win.sigma1,
        sigma2: win.sigma2,
        sigma3: win.sigma3,
        sigma: win.sigma,
        psi_norm: bounds.psi_norm,
        dpsi_norm: base.dpsi_norm,
        flags,
    })
}

/// `max_i |T a - T b| / max_i |a - b|` over the nodes after `t = 0`, or
/// `None` for identical curves.
pub fn contraction_ratio(spec: &ProblemSpec, cfg: &SolverConfig, times: &[f64], a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if diff == 0.0 {
        return Ok(None);
    }
    let ta = apply_operator(spec, cfg.ktau_mode, times, a)?;
    let tb = apply_operator(spec, cfg.ktau_mode, times, b)?;
    let out = ta[1..].iter().zip(&tb[1..]).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(Some(out / diff))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStats {
    pub trials: usize,
    /// Pairs with a nonzero difference.
    pub evaluated: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub horizon: f64,
    pub steps: usize,
    pub pass: bool,
}

/// Continuous piecewise-linear curve through 2..=8 random knots in `(-m, m)`.
fn random_curve(rng: &mut ChaCha8Rng, times: &[f64], m: f64) -> Vec<f64> {
    let horizon = *times.last().unwrap();
    let knots = rng.random_range(2..=8usize);
    let mut kt: Vec<f64> = (0..knots - 2).map(|_| rng.random_range(0.0..horizon)).collect();
    kt.push(0.0);
    kt.push(horizon);
    kt.sort_by(f64::total_cmp);
    let inner = m * (1.0 - 1e-9);
    let kv: Vec<f64> = (0..knots).map(|_| rng.random_range(-inner..inner)).collect();
    times
        .iter()
        .map(|&t| crate::hodograph::interp_linear(&kt, &kv, t))
        .collect()
}

/// Applies the discrete operator to `trials` random pairs of curves in the
/// ball `|nu| < M` on the certified window and records the Lipschitz ratios.
///
/// The window `[0, min(sigma, t_end)]` is cut into `max(16, ceil(horizon/dt))`
/// equal steps, so a window shorter than `cfg.dt` is still resolved.
pub fn empirical_contraction(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    cert: &Certificate,
    trials: usize,
    seed: u64,
) -> Result<ContractionStats> {
    if !(cert.sigma > 0.0) {
        return Err(StefanError::OutOfRegime("certified window is empty".into()));
    }
    if trials == 0 {
        return Err(StefanError::usage("need at least one trial"));
    }
    let horizon = cert.sigma.min(cfg.t_end);
    let steps = ((horizon / cfg.dt).ceil() as usize).max(MIN_WINDOW_STEPS);
    let h = horizon / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| if i == steps { horizon } else { i as f64 * h }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .map(|_| {
            let a = random_curve(&mut rng, &times, cert.m);
            let b = random_curve(&mut rng, &times, cert.m);
            (a, b)
        })
        .collect();

    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(trials);
    let chunk = trials.div_ceil(workers);
    let ratios: Vec<Result<Option<f64>>> = thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|part| {
                let times = &times;
                scope.spawn(move || {
                    part.iter()
                        .map(|(a, b)| contraction_ratio(spec, cfg, times, a, b))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("contraction worker panicked")).collect()
    });
    let ratios: Vec<f64> = ratios.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let evaluated = ratios.len();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mean_ratio = if evaluated > 0 { ratios.iter().sum::<f64>() / evaluated as f64 } else { 0.0 };
    Ok(ContractionStats {
        trials,
        evaluated,
        max_ratio,
        mean_ratio,
        horizon,
        steps,
        pass: evaluated > 0 && max_ratio < 1.0,
    })
}

/// One a-priori bound compared with what a trajectory actually does.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotCheck {
    pub name: &'static str,
    pub bound: f64,
    pub observed: f64,
    pub holds: bool,
}

/// Evaluates the a-priori bounds along the nodes of `traj` with `0 < t <= t_max`.
/// Violations are reported, not treated as errors.
pub fn spot_checks(traj: &FreeBoundaryTrajectory, spec: &ProblemSpec, cert: &Certificate, t_max: f64) -> Vec<SpotCheck> {
    let b_bar = spec.profile.b_bar;
    let nodes: Vec<usize> = (1..traj.len()).filter(|&i| traj.times[i] <= t_max).collect();
    let mut nu_sup = traj.nu[0].abs();
    let mut lip = 0.0f64;
    let mut drift = 0.0f64;
    let mut kernel = 0.0f64;
    let mut slope = 0.0f64;
    for &i in &nodes {
        let t = traj.times[i];
        nu_sup = nu_sup.max(traj.nu[i].abs());
        lip = lip.max((traj.zbar[i] - traj.zbar[i - 1]).abs() / (t - traj.times[i - 1]));
        drift = drift.max((traj.zbar[i] - b_bar).abs() / t);
        kernel = kernel.max(k(traj.zbar[i] - b_bar, t));
        slope = slope.max(gaussian_convolution(&spec.profile.z_grid, &spec.profile.dpsi_values, traj.zbar[i], t).abs());
    }
    let check = |name, bound: f64, observed: f64| SpotCheck {
        name,
        bound,
        observed,
        holds: observed <= bound,
    };
    vec![
        check("sup_nu_le_M", cert.m, nu_sup),
        check("zbar_drift_rate_le_B1", cert.b1, drift),
        check("zbar_lipschitz_le_B1", cert.b1, lip),
        check("zbar_speed_le_B3M", cert.b3 * cert.m, lip),
        check("front_kernel_le_B2sigma", cert.b2 * cert.sigma, kernel),
        check("slope_convolution_le_A1", cert.a1, slope),
    ]
}
