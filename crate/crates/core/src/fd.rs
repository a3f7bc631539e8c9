//! Front-fixing finite-difference reference solver.
//!
//! With `y = z - zbar(t)` the moving domain becomes `[-L, 0]` and the heat
//! equation picks up an advection term, `psi_t = psi_yy + zbar' psi_y`.
//! Dirichlet data `beta1` at `y = -L` and `beta2` at `y = 0` close the
//! problem; the flux `nu` is read off with a one-sided second-order stencil
//! and drives `zbar` through the same boundary laws as the integral solver.
//! The far-field truncation error is of order `exp(-L^2 / 4 t_end)`.
//!
//! Time stepping is the theta-scheme with central differences in `y`; each
//! step iterates on the new front speed until it is self-consistent.

use crate::error::{Result, StefanError};
use crate::volterra::{FieldSnapshot, FreeBoundaryTrajectory, Law, ProblemSpec};

const SPEED_TOL: f64 = 1e-13;
const SPEED_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    /// Depth `L` of the computational interval `[-L, 0]`.
    pub depth: f64,
    /// Number of cells.
    pub ny: usize,
    pub dt: f64,
    /// Implicit weight: 0 explicit, 1/2 Crank-Nicolson, 1 backward Euler.
    pub theta_scheme: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            depth: 10.0,
            ny: 400,
            dt: 1e-4,
            theta_scheme: 0.5,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.dt > 0.0) {
            return Err(StefanError::Settings("fd depth and dt must be positive".into()));
        }
        if self.ny < 16 {
            return Err(StefanError::Settings(format!("fd ny must be at least 16, got {}", self.ny)));
        }
        if !(0.0..=1.0).contains(&self.theta_scheme) {
            return Err(StefanError::Settings(format!("theta_scheme must lie in [0, 1], got {}", self.theta_scheme)));
        }
        if self.theta_scheme < 0.5 {
            let h = self.depth / self.ny as f64;
            let mu = self.dt / (h * h) * (1.0 - 2.0 * self.theta_scheme);
            if mu > 0.5 {
                return Err(StefanError::Settings(format!(
                    "explicit part unstable: dt (1 - 2 theta) / h^2 = {mu} exceeds 1/2"
                )));
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.depth / self.ny as f64
    }
}

/// Solves `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` in place; `d` returns `x`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut [f64]) {
    let n = d.len();
    scratch[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * scratch[i - 1];
        scratch[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= scratch[i] * d[i + 1];
    }
}

fn front_flux(psi: &[f64], h: f64) -> f64 {
    let n = psi.len() - 1;
    (3.0 * psi[n] - 4.0 * psi[n - 1] + psi[n - 2]) / (2.0 * h)
}

/// `(psi_yy + c psi_y)` at interior node `i`.
#[inline]
fn operator(psi: &[f64], i: usize, c: f64, h: f64) -> f64 {
    (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) / (h * h) + c * (psi[i + 1] - psi[i - 1]) / (2.0 * h)
}

/// Runs to the first grid time not before `t_end`; snapshots are taken at
/// the requested times, each of which must be a grid time.
pub fn fd_solve(
    spec: &ProblemSpec,
    fd: &FdConfig,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<(FreeBoundaryTrajectory, Vec<FieldSnapshot>)> {
    fd.validate()?;
    if !(t_end > 0.0) {
        return Err(StefanError::domain(format!("t_end must be positive, got {t_end}")));
    }
    let steps = (t_end / fd.dt - 1e-9).ceil() as usize;
    let mut snap_steps = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        let k = (t / fd.dt).round();
        if !(t >= 0.0) || (k * fd.dt - t).abs() > 1e-9 * fd.dt.max(t) || k as usize > steps {
            return Err(StefanError::usage(format!("snapshot time {t} is not a step of the fd grid")));
        }
        snap_steps.push(k as usize);
    }

    let law = Law::new(spec)?;
    let h = fd.spacing();
    let ny = fd.ny;
    let y: Vec<f64> = (0..=ny).map(|i| if i == ny { 0.0 } else { -fd.depth + i as f64 * h }).collect();
    let b_bar = spec.profile.b_bar;
    let mut psi: Vec<f64> = y.iter().map(|&yy| spec.profile.eval(b_bar + yy)).collect();
    psi[0] = spec.beta1;
    psi[ny] = spec.beta2;

    let mut traj = FreeBoundaryTrajectory {
        times: (0..=steps).map(|i| i as f64 * fd.dt).collect(),
        nu: vec![0.0; steps + 1],
        zbar: vec![0.0; steps + 1],
        s: vec![0.0; steps + 1],
        picard_iters: vec![0; steps + 1],
    };
    traj.nu[0] = spec.profile.dpsi_at_front();
    traj.zbar[0] = b_bar;
    traj.s[0] = spec.b;
    let mut speed = law.rate_coefficient(spec.b)? * traj.nu[0];
    let mut cum = 0.0;

    let mut snapshots = Vec::new();
    let take = |psi: &[f64], zb: f64, t: f64| {
        let z = y.iter().map(|&yy| if yy == 0.0 { zb } else { zb + yy }).collect();
        FieldSnapshot::new(t, z, psi.to_vec())
    };
    for _ in snap_steps.iter().filter(|&&k| k == 0) {
        snapshots.push(take(&psi, b_bar, 0.0));
    }

    let m = ny - 1;
    let (mut lo, mut di, mut up) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut explicit = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut next = psi.clone();
    let th = fd.theta_scheme;
    let dt = fd.dt;

    for n in 1..=steps {
        for i in 1..ny {
            explicit[i - 1] = psi[i] + (1.0 - th) * dt * operator(&psi, i, speed, h);
        }
        let mut trial = speed;
        let mut converged = None;
        let mut last_change = f64::INFINITY;
        for it in 1..=SPEED_MAX_ITERS {
            let diff = th * dt / (h * h);
            let adv = th * dt * trial / (2.0 * h);
            for j in 0..m {
                lo[j] = -diff + adv;
                di[j] = 1.0 + 2.0 * diff;
                up[j] = -diff - adv;
                rhs[j] = explicit[j];
            }
            rhs[0] -= lo[0] * spec.beta1;
            rhs[m - 1] -= up[m - 1] * spec.beta2;
            thomas(&lo, &di, &up, &mut rhs, &mut scratch);
            next[1..ny].copy_from_slice(&rhs);
            let nu = front_flux(&next, h);
            let c = cum + 0.5 * dt * (traj.nu[n - 1] + nu);
            let s = law.s(c);
            let updated = law.rate_coefficient(s)? * nu;
            last_change = (updated - trial).abs();
            if last_change <= SPEED_TOL * (1.0 + trial.abs()) {
                converged = Some((nu, c, s, it));
                break;
            }
            trial = updated;
        }
        let Some((nu, c, s, iters)) = converged else {
            traj.truncate(n);
            return Err(StefanError::NonConvergence {
                step: n,
                t: n as f64 * dt,
                iterations: SPEED_MAX_ITERS,
                last_change,
                partial: Box::new(traj),
            });
        };
        std::mem::swap(&mut psi, &mut next);
        cum = c;
        speed = trial;
        traj.nu[n] = nu;
        traj.s[n] = s;
        traj.zbar[n] = law.zbar(c, s)?;
        traj.picard_iters[n] = iters;
        for _ in snap_steps.iter().filter(|&&k| k == n) {
            snapshots.push(take(&psi, traj.zbar[n], traj.times[n]));
        }
    }
    // keep the order in which times were requested
    let mut order: Vec<usize> = (0..snap_steps.len()).collect();
    order.sort_by_key(|&i| snap_steps[i]);
    let mut out = vec![None; snap_steps.len()];
    for (snap, &slot) in snapshots.into_iter().zip(&order) {
        out[slot] = Some(snap);
    }
    Ok((traj, out.into_iter().map(Option::unwrap).collect()))
}

/// Summary of `|a - b|` for one column.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnDiff {
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDiff {
    /// Nodes of the sparser trajectory inside the common time range.
    pub nodes: usize,
    pub t_start: f64,
    pub t_stop: f64,
    pub nu: ColumnDiff,
    pub zbar: ColumnDiff,
    pub s: ColumnDiff,
}

/// Compares two trajectories on the nodes of the sparser one inside the
/// overlap of their ranges, interpolating the other linearly.
pub fn compare_trajectories(a: &FreeBoundaryTrajectory, b: &FreeBoundaryTrajectory) -> Result<TrajectoryDiff> {
    if a.is_empty() || b.is_empty() {
        return Err(StefanError::usage("cannot compare an empty trajectory"));
    }
    let lo = a.times[0].max(b.times[0]);
    let hi = a.times[a.len() - 1].min(b.times[b.len() - 1]);
    if lo > hi {
        return Err(StefanError::usage(format!("time ranges do not overlap ({lo} > {hi})")));
    }
    let inside = |tr: &FreeBoundaryTrajectory| tr.times.iter().filter(|&&t| t >= lo && t <= hi).count();
    let (base, other) = if inside(a) <= inside(b) { (a, b) } else { (b, a) };
    let mut sums = [[0.0f64; 3]; 3];
    let mut nodes = 0usize;
    for i in 0..base.len() {
        let t = base.times[i];
        if t < lo || t > hi {
            continue;
        }
        let o = other.sample(t).expect("node lies inside the overlap");
        let here = [base.nu[i], base.zbar[i], base.s[i]];
        for c in 0..3 {
            let d = (here[c] - o[c]).abs();
            sums[c][0] = sums[c][0].max(d);
            sums[c][1] += d;
            sums[c][2] += d * d;
        }
        nodes += 1;
    }
    let col = |c: usize| ColumnDiff {
        max: sums[c][0],
        mean: sums[c][1] / nodes as f64,
        rms: (sums[c][2] / nodes as f64).sqrt(),
    };
    Ok(TrajectoryDiff {
        nodes,
        t_start: lo,
        t_stop: hi,
        nu: col(0),
        zbar: col(1),
        s: col(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::make_front;
    use crate::hodograph::LinearizedProfile;
    use crate::volterra::BoundaryLaw;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn front_spec() -> ProblemSpec {
        let f = make_front(2.0, -2.0, LN_2).unwrap();
        let p = f.initial_profile(None, 1e-3).unwrap();
        ProblemSpec::new(p, 2.0, -2.0, 1.0, BoundaryLaw::FrozenH, None).unwrap()
    }

    #[test]
    fn thomas_solves_a_small_system() {
        let a = [0.0, 1.0, 1.0];
        let b = [4.0, 4.0, 4.0];
        let c = [1.0, 1.0, 0.0];
        let mut d = [5.0, 6.0, 5.0];
        let mut w = [0.0; 3];
        thomas(&a, &b, &c, &mut d, &mut w);
        for v in d {
            assert_relative_eq!(v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn guard_rejects_unstable_explicit_steps() {
        let fd = FdConfig {
            theta_scheme: 0.0,
            dt: 1e-3,
            ..FdConfig::default()
        };
        assert!(matches!(fd.validate(), Err(StefanError::Settings(_))));
        assert!(FdConfig { ny: 8, ..FdConfig::default() }.validate().is_err());
        assert!(FdConfig { theta_scheme: 1.5, ..FdConfig::default() }.validate().is_err());
    }

    #[test]
    fn front_flux_is_recovered() {
        let spec = front_spec();
        let fd = FdConfig { dt: 5e-4, ..FdConfig::default() };
        let (traj, snaps) = fd_solve(&spec, &fd, 0.1, &[0.1, 0.0]).unwrap();
        for i in 0..traj.len() {
            if traj.times[i] >= 0.05 {
                assert!((traj.nu[i] + 4.0).abs() < 0.04, "t = {}: nu = {}", traj.times[i], traj.nu[i]);
            }
        }
        assert_eq!(snaps[0].t, traj.times[200]);
        assert_eq!(snaps[1].t, 0.0);
        for s in &snaps {
            assert_eq!(s.psi[0], 2.0);
            assert_eq!(*s.psi.last().unwrap(), -2.0);
        }
    }

    #[test]
    fn implicit_scheme_keeps_values_between_the_boundary_data() {
        let spec = front_spec();
        let fd = FdConfig { theta_scheme: 1.0, dt: 1e-3, ny: 100, ..FdConfig::default() };
        let (_, snaps) = fd_solve(&spec, &fd, 0.05, &[0.05]).unwrap();
        assert!(snaps[0].psi.iter().all(|&v| (-2.0..=2.0).contains(&v)));
    }

    #[test]
    fn step_datum_on_a_fixed_domain_spreads_like_erfc() {
        // constant datum -1 against the far-field value 1 at y = -L
        let z = vec![-20.0, 0.0];
        let p = LinearizedProfile::new(z, vec![-1.0, -1.0], vec![0.0, 0.0], -1.0, -1.0).unwrap();
        let spec = ProblemSpec::relaxed(p, 1.0, -1.0, 0.0, BoundaryLaw::FrozenH, None).unwrap();
        // beta2 = -1 freezes the front: zbar' = -(1 + beta2) nu / beta2^2 = 0
        let fd = FdConfig { depth: 4.0, ny: 400, dt: 1e-4, theta_scheme: 1.0 };
        let (traj, snaps) = fd_solve(&spec, &fd, 0.05, &[0.05]).unwrap();
        assert!(traj.zbar.iter().all(|&v| v == 0.0));
        // away from y = 0 the solution is the half-line step response
        let snap = &snaps[0];
        for (i, &z) in snap.z_grid.iter().enumerate().take(120).skip(1) {
            let exact = -1.0 + 4.0 * crate::kernel::layer_mass(-4.0, z, 0.05).unwrap();
            assert!((snap.psi[i] - exact).abs() < 2e-3, "z = {z}: {} vs {exact}", snap.psi[i]);
        }
    }

    #[test]
    fn compare_identical_and_disjoint() {
        let t = FreeBoundaryTrajectory {
            times: vec![0.0, 0.1, 0.2],
            nu: vec![1.0, 2.0, 3.0],
            zbar: vec![0.0; 3],
            s: vec![1.0; 3],
            picard_iters: vec![0; 3],
        };
        let d = compare_trajectories(&t, &t).unwrap();
        assert_eq!((d.nu.max, d.zbar.max, d.s.max, d.nu.rms), (0.0, 0.0, 0.0, 0.0));
        let mut later = t.clone();
        later.times = vec![1.0, 1.1, 1.2];
        assert!(matches!(compare_trajectories(&t, &later), Err(StefanError::Usage(_))));
    }

    #[test]
    fn compare_interpolates_the_finer_trajectory() {
        let coarse = FreeBoundaryTrajectory {
            times: vec![0.0, 1.0],
            nu: vec![0.0, 1.0],
            zbar: vec![0.0, 0.0],
            s: vec![0.0, 0.0],
            picard_iters: vec![0, 0],
        };
        let fine = FreeBoundaryTrajectory {
            times: vec![0.0, 0.5, 1.0],
            nu: vec![0.0, 0.5, 1.5],
            zbar: vec![0.0; 3],
            s: vec![0.0; 3],
            picard_iters: vec![0; 3],
        };
        let d = compare_trajectories(&fine, &coarse).unwrap();
        assert_eq!(d.nodes, 2);
        assert_relative_eq!(d.nu.max, 0.5);
        assert_relative_eq!(d.nu.mean, 0.25);
    }
}
