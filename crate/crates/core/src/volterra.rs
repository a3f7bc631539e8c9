//! Boundary integral formulation of the transformed Stefan problem.
//!
//! The heat equation `psi_t = psi_zz` on `z < zbar(t)` with `psi(zbar, t) = beta2`
//! has the Green representation
//!
//! ```text
//! psi(z,t) = int K(z-xi,t) psi_0(xi) dxi
//!          + int_0^t K(z-zbar(tau), t-tau) (nu + beta2 zbar') dtau
//!          + beta2 int_0^t K_z(z-zbar(tau), t-tau) dtau
//! ```
//!
//! with `nu(t) = psi_z(zbar(t), t)` the unknown flux. Differentiating in `z`
//! and letting `z -> zbar(t)-` yields a nonlinear Volterra equation for `nu`,
//! coupled to the front through a boundary law for `zbar'`. The equation is
//! solved step by step with Picard iteration; history integrals use
//! product-integration weights for the `(t - tau)^(-1/2)` singularity.

use std::thread;

use crate::error::{Result, StefanError};
use crate::front::FrontSolution;
use crate::hodograph::{h_of_s, x_from_z_parametric, LinearizedProfile, PhysicalProfile};
use crate::kernel::{accumulate_abel_weights, gaussian, k, segment_mass, INV_TWO_SQRT_PI};
use crate::quadrature::integrate_pair;

/// Tolerance on the endpoint and asymptote conditions of input profiles.
pub const PROFILE_TOL: f64 = 1e-8;

/// Smallest admissible `|1 + 1/(2 beta2)|`.
pub const MIN_PREFACTOR: f64 = 1e-6;

/// Half-width, in units of `2 sqrt(t)`, of the window outside which the
/// Gaussian mass of a profile segment is below `1e-22`.
const GAUSS_WINDOW: f64 = 7.0;

/// How the front position follows the flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLaw {
    /// `zbar(t) = h(s(t)) - (1/beta2) int_0^t nu`, with
    /// `h(s) = int_0^s dx/theta_0(x)` read off the initial physical profile.
    PaperH,
    /// `zbar' = -nu (1 + beta2) / beta2^2`: `h` evaluated with the boundary
    /// temperature `beta2` in place of `theta_0(s(t))`.
    FrozenH,
}

/// Treatment of the double-layer (`K_tau`) term of the flux equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KtauMode {
    /// Boundary limit of the double layer with argument `zbar(t) - zbar(tau)`:
    /// `beta2 [K(zbar(t)-b_bar, t) - zbar'(t)/2 - int K_z(zbar(t)-zbar(tau), t-tau) zbar'(tau) dtau]`.
    Limit,
    /// `-beta2 int_0^t K_tau(zbar(t), t-tau) dtau`, collapsed to `beta2 K(zbar(t), t)`.
    Frozen,
    /// `-beta2 int_0^t K_tau(zbar(tau), t-tau) dtau` by product integration.
    Retarded,
}

impl BoundaryLaw {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryLaw::PaperH => "paper_h",
            BoundaryLaw::FrozenH => "frozen_h",
        }
    }
}

impl std::str::FromStr for BoundaryLaw {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper_h" => Ok(BoundaryLaw::PaperH),
            "frozen_h" => Ok(BoundaryLaw::FrozenH),
            other => Err(format!("unknown boundary law '{other}' (expected paper_h or frozen_h)")),
        }
    }
}

impl KtauMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            KtauMode::Limit => "limit",
            KtauMode::Frozen => "frozen",
            KtauMode::Retarded => "retarded",
        }
    }
}

impl std::str::FromStr for KtauMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "limit" => Ok(KtauMode::Limit),
            "frozen" => Ok(KtauMode::Frozen),
            "retarded" => Ok(KtauMode::Retarded),
            other => Err(format!("unknown ktau mode '{other}' (expected limit, frozen or retarded)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub profile: LinearizedProfile,
    pub beta1: f64,
    pub beta2: f64,
    /// Initial physical front position, `s(0) = b`.
    pub b: f64,
    pub boundary_law: BoundaryLaw,
    pub physical_profile: Option<PhysicalProfile>,
}

impl ProblemSpec {
    /// Validated problem: profile endpoint conditions, nonsingular prefactor,
    /// and a physical profile whenever the law needs one.
    pub fn new(
        profile: LinearizedProfile,
        beta1: f64,
        beta2: f64,
        b: f64,
        boundary_law: BoundaryLaw,
        physical_profile: Option<PhysicalProfile>,
    ) -> Result<Self> {
        let spec = Self::relaxed(profile, beta1, beta2, b, boundary_law, physical_profile)?;
        if spec.profile.tail_value != beta1 {
            return Err(StefanError::domain(format!(
                "profile asymptote {} differs from beta1 = {beta1}",
                spec.profile.tail_value
            )));
        }
        spec.profile.check_stefan_data(PROFILE_TOL)?;
        Ok(spec)
    }

    /// Like [`ProblemSpec::new`] but without the endpoint conditions on the
    /// profile; for unit-level experiments with data that are not Stefan data.
    pub fn relaxed(
        profile: LinearizedProfile,
        beta1: f64,
        beta2: f64,
        b: f64,
        boundary_law: BoundaryLaw,
        physical_profile: Option<PhysicalProfile>,
    ) -> Result<Self> {
        if profile.beta2 != beta2 {
            return Err(StefanError::domain(format!(
                "profile beta2 = {} differs from problem beta2 = {beta2}",
                profile.beta2
            )));
        }
        if !(beta2 < 0.0) {
            return Err(StefanError::domain(format!("beta2 must be negative, got {beta2}")));
        }
        let prefactor = 1.0 + 0.5 / beta2;
        if prefactor.abs() < MIN_PREFACTOR {
            return Err(StefanError::DegeneratePrefactor(prefactor));
        }
        if boundary_law == BoundaryLaw::PaperH {
            let phys = physical_profile
                .as_ref()
                .ok_or_else(|| StefanError::usage("boundary law paper_h needs a physical profile"))?;
            h_of_s(phys, b)?;
        }
        Ok(ProblemSpec {
            profile,
            beta1,
            beta2,
            b,
            boundary_law,
            physical_profile,
        })
    }

    /// `1 + 1/(2 beta2)`.
    pub fn prefactor(&self) -> f64 {
        1.0 + 0.5 / self.beta2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Depth below the front of the `z` window used for output snapshots.
    pub z_tail: f64,
    pub ktau_mode: KtauMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            t_end: 0.3,
            picard_tol: 1e-12,
            picard_max: 200,
            z_tail: 5.0,
            ktau_mode: KtauMode::Limit,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.dt < self.t_end) {
            return Err(StefanError::domain(format!(
                "need 0 < dt < t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        if !(self.picard_tol >= 1e-14) {
            return Err(StefanError::domain(format!("picard_tol must be at least 1e-14, got {}", self.picard_tol)));
        }
        if self.picard_max == 0 {
            return Err(StefanError::domain("picard_max must be positive"));
        }
        if !(self.z_tail > 0.0) {
            return Err(StefanError::domain("z_tail must be positive"));
        }
        Ok(())
    }

    /// Number of steps; the last node is the first grid time not before `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }
}

/// Time series of the flux, the transformed front and the physical front.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FreeBoundaryTrajectory {
    pub times: Vec<f64>,
    pub nu: Vec<f64>,
    pub zbar: Vec<f64>,
    pub s: Vec<f64>,
    pub picard_iters: Vec<usize>,
}

impl FreeBoundaryTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the node at time `t`, allowing for rounding in `t`.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + t.abs());
        let i = self.times.partition_point(|&v| v < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// Running trapezoid sums of `nu`, in the order the solver forms them.
    pub fn cumulative_flux(&self) -> Vec<f64> {
        cumulative_trapezoid(&self.times, &self.nu)
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.times.truncate(len);
        self.nu.truncate(len);
        self.zbar.truncate(len);
        self.s.truncate(len);
        self.picard_iters.truncate(len);
    }

    /// `nu` interpolated linearly at `t` inside the covered range.
    pub fn sample(&self, t: f64) -> Option<[f64; 3]> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] - 1e-12 || t > self.times[n - 1] + 1e-12 {
            return None;
        }
        if n == 1 {
            return Some([self.nu[0], self.zbar[0], self.s[0]]);
        }
        let i = self.times.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let w = ((t - self.times[i]) / (self.times[i + 1] - self.times[i])).clamp(0.0, 1.0);
        let lerp = |v: &[f64]| v[i] + w * (v[i + 1] - v[i]);
        Some([lerp(&self.nu), lerp(&self.zbar), lerp(&self.s)])
    }
}

pub(crate) fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    if !times.is_empty() {
        out.push(0.0);
    }
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i - 1] + values[i]);
        out.push(acc);
    }
    out
}

/// `psi(., t)` on a `z` grid ending at the front, with an optional parametric
/// physical curve `(x, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub z_grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub x: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
}

impl FieldSnapshot {
    pub fn new(t: f64, z_grid: Vec<f64>, psi: Vec<f64>) -> Self {
        FieldSnapshot {
            t,
            z_grid,
            psi,
            x: None,
            theta: None,
        }
    }

    /// `|psi(zbar(t), t) - beta2|` at the last grid node.
    pub fn boundary_residual(&self, beta2: f64) -> f64 {
        self.psi.last().map_or(f64::NAN, |p| (p - beta2).abs())
    }

    /// Attaches the parametric curve anchored at `(zbar_at_t, s_at_t)`.
    pub fn attach_parametric(&mut self, s_at_t: f64, zbar_at_t: f64) -> Result<()> {
        let pts = x_from_z_parametric(self, s_at_t, zbar_at_t)?;
        self.x = Some(pts.iter().map(|p| p.0).collect());
        self.theta = Some(pts.iter().map(|p| p.1).collect());
        Ok(())
    }
}

/// The boundary law in closed form: front position and front speed as
/// functions of the accumulated flux and of `s`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Law<'a> {
    spec: &'a ProblemSpec,
    h_at_b: f64,
}

impl<'a> Law<'a> {
    pub(crate) fn new(spec: &'a ProblemSpec) -> Result<Self> {
        let h_at_b = match (spec.boundary_law, &spec.physical_profile) {
            (BoundaryLaw::PaperH, Some(p)) => h_of_s(p, spec.b)?,
            (BoundaryLaw::PaperH, None) => {
                return Err(StefanError::usage("boundary law paper_h needs a physical profile"))
            }
            (BoundaryLaw::FrozenH, _) => 0.0,
        };
        Ok(Law { spec, h_at_b })
    }

    pub(crate) fn s(&self, cum: f64) -> f64 {
        self.spec.b - cum / self.spec.beta2
    }

    pub(crate) fn zbar(&self, cum: f64, s: f64) -> Result<f64> {
        let b2 = self.spec.beta2;
        let b_bar = self.spec.profile.b_bar;
        match self.spec.boundary_law {
            BoundaryLaw::FrozenH => Ok(b_bar - (1.0 + b2) / (b2 * b2) * cum),
            BoundaryLaw::PaperH => {
                let phys = self.spec.physical_profile.as_ref().unwrap();
                Ok(b_bar + h_of_s(phys, s)? - self.h_at_b - cum / b2)
            }
        }
    }

    /// `c(s)` in `zbar' = c(s) nu`.
    pub(crate) fn rate_coefficient(&self, s: f64) -> Result<f64> {
        let b2 = self.spec.beta2;
        match self.spec.boundary_law {
            BoundaryLaw::FrozenH => Ok(-(1.0 + b2) / (b2 * b2)),
            BoundaryLaw::PaperH => {
                let theta = self.spec.physical_profile.as_ref().unwrap().theta_at(s);
                if theta == 0.0 {
                    return Err(StefanError::SingularTransform { lo: s, hi: s });
                }
                Ok(-(1.0 / theta + 1.0) / b2)
            }
        }
    }
}

/// `int_{-inf}^{b_bar} K(z - xi, t) f(xi) dxi` for `f` piecewise linear on
/// `grid`, zero left of the grid, exact segment by segment.
pub(crate) fn gaussian_convolution(grid: &[f64], values: &[f64], z: f64, t: f64) -> f64 {
    let reach = 2.0 * GAUSS_WINDOW * t.sqrt();
    let lo = grid.partition_point(|&g| g < z - reach).saturating_sub(1);
    let hi = grid.partition_point(|&g| g <= z + reach).min(grid.len() - 1);
    let mut acc = 0.0;
    for i in lo..hi {
        let (a, b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (values[i], values[i + 1]);
        let slope = (fb - fa) / (b - a);
        let mass = segment_mass(a, b, z, t);
        let moment = -2.0 * t * (k(z - b, t) - k(z - a, t));
        acc += (fa + slope * (z - a)) * mass + slope * moment;
    }
    acc
}

/// Trial values at the newest node, fed to [`rhs_nu`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialState {
    pub t: f64,
    pub nu: f64,
    pub zbar: f64,
    pub s: f64,
}

/// Evaluates the right-hand side of the flux equation at a set of nodes.
struct FluxOperator<'a> {
    spec: &'a ProblemSpec,
    mode: KtauMode,
    law: Law<'a>,
    weights: Vec<f64>,
    rates: Vec<f64>,
}

impl<'a> FluxOperator<'a> {
    fn new(spec: &'a ProblemSpec, mode: KtauMode) -> Result<Self> {
        Ok(FluxOperator {
            spec,
            mode,
            law: Law::new(spec)?,
            weights: Vec::new(),
            rates: Vec::new(),
        })
    }

    fn prepare_weights(&mut self, times: &[f64]) {
        self.weights.resize(times.len(), 0.0);
        accumulate_abel_weights(times, &mut self.weights);
    }

    /// `T nu` at `times[n]`, `n = times.len() - 1`; weights must match `times`.
    fn evaluate(&mut self, times: &[f64], nu: &[f64], zbar: &[f64], s: &[f64]) -> Result<f64> {
        let spec = self.spec;
        let n = times.len() - 1;
        let t = times[n];
        if !(t > 0.0) {
            return Err(StefanError::domain(format!("flux equation needs t > 0, got {t}")));
        }
        let prefactor = spec.prefactor();
        if prefactor.abs() < MIN_PREFACTOR {
            return Err(StefanError::DegeneratePrefactor(prefactor));
        }
        let b2 = spec.beta2;
        let profile = &spec.profile;
        let zt = zbar[n];

        self.rates.clear();
        for j in 0..=n {
            let c = self.law.rate_coefficient(s[j])?;
            self.rates.push(c * nu[j]);
        }
        let rate_now = self.rates[n];

        let front_coeff = match self.mode {
            KtauMode::Limit => b2 - profile.psi_at_front(),
            KtauMode::Frozen | KtauMode::Retarded => -profile.psi_at_front(),
        };
        let front_term = front_coeff * k(zt - profile.b_bar, t);
        let slope_term = gaussian_convolution(&profile.z_grid, &profile.dpsi_values, zt, t);

        // K_z(zt - zbar(tau), t - tau) = (t - tau)^(-1/2) g(tau)
        let mut hist_nu = 0.0;
        let mut hist_rate = 0.0;
        for j in 0..=n {
            let g = if j == n {
                -0.5 * rate_now * INV_TWO_SQRT_PI
            } else {
                let u = t - times[j];
                let d = zt - zbar[j];
                -0.5 * d / u * INV_TWO_SQRT_PI * gaussian(d, u)
            };
            let wg = self.weights[j] * g;
            hist_nu += wg * nu[j];
            hist_rate += wg * self.rates[j];
        }

        let ktau_term = match self.mode {
            KtauMode::Limit => -b2 * (0.5 * rate_now + hist_rate),
            KtauMode::Frozen => b2 * k(zt, t),
            KtauMode::Retarded => {
                if zt == 0.0 {
                    return Err(StefanError::domain("retarded K_tau term is singular when zbar(t) = 0"));
                }
                let mut acc = 0.0;
                for j in 0..n {
                    let u = t - times[j];
                    let a = zbar[j];
                    let r = (a * a / (4.0 * u * u) - 0.5 / u) * INV_TWO_SQRT_PI * gaussian(a, u);
                    acc += self.weights[j] * r;
                }
                b2 * acc
            }
        };

        Ok((front_term + slope_term - hist_nu / b2 + ktau_term) / prefactor)
    }
}

/// One evaluation of the flux operator at `trial.t`, given the trajectory on
/// the earlier nodes and trial values at the new node.
pub fn rhs_nu(
    history: &FreeBoundaryTrajectory,
    trial: TrialState,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<f64> {
    if history.is_empty() {
        return Err(StefanError::usage("rhs_nu needs at least the initial node in the history"));
    }
    if !(trial.t > *history.times.last().unwrap()) {
        return Err(StefanError::domain("trial time must follow the history"));
    }
    let mut times = history.times.clone();
    let mut nu = history.nu.clone();
    let mut zbar = history.zbar.clone();
    let mut s = history.s.clone();
    times.push(trial.t);
    nu.push(trial.nu);
    zbar.push(trial.zbar);
    s.push(trial.s);
    let mut op = FluxOperator::new(spec, cfg.ktau_mode)?;
    op.prepare_weights(&times);
    op.evaluate(&times, &nu, &zbar, &s)
}

/// Applies the discrete operator `T` to a whole flux curve given on `times`
/// (front path from the boundary law); entry 0 is the `t = 0` value of `nu`.
pub fn apply_operator(spec: &ProblemSpec, mode: KtauMode, times: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
    if times.len() != nu.len() || times.len() < 2 || times[0] != 0.0 {
        return Err(StefanError::usage("operator input must be a curve on a time grid starting at 0"));
    }
    let mut op = FluxOperator::new(spec, mode)?;
    let cum = cumulative_trapezoid(times, nu);
    let mut s = Vec::with_capacity(times.len());
    let mut zbar = Vec::with_capacity(times.len());
    for &c in &cum {
        let si = op.law.s(c);
        zbar.push(op.law.zbar(c, si)?);
        s.push(si);
    }
    let mut out = vec![nu[0]];
    for n in 1..times.len() {
        op.prepare_weights(&times[..=n]);
        out.push(op.evaluate(&times[..=n], &nu[..=n], &zbar[..=n], &s[..=n])?);
    }
    Ok(out)
}

/// Time-steps the coupled flux / front system with Picard iteration at each node.
pub fn solve(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<FreeBoundaryTrajectory> {
    cfg.validate()?;
    let steps = cfg.steps();
    let mut op = FluxOperator::new(spec, cfg.ktau_mode)?;
    let law = op.law;

    let mut traj = FreeBoundaryTrajectory {
        times: (0..=steps).map(|i| i as f64 * cfg.dt).collect(),
        nu: vec![0.0; steps + 1],
        zbar: vec![0.0; steps + 1],
        s: vec![0.0; steps + 1],
        picard_iters: vec![0; steps + 1],
    };
    traj.nu[0] = spec.profile.dpsi_at_front();
    traj.zbar[0] = spec.profile.b_bar;
    traj.s[0] = spec.b;
    let mut cum_prev = 0.0;

    for n in 1..=steps {
        let times = &traj.times[..=n];
        op.prepare_weights(times);
        let half_dt = 0.5 * (times[n] - times[n - 1]);
        let nu_prev = traj.nu[n - 1];
        let mut trial = nu_prev;
        let mut outcome = None;
        let mut last_change = f64::INFINITY;
        for it in 1..=cfg.picard_max {
            let cum = cum_prev + half_dt * (nu_prev + trial);
            let s = law.s(cum);
            traj.nu[n] = trial;
            traj.s[n] = s;
            traj.zbar[n] = law.zbar(cum, s)?;
            let next = op.evaluate(times, &traj.nu[..=n], &traj.zbar[..=n], &traj.s[..=n])?;
            last_change = (next - trial).abs();
            if !next.is_finite() {
                break;
            }
            if last_change <= cfg.picard_tol {
                outcome = Some((next, it));
                break;
            }
            trial = next;
        }
        let Some((nu_n, iters)) = outcome else {
            traj.truncate(n);
            return Err(StefanError::NonConvergence {
                step: n,
                t: traj_time(cfg, n),
                iterations: cfg.picard_max,
                last_change,
                partial: Box::new(traj),
            });
        };
        let cum = cum_prev + half_dt * (nu_prev + nu_n);
        let s = law.s(cum);
        traj.nu[n] = nu_n;
        traj.s[n] = s;
        traj.zbar[n] = law.zbar(cum, s)?;
        traj.picard_iters[n] = iters;
        cum_prev = cum;
    }
    Ok(traj)
}

fn traj_time(cfg: &SolverConfig, n: usize) -> f64 {
    n as f64 * cfg.dt
}

/// Evaluates the Green representation of `psi(., t)` on `z_grid` at a
/// trajectory node. Points within rounding of the front take the inside limit.
pub fn reconstruct_field(
    traj: &FreeBoundaryTrajectory,
    spec: &ProblemSpec,
    t: f64,
    z_grid: &[f64],
) -> Result<FieldSnapshot> {
    let n = traj
        .node_index(t)
        .ok_or_else(|| StefanError::usage(format!("t = {t} is not a trajectory node")))?;
    let t = traj.times[n];
    let front = traj.zbar[n];
    let edge_tol = 1e-12 * (1.0 + front.abs());
    if let Some(&z) = z_grid.iter().find(|&&z| z > front + edge_tol) {
        return Err(StefanError::domain(format!("z = {z} lies beyond the front zbar({t}) = {front}")));
    }
    let profile = &spec.profile;
    if n == 0 {
        let psi = z_grid.iter().map(|&z| profile.eval(z)).collect();
        return Ok(FieldSnapshot::new(t, z_grid.to_vec(), psi));
    }

    let law = Law::new(spec)?;
    let b2 = spec.beta2;
    // single-layer density nu + beta2 zbar' at the nodes
    let mut density = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let c = law.rate_coefficient(traj.s[j])?;
        density.push(traj.nu[j] * (1.0 + b2 * c));
    }
    let times = &traj.times[..=n];
    let zbar = &traj.zbar[..=n];
    let scale = density.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let tol = 1e-13 * scale;

    let psi = z_grid
        .iter()
        .map(|&z| {
            let on_front = (z - front).abs() <= edge_tol;
            let z = if on_front { front } else { z };
            let initial = gaussian_convolution(&profile.z_grid, &profile.psi_values, z, t)
                + profile.tail_value * segment_mass(f64::NEG_INFINITY, profile.z_grid[0], z, t);
            let mut single = 0.0;
            let mut double = if on_front { 0.5 } else { 0.0 };
            // tau = t - v^2 on each cell; both integrands are bounded in v
            for j in 0..n {
                let (ta, tb) = (times[j], times[j + 1]);
                let (va, vb) = ((t - tb).sqrt(), (t - ta).sqrt());
                let h = tb - ta;
                let r = integrate_pair(
                    |v| {
                        let tau = t - v * v;
                        let w = (tau - ta) / h;
                        let zb = zbar[j] + w * (zbar[j + 1] - zbar[j]);
                        let dens = density[j] + w * (density[j + 1] - density[j]);
                        let d = z - zb;
                        let e = 2.0 * INV_TWO_SQRT_PI * gaussian(d, v * v);
                        let dl = if on_front && j + 1 == n && v == 0.0 { 0.0 } else { -0.5 * d / (v * v) * e };
                        [e * dens, dl]
                    },
                    va,
                    vb,
                    tol,
                );
                single += r[0];
                double += r[1];
            }
            initial + single + b2 * double
        })
        .collect();
    Ok(FieldSnapshot::new(t, z_grid.to_vec(), psi))
}

/// Reference used by [`convergence_study`] to measure the flux error.
#[derive(Debug, Clone, Copy)]
pub enum ConvergenceReference {
    /// Exact constant flux of a traveling front.
    Front(FrontSolution),
    /// The run with the smallest step.
    Finest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub sup_error: f64,
    /// `log(e_prev / e) / log(dt_prev / dt)`; absent on the first row and on a repeated step.
    pub order: Option<f64>,
}

/// Solves once per step size (concurrently) and tabulates the sup-norm flux
/// error on the nodes of the coarsest grid.
pub fn convergence_study(
    spec: &ProblemSpec,
    cfg_base: &SolverConfig,
    dts: &[f64],
    reference: ConvergenceReference,
) -> Result<Vec<ConvergenceRow>> {
    if dts.len() < 2 {
        return Err(StefanError::usage("convergence study needs at least two step sizes"));
    }
    if dts.windows(2).any(|w| w[1] > w[0]) {
        return Err(StefanError::usage("step sizes must be non-increasing"));
    }
    let coarse = dts[0];
    let mut strides = Vec::with_capacity(dts.len());
    for &dt in dts {
        let ratio = coarse / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(StefanError::usage(format!("step {dt} does not divide the coarsest step {coarse}")));
        }
        strides.push(ratio.round() as usize);
    }

    let runs: Vec<Result<FreeBoundaryTrajectory>> = thread::scope(|scope| {
        let handles: Vec<_> = dts
            .iter()
            .map(|&dt| {
                let cfg = SolverConfig { dt, ..cfg_base.clone() };
                scope.spawn(move || solve(spec, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let common = runs.iter().zip(&strides).map(|(r, &k)| (r.len() - 1) / k).min().unwrap();
    let finest = runs.len() - 1;
    let errors: Vec<f64> = runs
        .iter()
        .zip(&strides)
        .map(|(run, &k)| {
            (0..=common).fold(0.0f64, |m, i| {
                let exact = match reference {
                    ConvergenceReference::Front(f) => f.nu_const,
                    ConvergenceReference::Finest => runs[finest].nu[i * strides[finest]],
                };
                m.max((run.nu[i * k] - exact).abs())
            })
        })
        .collect();

    Ok(dts
        .iter()
        .enumerate()
        .map(|(i, &dt)| ConvergenceRow {
            dt,
            sup_error: errors[i],
            order: (i > 0 && dt < dts[i - 1] && errors[i] > 0.0 && errors[i - 1] > 0.0)
                .then(|| (errors[i - 1] / errors[i]).ln() / (dts[i - 1] / dt).ln()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::make_front;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn front_spec() -> (FrontSolution, ProblemSpec) {
        let f = make_front(2.0, -2.0, LN_2).unwrap();
        let p = f.initial_profile(None, 1e-3).unwrap();
        let spec = ProblemSpec::new(p, 2.0, -2.0, 1.0, BoundaryLaw::FrozenH, None).unwrap();
        (f, spec)
    }

    #[test]
    fn prefactor_must_be_invertible() {
        let f = make_front(1.0, -0.5, 1.0).unwrap();
        let p = f.initial_profile(None, 1e-2).unwrap();
        assert!(matches!(
            ProblemSpec::new(p, 1.0, -0.5, 1.0, BoundaryLaw::FrozenH, None),
            Err(StefanError::DegeneratePrefactor(_))
        ));
    }

    #[test]
    fn h_law_requires_physical_profile() {
        let (_, spec) = front_spec();
        assert!(ProblemSpec::new(spec.profile, 2.0, -2.0, 1.0, BoundaryLaw::PaperH, None).is_err());
    }

    #[test]
    fn slope_convolution_of_constant_slope_is_half() {
        let z: Vec<f64> = (0..=400).map(|i| -20.0 + i as f64 * 0.05).collect();
        let vals = vec![3.0; z.len()];
        let b = *z.last().unwrap();
        let got = gaussian_convolution(&z, &vals, b, 0.3);
        assert_relative_eq!(got, 1.5, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_tail_makes_rhs_vanish() {
        // flat datum, no flux, front far from where the kernels live
        let z: Vec<f64> = vec![40.0, 50.0];
        let p = LinearizedProfile::new(z, vec![-1.0, -1.0], vec![0.0, 0.0], 1.0, -1.0).unwrap();
        let spec = ProblemSpec::relaxed(p, 1.0, -1.0, 0.0, BoundaryLaw::FrozenH, None).unwrap();
        let cfg = SolverConfig {
            ktau_mode: KtauMode::Frozen,
            ..SolverConfig::default()
        };
        let hist = FreeBoundaryTrajectory {
            times: vec![0.0],
            nu: vec![0.0],
            zbar: vec![50.0],
            s: vec![0.0],
            picard_iters: vec![0],
        };
        // the frozen K_tau term sees K(zbar, t) with zbar = 50
        let trial = TrialState { t: 1e-3, nu: 0.0, zbar: 50.0, s: 0.0 };
        let limit = rhs_nu(&hist, trial, &spec, &SolverConfig { ktau_mode: KtauMode::Limit, ..cfg.clone() }).unwrap();
        assert_eq!(limit, 0.0);
        let frozen = rhs_nu(&hist, trial, &spec, &cfg).unwrap();
        // only -psi_0(b_bar) K(0, t) survives
        assert_relative_eq!(frozen, k(0.0, 1e-3) / spec.prefactor(), max_relative = 1e-14);
    }

    #[test]
    fn quiescent_datum_stays_put() {
        let z: Vec<f64> = vec![-5.0, 0.0, 1.0];
        let p = LinearizedProfile::new(z, vec![-2.0; 3], vec![0.0; 3], -2.0, -2.0).unwrap();
        let spec = ProblemSpec::relaxed(p, 2.0, -2.0, 0.5, BoundaryLaw::FrozenH, None).unwrap();
        let cfg = SolverConfig { dt: 0.01, t_end: 0.1, ..SolverConfig::default() };
        let traj = solve(&spec, &cfg).unwrap();
        assert!(traj.nu.iter().all(|&v| v == 0.0));
        assert!(traj.zbar.iter().all(|&v| v == 1.0));
        assert!(traj.s.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn front_flux_is_recovered() {
        let (f, spec) = front_spec();
        let cfg = SolverConfig { dt: 2e-3, t_end: 0.1, ..SolverConfig::default() };
        let traj = solve(&spec, &cfg).unwrap();
        for (i, &nu) in traj.nu.iter().enumerate() {
            assert!((nu - f.nu_const).abs() < 0.04, "node {i}: nu = {nu}");
        }
    }

    #[test]
    fn stored_front_columns_follow_the_flux_integral() {
        let (_, spec) = front_spec();
        let cfg = SolverConfig { dt: 5e-3, t_end: 0.05, ..SolverConfig::default() };
        let traj = solve(&spec, &cfg).unwrap();
        let cum = traj.cumulative_flux();
        for ((s, z), c) in traj.s.iter().zip(&traj.zbar).zip(&cum) {
            assert_eq!(*s, spec.b - c / spec.beta2);
            let expect = -((1.0 + spec.beta2) / (spec.beta2 * spec.beta2)) * c;
            assert!((z - traj.zbar[0] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn picard_failure_returns_partial_trajectory() {
        let (_, spec) = front_spec();
        let cfg = SolverConfig { dt: 1e-2, t_end: 0.1, picard_max: 1, ..SolverConfig::default() };
        match solve(&spec, &cfg) {
            Err(StefanError::NonConvergence { step, partial, .. }) => {
                assert_eq!(step, 1);
                assert_eq!(partial.len(), 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn reconstruction_at_time_zero_is_the_datum() {
        let (f, spec) = front_spec();
        let cfg = SolverConfig { dt: 1e-2, t_end: 0.02, ..SolverConfig::default() };
        let traj = solve(&spec, &cfg).unwrap();
        let z = [-1.0, 0.0, 0.5];
        let snap = reconstruct_field(&traj, &spec, 0.0, &z).unwrap();
        for (i, &zz) in z.iter().enumerate() {
            assert_relative_eq!(snap.psi[i], f.psi(zz, 0.0).unwrap(), epsilon = 1e-10);
        }
        assert!(reconstruct_field(&traj, &spec, 0.015, &z).is_err());
        assert!(reconstruct_field(&traj, &spec, 0.01, &[1.0]).is_err());
    }

    #[test]
    fn convergence_inputs_are_checked() {
        let (f, spec) = front_spec();
        let cfg = SolverConfig::default();
        assert!(convergence_study(&spec, &cfg, &[1e-3], ConvergenceReference::Front(f)).is_err());
        assert!(convergence_study(&spec, &cfg, &[1e-3, 2e-3], ConvergenceReference::Front(f)).is_err());
        assert!(convergence_study(&spec, &cfg, &[3e-3, 2e-3], ConvergenceReference::Front(f)).is_err());
    }
}
