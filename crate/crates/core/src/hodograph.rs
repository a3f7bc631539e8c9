//! Dictionary between the physical variables `(x, theta)` and the linearized
//! variables `(z, psi)` defined by `z_x = 1/theta`, `z_t = -theta_x`.
//!
//! Under this change of variables `theta_t / theta^2 = theta_xx` becomes the
//! heat equation `psi_t = psi_zz`. The forward map integrates `1/theta_0` and
//! is therefore only available on intervals where `theta_0` keeps a strict
//! sign; the inverse map integrates `psi` and is always defined, but produces
//! a parametric curve `(x(z), theta(z))` rather than a graph.
//!
//! All integrals here are composite trapezoid sums on the sample grid.

use crate::error::{Result, StefanError};
use crate::volterra::FieldSnapshot;

/// Sampled initial temperature `theta_0(x)` on `[x_min, b]`.
///
/// Left of `x_min` the profile is continued by its asymptote `tail_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalProfile {
    pub x_grid: Vec<f64>,
    pub theta_values: Vec<f64>,
    pub tail_value: f64,
}

/// Sampled initial datum `psi_0(z)` on `[z_min, b_bar]` together with `psi_0'`.
///
/// Left of `z_min` the datum is the constant `tail_value` with zero slope.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedProfile {
    pub z_grid: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub dpsi_values: Vec<f64>,
    pub tail_value: f64,
    pub b_bar: f64,
    pub beta2: f64,
}

fn check_grid(name: &str, grid: &[f64], values: &[&[f64]]) -> Result<()> {
    if grid.len() < 2 {
        return Err(StefanError::usage(format!("{name}: need at least two grid points")));
    }
    if values.iter().any(|v| v.len() != grid.len()) {
        return Err(StefanError::usage(format!("{name}: value columns differ in length from the grid")));
    }
    if grid.iter().chain(values.iter().flat_map(|v| v.iter())).any(|v| !v.is_finite()) {
        return Err(StefanError::usage(format!("{name}: non-finite sample")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(StefanError::usage(format!(
            "{name}: grid must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Linear interpolation on a strictly increasing grid; `x` must lie within it.
pub(crate) fn interp_linear(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[n - 1] {
        return values[n - 1];
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let w = (x - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + w * (values[i + 1] - values[i])
}

/// First derivative of samples on a possibly nonuniform grid: three-point
/// centred formula inside, second-order one-sided formulas at both ends.
/// `int dx / theta` over a segment of length `h` on which `theta` is linear
/// from `a` to `b` (same sign): `h ln(b/a) / (b - a)`.
fn reciprocal_segment(h: f64, a: f64, b: f64) -> f64 {
    let r = (b - a) / a;
    if r.abs() < 1e-6 {
        h / a * (1.0 - r * (0.5 - r / 3.0))
    } else {
        h * r.ln_1p() / (b - a)
    }
}

pub(crate) fn grid_derivative(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 2 {
        let d = (values[1] - values[0]) / (grid[1] - grid[0]);
        return vec![d, d];
    }
    let three_point = |i0: usize, at: usize| {
        let (x0, x1, x2) = (grid[i0], grid[i0 + 1], grid[i0 + 2]);
        let (f0, f1, f2) = (values[i0], values[i0 + 1], values[i0 + 2]);
        let x = grid[at];
        // derivative of the quadratic interpolant through the three points
        f0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + f1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + f2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..n)
        .map(|i| match i {
            0 => three_point(0, 0),
            i if i == n - 1 => three_point(n - 3, n - 1),
            i => three_point(i - 1, i),
        })
        .collect()
}

impl PhysicalProfile {
    pub fn new(x_grid: Vec<f64>, theta_values: Vec<f64>, tail_value: f64) -> Result<Self> {
        check_grid("physical profile", &x_grid, &[&theta_values])?;
        Ok(PhysicalProfile {
            x_grid,
            theta_values,
            tail_value,
        })
    }

    /// Right endpoint `b`, the initial position of the free boundary.
    pub fn b(&self) -> f64 {
        *self.x_grid.last().unwrap()
    }

    /// `theta_0(x)` by linear interpolation, continued by the asymptote on the left.
    pub fn theta_at(&self, x: f64) -> f64 {
        if x < self.x_grid[0] {
            self.tail_value
        } else {
            interp_linear(&self.x_grid, &self.theta_values, x)
        }
    }

    /// Endpoint conditions of the physical Stefan data: `theta_0(b) = beta2 < 0`
    /// and the left edge at the asymptote `beta1 > 0`.
    ///
    /// The two-sided bound `beta1 > |theta_0| > |beta2|` is not checked: a
    /// continuous profile joining `beta1 > 0` to `beta2 < 0` has to cross zero.
    pub fn check_stefan_data(&self, beta2: f64, tol: f64) -> Result<()> {
        let beta1 = self.tail_value;
        if !(beta1 > 0.0 && beta2 < 0.0) {
            return Err(StefanError::domain(format!("need beta1 > 0 > beta2, got {beta1}, {beta2}")));
        }
        let last = *self.theta_values.last().unwrap();
        if (last - beta2).abs() > tol {
            return Err(StefanError::domain(format!("theta_0(b) = {last} differs from beta2 = {beta2}")));
        }
        if (self.theta_values[0] - beta1).abs() > tol {
            return Err(StefanError::domain(format!(
                "theta_0(x_min) = {} differs from beta1 = {beta1}",
                self.theta_values[0]
            )));
        }
        Ok(())
    }

    /// Integral of `1/theta_0` over `[lo, hi]` (`lo <= hi`), following
    /// grid nodes in between and the constant tail left of `x_min`.
    fn integral_of_reciprocal(&self, lo: f64, hi: f64) -> Result<f64> {
        if lo == hi {
            return Ok(0.0);
        }
        if hi > self.b() + 1e-12 * (1.0 + self.b().abs()) {
            return Err(StefanError::domain(format!("x = {hi} lies beyond the right endpoint b = {}", self.b())));
        }
        let x0 = self.x_grid[0];
        let mut points: Vec<(f64, f64)> = Vec::new();
        if lo < x0 {
            points.push((lo, self.tail_value));
            if hi > x0 {
                points.push((x0, self.tail_value));
            } else {
                points.push((hi, self.tail_value));
            }
        }
        if hi > x0 {
            let start = lo.max(x0);
            points.push((start, self.theta_at(start)));
            let first = self.x_grid.partition_point(|&g| g <= start);
            for i in first..self.x_grid.len() {
                let x = self.x_grid[i];
                if x >= hi {
                    break;
                }
                points.push((x, self.theta_values[i]));
            }
            points.push((hi, self.theta_at(hi.min(self.b()))));
        }
        if points.len() < 2 {
            points.push(points[0]);
        }
        let sign = points[0].1.signum();
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.1 == 0.0 || b.1 == 0.0 || a.1.signum() != sign || b.1.signum() != sign {
                return Err(StefanError::SingularTransform { lo: a.0, hi: b.0 });
            }
        }
        if points[0].1 == 0.0 {
            return Err(StefanError::SingularTransform { lo, hi });
        }
        Ok(points.windows(2).map(|w| reciprocal_segment(w[1].0 - w[0].0, w[0].1, w[1].1)).sum())
    }
}

/// Anchored transformed coordinate `z_0(x) = int_anchor^x dx' / theta_0(x')`.
pub fn z_from_x(profile: &PhysicalProfile, x: f64, anchor: f64) -> Result<f64> {
    if x >= anchor {
        profile.integral_of_reciprocal(anchor, x)
    } else {
        Ok(-profile.integral_of_reciprocal(x, anchor)?)
    }
}

/// `h(s) = int_0^s dx' / theta_0(x')`.
pub fn h_of_s(profile: &PhysicalProfile, s: f64) -> Result<f64> {
    z_from_x(profile, s, 0.0)
}

/// `z_0(x_i) = int_anchor^{x_i} dx / theta_0` at every node of a sign-definite
/// profile. The nodes increase with `x` when `theta_0 > 0` and decrease when
/// `theta_0 < 0`.
pub fn z_nodes(profile: &PhysicalProfile, anchor: f64) -> Result<Vec<f64>> {
    let x = &profile.x_grid;
    let theta = &profile.theta_values;
    // sign check over the whole grid and the path to the anchor
    let offset = z_from_x(profile, x[0], anchor)?;
    let sign = theta[0].signum();
    for i in 0..x.len() - 1 {
        let (a, b) = (theta[i], theta[i + 1]);
        if a == 0.0 || b == 0.0 || a.signum() != sign || b.signum() != sign {
            return Err(StefanError::SingularTransform { lo: x[i], hi: x[i + 1] });
        }
    }
    let mut z = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    z.push(offset);
    for i in 0..x.len() - 1 {
        acc += reciprocal_segment(x[i + 1] - x[i], theta[i], theta[i + 1]);
        z.push(offset + acc);
    }
    Ok(z)
}

/// `x(z_i) = anchor + int_0^{z_i} psi dz` at every node, for nodes ordered
/// either way; `0` must lie in the closed range of `z`.
pub fn x_nodes(z: &[f64], psi: &[f64], anchor: f64) -> Result<Vec<f64>> {
    if z.len() != psi.len() || z.len() < 2 {
        return Err(StefanError::usage("x_nodes needs two or more (z, psi) pairs"));
    }
    let mut cum = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for i in 0..z.len() - 1 {
        acc += exponential_segment(z[i + 1] - z[i], z[i + 1] - z[i], psi[i], psi[i + 1]);
        cum.push(acc);
    }
    let at_zero = (0..z.len() - 1)
        .find(|&i| (z[i] <= 0.0 && 0.0 <= z[i + 1]) || (z[i + 1] <= 0.0 && 0.0 <= z[i]))
        .map(|i| cum[i] + exponential_segment(-z[i], z[i + 1] - z[i], psi[i], psi[i + 1]))
        .ok_or_else(|| StefanError::domain("z = 0 lies outside the node range"))?;
    Ok(cum.iter().map(|c| anchor + c - at_zero).collect())
}

/// Maps a positive physical profile to its linearized datum.
///
/// Node values carry over unchanged (`psi_0(z_0(x)) = theta_0(x)`), and
/// `psi_0' = theta_0' theta_0` by the chain rule through `z_x = 1/theta`.
/// A negative profile maps to decreasing `z` and is rejected; use [`z_nodes`].
pub fn transform_profile(profile: &PhysicalProfile, anchor: f64) -> Result<LinearizedProfile> {
    let x = &profile.x_grid;
    let theta = &profile.theta_values;
    let z = z_nodes(profile, anchor)?;
    if theta[0] < 0.0 {
        return Err(StefanError::domain("a negative profile maps to a decreasing z grid"));
    }
    let slope = grid_derivative(x, theta);
    let dpsi = slope.iter().zip(theta).map(|(d, t)| d * t).collect();
    LinearizedProfile::new(z, theta.clone(), dpsi, profile.tail_value, *theta.last().unwrap())
}

/// Inverse of [`transform_profile`]: `x(z) = anchor + int_0^z psi dz'`,
/// evaluated at every node of the linearized grid.
///
/// Between nodes `psi` is taken exponential in `z`, which is what a profile
/// linear in `x` becomes, so the round trip `x -> z -> x` is exact up to rounding.
pub fn inverse_transform(profile: &LinearizedProfile, anchor: f64) -> Vec<f64> {
    let z = &profile.z_grid;
    let psi = &profile.psi_values;
    let mut cum = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for i in 0..z.len() - 1 {
        acc += exponential_segment(z[i + 1] - z[i], z[i + 1] - z[i], psi[i], psi[i + 1]);
        cum.push(acc);
    }
    // cumulative integral evaluated at z = 0; left of the grid psi is the asymptote
    let n = z.len();
    let at_zero = if 0.0 <= z[0] {
        -z[0] * profile.tail_value
    } else if 0.0 >= z[n - 1] {
        cum[n - 1]
    } else {
        let i = z.partition_point(|&g| g <= 0.0) - 1;
        cum[i] + exponential_segment(-z[i], z[i + 1] - z[i], psi[i], psi[i + 1])
    };
    cum.iter().map(|c| anchor + c - at_zero).collect()
}

/// `int_0^d psi` where `psi` runs exponentially from `a` to `b` over a
/// segment of length `h`; falls back to linear when the signs differ.
fn exponential_segment(d: f64, h: f64, a: f64, b: f64) -> f64 {
    if a == b || a == 0.0 || b == 0.0 || a.signum() != b.signum() {
        return d * (a + 0.5 * d / h * (b - a));
    }
    let x = (b / a).ln() * d / h;
    let exprel = if x.abs() < 1e-8 { 1.0 + 0.5 * x } else { x.exp_m1() / x };
    a * d * exprel
}

impl LinearizedProfile {
    pub fn new(
        z_grid: Vec<f64>,
        psi_values: Vec<f64>,
        dpsi_values: Vec<f64>,
        tail_value: f64,
        beta2: f64,
    ) -> Result<Self> {
        check_grid("linearized profile", &z_grid, &[&psi_values, &dpsi_values])?;
        let b_bar = *z_grid.last().unwrap();
        Ok(LinearizedProfile {
            z_grid,
            psi_values,
            dpsi_values,
            tail_value,
            b_bar,
            beta2,
        })
    }

    /// `psi_0(b_bar)`.
    pub fn psi_at_front(&self) -> f64 {
        *self.psi_values.last().unwrap()
    }

    /// `psi_0'(b_bar)`.
    pub fn dpsi_at_front(&self) -> f64 {
        *self.dpsi_values.last().unwrap()
    }

    /// `sup |psi_0'|` over the samples.
    pub fn dpsi_norm(&self) -> f64 {
        self.dpsi_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup |psi_0|` over the samples and the asymptote.
    pub fn psi_norm(&self) -> f64 {
        self.psi_values
            .iter()
            .fold(self.tail_value.abs().max(self.beta2.abs()), |m, v| m.max(v.abs()))
    }

    /// Largest deviation between `dpsi_values` and a three-point derivative of `psi_values`.
    pub fn dpsi_mismatch(&self) -> f64 {
        grid_derivative(&self.z_grid, &self.psi_values)
            .iter()
            .zip(&self.dpsi_values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Endpoint and asymptote conditions of the transformed Stefan data.
    pub fn check_stefan_data(&self, tol: f64) -> Result<()> {
        let beta1 = self.tail_value;
        if !(beta1 > 0.0 && self.beta2 < 0.0) {
            return Err(StefanError::domain(format!("need beta1 > 0 > beta2, got {beta1}, {}", self.beta2)));
        }
        if (self.psi_at_front() - self.beta2).abs() > tol {
            return Err(StefanError::domain(format!(
                "psi_0(b_bar) = {} differs from beta2 = {}",
                self.psi_at_front(),
                self.beta2
            )));
        }
        if (self.psi_values[0] - beta1).abs() > tol || self.dpsi_values[0].abs() > tol {
            return Err(StefanError::domain(format!(
                "left edge (psi, psi') = ({}, {}) has not reached the asymptote ({beta1}, 0)",
                self.psi_values[0], self.dpsi_values[0]
            )));
        }
        let mismatch = self.dpsi_mismatch();
        if mismatch > 1e-2 * (1.0 + self.dpsi_norm()) {
            return Err(StefanError::domain(format!(
                "dpsi column inconsistent with psi column (max deviation {mismatch:e})"
            )));
        }
        Ok(())
    }

    /// `psi_0(z)` by cubic Hermite interpolation of `(psi, psi')`; the
    /// asymptote left of the grid, the front value right of it.
    pub fn eval(&self, z: f64) -> f64 {
        let g = &self.z_grid;
        let n = g.len();
        if z < g[0] {
            return self.tail_value;
        }
        if z >= g[n - 1] {
            return self.psi_values[n - 1];
        }
        let i = g.partition_point(|&v| v <= z) - 1;
        let h = g[i + 1] - g[i];
        let s = (z - g[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.psi_values[i]
            + h10 * h * self.dpsi_values[i]
            + h01 * self.psi_values[i + 1]
            + h11 * h * self.dpsi_values[i + 1]
    }

    /// Smooth datum joining the asymptote `beta1` at `z_start` to `beta2` at
    /// `b_bar` through `beta1 + (beta2 - beta1) (1 - cos(pi u / 2))`,
    /// `u = (z - z_start) / (b_bar - z_start)`; continuously differentiable,
    /// with nonzero slope at the front.
    pub fn cosine_blend(beta1: f64, beta2: f64, z_start: f64, b_bar: f64, dz: f64) -> Result<Self> {
        if !(z_start < b_bar) || !(dz > 0.0) {
            return Err(StefanError::domain("cosine blend needs z_start < b_bar and dz > 0"));
        }
        let len = b_bar - z_start;
        let grid = uniform_grid(z_start, b_bar, dz);
        let q = std::f64::consts::FRAC_PI_2 / len;
        let psi: Vec<f64> = grid
            .iter()
            .map(|&z| beta1 + (beta2 - beta1) * (1.0 - (q * (z - z_start)).cos()))
            .collect();
        let dpsi = grid.iter().map(|&z| (beta2 - beta1) * q * (q * (z - z_start)).sin()).collect();
        let mut psi = psi;
        *psi.last_mut().unwrap() = beta2;
        psi[0] = beta1;
        LinearizedProfile::new(grid, psi, dpsi, beta1, beta2)
    }
}

/// Nodes `lo, lo + dz, ...` ending exactly at `hi`; the last cell absorbs the remainder.
pub(crate) fn uniform_grid(lo: f64, hi: f64, dz: f64) -> Vec<f64> {
    let n = ((hi - lo) / dz).ceil().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    let mut g: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    g.push(hi);
    g
}

/// Parametric physical curve of a snapshot, anchored so that the front node
/// maps to `(s_at_t, beta2)`: `x(z) = s - int_z^{zbar} psi dz'`, `theta = psi`.
///
/// `x` is not monotone in general; `dx/dz = psi` changes sign where `psi = 0`.
pub fn x_from_z_parametric(snapshot: &FieldSnapshot, s_at_t: f64, zbar_at_t: f64) -> Result<Vec<(f64, f64)>> {
    let z = &snapshot.z_grid;
    let psi = &snapshot.psi;
    if z.is_empty() || z.len() != psi.len() {
        return Err(StefanError::usage("snapshot columns are empty or of unequal length"));
    }
    let last = *z.last().unwrap();
    if (last - zbar_at_t).abs() > 1e-12 * (1.0 + zbar_at_t.abs()) {
        return Err(StefanError::usage(format!("snapshot grid ends at {last}, not at zbar = {zbar_at_t}")));
    }
    let n = z.len();
    let mut x = vec![0.0; n];
    x[n - 1] = s_at_t;
    for i in (0..n - 1).rev() {
        x[i] = x[i + 1] - 0.5 * (z[i + 1] - z[i]) * (psi[i] + psi[i + 1]);
    }
    Ok(x.into_iter().zip(psi.iter().copied()).collect())
}

/// Finite-difference residual `max |psi_t - psi_zz|` over interior points of
/// time-ordered snapshots on a common grid at uniform spacing.
pub fn compatibility_residual(snapshots: &[FieldSnapshot]) -> Result<f64> {
    if snapshots.len() < 3 {
        return Err(StefanError::usage("compatibility residual needs at least three snapshots"));
    }
    let grid = &snapshots[0].z_grid;
    if grid.len() < 3 {
        return Err(StefanError::usage("compatibility residual needs at least three grid points"));
    }
    if snapshots.iter().any(|s| s.z_grid != *grid || s.psi.len() != grid.len()) {
        return Err(StefanError::usage("snapshots do not share a common z grid"));
    }
    let dt = snapshots[1].t - snapshots[0].t;
    if !(dt > 0.0) {
        return Err(StefanError::usage("snapshots must be strictly time ordered"));
    }
    for w in snapshots.windows(2) {
        let step = w[1].t - w[0].t;
        if (step - dt).abs() > 1e-9 * dt.max(w[1].t.abs()) {
            return Err(StefanError::usage("snapshots are not uniformly spaced in time"));
        }
    }
    let mut worst: f64 = 0.0;
    for k in 1..snapshots.len() - 1 {
        let prev = &snapshots[k - 1].psi;
        let cur = &snapshots[k].psi;
        let next = &snapshots[k + 1].psi;
        for i in 1..grid.len() - 1 {
            let psi_t = (next[i] - prev[i]) / (2.0 * dt);
            let hl = grid[i] - grid[i - 1];
            let hr = grid[i + 1] - grid[i];
            let psi_zz = 2.0 * (hl * cur[i + 1] - (hl + hr) * cur[i] + hr * cur[i - 1]) / (hl * hr * (hl + hr));
            worst = worst.max((psi_t - psi_zz).abs());
        }
    }
    Ok(worst)
}
