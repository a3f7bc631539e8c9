//! Exact traveling-front solution `psi = beta1 (1 - exp(-V (z - V t)))`.
//!
//! The front `zbar(t) = b_bar + V t` moves left with speed `V < 0`, fixed by
//! `psi(b_bar, 0) = beta2`, and carries the constant flux
//! `nu = psi_z(zbar, t) = V (beta1 - beta2)`. It is the reference solution for
//! every solver test.

use crate::error::{Result, StefanError};
use crate::hodograph::{uniform_grid, LinearizedProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontSolution {
    pub beta1: f64,
    pub beta2: f64,
    pub b_bar: f64,
    /// Front speed `V` in the transformed coordinate.
    pub speed: f64,
    /// Flux `psi_z` at the front, constant in time.
    pub nu_const: f64,
    /// Physical front speed `ds/dt`.
    pub s_dot: f64,
    /// `s_dot / V = (beta2 - beta1) / beta2`.
    pub alpha: f64,
}

/// Builds the front through `psi(b_bar, 0) = beta2`.
pub fn make_front(beta1: f64, beta2: f64, b_bar: f64) -> Result<FrontSolution> {
    if !(beta1 > 0.0 && beta1.is_finite()) {
        return Err(StefanError::domain(format!("front needs beta1 > 0, got {beta1}")));
    }
    if !(beta2 < 0.0 && beta2.is_finite()) {
        return Err(StefanError::domain(format!("front needs beta2 < 0, got {beta2}")));
    }
    if !(b_bar > 0.0) {
        return Err(StefanError::domain(format!("front needs b_bar > 0, got {b_bar}")));
    }
    let speed = -(beta2.abs() / beta1).ln_1p() / b_bar;
    let alpha = (beta2 - beta1) / beta2;
    Ok(FrontSolution {
        beta1,
        beta2,
        b_bar,
        speed,
        nu_const: speed * (beta1 - beta2),
        s_dot: alpha * speed,
        alpha,
    })
}

impl FrontSolution {
    /// Front position `zbar(t) = b_bar + V t`.
    pub fn zbar(&self, t: f64) -> f64 {
        self.b_bar + self.speed * t
    }

    /// `psi(z, t)` for `z <= zbar(t)`.
    pub fn psi(&self, z: f64, t: f64) -> Result<f64> {
        let zb = self.zbar(t);
        if z > zb + 1e-12 * (1.0 + zb.abs()) {
            return Err(StefanError::domain(format!("z = {z} lies beyond the front zbar({t}) = {zb}")));
        }
        Ok(self.psi_unchecked(z, t))
    }

    pub(crate) fn psi_unchecked(&self, z: f64, t: f64) -> f64 {
        let v = self.speed;
        -self.beta1 * (-v * (z - v * t)).exp_m1()
    }

    /// `psi_z(z, t) = beta1 V exp(-V (z - V t))`.
    pub fn psi_z(&self, z: f64, t: f64) -> f64 {
        let v = self.speed;
        self.beta1 * v * (-v * (z - v * t)).exp()
    }

    /// Physical abscissa `x = int_0^z psi(z', t) dz'`.
    pub fn x(&self, z: f64, t: f64) -> f64 {
        let v = self.speed;
        self.beta1 * (z + ((-v * (z - v * t)).exp() - (v * v * t).exp()) / v)
    }

    /// Physical front position `s(t) = b + s_dot t`.
    pub fn s(&self, b: f64, t: f64) -> f64 {
        b + self.s_dot * t
    }

    /// `beta1 + beta1 beta2 - beta2`; zero exactly when the front also obeys
    /// the kinematic law `dzbar/dt = -nu (1 + beta2) / beta2^2` induced by the
    /// hodograph map. Reported, never enforced.
    pub fn consistency_residual(&self) -> f64 {
        self.beta1 + self.beta1 * self.beta2 - self.beta2
    }

    /// Initial datum `psi(z, 0)` sampled on `[z_min, b_bar]` with spacing about `dz`.
    ///
    /// `z_min = None` starts the grid where `|psi - beta1|` has decayed below `1e-13 beta1`.
    pub fn initial_profile(&self, z_min: Option<f64>, dz: f64) -> Result<LinearizedProfile> {
        if !(dz > 0.0) {
            return Err(StefanError::domain("profile spacing must be positive"));
        }
        let lo = z_min.unwrap_or_else(|| (1e-13f64).ln() / self.speed.abs());
        if !(lo < self.b_bar) {
            return Err(StefanError::domain(format!("z_min = {lo} must lie left of b_bar = {}", self.b_bar)));
        }
        let grid = uniform_grid(lo, self.b_bar, dz);
        let mut psi: Vec<f64> = grid.iter().map(|&z| self.psi_unchecked(z, 0.0)).collect();
        let dpsi = grid.iter().map(|&z| self.psi_z(z, 0.0)).collect();
        *psi.last_mut().unwrap() = self.beta2;
        LinearizedProfile::new(grid, psi, dpsi, self.beta1, self.beta2)
    }
}
