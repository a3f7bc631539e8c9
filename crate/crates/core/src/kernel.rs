//! Heat kernel, its derivatives, and the singular-quadrature primitives.
//!
//! `K(z, t) = exp(-z^2 / 4t) / (2 sqrt(pi t))` is the fundamental solution of
//! `psi_t = psi_zz`. Every history integral in the solver carries a factor
//! `(t - tau)^(-1/2)`; [`abel_row`] produces product-integration weights that
//! integrate that factor exactly against piecewise-linear data.

use crate::error::{Result, StefanError};

/// Exponent beyond which the Gaussian factor is flushed to exactly zero.
const UNDERFLOW_EXPONENT: f64 = 745.0;

/// `1 / (2 sqrt(pi))`.
pub const INV_TWO_SQRT_PI: f64 = 0.282_094_791_773_878_14;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(StefanError::domain(format!("kernel time must be positive, got {t}")))
    }
}

#[inline]
pub(crate) fn gaussian(z: f64, t: f64) -> f64 {
    let e = z * z / (4.0 * t);
    if e > UNDERFLOW_EXPONENT {
        0.0
    } else {
        (-e).exp()
    }
}

#[inline]
pub(crate) fn k(z: f64, t: f64) -> f64 {
    INV_TWO_SQRT_PI / t.sqrt() * gaussian(z, t)
}

#[inline]
pub(crate) fn k_z(z: f64, t: f64) -> f64 {
    -z / (2.0 * t) * k(z, t)
}

#[inline]
pub(crate) fn k_t(z: f64, t: f64) -> f64 {
    (z * z / (4.0 * t * t) - 0.5 / t) * k(z, t)
}

#[inline]
pub(crate) fn half_erfc(x: f64) -> f64 {
    0.5 * libm::erfc(x)
}

/// Heat kernel `K(z, t)`.
pub fn eval_k(z: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(k(z, t))
}

/// `dK/dz = -z/(2t) K`.
pub fn eval_k_z(z: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(k_z(z, t))
}

/// `dK/dt = (z^2/(4t^2) - 1/(2t)) K`, equal to `d^2K/dz^2`.
pub fn eval_k_t(z: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(k_t(z, t))
}

/// Mass of the kernel to the left of `a`: `int_{-inf}^{a} K(z - xi, t) dxi`
/// `= erfc((z - a) / (2 sqrt t)) / 2`.
pub fn layer_mass(a: f64, z: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(half_erfc((z - a) / (2.0 * t.sqrt())))
}

/// Mass of `K(z - xi, t)` for `xi` in `[lo, hi]`, evaluated in the tail that
/// avoids cancellation between two values of erfc close to 2.
#[inline]
pub(crate) fn segment_mass(lo: f64, hi: f64, z: f64, t: f64) -> f64 {
    let scale = 0.5 / t.sqrt();
    let x_lo = (z - lo) * scale;
    let x_hi = (z - hi) * scale;
    if x_hi >= 0.0 {
        half_erfc(x_hi) - half_erfc(x_lo)
    } else if x_lo <= 0.0 {
        half_erfc(-x_lo) - half_erfc(-x_hi)
    } else {
        1.0 - half_erfc(x_lo) - half_erfc(-x_hi)
    }
}

/// Product-integration weights for `int_0^T f(tau) (T - tau)^(-1/2) dtau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularWeightRow {
    pub t_grid: Vec<f64>,
    pub target_t: f64,
    pub weights: Vec<f64>,
}

impl SingularWeightRow {
    /// Applies the weights to samples of `f` on `t_grid`.
    pub fn apply(&self, samples: &[f64]) -> f64 {
        self.weights.iter().zip(samples).map(|(w, f)| w * f).sum()
    }
}

/// Weights exact for every `f` that is piecewise linear on `t_grid`.
///
/// `target_t` must be a node of the grid; nodes after it get weight zero.
pub fn abel_row(t_grid: &[f64], target_t: f64) -> Result<SingularWeightRow> {
    if t_grid.first() != Some(&0.0) {
        return Err(StefanError::usage("abel_row: time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StefanError::usage("abel_row: time grid must be strictly increasing"));
    }
    let n = t_grid
        .iter()
        .position(|&t| t == target_t)
        .ok_or_else(|| StefanError::usage(format!("abel_row: target {target_t} is not a grid node")))?;
    let mut weights = vec![0.0; t_grid.len()];
    accumulate_abel_weights(&t_grid[..=n], &mut weights[..=n]);
    Ok(SingularWeightRow {
        t_grid: t_grid.to_vec(),
        target_t,
        weights,
    })
}

/// Writes the weights for target `grid[last]` into `out` (same length as `grid`).
///
/// On a cell `[tau_j, tau_j+1]` with `a = T - tau_j+1`, `b = T - tau_j` the hat
/// moments reduce to `(2/3) d^2 (sqrt b + 2 sqrt a) / h` and
/// `(2/3) d^2 (2 sqrt b + sqrt a) / h` with `d = sqrt b - sqrt a`, which stay
/// accurate for cells far from the singular end.
pub(crate) fn accumulate_abel_weights(grid: &[f64], out: &mut [f64]) {
    debug_assert_eq!(grid.len(), out.len());
    out.iter_mut().for_each(|w| *w = 0.0);
    let n = grid.len() - 1;
    let target = grid[n];
    for j in 0..n {
        let h = grid[j + 1] - grid[j];
        let sa = (target - grid[j + 1]).sqrt();
        let sb = (target - grid[j]).sqrt();
        let d = h / (sa + sb);
        let c = 2.0 / 3.0 * d * d / h;
        out[j] += c * (sb + 2.0 * sa);
        out[j + 1] += c * (2.0 * sb + sa);
    }
}

/// `int_0^T (T - tau)^(-1/2) dtau`.
pub fn abel_constant_integral(target_t: f64) -> f64 {
    2.0 * target_t.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_reference_values() {
        assert_relative_eq!(eval_k(0.0, 1.0).unwrap(), 0.282_094_791_773_878_1, max_relative = 1e-15);
        assert_relative_eq!(eval_k(2.0, 1.0).unwrap(), 0.103_776_874_355_148_68, max_relative = 1e-14);
        assert_relative_eq!(eval_k(1.0, 0.25).unwrap(), 0.207_553_748_710_297_35, max_relative = 1e-14);
        assert_relative_eq!(eval_k_z(1.0, 1.0).unwrap(), -0.109_847_822_366_930_6, max_relative = 1e-14);
        assert_relative_eq!(eval_k_z(-1.0, 1.0).unwrap(), 0.109_847_822_366_930_6, max_relative = 1e-14);
        assert_eq!(eval_k_z(0.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(eval_k_t(0.0, 1.0).unwrap(), -0.141_047_395_886_939_07, max_relative = 1e-14);
        assert_eq!(eval_k_t(2.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_time_is_rejected() {
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(eval_k(0.0, t), Err(StefanError::Domain(_))));
            assert!(eval_k_z(0.0, t).is_err());
            assert!(eval_k_t(0.0, t).is_err());
            assert!(layer_mass(0.0, 0.0, t).is_err());
        }
    }

    #[test]
    fn far_tail_is_exact_zero() {
        assert_eq!(eval_k(100.0, 1e-3).unwrap(), 0.0);
        assert_eq!(eval_k_t(100.0, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn layer_mass_values() {
        assert_eq!(layer_mass(f64::INFINITY, 0.3, 0.2).unwrap(), 1.0);
        assert_eq!(layer_mass(1.7, 1.7, 0.2).unwrap(), 0.5);
        assert_relative_eq!(layer_mass(0.0, 1.0, 0.25).unwrap(), 0.078_649_603_525_142_57, max_relative = 1e-14);
    }

    #[test]
    fn segment_mass_matches_difference_of_layer_masses() {
        for &(lo, hi, z, t) in &[(-3.0, -1.0, 0.0, 0.5), (-1.0, 2.0, 0.0, 0.1), (1.0, 1.5, 0.0, 0.3)] {
            let expect = layer_mass(hi, z, t).unwrap() - layer_mass(lo, z, t).unwrap();
            assert_relative_eq!(segment_mass(lo, hi, z, t), expect, max_relative = 1e-13);
        }
    }

    #[test]
    fn abel_weights_reproduce_constant_and_linear() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let row = abel_row(&grid, grid[10]).unwrap();
        let ones = vec![1.0; grid.len()];
        assert_relative_eq!(row.apply(&ones), 2.0 * grid[10].sqrt(), max_relative = 1e-12);
        assert_relative_eq!(row.apply(&grid), 4.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn abel_single_interval() {
        let t = 0.37;
        let row = abel_row(&[0.0, t], t).unwrap();
        let f = |tau: f64| 2.0 - 3.0 * tau;
        // int_0^T (2 - 3 tau)(T - tau)^(-1/2) = 4 sqrt T - 3 * (4/3) T^(3/2)
        let exact = 4.0 * t.sqrt() - 4.0 * t.powf(1.5);
        assert_relative_eq!(row.apply(&[f(0.0), f(t)]), exact, max_relative = 1e-12);
    }

    #[test]
    fn abel_target_off_grid_is_usage_error() {
        assert!(matches!(abel_row(&[0.0, 0.5, 1.0], 0.7), Err(StefanError::Usage(_))));
        assert!(abel_row(&[0.1, 0.5], 0.5).is_err());
    }

    #[test]
    fn abel_weights_after_target_are_zero() {
        let grid = [0.0, 0.2, 0.5, 0.9];
        let row = abel_row(&grid, 0.5).unwrap();
        assert_eq!(row.weights.len(), 4);
        assert_eq!(row.weights[3], 0.0);
        assert_relative_eq!(row.apply(&[1.0; 4]), 2.0 * 0.5f64.sqrt(), max_relative = 1e-13);
    }
}
