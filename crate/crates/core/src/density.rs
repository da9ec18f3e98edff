//! Stationary firm distribution for a solved value function.
//!
//! The zero-flux Fokker-Planck problem integrates once to
//! `m'/m = (2/sigma^2) (k + labour_drift(V'))`, so the density is an
//! exponential of a running integral. Everything is computed in shifted log
//! space and normalised with the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::ValueFunction;
use crate::model::{labour_drift, Grid, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub k: f64,
    /// `ln ||m_bar||_1` of the unnormalised exponential.
    pub log_norm_constant: f64,
}

impl Density {
    pub fn norm_constant(&self) -> f64 {
        self.log_norm_constant.exp()
    }

    /// Trapezoid mass; 1 up to rounding for every constructed density.
    pub fn mass(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.grid.cumulative_trapezoid(&self.values)
    }

    /// Normalise arbitrary positive nodal weights into a density.
    pub fn from_unnormalized(grid: Grid, weights: Vec<f64>, k: f64) -> Result<Density> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: weights.len() });
        }
        let mass = grid.trapezoid(&weights);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::validation("density", format!("mass must be positive and finite, got {mass}")));
        }
        let values = weights.iter().map(|w| w / mass).collect();
        Ok(Density { grid, values, k, log_norm_constant: mass.ln() })
    }

    /// Uniform density `1 / z_max`.
    pub fn uniform(grid: Grid) -> Density {
        let n = grid.len();
        let z = grid.z_max();
        Density { grid, values: vec![1.0 / z; n], k: 0.0, log_norm_constant: z.ln() }
    }
}

/// Running exponent `(2/sigma^2)(k z + int_0^z labour_drift(max(0, V')))`.
pub fn log_density_exponent(vf: &ValueFunction, params: &ModelParams) -> Vec<f64> {
    let grid = &vf.grid;
    let g: Vec<f64> = vf.derivative.iter().map(|&d| labour_drift(d.max(0.0), params)).collect();
    let integral = grid.cumulative_trapezoid(&g);
    let scale = 2.0 / params.sigma().powi(2);
    grid.nodes()
        .iter()
        .zip(&integral)
        .map(|(z, int)| scale * (vf.k * z + int))
        .collect()
}

pub fn density_from_value(vf: &ValueFunction, params: &ModelParams) -> Result<Density> {
    if !(vf.k >= 0.0) {
        return Err(Error::invalid("k", format!("coupling must be >= 0, got {}", vf.k)));
    }
    let exponent = log_density_exponent(vf, params);
    let top = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = exponent.iter().map(|e| (e - top).exp()).collect();
    let grid = vf.grid.clone();
    let mass = grid.trapezoid(&shifted);
    let values = shifted.iter().map(|w| w / mass).collect();
    Ok(Density { grid, values, k: vf.k, log_norm_constant: mass.ln() + top })
}

/// Discrete 1-norm of the stationary Fokker-Planck residual of `m` under the
/// drift implied by `vf`: `dz * sum |interior residual|` plus the absolute
/// zero-flux residuals `-(sigma^2/2) m' + k m` at both ends.
pub fn fp_residual(m: &Density, vf: &ValueFunction, params: &ModelParams) -> Result<f64> {
    let grid = &m.grid;
    if vf.values.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: vf.values.len() });
    }
    let n = grid.len();
    if n < 3 {
        return Err(Error::invalid("n_points", "need at least 3 nodes"));
    }
    let h = grid.spacing();
    let half_var = 0.5 * params.sigma().powi(2);
    let b: Vec<f64> = vf.derivative.iter().map(|&d| labour_drift(d, params) + vf.k).collect();
    let mv = &m.values;

    let mut interior = 0.0;
    for i in 1..n - 1 {
        let second = (mv[i + 1] - 2.0 * mv[i] + mv[i - 1]) / (h * h);
        let flux = (b[i + 1] * mv[i + 1] - b[i - 1] * mv[i - 1]) / (2.0 * h);
        interior += (-half_var * second + flux).abs();
    }
    let d0 = (-3.0 * mv[0] + 4.0 * mv[1] - mv[2]) / (2.0 * h);
    let dn = (3.0 * mv[n - 1] - 4.0 * mv[n - 2] + mv[n - 3]) / (2.0 * h);
    let left = (-half_var * d0 + vf.k * mv[0]).abs();
    let right = (-half_var * dn + vf.k * mv[n - 1]).abs();
    Ok(h * interior + left + right)
}

/// `int z m(z) dz`.
pub fn mean_productivity(m: &Density) -> f64 {
    let f: Vec<f64> = m.grid.nodes().iter().zip(&m.values).map(|(z, v)| z * v).collect();
    m.grid.trapezoid(&f)
}

/// `int z^alpha m(z) dz`, integrating `z^alpha` exactly against the piecewise
/// linear interpolant of `m`. Plain trapezoid sampling of `z^alpha` is only
/// `O(h^(1+alpha))` accurate because of the kink at zero.
pub fn moment_alpha(m: &Density, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let z = m.grid.nodes();
    let h = m.grid.spacing();
    let (p1, p2) = (alpha + 1.0, alpha + 2.0);
    let total = (0..z.len() - 1)
        .map(|i| {
            let (a, b) = (z[i], z[i + 1]);
            let i0 = (b.powf(p1) - a.powf(p1)) / p1;
            let i1 = (b.powf(p2) - a.powf(p2)) / p2;
            let slope = (m.values[i + 1] - m.values[i]) / h;
            m.values[i] * i0 + slope * (i1 - a * i0)
        })
        .sum();
    Ok(total)
}

/// Pointwise bound from the exponential form: `m in [1/(C z_max), C/z_max]`
/// with `C = exp((2/sigma^2)(k z_max + z_max sup labour_drift))`.
pub fn density_bound_constant(vf: &ValueFunction, params: &ModelParams) -> f64 {
    let sup = vf.derivative.iter().map(|&d| labour_drift(d, params)).fold(0.0, f64::max);
    let z = vf.grid.z_max();
    (2.0 / params.sigma().powi(2) * (vf.k * z + z * sup)).exp()
}
