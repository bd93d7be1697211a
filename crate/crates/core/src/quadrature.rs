//! Trapezoidal quadrature on a [`Grid1D`]: integration, normalization,
//! moment extraction and piecewise-linear interpolation. All of these are
//! second-order accurate in `dx`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid1D};

/// Normalization fails below this trapezoidal mass.
pub const MASS_FLOOR: f64 = 1e-12;
/// Variances are floored here by [`moments`].
pub const VAR_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub mean: f64,
    pub var: f64,
}

impl MomentPair {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !var.is_finite() {
            return Err(Error::NonFinite("moment pair"));
        }
        if var < 0.0 {
            return Err(Error::InvalidParameter {
                name: "var",
                value: var,
                reason: "must be nonnegative",
            });
        }
        Ok(Self { mean, var })
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// `dx (v_0/2 + v_1 + ... + v_{n-2} + v_{n-1}/2)`.
///
/// Mirrored nodes are summed in pairs, so odd integrands on the symmetric grid
/// integrate to exactly zero.
pub fn trapezoid(values: &[f64], grid: &Grid1D) -> f64 {
    assert_eq!(
        values.len(),
        grid.len(),
        "values must be sampled on the grid"
    );
    paired_sum(values.len(), |i| values[i]) * grid.dx()
}

/// Trapezoid of `f(x_i) * v_i`.
pub fn trapezoid_weighted(values: &[f64], grid: &Grid1D, f: impl Fn(f64) -> f64) -> f64 {
    assert_eq!(values.len(), grid.len());
    let x = grid.nodes();
    paired_sum(values.len(), |i| f(x[i]) * values[i]) * grid.dx()
}

fn paired_sum(n: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut s = 0.5 * (term(0) + term(n - 1));
    for i in 1..n / 2 {
        s += term(i) + term(n - 1 - i);
    }
    if n % 2 == 1 {
        s += term(n / 2);
    }
    s
}

/// Divide by the trapezoidal mass.
pub fn normalize(mut values: Vec<f64>, grid: &Arc<Grid1D>) -> Result<DensityField> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch(values.len(), grid.len()));
    }
    if let Some(&bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::NegativeInput(bad));
    }
    let mass = trapezoid(&values, grid);
    if !(mass >= MASS_FLOOR) {
        return Err(Error::DegenerateMass {
            mass,
            floor: MASS_FLOOR,
        });
    }
    let inv = 1.0 / mass;
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(DensityField::from_normalized(grid.clone(), values))
}

pub fn mass(p: &DensityField) -> f64 {
    trapezoid(p.values(), p.grid())
}

/// Mean and variance by the trapezoid rule.
pub fn moments(p: &DensityField) -> MomentPair {
    moments_flagged(p).0
}

/// As [`moments`], also reporting whether the variance hit [`VAR_FLOOR`].
pub fn moments_flagged(p: &DensityField) -> (MomentPair, bool) {
    let grid = p.grid();
    let mean = trapezoid_weighted(p.values(), grid, |x| x);
    let var = trapezoid_weighted(p.values(), grid, |x| (x - mean) * (x - mean));
    let floored = !(var >= VAR_FLOOR);
    let var = if floored { VAR_FLOOR } else { var };
    (MomentPair { mean, var }, floored)
}

/// Piecewise-linear interpolation; exactly zero outside `[-R, R]`.
pub fn interpolate(p: &DensityField, x: f64) -> f64 {
    let grid = p.grid();
    let r = grid.radius();
    if !(x.abs() <= r) {
        return 0.0;
    }
    let nodes = grid.nodes();
    let v = p.values();
    let n = nodes.len();
    let mut i = (((x + r) / grid.dx()).floor() as usize).min(n - 2);
    // Guard the floor against rounding so node hits are exact.
    if x < nodes[i] {
        i -= 1;
    } else if i + 2 < n && x >= nodes[i + 1] {
        i += 1;
    }
    let w = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
    if w == 0.0 {
        return v[i];
    }
    (1.0 - w) * v[i] + w * v[i + 1]
}
