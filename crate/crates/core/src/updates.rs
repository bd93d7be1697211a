//! Observation-time updates of grid densities: exact Bayes, the mean-field
//! EnKF map (affine change of variables followed by Gaussian convolution),
//! and the two Gaussian-projection variants.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid1D};
use crate::quadrature::{interpolate, moments, normalize, MomentPair, VAR_FLOOR};
use crate::sde::ObsModel;

/// Gaussian mass allowed outside `[-R, R]` by [`gaussian_projection`].
pub const OUTSIDE_MASS_LIMIT: f64 = 1e-3;
/// Half-width of the convolution kernel support in standard deviations.
const KERNEL_SDS: f64 = 8.0;

/// Unnormalized `exp(-(y - H u)^2 / (2 gamma))`.
pub fn likelihood(u: f64, y: f64, obs: &ObsModel) -> f64 {
    let r = y - obs.coeff() * u;
    (-r * r / (2.0 * obs.gamma())).exp()
}

/// Prior times likelihood, renormalized.
pub fn bayes_update(p: &DensityField, y: f64, obs: &ObsModel) -> Result<DensityField> {
    let grid = p.grid();
    // Scale the likelihood so its largest value over the support is 1; the
    // constant cancels in the normalization and keeps far-off observations
    // from underflowing when prior and likelihood still overlap.
    let residual = |x: f64| {
        let r = y - obs.coeff() * x;
        r * r
    };
    let shift = grid
        .nodes()
        .iter()
        .zip(p.values())
        .filter(|(_, v)| **v > 0.0)
        .map(|(x, _)| residual(*x))
        .fold(f64::INFINITY, f64::min);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let two_gamma = 2.0 * obs.gamma();
    let post = grid
        .nodes()
        .iter()
        .zip(p.values())
        .map(|(x, v)| {
            if *v > 0.0 {
                v * (-(residual(*x) - shift) / two_gamma).exp()
            } else {
                0.0
            }
        })
        .collect();
    normalize(post, grid)
}

/// Kalman gain `K` and innovation variance `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub k: f64,
    pub s: f64,
}

impl GainPair {
    /// `1 - K H`, the contraction applied to the forecast.
    pub fn contraction(&self, obs: &ObsModel) -> f64 {
        1.0 - self.k * obs.coeff()
    }
}

pub fn kalman_gain(hat: &MomentPair, obs: &ObsModel) -> GainPair {
    let h = obs.coeff();
    let s = h * h * hat.var + obs.gamma();
    GainPair {
        k: hat.var * h / s,
        s,
    }
}

pub fn kalman_moment_update(hat: &MomentPair, y: f64, obs: &ObsModel) -> MomentPair {
    let g = kalman_gain(hat, obs);
    MomentPair {
        mean: hat.mean + g.k * (y - obs.coeff() * hat.mean),
        var: g.contraction(obs) * hat.var,
    }
}

/// Discretized `N(mean, var)` on `grid`, renormalized.
pub fn gaussian_projection(mom: &MomentPair, grid: &Arc<Grid1D>) -> Result<DensityField> {
    if !(mom.var >= VAR_FLOOR) {
        return Err(Error::VarianceBelowFloor {
            var: mom.var,
            floor: VAR_FLOOR,
        });
    }
    let sd = mom.std();
    let r = grid.radius();
    let scale = sd * std::f64::consts::SQRT_2;
    let outside_mass =
        0.5 * (libm::erfc((r + mom.mean) / scale) + libm::erfc((r - mom.mean) / scale));
    if outside_mass > OUTSIDE_MASS_LIMIT {
        return Err(Error::DomainTooSmall { outside_mass });
    }
    let values = grid
        .nodes()
        .iter()
        .map(|x| {
            let z = (x - mom.mean) / sd;
            (-0.5 * z * z).exp()
        })
        .collect();
    normalize(values, grid)
}

/// How the DMFEnKF convolution integral is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvolutionRule {
    /// Trapezoid sum against the point-sampled kernel; second order.
    TrapezoidDirect,
    /// Kernel mass binned over `[k dx, (k+1) dx)` and applied by FFT, a
    /// Riemann sum of first order.
    FftRiemann,
}

impl ConvolutionRule {
    pub fn label(self) -> &'static str {
        match self {
            ConvolutionRule::TrapezoidDirect => "trapezoid_direct",
            ConvolutionRule::FftRiemann => "fft_riemann",
        }
    }
}

/// Mean-field EnKF update of a density:
/// `v = (1 - KH) v_hat + K (y + eta)` pushed forward to densities.
pub fn dmfenkf_update(
    p: &DensityField,
    y: f64,
    obs: &ObsModel,
    rule: ConvolutionRule,
) -> Result<DensityField> {
    let hat = moments(p);
    if !(hat.var >= VAR_FLOOR) {
        return Err(Error::VarianceBelowFloor {
            var: hat.var,
            floor: VAR_FLOOR,
        });
    }
    let gain = kalman_gain(&hat, obs);
    let c = gain.contraction(obs);
    if !(c > 0.0) {
        return Err(Error::NonContractive(c));
    }

    // Change of variables; nodes whose preimage leaves [-R, R] get 0.
    let grid = p.grid();
    let q: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|x| interpolate(p, x / c) / c)
        .collect();

    if gain.k.abs() < VAR_FLOOR / obs.gamma() {
        return normalize(q, grid);
    }

    let mu = gain.k * y;
    let sd = gain.k.abs() * obs.gamma().sqrt();
    let dx = grid.dx();
    let kmin = ((mu - KERNEL_SDS * sd) / dx).floor() as i64;
    let kmax = ((mu + KERNEL_SDS * sd) / dx).ceil() as i64;
    let out = match rule {
        ConvolutionRule::TrapezoidDirect => {
            let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let kernel: Vec<f64> = (kmin..=kmax)
                .map(|k| {
                    let z = (k as f64 * dx - mu) / sd;
                    norm * (-0.5 * z * z).exp()
                })
                .collect();
            convolve_direct(&q, &kernel, kmin, dx)
        }
        ConvolutionRule::FftRiemann => {
            let cdf = |x: f64| 0.5 * libm::erfc(-(x - mu) / (sd * std::f64::consts::SQRT_2));
            let kernel: Vec<f64> = (kmin..=kmax)
                .map(|k| (cdf((k + 1) as f64 * dx) - cdf(k as f64 * dx)) / dx)
                .collect();
            convolve_fft(&q, &kernel, kmin, dx)
        }
    };
    normalize(out.into_iter().map(|v| v.max(0.0)).collect(), grid)
}

/// `out_i = dx * sum_k kernel[k - kmin] q_{i-k}`, with `q` zero off-grid.
fn convolve_direct(q: &[f64], kernel: &[f64], kmin: i64, dx: f64) -> Vec<f64> {
    let n = q.len() as i64;
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (off, g) in kernel.iter().enumerate() {
                let j = i - (kmin + off as i64);
                if (0..n).contains(&j) {
                    s += g * q[j as usize];
                }
            }
            dx * s
        })
        .collect()
}

fn convolve_fft(q: &[f64], kernel: &[f64], kmin: i64, dx: f64) -> Vec<f64> {
    let len = (q.len() + kernel.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let pad = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (b, x) in buf.iter_mut().zip(v) {
            b.re = *x;
        }
        buf
    };
    let mut a = pad(q);
    let mut b = pad(kernel);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = dx / len as f64;
    // Full convolution index t = i - kmin.
    (0..q.len() as i64)
        .map(|i| {
            let t = i - kmin;
            if (0..len as i64).contains(&t) && (t as usize) < q.len() + kernel.len() - 1 {
                a[t as usize].re * scale
            } else {
                0.0
            }
        })
        .collect()
}

/// Exact Bayes update, then projection onto the Gaussian with its moments.
pub fn g1_update(p: &DensityField, y: f64, obs: &ObsModel) -> Result<DensityField> {
    let post = bayes_update(p, y, obs)?;
    gaussian_projection(&moments(&post), post.grid())
}

/// Kalman update of the forecast moments, then a Gaussian with those moments.
pub fn g2_update(p: &DensityField, y: f64, obs: &ObsModel) -> Result<DensityField> {
    let post = kalman_moment_update(&moments(p), y, obs);
    gaussian_projection(&post, p.grid())
}
