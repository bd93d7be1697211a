//! Central flux-form discretization of `d rho/dt = (b rho' - F rho)'` on a
//! [`Grid1D`] with zero Dirichlet boundaries, and its exact semigroup
//! `exp(h L)` over one observation window.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::grid::{DensityField, Grid1D};
use crate::quadrature::{normalize, trapezoid};
use crate::sde::SdeModel;

/// Default bound on the cell Péclet number `|F| dx / (2b)`.
pub const PECLET_BOUND: f64 = 1.0;
/// Raw propagated values below `-NEGATIVITY_TOL * max p` are an error.
pub const NEGATIVITY_TOL: f64 = 1e-10;
/// Entries of `P` below this fraction of `max |P|` are dropped from the
/// banded action used by [`propagate`].
const TRIM: f64 = 1e-18;

/// Tridiagonal generator `L`; rows and columns of the two boundary nodes are
/// zero so boundary values are pinned at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    model: SdeModel,
    grid: Arc<Grid1D>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn model(&self) -> &SdeModel {
        &self.model
    }

    pub fn grid(&self) -> &Arc<Grid1D> {
        &self.grid
    }

    /// `L[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[i]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        assert_eq!(p.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * p[i];
                if i > 0 {
                    s += self.lower[i] * p[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * p[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j];
                if j > 0 {
                    s += self.upper[j - 1];
                }
                if j + 1 < n {
                    s += self.lower[j + 1];
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn build_generator(model: &SdeModel, grid: &Arc<Grid1D>) -> Result<GeneratorMatrix> {
    build_generator_with_bound(model, grid, PECLET_BOUND)
}

pub fn build_generator_with_bound(
    model: &SdeModel,
    grid: &Arc<Grid1D>,
    peclet_bound: f64,
) -> Result<GeneratorMatrix> {
    let n = grid.len();
    let dx = grid.dx();
    let b = model.b();
    let f: Vec<f64> = grid.nodes().iter().map(|&x| model.drift(x)).collect();
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("drift on grid"));
    }
    let peclet = f.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * dx / (2.0 * b);
    if peclet > peclet_bound {
        return Err(Error::UnderResolved {
            peclet,
            bound: peclet_bound,
        });
    }

    let diff = b / (dx * dx);
    let adv = 1.0 / (2.0 * dx);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        diag[i] = -2.0 * diff;
        if i > 1 {
            lower[i] = diff + adv * f[i - 1];
        }
        if i < n - 2 {
            upper[i] = diff - adv * f[i + 1];
        }
    }
    Ok(GeneratorMatrix {
        model: *model,
        grid: grid.clone(),
        lower,
        diag,
        upper,
    })
}

/// `P = exp(h L)`, stored densely and as trimmed rows for fast application.
#[derive(Debug, Clone)]
pub struct Propagator {
    h: f64,
    grid: Arc<Grid1D>,
    dense: DMatrix<f64>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Propagator {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &Arc<Grid1D> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// `P p` using the trimmed rows.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(start, row)| row.iter().zip(&p[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Stored entries per row, averaged.
    pub fn mean_bandwidth(&self) -> f64 {
        self.rows.iter().map(|(_, r)| r.len()).sum::<usize>() as f64 / self.rows.len() as f64
    }
}

pub fn build_propagator(l: &GeneratorMatrix, h: f64) -> Result<Propagator> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter {
            name: "h",
            value: h,
            reason: "must be positive and finite",
        });
    }
    let n = l.diag.len();
    let mut dense = expm(&(l.to_dense() * h))?;
    // Boundary rows of L vanish, so exp leaves identity rows there; pin the
    // boundary values to zero instead.
    dense[(0, 0)] = 0.0;
    dense[(n - 1, n - 1)] = 0.0;

    let cutoff = TRIM * dense.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let rows = (0..n)
        .map(|i| {
            let row = dense.row(i);
            let first = (0..n).find(|&j| row[j].abs() > cutoff);
            match first {
                None => (0, Vec::new()),
                Some(lo) => {
                    let hi = (0..n).rev().find(|&j| row[j].abs() > cutoff).unwrap();
                    (lo, (lo..=hi).map(|j| row[j]).collect())
                }
            }
        })
        .collect();
    Ok(Propagator {
        h,
        grid: l.grid.clone(),
        dense,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct Propagated {
    pub density: DensityField,
    /// `1 - mass(P p)` before renormalization.
    pub mass_deficit: f64,
}

/// One forecast window: `P p`, clipped at zero and renormalized.
pub fn propagate(p: &DensityField, prop: &Propagator) -> Result<Propagated> {
    if !p.grid().same_as(&prop.grid) {
        return Err(Error::GridMismatch);
    }
    let mut raw = prop.apply(p.values());
    let tol = NEGATIVITY_TOL * p.max_value();
    for v in raw.iter_mut() {
        if !v.is_finite() {
            return Err(Error::NonFinite("propagated density"));
        }
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::Negativity { value: *v, tol });
            }
            *v = 0.0;
        }
    }
    let mass = trapezoid(&raw, p.grid());
    if mass < 0.5 {
        return Err(Error::DomainEscape { mass });
    }
    Ok(Propagated {
        density: normalize(raw, p.grid())?,
        mass_deficit: 1.0 - mass,
    })
}
