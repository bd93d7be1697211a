//! Uniform symmetric grid on the truncated domain `[-R, R]` and the
//! grid-sampled probability densities that live on it.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    radius: f64,
    dx: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    /// `n` nodes `x_i = -R + i dx`, `dx = 2R / (n - 1)`.
    ///
    /// Nodes are mirrored so that `x_i = -x_{n-1-i}` holds bit-for-bit and the
    /// end points are exactly `-R` and `R`.
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n < 5 || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGrid { n, radius });
        }
        let dx = 2.0 * radius / (n - 1) as f64;
        let mut nodes = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let x = -radius + i as f64 * dx;
            nodes[i] = x;
            nodes[n - 1 - i] = -x;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { radius, dx, nodes })
    }

    pub fn shared(n: usize, radius: f64) -> Result<Arc<Self>> {
        Self::new(n, radius).map(Arc::new)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Same node count and radius.
    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.len() == other.len() && self.radius == other.radius
    }
}

/// Nonnegative density sampled on a grid with unit trapezoidal mass.
///
/// Only [`crate::quadrature::normalize`] constructs one, which is where the
/// mass and sign invariants are enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Arc<Grid1D>,
    values: Vec<f64>,
}

impl DensityField {
    pub(crate) fn from_normalized(grid: Arc<Grid1D>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid1D> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DensityField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
