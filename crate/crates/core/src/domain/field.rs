use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::{Grid, Point};
use crate::error::{Error, Result};

/// One finite real value per grid node.
///
/// Infinite data never live in a field; they are approached through
/// truncation constants instead.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n])
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.coord(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.map(|v| s * v)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dual-cell quadrature of the field over the box.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.volume(i) * v)
            .sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.volume(i) * v.abs())
            .sum()
    }

    /// Values at the nodes of another field's grid must match node-for-node.
    pub fn difference(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(self.grid.clone(), values)
    }
}

/// Exponent, regularisation and dimension of the regularised p-Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    pub p: f64,
    pub eps: f64,
    pub n: usize,
}

impl MediumParams {
    /// Slow-diffusion medium: requires `p > 2`.
    pub fn new(p: f64, eps: f64, n: usize) -> Result<Self> {
        if !(p > 2.0) || !p.is_finite() {
            return Err(Error::param(format!(
                "requires p > 2 (slow-diffusion regime), got p = {p}"
            )));
        }
        Self::checked(p, eps, n)
    }

    /// Relaxed constructor for elliptic p-harmonic solves, which accept any
    /// `p > 1` (a positive `eps` is required below `p = 2`).
    pub fn p_harmonic(p: f64, eps: f64, n: usize) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::param(format!("p-harmonic solves need p > 1, got {p}")));
        }
        if p < 2.0 && eps <= 0.0 {
            return Err(Error::param("p < 2 requires eps > 0"));
        }
        Self::checked(p, eps, n)
    }

    /// Regularisation `1e-8 * data_scale / h`.
    pub fn with_default_eps(p: f64, n: usize, data_scale: f64, h: f64) -> Result<Self> {
        Self::new(p, default_eps(data_scale, h), n)
    }

    fn checked(p: f64, eps: f64, n: usize) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::param(format!("eps must be >= 0, got {eps}")));
        }
        if !(1..=2).contains(&n) {
            return Err(Error::param(format!("dimension must be 1 or 2, got {n}")));
        }
        Ok(Self { p, eps, n })
    }

    /// Time exponent `1/(p-2)` of the separable solution.
    pub fn separable_exponent(&self) -> f64 {
        1.0 / (self.p - 2.0)
    }
}

pub fn default_eps(data_scale: f64, h: f64) -> f64 {
    1e-8 * data_scale.abs() / h
}
