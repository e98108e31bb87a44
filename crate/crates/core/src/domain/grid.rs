use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates of a node. Unused trailing components are zero.
pub type Point = [f64; 2];

/// Uniform rectilinear grid on an axis-aligned box in one or two dimensions.
///
/// Nodes are numbered with the first axis varying fastest. Node coordinates
/// are always computed as `lo + i * h`, so they are reproducible bit-for-bit
/// from the stored `(lo, cells, h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
    h: Vec<f64>,
}

impl Grid {
    /// `cells` is the node count per axis (including both end nodes).
    pub fn build(dim: usize, lo: &[f64], hi: &[f64], cells: &[usize]) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not supported (1 or 2)")));
        }
        if lo.len() != dim || hi.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} entries for lo/hi/cells, got {}/{}/{}",
                lo.len(),
                hi.len(),
                cells.len()
            )));
        }
        let mut h = Vec::with_capacity(dim);
        for d in 0..dim {
            if !(lo[d].is_finite() && hi[d].is_finite()) || lo[d] >= hi[d] {
                return Err(Error::InvalidGrid(format!(
                    "degenerate box along axis {d}: lo = {}, hi = {}",
                    lo[d], hi[d]
                )));
            }
            if cells[d] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 3 nodes along axis {d}, got {}",
                    cells[d]
                )));
            }
            h.push((hi[d] - lo[d]) / (cells[d] - 1) as f64);
        }
        Ok(Self {
            dim,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            cells: cells.to_vec(),
            h,
        })
    }

    /// Interval `[lo, hi]` with spacing as close to `h` as the node count allows.
    pub fn interval_with_spacing(lo: f64, hi: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let cells = ((hi - lo) / h).round() as usize + 1;
        Self::build(1, &[lo], &[hi], &[cells])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer position of a node.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx % self.cells[0], idx / self.cells[0]],
        }
    }

    pub fn linear_index(&self, mi: [usize; 2]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] + self.cells[0] * mi[1],
        }
    }

    pub fn coord(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let mut p = [0.0; 2];
        for d in 0..self.dim {
            p[d] = self.lo[d] + mi[d] as f64 * self.h[d];
        }
        p
    }

    /// Nearest node to an arbitrary point (clamped to the box).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut mi = [0usize; 2];
        for d in 0..self.dim {
            let s = ((x[d] - self.lo[d]) / self.h[d]).round();
            mi[d] = s.clamp(0.0, (self.cells[d] - 1) as f64) as usize;
        }
        self.linear_index(mi)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|d| x[d] >= self.lo[d] && x[d] <= self.hi[d])
    }

    /// Strictly inside the box (not on the boundary).
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|d| x[d] > self.lo[d] && x[d] < self.hi[d])
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|d| mi[d] == 0 || mi[d] + 1 == self.cells[d])
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    /// Dual-cell volume of a node: `prod h_d`, halved along every axis on
    /// which the node sits on the boundary.
    pub fn volume(&self, idx: usize) -> f64 {
        let mi = self.multi_index(idx);
        (0..self.dim)
            .map(|d| {
                let edge = mi[d] == 0 || mi[d] + 1 == self.cells[d];
                if edge {
                    0.5 * self.h[d]
                } else {
                    self.h[d]
                }
            })
            .product()
    }

    /// Neighbour of `idx` offset by `step` along axis `d`, if it exists.
    pub fn neighbor(&self, idx: usize, d: usize, step: isize) -> Option<usize> {
        let mut mi = self.multi_index(idx);
        let moved = mi[d] as isize + step;
        if moved < 0 || moved >= self.cells[d] as isize {
            return None;
        }
        mi[d] = moved as usize;
        Some(self.linear_index(mi))
    }
}
