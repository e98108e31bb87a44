//! Conservative node-centred discretisation of `div(|grad u|^{p-2} grad u)`.
//!
//! Every node owns a dual cell (halved along axes where the node sits on the
//! boundary). Fluxes live on the faces between axis neighbours: the normal
//! derivative is the plain difference across the face and, in 2D, the
//! tangential derivative is the average of the central differences at the
//! two adjacent nodes. No flux leaves through the outer boundary, so a node
//! that is left free on the boundary sees a zero-Neumann condition and
//! `sum(volume * divergence)` telescopes to zero.

use std::sync::Arc;

use crate::domain::{Grid, MediumParams};
use crate::linalg::CsrMatrix;

/// Diffusivity `(|grad u|^2 + eps^2)^{(p-2)/2}`.
pub fn flux_coefficient(grad_norm_sq: f64, params: &MediumParams) -> f64 {
    let s = grad_norm_sq + params.eps * params.eps;
    if params.p == 2.0 {
        return 1.0;
    }
    s.powf(0.5 * (params.p - 2.0))
}

#[derive(Clone, Debug)]
struct Face {
    left: usize,
    right: usize,
    inv_h: f64,
    area: f64,
    tangential: Vec<(usize, f64)>,
}

/// Maps grid nodes to unknown indices; `None` marks a node held fixed.
#[derive(Clone, Debug)]
pub struct UnknownMap {
    pos: Vec<Option<usize>>,
    nodes: Vec<usize>,
}

impl UnknownMap {
    pub fn new(node_count: usize, free: impl Fn(usize) -> bool) -> Self {
        let mut pos = vec![None; node_count];
        let mut nodes = Vec::new();
        for (i, slot) in pos.iter_mut().enumerate() {
            if free(i) {
                *slot = Some(nodes.len());
                nodes.push(i);
            }
        }
        Self { pos, nodes }
    }

    pub fn from_nodes(node_count: usize, free_nodes: &[usize]) -> Self {
        let mut mask = vec![false; node_count];
        for &i in free_nodes {
            mask[i] = true;
        }
        Self::new(node_count, |i| mask[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn index(&self, node: usize) -> Option<usize> {
        self.pos[node]
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&i| full[i]).collect()
    }

    pub fn scatter(&self, reduced: &[f64], full: &mut [f64]) {
        for (k, &i) in self.nodes.iter().enumerate() {
            full[i] = reduced[k];
        }
    }
}

/// Discrete regularised p-Laplacian on a fixed grid.
#[derive(Clone, Debug)]
pub struct PLaplacian {
    grid: Arc<Grid>,
    params: MediumParams,
    faces: Vec<Face>,
    inv_vol: Vec<f64>,
}

impl PLaplacian {
    pub fn new(grid: Arc<Grid>, params: MediumParams) -> Self {
        let dim = grid.dim();
        let mut faces = Vec::new();
        for left in 0..grid.len() {
            for d in 0..dim {
                let Some(right) = grid.neighbor(left, d, 1) else {
                    continue;
                };
                let mut area = 1.0;
                let mut tangential = Vec::new();
                for e in (0..dim).filter(|&e| e != d) {
                    let mi = grid.multi_index(left);
                    let on_edge = mi[e] == 0 || mi[e] + 1 == grid.cells()[e];
                    area *= if on_edge { 0.5 * grid.h()[e] } else { grid.h()[e] };
                    for node in [left, right] {
                        let plus = grid.neighbor(node, e, 1).unwrap_or(node);
                        let minus = grid.neighbor(node, e, -1).unwrap_or(node);
                        let span = grid.multi_index(plus)[e] - grid.multi_index(minus)[e];
                        let w = 0.5 / (span as f64 * grid.h()[e]);
                        tangential.push((plus, w));
                        tangential.push((minus, -w));
                    }
                }
                faces.push(Face {
                    left,
                    right,
                    inv_h: 1.0 / grid.h()[d],
                    area,
                    tangential,
                });
            }
        }
        let inv_vol = (0..grid.len()).map(|i| 1.0 / grid.volume(i)).collect();
        Self {
            grid,
            params,
            faces,
            inv_vol,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &MediumParams {
        &self.params
    }

    /// Returns `(flux, dF/dg_n, dF/dg_t)` on a face.
    fn face_flux(&self, face: &Face, u: &[f64]) -> (f64, f64, f64) {
        let gn = (u[face.right] - u[face.left]) * face.inv_h;
        let gt: f64 = face.tangential.iter().map(|&(k, w)| w * u[k]).sum();
        let s = gn * gn + gt * gt;
        let a = flux_coefficient(s, &self.params);
        let reg = s + self.params.eps * self.params.eps;
        // 2 a'(s) = (p - 2) a / (s + eps^2)
        let two_da = if reg > 0.0 {
            (self.params.p - 2.0) * a / reg
        } else {
            0.0
        };
        (a * gn, a + two_da * gn * gn, two_da * gn * gt)
    }

    /// Divergence of the flux at every node (dual-cell average).
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        let mut div = vec![0.0; u.len()];
        for face in &self.faces {
            let (f, _, _) = self.face_flux(face, u);
            div[face.left] += f * face.area;
            div[face.right] -= f * face.area;
        }
        for (d, iv) in div.iter_mut().zip(&self.inv_vol) {
            *d *= iv;
        }
        div
    }

    /// Per node, a bound on the terms that cancel in the divergence: face
    /// fluxes plus their sensitivity to rounding of the nodal values.
    pub fn flux_magnitude(&self, u: &[f64]) -> Vec<f64> {
        let mut mag = vec![0.0; u.len()];
        for face in &self.faces {
            let (f, d_gn, d_gt) = self.face_flux(face, u);
            let spread_n = (u[face.left].abs() + u[face.right].abs()) * face.inv_h;
            let spread_t: f64 = face.tangential.iter().map(|&(k, w)| (w * u[k]).abs()).sum();
            let f = (f.abs() + d_gn.abs() * spread_n + d_gt.abs() * spread_t) * face.area;
            mag[face.left] += f;
            mag[face.right] += f;
        }
        for (m, iv) in mag.iter_mut().zip(&self.inv_vol) {
            *m *= iv;
        }
        mag
    }

    /// `shift * I + factor * d(divergence)/du`, restricted to the unknowns.
    pub fn jacobian(&self, u: &[f64], map: &UnknownMap, factor: f64, shift: f64) -> CsrMatrix {
        let mut trip = Vec::with_capacity(map.len() * 9);
        for k in 0..map.len() {
            trip.push((k, k, shift));
        }
        for face in &self.faces {
            let (lr, rr) = (map.index(face.left), map.index(face.right));
            if lr.is_none() && rr.is_none() {
                continue;
            }
            let (_, d_gn, d_gt) = self.face_flux(face, u);
            let mut deriv: Vec<(usize, f64)> = vec![
                (face.right, d_gn * face.inv_h),
                (face.left, -d_gn * face.inv_h),
            ];
            if d_gt != 0.0 {
                deriv.extend(face.tangential.iter().map(|&(n, w)| (n, d_gt * w)));
            }
            for (row, sign, node) in [(lr, 1.0, face.left), (rr, -1.0, face.right)] {
                let Some(row) = row else { continue };
                let scale = factor * sign * face.area * self.inv_vol[node];
                for &(n, v) in &deriv {
                    if let Some(col) = map.index(n) {
                        trip.push((row, col, scale * v));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(map.len(), trip)
    }

    /// Frozen-diffusivity linearisation: `div(a(u) grad v) = A v + c` on the
    /// unknowns, with `c` collecting the fixed nodes. Returns
    /// `(shift * I + factor * A, factor * c)`.
    pub fn frozen(&self, u: &[f64], map: &UnknownMap, factor: f64, shift: f64) -> (CsrMatrix, Vec<f64>) {
        let mut trip = Vec::with_capacity(map.len() * 5);
        let mut fixed = vec![0.0; map.len()];
        for k in 0..map.len() {
            trip.push((k, k, shift));
        }
        for face in &self.faces {
            let (lr, rr) = (map.index(face.left), map.index(face.right));
            if lr.is_none() && rr.is_none() {
                continue;
            }
            let gn = (u[face.right] - u[face.left]) * face.inv_h;
            let gt: f64 = face.tangential.iter().map(|&(k, w)| w * u[k]).sum();
            let a = flux_coefficient(gn * gn + gt * gt, &self.params);
            let coeff = a * face.inv_h;
            for (row, sign, node) in [(lr, 1.0, face.left), (rr, -1.0, face.right)] {
                let Some(row) = row else { continue };
                let scale = factor * sign * face.area * self.inv_vol[node] * coeff;
                for (n, v) in [(face.right, scale), (face.left, -scale)] {
                    match map.index(n) {
                        Some(col) => trip.push((row, col, v)),
                        None => fixed[row] += v * u[n],
                    }
                }
            }
        }
        (CsrMatrix::from_triplets(map.len(), trip), fixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, eps: f64, n: usize) -> MediumParams {
        MediumParams::p_harmonic(p, eps, n).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(flux_coefficient(0.0, &params(3.0, 0.0, 1)), 0.0);
        assert_eq!(flux_coefficient(4.0, &params(3.0, 0.0, 1)), 2.0);
        let v = flux_coefficient(0.0, &params(4.0, 1e-3, 1));
        assert!((v - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn divergence_conserves_with_free_boundary() {
        let g = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 1.5], &[9, 11]).unwrap());
        let op = PLaplacian::new(g.clone(), params(3.0, 1e-6, 2));
        let u: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.coord(i);
                (3.0 * x[0]).sin() + x[1] * x[1]
            })
            .collect();
        let div = op.divergence(&u);
        let total: f64 = div.iter().enumerate().map(|(i, d)| d * g.volume(i)).sum();
        assert!(total.abs() < 1e-12, "{total}");
    }

    #[test]
    fn linear_profile_is_p_harmonic_1d() {
        let g = Arc::new(Grid::build(1, &[0.0], &[1.0], &[21]).unwrap());
        let op = PLaplacian::new(g.clone(), params(3.5, 0.0, 1));
        let u: Vec<f64> = (0..g.len()).map(|i| 2.0 * g.coord(i)[0] - 0.3).collect();
        let div = op.divergence(&u);
        for i in g.interior_nodes() {
            assert!(div[i].abs() < 1e-11);
        }
    }

    /// Jacobian against centred finite differences of the divergence.
    #[test]
    fn jacobian_matches_finite_differences() {
        for dim in [1, 2] {
            let g = Arc::new(if dim == 1 {
                Grid::build(1, &[0.0], &[1.0], &[9]).unwrap()
            } else {
                Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[6, 7]).unwrap()
            });
            let op = PLaplacian::new(g.clone(), params(3.3, 1e-3, dim));
            let u: Vec<f64> = (0..g.len())
                .map(|i| {
                    let x = g.coord(i);
                    (2.0 * x[0] + 0.5).sin() * (1.0 + x[1]) + 0.2 * x[1]
                })
                .collect();
            let map = UnknownMap::new(g.len(), |i| !g.is_boundary(i) || i % 3 == 0);
            let jac = op.jacobian(&u, &map, 1.0, 0.0);
            let step = 1e-6;
            for (col, &node) in map.nodes().iter().enumerate() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[node] += step;
                dn[node] -= step;
                let (dp, dm) = (op.divergence(&up), op.divergence(&dn));
                for (row, &rnode) in map.nodes().iter().enumerate() {
                    let fd = (dp[rnode] - dm[rnode]) / (2.0 * step);
                    let an = jac.get(row, col);
                    assert!(
                        (fd - an).abs() <= 1e-5 * (1.0 + fd.abs()),
                        "dim {dim}: d{rnode}/d{node}: fd {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn frozen_matrix_reproduces_divergence() {
        let g = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[7, 6]).unwrap());
        let op = PLaplacian::new(g.clone(), params(3.0, 1e-4, 2));
        let u: Vec<f64> = (0..g.len()).map(|i| (g.coord(i)[0] * 4.0).cos() + g.coord(i)[1]).collect();
        let map = UnknownMap::new(g.len(), |i| !g.is_boundary(i));
        let (a, c) = op.frozen(&u, &map, 1.0, 0.0);
        let mut av = vec![0.0; map.len()];
        a.mul_vec(&map.gather(&u), &mut av);
        let div = op.divergence(&u);
        for (k, &node) in map.nodes().iter().enumerate() {
            assert!((av[k] + c[k] - div[node]).abs() < 1e-10);
        }
    }
}
