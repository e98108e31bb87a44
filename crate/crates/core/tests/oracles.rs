//! Independent oracles: closed forms computed here, and dense linear algebra
//! for the linear case.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use plap_core::domain::{Grid, MediumParams, ScalarField};
use plap_core::elliptic::{giant_residual, solve_giant, solve_p_harmonic, EllipticConfig};
use plap_core::parabolic::{step, BoundaryCondition, SolveConfig};

/// Lanczos approximation (g = 7, 9 terms).
fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

fn beta(a: f64, b: f64) -> f64 {
    gamma(a) * gamma(b) / gamma(a + b)
}

/// Peak of the positive solution of `(|U'| U')' + U = 0` on (0, L).
///
/// The first integral gives `|U'|^3 = (3/4)(M^2 - U^2)`; integrating
/// `dU / |U'|` over half the interval yields
/// `L / 2 = (4/3)^{1/3} M^{1/3} B(1/2, 2/3) / 2`.
fn giant_peak_p3(len: f64) -> f64 {
    (len / ((4.0f64 / 3.0).cbrt() * beta(0.5, 2.0 / 3.0))).powi(3)
}

fn line(lo: f64, hi: f64, cells: usize) -> Arc<Grid> {
    Arc::new(Grid::build(1, &[lo], &[hi], &[cells]).unwrap())
}

fn giant(grid: &Arc<Grid>) -> ScalarField {
    let params = MediumParams::with_default_eps(3.0, grid.dim(), 1.0, grid.min_h()).unwrap();
    solve_giant(grid, &params, &EllipticConfig::default()).unwrap()
}

#[test]
fn lanczos_gamma_sanity() {
    assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    assert!((gamma(5.0) - 24.0).abs() < 1e-11);
}

#[test]
fn giant_peak_converges_to_closed_form() {
    let exact = giant_peak_p3(1.0);
    let errors: Vec<f64> = [26, 51, 101, 201]
        .iter()
        .map(|&c| (giant(&line(0.0, 1.0, c)).max() - exact).abs() / exact)
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[3] < 1e-3, "{errors:?}");
}

#[test]
fn giant_scales_with_the_interval() {
    // U_L(x) = L^{p/(p-2)} U_1(x / L); with the same cell count the discrete
    // problems map onto each other up to the regularisation.
    let small = giant(&line(0.0, 1.0, 61));
    let big = giant(&line(0.0, 2.0, 61));
    for i in 0..small.values().len() {
        let want = 8.0 * small.get(i);
        assert!((big.get(i) - want).abs() <= 1e-5 * big.max(), "node {i}");
    }
    let exact_ratio = giant_peak_p3(2.0) / giant_peak_p3(1.0);
    assert!((exact_ratio - 8.0).abs() < 1e-12);
}

#[test]
fn giant_grows_with_the_domain() {
    // Same spacing, nested intervals: the solution on the larger interval
    // dominates on the common nodes.
    let inner = giant(&line(0.0, 1.0, 101));
    let outer = giant(&line(-0.25, 1.25, 151));
    for i in 0..inner.values().len() {
        assert!(outer.get(i + 25) >= inner.get(i), "node {i}");
    }
    assert!(outer.max() > inner.max());
}

#[test]
fn giant_is_positive_in_2d_at_two_resolutions() {
    for cells in [9, 17] {
        let grid = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[cells, cells]).unwrap());
        let u = giant(&grid);
        assert!(grid.interior_nodes().iter().all(|&i| u.get(i) > 0.0), "cells {cells}");
        assert!(grid.boundary_nodes().iter().all(|&i| u.get(i) == 0.0));
    }
}

#[test]
fn restricted_fine_giant_is_consistent_on_coarse_grids() {
    let fine = giant(&line(0.0, 1.0, 801));
    let params_for = |g: &Arc<Grid>| MediumParams::with_default_eps(3.0, 1, 1.0, g.min_h()).unwrap();
    let mut residuals = Vec::new();
    for coarse in [51usize, 101, 201] {
        let stride = 800 / (coarse - 1);
        let g = line(0.0, 1.0, coarse);
        let values: Vec<f64> = (0..coarse).map(|i| fine.get(i * stride)).collect();
        let r = giant_residual(&ScalarField::new(g.clone(), values).unwrap(), &params_for(&g));
        residuals.push(r);
    }
    assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
}

/// Dense five-point matrix on the free nodes of a rectangle; boundary
/// values move to the right-hand side.
fn dense_laplacian(grid: &Grid, data: &ScalarField) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let free = grid.interior_nodes();
    let pos = |node: usize| free.iter().position(|&f| f == node);
    let mut a = DMatrix::zeros(free.len(), free.len());
    let mut b = DVector::zeros(free.len());
    for (r, &i) in free.iter().enumerate() {
        for d in 0..grid.dim() {
            let w = 1.0 / (grid.h()[d] * grid.h()[d]);
            for s in [-1isize, 1] {
                let j = grid.neighbor(i, d, s).unwrap();
                a[(r, r)] -= w;
                match pos(j) {
                    Some(c) => a[(r, c)] += w,
                    None => b[r] -= w * data.get(j),
                }
            }
        }
    }
    (a, b, free)
}

#[test]
fn p_two_harmonic_matches_dense_solve() {
    let grid = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 2.0], &[9, 13]).unwrap());
    let data = ScalarField::from_fn(grid.clone(), |x| x[0] * x[0] + (3.0 * x[1]).sin()).unwrap();
    let params = MediumParams::p_harmonic(2.0, 0.0, 2).unwrap();
    let w = solve_p_harmonic(&data, &grid.interior_nodes(), &params, &EllipticConfig::default()).unwrap();
    let (a, b, free) = dense_laplacian(&grid, &data);
    let x = a.lu().solve(&b).unwrap();
    for (r, &i) in free.iter().enumerate() {
        assert!((w.get(i) - x[r]).abs() < 1e-10, "node {i}: {} vs {}", w.get(i), x[r]);
    }
}

#[test]
fn p_two_implicit_step_matches_dense_solve() {
    let grid = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[11, 11]).unwrap());
    let u0 = ScalarField::from_fn(grid.clone(), |x| 1.0 + (2.0 * x[0]).cos() * x[1]).unwrap();
    let boundary = 0.5;
    let mut data = u0.values().to_vec();
    for i in grid.boundary_nodes() {
        data[i] = boundary;
    }
    let data = ScalarField::new(grid.clone(), data).unwrap();
    let params = MediumParams::p_harmonic(2.0, 0.0, 2).unwrap();
    let cfg = SolveConfig {
        dt: 1e-2,
        ..Default::default()
    };
    let u1 = step(&data, &BoundaryCondition::dirichlet_const(&grid, boundary), 0.0, &cfg, &params).unwrap();
    // (I - dt L) u1 = u0 on free nodes.
    let (l, b, free) = dense_laplacian(&grid, &data);
    let n = free.len();
    let m = DMatrix::identity(n, n) - l * cfg.dt;
    let rhs = DVector::from_iterator(n, free.iter().map(|&i| data.get(i))) - b * cfg.dt;
    let x = m.lu().solve(&rhs).unwrap();
    for (r, &i) in free.iter().enumerate() {
        assert!((u1.get(i) - x[r]).abs() < 1e-10, "node {i}: {} vs {}", u1.get(i), x[r]);
    }
}
