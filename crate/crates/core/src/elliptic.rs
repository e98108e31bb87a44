//! Dirichlet problems for the p-Laplacian: p-harmonic barriers and the
//! positive profile `U` of `div(|grad U|^{p-2} grad U) + U/(p-2) = 0`.

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, MediumParams, ScalarField};
use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, LinearOptions};
use crate::newton::{self, NewtonOptions, NonlinearSystem};
use crate::operator::{PLaplacian, UnknownMap};
use crate::parabolic::{self, SolveConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticConfig {
    pub newton_tol: f64,
    pub newton_max: usize,
    pub linear_tol: f64,
    /// Target regularisation; `None` keeps the one carried by the medium.
    pub eps: Option<f64>,
    /// Number of extra stages with `eps` ten times larger per stage.
    pub continuation_steps: usize,
    /// Constant start of the rescaled flow used by [`solve_giant`].
    pub flow_start: f64,
    /// Rescaled time step of that flow.
    pub flow_ds: f64,
    /// Flow stops once a step moves `w` by less than `flow_tol * max(w)`.
    pub flow_tol: f64,
    pub flow_max_steps: usize,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max: 80,
            linear_tol: 1e-12,
            eps: None,
            continuation_steps: 3,
            flow_start: 1e3,
            flow_ds: 0.25,
            flow_tol: 1e-9,
            flow_max_steps: 5000,
        }
    }
}

impl EllipticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || !(self.linear_tol > 0.0) || !(self.flow_tol > 0.0) {
            return Err(Error::param("tolerances must be > 0"));
        }
        if self.newton_max == 0 || self.flow_max_steps == 0 {
            return Err(Error::param("iteration caps must be positive"));
        }
        if let Some(eps) = self.eps {
            if !(eps >= 0.0) {
                return Err(Error::param(format!("eps must be >= 0, got {eps}")));
            }
        }
        if !(self.flow_start > 0.0) || !(self.flow_ds > 0.0) {
            return Err(Error::param("flow_start and flow_ds must be > 0"));
        }
        Ok(())
    }

    fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max,
            linear: LinearOptions {
                tol: self.linear_tol,
                max_iter: 5000,
            },
            max_failures: 5,
        }
    }

    fn target(&self, params: &MediumParams) -> MediumParams {
        MediumParams {
            eps: self.eps.unwrap_or(params.eps),
            ..*params
        }
    }

    /// Regularisations from coarse to the target.
    fn stages(&self, params: &MediumParams) -> Vec<MediumParams> {
        let target = self.target(params);
        if target.eps == 0.0 {
            // Geometric continuation needs a nonzero anchor.
            return vec![target];
        }
        (0..=self.continuation_steps)
            .rev()
            .map(|j| MediumParams {
                eps: target.eps * 10f64.powi(j as i32),
                ..target
            })
            .collect()
    }
}

/// `-(div(flux(u)) + source * u)` on the free nodes.
struct Stationary<'a> {
    op: &'a PLaplacian,
    map: &'a UnknownMap,
    full: Vec<f64>,
    source: f64,
}

impl Stationary<'_> {
    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.full.clone();
        self.map.scatter(x, &mut full);
        full
    }
}

impl NonlinearSystem for Stationary<'_> {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let div = self.op.divergence(&self.expand(x));
        self.map
            .nodes()
            .iter()
            .zip(x)
            .map(|(&i, v)| -(div[i] + self.source * v))
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> CsrMatrix {
        self.op.jacobian(&self.expand(x), self.map, -1.0, -self.source)
    }

    fn picard(&self, x: &[f64]) -> (CsrMatrix, Vec<f64>) {
        let (a, fixed) = self.op.frozen(&self.expand(x), self.map, -1.0, -self.source);
        (a, fixed.iter().map(|c| -c).collect())
    }

    fn noise_floor(&self, x: &[f64]) -> f64 {
        let mag = self.op.flux_magnitude(&self.expand(x));
        let worst = self
            .map
            .nodes()
            .iter()
            .zip(x)
            .map(|(&i, v)| mag[i] + (self.source * v).abs())
            .fold(0.0, f64::max);
        newton::ROUNDING * worst
    }
}

fn full_grid_guard(full: &[f64], map: &UnknownMap) -> Result<()> {
    if map.nodes().iter().any(|&i| i >= full.len()) {
        return Err(Error::param("unknown outside the grid"));
    }
    Ok(())
}

/// Newton with eps-continuation on the free nodes of `full`, in place.
fn continuation(
    grid: &std::sync::Arc<Grid>,
    full: &mut [f64],
    map: &UnknownMap,
    source: f64,
    params: &MediumParams,
    config: &EllipticConfig,
) -> Result<()> {
    full_grid_guard(full, map)?;
    if map.is_empty() {
        return Ok(());
    }
    let opts = config.newton_options();
    for stage in config.stages(params) {
        let op = PLaplacian::new(grid.clone(), stage);
        let sys = Stationary {
            op: &op,
            map,
            full: full.to_vec(),
            source,
        };
        let (x, _) = newton::solve(&sys, map.gather(full), &opts)?;
        map.scatter(&x, full);
    }
    Ok(())
}

/// Discrete p-harmonic function on the nodes in `free`; every other node
/// keeps its value from `boundary`.
pub fn solve_p_harmonic(
    boundary: &ScalarField,
    free: &[usize],
    params: &MediumParams,
    config: &EllipticConfig,
) -> Result<ScalarField> {
    config.validate()?;
    let grid = boundary.grid().clone();
    if let Some(&bad) = free.iter().find(|&&i| i >= grid.len()) {
        return Err(Error::param(format!("free node {bad} outside the grid")));
    }
    let map = UnknownMap::from_nodes(grid.len(), free);
    let mut full = boundary.values().to_vec();
    if map.is_empty() {
        return Ok(boundary.clone());
    }
    // The Laplace solution is an exact start in 1D and a good one in 2D.
    let laplace = MediumParams { p: 2.0, eps: 0.0, ..*params };
    let lap = PLaplacian::new(grid.clone(), laplace);
    let (a, fixed) = lap.frozen(&full, &map, -1.0, 0.0);
    let rhs: Vec<f64> = fixed.iter().map(|c| -c).collect();
    let opts = config.newton_options().linear;
    let x = linalg::solve(&a, &rhs, opts)?;
    map.scatter(&x, &mut full);
    if params.p != 2.0 {
        continuation(&grid, &mut full, &map, 0.0, params, config)?;
    }
    ScalarField::new(grid, full)
}

/// Free interior, zero boundary.
fn interior_map(grid: &Grid) -> UnknownMap {
    UnknownMap::new(grid.len(), |i| !grid.is_boundary(i))
}

/// Max-norm over interior nodes of `div(|grad U|^{p-2} grad U) + U/(p-2)`.
pub fn giant_residual(u: &ScalarField, params: &MediumParams) -> f64 {
    let grid = u.grid();
    let op = PLaplacian::new(grid.clone(), *params);
    let div = op.divergence(u.values());
    let sigma = params.separable_exponent();
    grid.interior_nodes()
        .into_iter()
        .map(|i| (div[i] + sigma * u.get(i)).abs())
        .fold(0.0, f64::max)
}

/// Positive solution of the auxiliary equation with zero boundary values.
///
/// The rescaled flow from a large constant is driven to rest and the result
/// is polished by Newton on the stationary equation.
pub fn solve_giant(grid: &std::sync::Arc<Grid>, params: &MediumParams, config: &EllipticConfig) -> Result<ScalarField> {
    let flow = giant_flow(grid, config.flow_start, params, config)?;
    polish_giant(flow, params, config)
}

/// Rescaled flow limit from `w ≡ start`, without the Newton polish.
pub fn giant_flow(
    grid: &std::sync::Arc<Grid>,
    start: f64,
    params: &MediumParams,
    config: &EllipticConfig,
) -> Result<ScalarField> {
    config.validate()?;
    MediumParams::new(params.p, params.eps, params.n)?;
    let target = config.target(params);
    let w0 = ScalarField::constant(grid.clone(), start)?;
    let step = SolveConfig {
        dt: config.flow_ds,
        t_end: f64::INFINITY,
        newton_tol: config.newton_tol,
        newton_max: config.newton_max,
        linear_tol: config.linear_tol,
        theta: 1.0,
    };
    let flow = parabolic::rescaled_flow(&w0, &step, &target, config.flow_tol, config.flow_max_steps)?;
    if !(flow.w.max() > 0.0) {
        return Err(Error::TrivialSolution { max: flow.w.max() });
    }
    Ok(flow.w)
}

fn polish_giant(flow: ScalarField, params: &MediumParams, config: &EllipticConfig) -> Result<ScalarField> {
    let grid = flow.grid().clone();
    let flow_max = flow.max();
    let map = interior_map(&grid);
    let mut full = flow.into_values();
    let sigma = params.separable_exponent();
    // The flow limit is already close; inflating eps can erase the positive
    // branch (eps * lambda_1 > sigma), so polish at the target only.
    let direct = EllipticConfig {
        continuation_steps: 0,
        ..*config
    };
    continuation(&grid, &mut full, &map, sigma, params, &direct)?;
    let u = ScalarField::new(grid.clone(), full)?;
    let max = u.max();
    if !(max > 1e-3 * flow_max) || map.nodes().iter().any(|&i| u.get(i) <= 0.0) {
        return Err(Error::TrivialSolution { max });
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::partition_half_ball;

    fn line(lo: f64, hi: f64, cells: usize) -> Arc<Grid> {
        Arc::new(Grid::build(1, &[lo], &[hi], &[cells]).unwrap())
    }

    fn zero_one(grid: &Arc<Grid>) -> ScalarField {
        let last = grid.len() - 1;
        ScalarField::from_fn(grid.clone(), |x| if x[0] >= grid.coord(last)[0] { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn one_dimensional_p_harmonic_is_affine() {
        let g = line(0.0, 1.0, 51);
        for p in [1.5, 2.0, 2.5, 3.0, 4.0] {
            let params = MediumParams::p_harmonic(p, 1e-10, 1).unwrap();
            let w = solve_p_harmonic(&zero_one(&g), &g.interior_nodes(), &params, &EllipticConfig::default()).unwrap();
            for i in 0..g.len() {
                assert!((w.get(i) - g.coord(i)[0]).abs() < 1e-12, "p = {p}");
            }
        }
    }

    #[test]
    fn constant_data_stay_constant() {
        let g = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap());
        let b = ScalarField::constant(g.clone(), 0.7).unwrap();
        let params = MediumParams::new(3.0, 1e-8, 2).unwrap();
        let w = solve_p_harmonic(&b, &g.interior_nodes(), &params, &EllipticConfig::default()).unwrap();
        assert!(w.values().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn half_disc_barrier_is_bounded_and_positive() {
        for cells in [21, 41] {
            let g = Arc::new(Grid::build(2, &[-1.0, -1.0], &[1.0, 1.0], &[cells, cells]).unwrap());
            let part = partition_half_ball(&g, &[0.0, 0.0], 0.7, &[1.0, 0.0]).unwrap();
            let data = part.barrier_data(&g, None);
            let params = MediumParams::new(3.0, 1e-8, 2).unwrap();
            let w = solve_p_harmonic(&data, &part.b_minus, &params, &EllipticConfig::default()).unwrap();
            assert!(w.min() >= -1e-12 && w.max() <= 1.0 + 1e-12);
            for &i in &part.b_minus {
                let touches = (0..2).any(|d| {
                    [-1, 1].iter().any(|&s| g.neighbor(i, d, s).is_some_and(|j| part.interface.contains(&j)))
                });
                if touches {
                    assert!(w.get(i) > 0.0);
                }
            }
        }
    }

    #[test]
    fn giant_is_positive_and_solves_the_equation() {
        let g = line(0.0, 1.0, 101);
        let params = MediumParams::new(3.0, 1e-9, 1).unwrap();
        let cfg = EllipticConfig::default();
        let u = solve_giant(&g, &params, &cfg).unwrap();
        let res = giant_residual(&u, &params);
        eprintln!("max U = {}, residual = {res:e}", u.max());
        assert!(res < 1e-8);
        assert_eq!(u.get(0), 0.0);
        assert_eq!(u.get(g.len() - 1), 0.0);
        assert!(g.interior_nodes().iter().all(|&i| u.get(i) > 0.0));
        assert!(giant_residual(&u.scaled(2.0).unwrap(), &params) > 1e-3);
        let zero = ScalarField::zeros(g.clone());
        assert_eq!(giant_residual(&zero, &params), 0.0);
    }
}
