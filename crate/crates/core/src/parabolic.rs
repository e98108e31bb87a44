//! Implicit time stepping for `u_t = div(|grad u|^{p-2} grad u)` and for the
//! rescaled flow `w_s = div(|grad w|^{p-2} grad w) + w/(p-2)`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, MediumParams, ScalarField, SlantedDomain};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LinearOptions};
use crate::newton::{self, NewtonOptions, NewtonReport, NonlinearSystem};
use crate::operator::{PLaplacian, UnknownMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub linear_tol: f64,
    /// 1 is implicit Euler, 1/2 is Crank-Nicolson.
    pub theta: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            newton_tol: 1e-10,
            newton_max: 60,
            linear_tol: 1e-12,
            theta: 1.0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || !(self.linear_tol > 0.0) {
            return Err(Error::param("tolerances must be > 0"));
        }
        if self.newton_max == 0 {
            return Err(Error::param("newton_max must be positive"));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::param(format!("theta must lie in [1/2, 1], got {}", self.theta)));
        }
        Ok(())
    }

    pub(crate) fn newton_options(&self, tol: f64) -> NewtonOptions {
        NewtonOptions {
            tol,
            max_iter: self.newton_max,
            linear: LinearOptions {
                tol: self.linear_tol,
                max_iter: 5000,
            },
            max_failures: 5,
        }
    }
}

pub type BoundaryFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryKind {
    Dirichlet(BoundaryFn),
    NeumannZero,
}

impl fmt::Debug for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryKind::Dirichlet(_) => f.write_str("Dirichlet(..)"),
            BoundaryKind::NeumannZero => f.write_str("NeumannZero"),
        }
    }
}

/// Exactly one condition for every boundary node of a grid.
#[derive(Clone, Debug)]
pub struct BoundaryCondition {
    kinds: Vec<Option<BoundaryKind>>,
}

impl BoundaryCondition {
    pub fn from_fn(grid: &Grid, kind: impl Fn(usize) -> BoundaryKind) -> Self {
        let kinds = (0..grid.len())
            .map(|i| grid.is_boundary(i).then(|| kind(i)))
            .collect();
        Self { kinds }
    }

    pub fn dirichlet_const(grid: &Grid, value: f64) -> Self {
        let f: BoundaryFn = Arc::new(move |_, _| value);
        Self::from_fn(grid, |_| BoundaryKind::Dirichlet(f.clone()))
    }

    pub fn dirichlet_fn(grid: &Grid, f: BoundaryFn) -> Self {
        Self::from_fn(grid, |_| BoundaryKind::Dirichlet(f.clone()))
    }

    pub fn neumann_zero(grid: &Grid) -> Self {
        Self::from_fn(grid, |_| BoundaryKind::NeumannZero)
    }

    pub fn kind(&self, node: usize) -> Option<&BoundaryKind> {
        self.kinds[node].as_ref()
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.kinds.len() != grid.len() {
            return Err(Error::param("boundary condition built for a different grid"));
        }
        Ok(())
    }

    /// Dirichlet value at `node` and time `t`, if the node is Dirichlet.
    pub fn value(&self, grid: &Grid, node: usize, t: f64) -> Option<f64> {
        match &self.kinds[node] {
            Some(BoundaryKind::Dirichlet(f)) => {
                let x = grid.coord(node);
                Some(f(&x[..grid.dim()], t))
            }
            _ => None,
        }
    }

    fn fixed_values(&self, grid: &Grid, t: f64) -> Vec<Option<f64>> {
        (0..grid.len()).map(|i| self.value(grid, i, t)).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    pub failed_line_searches: usize,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    /// Snapshot recorded closest to `t`.
    pub fn at(&self, t: f64) -> Option<&ScalarField> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| &self.snapshots[i])
    }

    pub fn last(&self) -> Option<&ScalarField> {
        self.snapshots.last()
    }

    /// One JSON object per time step.
    pub fn write_diagnostics<W: Write>(&self, mut out: W) -> Result<()> {
        for d in &self.diagnostics {
            serde_json::to_writer(&mut out, d)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Residual `u - u_old - dt [theta G(u) + (1 - theta) G(u_old)]` with
/// `G(v) = div(flux(v)) + source * v`, on the free nodes only.
struct ImplicitSystem<'a> {
    op: &'a PLaplacian,
    map: &'a UnknownMap,
    full: Vec<f64>,
    rhs: Vec<f64>,
    dt_theta: f64,
    source: f64,
}

impl ImplicitSystem<'_> {
    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.full.clone();
        self.map.scatter(x, &mut full);
        full
    }
}

impl NonlinearSystem for ImplicitSystem<'_> {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let full = self.expand(x);
        let div = self.op.divergence(&full);
        self.map
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &i)| x[k] - self.dt_theta * (div[i] + self.source * x[k]) - self.rhs[k])
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> CsrMatrix {
        let full = self.expand(x);
        self.op
            .jacobian(&full, self.map, -self.dt_theta, 1.0 - self.dt_theta * self.source)
    }

    fn picard(&self, x: &[f64]) -> (CsrMatrix, Vec<f64>) {
        let full = self.expand(x);
        let (a, fixed) = self
            .op
            .frozen(&full, self.map, -self.dt_theta, 1.0 - self.dt_theta * self.source);
        let b = self.rhs.iter().zip(&fixed).map(|(r, c)| r - c).collect();
        (a, b)
    }

    fn noise_floor(&self, x: &[f64]) -> f64 {
        let mag = self.op.flux_magnitude(&self.expand(x));
        let worst = self
            .map
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                x[k].abs() + self.dt_theta * (mag[i] + (self.source * x[k]).abs()) + self.rhs[k].abs()
            })
            .fold(0.0, f64::max);
        newton::ROUNDING * worst
    }
}

/// One theta-step from `u_old`; `fixed` holds the values imposed at the new
/// time level (Dirichlet data, inactive nodes). Every other node is solved for.
pub(crate) fn implicit_step(
    op: &PLaplacian,
    u_old: &[f64],
    fixed: &[Option<f64>],
    dt: f64,
    source: f64,
    config: &SolveConfig,
) -> Result<(Vec<f64>, NewtonReport, f64)> {
    let map = UnknownMap::new(u_old.len(), |i| fixed[i].is_none());
    let mut start = u_old.to_vec();
    let mut scale: f64 = u_old.iter().fold(0.0, |m, v| m.max(v.abs()));
    for (i, f) in fixed.iter().enumerate() {
        if let Some(v) = *f {
            start[i] = v;
            scale = scale.max(v.abs());
        }
    }
    let tol = if scale > 0.0 {
        config.newton_tol * scale
    } else {
        config.newton_tol
    };
    if map.is_empty() {
        return Ok((start, NewtonReport::default(), tol));
    }
    let theta = config.theta;
    let explicit: Vec<f64> = if theta < 1.0 {
        let div_old = op.divergence(u_old);
        map.nodes()
            .iter()
            .map(|&i| u_old[i] + dt * (1.0 - theta) * (div_old[i] + source * u_old[i]))
            .collect()
    } else {
        map.gather(u_old)
    };
    let sys = ImplicitSystem {
        op,
        map: &map,
        full: start.clone(),
        rhs: explicit,
        dt_theta: dt * theta,
        source,
    };
    let guess = map.gather(&start);
    let (x, report) = newton::solve(&sys, guess, &config.newton_options(tol))?;
    map.scatter(&x, &mut start);
    Ok((start, report, tol))
}

/// Advances `u` by one step of length `config.dt` from time `t`.
pub fn step(
    u: &ScalarField,
    bc: &BoundaryCondition,
    t: f64,
    config: &SolveConfig,
    params: &MediumParams,
) -> Result<ScalarField> {
    config.validate()?;
    let grid = u.grid();
    bc.check(grid)?;
    let op = PLaplacian::new(grid.clone(), *params);
    let fixed = bc.fixed_values(grid, t + config.dt);
    let (next, _, _) = implicit_step(&op, u.values(), &fixed, config.dt, 0.0, config)?;
    ScalarField::new(grid.clone(), next)
}

/// Step boundaries from `t0` to `t_end`; the last step is shortened to land
/// exactly on `t_end`.
pub(crate) fn step_boundaries(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let mut times = vec![t0];
    if t_end <= t0 {
        return times;
    }
    let span = t_end - t0;
    let full = (span / dt + 1e-9).floor() as usize;
    for k in 1..=full {
        times.push(t0 + k as f64 * dt);
    }
    let last = *times.last().unwrap();
    if t_end - last > 1e-9 * dt {
        times.push(t_end);
    } else {
        *times.last_mut().unwrap() = t_end;
    }
    times
}

/// Indices into `boundaries` nearest to each requested record time.
fn record_indices(boundaries: &[f64], record_times: &[f64]) -> Result<Vec<usize>> {
    let (t0, t_end) = (boundaries[0], *boundaries.last().unwrap());
    let mut idx = Vec::with_capacity(record_times.len());
    for &r in record_times {
        if r < t0 - 1e-12 || r > t_end + 1e-12 {
            return Err(Error::param(format!(
                "record time {r} outside [{t0}, {t_end}]"
            )));
        }
        let k = boundaries
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - r).abs().total_cmp(&(b.1 - r).abs()))
            .map(|(k, _)| k)
            .unwrap();
        idx.push(k);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Shared time loop. `fixed_at(step, t_new)` yields the constrained values
/// at the end of step `step`; `observe` sees every step boundary.
pub(crate) fn evolve(
    op: &PLaplacian,
    u0: Vec<f64>,
    boundaries: &[f64],
    config: &SolveConfig,
    source: f64,
    mut fixed_at: impl FnMut(usize, f64) -> Vec<Option<f64>>,
    mut observe: impl FnMut(usize, f64, &[f64]) -> Result<()>,
) -> Result<(Vec<f64>, Vec<StepDiagnostics>)> {
    let mut u = u0;
    let mut diags = Vec::with_capacity(boundaries.len().saturating_sub(1));
    observe(0, boundaries[0], &u)?;
    for n in 0..boundaries.len() - 1 {
        let (t, t_next) = (boundaries[n], boundaries[n + 1]);
        let dt = t_next - t;
        let fixed = fixed_at(n, t_next);
        let (next, rep, tol) = implicit_step(op, &u, &fixed, dt, source, config)?;
        u = next;
        diags.push(StepDiagnostics {
            step: n + 1,
            t: t_next,
            dt,
            newton_iterations: rep.newton_iterations,
            picard_iterations: rep.picard_iterations,
            failed_line_searches: rep.failed_line_searches,
            residual: rep.residual,
            tolerance: tol,
        });
        observe(n + 1, t_next, &u)?;
    }
    Ok((u, diags))
}

/// Evolves `u0` from `t0` to `config.t_end`, keeping snapshots at the step
/// boundaries nearest to `record_times`.
pub fn solve(
    u0: &ScalarField,
    bc: &BoundaryCondition,
    t0: f64,
    config: &SolveConfig,
    params: &MediumParams,
    record_times: &[f64],
) -> Result<Trajectory> {
    solve_observed(u0, bc, t0, config, params, record_times, |_, _| Ok(()))
}

/// Like [`solve`], additionally calling `observe(t, u)` at every step boundary.
pub fn solve_observed(
    u0: &ScalarField,
    bc: &BoundaryCondition,
    t0: f64,
    config: &SolveConfig,
    params: &MediumParams,
    record_times: &[f64],
    mut observe: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<Trajectory> {
    config.validate()?;
    let grid = u0.grid().clone();
    bc.check(&grid)?;
    let op = PLaplacian::new(grid.clone(), *params);
    let boundaries = step_boundaries(t0, config.t_end, config.dt);
    let wanted = record_indices(&boundaries, record_times)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
    };
    let (_, diags) = evolve(
        &op,
        u0.values().to_vec(),
        &boundaries,
        config,
        0.0,
        |_, t| bc.fixed_values(&grid, t),
        |k, t, u| {
            if wanted.binary_search(&k).is_ok() {
                traj.times.push(t);
                traj.snapshots.push(ScalarField::new(grid.clone(), u.to_vec())?);
            }
            observe(t, u)
        },
    )?;
    traj.diagnostics = diags;
    Ok(traj)
}

/// Activation step of every node: the first step boundary not earlier than
/// its activation time.
pub fn activation_steps(domain: &SlantedDomain, boundaries: &[f64], dt: f64) -> Vec<usize> {
    domain
        .activation()
        .iter()
        .map(|&psi| {
            boundaries
                .iter()
                .position(|&b| b >= psi - 1e-9 * dt)
                .unwrap_or(boundaries.len() - 1)
        })
        .collect()
}

/// Start of the step grid for a slanted domain: the earliest activation.
pub fn slanted_start(domain: &SlantedDomain) -> f64 {
    domain
        .activation()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Truncated problem on a slanted domain. Each non-Dirichlet node holds the
/// value `k` until its activation step, then evolves. Steps run from the
/// earliest activation to `domain.t_end()`.
pub fn solve_slanted(
    domain: &SlantedDomain,
    k: f64,
    lateral_bc: &BoundaryCondition,
    config: &SolveConfig,
    params: &MediumParams,
    record_times: &[f64],
) -> Result<Trajectory> {
    solve_slanted_observed(domain, k, lateral_bc, config, params, record_times, |_, _, _| Ok(()))
}

/// Like [`solve_slanted`]; `observe(t, u, active)` sees every step boundary
/// together with the activity mask after that boundary.
#[allow(clippy::too_many_arguments)]
pub fn solve_slanted_observed(
    domain: &SlantedDomain,
    k: f64,
    lateral_bc: &BoundaryCondition,
    config: &SolveConfig,
    params: &MediumParams,
    record_times: &[f64],
    mut observe: impl FnMut(f64, &[f64], &[bool]) -> Result<()>,
) -> Result<Trajectory> {
    config.validate()?;
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::param(format!("truncation level must be > 0, got {k}")));
    }
    let grid = domain.grid().clone();
    lateral_bc.check(&grid)?;
    let op = PLaplacian::new(grid.clone(), *params);
    let boundaries = step_boundaries(slanted_start(domain), domain.t_end(), config.dt);
    let act = activation_steps(domain, &boundaries, config.dt);
    let wanted = record_indices(&boundaries, record_times)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut active = vec![false; grid.len()];
    let (_, diags) = evolve(
        &op,
        vec![k; grid.len()],
        &boundaries,
        config,
        0.0,
        |n, t| {
            let mut fixed = lateral_bc.fixed_values(&grid, t);
            for (i, f) in fixed.iter_mut().enumerate() {
                if f.is_none() && act[i] > n {
                    *f = Some(k);
                }
            }
            fixed
        },
        |n, t, u| {
            for (i, a) in active.iter_mut().enumerate() {
                *a = lateral_bc.value(&grid, i, t).is_none() && act[i] <= n;
            }
            if wanted.binary_search(&n).is_ok() {
                traj.times.push(t);
                traj.snapshots.push(ScalarField::new(grid.clone(), u.to_vec())?);
            }
            observe(t, u, &active)
        },
    )?;
    traj.diagnostics = diags;
    Ok(traj)
}

/// One implicit step (length `config.dt`) of the rescaled flow with zero
/// Dirichlet data.
pub fn rescaled_step(w: &ScalarField, config: &SolveConfig, params: &MediumParams) -> Result<ScalarField> {
    config.validate()?;
    if w.min() < 0.0 {
        return Err(Error::param("rescaled flow needs nonnegative data"));
    }
    let grid = w.grid();
    let op = PLaplacian::new(grid.clone(), *params);
    let fixed = zero_boundary(grid);
    let (next, _, _) = implicit_step(
        &op,
        w.values(),
        &fixed,
        config.dt,
        params.separable_exponent(),
        config,
    )?;
    ScalarField::new(grid.clone(), next)
}

fn zero_boundary(grid: &Grid) -> Vec<Option<f64>> {
    (0..grid.len())
        .map(|i| grid.is_boundary(i).then_some(0.0))
        .collect()
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub w: ScalarField,
    pub steps: usize,
    /// `max |w_{s+ds} - w_s|` over the last step.
    pub last_change: f64,
    pub rescaled_time: f64,
}

/// Drives the rescaled flow until one step changes `w` by less than
/// `rel_tol * max|w|` in max-norm (or `max_steps` is hit, which is an error).
pub fn rescaled_flow(
    w0: &ScalarField,
    config: &SolveConfig,
    params: &MediumParams,
    rel_tol: f64,
    max_steps: usize,
) -> Result<FlowResult> {
    config.validate()?;
    let grid = w0.grid().clone();
    let op = PLaplacian::new(grid.clone(), *params);
    let fixed = zero_boundary(&grid);
    let source = params.separable_exponent();
    let mut w = w0.values().to_vec();
    for (i, f) in fixed.iter().enumerate() {
        if let Some(v) = f {
            w[i] = *v;
        }
    }
    let mut change = f64::INFINITY;
    for n in 1..=max_steps {
        let (next, _, _) = implicit_step(&op, &w, &fixed, config.dt, source, config)?;
        change = next
            .iter()
            .zip(&w)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        w = next;
        let tol = rel_tol * w.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if change < tol {
            return Ok(FlowResult {
                w: ScalarField::new(grid, w)?,
                steps: n,
                last_change: change,
                rescaled_time: n as f64 * config.dt,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_steps,
        residual: change,
        tolerance: rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(cells: usize) -> Arc<Grid> {
        Arc::new(Grid::build(1, &[0.0], &[1.0], &[cells]).unwrap())
    }

    fn medium() -> MediumParams {
        MediumParams::new(3.0, 1e-6, 1).unwrap()
    }

    #[test]
    fn boundaries_land_on_end() {
        let b = step_boundaries(1.0, 2.0, 0.3);
        assert_eq!(b.len(), 5);
        assert_eq!(*b.last().unwrap(), 2.0);
        assert!((b[3] - 1.9).abs() < 1e-12);
        let exact = step_boundaries(0.0, 1.0, 0.1);
        assert_eq!(exact.len(), 11);
        assert_eq!(*exact.last().unwrap(), 1.0);
        assert_eq!(step_boundaries(2.0, 2.0, 0.1), vec![2.0]);
    }

    #[test]
    fn constant_state_is_steady() {
        let g = line(21);
        let u = ScalarField::constant(g.clone(), 5.0).unwrap();
        let bc = BoundaryCondition::dirichlet_const(&g, 5.0);
        let cfg = SolveConfig { dt: 0.01, ..Default::default() };
        let next = step(&u, &bc, 0.0, &cfg, &medium()).unwrap();
        assert!(next.values().iter().all(|&v| v == 5.0));
        let traj = solve(&u, &BoundaryCondition::neumann_zero(&g), 0.0,
            &SolveConfig { dt: 0.1, t_end: 1.0, ..Default::default() }, &medium(), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(traj.times.len(), 3);
        assert!(traj.snapshots.iter().all(|s| s.values().iter().all(|&v| v == 5.0)));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SolveConfig { theta: 0.3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveConfig { dt: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn record_times_must_be_inside() {
        let g = line(11);
        let u = ScalarField::zeros(g.clone());
        let bc = BoundaryCondition::dirichlet_const(&g, 0.0);
        let cfg = SolveConfig { dt: 0.1, t_end: 1.0, ..Default::default() };
        assert!(solve(&u, &bc, 0.0, &cfg, &medium(), &[1.5]).is_err());
    }

    #[test]
    fn zero_is_fixed_point_of_rescaled_flow() {
        let g = line(11);
        let w = ScalarField::zeros(g);
        let cfg = SolveConfig { dt: 0.1, ..Default::default() };
        let next = rescaled_step(&w, &cfg, &medium()).unwrap();
        assert!(next.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagnostics_are_json_lines() {
        let g = line(11);
        let u = ScalarField::from_fn(g.clone(), |x| x[0] * (1.0 - x[0])).unwrap();
        let bc = BoundaryCondition::dirichlet_const(&g, 0.0);
        let cfg = SolveConfig { dt: 0.05, t_end: 0.2, ..Default::default() };
        let traj = solve(&u, &bc, 0.0, &cfg, &medium(), &[]).unwrap();
        let mut buf = Vec::new();
        traj.write_diagnostics(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["residual"].as_f64().unwrap() <= v["tolerance"].as_f64().unwrap());
        }
    }

    #[test]
    fn crank_nicolson_steps() {
        let g = line(41);
        let u = ScalarField::from_fn(g.clone(), |x| (std::f64::consts::PI * x[0]).sin()).unwrap();
        let bc = BoundaryCondition::dirichlet_const(&g, 0.0);
        let cfg = SolveConfig { dt: 1e-3, t_end: 0.05, theta: 0.5, ..Default::default() };
        let traj = solve(&u, &bc, 0.0, &cfg, &medium(), &[0.05]).unwrap();
        let last = traj.last().unwrap();
        assert!(last.max() < 1.0 && last.min() >= -1e-9);
    }
}
