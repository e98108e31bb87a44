//! Randomized structural checks of the time stepper: comparison and
//! maximum principles, scaling equivariance, and mass conservation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentReport, Table};
use crate::domain::{Grid, MediumParams, ScalarField};
use crate::error::{Error, Result};
use crate::exact::BarenblattParams;
use crate::parabolic::{self, BoundaryCondition, SolveConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantConfig {
    pub seed: u64,
    pub trials: usize,
    pub p: f64,
    /// Regularisation for the ordered-pair trials (0 is the plain scheme).
    pub eps: f64,
    /// Steps taken per trial.
    pub steps: usize,
    pub newton_tol: f64,
    pub linear_tol: f64,
    /// Allowed order or bound violation, in units of `newton_tol * scale`.
    pub violation_factor: f64,
    pub kappa: f64,
    /// Allowed scaling mismatch, in units of `linear_tol`.
    pub scaling_factor: f64,
    pub mass_steps: usize,
    pub mass_tol: f64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            trials: 50,
            p: 3.0,
            eps: 0.0,
            steps: 5,
            newton_tol: 1e-10,
            linear_tol: 1e-12,
            violation_factor: 10.0,
            kappa: 2.0,
            scaling_factor: 10.0,
            mass_steps: 100,
            mass_tol: 1e-8,
        }
    }
}

impl InvariantConfig {
    pub fn validate(&self) -> Result<()> {
        MediumParams::new(self.p, self.eps, 1)?;
        if self.trials == 0 || self.steps == 0 || self.mass_steps == 0 {
            return Err(Error::Config("trials and step counts must be positive".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config("kappa must be > 0".into()));
        }
        Ok(())
    }

    fn solver(&self, dt: f64, steps: usize) -> SolveConfig {
        SolveConfig {
            dt,
            t_end: dt * steps as f64,
            newton_tol: self.newton_tol,
            linear_tol: self.linear_tol,
            ..Default::default()
        }
    }
}

/// Data `u0 <= v0` with constant Dirichlet values `bu <= bv` (or both
/// Neumann-zero when `None`).
#[derive(Clone, Debug)]
pub struct OrderedPair {
    pub u0: ScalarField,
    pub v0: ScalarField,
    pub boundary: Option<(f64, f64)>,
    pub dt: f64,
}

impl OrderedPair {
    /// Random pair on a 1D or small 2D grid.
    pub fn random(rng: &mut impl Rng, dim: usize) -> Result<Self> {
        let grid = if dim == 1 {
            let cells = rng.gen_range(11..=61);
            Grid::build(1, &[0.0], &[1.0], &[cells])?
        } else {
            let cells = rng.gen_range(7..=15);
            Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[cells, cells])?
        };
        let grid = Arc::new(grid);
        let amp = 10f64.powf(rng.gen_range(-1.0..1.0));
        let rough = rng.gen_bool(0.5);
        let modes: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(1.0..4.0), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        let u: Vec<f64> = (0..grid.len())
            .map(|i| {
                if rough {
                    amp * rng.gen_range(0.0..1.0)
                } else {
                    let x = grid.coord(i);
                    let s: f64 = modes.iter().map(|(f, ph)| (f * (x[0] + x[1]) * 3.0 + ph).sin()).sum();
                    amp * (0.5 + s / 6.0)
                }
            })
            .collect();
        let bump = amp * rng.gen_range(0.0..0.5);
        let v: Vec<f64> = u
            .iter()
            .map(|x| x + if rng.gen_bool(0.7) { bump * rng.gen_range(0.0..1.0) } else { 0.0 })
            .collect();
        let boundary = if rng.gen_bool(0.75) {
            let bu = amp * rng.gen_range(0.0..1.0);
            Some((bu, bu + amp * rng.gen_range(0.0..0.3)))
        } else {
            None
        };
        let (mut u, mut v) = (u, v);
        if let Some((bu, bv)) = boundary {
            for i in grid.boundary_nodes() {
                u[i] = bu;
                v[i] = bv;
            }
        }
        // Step size chosen relative to the explicit diffusive scale.
        let dt = 10f64.powf(rng.gen_range(-1.0..1.5)) * grid.min_h().powi(2) / amp;
        Ok(Self {
            u0: ScalarField::new(grid.clone(), u)?,
            v0: ScalarField::new(grid, v)?,
            boundary,
            dt,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PairOutcome {
    /// `max (u - v)_+ / scale` over nodes and steps.
    pub order_violation: f64,
    /// Largest excursion outside the data range, divided by scale.
    pub bound_violation: f64,
}

/// Runs both members of the pair and measures order and range violations.
pub fn check_comparison(pair: &OrderedPair, params: &MediumParams, solver: &SolveConfig) -> Result<PairOutcome> {
    let grid = pair.u0.grid();
    let bc = |b: Option<f64>| match b {
        Some(v) => BoundaryCondition::dirichlet_const(grid, v),
        None => BoundaryCondition::neumann_zero(grid),
    };
    let run = |u0: &ScalarField, b: Option<f64>| -> Result<Vec<Vec<f64>>> {
        let mut states = Vec::new();
        parabolic::solve_observed(u0, &bc(b), 0.0, solver, params, &[], |_, u| {
            states.push(u.to_vec());
            Ok(())
        })?;
        Ok(states)
    };
    let us = run(&pair.u0, pair.boundary.map(|b| b.0))?;
    let vs = run(&pair.v0, pair.boundary.map(|b| b.1))?;
    let mut scale = pair.u0.norm_inf().max(pair.v0.norm_inf());
    if scale == 0.0 {
        scale = 1.0;
    }
    let mut out = PairOutcome::default();
    for (u, v) in us.iter().zip(&vs) {
        for (a, b) in u.iter().zip(v) {
            out.order_violation = out.order_violation.max((a - b).max(0.0) / scale);
        }
    }
    for (states, data, b) in [
        (&us, &pair.u0, pair.boundary.map(|b| b.0)),
        (&vs, &pair.v0, pair.boundary.map(|b| b.1)),
    ] {
        let lo = b.map_or(data.min(), |b| data.min().min(b));
        let hi = b.map_or(data.max(), |b| data.max().max(b));
        for s in states {
            for x in s {
                let excess = (lo - x).max(x - hi).max(0.0);
                out.bound_violation = out.bound_violation.max(excess / scale);
            }
        }
    }
    Ok(out)
}

/// `max |step(kappa u0) - kappa step(u0)|` with `eps' = kappa eps` and
/// `dt' = dt / kappa^{p-2}` on Dirichlet data scaled alike.
pub fn check_scaling(
    u0: &ScalarField,
    boundary: f64,
    dt: f64,
    params: &MediumParams,
    solver: &SolveConfig,
    kappa: f64,
) -> Result<f64> {
    let grid = u0.grid();
    let base = SolveConfig { dt, ..*solver };
    let scaled_cfg = SolveConfig {
        dt: dt / kappa.powf(params.p - 2.0),
        ..*solver
    };
    let scaled_params = MediumParams {
        eps: kappa * params.eps,
        ..*params
    };
    let a = parabolic::step(u0, &BoundaryCondition::dirichlet_const(grid, boundary), 0.0, &base, params)?;
    let b = parabolic::step(
        &u0.scaled(kappa)?,
        &BoundaryCondition::dirichlet_const(grid, kappa * boundary),
        0.0,
        &scaled_cfg,
        &scaled_params,
    )?;
    Ok(b.difference(&a.scaled(kappa)?)?.norm_inf())
}

/// Relative change of the discrete mass after `steps` Neumann-zero steps.
pub fn check_mass_conservation(u0: &ScalarField, params: &MediumParams, solver: &SolveConfig, steps: usize) -> Result<f64> {
    let grid = u0.grid();
    let cfg = SolveConfig {
        t_end: solver.dt * steps as f64,
        ..*solver
    };
    let traj = parabolic::solve(u0, &BoundaryCondition::neumann_zero(grid), 0.0, &cfg, params, &[cfg.t_end])?;
    let m0 = u0.integral();
    let m1 = traj.last().map_or(m0, |u| u.integral());
    Ok((m1 - m0).abs() / m0.abs())
}

/// Randomized invariant suite; every trial uses its own seeded stream.
pub fn run_invariants(cfg: &InvariantConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::new("proptest", cfg)?;
    let outcomes: Vec<Result<(usize, PairOutcome)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let dim = if i % 2 == 0 { 1 } else { 2 };
            let pair = OrderedPair::random(&mut rng, dim)?;
            let params = MediumParams::new(cfg.p, cfg.eps, dim)?;
            let out = check_comparison(&pair, &params, &cfg.solver(pair.dt, cfg.steps))?;
            Ok((dim, out))
        })
        .collect();
    let mut table = Table::new(&["trial", "dim", "order_violation", "bound_violation"]);
    let allowed = cfg.violation_factor * cfg.newton_tol;
    let (mut worst_order, mut worst_bound): (f64, f64) = (0.0, 0.0);
    let mut order_failures = 0usize;
    let mut bound_failures = 0usize;
    for (i, o) in outcomes.into_iter().enumerate() {
        let (dim, o) = o?;
        worst_order = worst_order.max(o.order_violation);
        worst_bound = worst_bound.max(o.bound_violation);
        order_failures += usize::from(o.order_violation > allowed);
        bound_failures += usize::from(o.bound_violation > allowed);
        table.push(vec![i as f64, dim as f64, o.order_violation, o.bound_violation]);
    }
    report.tables.insert("pairs".into(), table);
    report.metric("order_violation_max", worst_order);
    report.metric("bound_violation_max", worst_bound);
    report.metric("order_failures", order_failures as f64);
    report.metric("bound_failures", bound_failures as f64);
    report.metric("allowed_violation", allowed);

    // Scaling: smooth data on a 1D grid, Dirichlet data scaled alike.
    let grid = Arc::new(Grid::build(1, &[0.0], &[1.0], &[41])?);
    let u0 = ScalarField::from_fn(grid.clone(), |x| 1.0 + (3.0 * x[0]).sin())?;
    let params = MediumParams::new(cfg.p, 1e-6, 1)?;
    let mismatch = check_scaling(&u0, u0.get(0), 1e-3, &params, &cfg.solver(1e-3, 1), cfg.kappa)?;
    report.metric("scaling_mismatch", mismatch);
    report.metric("scaling_allowed", cfg.scaling_factor * cfg.linear_tol);

    // Mass: Barenblatt profile well inside a Neumann box.
    let grid = Arc::new(Grid::build(1, &[-5.0], &[5.0], &[401])?);
    let u0 = BarenblattParams::new(1, cfg.p, 1.0)?.sample(&grid, 1.0)?;
    let params = MediumParams::new(cfg.p, crate::domain::default_eps(u0.max(), grid.min_h()), 1)?;
    let drift = check_mass_conservation(&u0, &params, &cfg.solver(0.01, cfg.mass_steps), cfg.mass_steps)?;
    report.metric("mass_drift", drift);
    report.metric("mass_tol", cfg.mass_tol);

    report.verdict(
        "comparison",
        order_failures == 0,
        &["order_failures", "order_violation_max", "allowed_violation"],
        format!(
            "{} ordered pairs, worst relative order violation {worst_order:.3e} (allowed {allowed:.1e})",
            cfg.trials
        ),
    );
    report.verdict(
        "maximum_principle",
        bound_failures == 0,
        &["bound_failures", "bound_violation_max", "allowed_violation"],
        format!("worst relative excursion outside the data range {worst_bound:.3e}"),
    );
    report.verdict(
        "scaling",
        mismatch <= cfg.scaling_factor * cfg.linear_tol,
        &["scaling_mismatch", "scaling_allowed"],
        format!("kappa = {} mismatch {mismatch:.3e} in max-norm", cfg.kappa),
    );
    report.verdict(
        "mass",
        drift < cfg.mass_tol,
        &["mass_drift", "mass_tol"],
        format!("relative mass drift over {} steps {drift:.3e} < {:e}", cfg.mass_steps, cfg.mass_tol),
    );
    Ok(report)
}
