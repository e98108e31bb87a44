use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{keyed, Artifacts, ExperimentReport, Table};
use crate::domain::{default_eps, Grid, MediumParams};
use crate::error::{Error, Result};
use crate::exact::BarenblattParams;
use crate::parabolic::{self, BoundaryCondition, SolveConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarenblattConfig {
    pub p: f64,
    pub n: usize,
    pub c: f64,
    /// The box is `(-half_width, half_width)^n`.
    pub half_width: f64,
    pub resolutions: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    /// `dt = dt_factor * h`.
    pub dt_factor: f64,
    pub theta: f64,
    pub newton_tol: f64,
    pub linear_tol: f64,
    /// `None` uses `1e-8 * max(u0) / h`.
    pub eps: Option<f64>,
    pub max_final_error: f64,
    pub min_order: f64,
    pub max_runtime_seconds: f64,
}

impl Default for BarenblattConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            n: 1,
            c: 1.0,
            half_width: 5.0,
            resolutions: vec![0.05, 0.025, 0.0125],
            t0: 1.0,
            t1: 2.0,
            dt_factor: 0.5,
            theta: 1.0,
            newton_tol: 1e-10,
            linear_tol: 1e-12,
            eps: None,
            max_final_error: 0.02,
            min_order: 0.8,
            max_runtime_seconds: 120.0,
        }
    }
}

impl BarenblattConfig {
    pub fn validate(&self) -> Result<()> {
        MediumParams::new(self.p, 0.0, self.n)?;
        let b = BarenblattParams::new(self.n, self.p, self.c)?;
        if self.resolutions.is_empty() {
            return Err(Error::Config("resolution ladder is empty".into()));
        }
        if self.resolutions.iter().any(|h| !(*h > 0.0)) || !(self.dt_factor > 0.0) {
            return Err(Error::Config("h and dt must be > 0".into()));
        }
        if !(self.t0 > 0.0) || self.t1 < self.t0 {
            return Err(Error::Config(format!("need t1 >= t0 > 0, got t0 = {}, t1 = {}", self.t0, self.t1)));
        }
        if b.front_radius(self.t1) >= self.half_width {
            return Err(Error::Config(format!(
                "support radius {} at t1 reaches the box half-width {}",
                b.front_radius(self.t1),
                self.half_width
            )));
        }
        Ok(())
    }
}

struct Level {
    h: f64,
    l1: f64,
    linf: f64,
    steps: usize,
    newton: usize,
}

/// Tracks the Barenblatt solution from `t0` to `t1` on a ladder of
/// resolutions and reports relative errors and empirical orders.
pub fn run_barenblatt_convergence(cfg: &BarenblattConfig, artifacts: &Artifacts) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let exact = BarenblattParams::new(cfg.n, cfg.p, cfg.c)?;
    let mut report = ExperimentReport::new("barenblatt", cfg)?;
    let runs: Vec<Result<(Level, crate::domain::ScalarField)>> = cfg
        .resolutions
        .par_iter()
        .map(|&h| {
            let cells = (2.0 * cfg.half_width / h).round() as usize + 1;
            let grid = Arc::new(Grid::build(
                cfg.n,
                &vec![-cfg.half_width; cfg.n],
                &vec![cfg.half_width; cfg.n],
                &vec![cells; cfg.n],
            )?);
            let h = grid.min_h();
            let u0 = exact.sample(&grid, cfg.t0)?;
            let eps = cfg.eps.unwrap_or_else(|| default_eps(u0.max(), h));
            let params = MediumParams::new(cfg.p, eps, cfg.n)?;
            let solver = SolveConfig {
                dt: cfg.dt_factor * h,
                t_end: cfg.t1,
                newton_tol: cfg.newton_tol,
                linear_tol: cfg.linear_tol,
                theta: cfg.theta,
                ..Default::default()
            };
            let bc = BoundaryCondition::dirichlet_const(&grid, 0.0);
            let traj = parabolic::solve(&u0, &bc, cfg.t0, &solver, &params, &[cfg.t1])?;
            let u1 = traj.last().cloned().unwrap_or(u0);
            let reference = exact.sample(&grid, cfg.t1)?;
            let diff = u1.difference(&reference)?;
            let level = Level {
                h,
                l1: diff.l1_norm() / reference.l1_norm(),
                linf: diff.norm_inf() / reference.norm_inf(),
                steps: traj.diagnostics.len(),
                newton: traj.diagnostics.iter().map(|d| d.newton_iterations).sum(),
            };
            Ok((level, u1))
        })
        .collect();

    let mut table = Table::new(&["h", "dt", "l1_error", "linf_error", "steps", "newton_iterations"]);
    let mut levels = Vec::new();
    for run in runs {
        let (level, field) = run?;
        report.metric(keyed("l1_error", "h", level.h), level.l1);
        report.metric(keyed("linf_error", "h", level.h), level.linf);
        table.push(vec![
            level.h,
            cfg.dt_factor * level.h,
            level.l1,
            level.linf,
            level.steps as f64,
            level.newton as f64,
        ]);
        artifacts.field(&mut report, &format!("u_h{:e}", level.h), Some(cfg.t1), &field)?;
        levels.push(level);
    }
    report.tables.insert("errors".into(), table);

    let mut orders = Vec::new();
    for w in levels.windows(2) {
        let q = (w[0].l1 / w[1].l1).ln() / (w[0].h / w[1].h).ln();
        report.metric(keyed("order", "h", w[1].h), q);
        orders.push(q);
    }
    let fitted = fit_order(&levels);
    report.metric("order_fit", fitted);
    let order_min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    report.metric("order_min", if orders.is_empty() { f64::NAN } else { order_min });
    let decreasing = levels.windows(2).all(|w| w[1].l1 < w[0].l1);
    report.metric("errors_decreasing", f64::from(u8::from(decreasing)));
    let finest = levels.last().map_or(f64::NAN, |l| l.l1);
    report.metric("finest_l1_error", finest);
    let elapsed = started.elapsed().as_secs_f64();
    report.metric("runtime_seconds", elapsed);
    report.metric("max_final_error", cfg.max_final_error);
    report.metric("min_order", cfg.min_order);

    report.verdict(
        "errors_decrease",
        decreasing,
        &["errors_decreasing"],
        format!("relative L1 errors {:?}", levels.iter().map(|l| l.l1).collect::<Vec<_>>()),
    );
    report.verdict(
        "finest_error",
        finest < cfg.max_final_error,
        &["finest_l1_error", "max_final_error"],
        format!("finest relative L1 error {finest:.3e} < {}", cfg.max_final_error),
    );
    report.verdict(
        "order",
        order_min >= cfg.min_order,
        &["order_min", "min_order"],
        format!("smallest successive order {order_min:.3} >= {} (fit {fitted:.3})", cfg.min_order),
    );
    report.verdict(
        "runtime",
        elapsed < cfg.max_runtime_seconds,
        &["runtime_seconds"],
        format!("{elapsed:.2}s < {}s", cfg.max_runtime_seconds),
    );
    Ok(report)
}

/// Least-squares slope of `log(error)` against `log(h)`.
fn fit_order(levels: &[Level]) -> f64 {
    if levels.len() < 2 {
        return f64::NAN;
    }
    let pts: Vec<(f64, f64)> = levels.iter().map(|l| (l.h.ln(), l.l1.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
