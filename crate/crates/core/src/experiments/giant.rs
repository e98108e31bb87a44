use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{keyed, Artifacts, ExperimentReport};
use crate::domain::{default_eps, Grid, MediumParams, ScalarField};
use crate::elliptic::{self, EllipticConfig};
use crate::error::{Error, Result};
use crate::parabolic::{self, SolveConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GiantConfig {
    pub p: f64,
    pub n: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    /// `None` uses `1e-8 / h` (unit data scale).
    pub eps: Option<f64>,
    pub elliptic: EllipticConfig,
    /// Constant starts of the independent flow runs.
    pub flow_starts: Vec<f64>,
    pub max_residual: f64,
    pub agreement: f64,
}

impl Default for GiantConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            n: 1,
            lo: vec![0.0],
            hi: vec![1.0],
            cells: vec![101],
            eps: None,
            elliptic: EllipticConfig::default(),
            flow_starts: vec![1e3, 1e4],
            max_residual: 1e-6,
            agreement: 1e-3,
        }
    }
}

impl GiantConfig {
    pub fn validate(&self) -> Result<()> {
        MediumParams::new(self.p, 0.0, self.n)?;
        self.elliptic.validate()?;
        self.grid()?;
        if self.flow_starts.is_empty() || self.flow_starts.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("flow_starts must be nonempty and positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(self.n, &self.lo, &self.hi, &self.cells)?))
    }

    pub fn params(&self, grid: &Grid) -> Result<MediumParams> {
        let eps = self.eps.unwrap_or_else(|| default_eps(1.0, grid.min_h()));
        MediumParams::new(self.p, eps, self.n)
    }
}

fn rel_diff(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    Ok(a.difference(b)?.norm_inf() / a.norm_inf().max(b.norm_inf()))
}

/// Solves for the giant profile and cross-checks it against long runs of
/// the rescaled flow from several constant starts.
pub fn run_giant(cfg: &GiantConfig, artifacts: &Artifacts) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let params = cfg.params(&grid)?;
    let mut report = ExperimentReport::new("giant", cfg)?;
    report.metric("eps", params.eps);

    let u = elliptic::solve_giant(&grid, &params, &cfg.elliptic)?;
    let flows: Vec<Result<ScalarField>> = cfg
        .flow_starts
        .par_iter()
        .map(|&s| elliptic::giant_flow(&grid, s, &params, &cfg.elliptic))
        .collect();
    let flows: Vec<ScalarField> = flows.into_iter().collect::<Result<_>>()?;

    let residual = elliptic::giant_residual(&u, &params);
    let interior = grid.interior_nodes();
    let min_interior = interior.iter().map(|&i| u.get(i)).fold(f64::INFINITY, f64::min);
    let boundary_max = grid.boundary_nodes().iter().map(|&i| u.get(i).abs()).fold(0.0, f64::max);
    let steady = parabolic::rescaled_step(
        &u,
        &SolveConfig {
            dt: cfg.elliptic.flow_ds,
            newton_tol: cfg.elliptic.newton_tol,
            linear_tol: cfg.elliptic.linear_tol,
            ..Default::default()
        },
        &params,
    )?;
    report.metric("max_u", u.max());
    report.metric("giant_residual", residual);
    report.metric("min_interior", min_interior);
    report.metric("boundary_max", boundary_max);
    report.metric("steady_step_change", rel_diff(&steady, &u)?);
    report.metric("max_residual", cfg.max_residual);
    report.metric("agreement", cfg.agreement);

    let mut worst_vs_flow: f64 = 0.0;
    for (s, w) in cfg.flow_starts.iter().zip(&flows) {
        let d = rel_diff(&u, w)?;
        report.metric(keyed("giant_vs_flow", "start", *s), d);
        worst_vs_flow = worst_vs_flow.max(d);
    }
    let mut worst_between: f64 = 0.0;
    for (i, a) in flows.iter().enumerate() {
        for b in &flows[i + 1..] {
            worst_between = worst_between.max(rel_diff(a, b)?);
        }
    }
    report.metric("giant_vs_flow_max", worst_vs_flow);
    report.metric("flow_starts_max_diff", worst_between);

    report.verdict(
        "positive_interior",
        min_interior > 0.0,
        &["min_interior"],
        format!("min over interior nodes {min_interior:.3e} > 0"),
    );
    report.verdict(
        "zero_boundary",
        boundary_max == 0.0,
        &["boundary_max"],
        format!("max |U| on the boundary = {boundary_max:e}"),
    );
    report.verdict(
        "residual",
        residual < cfg.max_residual,
        &["giant_residual", "max_residual"],
        format!("giant residual {residual:.3e} < {:e}", cfg.max_residual),
    );
    report.verdict(
        "flow_cross_check",
        worst_vs_flow < cfg.agreement,
        &["giant_vs_flow_max", "agreement"],
        format!("max relative gap to flow limits {worst_vs_flow:.3e} < {:e}", cfg.agreement),
    );
    report.verdict(
        "start_independence",
        flows.len() >= 2 && worst_between < cfg.agreement,
        &["flow_starts_max_diff", "agreement"],
        format!("flow limits from {:?} differ by {worst_between:.3e}", cfg.flow_starts),
    );
    artifacts.field(&mut report, "giant", None, &u)?;
    Ok(report)
}
