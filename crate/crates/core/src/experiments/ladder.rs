//! Truncation-ladder experiments: constant data everywhere (minorant) and
//! large data on a sub-box only (propagation).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_ladder, keyed, Artifacts, ExperimentReport, Table};
use crate::domain::{default_eps, Grid, MediumParams, ScalarField};
use crate::elliptic::{self, EllipticConfig};
use crate::error::{Error, Result};
use crate::parabolic::{self, BoundaryCondition, SolveConfig};

const JOINT_LIMIT_NOTE: &str = "the rate bound concerns a joint limit (x, t) -> (x0, 0); \
     the ladder samples fixed probes along time slices, a strictly weaker observation";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinorantConfig {
    pub p: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    pub ladder: Vec<f64>,
    pub dt: f64,
    /// `[t_start, t_end]` of the probe window.
    pub window: [f64; 2],
    pub probes: Vec<Vec<f64>>,
    /// Constant nonnegative Dirichlet data on the lateral boundary.
    pub lateral: f64,
    pub eps: Option<f64>,
    pub slack: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub giant: EllipticConfig,
}

impl Default for MinorantConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            lo: vec![0.0],
            hi: vec![1.0],
            cells: vec![101],
            ladder: default_ladder(),
            dt: 1e-4,
            window: [0.01, 0.1],
            probes: vec![vec![0.25], vec![0.5], vec![0.75]],
            lateral: 0.0,
            eps: None,
            slack: 0.05,
            newton_tol: 1e-10,
            newton_max: 200,
            giant: EllipticConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub p: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    /// The sub-box `E` carrying the value `k`.
    pub e_lo: Vec<f64>,
    pub e_hi: Vec<f64>,
    /// Finite data off `E`.
    pub g: f64,
    pub lateral: f64,
    pub ladder: Vec<f64>,
    pub dt: f64,
    /// `[t_start, t_end]` of the early probe window.
    pub window: [f64; 2],
    pub probes: Vec<Vec<f64>>,
    /// Relative gap between Dirichlet and Neumann-zero control runs at
    /// which the lateral boundary counts as felt at the probes.
    pub control_tol: f64,
    pub threshold: f64,
    pub eps: Option<f64>,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub giant: EllipticConfig,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            lo: vec![0.0],
            hi: vec![1.0],
            cells: vec![101],
            e_lo: vec![0.0],
            e_hi: vec![0.3],
            g: 0.0,
            lateral: 0.0,
            ladder: default_ladder(),
            dt: 1e-4,
            window: [0.01, 0.1],
            probes: vec![vec![0.9]],
            control_tol: 0.01,
            threshold: 0.01,
            eps: None,
            newton_tol: 1e-10,
            newton_max: 200,
            giant: EllipticConfig::default(),
        }
    }
}

fn check_common(p: f64, grid: &Grid, ladder: &[f64], dt: f64, probes: &[Vec<f64>], lateral: f64) -> Result<()> {
    MediumParams::new(p, 0.0, grid.dim())?;
    if ladder.is_empty() {
        return Err(Error::Config("k-ladder is empty".into()));
    }
    if ladder.iter().any(|k| !(*k > 0.0)) || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("k-ladder must be positive and increasing".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    if probes.is_empty() {
        return Err(Error::Config("no probes".into()));
    }
    for x in probes {
        if x.len() != grid.dim() || !grid.contains_interior(x) {
            return Err(Error::Config(format!("probe {x:?} is not inside the domain")));
        }
    }
    if !(lateral >= 0.0) {
        return Err(Error::Config("lateral data must be >= 0".into()));
    }
    Ok(())
}

fn check_window([a, b]: [f64; 2], dt: f64) -> Result<()> {
    if a < 3.0 * dt || b <= a {
        return Err(Error::Config(format!(
            "window [{a}, {b}] must start at or after 3 dt = {} and be nonempty",
            3.0 * dt
        )));
    }
    Ok(())
}

impl MinorantConfig {
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(self.lo.len(), &self.lo, &self.hi, &self.cells)?))
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        check_common(self.p, &grid, &self.ladder, self.dt, &self.probes, self.lateral)?;
        check_window(self.window, self.dt)
    }
}

impl PropagationConfig {
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(self.lo.len(), &self.lo, &self.hi, &self.cells)?))
    }

    pub fn in_e(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.e_lo.iter().zip(&self.e_hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        check_common(self.p, &grid, &self.ladder, self.dt, &self.probes, self.lateral)?;
        if self.e_lo.len() != grid.dim() || self.e_hi.len() != grid.dim() {
            return Err(Error::Config("E must have the grid dimension".into()));
        }
        if self.e_lo.iter().zip(&self.e_hi).any(|(a, b)| b <= a) {
            return Err(Error::Config("E must have positive measure".into()));
        }
        if !(self.g >= 0.0) {
            return Err(Error::Config("data off E must be >= 0".into()));
        }
        if self.probes.iter().any(|x| self.in_e(x)) {
            return Err(Error::Config("propagation probes must lie outside E".into()));
        }
        check_window(self.window, self.dt)
    }
}

/// Giant profile and the regularisation used for the whole ladder: one
/// `eps` for every rung keeps the runs comparable, sized from the giant
/// solution `U / t` at the start of the window.
fn giant_and_eps(
    grid: &Arc<Grid>,
    p: f64,
    eps: Option<f64>,
    t_start: f64,
    giant: &EllipticConfig,
) -> Result<(ScalarField, MediumParams)> {
    let h = grid.min_h();
    let eps = match eps {
        Some(e) => e,
        None => {
            let trial = MediumParams::new(p, default_eps(1.0, h), grid.dim())?;
            let u = elliptic::solve_giant(grid, &trial, giant)?;
            default_eps(u.max() * t_start.powf(-trial.separable_exponent()), h)
        }
    };
    let params = MediumParams::new(p, eps, grid.dim())?;
    let u = elliptic::solve_giant(grid, &params, giant)?;
    Ok((u, params))
}

struct Rung {
    /// `max (V - u)_+ / V` over the window and interior nodes.
    violation: f64,
    /// `min t^{1/(p-2)} u(x0, t)` per probe over the window.
    rate: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_rung(
    u0: &ScalarField,
    bc: &BoundaryCondition,
    params: &MediumParams,
    solver: &SolveConfig,
    window: [f64; 2],
    probes: &[usize],
    giant: Option<&ScalarField>,
    zero_below: f64,
) -> Result<Rung> {
    let grid = u0.grid().clone();
    let interior = grid.interior_nodes();
    let e = params.separable_exponent();
    let mut rung = Rung {
        violation: 0.0,
        rate: vec![f64::INFINITY; probes.len()],
    };
    let slack = 1e-9 * solver.dt;
    parabolic::solve_observed(u0, bc, 0.0, solver, params, &[], |t, u| {
        if t < window[0] - slack || t > window[1] + slack {
            return Ok(());
        }
        let scale = t.powf(e);
        if let Some(giant) = giant {
            for &i in &interior {
                let v = giant.get(i) / scale;
                if v > 0.0 {
                    rung.violation = rung.violation.max((v - u[i]).max(0.0) / v);
                }
            }
        }
        for (m, &i) in rung.rate.iter_mut().zip(probes) {
            let value = if u[i].abs() < zero_below { 0.0 } else { u[i] };
            *m = m.min(scale * value);
        }
        Ok(())
    })?;
    Ok(rung)
}

fn probe_nodes(grid: &Grid, probes: &[Vec<f64>]) -> Vec<usize> {
    probes.iter().map(|x| grid.nearest_node(x)).collect()
}

/// Constant data `k` on the whole box, compared against `t^{-1/(p-2)} U`.
pub fn run_minorant(cfg: &MinorantConfig, artifacts: &Artifacts) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let (giant, params) = giant_and_eps(&grid, cfg.p, cfg.eps, cfg.window[0], &cfg.giant)?;
    let mut report = ExperimentReport::new("minorant", cfg)?;
    report.metric("eps", params.eps);
    report.metric("slack", cfg.slack);
    report.note(JOINT_LIMIT_NOTE);
    let probes = probe_nodes(&grid, &cfg.probes);
    let solver = SolveConfig {
        dt: cfg.dt,
        t_end: cfg.window[1],
        newton_tol: cfg.newton_tol,
        newton_max: cfg.newton_max,
        ..Default::default()
    };
    let bc = BoundaryCondition::dirichlet_const(&grid, cfg.lateral);
    let rungs: Vec<Result<Rung>> = cfg
        .ladder
        .par_iter()
        .map(|&k| {
            let mut values = vec![k; grid.len()];
            for i in grid.boundary_nodes() {
                values[i] = cfg.lateral;
            }
            let u0 = ScalarField::new(grid.clone(), values)?;
            run_rung(&u0, &bc, &params, &solver, cfg.window, &probes, Some(&giant), 0.0)
        })
        .collect();
    let rungs: Vec<Rung> = rungs.into_iter().collect::<Result<_>>()?;

    let mut cols = vec!["k".to_string(), "violation".to_string()];
    for j in 0..probes.len() {
        cols.push(format!("rate_over_u_{j}"));
    }
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for (k, r) in cfg.ladder.iter().zip(&rungs) {
        report.metric(keyed("violation", "k", *k), r.violation);
        let mut row = vec![*k, r.violation];
        for (j, &i) in probes.iter().enumerate() {
            let ratio = r.rate[j] / giant.get(i);
            report.metric(keyed(&format!("rate_over_u_{j}"), "k", *k), ratio);
            row.push(ratio);
        }
        table.push(row);
    }
    report.tables.insert("ladder".into(), table);
    let max_v = giant.max() / cfg.window[0].powf(params.separable_exponent());
    report.metric("max_v_in_window", max_v);

    let v: Vec<f64> = rungs.iter().map(|r| r.violation).collect();
    let monotone = v.windows(2).all(|w| w[1] <= w[0]);
    report.metric("violation_monotone", f64::from(u8::from(monotone)));
    let top = rungs.last().expect("ladder is nonempty");
    report.metric("violation_top", top.violation);
    let worst_rate = probes
        .iter()
        .enumerate()
        .map(|(j, &i)| top.rate[j] / giant.get(i))
        .fold(f64::INFINITY, f64::min);
    report.metric("rate_over_u_top_min", worst_rate);
    let rate_monotone = (0..probes.len()).all(|j| rungs.windows(2).all(|w| w[1].rate[j] >= w[0].rate[j]));
    report.metric("rate_monotone", f64::from(u8::from(rate_monotone)));

    report.verdict(
        "violation_decreasing",
        monotone,
        &["violation_monotone"],
        format!("violation along the ladder {v:?} is nonincreasing"),
    );
    report.verdict(
        "violation_small",
        top.violation < cfg.slack,
        &["violation_top", "slack"],
        format!("top-rung violation {:.3e} < {}", top.violation, cfg.slack),
    );
    report.verdict(
        "rate",
        worst_rate >= 1.0 - cfg.slack,
        &["rate_over_u_top_min", "slack"],
        format!("top-rung min_t t^(1/(p-2)) u / U = {worst_rate:.4} >= {}", 1.0 - cfg.slack),
    );
    report.verdict(
        "rate_monotone_in_k",
        rate_monotone,
        &["rate_monotone"],
        "rate functional never decreases in k",
    );
    artifacts.field(&mut report, "giant", None, &giant)?;
    Ok(report)
}

/// Value `k` on `E`, `g` elsewhere; tracks the rate functional at probes
/// outside `E` across the ladder.
pub fn run_propagation(cfg: &PropagationConfig, artifacts: &Artifacts) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let window = cfg.window;
    let (giant, params) = giant_and_eps(&grid, cfg.p, cfg.eps, window[0], &cfg.giant)?;
    let mut report = ExperimentReport::new("propagation", cfg)?;
    report.metric("eps", params.eps);
    report.metric("threshold", cfg.threshold);
    report.note(JOINT_LIMIT_NOTE);
    report.metric("window_start", window[0]);
    report.metric("window_end", window[1]);
    let probes = probe_nodes(&grid, &cfg.probes);

    let data = |k: f64| -> Result<ScalarField> {
        let mut values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.coord(i);
                if cfg.in_e(&x[..grid.dim()]) {
                    k
                } else {
                    cfg.g
                }
            })
            .collect();
        for i in grid.boundary_nodes() {
            values[i] = cfg.lateral;
        }
        ScalarField::new(grid.clone(), values)
    };
    let solver = SolveConfig {
        dt: cfg.dt,
        t_end: window[1],
        newton_tol: cfg.newton_tol,
        newton_max: cfg.newton_max,
        ..Default::default()
    };
    let dirichlet = BoundaryCondition::dirichlet_const(&grid, cfg.lateral);

    // Control: top rung with and without the lateral data; the first time
    // they differ at a probe is reported next to the window.
    let k_top = 2.0 * cfg.ladder[cfg.ladder.len() - 1];
    let record = |bc: &BoundaryCondition| -> Result<Vec<(f64, Vec<f64>)>> {
        let mut series = Vec::new();
        parabolic::solve_observed(&data(k_top)?, bc, 0.0, &solver, &params, &[], |t, u| {
            series.push((t, probes.iter().map(|&i| u[i]).collect()));
            Ok(())
        })?;
        Ok(series)
    };
    let with_bc = record(&dirichlet)?;
    let without = record(&BoundaryCondition::neumann_zero(&grid))?;
    let felt = with_bc
        .iter()
        .zip(&without)
        .find(|((_, a), (_, b))| {
            a.iter()
                .zip(b)
                .any(|(x, y)| (x - y).abs() > cfg.control_tol * y.abs().max(f64::MIN_POSITIVE))
        })
        .map_or(f64::INFINITY, |((t, _), _)| *t);
    report.metric("boundary_felt_at", felt);
    if felt < window[1] {
        report.note(format!(
            "at k = {k_top:e} the lateral boundary is felt at the probes from t = {felt:e}, inside the window"
        ));
    }

    let mut ks: Vec<f64> = Vec::new();
    for &k in &cfg.ladder {
        ks.push(k);
        ks.push(2.0 * k);
    }
    let rungs: Vec<Result<Rung>> = ks
        .par_iter()
        .map(|&k| {
            let floor = cfg.newton_tol * k;
            run_rung(&data(k)?, &dirichlet, &params, &solver, window, &probes, None, floor)
        })
        .collect();
    let rungs: Vec<Rung> = rungs.into_iter().collect::<Result<_>>()?;

    let mut table = Table::new(&["k", "probe", "m_k", "m_2k", "ratio", "m_k_over_u"]);
    let mut all_grow = true;
    let mut min_ratio = f64::INFINITY;
    for (r, &k) in cfg.ladder.iter().enumerate() {
        let (lo, hi) = (&rungs[2 * r], &rungs[2 * r + 1]);
        for (j, &i) in probes.iter().enumerate() {
            let (m, m2) = (lo.rate[j], hi.rate[j]);
            let ratio = if m > 0.0 { m2 / m } else { f64::NAN };
            let key = format!("ratio_{j}");
            report.metric(keyed(&format!("m_{j}"), "k", k), m);
            report.metric(keyed(&key, "k", k), ratio);
            table.push(vec![k, j as f64, m, m2, ratio, m / giant.get(i)]);
            // NaN (m_k = 0, front not yet arrived) counts as a failure.
            all_grow &= ratio > 1.0 + cfg.threshold;
            if ratio.is_nan() || min_ratio.is_nan() {
                min_ratio = f64::NAN;
            } else {
                min_ratio = min_ratio.min(ratio);
            }
        }
    }
    report.tables.insert("ladder".into(), table);
    let mut monotone = true;
    for j in 0..probes.len() {
        monotone &= rungs.windows(2).all(|w| w[1].rate[j] >= w[0].rate[j]);
    }
    report.metric("ratio_min", min_ratio);
    report.metric("rate_monotone", f64::from(u8::from(monotone)));
    for (j, &i) in probes.iter().enumerate() {
        report.metric(format!("giant_at_probe_{j}"), giant.get(i));
    }

    report.verdict(
        "non_stabilization",
        all_grow,
        &["ratio_min", "threshold"],
        format!(
            "m_2k / m_k > {} at every rung (smallest ratio {min_ratio:.4}; NaN when m_k = 0)",
            1.0 + cfg.threshold
        ),
    );
    report.verdict(
        "rate_monotone_in_k",
        monotone,
        &["rate_monotone"],
        "rate functional never decreases in k",
    );
    artifacts.field(&mut report, "giant", None, &giant)?;
    Ok(report)
}
