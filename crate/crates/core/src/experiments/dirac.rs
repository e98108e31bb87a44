use serde::{Deserialize, Serialize};

use super::{keyed, ExperimentReport, Table};
use crate::error::{Error, Result};
use crate::exact::{dirac_trace_test, BarenblattParams, Quadrature, TestFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiracConfig {
    pub p: f64,
    pub n: usize,
    pub c: f64,
    pub plateau: TestFunction,
    pub classic: TestFunction,
    pub times: Vec<f64>,
    pub plateau_tol: f64,
    pub quadrature: Quadrature,
}

impl Default for DiracConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            n: 1,
            c: 1.0,
            plateau: TestFunction::plateau(1, 2.0, 0.6),
            classic: TestFunction::classic(1, 1.0),
            times: vec![1e-2, 1e-3, 1e-4],
            plateau_tol: 1e-6,
            quadrature: Quadrature::default(),
        }
    }
}

impl DiracConfig {
    pub fn validate(&self) -> Result<()> {
        BarenblattParams::new(self.n, self.p, self.c)?;
        if self.times.is_empty() || self.times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("times must be nonempty and positive".into()));
        }
        for phi in [&self.plateau, &self.classic] {
            if phi.center.len() != self.n || phi.center.iter().any(|c| *c != 0.0) {
                return Err(Error::Config("test functions must be centred at the origin".into()));
            }
            if !(phi.radius > 0.0) {
                return Err(Error::Config("test function radius must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Tabulates `int B(., t) phi` against `mass * phi(0)` for a plateau and a
/// classic bump.
pub fn run_dirac_trace(cfg: &DiracConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let b = BarenblattParams::new(cfg.n, cfg.p, cfg.c)?;
    let mut report = ExperimentReport::new("dirac", cfg)?;
    // Mass is conserved; evaluate it once at t = 1.
    let mass = b.mass(1.0, &cfg.quadrature)?;
    report.metric("mass", mass);
    report.metric("plateau_tol", cfg.plateau_tol);
    let origin = vec![0.0; cfg.n];
    let plateau = dirac_trace_test(&b, &cfg.plateau, &cfg.times, &cfg.quadrature)?;
    let classic = dirac_trace_test(&b, &cfg.classic, &cfg.times, &cfg.quadrature)?;
    let plateau_target = mass * cfg.plateau.eval(&origin);
    let classic_target = mass * cfg.classic.eval(&origin);

    let mut table = Table::new(&["t", "front_radius", "plateau_integral", "plateau_error", "classic_integral", "classic_error"]);
    let mut inside = 0usize;
    let mut plateau_worst: f64 = 0.0;
    let mut classic_errors = Vec::new();
    for (i, &t) in cfg.times.iter().enumerate() {
        let pe = (plateau[i] - plateau_target).abs();
        let ce = (classic[i] - classic_target).abs();
        let front = b.front_radius(t);
        if front < cfg.plateau.plateau_radius() {
            inside += 1;
            plateau_worst = plateau_worst.max(pe);
        }
        report.metric(keyed("plateau_error", "t", t), pe);
        report.metric(keyed("classic_error", "t", t), ce);
        classic_errors.push(ce);
        table.push(vec![t, front, plateau[i], pe, classic[i], ce]);
    }
    report.tables.insert("trace".into(), table);
    report.metric("plateau_times_inside", inside as f64);
    report.metric("plateau_error_max", plateau_worst);
    let decreasing = classic_errors.windows(2).all(|w| w[1] < w[0]);
    report.metric("classic_decreasing", f64::from(u8::from(decreasing)));

    report.verdict(
        "plateau_exact",
        inside > 0 && plateau_worst < cfg.plateau_tol,
        &["plateau_error_max", "plateau_times_inside", "plateau_tol"],
        format!("{inside} times with support inside the plateau, max error {plateau_worst:.3e} < {:e}", cfg.plateau_tol),
    );
    report.verdict(
        "classic_decreasing",
        decreasing,
        &["classic_decreasing"],
        format!("classic-bump errors {classic_errors:?} decrease along t"),
    );
    Ok(report)
}
