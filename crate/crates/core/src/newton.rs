//! Damped Newton iteration with a Picard fallback.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, LinearOptions};

pub(crate) trait NonlinearSystem {
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> CsrMatrix;
    /// Frozen-coefficient system `A x_next = b` built at `x`.
    fn picard(&self, x: &[f64]) -> (CsrMatrix, Vec<f64>);
    /// Residual level below which rounding dominates; accepted as converged.
    fn noise_floor(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Relative size of the rounding floor, in units of the summed terms.
pub(crate) const ROUNDING: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions {
    /// Absolute tolerance on the max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    pub linear: LinearOptions,
    /// Failed line searches tolerated before switching to Picard.
    pub max_failures: usize,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct NewtonReport {
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    pub failed_line_searches: usize,
    pub residual: f64,
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn sq_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub(crate) fn solve(
    sys: &impl NonlinearSystem,
    mut x: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut report = NewtonReport::default();
    let mut r = sys.residual(&x);
    let mut picard = false;
    for _ in 0..opts.max_iter {
        report.residual = max_norm(&r);
        if !report.residual.is_finite() {
            break;
        }
        if report.residual <= opts.tol.max(sys.noise_floor(&x)) {
            return Ok((x, report));
        }
        if picard {
            report.picard_iterations += 1;
            let (a, b) = sys.picard(&x);
            x = linalg::solve(&a, &b, opts.linear)?;
            r = sys.residual(&x);
            continue;
        }
        report.newton_iterations += 1;
        let jac = sys.jacobian(&x);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = linalg::solve(&jac, &rhs, opts.linear)?;

        let merit = sq_norm(&r);
        let mut alpha = 1.0;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            let r_trial = sys.residual(&trial);
            let m = sq_norm(&r_trial);
            if m.is_finite() && m <= (1.0 - 1e-4 * alpha) * merit {
                x = trial;
                r = r_trial;
                accepted = true;
                break;
            }
            if m.is_finite() && best.as_ref().is_none_or(|b| m < b.0) {
                best = Some((m, trial, r_trial));
            }
            alpha *= 0.5;
        }
        if !accepted {
            report.failed_line_searches += 1;
            if let Some((m, trial, r_trial)) = best {
                if m < merit {
                    x = trial;
                    r = r_trial;
                }
            }
            if report.failed_line_searches >= opts.max_failures {
                picard = true;
            }
        }
    }
    report.residual = max_norm(&r);
    if report.residual <= opts.tol.max(sys.noise_floor(&x)) {
        return Ok((x, report));
    }
    Err(Error::NotConverged {
        iterations: report.newton_iterations + report.picard_iterations,
        residual: report.residual,
        tolerance: opts.tol,
    })
}
