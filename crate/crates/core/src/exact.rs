//! Closed-form solutions and finite-difference residual oracles.

use serde::{Deserialize, Serialize};

use crate::domain::ScalarField;
use crate::error::{Error, Result};
use crate::operator::flux_coefficient;

/// Self-similar source solution with exponent `lambda = n(p-2) + p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarenblattParams {
    pub n: usize,
    pub p: f64,
    pub c: f64,
    lambda: f64,
}

impl BarenblattParams {
    pub fn new(n: usize, p: f64, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        if !(p > 2.0) {
            return Err(Error::param(format!("requires p > 2 (slow-diffusion regime), got p = {p}")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param(format!("Barenblatt constant must be > 0, got {c}")));
        }
        Ok(Self {
            n,
            p,
            c,
            lambda: n as f64 * (p - 2.0) + p,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn coefficient(&self) -> f64 {
        (self.p - 2.0) / self.p * self.lambda.powf(1.0 / (1.0 - self.p))
    }

    /// Radius of the support ball at time `t`.
    pub fn front_radius(&self, t: f64) -> f64 {
        let p = self.p;
        t.powf(1.0 / self.lambda)
            * (self.c * p / (p - 2.0)).powf((p - 1.0) / p)
            * self.lambda.powf(1.0 / p)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        check_time(t)?;
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(self.eval_radial(r, t))
    }

    pub(crate) fn eval_radial(&self, r: f64, t: f64) -> f64 {
        let p = self.p;
        let xi = r * t.powf(-1.0 / self.lambda);
        let bracket = self.c - self.coefficient() * xi.powf(p / (p - 1.0));
        if bracket <= 0.0 {
            return 0.0;
        }
        t.powf(-(self.n as f64) / self.lambda) * bracket.powf((p - 1.0) / (p - 2.0))
    }

    /// Nodal samples of the solution at time `t`.
    pub fn sample(&self, grid: &std::sync::Arc<crate::domain::Grid>, t: f64) -> Result<ScalarField> {
        check_time(t)?;
        let dim = grid.dim();
        ScalarField::from_fn(grid.clone(), |x| {
            let r = x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            self.eval_radial(r, t)
        })
    }

    /// Total mass `\int B(x, t) dx`, which is independent of `t`.
    pub fn mass(&self, t: f64, quad: &Quadrature) -> Result<f64> {
        check_time(t)?;
        let radius = self.front_radius(t);
        let area = unit_sphere_area(self.n);
        let n = self.n as i32;
        quad.integrate_1d(0.0, radius, |r| area * r.powi(n - 1) * self.eval_radial(r, t))
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::param(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Surface area of the unit sphere in `R^n` (2 for n = 1).
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * unit_sphere_area(n - 2),
    }
}

/// Composite midpoint rule, doubling the cell count until successive values
/// agree to `rel_tol`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrature {
    pub initial_cells: usize,
    pub rel_tol: f64,
    pub max_levels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            initial_cells: 64,
            rel_tol: 1e-8,
            max_levels: 22,
        }
    }
}

impl Quadrature {
    pub fn integrate_1d(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut cells = self.initial_cells.max(1);
        let mut prev = midpoint(a, b, cells, &f);
        for _ in 0..self.max_levels {
            cells *= 2;
            let next = midpoint(a, b, cells, &f);
            if (next - prev).abs() <= self.rel_tol * next.abs() || next == prev {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::NotConverged {
            iterations: self.max_levels,
            residual: (prev - midpoint(a, b, cells, &f)).abs(),
            tolerance: self.rel_tol,
        })
    }

    /// Tensor midpoint rule on the square `[a, b]^2`.
    pub fn integrate_2d(&self, a: f64, b: f64, f: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let mut cells = self.initial_cells.max(1);
        let mut prev = midpoint_2d(a, b, cells, &f);
        // 2D levels are capped separately: each doubling costs four times more.
        for _ in 0..self.max_levels.min(6) {
            cells *= 2;
            let next = midpoint_2d(a, b, cells, &f);
            if (next - prev).abs() <= self.rel_tol * next.abs() || next == prev {
                return Ok(next);
            }
            prev = next;
        }
        Ok(prev)
    }
}

fn midpoint(a: f64, b: f64, cells: usize, f: &impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / cells as f64;
    (0..cells).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn midpoint_2d(a: f64, b: f64, cells: usize, f: &impl Fn(f64, f64) -> f64) -> f64 {
    let h = (b - a) / cells as f64;
    let mut acc = 0.0;
    for j in 0..cells {
        let y = a + (j as f64 + 0.5) * h;
        for i in 0..cells {
            acc += f(a + (i as f64 + 0.5) * h, y);
        }
    }
    acc * h * h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BumpShape {
    /// Identically 1 on `|x - c| <= fraction * radius`, smooth roll-off to 0.
    Plateau { fraction: f64 },
    /// `exp(1 - 1/(1 - rho^2))`, curved at the centre.
    Classic,
}

/// Smooth compactly supported test function centred at `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    pub shape: BumpShape,
}

impl TestFunction {
    pub fn plateau(n: usize, radius: f64, fraction: f64) -> Self {
        Self {
            center: vec![0.0; n],
            radius,
            amplitude: 1.0,
            shape: BumpShape::Plateau { fraction },
        }
    }

    pub fn classic(n: usize, radius: f64) -> Self {
        Self {
            center: vec![0.0; n],
            radius,
            amplitude: 1.0,
            shape: BumpShape::Classic,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let rho = self
            .center
            .iter()
            .zip(x)
            .map(|(c, v)| (v - c).powi(2))
            .sum::<f64>()
            .sqrt()
            / self.radius;
        if rho >= 1.0 {
            return 0.0;
        }
        let shape = match self.shape {
            BumpShape::Plateau { fraction } => {
                if rho <= fraction {
                    1.0
                } else {
                    let s = (1.0 - rho) / (1.0 - fraction);
                    let a = (-1.0 / s).exp();
                    let b = (-1.0 / (1.0 - s)).exp();
                    a / (a + b)
                }
            }
            BumpShape::Classic => (1.0 - 1.0 / (1.0 - rho * rho)).exp(),
        };
        self.amplitude * shape
    }

    /// Half-width of the plateau (0 for the classic bump).
    pub fn plateau_radius(&self) -> f64 {
        match self.shape {
            BumpShape::Plateau { fraction } => fraction * self.radius,
            BumpShape::Classic => 0.0,
        }
    }
}

/// `\int B(x, t) phi(x) dx` for each `t`; these converge to `mass * phi(0)`.
pub fn dirac_trace_test(
    params: &BarenblattParams,
    phi: &TestFunction,
    times: &[f64],
    quad: &Quadrature,
) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            check_time(t)?;
            let radius = params.front_radius(t);
            match params.n {
                1 => quad.integrate_1d(-radius, radius, |x| {
                    params.eval_radial(x.abs(), t) * phi.eval(&[x])
                }),
                2 => quad.integrate_2d(-radius, radius, |x, y| {
                    params.eval_radial((x * x + y * y).sqrt(), t) * phi.eval(&[x, y])
                }),
                n => Err(Error::param(format!("trace test supports n = 1, 2; got {n}"))),
            }
        })
        .collect()
}

/// `V(x, t) = t^{-1/(p-2)} U(x)` built from a nonnegative profile vanishing
/// on the boundary.
#[derive(Clone, Debug)]
pub struct SeparableSolution {
    profile: ScalarField,
    p: f64,
}

impl SeparableSolution {
    pub fn new(profile: ScalarField, p: f64) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::param(format!("requires p > 2, got {p}")));
        }
        if profile.min() < 0.0 {
            return Err(Error::param("separable profile must be nonnegative"));
        }
        let grid = profile.grid();
        if grid
            .boundary_nodes()
            .iter()
            .any(|&i| profile.get(i) != 0.0)
        {
            return Err(Error::param("separable profile must vanish on the boundary"));
        }
        Ok(Self { profile, p })
    }

    pub fn profile(&self) -> &ScalarField {
        &self.profile
    }

    pub fn amplitude(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(t.powf(-1.0 / (self.p - 2.0)))
    }

    pub fn eval(&self, node: usize, t: f64) -> Result<f64> {
        Ok(self.amplitude(t)? * self.profile.get(node))
    }
}

/// Steps for the central-difference residual oracle.
#[derive(Clone, Copy, Debug)]
pub struct FdSteps {
    pub space: f64,
    pub time: f64,
}

/// Central finite-difference approximation of `u_t - div(|grad u|^{p-2} grad u)`
/// at `(x, t)`, second order in both steps. Uses the medium's `eps`.
pub fn pde_residual(
    u: &dyn Fn(&[f64], f64) -> f64,
    x: &[f64],
    t: f64,
    params: &crate::domain::MediumParams,
    steps: FdSteps,
) -> Result<f64> {
    check_time(t - steps.time)?;
    let h = steps.space;
    let n = x.len();
    let ut = (u(x, t + steps.time) - u(x, t - steps.time)) / (2.0 * steps.time);

    let shifted = |base: &[f64], d: usize, by: f64| {
        let mut y = base.to_vec();
        y[d] += by;
        y
    };
    // Flux component d at the face x + s*h/2*e_d (s = +-1).
    let face_flux = |d: usize, s: f64| {
        let near = if s > 0.0 { x.to_vec() } else { shifted(x, d, -h) };
        let far = shifted(&near, d, h);
        let face = shifted(x, d, s * 0.5 * h);
        let normal = (u(&far, t) - u(&near, t)) / h;
        let mut norm_sq = normal * normal;
        for e in (0..n).filter(|&e| e != d) {
            let tang = (u(&shifted(&face, e, h), t) - u(&shifted(&face, e, -h), t)) / (2.0 * h);
            norm_sq += tang * tang;
        }
        flux_coefficient(norm_sq, params) * normal
    };
    let div: f64 = (0..n).map(|d| (face_flux(d, 1.0) - face_flux(d, -1.0)) / h).sum();
    Ok(ut - div)
}
