use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use super::grid::{Grid, Point};
use crate::error::{Error, Result};

/// Space-time region `{ x in box, t0 + a.x < t < t_end }`.
#[derive(Clone, Debug)]
pub struct SlantedDomain {
    grid: Arc<Grid>,
    t0: f64,
    slope: Vec<f64>,
    t_end: f64,
    activation: Vec<f64>,
}

impl SlantedDomain {
    pub fn new(grid: Arc<Grid>, t0: f64, slope: &[f64], t_end: f64) -> Result<Self> {
        if slope.len() != grid.dim() {
            return Err(Error::param(format!(
                "slope has {} components for a {}-dimensional grid",
                slope.len(),
                grid.dim()
            )));
        }
        let activation: Vec<f64> = (0..grid.len())
            .map(|i| affine(t0, slope, &grid.coord(i)))
            .collect();
        let latest = activation.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(latest < t_end) {
            return Err(Error::param(format!(
                "latest activation time {latest} must precede the end time {t_end}"
            )));
        }
        Ok(Self {
            grid,
            t0,
            slope: slope.to_vec(),
            t_end,
            activation,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Activation time `Psi(x_i)` of every node.
    pub fn activation(&self) -> &[f64] {
        &self.activation
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        affine(self.t0, &self.slope, x)
    }

    pub fn is_flat(&self) -> bool {
        self.slope.iter().all(|&a| a == 0.0)
    }
}

fn affine(t0: f64, slope: &[f64], x: &[f64]) -> f64 {
    // a = 0 must give exactly t0, so the products are only added when nonzero.
    slope
        .iter()
        .zip(x)
        .fold(t0, |acc, (&a, &xi)| if a == 0.0 { acc } else { acc + a * xi })
}

/// A discrete ball split by the hyperplane through its centre with the given
/// normal. `b_minus` lies on the side where `normal . (x - center) < 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfBallPartition {
    pub center: Vec<f64>,
    pub radius: f64,
    pub normal: Vec<f64>,
    pub b_minus: Vec<usize>,
    pub b_plus: Vec<usize>,
    pub interface: Vec<usize>,
    half_width: f64,
}

pub fn partition_half_ball(
    grid: &Grid,
    center: &[f64],
    radius: f64,
    normal: &[f64],
) -> Result<HalfBallPartition> {
    let dim = grid.dim();
    if center.len() != dim || normal.len() != dim {
        return Err(Error::Partition("center/normal dimension mismatch".into()));
    }
    let norm = normal.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Partition(
            "no level surface through the center: the slope is zero (flat activation)".into(),
        ));
    }
    if !(radius > 0.0) {
        return Err(Error::Partition(format!("radius must be positive, got {radius}")));
    }
    for d in 0..dim {
        if center[d] - radius <= grid.lo()[d] || center[d] + radius >= grid.hi()[d] {
            return Err(Error::Partition(format!(
                "ball of radius {radius} around {center:?} touches the domain boundary"
            )));
        }
    }
    let unit: Vec<f64> = normal.iter().map(|a| a / norm).collect();
    // Any single grid step changes the signed distance by at most this much,
    // so a closed band of this total width can never be jumped over.
    let half_width = 0.5
        * (0..dim)
            .map(|d| grid.h()[d] * unit[d].abs())
            .fold(0.0, f64::max);

    let mut b_minus = Vec::new();
    let mut b_plus = Vec::new();
    let mut interface = Vec::new();
    for i in 0..grid.len() {
        let x = grid.coord(i);
        let dist = distance(&x, center);
        if dist >= radius * (1.0 - 1e-9) {
            continue;
        }
        let s = signed_distance(&x, center, &unit);
        if s.abs() <= half_width * (1.0 + 1e-9) {
            interface.push(i);
        } else if s < 0.0 {
            b_minus.push(i);
        } else {
            b_plus.push(i);
        }
    }
    if b_minus.is_empty() {
        return Err(Error::Partition("empty lower half-ball".into()));
    }
    if interface.is_empty() {
        return Err(Error::Partition("no grid node near the level surface".into()));
    }
    Ok(HalfBallPartition {
        center: center.to_vec(),
        radius,
        normal: unit,
        b_minus,
        b_plus,
        interface,
        half_width,
    })
}

impl HalfBallPartition {
    /// Boundary data for the barrier problem: 1 on the level-surface side of
    /// the ball, 0 elsewhere. With `plateau = Some(f)` the unit value is kept
    /// only within tangential distance `f * radius` of the centre and rolled
    /// off smoothly to 0 at the rim.
    pub fn barrier_data(&self, grid: &Arc<Grid>, plateau: Option<f64>) -> ScalarField {
        let mut values = vec![0.0; grid.len()];
        for (i, v) in values.iter_mut().enumerate() {
            let x = grid.coord(i);
            if distance(&x, &self.center) >= self.radius * (1.0 - 1e-9) {
                continue;
            }
            let s = signed_distance(&x, &self.center, &self.normal);
            if s < -self.half_width * (1.0 + 1e-9) {
                continue;
            }
            *v = match plateau {
                None => 1.0,
                Some(f) => {
                    let tang = tangential_distance(&x, &self.center, &self.normal);
                    rolloff(tang / self.radius, f)
                }
            };
        }
        ScalarField::new(grid.clone(), values).expect("barrier data are finite")
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }
}

fn distance(x: &Point, c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(d, cd)| (x[d] - cd).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn signed_distance(x: &Point, c: &[f64], unit: &[f64]) -> f64 {
    unit.iter().enumerate().map(|(d, u)| u * (x[d] - c[d])).sum()
}

fn tangential_distance(x: &Point, c: &[f64], unit: &[f64]) -> f64 {
    let s = signed_distance(x, c, unit);
    c.iter()
        .enumerate()
        .map(|(d, cd)| (x[d] - cd - s * unit[d]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// 1 on `[0, plateau]`, C-infinity decay to 0 at `rho = 1`.
fn rolloff(rho: f64, plateau: f64) -> f64 {
    if rho <= plateau {
        return 1.0;
    }
    if rho >= 1.0 {
        return 0.0;
    }
    let s = (1.0 - rho) / (1.0 - plateau);
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Arc<Grid> {
        Arc::new(Grid::build(1, &[0.0], &[1.0], &[11]).unwrap())
    }

    #[test]
    fn flat_slope_activates_at_t0_exactly() {
        let g = Arc::new(Grid::build(2, &[-0.37, 0.1], &[0.9, 1.3], &[9, 7]).unwrap());
        let t0 = 0.123456789;
        let dom = SlantedDomain::new(g, t0, &[0.0, 0.0], 1.0).unwrap();
        assert!(dom.activation().iter().all(|&t| t == t0));
        assert!(dom.is_flat());
    }

    #[test]
    fn activation_must_precede_end() {
        assert!(SlantedDomain::new(line(), 0.0, &[0.5], 0.5).is_err());
        assert!(SlantedDomain::new(line(), 0.0, &[0.5], 0.51).is_ok());
    }

    #[test]
    fn identity_level_set_1d() {
        let g = line();
        let part = partition_half_ball(&g, &[0.5], 0.3, &[1.0]).unwrap();
        let xs: Vec<f64> = part.b_minus.iter().map(|&i| g.coord(i)[0]).collect();
        assert_eq!(part.b_minus, vec![3, 4]);
        assert!(xs.iter().all(|&x| x > 0.2 && x < 0.5));
        assert_eq!(part.interface, vec![5]);
        assert_eq!(part.b_plus, vec![6, 7]);
    }

    #[test]
    fn left_half_disc_2d() {
        let g = Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[21, 21]).unwrap();
        let part = partition_half_ball(&g, &[0.5, 0.5], 0.3, &[1.0, 0.0]).unwrap();
        for &i in &part.b_minus {
            let x = g.coord(i);
            assert!(x[0] < 0.5);
            assert!((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) < 0.09);
        }
        for &i in &part.interface {
            assert!((g.coord(i)[0] - 0.5).abs() < 1e-12);
        }
        assert_eq!(part.b_minus.len(), part.b_plus.len());
    }

    #[test]
    fn flat_normal_is_rejected() {
        let err = partition_half_ball(&line(), &[0.5], 0.3, &[0.0]).unwrap_err();
        assert!(err.to_string().contains("no level surface"));
    }

    #[test]
    fn ball_touching_boundary_is_rejected() {
        assert!(partition_half_ball(&line(), &[0.2], 0.3, &[1.0]).is_err());
    }

    #[test]
    fn sets_are_disjoint_for_oblique_normal() {
        let g = Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[31, 31]).unwrap();
        let part = partition_half_ball(&g, &[0.5, 0.45], 0.35, &[0.3, 0.7]).unwrap();
        let mut all: Vec<usize> = part
            .b_minus
            .iter()
            .chain(&part.b_plus)
            .chain(&part.interface)
            .copied()
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
        // No lower-half node has an axis neighbour on the upper side.
        for &i in &part.b_minus {
            for d in 0..2 {
                for step in [-1, 1] {
                    let j = g.neighbor(i, d, step).unwrap();
                    assert!(!part.b_plus.contains(&j));
                }
            }
        }
    }

    #[test]
    fn rounded_data_keep_plateau() {
        let g = Arc::new(Grid::build(2, &[0.0, 0.0], &[1.0, 1.0], &[41, 41]).unwrap());
        let part = partition_half_ball(&g, &[0.5, 0.5], 0.3, &[1.0, 0.0]).unwrap();
        let data = part.barrier_data(&g, Some(0.5));
        let centre = g.nearest_node(&[0.5, 0.5]);
        assert_eq!(data.get(centre), 1.0);
        let near_rim = g.nearest_node(&[0.5, 0.775]);
        assert!(data.get(near_rim) < 1.0 && data.get(near_rim) > 0.0);
    }
}
