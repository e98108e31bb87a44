//! Grids, grid functions, and space-time domains.

mod field;
mod grid;
pub mod io;
mod slanted;

pub use field::{default_eps, MediumParams, ScalarField};
pub use grid::{Grid, Point};
pub use slanted::{partition_half_ball, HalfBallPartition, SlantedDomain};
