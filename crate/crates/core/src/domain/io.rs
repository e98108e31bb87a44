//! Field snapshots as CSV (coordinates plus one column per field) and JSON
//! (grid header plus flat value array).

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use super::grid::Grid;
use crate::error::{Error, Result};

const AXES: [&str; 2] = ["x", "y"];

/// Writes `x[,y],name1,name2,...` with one row per node. All fields must
/// share the same grid.
pub fn write_csv<W: Write>(mut out: W, columns: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = columns.first() else {
        return Err(Error::param("no columns to write"));
    };
    let grid = first.grid();
    if columns.iter().any(|(_, f)| f.grid() != grid) {
        return Err(Error::InvalidGrid("CSV columns live on different grids".into()));
    }
    let mut header: Vec<&str> = AXES[..grid.dim()].to_vec();
    header.extend(columns.iter().map(|(name, _)| *name));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..grid.len() {
        let x = grid.coord(i);
        let mut row: Vec<String> = x[..grid.dim()].iter().map(|v| format_num(*v)).collect();
        row.extend(columns.iter().map(|(_, f)| format_num(f.get(i))));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads one named value column back onto a known grid.
pub fn read_csv_column<R: BufRead>(input: R, grid: Arc<Grid>, column: &str) -> Result<ScalarField> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::param("empty CSV"))??;
    let col = header
        .split(',')
        .position(|h| h == column)
        .ok_or_else(|| Error::param(format!("CSV has no column '{column}'")))?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cell = line
            .split(',')
            .nth(col)
            .ok_or_else(|| Error::param("short CSV row"))?;
        values.push(
            cell.parse::<f64>()
                .map_err(|e| Error::param(format!("bad number '{cell}': {e}")))?,
        );
    }
    ScalarField::new(grid, values)
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub name: String,
    pub time: Option<f64>,
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl FieldSnapshot {
    pub fn of(name: &str, time: Option<f64>, field: &ScalarField) -> Self {
        Self {
            name: name.to_string(),
            time,
            grid: (**field.grid()).clone(),
            values: field.values().to_vec(),
        }
    }

    pub fn into_field(self) -> Result<ScalarField> {
        let grid = Grid::build(
            self.grid.dim(),
            self.grid.lo(),
            self.grid.hi(),
            self.grid.cells(),
        )?;
        ScalarField::new(Arc::new(grid), self.values)
    }
}

pub fn write_json<W: Write>(out: W, name: &str, time: Option<f64>, field: &ScalarField) -> Result<()> {
    serde_json::to_writer_pretty(out, &FieldSnapshot::of(name, time, field))?;
    Ok(())
}

pub fn read_json<R: std::io::Read>(input: R) -> Result<(FieldSnapshot, ScalarField)> {
    let snap: FieldSnapshot = serde_json::from_reader(input)?;
    let field = FieldSnapshot {
        name: snap.name.clone(),
        time: snap.time,
        grid: snap.grid.clone(),
        values: snap.values.clone(),
    }
    .into_field()?;
    Ok((snap, field))
}
