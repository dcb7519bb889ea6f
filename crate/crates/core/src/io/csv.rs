//! CSV contracts.
//!
//! Potential outcomes:
//! - sdim: `unit_id,p,y0,y1`
//! - did: `unit_id,p,y0_t{k}..,y1_t{k}..` for every period `k`, which must be
//!   consecutive and include 0
//! - tsls: `unit_id,pz,d0,d1,y0,y1`
//!
//! Observed data:
//! - sdim: `unit_id,d,y`
//! - did: `unit_id,d,y_t{k}..`
//! - tsls: `unit_id,z,d,y`
//!
//! Row order is unit order. Binary columns accept `0`/`1` or `true`/`false`.
//! Floats are written in shortest round-trip form, so write-then-read is exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::config::{Mode, PopulationData};
use crate::assignment::AssignmentDraw;
use crate::error::{Error, Result};
use crate::population::{FinitePopulation, IVPopulation, PanelPopulation};

/// One realized dataset: an assignment and observed outcomes.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservedData {
    Cross {
        d: AssignmentDraw,
        y: Vec<f64>,
    },
    Panel {
        d: AssignmentDraw,
        y: DMatrix<f64>,
        first_period: i32,
    },
    Iv {
        z: AssignmentDraw,
        d: Vec<f64>,
        y: Vec<f64>,
    },
}

impl ObservedData {
    pub fn n(&self) -> usize {
        match self {
            ObservedData::Cross { y, .. } | ObservedData::Iv { y, .. } => y.len(),
            ObservedData::Panel { y, .. } => y.nrows(),
        }
    }
}

struct Table {
    columns: HashMap<String, usize>,
    names: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(File::open(path)?);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let columns = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::validation(format!(
                "{}: no data rows",
                path.display()
            )));
        }
        Ok(Self {
            columns,
            names,
            rows,
        })
    }

    fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.columns
                    .get(*n)
                    .copied()
                    .ok_or_else(|| Error::validation(format!("missing column {n}")))
            })
            .collect()
    }

    fn float(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Row {
                row: row + 1,
                message: format!(
                    "column {}: {cell:?} is not a finite number",
                    self.names[col]
                ),
            })
    }

    fn probability(&self, row: usize, col: usize) -> Result<f64> {
        let v = self.float(row, col)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Row {
                row: row + 1,
                message: format!(
                    "column {}: probability {v} is outside [0, 1]",
                    self.names[col]
                ),
            });
        }
        Ok(v)
    }

    fn binary(&self, row: usize, col: usize) -> Result<bool> {
        match self.rows[row][col].as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(Error::Row {
                row: row + 1,
                message: format!("column {}: {other:?} is not 0 or 1", self.names[col]),
            }),
        }
    }

    fn floats(&self, col: usize) -> Result<Vec<f64>> {
        (0..self.rows.len()).map(|r| self.float(r, col)).collect()
    }

    /// Consecutive periods carried by columns named `{prefix}{k}`, with their
    /// column indices.
    fn periods(&self, prefix: &str) -> Result<(i32, Vec<usize>)> {
        let mut found: Vec<(i32, usize)> = self
            .names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.strip_prefix(prefix)?.parse::<i32>().ok().map(|k| (k, i)))
            .collect();
        found.sort();
        let first = found
            .first()
            .map(|(k, _)| *k)
            .ok_or_else(|| Error::validation(format!("missing columns {prefix}<period>")))?;
        for (j, (k, _)) in found.iter().enumerate() {
            if *k != first + j as i32 {
                return Err(Error::validation(format!(
                    "{prefix} columns must cover consecutive periods; gap before {prefix}{k}"
                )));
            }
        }
        let last = first + found.len() as i32 - 1;
        if first > 0 || last < 0 {
            return Err(Error::validation(format!(
                "{prefix} columns do not include period 0"
            )));
        }
        Ok((first, found.into_iter().map(|(_, i)| i).collect()))
    }

    fn matrix(&self, cols: &[usize]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows.len(), cols.len());
        for r in 0..self.rows.len() {
            for (j, &c) in cols.iter().enumerate() {
                m[(r, j)] = self.float(r, c)?;
            }
        }
        Ok(m)
    }

    fn draw(&self, col: usize) -> Result<AssignmentDraw> {
        Ok(AssignmentDraw::new(
            (0..self.rows.len())
                .map(|r| self.binary(r, col))
                .collect::<Result<_>>()?,
        ))
    }
}

/// Reads a population with potential outcomes in the layout for `mode`.
pub fn load_population_csv(path: &Path, mode: Mode) -> Result<PopulationData> {
    let t = Table::read(path)?;
    let n = t.rows.len();
    match mode {
        Mode::Sdim => {
            let c = t.require(&["unit_id", "p", "y0", "y1"])?;
            let p = (0..n)
                .map(|r| t.probability(r, c[1]))
                .collect::<Result<_>>()?;
            Ok(PopulationData::Cross(FinitePopulation::new(
                p,
                t.floats(c[2])?,
                t.floats(c[3])?,
            )?))
        }
        Mode::Did => {
            let c = t.require(&["unit_id", "p"])?;
            let p = (0..n)
                .map(|r| t.probability(r, c[1]))
                .collect::<Result<_>>()?;
            let (first0, cols0) = t.periods("y0_t")?;
            let (first1, cols1) = t.periods("y1_t")?;
            if first0 != first1 || cols0.len() != cols1.len() {
                return Err(Error::validation(
                    "y0_t and y1_t columns cover different periods",
                ));
            }
            Ok(PopulationData::Panel(PanelPopulation::new(
                p,
                t.matrix(&cols0)?,
                t.matrix(&cols1)?,
                first0,
            )?))
        }
        Mode::Tsls => {
            let c = t.require(&["unit_id", "pz", "d0", "d1", "y0", "y1"])?;
            let pz = (0..n)
                .map(|r| t.probability(r, c[1]))
                .collect::<Result<_>>()?;
            let mut d0 = Vec::with_capacity(n);
            let mut d1 = Vec::with_capacity(n);
            for r in 0..n {
                let (a, b) = (t.binary(r, c[2])?, t.binary(r, c[3])?);
                if a && !b {
                    return Err(Error::Row {
                        row: r + 1,
                        message: "monotonicity violated: d0 = 1 but d1 = 0".into(),
                    });
                }
                d0.push(a);
                d1.push(b);
            }
            Ok(PopulationData::Iv(IVPopulation::new(
                pz,
                d0,
                d1,
                t.floats(c[4])?,
                t.floats(c[5])?,
            )?))
        }
    }
}

/// Reads one realized dataset in the observed-data layout for `mode`.
pub fn load_observed_csv(path: &Path, mode: Mode) -> Result<ObservedData> {
    let t = Table::read(path)?;
    let n = t.rows.len();
    match mode {
        Mode::Sdim => {
            let c = t.require(&["unit_id", "d", "y"])?;
            Ok(ObservedData::Cross {
                d: t.draw(c[1])?,
                y: t.floats(c[2])?,
            })
        }
        Mode::Did => {
            let c = t.require(&["unit_id", "d"])?;
            let (first, cols) = t.periods("y_t")?;
            if cols.len() < 2 {
                return Err(Error::validation("panel needs at least two periods"));
            }
            Ok(ObservedData::Panel {
                d: t.draw(c[1])?,
                y: t.matrix(&cols)?,
                first_period: first,
            })
        }
        Mode::Tsls => {
            let c = t.require(&["unit_id", "z", "d", "y"])?;
            let d = (0..n)
                .map(|r| t.binary(r, c[2]).map(|b| if b { 1.0 } else { 0.0 }))
                .collect::<Result<_>>()?;
            Ok(ObservedData::Iv {
                z: t.draw(c[1])?,
                d,
                y: t.floats(c[3])?,
            })
        }
    }
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes a population in the layout [`load_population_csv`] reads.
pub fn write_population_csv(path: &Path, pop: &PopulationData) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    match pop {
        PopulationData::Cross(p) => {
            writeln!(out, "unit_id,p,y0,y1")?;
            for i in 0..p.n() {
                writeln!(out, "{i},{},{},{}", p.p()[i], p.y0()[i], p.y1()[i])?;
            }
        }
        PopulationData::Panel(p) => {
            let periods: Vec<i32> = p.periods().collect();
            let mut header = vec!["unit_id".to_string(), "p".to_string()];
            header.extend(periods.iter().map(|k| format!("y0_t{k}")));
            header.extend(periods.iter().map(|k| format!("y1_t{k}")));
            writeln!(out, "{}", header.join(","))?;
            for i in 0..p.n() {
                let mut row = vec![i.to_string(), p.p()[i].to_string()];
                row.extend(p.y0().row(i).iter().map(|v| v.to_string()));
                row.extend(p.y1().row(i).iter().map(|v| v.to_string()));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        PopulationData::Iv(p) => {
            writeln!(out, "unit_id,pz,d0,d1,y0,y1")?;
            for i in 0..p.n() {
                writeln!(
                    out,
                    "{i},{},{},{},{},{}",
                    p.pz()[i],
                    bit(p.d0()[i]),
                    bit(p.d1()[i]),
                    p.y0()[i],
                    p.y1()[i]
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
