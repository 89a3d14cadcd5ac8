//! CSV input and output.
//!
//! Input is UTF-8, comma separated, with one header row. Feature and time
//! cells are decimal reals; the event cell is exactly `0` (censored) or
//! `1` (observed). Row numbers in diagnostics count data rows from 1, header
//! excluded.

use std::fs::File;
use std::path::{Path, PathBuf};

use cox_subgroup::{DataError, SurvivalDataset};
use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::config::ColumnSpec;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("row {row}: bad value in column '{column}'")]
    BadCell { row: usize, column: String },
    #[error("no data rows")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A dataset read from disk. Rows are reordered by non-decreasing time
/// (stable); `source_rows[i]` is the 1-based data row that became row `i`.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub data: SurvivalDataset,
    pub source_rows: Vec<usize>,
}

pub fn load_csv(path: &Path, columns: &ColumnSpec) -> Result<Loaded, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, columns).map_err(|e| match e {
        IngestError::Csv { source, .. } => IngestError::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_csv(reader: impl std::io::Read, columns: &ColumnSpec) -> Result<Loaded, IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: PathBuf::new(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let adjust: Vec<usize> = columns
        .adjust
        .iter()
        .map(|c| find(c))
        .collect::<Result<_, _>>()?;
    let subgroup: Vec<usize> = columns
        .subgroup
        .iter()
        .map(|c| find(c))
        .collect::<Result<_, _>>()?;
    let time_col = find(&columns.time)?;
    let event_col = find(&columns.event)?;

    let mut xa = Vec::new();
    let mut xs = Vec::new();
    let mut times = Vec::new();
    let mut events = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(csv_err)?;
        let cell = |col: usize| -> Result<f64, IngestError> {
            let name = &header[col];
            record
                .get(col)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| IngestError::BadCell {
                    row,
                    column: name.to_string(),
                })
        };
        for &c in &adjust {
            xa.push(cell(c)?);
        }
        for &c in &subgroup {
            xs.push(cell(c)?);
        }
        let t = cell(time_col)?;
        if t < 0.0 {
            return Err(IngestError::BadCell {
                row,
                column: columns.time.clone(),
            });
        }
        times.push(t);
        events.push(match record.get(event_col).unwrap_or_default() {
            "1" => true,
            "0" => false,
            _ => {
                return Err(IngestError::BadCell {
                    row,
                    column: columns.event.clone(),
                })
            }
        });
    }
    let n = times.len();
    if n == 0 {
        return Err(IngestError::Empty);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (da, ds) = (adjust.len(), subgroup.len());
    let x_adjust = Array2::from_shape_fn((n, da), |(i, j)| xa[order[i] * da + j]);
    let x_subgp = Array2::from_shape_fn((n, ds), |(i, j)| xs[order[i] * ds + j]);
    let times: Array1<f64> = order.iter().map(|&i| times[i]).collect();
    let events = order.iter().map(|&i| events[i]).collect();
    Ok(Loaded {
        data: SurvivalDataset::new(x_adjust, x_subgp, times, events)?,
        source_rows: order.iter().map(|&i| i + 1).collect(),
    })
}

/// Writes a dataset whose adjust and subgroup features coincide, with columns
/// `x0, x1, ..., time, event`. Reals use the shortest exact representation.
pub fn write_csv(path: &Path, data: &SurvivalDataset) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let d = data.d_subgp();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("time".into());
    header.push("event".into());
    w.write_record(&header).map_err(io_err)?;
    let x = data.x_subgp();
    for i in 0..data.n() {
        let mut rec: Vec<String> = (0..d).map(|j| x[[i, j]].to_string()).collect();
        rec.push(data.times()[i].to_string());
        rec.push(if data.events()[i] { "1" } else { "0" }.into());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Column roles matching [`write_csv`] output for `d` features.
pub fn synthetic_columns(d: usize) -> ColumnSpec {
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    ColumnSpec {
        time: "time".into(),
        event: "event".into(),
        adjust: names.clone(),
        subgroup: names,
    }
}
