//! Multivariate time series storage, CSV ingestion and missing-value imputation.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Cell tokens treated as missing when no explicit list is given.
pub const DEFAULT_MISSING_TOKENS: [&str; 4] = ["", "NA", "NaN", "nan"];

/// Number of preceding values averaged when filling a missing cell.
pub const DEFAULT_IMPUTE_WINDOW: usize = 5;

/// A complete multivariate series `x^0 .. x^T`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset, checking that every row has one finite value per column.
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidDataset("no columns".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidDataset("no data rows".into()));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::InvalidDataset(format!(
                    "row {t} has {} values, expected {}",
                    row.len(),
                    names.len()
                )));
            }
            if let Some(m) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite value at row {t}, column {m}"
                )));
            }
        }
        Ok(Self { names, rows })
    }

    /// Builds a dataset with generated column names `X1 .. XM`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let names = (1..=m).map(|i| format!("X{i}")).collect();
        Self::new(names, rows)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    /// Number of rows, `T + 1`.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Index of the last row, `T`.
    pub fn last_index(&self) -> usize {
        self.rows.len() - 1
    }

    #[inline]
    pub fn value(&self, t: usize, m: usize) -> f64 {
        self.rows[t][m]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[m]).collect()
    }

    /// Rows `start..end` as a new dataset with the same column names.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "bad slice {start}..{end} of {} rows",
                self.rows.len()
            )));
        }
        Self::new(self.names.clone(), self.rows[start..end].to_vec())
    }

    /// Writes a header row followed by one line per time step. Values use the
    /// shortest decimal form that parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// A parsed CSV table in which some cells may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub names: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl RawDataset {
    /// Positions `(row, column)` of missing cells in row-major order.
    pub fn missing_positions(&self) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(t, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_none())
                    .map(move |(m, _)| (t, m))
            })
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }

    /// Converts to a dataset, failing if any cell is missing.
    pub fn into_complete(self) -> Result<Dataset> {
        if let Some((t, m)) = self.missing_positions().first().copied() {
            return Err(Error::InvalidDataset(format!(
                "missing value at row {t}, column {m}"
            )));
        }
        let rows = self
            .cells
            .into_iter()
            .map(|r| r.into_iter().map(|c| c.unwrap_or(f64::NAN)).collect())
            .collect();
        Dataset::new(self.names, rows)
    }

    /// Fills each missing cell with the mean of up to `window` preceding values
    /// in its column, where earlier fills count as values. A missing first row
    /// takes the mean of the column's observed values.
    pub fn impute_missing(&self, window: usize) -> Result<Dataset> {
        if window == 0 {
            return Err(Error::InvalidArgument("imputation window must be positive".into()));
        }
        let n_vars = self.names.len();
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; n_vars]; self.cells.len()];
        for m in 0..n_vars {
            let observed: Vec<f64> = self.cells.iter().filter_map(|r| r[m]).collect();
            if observed.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "column '{}' has no observed values",
                    self.names[m]
                )));
            }
            let column_mean = observed.iter().sum::<f64>() / observed.len() as f64;
            for t in 0..self.cells.len() {
                rows[t][m] = match self.cells[t][m] {
                    Some(v) => v,
                    None if t == 0 => column_mean,
                    None => {
                        let from = t.saturating_sub(window);
                        let prev = &rows[from..t];
                        prev.iter().map(|r| r[m]).sum::<f64>() / prev.len() as f64
                    }
                };
            }
        }
        Dataset::new(self.names.clone(), rows)
    }
}

/// Parses a rectangular CSV with a header row. Cells equal to one of
/// `missing_tokens` (after trimming) become `None`.
pub fn read_csv<R: Read>(reader: R, missing_tokens: &[&str]) -> Result<RawDataset> {
    let tokens: HashSet<&str> = missing_tokens.iter().copied().collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            msg: "missing header row".into(),
        });
    }
    let mut cells = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        let row = record
            .iter()
            .map(|field| {
                let field = field.trim();
                if tokens.contains(field) {
                    Ok(None)
                } else {
                    field.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some).ok_or_else(|| {
                        Error::Parse {
                            line,
                            msg: format!("non-numeric value '{field}'"),
                        }
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows after header".into(),
        });
    }
    Ok(RawDataset { names, cells })
}

pub fn load_csv(path: impl AsRef<Path>, missing_tokens: &[&str]) -> Result<RawDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), missing_tokens)
}
