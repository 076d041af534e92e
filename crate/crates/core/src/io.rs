//! Ingestion of user data in the comma-separated dialect used throughout.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::SimPath;

/// Numeric table with a declared structural column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub columns: Vec<String>,
    /// Rows are observations; column 0 is the structural series.
    pub values: DMatrix<f64>,
    pub p: usize,
    /// Rows dropped during ingestion because of empty or non-numeric cells.
    pub dropped: usize,
}

impl DataSet {
    /// Reads `x_column` plus `y_columns` (every other column when `None`).
    pub fn read<R: Read>(r: R, x_column: &str, y_columns: Option<&[String]>, p: usize) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse { path: String::new(), msg: format!("column `{name}` not found") })
        };
        let x_idx = find(x_column)?;
        let y_idx: Vec<usize> = match y_columns {
            Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
            None => (0..header.len()).filter(|&i| i != x_idx && header[i] != "t").collect(),
        };
        let picked: Vec<usize> = std::iter::once(x_idx).chain(y_idx.iter().copied()).collect();
        let mut rows: Vec<f64> = Vec::new();
        let mut dropped = 0;
        for rec in rd.records() {
            let rec = rec?;
            let parsed: Option<Vec<f64>> = picked
                .iter()
                .map(|&i| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite()))
                .collect();
            match parsed {
                Some(v) => rows.extend(v),
                None => dropped += 1,
            }
        }
        let d = picked.len();
        let n = rows.len() / d;
        if n <= p + 1 {
            return Err(Error::DegenerateSample(format!("{n} complete rows for lag order {p}")));
        }
        Ok(Self {
            columns: picked.iter().map(|&i| header[i].clone()).collect(),
            values: DMatrix::from_row_slice(n, d, &rows),
            p,
            dropped,
        })
    }

    pub fn read_path(path: &Path, x_column: &str, y_columns: Option<&[String]>, p: usize) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(file, x_column, y_columns, p).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: path.display().to_string(), msg },
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn to_path(&self) -> Result<SimPath> {
        let x = self.values.column(0).iter().copied().collect();
        let y = self.values.columns(1, self.values.ncols() - 1).into_owned();
        SimPath::from_data(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_gaps_and_orders_structural_first() {
        let text = "t,gdp,rate,oil\n0,1.0,0.5,2\n1,,0.1,3\n2,2.0,0.2,4\n3,3.0,x,5\n4,4.0,0.4,6\n5,5,0.5,7\n";
        let ds = DataSet::read(text.as_bytes(), "oil", None, 1).unwrap();
        assert_eq!(ds.columns, ["oil", "gdp", "rate"]);
        assert_eq!(ds.dropped, 2);
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.values[(1, 0)], 4.0);
        let path = ds.to_path().unwrap();
        assert_eq!(path.d_y(), 2);
        assert_eq!(path.x[3], 7.0);
    }

    #[test]
    fn missing_structural_column() {
        let err = DataSet::read("a,b\n1,2\n".as_bytes(), "X", None, 1).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn reads_simulated_csv() {
        let spec = crate::model::builtin_dgp(2).unwrap();
        let sim = crate::model::simulate(&spec, 50, 3, 100).unwrap();
        let mut buf = Vec::new();
        sim.write_csv(&mut buf).unwrap();
        let ds = DataSet::read(&buf[..], "X", Some(&["Y1".to_string()]), 1).unwrap();
        let back = ds.to_path().unwrap();
        assert_eq!(back.x, sim.x);
        assert_eq!(back.y, sim.y);
    }
}
