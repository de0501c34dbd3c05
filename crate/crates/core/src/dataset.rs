use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A finite `n × d` sample matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    dim: usize,
    points: Vec<f64>,
    /// Seed the rows were drawn with, when they were drawn.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(rows: usize, dim: usize, points: Vec<f64>) -> Result<Self> {
        if points.len() != rows * dim {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot form a {rows}×{dim} matrix",
                points.len()
            )));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim.max(1),
                col: pos % dim.max(1),
            });
        }
        Ok(Self {
            rows,
            dim,
            points,
            seed: None,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            rows: 0,
            dim,
            points: Vec::new(),
            seed: None,
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut points = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            points.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, points)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let mut points = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            points.extend(m.row(r).iter());
        }
        Self::new(m.nrows(), m.ncols(), points)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.dim, &self.points)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let dim = self.dim.max(1);
        self.points.chunks_exact(dim).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    /// Rows `range` as a new dataset.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            rows: range.len(),
            dim: self.dim,
            points: self.points[range.start * self.dim..range.end * self.dim].to_vec(),
            seed: self.seed,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dim];
        for row in self.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Sample covariance with divisor `n`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let means = self.column_means();
        let d = self.dim;
        let mut cov = DMatrix::zeros(d, d);
        for row in self.iter_rows() {
            for i in 0..d {
                let di = row[i] - means[i];
                for j in i..d {
                    cov[(i, j)] += di * (row[j] - means[j]);
                }
            }
        }
        let n = self.rows.max(1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / n;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim,
            });
        }
        Ok(())
    }

    /// Headerless CSV, one row per sample. Floats use the shortest
    /// representation that round-trips.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        let mut buf: Vec<String> = Vec::with_capacity(self.dim);
        for row in self.iter_rows() {
            buf.clear();
            buf.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        let mut dim = None;
        let mut rows = 0;
        for (i, record) in r.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
            let expected = *dim.get_or_insert(record.len());
            if record.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: record.len(),
                });
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidArgument(format!(
                        "csv row {}, column {}: cannot parse {field:?}",
                        i + 1,
                        j + 1
                    ))
                })?;
                points.push(v);
            }
            rows += 1;
        }
        Self::new(rows, dim.unwrap_or(0), points)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
