//! The four-way data model: a `P x R` matrix for every unit and time.
//!
//! Rows of each matrix index the first factor and columns the second, so a
//! state's row covariance is `P x P` and its column covariance is `R x R`.
//! All indices in this module are zero-based.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents of a panel: `p` rows, `r` columns, `i` units and `t` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelDims {
    pub p: usize,
    pub r: usize,
    pub i: usize,
    pub t: usize,
}

impl PanelDims {
    pub fn new(p: usize, r: usize, i: usize, t: usize) -> Self {
        Self { p, r, i, t }
    }

    /// Number of observed matrices, `I * T`.
    pub fn n_matrices(&self) -> usize {
        self.i * self.t
    }

    pub fn n_cells(&self) -> usize {
        self.p * self.r * self.i * self.t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPanel {
    dims: PanelDims,
    // (i, t, p, r) order: every unit-time matrix is a contiguous row-major block.
    values: Vec<f64>,
    pub unit_labels: Option<Vec<String>>,
    pub time_labels: Option<Vec<String>>,
    pub row_labels: Option<Vec<String>>,
    pub col_labels: Option<Vec<String>>,
}

impl MatrixPanel {
    /// Builds a panel from values laid out unit-major, then time, then the
    /// row-major `P x R` matrix.
    pub fn new(dims: PanelDims, values: Vec<f64>) -> Result<Self> {
        if dims.p == 0 || dims.r == 0 || dims.i == 0 || dims.t == 0 {
            return Err(Error::Shape(format!("every panel dimension must be >= 1, got {dims:?}")));
        }
        if values.len() != dims.n_cells() {
            return Err(Error::Shape(format!(
                "panel {dims:?} needs {} values, got {}",
                dims.n_cells(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (p, r, i, t) = unflatten(dims, pos);
            return Err(Error::Shape(format!(
                "non-finite value at (p={p}, r={r}, i={i}, t={t})"
            )));
        }
        Ok(Self {
            dims,
            values,
            unit_labels: None,
            time_labels: None,
            row_labels: None,
            col_labels: None,
        })
    }

    pub fn from_fn(dims: PanelDims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.n_cells());
        for i in 0..dims.i {
            for t in 0..dims.t {
                for p in 0..dims.p {
                    for r in 0..dims.r {
                        values.push(f(p, r, i, t));
                    }
                }
            }
        }
        Self::new(dims, values)
    }

    /// Builds a panel from `slices[i][t]`, each a `P x R` matrix.
    pub fn from_slices(slices: &[Vec<DMatrix<f64>>]) -> Result<Self> {
        let i = slices.len();
        let t = slices.first().map_or(0, Vec::len);
        let (p, r) = slices
            .first()
            .and_then(|u| u.first())
            .map_or((0, 0), |m| m.shape());
        let dims = PanelDims::new(p, r, i, t);
        let mut values = Vec::with_capacity(dims.n_cells());
        for unit in slices {
            if unit.len() != t {
                return Err(Error::Shape("units have different numbers of times".into()));
            }
            for m in unit {
                if m.shape() != (p, r) {
                    return Err(Error::Shape(format!("expected {p}x{r} slice, got {:?}", m.shape())));
                }
                for a in 0..p {
                    for b in 0..r {
                        values.push(m[(a, b)]);
                    }
                }
            }
        }
        Self::new(dims, values)
    }

    pub fn dims(&self) -> PanelDims {
        self.dims
    }

    pub fn get(&self, p: usize, r: usize, i: usize, t: usize) -> f64 {
        self.values[self.offset(i, t) + p * self.dims.r + r]
    }

    fn offset(&self, i: usize, t: usize) -> usize {
        (i * self.dims.t + t) * self.dims.p * self.dims.r
    }

    /// Row-major view of the matrix at unit `i`, time `t`. Panics when out of range.
    pub fn slice_data(&self, i: usize, t: usize) -> &[f64] {
        let start = self.offset(i, t);
        &self.values[start..start + self.dims.p * self.dims.r]
    }

    /// The `P x R` matrix observed for unit `i` at time `t`.
    pub fn slice_unit_time(&self, i: usize, t: usize) -> Result<DMatrix<f64>> {
        if i >= self.dims.i {
            return Err(Error::OutOfBounds { what: "unit", index: i, len: self.dims.i });
        }
        if t >= self.dims.t {
            return Err(Error::OutOfBounds { what: "time", index: t, len: self.dims.t });
        }
        Ok(DMatrix::from_row_slice(self.dims.p, self.dims.r, self.slice_data(i, t)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Maps every entry through `log(x / (1 - x))`.
    pub fn logit_transform(&self) -> Result<MatrixPanel> {
        if let Some(pos) = self.values.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
            let (p, r, i, t) = unflatten(self.dims, pos);
            return Err(Error::Domain { p, r, i, t, value: self.values[pos] });
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v = (*v / (1.0 - *v)).ln();
        }
        Ok(out)
    }

    fn labels(labels: &Option<Vec<String>>, n: usize, offset: usize) -> Vec<String> {
        match labels {
            Some(l) => l.clone(),
            None => (0..n).map(|x| (x + offset).to_string()).collect(),
        }
    }

    pub fn unit_names(&self) -> Vec<String> {
        Self::labels(&self.unit_labels, self.dims.i, 1)
    }

    pub fn time_names(&self) -> Vec<String> {
        Self::labels(&self.time_labels, self.dims.t, 1)
    }

    pub fn row_names(&self) -> Vec<String> {
        Self::labels(&self.row_labels, self.dims.p, 1)
    }

    pub fn col_names(&self) -> Vec<String> {
        Self::labels(&self.col_labels, self.dims.r, 1)
    }
}

fn unflatten(dims: PanelDims, pos: usize) -> (usize, usize, usize, usize) {
    let pr = dims.p * dims.r;
    let block = pos / pr;
    let within = pos % pr;
    (within / dims.r, within % dims.r, block / dims.t, block % dims.t)
}

/// Column names of the long-format table.
pub const HEADER: [&str; 5] = ["unit", "time", "row_level", "col_level", "value"];

/// Delimited long-format text, one cell per row.
#[derive(Debug, Clone, Copy)]
pub struct LongFormat {
    pub delimiter: u8,
}

impl Default for LongFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

/// Keeps distinct labels in order of first appearance.
#[derive(Default)]
struct LevelIndex {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LevelIndex {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&k) = self.index.get(name) {
            return k;
        }
        let k = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), k);
        k
    }
}

impl LongFormat {
    pub fn read<R: Read>(&self, reader: R) -> Result<MatrixPanel> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
            .clone();
        let mut columns = [0usize; 5];
        for (slot, name) in columns.iter_mut().zip(HEADER) {
            *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                row: 1,
                message: format!("missing column {name:?}"),
            })?;
        }

        let mut units = LevelIndex::default();
        let mut times = LevelIndex::default();
        let mut rows = LevelIndex::default();
        let mut cols = LevelIndex::default();
        let mut cells: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();

        for (n, record) in rdr.records().enumerate() {
            // Header is line 1.
            let line = n + 2;
            let record = record.map_err(|e| Error::Parse { row: line, message: e.to_string() })?;
            let field = |c: usize| record.get(columns[c]).unwrap_or("");
            let value: f64 = field(4).parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("non-numeric value {:?}", field(4)),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse { row: line, message: format!("non-finite value {:?}", field(4)) });
            }
            let key = (
                units.intern(field(0)),
                times.intern(field(1)),
                rows.intern(field(2)),
                cols.intern(field(3)),
            );
            if cells.insert(key, value).is_some() {
                return Err(Error::DuplicateCell {
                    row: line,
                    unit: field(0).to_string(),
                    time: field(1).to_string(),
                    row_level: field(2).to_string(),
                    col_level: field(3).to_string(),
                });
            }
        }

        let dims = PanelDims::new(rows.names.len(), cols.names.len(), units.names.len(), times.names.len());
        if dims.n_cells() == 0 {
            return Err(Error::Parse { row: 1, message: "table has no data rows".into() });
        }
        let mut values = Vec::with_capacity(dims.n_cells());
        for i in 0..dims.i {
            for t in 0..dims.t {
                for p in 0..dims.p {
                    for r in 0..dims.r {
                        match cells.get(&(i, t, p, r)) {
                            Some(&v) => values.push(v),
                            None => {
                                return Err(Error::IncompletePanel {
                                    unit: units.names[i].clone(),
                                    time: times.names[t].clone(),
                                    row_level: rows.names[p].clone(),
                                    col_level: cols.names[r].clone(),
                                })
                            }
                        }
                    }
                }
            }
        }
        let mut panel = MatrixPanel::new(dims, values)?;
        panel.unit_labels = Some(units.names);
        panel.time_labels = Some(times.names);
        panel.row_labels = Some(rows.names);
        panel.col_labels = Some(cols.names);
        Ok(panel)
    }

    pub fn write<W: Write>(&self, panel: &MatrixPanel, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(self.delimiter).from_writer(writer);
        let csv_err = |e: csv::Error| Error::Parse { row: 0, message: e.to_string() };
        wtr.write_record(HEADER).map_err(csv_err)?;
        let (units, times, rows, cols) =
            (panel.unit_names(), panel.time_names(), panel.row_names(), panel.col_names());
        let d = panel.dims();
        for i in 0..d.i {
            for t in 0..d.t {
                for p in 0..d.p {
                    for r in 0..d.r {
                        // `{}` on f64 prints the shortest representation that parses back exactly.
                        let v = format!("{}", panel.get(p, r, i, t));
                        wtr.write_record([&units[i], &times[t], &rows[p], &cols[r], &v])
                            .map_err(csv_err)?;
                    }
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

pub fn load_panel(path: impl AsRef<Path>, format: LongFormat) -> Result<MatrixPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    format.read(std::io::BufReader::new(file))
}

pub fn save_panel(panel: &MatrixPanel, path: impl AsRef<Path>, format: LongFormat) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    format.write(panel, std::io::BufWriter::new(file))
}
