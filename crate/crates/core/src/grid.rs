//! Arc/Info ASCII grid rasters: the in-memory [`Grid`], its text form, and
//! conversions between cell indices and map coordinates.
//!
//! ```text
//! ncols 4
//! nrows 2
//! xllcorner 0
//! yllcorner 0
//! cellsize 90
//! NODATA_value -9999
//! 101.5 102.0 103.25 -9999
//! 99.0 100.0 101.0 102.0
//! ```
//!
//! Rows are stored top row first, exactly as they appear in the file, while
//! `yllcorner` refers to the bottom edge of the raster. The row flip only
//! happens in [`cell_to_geo`] and [`geo_to_cell`].

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

/// Sentinel used when a file omits the `NODATA_value` line.
pub const DEFAULT_NODATA: f64 = -9999.0;

const CELLSIZE_REL_TOL: f64 = 1e-9;
const ALIGN_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("malformed header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("expected {expected} cell values, found {found}")]
    CellCountMismatch { expected: usize, found: usize },
    #[error("non-finite value `{token}` at line {line}")]
    NonFiniteValue { line: usize, token: String },
    #[error("invalid number `{token}` at line {line}")]
    InvalidValue { line: usize, token: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cell ({row}, {col}) outside {nrows}x{ncols} grid")]
    IndexOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("point ({x}, {y}) lies outside the grid extent")]
    OutOfBounds { x: f64, y: f64 },
}

/// Failure to express one grid's cells in another grid's index frame.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("cell sizes differ: {0} vs {1}")]
    CellsizeMismatch(f64, f64),
    #[error("grid corners are not separated by a whole number of cells")]
    Misaligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
}

impl GridHeader {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata_value: f64,
    ) -> Result<Self, GridError> {
        let header = Self { ncols, nrows, xllcorner, yllcorner, cellsize, nodata_value };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<(), GridError> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(GridError::InvalidGrid("ncols and nrows must be at least 1".into()));
        }
        if !(self.cellsize.is_finite() && self.cellsize > 0.0) {
            return Err(GridError::InvalidGrid(format!("cellsize {} must be > 0", self.cellsize)));
        }
        if !self.xllcorner.is_finite() || !self.yllcorner.is_finite() {
            return Err(GridError::InvalidGrid("corner coordinates must be finite".into()));
        }
        if !self.nodata_value.is_finite() {
            return Err(GridError::InvalidGrid("NODATA_value must be finite".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Map y of the top edge.
    pub fn ytop(&self) -> f64 {
        self.yllcorner + self.nrows as f64 * self.cellsize
    }

    /// Map x of the right edge.
    pub fn xright(&self) -> f64 {
        self.xllcorner + self.ncols as f64 * self.cellsize
    }

    pub fn contains_cell(&self, row: usize, col: usize) -> bool {
        row < self.nrows && col < self.ncols
    }

    /// Index-space position of `other`'s cell (0, 0) inside this header's
    /// frame. Both grids must share a cellsize and a cell lattice.
    pub fn frame_offset(&self, other: &GridHeader) -> Result<CellOffset, AlignError> {
        let cs = self.cellsize;
        if (cs - other.cellsize).abs() > CELLSIZE_REL_TOL * cs.max(other.cellsize) {
            return Err(AlignError::CellsizeMismatch(cs, other.cellsize));
        }
        let dcol = (other.xllcorner - self.xllcorner) / cs;
        let drow = (self.ytop() - other.ytop()) / cs;
        let (rc, rr) = (dcol.round(), drow.round());
        if (dcol - rc).abs() > ALIGN_TOL || (drow - rr).abs() > ALIGN_TOL {
            return Err(AlignError::Misaligned);
        }
        Ok(CellOffset { drow: rr as i64, dcol: rc as i64 })
    }
}

/// Signed displacement between two cell index frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct CellOffset {
    pub drow: i64,
    pub dcol: i64,
}

impl CellOffset {
    pub const ZERO: CellOffset = CellOffset { drow: 0, dcol: 0 };

    pub fn new(drow: i64, dcol: i64) -> Self {
        Self { drow, dcol }
    }
}

impl std::ops::Add for CellOffset {
    type Output = CellOffset;
    fn add(self, rhs: CellOffset) -> CellOffset {
        CellOffset::new(self.drow + rhs.drow, self.dcol + rhs.dcol)
    }
}

impl std::ops::Neg for CellOffset {
    type Output = CellOffset;
    fn neg(self) -> CellOffset {
        CellOffset::new(-self.drow, -self.dcol)
    }
}

/// Row-major elevation raster, row 0 = northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    header: GridHeader,
    values: Vec<f64>,
}

impl Grid {
    /// Builds a grid, checking the header and that every value is finite.
    /// Cells equal to `nodata_value` are treated as missing.
    pub fn new(header: GridHeader, values: Vec<f64>) -> Result<Self, GridError> {
        header.validate()?;
        if values.len() != header.cell_count() {
            return Err(GridError::CellCountMismatch { expected: header.cell_count(), found: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(GridError::InvalidGrid(format!("non-finite elevation {v}")));
        }
        Ok(Self { header, values })
    }

    /// A grid where every cell is nodata.
    pub fn filled_nodata(header: GridHeader) -> Result<Self, GridError> {
        let values = vec![header.nodata_value; header.cell_count()];
        Self::new(header, values)
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_parts(self) -> (GridHeader, Vec<f64>) {
        (self.header, self.values)
    }

    pub fn nrows(&self) -> usize {
        self.header.nrows
    }

    pub fn ncols(&self) -> usize {
        self.header.ncols
    }

    pub fn nodata(&self) -> f64 {
        self.header.nodata_value
    }

    pub fn is_nodata(&self, value: f64) -> bool {
        value == self.header.nodata_value
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.header.ncols + col
    }

    /// Raw stored value (which may be the nodata sentinel).
    #[inline]
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    /// Elevation at a cell, `None` for nodata or out-of-range indices.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if !self.header.contains_cell(row, col) {
            return None;
        }
        let v = self.raw(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    /// Elevation at signed indices; anything off-grid reads as `None`.
    #[inline]
    pub fn get_signed(&self, row: i64, col: i64) -> Option<f64> {
        if row < 0 || col < 0 {
            return None;
        }
        self.get(row as usize, col as usize)
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |v| !self.is_nodata(*v))
    }

    pub fn valid_count(&self) -> usize {
        self.valid_values().count()
    }

    /// Minimum and maximum over valid cells.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Copies a rectangular window into a standalone, correctly georeferenced grid.
    pub fn window(&self, row0: usize, col0: usize, nrows: usize, ncols: usize) -> Result<Grid, GridError> {
        if nrows == 0 || ncols == 0 || row0 + nrows > self.nrows() || col0 + ncols > self.ncols() {
            return Err(GridError::IndexOutOfRange {
                row: row0 + nrows,
                col: col0 + ncols,
                nrows: self.nrows(),
                ncols: self.ncols(),
            });
        }
        let h = &self.header;
        let header = GridHeader {
            ncols,
            nrows,
            xllcorner: h.xllcorner + col0 as f64 * h.cellsize,
            yllcorner: h.yllcorner + (h.nrows - row0 - nrows) as f64 * h.cellsize,
            cellsize: h.cellsize,
            nodata_value: h.nodata_value,
        };
        let mut values = Vec::with_capacity(nrows * ncols);
        for r in row0..row0 + nrows {
            let start = self.index(r, col0);
            values.extend_from_slice(&self.values[start..start + ncols]);
        }
        Grid::new(header, values)
    }

    /// Applies `f` to every valid cell, leaving nodata untouched.
    pub fn map_valid(&self, mut f: impl FnMut(f64) -> f64) -> Result<Grid, GridError> {
        let values = self.values.iter().map(|&v| if self.is_nodata(v) { v } else { f(v) }).collect();
        Grid::new(self.header, values)
    }

    pub fn with_header(self, header: GridHeader) -> Result<Grid, GridError> {
        Grid::new(header, self.values)
    }
}

const KEYWORDS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

/// Parses an ASCII grid. Keywords are case-insensitive, any whitespace
/// separates tokens, and a missing `NODATA_value` defaults to -9999.
pub fn parse_grid(text: &str) -> Result<Grid, GridError> {
    let mut tokens =
        text.lines().enumerate().flat_map(|(i, line)| line.split_whitespace().map(move |t| (i + 1, t))).peekable();

    let mut fields: [Option<f64>; 6] = [None; 6];
    let mut counts: [Option<usize>; 2] = [None; 2];
    let mut last_line = 1;

    while let Some(&(line, token)) = tokens.peek() {
        let starts_alpha = token.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
        if !starts_alpha || token.parse::<f64>().is_ok() {
            break;
        }
        tokens.next();
        last_line = line;
        let key = token.to_ascii_lowercase();
        let slot = KEYWORDS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| GridError::MalformedHeader { line, reason: format!("unknown keyword `{token}`") })?;
        let (vline, vtok) = tokens
            .next()
            .ok_or_else(|| GridError::MalformedHeader { line, reason: format!("missing value for `{token}`") })?;
        let duplicate = || GridError::MalformedHeader { line, reason: format!("duplicate keyword `{token}`") };
        if slot < 2 {
            if counts[slot].is_some() {
                return Err(duplicate());
            }
            let n = vtok.parse::<usize>().map_err(|_| GridError::MalformedHeader {
                line: vline,
                reason: format!("`{token}` must be a positive integer, got `{vtok}`"),
            })?;
            counts[slot] = Some(n);
        } else {
            if fields[slot].is_some() {
                return Err(duplicate());
            }
            let v = vtok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| GridError::MalformedHeader {
                line: vline,
                reason: format!("`{token}` must be a finite number, got `{vtok}`"),
            })?;
            fields[slot] = Some(v);
        }
    }

    let missing = |name: &str| GridError::MalformedHeader { line: last_line, reason: format!("missing `{name}`") };
    let ncols = counts[0].ok_or_else(|| missing("ncols"))?;
    let nrows = counts[1].ok_or_else(|| missing("nrows"))?;
    let header = GridHeader {
        ncols,
        nrows,
        xllcorner: fields[2].ok_or_else(|| missing("xllcorner"))?,
        yllcorner: fields[3].ok_or_else(|| missing("yllcorner"))?,
        cellsize: fields[4].ok_or_else(|| missing("cellsize"))?,
        nodata_value: fields[5].unwrap_or(DEFAULT_NODATA),
    };
    header.validate().map_err(|e| GridError::MalformedHeader { line: last_line, reason: e.to_string() })?;

    let expected = header.cell_count();
    let mut values = Vec::with_capacity(expected);
    for (line, token) in tokens {
        let v: f64 = token.parse().map_err(|_| GridError::InvalidValue { line, token: token.to_string() })?;
        if !v.is_finite() {
            return Err(GridError::NonFiniteValue { line, token: token.to_string() });
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(GridError::CellCountMismatch { expected, found: values.len() });
    }
    Grid::new(header, values)
}

/// Canonical text form: one header entry per line, one grid row per line,
/// single spaces, trailing newline. Valid cells use the shortest decimal that
/// parses back to the same bits; nodata cells repeat the header token.
pub fn serialize_grid(grid: &Grid) -> String {
    let h = grid.header();
    let nodata_token = format!("{}", h.nodata_value);
    let mut out = String::with_capacity(96 + grid.values().len() * 10);
    // Writing into a String cannot fail.
    let _ = write!(
        out,
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        h.ncols, h.nrows, h.xllcorner, h.yllcorner, h.cellsize, nodata_token
    );
    for row in grid.values().chunks(h.ncols) {
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if grid.is_nodata(v) {
                out.push_str(&nodata_token);
            } else {
                let _ = write!(out, "{v:?}");
            }
        }
        out.push('\n');
    }
    out
}

/// Map coordinates of a cell center.
pub fn cell_to_geo(header: &GridHeader, row: usize, col: usize) -> Result<(f64, f64), GridError> {
    if !header.contains_cell(row, col) {
        return Err(GridError::IndexOutOfRange { row, col, nrows: header.nrows, ncols: header.ncols });
    }
    let x = header.xllcorner + (col as f64 + 0.5) * header.cellsize;
    let y = header.yllcorner + ((header.nrows - 1 - row) as f64 + 0.5) * header.cellsize;
    Ok((x, y))
}

/// Cell containing a map point. Points on a shared cell edge resolve to the
/// smaller index; the outer boundary is inclusive.
pub fn geo_to_cell(header: &GridHeader, x: f64, y: f64) -> Result<(usize, usize), GridError> {
    let inside = x.is_finite()
        && y.is_finite()
        && x >= header.xllcorner
        && x <= header.xright()
        && y >= header.yllcorner
        && y <= header.ytop();
    if !inside {
        return Err(GridError::OutOfBounds { x, y });
    }
    let fcol = (x - header.xllcorner) / header.cellsize;
    let frow = (header.ytop() - y) / header.cellsize;
    let to_index = |f: f64, n: usize| -> usize { ((f.ceil() - 1.0).max(0.0) as usize).min(n - 1) };
    Ok((to_index(frow, header.nrows), to_index(fcol, header.ncols)))
}
