//! Error measures between a reference grid and a registered candidate:
//! mean difference, RMSE, total squared curvature of the difference surface
//! and a paired one-sample t statistic.
//!
//! All reductions run in row-major order so results are bit-reproducible.

use serde::Serialize;
use thiserror::Error;

use crate::grid::{AlignError, Grid, GridError, GridHeader};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("cell sizes differ: {0} vs {1}")]
    CellsizeMismatch(f64, f64),
    #[error("grids are not on a common cell lattice")]
    Misaligned,
    #[error("grids do not overlap")]
    NoOverlap,
    #[error("difference surface has no valid cells")]
    EmptySurface,
    #[error("difference surface has no interior cell with a complete 5-point stencil")]
    NoInteriorCells,
    #[error("need at least 2 samples for a t statistic, have {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<AlignError> for MetricError {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::CellsizeMismatch(a, b) => MetricError::CellsizeMismatch(a, b),
            AlignError::Misaligned => MetricError::Misaligned,
        }
    }
}

/// `reference - registered` over the overlap of the two grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSurface {
    pub grid: Grid,
    /// Cells where both inputs are valid.
    pub n: usize,
    /// Min and max of valid reference elevations inside the overlap.
    pub reference_range: Option<(f64, f64)>,
}

impl DifferenceSurface {
    /// Wraps a ready-made difference grid (e.g. for analysis of a stored surface).
    pub fn from_grid(grid: Grid) -> Self {
        let n = grid.valid_count();
        DifferenceSurface { grid, n, reference_range: None }
    }

    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid.valid_values()
    }
}

pub fn difference_surface(reference: &Grid, registered: &Grid) -> Result<DifferenceSurface, MetricError> {
    let rh = reference.header();
    let at = rh.frame_offset(registered.header())?;
    let r0 = at.drow.max(0);
    let c0 = at.dcol.max(0);
    let r1 = (at.drow + registered.nrows() as i64).min(rh.nrows as i64);
    let c1 = (at.dcol + registered.ncols() as i64).min(rh.ncols as i64);
    if r1 <= r0 || c1 <= c0 {
        return Err(MetricError::NoOverlap);
    }
    let (nrows, ncols) = ((r1 - r0) as usize, (c1 - c0) as usize);

    let mut diffs = Vec::with_capacity(nrows * ncols);
    let mut range: Option<(f64, f64)> = None;
    for r in r0..r1 {
        for c in c0..c1 {
            let a = reference.get_signed(r, c);
            if let Some(a) = a {
                range = Some(range.map_or((a, a), |(lo, hi)| (lo.min(a), hi.max(a))));
            }
            let b = registered.get_signed(r - at.drow, c - at.dcol);
            diffs.push(a.zip(b).map(|(a, b)| a - b));
        }
    }

    // Pick a sentinel no actual difference uses.
    let mut nodata = rh.nodata_value;
    while diffs.iter().flatten().any(|d| *d == nodata) {
        nodata -= 1.0;
    }
    let n = diffs.iter().flatten().count();
    let values = diffs.into_iter().map(|d| d.unwrap_or(nodata)).collect();
    let cs = rh.cellsize;
    let header = GridHeader::new(
        ncols,
        nrows,
        rh.xllcorner + c0 as f64 * cs,
        rh.yllcorner + (rh.nrows as i64 - r1) as f64 * cs,
        cs,
        nodata,
    )?;
    Ok(DifferenceSurface { grid: Grid::new(header, values)?, n, reference_range: range })
}

/// `(mean, rmse)` of the valid differences.
pub fn mean_and_rmse(diff: &DifferenceSurface) -> Result<(f64, f64), MetricError> {
    let (mut n, mut sum, mut sumsq) = (0usize, 0.0, 0.0);
    for d in diff.valid() {
        n += 1;
        sum += d;
        sumsq += d * d;
    }
    if n == 0 {
        return Err(MetricError::EmptySurface);
    }
    let n = n as f64;
    Ok((sum / n, (sumsq / n).sqrt()))
}

/// Mean of the squared 5-point Laplacian over interior cells whose stencil is
/// fully valid; `h` is the grid spacing.
pub fn total_squared_curvature(diff: &DifferenceSurface, h: f64) -> Result<f64, MetricError> {
    let g = &diff.grid;
    let (nrows, ncols) = (g.nrows(), g.ncols());
    if nrows < 3 || ncols < 3 {
        return Err(MetricError::NoInteriorCells);
    }
    let h2 = h * h;
    let (mut count, mut acc) = (0usize, 0.0);
    for r in 1..nrows - 1 {
        for c in 1..ncols - 1 {
            let stencil =
                (|| Some((g.get(r - 1, c)?, g.get(r + 1, c)?, g.get(r, c - 1)?, g.get(r, c + 1)?, g.get(r, c)?)))();
            let Some((up, down, left, right, center)) = stencil else { continue };
            let lap = (down + up + right + left - 4.0 * center) / h2;
            acc += lap * lap;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricError::NoInteriorCells);
    }
    Ok(acc / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TStatistic {
    /// `None` when the statistic is undefined (zero spread, nonzero mean).
    pub t: Option<f64>,
    pub dof: usize,
    pub defined: bool,
    /// Sample standard deviation.
    pub sd: f64,
}

/// One-sample t of the differences against zero mean.
pub fn t_statistic(diff: &DifferenceSurface) -> Result<TStatistic, MetricError> {
    let (mean, _) = match mean_and_rmse(diff) {
        Ok(v) => v,
        Err(MetricError::EmptySurface) => return Err(MetricError::TooFewSamples(0)),
        Err(e) => return Err(e),
    };
    let n = diff.n;
    if n < 2 {
        return Err(MetricError::TooFewSamples(n));
    }
    let ss: f64 = diff.valid().map(|d| (d - mean) * (d - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    let dof = n - 1;
    if sd > 0.0 {
        Ok(TStatistic { t: Some(mean / (sd / (n as f64).sqrt())), dof, defined: true, sd })
    } else if mean == 0.0 {
        Ok(TStatistic { t: Some(0.0), dof, defined: true, sd })
    } else {
        Ok(TStatistic { t: None, dof, defined: false, sd })
    }
}

/// The full error matrix for one registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub n: usize,
    pub mean_diff: f64,
    /// `100 * |mean_diff| / (reference max - min)`; absent for a flat reference.
    pub mean_diff_pct: Option<f64>,
    pub rmse: f64,
    /// Absent when the overlap has no complete interior stencil.
    pub tsc: Option<f64>,
    pub t_stat: Option<f64>,
    pub dof: usize,
    pub t_defined: bool,
}

impl ErrorReport {
    /// Human-readable notes about undefined quantities.
    pub fn degeneracies(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.tsc.is_none() {
            w.push("total squared curvature undefined: no interior stencil in overlap".to_string());
        }
        if !self.t_defined {
            w.push("t statistic undefined: zero spread with nonzero mean difference".to_string());
        }
        if self.mean_diff_pct.is_none() {
            w.push("percent mean difference undefined: reference elevation range is zero".to_string());
        }
        w
    }
}

pub fn error_report(diff: &DifferenceSurface) -> Result<ErrorReport, MetricError> {
    let (mean_diff, rmse) = mean_and_rmse(diff)?;
    let tsc = match total_squared_curvature(diff, diff.grid.header().cellsize) {
        Ok(v) => Some(v),
        Err(MetricError::NoInteriorCells) => None,
        Err(e) => return Err(e),
    };
    let t = match t_statistic(diff) {
        Ok(t) => t,
        Err(MetricError::TooFewSamples(_)) => TStatistic { t: None, dof: 0, defined: false, sd: 0.0 },
        Err(e) => return Err(e),
    };
    let mean_diff_pct = match diff.reference_range {
        Some((lo, hi)) if hi > lo => Some(100.0 * mean_diff.abs() / (hi - lo)),
        Some(_) if mean_diff == 0.0 => Some(0.0),
        _ => None,
    };
    Ok(ErrorReport { n: diff.n, mean_diff, mean_diff_pct, rmse, tsc, t_stat: t.t, dof: t.dof, t_defined: t.defined })
}

/// Difference surface plus error matrix in one call.
pub fn compare(reference: &Grid, registered: &Grid) -> Result<ErrorReport, MetricError> {
    error_report(&difference_surface(reference, registered)?)
}
