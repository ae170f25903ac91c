//! Control points and the two ways of locating them in a candidate grid:
//! direct elevation lookup and ring-signature ("quadrangle edge") matching.

use serde::Serialize;
use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlPointError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("cell ({row}, {col}) is too close to the border for a radius-{radius} ring")]
    BorderCell { row: usize, col: usize, radius: usize },
    #[error("ring around cell ({row}, {col}) contains nodata")]
    NodataInRing { row: usize, col: usize },
}

/// A user-marked point: map y (latitude), map x (longitude) and elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlPoint {
    pub lat: f64,
    pub lon: f64,
    pub elevation: f64,
}

impl ControlPoint {
    pub fn new(lat: f64, lon: f64, elevation: f64) -> Self {
        Self { lat, lon, elevation }
    }
}

/// Parsed control-point file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointFile {
    pub points: Vec<ControlPoint>,
    /// `(line, line of first occurrence)` for every repeated point.
    pub duplicates: Vec<(usize, usize)>,
}

/// Reads `lat,lon,elevation` lines. Blank lines and `#` comments are skipped.
pub fn load_control_points(text: &str) -> Result<PointFile, ControlPointError> {
    let mut out = PointFile::default();
    let mut lines_of: Vec<usize> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(ControlPointError::MalformedLine {
                line,
                reason: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let mut nums = [0.0; 3];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                ControlPointError::MalformedLine { line, reason: format!("`{field}` is not a finite number") }
            })?;
        }
        let p = ControlPoint::new(nums[0], nums[1], nums[2]);
        if let Some(k) = out.points.iter().position(|q| *q == p) {
            out.duplicates.push((line, lines_of[k]));
        }
        out.points.push(p);
        lines_of.push(line);
    }
    Ok(out)
}

/// Writes points in the format read by [`load_control_points`].
pub fn format_control_points(points: &[ControlPoint]) -> String {
    let mut s = String::from("# lat,lon,elevation\n");
    for p in points {
        s.push_str(&format!("{:?},{:?},{:?}\n", p.lat, p.lon, p.elevation));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMethod {
    Direct,
    QuadEdge,
}

impl MatchMethod {
    pub fn name(self) -> &'static str {
        match self {
            MatchMethod::Direct => "direct",
            MatchMethod::QuadEdge => "quad-edge",
        }
    }
}

impl std::str::FromStr for MatchMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(MatchMethod::Direct),
            "quad-edge" => Ok(MatchMethod::QuadEdge),
            other => Err(format!("unknown method `{other}` (expected direct or quad-edge)")),
        }
    }
}

/// A cell of the candidate grid that might hold a control point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateMatch {
    pub row: usize,
    pub col: usize,
    /// Elevation mismatch (direct) or max-norm signature distance (quad-edge).
    pub residual: f64,
    pub method: MatchMethod,
}

fn sort_candidates(v: &mut [CandidateMatch]) {
    v.sort_by(|a, b| a.residual.total_cmp(&b.residual).then(a.row.cmp(&b.row)).then(a.col.cmp(&b.col)));
}

/// Ring neighbour directions as (drow, dcol): N, NE, E, SE, S, SW, W, NW.
pub const RING: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Elevation differences from a cell to its 8 ring neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadSignature {
    pub edges: [f64; 8],
}

impl QuadSignature {
    /// Max-norm distance between two signatures.
    pub fn distance(&self, other: &QuadSignature) -> f64 {
        self.edges.iter().zip(&other.edges).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.edges.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

/// Signature on the unit ring.
pub fn quad_signature(grid: &Grid, row: usize, col: usize) -> Result<QuadSignature, ControlPointError> {
    quad_signature_with_radius(grid, row, col, 1)
}

/// Signature on the ring at Chebyshev distance `radius` (neighbours taken
/// in the same eight directions).
pub fn quad_signature_with_radius(
    grid: &Grid,
    row: usize,
    col: usize,
    radius: usize,
) -> Result<QuadSignature, ControlPointError> {
    let radius = radius.max(1);
    if row < radius || col < radius || row + radius >= grid.nrows() || col + radius >= grid.ncols() {
        return Err(ControlPointError::BorderCell { row, col, radius });
    }
    ring_signature(grid, row, col, radius).ok_or(ControlPointError::NodataInRing { row, col })
}

/// Signature for an interior cell, `None` if the center or ring has nodata.
#[inline]
fn ring_signature(grid: &Grid, row: usize, col: usize, radius: usize) -> Option<QuadSignature> {
    let center = grid.get(row, col)?;
    let r = radius as i64;
    let mut edges = [0.0; 8];
    for (e, (dr, dc)) in edges.iter_mut().zip(RING) {
        let z = grid.get((row as i64 + dr * r) as usize, (col as i64 + dc * r) as usize)?;
        *e = z - center;
    }
    Some(QuadSignature { edges })
}

/// Every valid cell within `tol_elev` of the point's elevation, ordered by
/// (residual, row, col).
pub fn direct_match(grid: &Grid, point: &ControlPoint, tol_elev: f64) -> Vec<CandidateMatch> {
    let ncols = grid.ncols();
    let mut out: Vec<CandidateMatch> = grid
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| !grid.is_nodata(**v))
        .filter_map(|(k, &z)| {
            let residual = (z - point.elevation).abs();
            (residual <= tol_elev).then_some(CandidateMatch {
                row: k / ncols,
                col: k % ncols,
                residual,
                method: MatchMethod::Direct,
            })
        })
        .collect();
    sort_candidates(&mut out);
    out
}

/// Interior cells passing the elevation test whose ring signature is within
/// `tol_edge` (max-norm) of `ref_sig`. Residual is the signature distance.
pub fn quad_edge_match(
    grid: &Grid,
    point: &ControlPoint,
    ref_sig: &QuadSignature,
    tol_elev: f64,
    tol_edge: f64,
) -> Vec<CandidateMatch> {
    quad_edge_match_with_radius(grid, point, ref_sig, tol_elev, tol_edge, 1)
}

pub fn quad_edge_match_with_radius(
    grid: &Grid,
    point: &ControlPoint,
    ref_sig: &QuadSignature,
    tol_elev: f64,
    tol_edge: f64,
    radius: usize,
) -> Vec<CandidateMatch> {
    let radius = radius.max(1);
    let (nrows, ncols) = (grid.nrows(), grid.ncols());
    if nrows <= 2 * radius || ncols <= 2 * radius {
        return Vec::new();
    }
    let mut out = Vec::new();
    for row in radius..nrows - radius {
        for col in radius..ncols - radius {
            let z = grid.raw(row, col);
            if grid.is_nodata(z) || (z - point.elevation).abs() > tol_elev {
                continue;
            }
            let Some(sig) = ring_signature(grid, row, col, radius) else { continue };
            let residual = sig.distance(ref_sig);
            if residual <= tol_edge {
                out.push(CandidateMatch { row, col, residual, method: MatchMethod::QuadEdge });
            }
        }
    }
    sort_candidates(&mut out);
    out
}

/// Default matching tolerances derived from a grid's elevation quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_elev: f64,
    pub tol_edge: f64,
}

/// Smallest nonzero gap between distinct valid elevations, capped at 1 m.
pub fn quantization_step(grid: &Grid) -> f64 {
    let mut vals: Vec<f64> = grid.valid_values().collect();
    vals.sort_by(f64::total_cmp);
    vals.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(1.0, f64::min)
}

/// `tol_elev` = half the quantization step, `tol_edge` = twice that.
pub fn default_tolerances(grid: &Grid) -> Tolerances {
    let tol_elev = quantization_step(grid) / 2.0;
    Tolerances { tol_elev, tol_edge: 2.0 * tol_elev }
}
