//! Deterministic synthetic terrain and candidate DEMs with known offsets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::constellation::Transform;
use crate::control_points::ControlPoint;
use crate::grid::{cell_to_geo, Grid, GridError, GridHeader, DEFAULT_NODATA};

/// Synthetic elevations are rounded to this step (2^-10 m) so that sums,
/// offsets and constant biases stay exact in binary floating point.
pub const ELEVATION_QUANTUM: f64 = 1.0 / 1024.0;

/// SRTM-like 90 m posting.
pub const SYNTH_CELLSIZE: f64 = 90.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid terrain spec: {0}")]
    InvalidSpec(String),
    #[error("offset ({drow}, {dcol}) leaves no overlap with a {nrows}x{ncols} grid")]
    EmptyWindow { drow: i64, dcol: i64, nrows: usize, ncols: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub base_elevation: f64,
    pub amplitude: f64,
    /// Per-level decay of the random displacement, in (0, 1).
    pub roughness: f64,
}

impl SynthSpec {
    pub fn new(seed: u64, rows: usize, cols: usize) -> Self {
        Self { seed, rows, cols, base_elevation: 200.0, amplitude: 1500.0, roughness: 0.55 }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.rows < 3 || self.cols < 3 {
            return Err(SynthError::InvalidSpec("rows and cols must be at least 3".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(SynthError::InvalidSpec("amplitude must be positive".into()));
        }
        if !(self.roughness > 0.0 && self.roughness < 1.0) {
            return Err(SynthError::InvalidSpec("roughness must lie in (0, 1)".into()));
        }
        if !self.base_elevation.is_finite() {
            return Err(SynthError::InvalidSpec("base elevation must be finite".into()));
        }
        Ok(())
    }
}

pub fn quantize(z: f64, step: f64) -> f64 {
    (z / step).round() * step
}

/// Diamond-square heights on a `(2^k + 1)^2` lattice, row-major.
fn diamond_square(size: usize, roughness: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut h = vec![0.0; size * size];
    let at = |r: usize, c: usize| r * size + c;
    for &(r, c) in &[(0, 0), (0, size - 1), (size - 1, 0), (size - 1, size - 1)] {
        h[at(r, c)] = rng.random::<f64>();
    }
    let mut step = size - 1;
    let mut scale = 1.0;
    while step > 1 {
        let half = step / 2;
        // Diamond: centers of squares.
        for r in (half..size).step_by(step) {
            for c in (half..size).step_by(step) {
                let avg = (h[at(r - half, c - half)]
                    + h[at(r - half, c + half)]
                    + h[at(r + half, c - half)]
                    + h[at(r + half, c + half)])
                    / 4.0;
                h[at(r, c)] = avg + rng.random_range(-1.0..1.0) * scale;
            }
        }
        // Square: edge midpoints, averaging whichever neighbours exist.
        for r in (0..size).step_by(half) {
            let first = if (r / half).is_multiple_of(2) { half } else { 0 };
            for c in (first..size).step_by(step) {
                let mut sum = 0.0;
                let mut n = 0.0;
                if r >= half {
                    sum += h[at(r - half, c)];
                    n += 1.0;
                }
                if r + half < size {
                    sum += h[at(r + half, c)];
                    n += 1.0;
                }
                if c >= half {
                    sum += h[at(r, c - half)];
                    n += 1.0;
                }
                if c + half < size {
                    sum += h[at(r, c + half)];
                    n += 1.0;
                }
                h[at(r, c)] = sum / n + rng.random_range(-1.0..1.0) * scale;
            }
        }
        step = half;
        scale *= roughness;
    }
    h
}

/// Seeded diamond-square terrain cropped to `rows x cols`, rescaled to
/// `[base, base + amplitude]` and quantized to [`ELEVATION_QUANTUM`].
pub fn generate_terrain(spec: &SynthSpec) -> Result<Grid, SynthError> {
    spec.validate()?;
    let need = spec.rows.max(spec.cols);
    let mut size = 3;
    while size < need {
        size = (size - 1) * 2 + 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lattice = diamond_square(size, spec.roughness, &mut rng);

    let mut cropped = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        cropped.extend_from_slice(&lattice[r * size..r * size + spec.cols]);
    }
    let (lo, hi) = cropped.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let values = cropped
        .into_iter()
        .map(|v| {
            let u = if span > 0.0 { (v - lo) / span } else { 0.0 };
            quantize(spec.base_elevation + spec.amplitude * u, ELEVATION_QUANTUM)
        })
        .collect();
    let header = GridHeader::new(spec.cols, spec.rows, 0.0, 0.0, SYNTH_CELLSIZE, DEFAULT_NODATA)?;
    Ok(Grid::new(header, values)?)
}

/// Standard normal deviate keyed by `(seed, index)`, independent of the
/// order in which cells are visited.
pub fn keyed_normal(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.sample(StandardNormal)
}

/// Source cells that the candidate window covers, as `(row0, col0, nrows, ncols)`.
pub fn candidate_window(
    nrows: usize,
    ncols: usize,
    drow: i64,
    dcol: i64,
) -> Result<(usize, usize, usize, usize), SynthError> {
    if drow.unsigned_abs() as usize >= nrows || dcol.unsigned_abs() as usize >= ncols {
        return Err(SynthError::EmptyWindow { drow, dcol, nrows, ncols });
    }
    Ok((
        drow.max(0) as usize,
        dcol.max(0) as usize,
        nrows - drow.unsigned_abs() as usize,
        ncols - dcol.unsigned_abs() as usize,
    ))
}

/// Cuts a candidate DEM out of `grid`.
///
/// Candidate cell `(r, c)` holds source cell `(r + row0, c + col0)` (see
/// [`candidate_window`]) plus `vertical_bias` and Gaussian noise. Its header is
/// deliberately displaced so that, read at face value, it lands `(drow, dcol)`
/// cells away from where it belongs; the returned transform is the correction
/// registration has to find.
pub fn derive_candidate(
    grid: &Grid,
    drow: i64,
    dcol: i64,
    noise_sigma: f64,
    vertical_bias: f64,
    seed: u64,
) -> Result<(Grid, Transform), SynthError> {
    let (nrows, ncols) = (grid.nrows(), grid.ncols());
    let (r0, c0, h, w) = candidate_window(nrows, ncols, drow, dcol)?;
    let src = grid.header();
    let mut values = Vec::with_capacity(h * w);
    for r in r0..r0 + h {
        for c in c0..c0 + w {
            let z = grid.raw(r, c);
            if grid.is_nodata(z) {
                values.push(z);
                continue;
            }
            let mut v = z;
            if vertical_bias != 0.0 {
                v += vertical_bias;
            }
            if noise_sigma > 0.0 {
                v += noise_sigma * keyed_normal(seed, (r * ncols + c) as u64);
            }
            values.push(v);
        }
    }
    let cs = src.cellsize;
    let nominal_row0 = r0 as i64 - drow;
    let nominal_col0 = c0 as i64 - dcol;
    let header = GridHeader::new(
        w,
        h,
        src.xllcorner + nominal_col0 as f64 * cs,
        src.yllcorner + (nrows as i64 - nominal_row0 - h as i64) as f64 * cs,
        cs,
        src.nodata_value,
    )?;
    Ok((Grid::new(header, values)?, Transform { drow, dcol, support: 0 }))
}

/// Rounds every valid cell to a multiple of `step`.
pub fn quantize_grid(grid: &Grid, step: f64) -> Result<Grid, SynthError> {
    Ok(grid.map_valid(|z| quantize(z, step))?)
}

/// Picks `n` control points inside the reference window
/// `rows x cols` starting at `(row0, col0)`, keeping `margin` cells from its
/// edges. Strict local extrema with distinct elevations come first; other
/// cells with unused elevations fill any shortfall.
pub fn sample_control_points(
    reference: &Grid,
    window: (usize, usize, usize, usize),
    margin: usize,
    n: usize,
    seed: u64,
) -> Vec<(ControlPoint, (usize, usize))> {
    let (row0, col0, rows, cols) = window;
    let margin = margin.max(1);
    if rows <= 2 * margin || cols <= 2 * margin {
        return Vec::new();
    }
    let mut extrema = Vec::new();
    let mut others = Vec::new();
    for r in row0 + margin..row0 + rows - margin {
        for c in col0 + margin..col0 + cols - margin {
            let Some(z) = reference.get(r, c) else { continue };
            let ring: Option<Vec<f64>> = crate::control_points::RING
                .iter()
                .map(|(dr, dc)| reference.get_signed(r as i64 + dr, c as i64 + dc))
                .collect();
            let Some(ring) = ring else { continue };
            if ring.iter().all(|v| *v < z) || ring.iter().all(|v| *v > z) {
                extrema.push((r, c));
            } else {
                others.push((r, c));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0DE_CAFE_F00D);
    extrema.shuffle(&mut rng);
    others.shuffle(&mut rng);

    let mut used = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    for (r, c) in extrema.into_iter().chain(others) {
        if out.len() == n {
            break;
        }
        let z = reference.raw(r, c);
        if !used.insert(z.to_bits()) {
            continue;
        }
        let (x, y) = cell_to_geo(reference.header(), r, c).expect("cell inside grid");
        out.push((ControlPoint::new(y, x, z), (r, c)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_terrain() {
        let spec = SynthSpec::new(7, 33, 20);
        let a = generate_terrain(&spec).unwrap();
        let b = generate_terrain(&spec).unwrap();
        let bits = |g: &Grid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&generate_terrain(&SynthSpec::new(8, 33, 20)).unwrap()));
    }

    #[test]
    fn terrain_range_and_header() {
        let spec = SynthSpec { base_elevation: 100.0, amplitude: 50.0, ..SynthSpec::new(1, 17, 9) };
        let g = generate_terrain(&spec).unwrap();
        let (lo, hi) = g.min_max().unwrap();
        assert_eq!((lo, hi), (100.0, 150.0));
        assert_eq!(g.header().cellsize, 90.0);
        assert_eq!((g.header().xllcorner, g.header().yllcorner), (0.0, 0.0));
        assert!(g.values().iter().all(|v| (v / ELEVATION_QUANTUM).fract() == 0.0));
    }

    #[test]
    fn amplitude_scales_range() {
        for seed in 0..5 {
            let a = SynthSpec { amplitude: 300.0, ..SynthSpec::new(seed, 40, 40) };
            let b = SynthSpec { amplitude: 600.0, ..a };
            let range = |s: &SynthSpec| {
                let (lo, hi) = generate_terrain(s).unwrap().min_max().unwrap();
                hi - lo
            };
            assert!((range(&b) - 2.0 * range(&a)).abs() <= 2.0 * ELEVATION_QUANTUM);
        }
    }

    #[test]
    fn minimal_spec() {
        let g = generate_terrain(&SynthSpec::new(3, 3, 3)).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (3, 3));
        assert!(generate_terrain(&SynthSpec::new(3, 2, 3)).is_err());
        assert!(generate_terrain(&SynthSpec { amplitude: 0.0, ..SynthSpec::new(3, 3, 3) }).is_err());
        assert!(generate_terrain(&SynthSpec { roughness: 1.0, ..SynthSpec::new(3, 3, 3) }).is_err());
    }

    #[test]
    fn zero_offset_candidate_is_identity() {
        let g = generate_terrain(&SynthSpec::new(11, 12, 10)).unwrap();
        let (c, t) = derive_candidate(&g, 0, 0, 0.0, 0.0, 1).unwrap();
        assert_eq!(c, g);
        assert_eq!((t.drow, t.dcol), (0, 0));
    }

    #[test]
    fn shifted_candidate_content_and_header() {
        let g = generate_terrain(&SynthSpec::new(12, 20, 16)).unwrap();
        let (c, t) = derive_candidate(&g, 5, -3, 0.0, 0.0, 1).unwrap();
        assert_eq!((t.drow, t.dcol), (5, -3));
        assert_eq!((c.nrows(), c.ncols()), (15, 13));
        // Oracle: direct indexing into the source.
        for r in 0..15 {
            for col in 0..13 {
                assert_eq!(c.raw(r, col), g.raw(r + 5, col));
            }
        }
        // Read at face value, candidate (0,0) claims to be source (0, 3).
        let at = g.header().frame_offset(c.header()).unwrap();
        assert_eq!((at.drow, at.dcol), (0, 3));
        // Applying the transform puts it back on source (5, 0).
        assert_eq!((at.drow + t.drow, at.dcol + t.dcol), (5, 0));
    }

    #[test]
    fn bias_and_noise() {
        let g = generate_terrain(&SynthSpec::new(2, 10, 10)).unwrap();
        let (c, _) = derive_candidate(&g, 1, 1, 0.0, 2.0, 0).unwrap();
        for r in 0..9 {
            for col in 0..9 {
                assert_eq!(c.raw(r, col) - g.raw(r + 1, col + 1), 2.0);
            }
        }
        let (n1, _) = derive_candidate(&g, 1, 1, 0.5, 0.0, 9).unwrap();
        let (n2, _) = derive_candidate(&g, 1, 1, 0.5, 0.0, 9).unwrap();
        assert_eq!(n1, n2);
        // Noise is keyed by source cell, so a different offset sees the same
        // perturbation at the same source cell.
        let (n3, _) = derive_candidate(&g, 0, 0, 0.5, 0.0, 9).unwrap();
        assert_eq!(n1.raw(0, 0), n3.raw(1, 1));
    }

    #[test]
    fn empty_window() {
        let g = generate_terrain(&SynthSpec::new(2, 5, 5)).unwrap();
        assert!(matches!(derive_candidate(&g, 5, 0, 0.0, 0.0, 0), Err(SynthError::EmptyWindow { .. })));
        assert!(matches!(derive_candidate(&g, 0, -5, 0.0, 0.0, 0), Err(SynthError::EmptyWindow { .. })));
    }

    #[test]
    fn keyed_normal_is_standard() {
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|k| keyed_normal(5, k)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
        assert_eq!(keyed_normal(5, 17), xs[17]);
    }

    #[test]
    fn control_points_distinct_and_interior() {
        let g = generate_terrain(&SynthSpec::new(4, 64, 64)).unwrap();
        let pts = sample_control_points(&g, (4, 6, 50, 40), 2, 12, 3);
        assert_eq!(pts.len(), 12);
        let mut elevs: Vec<u64> = pts.iter().map(|(p, _)| p.elevation.to_bits()).collect();
        elevs.sort();
        elevs.dedup();
        assert_eq!(elevs.len(), 12);
        for (p, (r, c)) in &pts {
            assert!(*r >= 6 && *r < 52 && *c >= 8 && *c < 44);
            assert_eq!(g.raw(*r, *c), p.elevation);
            assert_eq!(crate::grid::geo_to_cell(g.header(), p.lon, p.lat).unwrap(), (*r, *c));
        }
        assert_eq!(pts, sample_control_points(&g, (4, 6, 50, 40), 2, 12, 3));
    }
}
