//! Dynamic color coding: elevations are rescaled to the grid's own valid
//! range and pushed through a piecewise-linear color ramp.

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("grid has no valid cells to render")]
    AllNodata,
    #[error("invalid color ramp: {0}")]
    InvalidRamp(String),
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ColorRamp {
    stops: Vec<(f64, Rgb)>,
    nodata: Rgb,
}

impl ColorRamp {
    /// Stop positions must increase strictly from 0 to 1.
    pub fn new(stops: Vec<(f64, Rgb)>, nodata: Rgb) -> Result<Self, RenderError> {
        if stops.len() < 2 {
            return Err(RenderError::InvalidRamp("need at least two stops".into()));
        }
        if stops[0].0 != 0.0 || stops[stops.len() - 1].0 != 1.0 {
            return Err(RenderError::InvalidRamp("stops must start at 0 and end at 1".into()));
        }
        if stops.windows(2).any(|w| w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less)) {
            return Err(RenderError::InvalidRamp("stop positions must be strictly increasing".into()));
        }
        Ok(Self { stops, nodata })
    }

    /// Green lowlands through tan and brown to snow.
    pub fn hypsometric() -> Self {
        Self {
            stops: vec![(0.0, [46, 110, 60]), (0.35, [222, 214, 130]), (0.70, [140, 90, 50]), (1.0, [250, 250, 250])],
            nodata: [120, 120, 120],
        }
    }

    pub fn stops(&self) -> &[(f64, Rgb)] {
        &self.stops
    }

    pub fn nodata_color(&self) -> Rgb {
        self.nodata
    }

    /// Color at normalized position `u` (clamped to [0, 1]).
    pub fn color_at(&self, u: f64) -> Rgb {
        let u = u.clamp(0.0, 1.0);
        let k = self.stops.partition_point(|(p, _)| *p <= u);
        if k >= self.stops.len() {
            return self.stops[self.stops.len() - 1].1;
        }
        // k >= 1 because the first stop sits at 0 <= u.
        let (p0, c0) = self.stops[k - 1];
        let (p1, c1) = self.stops[k];
        let t = (u - p0) / (p1 - p0);
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let a = f64::from(c0[ch]);
            let b = f64::from(c1[ch]);
            out[ch] = (a + t * (b - a) + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

impl Default for ColorRamp {
    fn default() -> Self {
        Self::hypsometric()
    }
}

/// 8-bit RGB raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.pixels.len() * 3);
        out.extend_from_slice(header.as_bytes());
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }
}

/// Resolution of the normalized elevation fed to the ramp. Rescaling a grid
/// perturbs `(z - min) / span` by a few ulps; snapping to this lattice keeps
/// `render(a * g + b) == render(g)` while staying far below 8-bit color
/// resolution.
const POSITION_STEPS: f64 = (1u64 << 24) as f64;

pub fn render_grid(grid: &Grid, ramp: &ColorRamp) -> Result<RgbImage, RenderError> {
    let (zmin, zmax) = grid.min_max().ok_or(RenderError::AllNodata)?;
    let span = zmax - zmin;
    let pixels = grid
        .values()
        .iter()
        .map(|&z| {
            if grid.is_nodata(z) {
                ramp.nodata
            } else if span > 0.0 {
                ramp.color_at(((z - zmin) / span * POSITION_STEPS).round() / POSITION_STEPS)
            } else {
                ramp.stops[0].1
            }
        })
        .collect();
    Ok(RgbImage { width: grid.ncols(), height: grid.nrows(), pixels })
}
