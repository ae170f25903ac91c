//! Splitting a parent grid into standalone child tiles and joining them back.

use thiserror::Error;

use crate::grid::{AlignError, Grid, GridError, GridHeader};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TileError {
    #[error("tile size {tile_rows}x{tile_cols} invalid for a {nrows}x{ncols} grid")]
    InvalidTileSize { tile_rows: usize, tile_cols: usize, nrows: usize, ncols: usize },
    #[error("tiles have inconsistent cell sizes")]
    InconsistentCellsize,
    #[error("tiles have inconsistent NODATA values")]
    InconsistentNodata,
    #[error("tiles do not exactly cover a rectangle: {0}")]
    GapOrOverlap(String),
    #[error("no tiles to assemble")]
    Empty,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    /// Row-major in tile order.
    pub tiles: Vec<Grid>,
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// (tiles down, tiles across)
    pub grid_shape: (usize, usize),
}

impl TileSet {
    pub fn tile(&self, i: usize, j: usize) -> Option<&Grid> {
        let (down, across) = self.grid_shape;
        (i < down && j < across).then(|| &self.tiles[i * across + j])
    }

    /// Tiles paired with their (tile row, tile column) position.
    pub fn iter_indexed(&self) -> impl Iterator<Item = ((usize, usize), &Grid)> {
        let across = self.grid_shape.1;
        self.tiles.iter().enumerate().map(move |(k, t)| ((k / across, k % across), t))
    }
}

/// File name for child tile `(i, j)` of a parent called `stem`.
pub fn tile_file_name(stem: &str, i: usize, j: usize) -> String {
    format!("{stem}_r{i}_c{j}.asc")
}

/// Cuts `grid` into tiles of at most `tile_rows` x `tile_cols` cells. Edge
/// tiles are smaller when the size does not divide the grid evenly.
pub fn partition(grid: &Grid, tile_rows: usize, tile_cols: usize) -> Result<TileSet, TileError> {
    let (nrows, ncols) = (grid.nrows(), grid.ncols());
    if tile_rows == 0 || tile_cols == 0 || tile_rows > nrows || tile_cols > ncols {
        return Err(TileError::InvalidTileSize { tile_rows, tile_cols, nrows, ncols });
    }
    let down = nrows.div_ceil(tile_rows);
    let across = ncols.div_ceil(tile_cols);
    let mut tiles = Vec::with_capacity(down * across);
    for i in 0..down {
        let r0 = i * tile_rows;
        let h = tile_rows.min(nrows - r0);
        for j in 0..across {
            let c0 = j * tile_cols;
            let w = tile_cols.min(ncols - c0);
            tiles.push(grid.window(r0, c0, h, w)?);
        }
    }
    Ok(TileSet { tiles, tile_rows, tile_cols, grid_shape: (down, across) })
}

/// Rebuilds the parent grid from georeferenced tiles in any order.
pub fn assemble(tiles: &TileSet) -> Result<Grid, TileError> {
    assemble_grids(&tiles.tiles)
}

/// Same as [`assemble`] for a loose collection of tiles, e.g. files read
/// back from disk.
pub fn assemble_grids(tiles: &[Grid]) -> Result<Grid, TileError> {
    let first = tiles.first().ok_or(TileError::Empty)?;
    let base = *first.header();
    if tiles.iter().any(|t| t.nodata() != base.nodata_value) {
        return Err(TileError::InconsistentNodata);
    }

    let mut offsets = Vec::with_capacity(tiles.len());
    for t in tiles {
        match base.frame_offset(t.header()) {
            Ok(o) => offsets.push(o),
            Err(AlignError::CellsizeMismatch(..)) => return Err(TileError::InconsistentCellsize),
            Err(AlignError::Misaligned) => {
                return Err(TileError::GapOrOverlap("tile corners are off the shared cell lattice".into()))
            }
        }
    }

    let row_min = offsets.iter().map(|o| o.drow).min().unwrap_or(0);
    let col_min = offsets.iter().map(|o| o.dcol).min().unwrap_or(0);
    let row_max = tiles.iter().zip(&offsets).map(|(t, o)| o.drow + t.nrows() as i64).max().unwrap_or(0);
    let col_max = tiles.iter().zip(&offsets).map(|(t, o)| o.dcol + t.ncols() as i64).max().unwrap_or(0);
    let nrows = (row_max - row_min) as usize;
    let ncols = (col_max - col_min) as usize;

    let covered: usize = tiles.iter().map(|t| t.header().cell_count()).sum();
    if covered != nrows * ncols {
        return Err(TileError::GapOrOverlap(format!(
            "tiles hold {covered} cells but their bounding box has {}",
            nrows * ncols
        )));
    }

    let mut values = vec![base.nodata_value; nrows * ncols];
    let mut seen = vec![false; nrows * ncols];
    for (t, o) in tiles.iter().zip(&offsets) {
        let r0 = (o.drow - row_min) as usize;
        let c0 = (o.dcol - col_min) as usize;
        for r in 0..t.nrows() {
            for c in 0..t.ncols() {
                let k = (r0 + r) * ncols + c0 + c;
                if std::mem::replace(&mut seen[k], true) {
                    return Err(TileError::GapOrOverlap(format!("cell ({}, {}) covered twice", r0 + r, c0 + c)));
                }
                values[k] = t.raw(r, c);
            }
        }
    }

    // Take the corners from the tiles touching the west and south edges so
    // the parent georeference is reproduced bit for bit.
    let xllcorner = tiles
        .iter()
        .zip(&offsets)
        .find(|(_, o)| o.dcol == col_min)
        .map(|(t, _)| t.header().xllcorner)
        .unwrap_or(base.xllcorner);
    let yllcorner = tiles
        .iter()
        .zip(&offsets)
        .find(|(t, o)| o.drow + t.nrows() as i64 == row_max)
        .map(|(t, _)| t.header().yllcorner)
        .unwrap_or(base.yllcorner);

    let header = GridHeader::new(ncols, nrows, xllcorner, yllcorner, base.cellsize, base.nodata_value)?;
    Ok(Grid::new(header, values)?)
}
