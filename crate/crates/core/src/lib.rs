//! Registration of overlapping digital elevation models.
//!
//! A candidate DEM is matched against a reference DEM through a handful of
//! control points with known elevations. Each point proposes candidate cells,
//! the constellation of points votes on a whole-cell translation, and the
//! registered candidate is compared with the reference through an error
//! matrix. Tiling, rendering and a seeded terrain generator round out the
//! toolkit.

pub mod constellation;
pub mod control_points;
pub mod experiment;
pub mod grid;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod render;
pub mod synth;
pub mod tiling;

pub use constellation::{
    build_parent_graph, estimate_transform, find_correspondence, Correspondence, CorrespondenceParams, MatchError,
    ParentGraph, Transform,
};
pub use control_points::{
    load_control_points, CandidateMatch, ControlPoint, ControlPointError, MatchMethod, PointFile, QuadSignature,
};
pub use grid::{
    cell_to_geo, geo_to_cell, parse_grid, serialize_grid, AlignError, CellOffset, Grid, GridError, GridHeader,
    DEFAULT_NODATA,
};
pub use metrics::{compare, ErrorReport, MetricError};
pub use pipeline::{register, PipelineError, RegisterOptions, RegistrationRun};
pub use registration::{apply_transform, merge_grids, GridMerge, MergeError, MergePolicy};
pub use render::{render_grid, ColorRamp, RenderError, RgbImage};
pub use synth::{SynthError, SynthSpec};
pub use tiling::{assemble, partition, TileError, TileSet};
