//! JSON report written by `demreg register`. Every number here is copied
//! from the core result types, never recomputed.

use std::path::Path;

use demreg_core::constellation::Correspondence;
use demreg_core::pipeline::{RegistrationRun, ResolvedSettings};
use demreg_core::{CellOffset, ErrorReport, Grid, MatchError, MatchMethod};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct GridSummary {
    pub file: String,
    pub nrows: usize,
    pub ncols: usize,
    pub cellsize: f64,
    pub valid_cells: usize,
}

impl GridSummary {
    pub fn new(path: &Path, grid: &Grid) -> Self {
        Self {
            file: file_name(path),
            nrows: grid.nrows(),
            ncols: grid.ncols(),
            cellsize: grid.header().cellsize,
            valid_cells: grid.valid_count(),
        }
    }
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Serialize)]
pub struct Inputs {
    pub reference: GridSummary,
    pub candidate: GridSummary,
    pub points_file: String,
    pub points_read: usize,
}

#[derive(Debug, Serialize)]
pub struct PointReport {
    pub node: usize,
    pub lat: f64,
    pub lon: f64,
    pub elevation: f64,
    pub ref_row: usize,
    pub ref_col: usize,
    pub candidates: usize,
    /// Candidate cell chosen by the correspondence, if any.
    pub matched: Option<(usize, usize)>,
}

#[derive(Debug, Serialize)]
pub struct CorrespondenceReport {
    pub offset: CellOffset,
    pub support: usize,
    pub max_edge_error: f64,
    pub pairs: Vec<PairReport>,
}

#[derive(Debug, Serialize)]
pub struct PairReport {
    pub node: usize,
    pub ref_row: usize,
    pub ref_col: usize,
    pub cand_row: usize,
    pub cand_col: usize,
    pub residual: f64,
}

impl CorrespondenceReport {
    fn new(c: &Correspondence) -> Self {
        Self {
            offset: c.translation.offset(),
            support: c.translation.support,
            max_edge_error: c.max_edge_error,
            pairs: c
                .pairs
                .iter()
                .map(|p| PairReport {
                    node: p.node,
                    ref_row: p.ref_row,
                    ref_col: p.ref_col,
                    cand_row: p.candidate.row,
                    cand_col: p.candidate.col,
                    residual: p.candidate.residual,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MergeReport {
    pub nrows: usize,
    pub ncols: usize,
    pub overlap_cells: usize,
}

#[derive(Debug, Serialize)]
pub struct Warnings {
    pub candidates_total: usize,
    /// Candidates rejected by the constellation match.
    pub false_positives: usize,
    /// `(line, line of first occurrence)` for repeated points in the input file.
    pub duplicate_points: Vec<(usize, usize)>,
    pub empty_overlap: bool,
    pub messages: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub status: &'static str,
    pub inputs: Inputs,
    pub method: MatchMethod,
    pub settings: ResolvedSettings,
    /// Candidate position implied by the headers alone.
    pub frame: CellOffset,
    pub points: Vec<PointReport>,
    pub correspondence: Option<CorrespondenceReport>,
    pub failure: Option<String>,
    pub merge: Option<MergeReport>,
    pub errors: Option<ErrorReport>,
    pub warnings: Warnings,
}

impl RunReport {
    pub fn new(inputs: Inputs, run: &RegistrationRun, duplicates: Vec<(usize, usize)>) -> Self {
        let correspondence = run.outcome.as_ref().ok().map(|r| &r.correspondence);
        let points = run
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| PointReport {
                node: i,
                lat: n.point.lat,
                lon: n.point.lon,
                elevation: n.point.elevation,
                ref_row: n.ref_row,
                ref_col: n.ref_col,
                candidates: n.candidates.len(),
                matched: correspondence
                    .and_then(|c| c.pairs.iter().find(|p| p.node == i))
                    .map(|p| (p.candidate.row, p.candidate.col)),
            })
            .collect();
        let (status, failure) = match &run.outcome {
            Ok(_) => ("registered", None),
            Err(e @ MatchError::InsufficientMatches { .. }) => ("insufficient-matches", Some(e.to_string())),
            Err(e) => ("failed", Some(e.to_string())),
        };
        let ok = run.outcome.as_ref().ok();
        Self {
            status,
            inputs,
            method: run.settings.method,
            settings: run.settings,
            frame: run.frame,
            points,
            correspondence: correspondence.map(CorrespondenceReport::new),
            failure,
            merge: ok.map(|r| MergeReport {
                nrows: r.merge.grid.nrows(),
                ncols: r.merge.grid.ncols(),
                overlap_cells: r.merge.overlap_cells,
            }),
            errors: ok.map(|r| r.errors),
            warnings: Warnings {
                candidates_total: run.candidates_total(),
                false_positives: run.false_positives(),
                duplicate_points: duplicates,
                empty_overlap: ok.is_some_and(|r| r.merge.empty_overlap),
                messages: run.warnings.clone(),
            },
        }
    }
}
