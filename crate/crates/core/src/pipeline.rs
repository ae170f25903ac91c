//! End-to-end registration of a candidate grid against a reference grid from
//! a set of control points.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constellation::{
    build_parent_graph, estimate_transform, find_correspondence, min_support, Correspondence, CorrespondenceParams,
    MatchError, Transform,
};
use crate::control_points::{
    default_tolerances, direct_match, quad_edge_match_with_radius, quad_signature_with_radius, CandidateMatch,
    ControlPoint, MatchMethod,
};
use crate::grid::{geo_to_cell, AlignError, CellOffset, Grid};
use crate::metrics::{difference_surface, error_report, ErrorReport, MetricError};
use crate::registration::{apply_transform, merge_grids, GridMerge, MergeError, MergePolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("control point {index} ({lat}, {lon}) lies outside the reference grid")]
    PointOutsideReference { index: usize, lat: f64, lon: f64 },
    #[error("candidate does not share the reference cell lattice: {0}")]
    Align(#[from] AlignError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegisterOptions {
    pub method: MatchMethod,
    /// Overrides the quantization-derived elevation tolerance.
    pub tol_elev: Option<f64>,
    /// Overrides the default signature tolerance (2 x tol_elev).
    pub tol_edge: Option<f64>,
    /// Overrides the default 1.5 x cellsize edge-length tolerance.
    pub dist_tol: Option<f64>,
    pub min_support: Option<usize>,
    pub ring_radius: usize,
    pub policy: MergePolicy,
}

impl Default for RegisterOptions {
    fn default() -> Self {
        Self {
            method: MatchMethod::QuadEdge,
            tol_elev: None,
            tol_edge: None,
            dist_tol: None,
            min_support: None,
            ring_radius: 1,
            policy: MergePolicy::ReferencePriority,
        }
    }
}

impl RegisterOptions {
    pub fn with_method(method: MatchMethod) -> Self {
        Self { method, ..Self::default() }
    }
}

/// Settings actually used for a run after defaults are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedSettings {
    pub method: MatchMethod,
    pub tol_elev: f64,
    pub tol_edge: f64,
    pub dist_tol: f64,
    pub min_support: usize,
    pub ring_radius: usize,
    pub policy: MergePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeCandidates {
    pub point: ControlPoint,
    pub ref_row: usize,
    pub ref_col: usize,
    pub candidates: Vec<CandidateMatch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registered {
    pub correspondence: Correspondence,
    pub transform: Transform,
    /// Candidate re-georeferenced into the reference frame.
    pub registered: Grid,
    pub merge: GridMerge,
    pub errors: ErrorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRun {
    pub settings: ResolvedSettings,
    /// Header-implied offset of the candidate in the reference frame.
    pub frame: CellOffset,
    pub nodes: Vec<NodeCandidates>,
    pub warnings: Vec<String>,
    pub outcome: Result<Registered, MatchError>,
}

impl RegistrationRun {
    pub fn candidates_total(&self) -> usize {
        self.nodes.iter().map(|n| n.candidates.len()).sum()
    }

    /// Candidates not used by the correspondence (all of them on failure).
    pub fn false_positives(&self) -> usize {
        match &self.outcome {
            Ok(r) => r.correspondence.false_positives,
            Err(_) => self.candidates_total(),
        }
    }
}

/// Candidate cells for each node, in node order.
pub fn generate_candidates(
    reference: &Grid,
    candidate: &Grid,
    nodes: &[(ControlPoint, (usize, usize))],
    settings: &ResolvedSettings,
) -> Vec<Result<Vec<CandidateMatch>, String>> {
    nodes
        .par_iter()
        .map(|(point, (row, col))| match settings.method {
            MatchMethod::Direct => Ok(direct_match(candidate, point, settings.tol_elev)),
            MatchMethod::QuadEdge => {
                let sig = quad_signature_with_radius(reference, *row, *col, settings.ring_radius)
                    .map_err(|e| e.to_string())?;
                Ok(quad_edge_match_with_radius(
                    candidate,
                    point,
                    &sig,
                    settings.tol_elev,
                    settings.tol_edge,
                    settings.ring_radius,
                ))
            }
        })
        .collect()
}

/// Registers `candidate` onto `reference` using user-marked control points.
///
/// Hard input problems are returned as errors. A matching failure (too few
/// consistent matches) is reported through [`RegistrationRun::outcome`] so
/// the per-point diagnostics survive.
pub fn register(
    reference: &Grid,
    candidate: &Grid,
    points: &[ControlPoint],
    options: &RegisterOptions,
) -> Result<RegistrationRun, PipelineError> {
    let rh = reference.header();
    let frame = rh.frame_offset(candidate.header())?;
    let mut warnings = Vec::new();

    let mut nodes: Vec<(ControlPoint, (usize, usize))> = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let cell = geo_to_cell(rh, p.lon, p.lat).map_err(|_| PipelineError::PointOutsideReference {
            index,
            lat: p.lat,
            lon: p.lon,
        })?;
        if let Some(first) = nodes.iter().position(|(_, c)| *c == cell) {
            warnings.push(format!(
                "control point {index} shares reference cell ({}, {}) with an earlier point; dropped (first seen as node {first})",
                cell.0, cell.1
            ));
            continue;
        }
        nodes.push((*p, cell));
    }
    if nodes.len() < 2 {
        return Err(MatchError::TooFewPoints(nodes.len()).into());
    }

    let defaults = default_tolerances(candidate);
    let tol_elev = options.tol_elev.unwrap_or(defaults.tol_elev);
    let settings = ResolvedSettings {
        method: options.method,
        tol_elev,
        tol_edge: options.tol_edge.unwrap_or(2.0 * tol_elev),
        dist_tol: options.dist_tol.unwrap_or(1.5 * rh.cellsize),
        min_support: options.min_support.unwrap_or_else(|| min_support(nodes.len())),
        ring_radius: options.ring_radius.max(1),
        policy: options.policy,
    };

    let lists = generate_candidates(reference, candidate, &nodes, &settings);
    let mut node_summaries = Vec::with_capacity(nodes.len());
    let mut candidate_lists = Vec::with_capacity(nodes.len());
    for (i, ((point, (row, col)), list)) in nodes.iter().zip(lists).enumerate() {
        let list = list.unwrap_or_else(|reason| {
            warnings.push(format!("control point node {i}: no signature ({reason})"));
            Vec::new()
        });
        node_summaries.push(NodeCandidates { point: *point, ref_row: *row, ref_col: *col, candidates: list.clone() });
        candidate_lists.push(list);
    }

    let parent = build_parent_graph(&nodes, rh.cellsize)?;
    let params = CorrespondenceParams { dist_tol: settings.dist_tol, min_support: Some(settings.min_support), frame };
    let outcome = match find_correspondence(&parent, &candidate_lists, &params) {
        Ok(correspondence) => {
            let transform = estimate_transform(&correspondence);
            let registered = apply_transform(rh, candidate, &transform)?;
            let merge = merge_grids(reference, candidate, &transform, settings.policy)?;
            if merge.empty_overlap {
                warnings.push("registered candidate does not overlap the reference".into());
            }
            let errors = error_report(&difference_surface(reference, &registered)?)?;
            warnings.extend(errors.degeneracies());
            Ok(Registered { correspondence, transform, registered, merge, errors })
        }
        Err(e @ MatchError::InsufficientMatches { .. }) => Err(e),
        Err(e) => return Err(e.into()),
    };

    Ok(RegistrationRun { settings, frame, nodes: node_summaries, warnings, outcome })
}
