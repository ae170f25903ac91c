//! Geometric consistency between reference control points and their
//! candidate cells.
//!
//! The reference points form a complete "parent" graph weighted by pairwise
//! distance. A correspondence picks at most one candidate per node such that
//! the chosen cells reproduce the parent's edge lengths and all imply the same
//! integer translation. Requiring identical offsets turns the maximum-clique
//! problem on the association graph into a vote over offsets, which is linear
//! in the total number of candidates.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::control_points::{CandidateMatch, ControlPoint};
use crate::grid::CellOffset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("need at least 2 control points, got {0}")]
    TooFewPoints(usize),
    #[error("control points {first} and {second} fall on the same reference cell ({row}, {col})")]
    DuplicateCell { first: usize, second: usize, row: usize, col: usize },
    #[error("candidate list count {got} does not match {expected} parent nodes")]
    CandidateCountMismatch { expected: usize, got: usize },
    #[error("largest consistent match set has {found} nodes, need {required}")]
    InsufficientMatches { found: usize, required: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParentNode {
    pub point: ControlPoint,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParentEdge {
    pub a: usize,
    pub b: usize,
    /// Distance between cell centers in map units.
    pub length: f64,
}

/// Complete graph over the reference control points.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentGraph {
    pub nodes: Vec<ParentNode>,
    /// All pairs `a < b`, ordered lexicographically.
    pub edges: Vec<ParentEdge>,
    pub cellsize: f64,
}

fn cell_distance(cellsize: f64, a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    dr.hypot(dc) * cellsize
}

impl ParentGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Length of the edge between nodes `i` and `j` (`i != j`).
    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let n = self.nodes.len();
        self.edges[a * n - a * (a + 1) / 2 + (b - a - 1)].length
    }
}

pub fn build_parent_graph(points: &[(ControlPoint, (usize, usize))], cellsize: f64) -> Result<ParentGraph, MatchError> {
    if points.len() < 2 {
        return Err(MatchError::TooFewPoints(points.len()));
    }
    let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(points.len());
    for (i, (_, cell)) in points.iter().enumerate() {
        if let Some(&first) = seen.get(cell) {
            return Err(MatchError::DuplicateCell { first, second: i, row: cell.0, col: cell.1 });
        }
        seen.insert(*cell, i);
    }
    let nodes: Vec<ParentNode> = points.iter().map(|(p, (r, c))| ParentNode { point: *p, row: *r, col: *c }).collect();
    let n = nodes.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let length = cell_distance(cellsize, (nodes[a].row, nodes[a].col), (nodes[b].row, nodes[b].col));
            edges.push(ParentEdge { a, b, length });
        }
    }
    Ok(ParentGraph { nodes, edges, cellsize })
}

/// Integer translation taking candidate cells into the reference frame,
/// on top of whatever offset the two headers already imply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Transform {
    pub drow: i64,
    pub dcol: i64,
    pub support: usize,
}

impl Transform {
    pub fn identity() -> Self {
        Transform { drow: 0, dcol: 0, support: 0 }
    }

    pub fn offset(&self) -> CellOffset {
        CellOffset::new(self.drow, self.dcol)
    }

    pub fn same_offset(&self, other: &Transform) -> bool {
        self.drow == other.drow && self.dcol == other.dcol
    }
}

/// `max(3, ceil(n / 4))`.
pub fn min_support(n_nodes: usize) -> usize {
    n_nodes.div_ceil(4).max(3)
}

/// Tuning for [`find_correspondence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrespondenceParams {
    /// Allowed edge-length mismatch in map units.
    pub dist_tol: f64,
    /// Overrides [`min_support`] when set.
    pub min_support: Option<usize>,
    /// Header-implied position of candidate cell (0, 0) in the reference frame.
    pub frame: CellOffset,
}

impl CorrespondenceParams {
    /// `dist_tol = 1.5 * cellsize`, derived minimum support, aligned headers.
    pub fn for_cellsize(cellsize: f64) -> Self {
        Self { dist_tol: 1.5 * cellsize, min_support: None, frame: CellOffset::ZERO }
    }

    pub fn with_frame(mut self, frame: CellOffset) -> Self {
        self.frame = frame;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub node: usize,
    pub ref_row: usize,
    pub ref_col: usize,
    pub candidate: CandidateMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correspondence {
    /// Sorted by node index.
    pub pairs: Vec<MatchedPair>,
    pub translation: Transform,
    /// Largest edge-length discrepancy among chosen pairs, map units.
    pub max_edge_error: f64,
    pub frame: CellOffset,
    /// Number of candidates offered across all nodes.
    pub candidates_total: usize,
    /// Candidates not used by the correspondence.
    pub false_positives: usize,
}

/// Offset that would carry candidate `cand` onto reference node `node`.
fn implied_offset(node: &ParentNode, cand: &CandidateMatch, frame: CellOffset) -> CellOffset {
    CellOffset::new(node.row as i64 - (cand.row as i64 + frame.drow), node.col as i64 - (cand.col as i64 + frame.dcol))
}

struct Vote {
    offset: CellOffset,
    members: Vec<(usize, usize)>,
    residual: f64,
}

/// Selects the largest set of (node, candidate) pairs that agree on a single
/// translation and preserve the parent graph's edge lengths.
///
/// Ties on support go to the smaller total residual, then the
/// lexicographically smaller node list, then the smaller offset.
pub fn find_correspondence(
    parent: &ParentGraph,
    candidates: &[Vec<CandidateMatch>],
    params: &CorrespondenceParams,
) -> Result<Correspondence, MatchError> {
    let n = parent.len();
    if candidates.len() != n {
        return Err(MatchError::CandidateCountMismatch { expected: n, got: candidates.len() });
    }
    let required = params.min_support.unwrap_or_else(|| min_support(n));
    let candidates_total: usize = candidates.iter().map(Vec::len).sum();

    let mut index: HashMap<CellOffset, usize> = HashMap::new();
    let mut votes: Vec<Vote> = Vec::new();
    for (i, (node, cands)) in parent.nodes.iter().zip(candidates).enumerate() {
        for (k, cand) in cands.iter().enumerate() {
            let offset = implied_offset(node, cand, params.frame);
            let slot = *index.entry(offset).or_insert_with(|| {
                votes.push(Vote { offset, members: Vec::new(), residual: 0.0 });
                votes.len() - 1
            });
            let vote = &mut votes[slot];
            // A node votes once per offset; its lists are residual-sorted so
            // the first hit is the best one.
            if vote.members.last().is_some_and(|&(m, _)| m == i) {
                continue;
            }
            vote.members.push((i, k));
            vote.residual += cand.residual;
        }
    }

    let better = |a: &Vote, b: &Vote| -> bool {
        use std::cmp::Ordering::*;
        match a.members.len().cmp(&b.members.len()) {
            Greater => return true,
            Less => return false,
            Equal => {}
        }
        match a.residual.total_cmp(&b.residual) {
            Less => return true,
            Greater => return false,
            Equal => {}
        }
        let nodes = |v: &Vote| v.members.iter().map(|m| m.0).collect::<Vec<_>>();
        match nodes(a).cmp(&nodes(b)) {
            Less => true,
            Greater => false,
            Equal => a.offset < b.offset,
        }
    };

    let best = votes.iter().fold(None::<&Vote>, |acc, v| match acc {
        Some(b) if !better(v, b) => Some(b),
        _ => Some(v),
    });
    let found = best.map_or(0, |v| v.members.len());
    if found < required.max(2) {
        return Err(MatchError::InsufficientMatches { found, required });
    }
    let best = best.expect("support checked above");

    let pairs: Vec<MatchedPair> = best
        .members
        .iter()
        .map(|&(i, k)| MatchedPair {
            node: i,
            ref_row: parent.nodes[i].row,
            ref_col: parent.nodes[i].col,
            candidate: candidates[i][k],
        })
        .collect();

    let mut max_edge_error: f64 = 0.0;
    for (x, p) in pairs.iter().enumerate() {
        for q in &pairs[x + 1..] {
            let d =
                cell_distance(parent.cellsize, (p.candidate.row, p.candidate.col), (q.candidate.row, q.candidate.col));
            max_edge_error = max_edge_error.max((d - parent.edge_length(p.node, q.node)).abs());
        }
    }
    // Translations preserve distances, so a shared offset always satisfies
    // the edge-length condition.
    debug_assert!(max_edge_error <= params.dist_tol.max(0.0) + 1e-9 * parent.cellsize);

    Ok(Correspondence {
        translation: Transform { drow: best.offset.drow, dcol: best.offset.dcol, support: pairs.len() },
        false_positives: candidates_total - pairs.len(),
        pairs,
        max_edge_error,
        frame: params.frame,
        candidates_total,
    })
}

/// Consensus translation of a correspondence, recomputed from its pairs.
pub fn estimate_transform(correspondence: &Correspondence) -> Transform {
    let frame = correspondence.frame;
    let mut offsets = correspondence.pairs.iter().map(|p| {
        CellOffset::new(
            p.ref_row as i64 - (p.candidate.row as i64 + frame.drow),
            p.ref_col as i64 - (p.candidate.col as i64 + frame.dcol),
        )
    });
    let first = offsets.next().unwrap_or(correspondence.translation.offset());
    debug_assert!(offsets.all(|o| o == first));
    Transform { drow: first.drow, dcol: first.dcol, support: correspondence.pairs.len() }
}
