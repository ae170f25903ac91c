//! Seeded synthetic trials comparing the two matching methods.
//!
//! Each trial builds a terrain, cuts a displaced candidate from it (optionally
//! noisy, biased, quantized and salted with decoy cells that repeat each
//! control point's elevation), registers it with every requested method and
//! records whether the true offset came back along with the error matrix.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constellation::Transform;
use crate::control_points::{ControlPoint, MatchMethod};
use crate::grid::{CellOffset, Grid};
use crate::metrics::ErrorReport;
use crate::pipeline::{register, PipelineError, RegisterOptions};
use crate::synth::{
    candidate_window, derive_candidate, generate_terrain, quantize_grid, sample_control_points, SynthError, SynthSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("seed {seed}: only {found} control points available, {wanted} requested")]
    NotEnoughPoints { seed: u64, found: usize, wanted: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub rows: usize,
    pub cols: usize,
    pub n_points: usize,
    /// Fixed offset; when `None` one is drawn per seed from
    /// `[-offset_range, offset_range]^2`.
    pub offset: Option<CellOffset>,
    pub offset_range: i64,
    pub sigma: f64,
    pub bias: f64,
    /// Round candidate elevations to this step after noise and bias.
    pub quantize: Option<f64>,
    /// Extra candidate cells per control point that repeat its elevation.
    pub decoys: usize,
    pub methods: Vec<MatchMethod>,
    pub options: RegisterOptions,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            rows: 300,
            cols: 300,
            n_points: 40,
            offset: None,
            offset_range: 20,
            sigma: 0.0,
            bias: 0.0,
            quantize: None,
            decoys: 0,
            methods: vec![MatchMethod::Direct, MatchMethod::QuadEdge],
            options: RegisterOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: MatchMethod,
    pub registered: bool,
    pub recovered: bool,
    pub transform: Option<Transform>,
    pub candidates_total: usize,
    pub false_positives: usize,
    pub errors: Option<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub truth: CellOffset,
    pub outcomes: Vec<MethodOutcome>,
}

impl TrialResult {
    pub fn outcome(&self, method: MatchMethod) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

/// Everything a trial feeds to registration, exposed for tests and the CLI.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub reference: Grid,
    pub candidate: Grid,
    pub truth: Transform,
    pub points: Vec<(ControlPoint, (usize, usize))>,
}

fn draw_offset(seed: u64, range: i64) -> CellOffset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x0FF5E7));
    CellOffset::new(rng.random_range(-range..=range), rng.random_range(-range..=range))
}

pub fn build_trial(config: &TrialConfig, seed: u64) -> Result<TrialInputs, ExperimentError> {
    let reference = generate_terrain(&SynthSpec::new(seed, config.rows, config.cols))?;
    let offset = config.offset.unwrap_or_else(|| draw_offset(seed, config.offset_range));
    let (mut candidate, truth) =
        derive_candidate(&reference, offset.drow, offset.dcol, config.sigma, config.bias, seed)?;
    if let Some(step) = config.quantize {
        candidate = quantize_grid(&candidate, step)?;
    }

    let radius = config.options.ring_radius.max(1);
    let window = candidate_window(config.rows, config.cols, offset.drow, offset.dcol)?;
    let points = sample_control_points(&reference, window, radius + 1, config.n_points, seed);
    if points.len() < config.n_points {
        return Err(ExperimentError::NotEnoughPoints { seed, found: points.len(), wanted: config.n_points });
    }

    if config.decoys > 0 {
        candidate = plant_decoys(candidate, &points, window, radius, config.decoys, seed)?;
    }
    Ok(TrialInputs { reference, candidate, truth, points })
}

/// Copies each control point's candidate elevation into `k` random cells
/// that stay clear of every true match and its signature ring.
fn plant_decoys(
    candidate: Grid,
    points: &[(ControlPoint, (usize, usize))],
    window: (usize, usize, usize, usize),
    radius: usize,
    k: usize,
    seed: u64,
) -> Result<Grid, SynthError> {
    let (row0, col0, _, _) = window;
    let (nrows, ncols) = (candidate.nrows(), candidate.ncols());
    let true_cells: Vec<(usize, usize)> = points.iter().map(|(_, (r, c))| (r - row0, c - col0)).collect();
    let clear =
        |r: usize, c: usize| true_cells.iter().all(|&(tr, tc)| r.abs_diff(tr) > radius || c.abs_diff(tc) > radius);
    let mut pool: Vec<(usize, usize)> = (radius..nrows - radius)
        .flat_map(|r| (radius..ncols - radius).map(move |c| (r, c)))
        .filter(|&(r, c)| clear(r, c))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEC0_1DEC_0157_0000);
    pool.shuffle(&mut rng);

    let (header, mut values) = candidate.into_parts();
    let mut picks = pool.into_iter();
    for &(tr, tc) in &true_cells {
        let z = values[tr * ncols + tc];
        for (r, c) in picks.by_ref().take(k) {
            values[r * ncols + c] = z;
        }
    }
    Ok(Grid::new(header, values)?)
}

pub fn run_trial(config: &TrialConfig, seed: u64) -> Result<TrialResult, ExperimentError> {
    let inputs = build_trial(config, seed)?;
    let points: Vec<ControlPoint> = inputs.points.iter().map(|(p, _)| *p).collect();
    let mut outcomes = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let options = RegisterOptions { method, ..config.options };
        let run = register(&inputs.reference, &inputs.candidate, &points, &options)?;
        let (registered, transform, errors) = match &run.outcome {
            Ok(r) => (true, Some(r.transform), Some(r.errors)),
            Err(_) => (false, None, None),
        };
        outcomes.push(MethodOutcome {
            method,
            registered,
            recovered: transform.is_some_and(|t| t.same_offset(&inputs.truth)),
            transform,
            candidates_total: run.candidates_total(),
            false_positives: run.false_positives(),
            errors,
        });
    }
    Ok(TrialResult { seed, truth: inputs.truth.offset(), outcomes })
}

/// Runs every seed (in parallel) and returns results in seed order.
pub fn run_trials(config: &TrialConfig, seeds: &[u64]) -> Result<Vec<TrialResult>, ExperimentError> {
    seeds.par_iter().map(|&s| run_trial(config, s)).collect()
}

/// One row of the method-comparison table. Error columns average over
/// trials where registration succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: MatchMethod,
    pub trials: usize,
    pub registered: usize,
    pub recovered: usize,
    pub false_positives: usize,
    pub mean_abs_diff: Option<f64>,
    pub mean_diff_pct: Option<f64>,
    pub rmse: Option<f64>,
    pub tsc: Option<f64>,
    pub abs_t: Option<f64>,
}

fn average(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(methods: &[MatchMethod], trials: &[TrialResult]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&method| {
            let outs: Vec<&MethodOutcome> = trials.iter().filter_map(|t| t.outcome(method)).collect();
            let reports: Vec<&ErrorReport> = outs.iter().filter_map(|o| o.errors.as_ref()).collect();
            MethodSummary {
                method,
                trials: outs.len(),
                registered: outs.iter().filter(|o| o.registered).count(),
                recovered: outs.iter().filter(|o| o.recovered).count(),
                false_positives: outs.iter().map(|o| o.false_positives).sum(),
                mean_abs_diff: average(reports.iter().map(|r| r.mean_diff.abs())),
                mean_diff_pct: average(reports.iter().filter_map(|r| r.mean_diff_pct)),
                rmse: average(reports.iter().map(|r| r.rmse)),
                tsc: average(reports.iter().filter_map(|r| r.tsc)),
                abs_t: average(reports.iter().filter_map(|r| if r.t_defined { r.t_stat.map(f64::abs) } else { None })),
            }
        })
        .collect()
}
