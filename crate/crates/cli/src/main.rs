use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demreg_core::constellation::min_support;
use demreg_core::control_points::format_control_points;
use demreg_core::experiment::{
    build_trial, run_trials, summarize, ExperimentError, MethodSummary, TrialConfig, TrialResult,
};
use demreg_core::{
    load_control_points, parse_grid, partition, register, render_grid, serialize_grid, CellOffset, ColorRamp, Grid,
    MatchError, MatchMethod, MergePolicy, PipelineError, RegisterOptions,
};
use serde::Serialize;

mod report;

use report::{file_name, GridSummary, Inputs, RunReport};

const THREADS_ENV: &str = "DEMREG_THREADS";
const DEFAULT_TILE: usize = 512;

#[derive(Parser)]
#[command(name = "demreg", version, about = "Register, tile, compare and render ESRI ASCII elevation grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a grid's header, valid-cell count and elevation range.
    Info { dem: PathBuf },
    /// Split a grid into child tiles named <stem>_r<i>_c<j>.asc.
    Tile(TileArgs),
    /// Register a candidate grid onto a reference grid from control points.
    Register(RegisterArgs),
    /// Render a grid to a binary PPM with dynamic color coding.
    Render {
        dem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic reference/candidate pair with known offset.
    Synth(SynthArgs),
    /// Compare matching methods over seeded synthetic trials.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TileArgs {
    dem: PathBuf,
    /// Tile edge length in cells (rows and columns). Without it, tiles are
    /// 512 cells or the whole grid, whichever is smaller.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    tile_rows: Option<usize>,
    #[arg(long)]
    tile_cols: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MatchFlags {
    #[arg(long, default_value = "quad-edge")]
    method: MatchMethod,
    #[arg(long)]
    tol_elev: Option<f64>,
    #[arg(long)]
    tol_edge: Option<f64>,
    /// Edge-length tolerance in map units.
    #[arg(long)]
    dist_tol: Option<f64>,
    #[arg(long, default_value = "reference-priority")]
    policy: MergePolicy,
}

impl MatchFlags {
    fn options(&self) -> RegisterOptions {
        RegisterOptions {
            method: self.method,
            tol_elev: self.tol_elev,
            tol_edge: self.tol_edge,
            dist_tol: self.dist_tol,
            policy: self.policy,
            ..RegisterOptions::default()
        }
    }
}

#[derive(Args)]
struct RegisterArgs {
    reference: PathBuf,
    candidate: PathBuf,
    /// Control points, one `lat,lon,elevation` per line.
    points: PathBuf,
    #[command(flatten)]
    flags: MatchFlags,
    #[arg(long)]
    out_dem: Option<PathBuf>,
    #[arg(long)]
    out_render: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct TrialFlags {
    #[arg(long, default_value_t = 300)]
    rows: usize,
    #[arg(long, default_value_t = 300)]
    cols: usize,
    #[arg(long, default_value_t = 40)]
    n_points: usize,
    /// Fixed offset `drow,dcol`; drawn per seed when omitted.
    #[arg(long, value_parser = parse_offset, allow_hyphen_values = true)]
    offset: Option<CellOffset>,
    #[arg(long, default_value_t = 20)]
    offset_range: i64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    bias: f64,
    /// Round candidate elevations to this step.
    #[arg(long)]
    quantize: Option<f64>,
    /// Decoy cells per control point that repeat its elevation.
    #[arg(long, default_value_t = 0)]
    decoys: usize,
}

impl TrialFlags {
    fn config(&self, options: RegisterOptions) -> TrialConfig {
        TrialConfig {
            rows: self.rows,
            cols: self.cols,
            n_points: self.n_points,
            offset: self.offset,
            offset_range: self.offset_range,
            sigma: self.sigma,
            bias: self.bias,
            quantize: self.quantize,
            decoys: self.decoys,
            options,
            ..TrialConfig::default()
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    trial: TrialFlags,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 20)]
    trials: u64,
    #[command(flatten)]
    trial: TrialFlags,
    #[arg(long)]
    tol_elev: Option<f64>,
    #[arg(long)]
    tol_edge: Option<f64>,
    #[arg(long)]
    dist_tol: Option<f64>,
    #[arg(long)]
    out_report: Option<PathBuf>,
}

fn parse_offset(s: &str) -> Result<CellOffset, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `drow,dcol`, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("`{t}`: {e}"));
    Ok(CellOffset::new(p(a)?, p(b)?))
}

/// Error carrying the process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: 1, message: format!("{}: {e}", path.display()) }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn read_grid(path: &Path) -> Result<Grid, Failure> {
    parse_grid(&read_text(path)?).map_err(|e| Failure::parse(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn cmd_info(path: &Path) -> Result<u8, Failure> {
    let grid = read_grid(path)?;
    let h = grid.header();
    println!("file          {}", path.display());
    println!("ncols         {}", h.ncols);
    println!("nrows         {}", h.nrows);
    println!("xllcorner     {}", h.xllcorner);
    println!("yllcorner     {}", h.yllcorner);
    println!("cellsize      {}", h.cellsize);
    println!("NODATA_value  {}", h.nodata_value);
    println!("cells         {}", h.cell_count());
    println!("valid cells   {}", grid.valid_count());
    match grid.min_max() {
        Some((lo, hi)) => {
            println!("min elevation {lo}");
            println!("max elevation {hi}");
        }
        None => {
            println!("min elevation absent");
            println!("max elevation absent");
        }
    }
    Ok(0)
}

fn cmd_tile(args: &TileArgs) -> Result<u8, Failure> {
    let grid = read_grid(&args.dem)?;
    let rows = args.tile_rows.or(args.tile).unwrap_or(DEFAULT_TILE.min(grid.nrows()));
    let cols = args.tile_cols.or(args.tile).unwrap_or(DEFAULT_TILE.min(grid.ncols()));
    let tiles = partition(&grid, rows, cols).map_err(|e| Failure::usage(e.to_string()))?;
    let stem = args.dem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tile".into());
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::io(&args.out_dir, e))?;
    for ((i, j), tile) in tiles.iter_indexed() {
        let path = args.out_dir.join(demreg_core::tiling::tile_file_name(&stem, i, j));
        write(&path, serialize_grid(tile))?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn cmd_register(args: &RegisterArgs) -> Result<u8, Failure> {
    let reference = read_grid(&args.reference)?;
    let candidate = read_grid(&args.candidate)?;
    let points = load_control_points(&read_text(&args.points)?).map_err(|e| Failure::parse(&args.points, e))?;

    let run = register(&reference, &candidate, &points.points, &args.flags.options()).map_err(|e| match e {
        PipelineError::Match(MatchError::InsufficientMatches { .. }) | PipelineError::Metric(_) => {
            Failure { code: 3, message: e.to_string() }
        }
        e => Failure::usage(e.to_string()),
    })?;

    let inputs = Inputs {
        reference: GridSummary::new(&args.reference, &reference),
        candidate: GridSummary::new(&args.candidate, &candidate),
        points_file: file_name(&args.points),
        points_read: points.points.len(),
    };
    let report = RunReport::new(inputs, &run, points.duplicates.clone());
    let json = to_json(&report);
    match &args.out_report {
        Some(path) => write(path, &json)?,
        None => print!("{json}"),
    }
    for (line, first) in &points.duplicates {
        eprintln!("warning: point on line {line} repeats line {first}");
    }
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }

    let registered = match &run.outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(3);
        }
    };
    if let Some(path) = &args.out_dem {
        write(path, serialize_grid(&registered.merge.grid))?;
    }
    if let Some(path) = &args.out_render {
        let img =
            render_grid(&registered.merge.grid, &ColorRamp::default()).map_err(|e| Failure::usage(e.to_string()))?;
        write(path, img.to_ppm())?;
    }
    let t = registered.transform;
    eprintln!(
        "{}: offset ({}, {}) with support {}, rmse {}",
        args.flags.method.name(),
        t.drow,
        t.dcol,
        t.support,
        registered.errors.rmse
    );
    Ok(0)
}

fn cmd_render(dem: &Path, out: &Path) -> Result<u8, Failure> {
    let grid = read_grid(dem)?;
    let img = render_grid(&grid, &ColorRamp::default()).map_err(|e| Failure::parse(dem, e))?;
    write(out, img.to_ppm())?;
    Ok(0)
}

#[derive(Serialize)]
struct Truth {
    seed: u64,
    offset: CellOffset,
    sigma: f64,
    bias: f64,
    quantize: Option<f64>,
    decoys: usize,
}

fn experiment_failure(e: ExperimentError) -> Failure {
    match e {
        ExperimentError::Pipeline(PipelineError::Match(MatchError::InsufficientMatches { .. })) => {
            Failure { code: 3, message: e.to_string() }
        }
        e => Failure::usage(e.to_string()),
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<u8, Failure> {
    let config = args.trial.config(RegisterOptions::default());
    let inputs = build_trial(&config, args.seed).map_err(experiment_failure)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::io(&args.out_dir, e))?;
    let points: Vec<_> = inputs.points.iter().map(|(p, _)| *p).collect();
    let truth = Truth {
        seed: args.seed,
        offset: inputs.truth.offset(),
        sigma: config.sigma,
        bias: config.bias,
        quantize: config.quantize,
        decoys: config.decoys,
    };
    write(&args.out_dir.join("reference.asc"), serialize_grid(&inputs.reference))?;
    write(&args.out_dir.join("candidate.asc"), serialize_grid(&inputs.candidate))?;
    write(&args.out_dir.join("points.csv"), format_control_points(&points))?;
    write(&args.out_dir.join("truth.json"), to_json(&truth))?;
    println!("offset {},{}", truth.offset.drow, truth.offset.dcol);
    Ok(0)
}

#[derive(Serialize)]
struct BenchReport<'a> {
    config: &'a TrialConfig,
    seeds: &'a [u64],
    summary: &'a [MethodSummary],
    trials: &'a [TrialResult],
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn bench_table(rows: &[MethodSummary]) -> String {
    let mut s = format!(
        "{:<10} {:>6} {:>9} {:>10} {:>10} {:>12} {:>10} {:>12} {:>10} {:>10}\n",
        "method", "trials", "recovered", "registered", "false_pos", "|mean_diff|", "mean_diff%", "rmse", "tsc", "|t|"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>6} {:>9} {:>10} {:>10} {:>12} {:>10} {:>12} {:>10} {:>10}\n",
            r.method.name(),
            r.trials,
            r.recovered,
            r.registered,
            r.false_positives,
            cell(r.mean_abs_diff),
            cell(r.mean_diff_pct),
            cell(r.rmse),
            cell(r.tsc),
            cell(r.abs_t),
        ));
    }
    s
}

fn cmd_bench(args: &BenchArgs) -> Result<u8, Failure> {
    let n = args.trial.n_points;
    if n < min_support(n) {
        return Err(Failure::usage(format!("--n-points {n} is below the minimum support of {}", min_support(n))));
    }
    let options = RegisterOptions {
        tol_elev: args.tol_elev,
        tol_edge: args.tol_edge,
        dist_tol: args.dist_tol,
        ..RegisterOptions::default()
    };
    let config = args.trial.config(options);
    let seeds: Vec<u64> = (0..args.trials).map(|k| args.seed + k).collect();
    let trials = run_trials(&config, &seeds).map_err(experiment_failure)?;
    let summary = summarize(&config.methods, &trials);
    print!("{}", bench_table(&summary));
    if let Some(path) = &args.out_report {
        let report = BenchReport { config: &config, seeds: &seeds, summary: &summary, trials: &trials };
        write(path, to_json(&report))?;
    }
    Ok(0)
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure::usage(format!("{THREADS_ENV}=`{v}` is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::usage(format!("cannot start thread pool: {e}")))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let pool = thread_pool()?;
    pool.install(|| match &cli.command {
        Command::Info { dem } => cmd_info(dem),
        Command::Tile(args) => cmd_tile(args),
        Command::Register(args) => cmd_register(args),
        Command::Render { dem, out } => cmd_render(dem, out),
        Command::Synth(args) => cmd_synth(args),
        Command::Bench(args) => cmd_bench(args),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
