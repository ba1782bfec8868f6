//! Command-line front end. Orchestrates the library: single-shot transfer
//! simulations, dataset generation, classifier training and evaluation, the
//! finite-measurement accuracy sweep, and stability-map export.
//!
//! Conventions shared by every subcommand:
//! - seeded runs are bit-reproducible, so repeating a command yields
//!   byte-identical files;
//! - every output directory receives a `run.json` with the fully resolved
//!   configuration and the tool version (no timestamps, same reason);
//! - exit codes are 0 on success, 2 for argument or validation errors and
//!   1 for runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    finite_measurement_features, finite_measurement_features_direct, generate_dataset,
    load_dataset, save_dataset, split_dataset, DatasetMeta, LabeledSample, Task,
};
use crate::error::{Error, Result};
use crate::features::{
    efficiency_markovian, stability_map, QuadratureSpec, DEFAULT_NODES_1D, DEFAULT_NODES_2D,
    STABILITY_CONTOUR_LEVEL, STABILITY_DEFAULT_GRID, STABILITY_DEFAULT_HALF_RANGE,
};
use crate::mlp::{evaluate, init_model, load_model, save_model, train, TrainConfig};
use crate::noise::GAMMA_DEFAULT;
use crate::quantum::{single_trajectory_efficiency, DriveCondition};
use crate::rng::{derive_rng, salt};
use crate::surface::{SurfaceConfig, SurfaceSet};

/// Environment variable consulted for the worker-pool size when `--threads`
/// is not given.
pub const THREADS_ENV: &str = "CTAP_NOISE_THREADS";

const DEFAULT_SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

#[derive(Debug, Parser)]
#[command(
    name = "ctap-noise",
    version,
    about = "Classify dephasing noise acting on a three-level adiabatic-passage network"
)]
struct Cli {
    /// Worker threads for grids, datasets and sweeps (0 = all cores).
    /// Falls back to CTAP_NOISE_THREADS, then to all cores. Results do not
    /// depend on the value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transfer efficiency for one drive, at frozen shifts or under Markovian dephasing
    Simulate(SimulateArgs),
    /// Generate a labeled feature-vector dataset for a classification task
    GenData(GenDataArgs),
    /// Train the feature classifier on a generated dataset
    Train(TrainArgs),
    /// Evaluate a saved classifier on a dataset
    Eval(EvalArgs),
    /// Test accuracy versus the number of projective measurements per feature
    SweepM(SweepMArgs),
    /// Map noiseless transfer efficiency over the detuning plane
    Stability(StabilityArgs),
}

/// The three pulse-amplitude conditions used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DriveArg {
    /// Equal pump and stokes peak amplitudes
    Equal,
    /// Pump twice the stokes amplitude
    PumpDominant,
    /// Stokes twice the pump amplitude
    StokesDominant,
}

impl DriveArg {
    fn to_drive(self) -> DriveCondition {
        match self {
            DriveArg::Equal => DriveCondition::equal(),
            DriveArg::PumpDominant => DriveCondition::pump_dominant(),
            DriveArg::StokesDominant => DriveCondition::stokes_dominant(),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            DriveArg::Equal => "equal",
            DriveArg::PumpDominant => "pump-dominant",
            DriveArg::StokesDominant => "stokes-dominant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    /// Both Markovian signs merged into one class
    Four,
    /// Markovian correlated and anticorrelated kept separate
    Five,
}

impl TaskArg {
    fn to_task(self) -> Task {
        match self {
            TaskArg::Four => Task::Four,
            TaskArg::Five => Task::Five,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            TaskArg::Four => "four",
            TaskArg::Five => "five",
        }
    }
}

/// Where feature integrals get their efficiency surfaces from.
#[derive(Debug, Args)]
struct SurfaceOpts {
    /// Surface cache file: loaded when present, otherwise built and saved
    #[arg(long)]
    surface_cache: Option<PathBuf>,

    /// Grid step for a fresh surface build, in 1/T
    #[arg(long, default_value_t = crate::surface::DEFAULT_GRID_STEP)]
    grid_step: f64,
}

impl SurfaceOpts {
    fn obtain(&self) -> Result<SurfaceSet> {
        if let Some(path) = &self.surface_cache {
            if path.exists() {
                eprintln!("loading efficiency surfaces from {}", path.display());
                return SurfaceSet::load(path);
            }
        }
        let config = SurfaceConfig {
            grid_step: self.grid_step,
            ..SurfaceConfig::default()
        };
        eprintln!(
            "building efficiency surfaces at grid step {} (three full detuning scans; \
             the default step takes minutes)",
            self.grid_step
        );
        let set = SurfaceSet::build(&config)?;
        if let Some(path) = &self.surface_cache {
            set.save(path)?;
            eprintln!("cached surfaces at {}", path.display());
        }
        Ok(set)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "surface_cache": self.surface_cache,
            "grid_step": self.grid_step,
        })
    }
}

/// Gauss-Hermite resolution of the ensemble averages.
#[derive(Debug, Args)]
struct QuadOpts {
    /// Nodes for the 1-D (correlated-line) averages
    #[arg(long, default_value_t = DEFAULT_NODES_1D)]
    nodes_1d: usize,

    /// Nodes per axis for the 2-D (uncorrelated) averages
    #[arg(long, default_value_t = DEFAULT_NODES_2D)]
    nodes_2d: usize,
}

impl QuadOpts {
    fn to_spec(&self) -> Result<QuadratureSpec> {
        QuadratureSpec::new(self.nodes_1d, self.nodes_2d)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Driving condition
    #[arg(long, value_enum)]
    drive: DriveArg,

    /// Frozen shift on the intermediate level, in 1/T
    #[arg(long, allow_negative_numbers = true)]
    x1: Option<f64>,

    /// Frozen shift on the target level, in 1/T
    #[arg(long, allow_negative_numbers = true)]
    x2: Option<f64>,

    /// Solve the dephasing master equation instead of frozen shifts
    #[arg(long)]
    markovian: bool,

    /// Level-shift ratio of the dephasing channel (with --markovian)
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,

    /// Dephasing rate in 1/T (with --markovian)
    #[arg(long)]
    gamma: Option<f64>,

    /// Optional output directory for simulate.json and run.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Classification task
    #[arg(long, value_enum)]
    task: TaskArg,

    /// Samples per class
    #[arg(long, default_value_t = 500)]
    per_class: usize,

    /// Master seed for parameter draws
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Dephasing rate stamped on the Markovian classes, in 1/T
    #[arg(long, default_value_t = GAMMA_DEFAULT)]
    gamma: f64,

    /// Output directory (data.jsonl, data.meta.json, run.json)
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    surfaces: SurfaceOpts,

    #[command(flatten)]
    quad: QuadOpts,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset file written by gen-data
    #[arg(long)]
    data: PathBuf,

    /// Seed for the split, the initialization and the batch shuffles
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Maximum training epochs
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,

    /// Minibatch size
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,

    /// Adam step size
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,

    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = TrainConfig::default().early_stop_patience)]
    patience: usize,

    /// Train, validation and test fractions
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [DEFAULT_SPLIT.0, DEFAULT_SPLIT.1, DEFAULT_SPLIT.2])]
    split: Vec<f64>,

    /// Output directory (model.json, report.json, confusion.csv, run.json)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint written by train
    #[arg(long)]
    model: PathBuf,

    /// Dataset file to evaluate on
    #[arg(long)]
    data: PathBuf,

    /// Output directory (eval.json, confusion.csv, run.json)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepMArgs {
    /// Classification task
    #[arg(long, value_enum, default_value_t = TaskArg::Four)]
    task: TaskArg,

    /// Measurement counts to sweep, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = [10_usize, 20, 50, 100, 200, 500, 1000, 2000, 5000]
    )]
    m_list: Vec<usize>,

    /// Samples per class of the underlying exact dataset
    #[arg(long, default_value_t = 500)]
    per_class: usize,

    /// Independent measurement-noise repetitions averaged per M
    #[arg(long, default_value_t = 1)]
    reps: usize,

    /// Master seed (dataset, measurement draws, splits, training)
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Dephasing rate stamped on the Markovian classes, in 1/T
    #[arg(long, default_value_t = GAMMA_DEFAULT)]
    gamma: f64,

    /// Draw quasistatic measurements by direct time propagation instead of
    /// the cached surfaces (slow; for cross-checks)
    #[arg(long)]
    direct: bool,

    /// Output directory (sweep.csv, summary.json, run.json)
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    surfaces: SurfaceOpts,

    #[command(flatten)]
    quad: QuadOpts,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    /// Driving condition
    #[arg(long, value_enum)]
    drive: DriveArg,

    /// Half-range of both detuning axes around zero, in 1/T
    #[arg(long, default_value_t = STABILITY_DEFAULT_HALF_RANGE)]
    half_range: f64,

    /// Grid points per axis
    #[arg(long, default_value_t = STABILITY_DEFAULT_GRID)]
    grid: usize,

    /// Efficiency level of the usable-region mask
    #[arg(long, default_value_t = STABILITY_CONTOUR_LEVEL)]
    level: f64,

    /// Output directory (map.csv, mask.csv, run.json)
    #[arg(long)]
    out: PathBuf,
}

/// Parses the process arguments, runs the selected subcommand and maps
/// errors to exit codes. The binary's `main` delegates here.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for bad input, 1 for everything that fails after validation.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidNoiseSpec(_)
        | Error::ShapeMismatch(_)
        | Error::MarkovianDraw(_) => 2,
        _ => 1,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepM(a) => cmd_sweep_m(a),
        Command::Stability(a) => cmd_stability(a),
    }
}

/// Resolves the worker-pool size (flag, then environment, then all cores)
/// and installs the global pool. 0 means "all cores".
fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(text) => text.trim().parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!(
                    "{THREADS_ENV} must be a nonnegative integer, got {text:?}"
                ))
            })?,
            Err(_) => 0,
        },
    };
    if n > 0 {
        // Only this entry point configures rayon, so building the global
        // pool can only fail if it raced something else; surface that.
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Drops the resolved configuration and tool version beside the outputs.
/// Deliberately carries no timestamps or host details: a repeated seeded
/// run must reproduce the directory byte for byte.
fn write_run_record(dir: &Path, subcommand: &str, config: serde_json::Value) -> Result<()> {
    let record = serde_json::json!({
        "tool": "ctap-noise",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": config,
    });
    write_json(&dir.join("run.json"), &record)
}

fn class_tags(k: usize) -> Result<Vec<&'static str>> {
    let task = match k {
        4 => Task::Four,
        5 => Task::Five,
        other => {
            return Err(Error::ShapeMismatch(format!(
                "classifier outputs must have 4 or 5 classes, got {other}"
            )))
        }
    };
    Ok(task.classes().iter().map(|c| c.tag()).collect())
}

/// Confusion counts as CSV: rows are true classes, columns predictions.
fn confusion_csv(confusion: &[Vec<usize>], tags: &[&str]) -> String {
    let mut out = String::from("true/predicted");
    for tag in tags {
        out.push(',');
        out.push_str(tag);
    }
    out.push('\n');
    for (tag, row) in tags.iter().zip(confusion) {
        out.push_str(tag);
        for count in row {
            out.push(',');
            out.push_str(&count.to_string());
        }
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let drive = a.drive.to_drive();
    let (mode, xi) = if a.markovian {
        if a.x1.is_some() || a.x2.is_some() {
            return Err(Error::InvalidArgument(
                "--markovian solves the dephasing ensemble; frozen shifts --x1/--x2 do not apply"
                    .into(),
            ));
        }
        let eta = a
            .eta
            .ok_or_else(|| Error::InvalidArgument("--markovian requires --eta".into()))?;
        let gamma = a
            .gamma
            .ok_or_else(|| Error::InvalidArgument("--markovian requires --gamma".into()))?;
        ("markovian", efficiency_markovian(&drive, eta, gamma)?)
    } else {
        if a.eta.is_some() || a.gamma.is_some() {
            return Err(Error::InvalidArgument(
                "--eta/--gamma select the Markovian model; add --markovian".into(),
            ));
        }
        let x1 = a.x1.ok_or_else(|| {
            Error::InvalidArgument("either --x1 and --x2 or --markovian is required".into())
        })?;
        let x2 = a.x2.ok_or_else(|| {
            Error::InvalidArgument("either --x1 and --x2 or --markovian is required".into())
        })?;
        if !(x1.is_finite() && x2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "shifts must be finite, got ({x1}, {x2})"
            )));
        }
        ("frozen-shifts", single_trajectory_efficiency(&drive, x1, x2))
    };
    println!("xi = {xi:.12}");
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let record = serde_json::json!({
            "drive": a.drive.tag(),
            "mode": mode,
            "x1": a.x1,
            "x2": a.x2,
            "eta": a.eta,
            "gamma": a.gamma,
            "xi": xi,
        });
        write_json(&dir.join("simulate.json"), &record)?;
        write_run_record(dir, "simulate", record)?;
    }
    Ok(())
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    if a.per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be at least 1".into()));
    }
    let quad = a.quad.to_spec()?;
    ensure_dir(&a.out)?;
    let surfaces = a.surfaces.obtain()?;
    let task = a.task.to_task();
    let data = generate_dataset(task, a.per_class, &quad, a.gamma, a.seed, &surfaces)?;
    let data_path = a.out.join("data.jsonl");
    save_dataset(&data_path, &data)?;
    DatasetMeta::new(task, a.per_class, a.seed, a.gamma, quad).save_beside(&data_path)?;
    write_run_record(
        &a.out,
        "gen-data",
        serde_json::json!({
            "task": a.task.tag(),
            "per_class": a.per_class,
            "seed": a.seed,
            "gamma": a.gamma,
            "nodes_1d": quad.nodes_1d,
            "nodes_2d": quad.nodes_2d_per_axis,
            "surfaces": a.surfaces.describe(),
            "out": a.out,
        }),
    )?;
    println!(
        "wrote {} samples ({} per class) to {}",
        data.len(),
        a.per_class,
        data_path.display()
    );
    Ok(())
}

fn parse_split(split: &[f64]) -> Result<(f64, f64, f64)> {
    match split {
        [a, b, c] => Ok((*a, *b, *c)),
        other => Err(Error::InvalidArgument(format!(
            "--split needs exactly three fractions, got {}",
            other.len()
        ))),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let ratios = parse_split(&a.split)?;
    let data = load_dataset(&a.data)?;
    let k = data
        .first()
        .map(|s| s.label.len())
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
    let split = split_dataset(&data, ratios, a.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
        early_stop_patience: a.patience,
    };
    let model = init_model(k, a.seed)?;
    let (model, report) = train(model, &split, &cfg)?;
    ensure_dir(&a.out)?;
    save_model(&a.out.join("model.json"), &model, &cfg, &report)?;
    write_json(&a.out.join("report.json"), &report)?;
    let tags = class_tags(k)?;
    write_text(
        &a.out.join("confusion.csv"),
        &confusion_csv(&report.confusion, &tags),
    )?;
    write_run_record(
        &a.out,
        "train",
        serde_json::json!({
            "data": a.data,
            "seed": a.seed,
            "epochs": a.epochs,
            "batch_size": a.batch_size,
            "learning_rate": a.learning_rate,
            "patience": a.patience,
            "split": [ratios.0, ratios.1, ratios.2],
            "out": a.out,
        }),
    )?;
    println!(
        "test accuracy {:.4} (best epoch {} of {})",
        report.test_accuracy, report.best_epoch, report.epochs_run
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (model, _cfg, _report) = load_model(&a.model)?;
    let data = load_dataset(&a.data)?;
    let k = data
        .first()
        .map(|s| s.label.len())
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
    if k != model.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} classes but the dataset labels have {k}",
            model.n_classes()
        )));
    }
    let (accuracy, confusion) = evaluate(&model, &data)?;
    ensure_dir(&a.out)?;
    write_json(
        &a.out.join("eval.json"),
        &serde_json::json!({
            "accuracy": accuracy,
            "samples": data.len(),
            "classes": k,
        }),
    )?;
    let tags = class_tags(k)?;
    write_text(&a.out.join("confusion.csv"), &confusion_csv(&confusion, &tags))?;
    write_run_record(
        &a.out,
        "eval",
        serde_json::json!({
            "model": a.model,
            "data": a.data,
            "out": a.out,
        }),
    )?;
    println!("accuracy {:.4} over {} samples", accuracy, data.len());
    Ok(())
}

fn cmd_sweep_m(a: &SweepMArgs) -> Result<()> {
    if a.m_list.is_empty() {
        return Err(Error::InvalidArgument("--m-list must not be empty".into()));
    }
    if a.m_list.iter().any(|&m| m == 0) {
        return Err(Error::InvalidArgument(
            "measurement counts must be at least 1".into(),
        ));
    }
    if a.reps == 0 {
        return Err(Error::InvalidArgument("--reps must be at least 1".into()));
    }
    let quad = a.quad.to_spec()?;
    ensure_dir(&a.out)?;
    let surfaces = a.surfaces.obtain()?;
    let task = a.task.to_task();
    let exact = generate_dataset(task, a.per_class, &quad, a.gamma, a.seed, &surfaces)?;
    let cfg = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };

    let train_accuracy_on = |data: &[LabeledSample]| -> Result<f64> {
        let split = split_dataset(data, DEFAULT_SPLIT, a.seed)?;
        let model = init_model(task.n_classes(), a.seed)?;
        let (_, report) = train(model, &split, &cfg)?;
        Ok(report.test_accuracy)
    };

    let ideal_accuracy = train_accuracy_on(&exact)?;
    println!("ideal accuracy {ideal_accuracy:.4}");

    let mut rows: Vec<(usize, f64)> = Vec::with_capacity(a.m_list.len());
    for &m in &a.m_list {
        let mut acc_sum = 0.0;
        for rep in 0..a.reps {
            let mut rng = derive_rng(a.seed, &[salt::FINITE_M, m as u64, rep as u64]);
            let noisy: Vec<LabeledSample> = exact
                .iter()
                .map(|s| -> Result<LabeledSample> {
                    let features = if a.direct {
                        finite_measurement_features_direct(&s.provenance, &s.features, m, &mut rng)?
                    } else {
                        finite_measurement_features(
                            &s.provenance,
                            &s.features,
                            m,
                            &surfaces,
                            &mut rng,
                        )?
                    };
                    Ok(LabeledSample {
                        features,
                        label: s.label.clone(),
                        provenance: s.provenance,
                    })
                })
                .collect::<Result<_>>()?;
            acc_sum += train_accuracy_on(&noisy)?;
        }
        let accuracy = acc_sum / a.reps as f64;
        println!("m={m} accuracy {accuracy:.4}");
        rows.push((m, accuracy));
    }

    let mut csv = String::from("m,accuracy\n");
    for (m, accuracy) in &rows {
        csv.push_str(&format!("{m},{accuracy}\n"));
    }
    write_text(&a.out.join("sweep.csv"), &csv)?;
    write_json(
        &a.out.join("summary.json"),
        &serde_json::json!({
            "ideal_accuracy": ideal_accuracy,
            "rows": rows.iter().map(|(m, acc)| serde_json::json!({"m": m, "accuracy": acc})).collect::<Vec<_>>(),
        }),
    )?;
    write_run_record(
        &a.out,
        "sweep-m",
        serde_json::json!({
            "task": a.task.tag(),
            "m_list": a.m_list,
            "per_class": a.per_class,
            "reps": a.reps,
            "seed": a.seed,
            "gamma": a.gamma,
            "direct": a.direct,
            "nodes_1d": quad.nodes_1d,
            "nodes_2d": quad.nodes_2d_per_axis,
            "surfaces": a.surfaces.describe(),
            "out": a.out,
        }),
    )?;
    Ok(())
}

fn cmd_stability(a: &StabilityArgs) -> Result<()> {
    if !(a.half_range > 0.0 && a.half_range.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "--half-range must be positive, got {}",
            a.half_range
        )));
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--level must lie strictly between 0 and 1, got {}",
            a.level
        )));
    }
    let drive = a.drive.to_drive();
    let map = stability_map(
        &drive,
        (-a.half_range, a.half_range),
        (-a.half_range, a.half_range),
        a.grid,
    )?;
    ensure_dir(&a.out)?;
    write_text(&a.out.join("map.csv"), &map.to_csv())?;

    let mask = map.mask(a.level);
    let mut mask_csv = String::from("delta_p/delta");
    for d in &map.delta_axis {
        mask_csv.push(',');
        mask_csv.push_str(&d.to_string());
    }
    mask_csv.push('\n');
    for (dp, row) in map.delta_p_axis.iter().zip(&mask) {
        mask_csv.push_str(&dp.to_string());
        for &inside in row {
            mask_csv.push(',');
            mask_csv.push(if inside { '1' } else { '0' });
        }
        mask_csv.push('\n');
    }
    write_text(&a.out.join("mask.csv"), &mask_csv)?;

    let usable =
        mask.iter().flatten().filter(|&&b| b).count() as f64 / (a.grid * a.grid) as f64;
    write_run_record(
        &a.out,
        "stability",
        serde_json::json!({
            "drive": a.drive.tag(),
            "half_range": a.half_range,
            "grid": a.grid,
            "level": a.level,
            "out": a.out,
        }),
    )?;
    println!(
        "mapped {}x{} detunings; {:.1}% of the window transfers above {}",
        a.grid,
        a.grid,
        100.0 * usable,
        a.level
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_grammar_is_self_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_separate_bad_input_from_runtime_failure() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(exit_code(&Error::ShapeMismatch("x".into())), 2);
        assert_eq!(
            exit_code(&Error::io(
                "/nope",
                std::io::Error::new(std::io::ErrorKind::NotFound, "gone")
            )),
            1
        );
        assert_eq!(exit_code(&Error::Diverged { epoch: 3, loss: f64::NAN }), 1);
    }

    #[test]
    fn confusion_table_lists_true_classes_by_row() {
        let csv = confusion_csv(&[vec![3, 1], vec![0, 4]], &["a", "b"]);
        assert_eq!(csv, "true/predicted,a,b\na,3,1\nb,0,4\n");
    }
}
