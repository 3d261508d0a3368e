use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coopseg::checkpoint::load_checkpoint;
use coopseg::config::ExperimentConfig;
use coopseg::data::{generate_range, load_dataset, save_dataset, split_indices};
use coopseg::engine::{set_threads, Fault};
use coopseg::train::{evaluate, prepare_eval_set, train, Mode, REPORT_HEADER};
use coopseg::verify::gradcheck_suite;
use coopseg::Error;

/// Cooperative joint segmentation and classification on a synthetic
/// retina-like benchmark.
#[derive(Debug, Parser)]
#[command(name = "coopseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the train and validation splits to disk.
    Generate(Common),
    /// Train from a fresh model and write report, masks and checkpoints.
    Train(TrainArgs),
    /// Score a checkpoint on the validation split.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable op and the tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (the dataset directory for `generate`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Fraction of classifier training labels replaced by random grades.
    #[arg(long)]
    random_labels: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Dataset directory, overriding `paths.dataset`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    Conv2dInputGrad,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING_DATA: u8 = 3;
const EXIT_CHECKPOINT: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::MissingData(_) | Error::Parse { .. } => EXIT_MISSING_DATA,
        Error::Checkpoint(_) => EXIT_CHECKPOINT,
        _ => EXIT_FAILURE,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn threads_from_env() -> Result<usize, Error> {
    match std::env::var("COOPSEG_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("COOPSEG_THREADS = {v:?} is not a positive integer"))),
    }
}

fn generate(args: Common) -> Result<(), Error> {
    let mut cfg = load_config(&args)?;
    if let Some(seed) = args.seed {
        cfg.data.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.paths.dataset = out;
    }
    cfg.validate()?;
    let root = &cfg.paths.dataset;
    let (train_idx, val_idx) = split_indices(&cfg.data);
    save_dataset(&generate_range(&cfg.data, train_idx), &root.join("train"))?;
    save_dataset(&generate_range(&cfg.data, val_idx), &root.join("val"))?;
    cfg.write_echo(root)?;
    println!(
        "wrote {} train and {} val samples to {}",
        cfg.data.n_train,
        cfg.data.n_val,
        root.display()
    );
    Ok(())
}

fn load_split(root: &Path, split: &str) -> Result<Vec<coopseg::data::Sample>, Error> {
    let samples = load_dataset(&root.join(split))?;
    if samples.is_empty() {
        return Err(Error::MissingData(root.join(split)));
    }
    Ok(samples)
}

fn run_train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(seed) = args.common.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = args.common.out {
        cfg.paths.out = out;
    }
    if let Some(mode) = args.mode {
        cfg.train.mode = mode;
    }
    if let Some(p) = args.random_labels {
        cfg.train.random_label_fraction = p;
    }
    if let Some(rounds) = args.rounds {
        cfg.train.rounds = rounds;
    }
    if let Some(data) = args.data {
        cfg.paths.dataset = data;
    }
    cfg.validate()?;
    let train_set = load_split(&cfg.paths.dataset, "train")?;
    let val_set = load_split(&cfg.paths.dataset, "val")?;
    cfg.write_echo(&cfg.paths.out)?;
    let outcome = train(&cfg.train, &cfg.arch, &train_set, &val_set, Some(&cfg.paths.out))?;
    let report = &outcome.report;
    println!(
        "{} rounds in {:.1}s, {} of {} classifier labels randomized",
        cfg.train.rounds,
        report.wall_clock_secs,
        report.corrupted_labels,
        train_set.len()
    );
    if let Some(m) = report.final_metrics() {
        println!(
            "final miou {:.4} top1 {:.4} top2 {:.4} binacc {:.4}",
            m.miou, m.top1, m.top2, m.binacc
        );
    }
    println!("outputs in {}", cfg.paths.out.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(data) = args.data {
        cfg.paths.dataset = data;
    }
    cfg.validate()?;
    let ckpt = load_checkpoint(&args.checkpoint, &cfg.arch)?;
    let val_set = load_split(&cfg.paths.dataset, "val")?;
    let set = prepare_eval_set(&val_set, cfg.arch.input_hw, cfg.train.eval_batch)?;
    let (m, _) = evaluate(&ckpt.model, &set, 0)?;
    println!("class  iou");
    for (c, iou) in m.per_class_iou.iter().enumerate() {
        match iou {
            Some(v) => println!("{c:>5}  {v:.6}"),
            None => println!("{c:>5}  absent"),
        }
    }
    println!("miou {}\ntop1 {}\ntop2 {}\nbinacc {}", m.miou, m.top1, m.top2, m.binacc);
    let out = args
        .common
        .out
        .unwrap_or_else(|| args.checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let path = out.join("eval.csv");
    let row = format!("{},,,,,{},{},{},{}\n", ckpt.round, m.miou, m.top1, m.top2, m.binacc);
    std::fs::write(&path, format!("{REPORT_HEADER}\n{row}")).map_err(|e| Error::Io { path, source: e })
}

fn run_gradcheck(args: GradcheckArgs) -> Result<bool, Error> {
    let fault = args.inject_fault.map(|f| match f {
        FaultArg::Conv2dInputGrad => Fault::Conv2dInputGrad,
    });
    let rows = gradcheck_suite(fault)?;
    println!("{:<24} {:>14} {:>10} {:>8}  status", "op", "max_rel_error", "tolerance", "coords");
    for r in &rows {
        println!(
            "{:<24} {:>14.3e} {:>10.0e} {:>8}  {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.checked,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    Ok(rows.iter().all(|r| r.passed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|n| {
        set_threads(n);
        match cli.command {
            Command::Generate(a) => generate(a).map(|_| true),
            Command::Train(a) => run_train(a).map(|_| true),
            Command::Eval(a) => run_eval(a).map(|_| true),
            Command::Gradcheck(a) => run_gradcheck(a),
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_GRADCHECK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
