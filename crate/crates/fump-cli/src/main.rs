//! Command-line front end: data generation, annotation conversion,
//! long-tail curation, training, evaluation, ablation and the verification
//! suites. Every subcommand echoes its full configuration up front so a run
//! can be reproduced from its log. Exit codes: 0 success, 1 failure or
//! verification failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fump::config::{config_hash, CliConfigFile, MetricRadii, ScenarioConfig, TrainConfig};
use fump::datagen::{
    convert_annotations, curate_longtail, generate_record, read_dataset, scenes_of, write_dataset,
    CURATE_MIN_PTS,
};
use fump::trainer::{ablate, evaluate, load_checkpoint, loss_records_csv, save_checkpoint, train};
use fump::uttd::StateMode;

/// Unified motion/planning pipeline on synthetic driving scenes.
///
/// Defaults mirror the model constants: K=6 trajectory proposals over a
/// T=6-step (3 s) horizon, 4 attention zones, hard-sample queue capacity
/// 700 with EMA factor gamma=0.2, and a 6.25% (0.0625) ego-state mask
/// probability during training.
#[derive(Parser)]
#[command(name = "fump", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset (JSON lines).
    GenData(GenDataArgs),
    /// Convert per-frame ego-frame box annotations into per-track
    /// local-frame motion trajectories.
    Convert(ConvertArgs),
    /// Select the long-tail subset of a dataset via OPTICS clustering of
    /// ego futures (k smallest clusters).
    Curate(CurateArgs),
    /// Train the model on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train the UMP/ECSA/UTTD ablation ladder and report CEGR.
    Ablate(AblateArgs),
    /// Run the verification suites and print pass/fail per invariant.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Base RNG seed; scene i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of scenes (must be >= 1).
    #[arg(long)]
    count: u64,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Optional TOML config (scenario section).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input annotation JSON ({frames: [...]}).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output trajectory JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurateArgs {
    /// Input dataset path.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output dataset path for the long-tail subset.
    #[arg(long)]
    out: PathBuf,
    /// Number of smallest clusters to keep.
    #[arg(long)]
    k: usize,
    /// OPTICS neighborhood size.
    #[arg(long, default_value_t = CURATE_MIN_PTS)]
    min_pts: usize,
    /// OPTICS maximum neighborhood radius.
    #[arg(long, default_value_t = f64::INFINITY)]
    max_eps: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Optional TOML config (train section; defaults otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV path for the loss curve.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint path.
    #[arg(long)]
    ckpt: PathBuf,
    /// Evaluation dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Ego state source for stage-II refinement: gt | stp.
    #[arg(long, default_value = "stp")]
    state_mode: String,
    /// Also refine surrounding agents through the state predictor.
    #[arg(long, default_value_t = false)]
    motion_refine: bool,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-horizon CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Optional TOML config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Held-out dataset path.
    #[arg(long)]
    heldout: PathBuf,
    /// Output JSON path for the ablation table.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Suite to run: equivariance | gradients | geometry | memory | all.
    #[arg(long, default_value = "all")]
    suite: String,
}

fn load_config(path: &Option<PathBuf>) -> Result<CliConfigFile, fump::Error> {
    match path {
        Some(p) => CliConfigFile::load(p),
        None => Ok(CliConfigFile::default()),
    }
}

fn echo_config(command: &str, train: &TrainConfig, scenario: &ScenarioConfig, radii: &MetricRadii) {
    println!(
        "config[{command}]: hash={:#018x} {}",
        config_hash(train),
        serde_json::json!({
            "train": train,
            "scenario": scenario,
            "metrics": radii,
        })
    );
}

fn run() -> Result<bool, fump::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(args) => {
            if args.count == 0 {
                eprintln!("error: count must be >= 1");
                std::process::exit(2);
            }
            let cfg = load_config(&args.config)?;
            echo_config("gen-data", &cfg.train, &cfg.scenario, &cfg.metrics);
            let records = (0..args.count)
                .map(|i| generate_record(args.seed + i, &cfg.scenario))
                .collect::<Result<Vec<_>, _>>()?;
            write_dataset(&records, &args.out)?;
            println!("wrote {} scenes to {}", records.len(), args.out.display());
            Ok(true)
        }
        Command::Convert(args) => {
            println!(
                "config[convert]: in={} out={}",
                args.input.display(),
                args.out.display()
            );
            let output = convert_annotations(&args.input, &args.out)?;
            println!(
                "converted {} tracks to {}",
                output.tracks.len(),
                args.out.display()
            );
            Ok(true)
        }
        Command::Curate(args) => {
            println!(
                "config[curate]: in={} out={} k={} min_pts={} max_eps={}",
                args.input.display(),
                args.out.display(),
                args.k,
                args.min_pts,
                args.max_eps
            );
            let records = read_dataset(&args.input)?;
            let (subset, report) = curate_longtail(&records, args.k, args.min_pts, args.max_eps)?;
            write_dataset(&subset, &args.out)?;
            println!(
                "clusters={} sizes={:?} noise={} threshold={:.4}",
                report.num_clusters, report.cluster_sizes, report.noise_count, report.threshold
            );
            if let Some(w) = &report.warning {
                println!("warning: {w}");
            }
            println!("kept {} of {} scenes", subset.len(), records.len());
            Ok(true)
        }
        Command::Train(args) => {
            let cfg = load_config(&args.config)?;
            echo_config("train", &cfg.train, &cfg.scenario, &cfg.metrics);
            let records = read_dataset(&args.data)?;
            let scenes = scenes_of(&records)?;
            let out = train(&cfg.train, &scenes)?;
            save_checkpoint(&out.checkpoint, &args.out)?;
            if let Some(csv_path) = &args.loss_csv {
                std::fs::write(csv_path, loss_records_csv(&out.losses))
                    .map_err(|e| fump::Error::io(format!("writing {}", csv_path.display()), e))?;
            }
            let last = out.losses.last();
            println!(
                "trained {} epochs on {} scenes; final batch loss {:.6}; checkpoint {}",
                out.checkpoint.config.epochs,
                scenes.len(),
                last.map(|r| r.total).unwrap_or(f64::NAN),
                args.out.display()
            );
            Ok(true)
        }
        Command::Eval(args) => {
            let state_mode: StateMode = args.state_mode.parse()?;
            let checkpoint = load_checkpoint(&args.ckpt)?;
            let radii = MetricRadii::default();
            echo_config(
                "eval",
                &checkpoint.config,
                &ScenarioConfig::default(),
                &radii,
            );
            let records = read_dataset(&args.data)?;
            let scenes = scenes_of(&records)?;
            let report = evaluate(&checkpoint, &scenes, state_mode, args.motion_refine, &radii)?;
            print!("{}", report.text());
            if let Some(path) = &args.out {
                std::fs::write(path, report.json())
                    .map_err(|e| fump::Error::io(format!("writing {}", path.display()), e))?;
            }
            if let Some(path) = &args.csv {
                std::fs::write(path, report.horizon_csv())
                    .map_err(|e| fump::Error::io(format!("writing {}", path.display()), e))?;
            }
            Ok(true)
        }
        Command::Ablate(args) => {
            let cfg = load_config(&args.config)?;
            echo_config("ablate", &cfg.train, &cfg.scenario, &cfg.metrics);
            let train_scenes = scenes_of(&read_dataset(&args.data)?)?;
            let heldout = scenes_of(&read_dataset(&args.heldout)?)?;
            let table = ablate(&cfg.train, &train_scenes, &heldout, &cfg.metrics)?;
            print!("{}", table.text());
            let json = serde_json::to_string_pretty(&table)
                .map_err(|e| fump::Error::invalid(format!("serializing table: {e}")))?;
            std::fs::write(&args.out, json)
                .map_err(|e| fump::Error::io(format!("writing {}", args.out.display()), e))?;
            Ok(true)
        }
        Command::Check(args) => {
            println!("config[check]: suite={}", args.suite);
            let reports = fump::suites::run_suite(&args.suite)?;
            let mut all_ok = true;
            for report in &reports {
                print!("{}", report.text());
                all_ok &= report.passed();
            }
            Ok(all_ok)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
