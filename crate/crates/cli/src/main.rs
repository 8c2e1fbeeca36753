//! `privgaze`: synthetic data generation, training, evaluation and figures.
//!
//! Primary results go to stdout as `key=value` lines; logs go to stderr.

mod viz;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use privgaze_core::data::{load_manifest, synth_generate, Split, SynthConfig};
use privgaze_train::eval::evaluate_with;
use privgaze_train::run::{evaluation_split, run_training, write_report};
use privgaze_train::{
    resume, Baseline, BaselinePredictor, Dataset, ModelPredictor, OraclePredictor, Predictor, Regime, TrainConfig, TrainError,
    TrainState,
};

#[derive(Parser)]
#[command(name = "privgaze", version, about = "3D gaze target detection from upper-body pose and depth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Train with the multi-stage or end-to-end regime.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline.
    Eval(EvalArgs),
    /// Convert a third-party dataset release into a manifest.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of samples; overrides the config file.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// TOML file with scene generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    MultiStage,
    EndToEnd,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML training configuration; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override with a dotted key, e.g. `full_stage.epochs=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Continue an interrupted stage from its checkpoint.
    #[arg(long, conflicts_with_all = ["config", "overrides", "seed", "regime"])]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Random,
    Center,
    /// Ground-truth gaze through the geometric stages.
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
    /// Test, falling back to validation and then training records.
    Auto,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    #[arg(long, value_enum, default_value = "auto")]
    split: SplitArg,
    /// Directory for report.txt, records.jsonl and figures.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one three-panel figure per evaluated sample (needs --out).
    #[arg(long, requires = "out")]
    viz: bool,
    /// Seed of the Random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceFormat {
    Gfie,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    format: SourceFormat,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn cmd_synth(a: SynthArgs) -> CliResult {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = a.count {
        cfg.count = n;
    }
    let m = synth_generate(&cfg, a.seed, &a.out)?;
    println!("records={}", m.len());
    println!("manifest={}", a.out.join("manifest.jsonl").display());
    Ok(())
}

fn open_dataset(manifest: &Path, blur: bool) -> Result<Dataset, TrainError> {
    let m = load_manifest(manifest)?;
    info!("{}: {} records", manifest.display(), m.len());
    Ok(Dataset::from_manifest(m, blur))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    if let Some(ckpt) = &a.resume {
        let state = TrainState::load(ckpt)?;
        let data = open_dataset(&a.manifest, state.config.ablation.blur_faces)?;
        let out = resume(&data, state, &a.out)?;
        println!("checkpoint={}", out.checkpoint.display());
        return Ok(());
    }
    let text = match &a.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = a.overrides.clone();
    if let Some(s) = a.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(r) = a.regime {
        let v = match r {
            RegimeArg::MultiStage => "multi_stage",
            RegimeArg::EndToEnd => "end_to_end",
        };
        overrides.push(format!("regime=\"{v}\""));
    }
    let cfg = TrainConfig::from_toml_with_overrides(&text, &overrides)?;
    let data = open_dataset(&a.manifest, cfg.ablation.blur_faces)?;
    let summary = run_training(&data, &cfg, &a.out)?;
    if cfg.regime == Regime::MultiStage {
        if let Some(g) = &summary.gaze_checkpoint {
            println!("gaze_checkpoint={}", g.display());
        }
    }
    println!("checkpoint={}", summary.full_checkpoint.display());
    print!("{}", summary.report.summary());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let state = match &a.checkpoint {
        Some(p) => Some(TrainState::load(p)?),
        None => None,
    };
    let blur = state.as_ref().map(|s| s.config.ablation.blur_faces).unwrap_or(true);
    let data = open_dataset(&a.manifest, blur)?;
    let indices = match a.split {
        SplitArg::Train => data.split(Split::Train),
        SplitArg::Val => data.split(Split::Val),
        SplitArg::Test => data.split(Split::Test),
        SplitArg::All => (0..data.len()).collect(),
        SplitArg::Auto => evaluation_split(&data).1,
    };
    let defaults = TrainConfig::default();
    let mut predictor: Box<dyn Predictor + '_> = match (&state, a.baseline) {
        (Some(s), _) => Box::new(ModelPredictor::new(&s.config, s.selected_params())?),
        (None, Some(BaselineArg::Random)) => Box::new(BaselinePredictor {
            kind: Baseline::Random,
            seed: a.seed,
        }),
        (None, Some(BaselineArg::Center)) => Box::new(BaselinePredictor {
            kind: Baseline::Center,
            seed: a.seed,
        }),
        (None, Some(BaselineArg::Oracle)) => Box::new(OraclePredictor {
            alpha: defaults.geometry.fov_alpha,
            window_radius: defaults.geometry.window_radius,
        }),
        (None, None) => unreachable!("clap requires --checkpoint or --baseline"),
    };
    let fig_dir = match (&a.out, a.viz) {
        (Some(o), true) => {
            let d = o.join("figures");
            std::fs::create_dir_all(&d).map_err(|e| format!("{}: {e}", d.display()))?;
            Some(d)
        }
        _ => None,
    };
    let mut fig_error = None;
    let mut figures = 0usize;
    let report = evaluate_with(&data, &indices, predictor.as_mut(), |_, s, p| {
        if let Some(d) = &fig_dir {
            match viz::render_figure(s, p).and_then(|img| viz::save(&img, &d.join(format!("{}.png", s.id)))) {
                Ok(()) => figures += 1,
                Err(e) => fig_error = Some(e),
            }
        }
    });
    if let Some(e) = fig_error {
        return Err(e.into());
    }
    if let Some(o) = &a.out {
        std::fs::create_dir_all(o).map_err(|e| format!("{}: {e}", o.display()))?;
        write_report(o, &report)?;
    }
    print!("{}", report.summary());
    if fig_dir.is_some() {
        println!("figures={figures}");
    }
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> CliResult {
    match a.format {
        SourceFormat::Gfie => Err(format!(
            "conversion of the GFIE release in {} is not available: its on-disk layout is not documented, so no \
             converter has been written against it; write records in the privgaze manifest format instead \
             (nothing was written to {})",
            a.input.display(),
            a.out.display()
        )
        .into()),
    }
}
