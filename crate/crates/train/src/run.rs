//! Run directories: config snapshot, stage checkpoints, the metric log and
//! the final report.
//!
//! ```text
//! <out>/config.toml     resolved configuration
//! <out>/gaze.ckpt       gaze-stage state (multi-stage regime only)
//! <out>/full.ckpt       full-pipeline state
//! <out>/metrics.jsonl   one EpochRecord per line, both stages
//! <out>/report.txt      final MetricReport line and sample counts
//! <out>/records.jsonl   per-sample metrics of the final evaluation
//! ```

use std::path::{Path, PathBuf};

use log::{info, warn};
use privgaze_core::data::Split;

use crate::checkpoint::TrainState;
use crate::config::{Regime, TrainConfig};
use crate::error::{io_err, Result};
use crate::eval::{evaluate, EvalReport, ModelPredictor};
use crate::inputs::Dataset;
use crate::trainer::{train_full, train_gaze_stage};

pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug)]
pub struct RunSummary {
    pub gaze_checkpoint: Option<PathBuf>,
    pub full_checkpoint: PathBuf,
    pub report: EvalReport,
}

/// Records the final evaluation uses: test, else validation, else training.
pub fn evaluation_split(data: &Dataset) -> (Split, Vec<usize>) {
    for split in [Split::Test, Split::Val, Split::Train] {
        let idx = data.split(split);
        if !idx.is_empty() {
            return (split, idx);
        }
    }
    (Split::Test, Vec::new())
}

pub fn write_report(out: &Path, report: &EvalReport) -> Result<()> {
    let p = out.join(REPORT_FILE);
    std::fs::write(&p, report.summary()).map_err(io_err(&p))?;
    let p = out.join(RECORDS_FILE);
    std::fs::write(&p, report.records_jsonl()).map_err(io_err(&p))
}

/// Trains per `cfg.regime`, then evaluates the selected parameters.
pub fn run_training(data: &Dataset, cfg: &TrainConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let cp = out.join(CONFIG_FILE);
    std::fs::write(&cp, cfg.to_toml()).map_err(io_err(&cp))?;
    if cfg.ablation.blur_faces != data.blurs() {
        warn!("dataset blur setting differs from ablation.blur_faces");
    }
    let (gaze_checkpoint, full) = match cfg.regime {
        Regime::MultiStage => {
            info!("multi-stage regime: gaze stage for {} epochs", cfg.gaze_stage.epochs);
            let g = train_gaze_stage(data, cfg, out)?;
            info!("full stage for {} epochs, warm-started from {}", cfg.full_stage.epochs, g.checkpoint.display());
            let f = train_full(data, cfg, Some(&g.state), out)?;
            (Some(g.checkpoint), f)
        }
        Regime::EndToEnd => {
            info!("end-to-end regime: full stage for {} epochs", cfg.full_stage.epochs);
            (None, train_full(data, cfg, None, out)?)
        }
    };
    let report = evaluate_state(data, &full.state)?;
    write_report(out, &report)?;
    Ok(RunSummary {
        gaze_checkpoint,
        full_checkpoint: full.checkpoint,
        report,
    })
}

/// Evaluates the selected parameters of `state` on the evaluation split.
pub fn evaluate_state(data: &Dataset, state: &TrainState) -> Result<EvalReport> {
    let (split, idx) = evaluation_split(data);
    info!("evaluating on {} {split} records", idx.len());
    let mut p = ModelPredictor::new(&state.config, state.selected_params())?;
    Ok(evaluate(data, &idx, &mut p))
}
