//! The two training regimes. Both share one stage loop; they differ only in
//! how the gaze network is initialized for the full stage.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use privgaze_core::data::Split;
use privgaze_core::supervision::metric_angle;
use privgaze_core::Vec3;
use privgaze_nn::optim::clip_grad_norm;
use privgaze_nn::{GazeNet, Graph, HeatmapNet, Mode, NnError, ParamStore, Tensor, INPUT_SIZE};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{BestSnapshot, EpochRecord, Stage, TrainState};
use crate::config::{Regime, TrainConfig};
use crate::error::{io_err, Result, TrainError};
use crate::eval::{evaluate, gaze_angle_error, ModelPredictor};
use crate::inputs::{prepare_train, stack, Batch, Dataset};
use crate::pipeline::Pipeline;

pub const METRICS_LOG: &str = "metrics.jsonl";
pub const DIVERGED_CHECKPOINT: &str = "diverged.ckpt";

#[derive(Debug)]
pub struct StageOutcome {
    pub state: TrainState,
    pub checkpoint: PathBuf,
}

/// Stage one of the multi-stage regime: the gaze network alone under the
/// cosine loss. Selection by validation angle error.
pub fn train_gaze_stage(data: &Dataset, cfg: &TrainConfig, out: &Path) -> Result<StageOutcome> {
    let pipe = Pipeline::for_training(cfg)?;
    run_stage(data, TrainState::new(cfg.clone(), Stage::Gaze, pipe.store), out)
}

/// The full pipeline under the weighted heatmap and gaze losses. In the
/// multi-stage regime `init` must be a gaze-stage state whose gaze weights
/// seed the network; the end-to-end regime starts from scratch.
pub fn train_full(data: &Dataset, cfg: &TrainConfig, init: Option<&TrainState>, out: &Path) -> Result<StageOutcome> {
    let mut pipe = Pipeline::for_training(cfg)?;
    match (cfg.regime, init) {
        (Regime::MultiStage, Some(st)) => warm_start(&mut pipe.store, st, cfg)?,
        (Regime::MultiStage, None) => {
            return Err(TrainError::Config("regime multi_stage needs the gaze-stage checkpoint".into()))
        }
        (Regime::EndToEnd, Some(_)) => {
            return Err(TrainError::Config("regime end_to_end trains from scratch and takes no initial checkpoint".into()))
        }
        (Regime::EndToEnd, None) => {}
    }
    run_stage(data, TrainState::new(cfg.clone(), Stage::Full, pipe.store), out)
}

/// Continues an interrupted stage from its checkpoint.
pub fn resume(data: &Dataset, state: TrainState, out: &Path) -> Result<StageOutcome> {
    run_stage(data, state, out)
}

/// Copies the selected gaze-network weights of a gaze-stage state into
/// `store`.
pub fn warm_start(store: &mut ParamStore, init: &TrainState, cfg: &TrainConfig) -> Result<()> {
    if init.stage != Stage::Gaze {
        return Err(TrainError::Checkpoint(format!("warm start expects a gaze-stage checkpoint, got the {} stage", init.stage)));
    }
    if init.config.gaze_net() != cfg.gaze_net() {
        return Err(TrainError::Checkpoint(
            "gaze-stage checkpoint was trained with a different gaze network (model preset or joint set)".into(),
        ));
    }
    store.load_from(&init.selected_gaze_params())?;
    Ok(())
}

fn mix(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x2545_f491_4f6c_dd1d;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 29;
    }
    h
}

fn stage_tag(stage: Stage) -> u64 {
    match stage {
        Stage::Gaze => 1,
        Stage::Full => 2,
    }
}

struct Nets {
    gaze: GazeNet,
    heat: HeatmapNet,
}

struct StepResult {
    loss: f64,
    grads: BTreeMap<String, Tensor>,
    preds: Vec<f64>,
    buffers: Vec<privgaze_nn::graph::BufferUpdate>,
}

/// Forward and backward pass for one batch; parameters are not touched.
fn forward_backward(nets: &Nets, store: &ParamStore, cfg: &TrainConfig, stage: Stage, b: Batch, seed: u64) -> Result<StepResult> {
    let mut g = Graph::new(Mode::Train, seed);
    let pose = g.input(b.pose);
    let depth = g.input(b.depth);
    let out = nets.gaze.forward(&mut g, store, pose, depth)?;
    let cos = g.cosine_loss(out.gaze, &b.gt_gaze)?;
    let loss = match stage {
        Stage::Gaze => cos,
        Stage::Full => {
            let fov = g.fov(out.gaze, b.dirs, INPUT_SIZE, INPUT_SIZE, cfg.geometry.fov_alpha)?;
            let sm = g.input(b.scene_mask);
            let heat = nets.heat.forward_parts(&mut g, store, &[sm, fov])?;
            let mse = g.mse(heat, &b.gt_heatmap)?;
            let wh = g.scale(mse, cfg.loss_weights.w_heat);
            let wg = g.scale(cos, cfg.loss_weights.w_gaze);
            g.add(wh, wg)?
        }
    };
    let value = g.value(loss).item();
    let preds = g.value(out.gaze).data().to_vec();
    let grads = if value.is_finite() { g.backward(loss)?.into_params() } else { BTreeMap::new() };
    let buffers = g.take_buffer_updates();
    Ok(StepResult {
        loss: value,
        grads,
        preds,
        buffers,
    })
}

/// Gradients of the stage loss for one batch, without updating anything.
/// Exposed for gradient audits.
pub fn loss_gradients(store: &ParamStore, cfg: &TrainConfig, stage: Stage, batch: Batch, seed: u64) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let nets = Nets {
        gaze: GazeNet::new(cfg.gaze_net())?,
        heat: HeatmapNet::new(cfg.heatmap_net())?,
    };
    let r = forward_backward(&nets, store, cfg, stage, batch, seed)?;
    Ok((r.loss, r.grads))
}

fn append_log(out: &Path, rec: &EpochRecord) -> Result<()> {
    let path = out.join(METRICS_LOG);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
    writeln!(f, "{}", serde_json::to_string(rec).expect("record serializes")).map_err(io_err(&path))
}

fn diverged(state: &TrainState, out: &Path, epoch: usize, reason: String) -> TrainError {
    let snapshot = out.join(DIVERGED_CHECKPOINT);
    let note = format!("diverged at epoch {}: {reason}", epoch + 1);
    if let Err(e) = state.save_with_note(&snapshot, &note) {
        warn!("could not write the divergence snapshot: {e}");
    }
    TrainError::Diverged {
        stage: state.stage.to_string(),
        epoch: epoch + 1,
        step: state.adam.steps_taken(),
        reason,
        snapshot,
    }
}

/// `(val_angle, report, failures, selection metric)`.
type Validation = (Option<f64>, Option<privgaze_core::supervision::MetricReport>, usize, Option<f64>);

fn validate(data: &Dataset, idx: &[usize], state: &TrainState) -> Result<Validation> {
    match state.stage {
        Stage::Gaze => {
            let a = gaze_angle_error(data, idx, &state.config, &state.store)?;
            Ok((Some(a), None, 0, Some(a)))
        }
        Stage::Full => {
            let mut p = ModelPredictor::new(&state.config, &state.store)?;
            let r = evaluate(data, idx, &mut p);
            Ok((r.mean_raw_angle, r.mean, r.failures, r.mean.map(|m| m.dist_3d)))
        }
    }
}

fn run_stage(data: &Dataset, mut state: TrainState, out: &Path) -> Result<StageOutcome> {
    let cfg = state.config.clone();
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let stage = state.stage;
    let sc = match stage {
        Stage::Gaze => cfg.gaze_stage,
        Stage::Full => cfg.full_stage,
    };
    let nets = Nets {
        gaze: GazeNet::new(cfg.gaze_net())?,
        heat: HeatmapNet::new(cfg.heatmap_net())?,
    };
    let train_idx = data.split(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::Data("the dataset has no training records".into()));
    }
    let mut val_idx = data.split(Split::Val);
    if val_idx.is_empty() {
        warn!("no validation records; model selection uses the training split");
        val_idx = train_idx.clone();
    }
    let augment_on = cfg.augment.enabled && (stage == Stage::Full || cfg.augment.in_gaze_stage);
    let ckpt = out.join(stage.checkpoint_name());

    if state.epoch == 0 && state.history.iter().all(|r| r.stage != stage) {
        let (val_angle, val, val_failures, _) = validate(data, &val_idx, &state)?;
        let rec = EpochRecord {
            stage,
            epoch: 0,
            steps: 0,
            train_loss: None,
            train_angle: None,
            val_angle,
            val,
            val_failures,
            best: false,
        };
        append_log(out, &rec)?;
        state.history.push(rec);
    }

    for epoch in state.epoch..sc.epochs {
        state.adam.config.lr = sc.lr_at(epoch);
        let mut order = train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, stage_tag(stage), epoch as u64])));
        let (mut loss_sum, mut angle_sum, mut batches, mut seen) = (0.0, 0.0, 0usize, 0usize);
        for (bi, chunk) in order.chunks(sc.batch_size).enumerate() {
            let mut inputs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                inputs.push(prepare_train(&data.get(i)?, &cfg, augment_on, epoch, i)?);
            }
            let gt: Vec<[f64; 3]> = inputs.iter().map(|p| p.gt_gaze).collect();
            let batch = stack(&inputs)?;
            drop(inputs);
            let seed = mix(&[cfg.seed, stage_tag(stage), epoch as u64, bi as u64, 7]);
            let mut r = match forward_backward(&nets, &state.store, &cfg, stage, batch, seed) {
                Err(TrainError::Nn(NnError::NonFinite("gradient"))) => {
                    return Err(diverged(&state, out, epoch, "non-finite gradient".into()));
                }
                r => r?,
            };
            if !r.loss.is_finite() {
                return Err(diverged(&state, out, epoch, format!("loss is {}", r.loss)));
            }
            if let Some((name, _)) = r.grads.iter().find(|(_, g)| !g.is_finite()) {
                return Err(diverged(&state, out, epoch, format!("non-finite gradient for {name}")));
            }
            if cfg.grad_clip > 0.0 {
                clip_grad_norm(&mut r.grads, cfg.grad_clip);
            }
            state.adam.step(&mut state.store, &r.grads)?;
            state.store.apply_buffer_updates(r.buffers)?;
            loss_sum += r.loss;
            batches += 1;
            for (k, g) in gt.iter().enumerate() {
                angle_sum += metric_angle(&Vec3::from(*g), &Vec3::from_column_slice(&r.preds[k * 3..k * 3 + 3]))?;
                seen += 1;
            }
        }
        let (val_angle, val, val_failures, metric) = validate(data, &val_idx, &state)?;
        let improved = match (metric, &state.best) {
            (Some(m), Some(b)) => m < b.metric,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            state.best = Some(BestSnapshot {
                epoch: epoch + 1,
                metric: metric.unwrap(),
                params: state.store.clone(),
            });
        }
        let rec = EpochRecord {
            stage,
            epoch: epoch + 1,
            steps: state.adam.steps_taken(),
            train_loss: Some(loss_sum / batches as f64),
            train_angle: Some(angle_sum / seen as f64),
            val_angle,
            val,
            val_failures,
            best: improved,
        };
        info!(
            "{stage} epoch {}/{}: loss {:.5} train angle {:.2} val angle {} val {}",
            epoch + 1,
            sc.epochs,
            loss_sum / batches as f64,
            angle_sum / seen as f64,
            val_angle.map(|a| format!("{a:.2}")).unwrap_or("-".into()),
            val.map(|v| v.to_string()).unwrap_or("-".into()),
        );
        append_log(out, &rec)?;
        state.history.push(rec);
        state.epoch = epoch + 1;
        state.save(&ckpt)?;
    }
    if !ckpt.exists() {
        state.save(&ckpt)?;
    }
    Ok(StageOutcome { state, checkpoint: ckpt })
}
