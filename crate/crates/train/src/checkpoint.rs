//! Resumable training state and its archive encoding.

use std::collections::BTreeMap;
use std::path::Path;

use privgaze_core::supervision::MetricReport;
use privgaze_nn::{Adam, AdamConfig, GazeNet, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::config::TrainConfig;
use crate::error::{io_err, Result, TrainError};
use crate::pipeline::Pipeline;

pub const STATE_KIND: &str = "privgaze-train-state";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Standalone gaze-direction training with the cosine loss.
    Gaze,
    /// The whole pipeline under the weighted heatmap and gaze losses.
    Full,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Gaze => "gaze",
            Stage::Full => "full",
        }
    }

    pub fn checkpoint_name(self) -> String {
        format!("{}.ckpt", self.as_str())
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub stage: Stage,
    /// 1-based epoch within the stage; 0 is the check before any update.
    pub epoch: usize,
    /// Optimizer steps taken so far in the stage.
    pub steps: u64,
    /// Mean training loss over the epoch's batches.
    pub train_loss: Option<f64>,
    /// Mean angle error (degrees) of the training-mode predictions.
    pub train_angle: Option<f64>,
    /// Mean validation angle error of the direct network output.
    pub val_angle: Option<f64>,
    /// Full validation metrics (full stage only).
    pub val: Option<MetricReport>,
    pub val_failures: usize,
    /// This epoch became the selected snapshot.
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    /// Selection metric: validation angle (gaze stage) or 3D distance (full).
    pub metric: f64,
    pub params: ParamStore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub stage: Stage,
    /// Completed epochs of `stage`.
    pub epoch: usize,
    pub store: ParamStore,
    pub adam: Adam,
    pub best: Option<BestSnapshot>,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    kind: String,
    config: TrainConfig,
    stage: Stage,
    epoch: usize,
    adam_config: AdamConfig,
    adam_step: u64,
    best: Option<BestMeta>,
    history: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BestMeta {
    epoch: usize,
    metric: f64,
}

fn push_store(a: &mut Archive, prefix: &str, store: &ParamStore) {
    for (name, t) in store.params() {
        a.push(&format!("{prefix}param"), name, t.clone());
    }
    for (name, t) in store.buffers() {
        a.push(&format!("{prefix}buffer"), name, t.clone());
    }
}

fn take_store(a: &Archive, prefix: &str) -> ParamStore {
    let mut s = ParamStore::new();
    for e in a.group(&format!("{prefix}param")) {
        s.insert(e.name.clone(), e.tensor.clone());
    }
    for e in a.group(&format!("{prefix}buffer")) {
        s.insert_buffer(e.name.clone(), e.tensor.clone());
    }
    s
}

fn take_map(a: &Archive, group: &str) -> BTreeMap<String, Tensor> {
    a.group(group).map(|e| (e.name.clone(), e.tensor.clone())).collect()
}

/// Errors unless `store` holds exactly the tensors `reference` declares, with
/// the same shapes.
pub fn check_layout(store: &ParamStore, reference: &ParamStore, what: &str) -> Result<()> {
    let layout = |s: &ParamStore| {
        let p: Vec<(String, Vec<usize>)> = s.params().map(|(k, t)| (k.to_string(), t.shape().to_vec())).collect();
        let b: Vec<(String, Vec<usize>)> = s.buffers().map(|(k, t)| (k.to_string(), t.shape().to_vec())).collect();
        (p, b)
    };
    let (got, want) = (layout(store), layout(reference));
    if got == want {
        return Ok(());
    }
    let first_diff = |g: &[(String, Vec<usize>)], w: &[(String, Vec<usize>)]| {
        let gm: BTreeMap<_, _> = g.iter().cloned().collect();
        let wm: BTreeMap<_, _> = w.iter().cloned().collect();
        for (k, shape) in &wm {
            match gm.get(k) {
                None => return format!("missing {k}"),
                Some(s) if s != shape => return format!("{k} has shape {s:?}, expected {shape:?}"),
                _ => {}
            }
        }
        gm.keys().find(|k| !wm.contains_key(*k)).map(|k| format!("unexpected {k}")).unwrap_or_default()
    };
    let detail = if got.0 != want.0 { first_diff(&got.0, &want.0) } else { first_diff(&got.1, &want.1) };
    Err(TrainError::Checkpoint(format!("{what} does not match the configured model: {detail}")))
}

impl TrainState {
    /// Fresh state for `stage` around already-initialized parameters.
    pub fn new(config: TrainConfig, stage: Stage, store: ParamStore) -> Self {
        let s = match stage {
            Stage::Gaze => config.gaze_stage,
            Stage::Full => config.full_stage,
        };
        Self {
            adam: Adam::new(AdamConfig::new(s.lr, s.weight_decay)),
            config,
            stage,
            epoch: 0,
            store,
            best: None,
            history: Vec::new(),
        }
    }

    /// Parameters to evaluate: the best snapshot when one exists.
    pub fn selected_params(&self) -> &ParamStore {
        self.best.as_ref().map(|b| &b.params).unwrap_or(&self.store)
    }

    /// Gaze-network tensors of the selected parameters.
    pub fn selected_gaze_params(&self) -> ParamStore {
        self.selected_params().split_prefix(&format!("{}.", GazeNet::PREFIX))
    }

    pub fn to_archive(&self, note: Option<&str>) -> Archive {
        let (m, v) = self.adam.moments();
        let meta = Meta {
            kind: STATE_KIND.into(),
            config: self.config.clone(),
            stage: self.stage,
            epoch: self.epoch,
            adam_config: self.adam.config,
            adam_step: self.adam.steps_taken(),
            best: self.best.as_ref().map(|b| BestMeta {
                epoch: b.epoch,
                metric: b.metric,
            }),
            history: self.history.clone(),
            note: note.map(str::to_string),
        };
        let mut a = Archive::new(serde_json::to_value(&meta).expect("meta serializes"));
        push_store(&mut a, "", &self.store);
        for (k, t) in m {
            a.push("adam.m", k, t.clone());
        }
        for (k, t) in v {
            a.push("adam.v", k, t.clone());
        }
        if let Some(b) = &self.best {
            push_store(&mut a, "best.", &b.params);
        }
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let meta: Meta = serde_json::from_value(a.meta.clone()).map_err(|e| TrainError::Checkpoint(format!("metadata: {e}")))?;
        if meta.kind != STATE_KIND {
            return Err(TrainError::Checkpoint(format!("archive holds `{}`, not a training state", meta.kind)));
        }
        meta.config.validate()?;
        let reference = Pipeline::new(&meta.config)?.store;
        let store = take_store(a, "");
        check_layout(&store, &reference, "checkpoint parameters")?;
        let best = match meta.best {
            Some(b) => {
                let params = take_store(a, "best.");
                check_layout(&params, &reference, "best snapshot")?;
                Some(BestSnapshot {
                    epoch: b.epoch,
                    metric: b.metric,
                    params,
                })
            }
            None => None,
        };
        let (m, v) = (take_map(a, "adam.m"), take_map(a, "adam.v"));
        for (k, t) in m.iter().chain(&v) {
            let p = store
                .get(k)
                .map_err(|_| TrainError::Checkpoint(format!("optimizer moment for unknown parameter {k}")))?;
            if p.shape() != t.shape() {
                return Err(TrainError::Checkpoint(format!("optimizer moment {k} has the wrong shape")));
            }
        }
        Ok(Self {
            config: meta.config,
            stage: meta.stage,
            epoch: meta.epoch,
            store,
            adam: Adam::restore(meta.adam_config, meta.adam_step, m, v),
            best,
            history: meta.history,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_archive(None).encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_archive(&Archive::decode(bytes)?)
    }

    /// Writes through a temporary file and a rename so an interrupted save
    /// never leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn save_with_note(&self, path: &Path, note: &str) -> Result<()> {
        write_atomic(path, &self.to_archive(Some(note)).encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelPreset;

    fn tiny() -> TrainConfig {
        TrainConfig {
            model: ModelPreset::Tiny,
            ..TrainConfig::default()
        }
    }

    fn populated() -> TrainState {
        let cfg = tiny();
        let p = Pipeline::new(&cfg).unwrap();
        let mut st = TrainState::new(cfg, Stage::Full, p.store.clone());
        let mut grads = BTreeMap::new();
        for (k, t) in p.store.params().take(5) {
            grads.insert(k.to_string(), Tensor::full(t.shape().to_vec(), 0.3));
        }
        st.adam.step(&mut st.store, &grads).unwrap();
        st.epoch = 2;
        st.best = Some(BestSnapshot {
            epoch: 1,
            metric: 0.1 + 0.2,
            params: p.store,
        });
        st.history.push(EpochRecord {
            stage: Stage::Full,
            epoch: 1,
            steps: 1,
            train_loss: Some(1.0 / 3.0),
            train_angle: Some(12.5),
            val_angle: Some(std::f64::consts::E),
            val: Some(MetricReport {
                dist_3d: 0.7,
                angle_error: 10.0 / 7.0,
                auc: 0.51,
                dist_2d: 1e-17,
            }),
            val_failures: 0,
            best: true,
        });
        st
    }

    #[test]
    fn state_round_trips_bit_exactly() {
        let st = populated();
        let bytes = st.to_bytes();
        let back = TrainState::from_bytes(&bytes).unwrap();
        assert_eq!(back, st);
        assert_eq!(back.to_bytes(), bytes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        st.save(&path).unwrap();
        assert_eq!(TrainState::load(&path).unwrap(), st);
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn mismatched_configs_are_rejected() {
        let st = populated();
        let mut a = st.to_archive(None);
        let mut meta = a.meta.clone();
        meta["config"]["ablation"]["use_full_body"] = serde_json::Value::Bool(true);
        a.meta = meta;
        let err = TrainState::from_archive(&a).unwrap_err().to_string();
        assert!(err.contains("gaze.pose"), "{err}");

        let mut a = st.to_archive(None);
        a.entries.retain(|e| !(e.group == "buffer" && e.name.ends_with("running_var")));
        assert!(TrainState::from_archive(&a).unwrap_err().to_string().contains("missing"));

        let mut a = st.to_archive(None);
        a.meta["kind"] = "something-else".into();
        assert!(TrainState::from_archive(&a).is_err());
    }
}
