//! Versioned TOML experiment configuration with dotted-key overrides.

use std::path::Path;

use privgaze_core::data::AugmentConfig;
use privgaze_core::supervision::LossWeights;
use privgaze_nn::{GazeNetConfig, HeatmapNetConfig};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{io_err, Result, TrainError};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MultiStage,
    EndToEnd,
}

impl std::str::FromStr for Regime {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "multi_stage" => Ok(Regime::MultiStage),
            "end_to_end" => Ok(Regime::EndToEnd),
            _ => Err(TrainError::Config(format!("regime: expected multi_stage or end_to_end, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPreset {
    /// ResNet-50 encoders and the published widths.
    Paper,
    /// Narrow networks for tests and desk-scale runs.
    Tiny,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at the first epoch towards zero after the last.
    Cosine,
}

impl StageConfig {
    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let t = epoch as f64 / self.epochs.max(1) as f64;
                self.lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    /// Feed all 17 joints instead of the 13 from the hips upward.
    pub use_full_body: bool,
    /// Blur the head box before any network sees the scene.
    pub blur_faces: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_full_body: false,
            blur_faces: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSettings {
    pub enabled: bool,
    /// Also augment during the standalone gaze stage.
    pub in_gaze_stage: bool,
    pub params: AugmentConfig,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            in_gaze_stage: true,
            params: AugmentConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySettings {
    pub fov_alpha: f64,
    /// Retrieval window radius in pixels of a 224-pixel-wide image.
    pub window_radius: usize,
    pub heatmap_sigma: f64,
}

impl Default for GeometrySettings {
    fn default() -> Self {
        Self {
            fov_alpha: 3.0,
            window_radius: 15,
            heatmap_sigma: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub regime: Regime,
    pub seed: u64,
    pub model: ModelPreset,
    pub gaze_stage: StageConfig,
    pub full_stage: StageConfig,
    pub loss_weights: LossWeights,
    pub ablation: Ablation,
    pub augment: AugmentSettings,
    pub geometry: GeometrySettings,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Tensor archive with ImageNet-style ResNet-50 weights for the encoders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<String>,
    /// Apply `pretrained` to the depth encoder too (channel mean of the stem).
    pub pretrained_depth: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            regime: Regime::MultiStage,
            seed: 0,
            model: ModelPreset::Paper,
            gaze_stage: StageConfig {
                epochs: 30,
                batch_size: 128,
                lr: 1e-4,
                weight_decay: 1e-4,
                schedule: LrSchedule::Constant,
            },
            full_stage: StageConfig {
                epochs: 50,
                batch_size: 32,
                lr: 1e-4,
                weight_decay: 1e-4,
                schedule: LrSchedule::Constant,
            },
            loss_weights: LossWeights::default(),
            ablation: Ablation::default(),
            augment: AugmentSettings::default(),
            geometry: GeometrySettings::default(),
            grad_clip: 0.0,
            pretrained: None,
            pretrained_depth: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("version: expected {CONFIG_VERSION}, got {}", self.version));
        }
        for (name, s) in [("gaze_stage", &self.gaze_stage), ("full_stage", &self.full_stage)] {
            if s.epochs == 0 {
                return bad(format!("{name}.epochs must be positive"));
            }
            if s.batch_size == 0 {
                return bad(format!("{name}.batch_size must be positive"));
            }
            if !(s.lr >= 0.0 && s.lr.is_finite()) {
                return bad(format!("{name}.lr must be finite and non-negative, got {}", s.lr));
            }
            if !(s.weight_decay >= 0.0 && s.weight_decay.is_finite()) {
                return bad(format!("{name}.weight_decay must be finite and non-negative"));
            }
        }
        self.loss_weights.validate().map_err(|e| TrainError::Config(format!("loss_weights: {e}")))?;
        if !(self.geometry.fov_alpha > 0.0) {
            return bad("geometry.fov_alpha must be positive".into());
        }
        if !(self.geometry.heatmap_sigma > 0.0) {
            return bad("geometry.heatmap_sigma must be positive".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative".into());
        }
        let a = &self.augment.params;
        for (name, p) in [("augment.flip_prob", a.flip_prob), ("augment.crop_prob", a.crop_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(a.crop_min_scale > 0.0 && a.crop_min_scale <= 1.0) {
            return bad("augment.crop_min_scale must lie in (0, 1]".into());
        }
        for (name, v) in [("brightness", a.brightness), ("contrast", a.contrast), ("saturation", a.saturation)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("augment.{name} must lie in [0, 1)"));
            }
        }
        self.gaze_net()
            .validate()
            .map_err(|e| TrainError::Config(format!("model: {e}")))?;
        Ok(())
    }

    pub fn pose_joints(&self) -> usize {
        if self.ablation.use_full_body {
            17
        } else {
            13
        }
    }

    pub fn gaze_net(&self) -> GazeNetConfig {
        let mut c = match self.model {
            ModelPreset::Paper => GazeNetConfig::default(),
            ModelPreset::Tiny => GazeNetConfig::tiny(),
        };
        c.pose_joints = self.pose_joints();
        c
    }

    pub fn heatmap_net(&self) -> HeatmapNetConfig {
        match self.model {
            ModelPreset::Paper => HeatmapNetConfig::default(),
            ModelPreset::Tiny => HeatmapNetConfig::tiny(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parses TOML, applies `key=value` overrides (dotted keys, TOML values;
    /// bare words are taken as strings) and validates the result. Keys
    /// missing from the file fall back to the defaults.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut base = Value::try_from(TrainConfig::default()).expect("defaults serialize");
        let user: toml::Table = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        merge(&mut base, Value::Table(user), "")?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut base, key.trim(), parse_value(raw.trim()))?;
        }
        let cfg: TrainConfig = base.try_into().map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_with_overrides(&text, overrides)
    }
}

fn parse_value(raw: &str) -> Value {
    // parse as the right-hand side of a TOML assignment
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, user: Value, path: &str) -> Result<()> {
    match (base, user) {
        (Value::Table(b), Value::Table(u)) => {
            for (k, v) in u {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None if key == "pretrained" => {
                        b.insert(k, v);
                    }
                    None => return Err(TrainError::Config(format!("unknown key `{key}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| TrainError::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if !table.contains_key(*part) && key != "pretrained" {
                return Err(TrainError::Config(format!("unknown key `{key}`")));
            }
            if let Some(Value::Table(_)) = table.get(*part) {
                return Err(TrainError::Config(format!("`{key}` is a table; set one of its fields")));
            }
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .get_mut(*part)
            .ok_or_else(|| TrainError::Config(format!("unknown key `{key}`")))?;
    }
    Err(TrainError::Config("empty override key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_schedule() {
        let c = TrainConfig::default();
        assert_eq!((c.gaze_stage.epochs, c.gaze_stage.batch_size), (30, 128));
        assert_eq!((c.full_stage.epochs, c.full_stage.batch_size), (50, 32));
        assert_eq!((c.gaze_stage.lr, c.gaze_stage.weight_decay), (1e-4, 1e-4));
        assert_eq!((c.loss_weights.w_heat, c.loss_weights.w_gaze), (10000.0, 10.0));
        assert_eq!((c.ablation.use_full_body, c.ablation.blur_faces), (false, true));
        assert_eq!(c.geometry.fov_alpha, 3.0);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trips() {
        let c = TrainConfig {
            pretrained: Some("weights.pgt".into()),
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml_with_overrides(&c.to_toml(), &[]).unwrap(), c);
        assert_eq!(TrainConfig::from_toml_with_overrides("", &[]).unwrap(), TrainConfig::default());
    }

    #[test]
    fn overrides_are_typed_and_checked() {
        let sets = [
            "full_stage.epochs=1".to_string(),
            "regime=end_to_end".into(),
            "model=tiny".into(),
            "ablation.use_full_body=true".into(),
            "augment.params.flip_prob=0.25".into(),
        ];
        let c = TrainConfig::from_toml_with_overrides("seed = 9", &sets).unwrap();
        assert_eq!(c.full_stage.epochs, 1);
        assert_eq!(c.regime, Regime::EndToEnd);
        assert_eq!(c.model, ModelPreset::Tiny);
        assert_eq!(c.seed, 9);
        assert_eq!(c.gaze_net().pose_joints, 17);
        assert_eq!(c.augment.params.flip_prob, 0.25);

        let err = |s: &str| TrainConfig::from_toml_with_overrides("", &[s.to_string()]).unwrap_err().to_string();
        assert!(err("full_stage.epoch=1").contains("full_stage.epoch"));
        assert!(err("full_stage.epochs=abc").contains("epochs"));
        assert!(err("full_stage.epochs=0").contains("full_stage.epochs"));
        assert!(err("gaze_stage=1").contains("table"));
        assert!(err("regime=sideways").contains("regime") || err("regime=sideways").contains("variant"));
        assert!(TrainConfig::from_toml_with_overrides("bogus = 1", &[]).unwrap_err().to_string().contains("bogus"));
        assert!(TrainConfig::from_toml_with_overrides("version = 2", &[]).is_err());
    }
}
