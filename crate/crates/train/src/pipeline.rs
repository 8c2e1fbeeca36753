//! The two networks with their shared parameter store, plus the loader for
//! ImageNet-style pretrained encoder weights.

use std::path::Path;

use log::{info, warn};
use privgaze_nn::{GazeNet, HeatmapNet, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::archive::Archive;
use crate::config::TrainConfig;
use crate::error::{io_err, Result, TrainError};

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub gaze: GazeNet,
    pub heat: HeatmapNet,
    pub store: ParamStore,
}

impl Pipeline {
    /// Freshly initialized networks; initialization is seeded by `cfg.seed`.
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let gaze = GazeNet::new(cfg.gaze_net())?;
        let heat = HeatmapNet::new(cfg.heatmap_net())?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a17_0000);
        store.initialize(&gaze, &mut rng);
        store.initialize(&heat, &mut rng);
        Ok(Self { gaze, heat, store })
    }

    /// Initialized pipeline with `cfg.pretrained` applied when set.
    pub fn for_training(cfg: &TrainConfig) -> Result<Self> {
        let mut p = Self::new(cfg)?;
        if let Some(path) = &cfg.pretrained {
            let n = p.load_pretrained(Path::new(path), cfg.pretrained_depth)?;
            info!("loaded {n} pretrained tensors from {path}");
        }
        Ok(p)
    }

    pub fn gaze_params(&self) -> ParamStore {
        self.store.split_prefix(&format!("{}.", GazeNet::PREFIX))
    }

    /// Copies torchvision-named ResNet tensors (`conv1.weight`,
    /// `layer1.0.bn2.running_var`, ...) into the heatmap encoder and, when
    /// `depth` is set, the depth encoder. The heatmap stem receives the RGB
    /// filters in its first three input channels; the single-channel depth
    /// stem receives their mean. Returns the number of tensors written.
    pub fn load_pretrained(&mut self, path: &Path, depth: bool) -> Result<usize> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let archive = Archive::decode(&bytes)?;
        let mut targets = vec![format!("{}.encoder", HeatmapNet::PREFIX)];
        if depth {
            targets.push(format!("{}.depth.encoder", GazeNet::PREFIX));
        }
        let mut written = 0;
        for e in &archive.entries {
            if e.name.starts_with("fc.") || e.name.ends_with("num_batches_tracked") {
                continue;
            }
            for prefix in &targets {
                let name = format!("{prefix}.{}", e.name);
                if e.name == "conv1.weight" {
                    let cur = self.store.get(&name)?.clone();
                    self.store.insert(name, merge_stem(&cur, &e.tensor)?);
                } else if let Ok(cur) = self.store.get(&name) {
                    check_shape(&name, cur, &e.tensor)?;
                    self.store.insert(name, e.tensor.clone());
                } else if let Ok(cur) = self.store.buffer(&name) {
                    check_shape(&name, cur, &e.tensor)?;
                    self.store.insert_buffer(name, e.tensor.clone());
                } else {
                    warn!("pretrained tensor {} has no counterpart in {prefix}", e.name);
                    continue;
                }
                written += 1;
            }
        }
        if written == 0 {
            return Err(TrainError::Checkpoint(format!("{}: no tensor matched the encoders", path.display())));
        }
        Ok(written)
    }
}

fn check_shape(name: &str, cur: &Tensor, new: &Tensor) -> Result<()> {
    if cur.shape() != new.shape() {
        return Err(TrainError::Checkpoint(format!(
            "pretrained {name}: shape {:?}, model expects {:?}",
            new.shape(),
            cur.shape()
        )));
    }
    Ok(())
}

/// Places a `[O, 3, k, k]` RGB stem into a `[O, C, k, k]` stem: the first
/// three channels when `C >= 3`, the channel mean when `C == 1`.
fn merge_stem(cur: &Tensor, rgb: &Tensor) -> Result<Tensor> {
    let (cs, rs) = (cur.shape(), rgb.shape());
    let err = || {
        TrainError::Checkpoint(format!("pretrained stem {rs:?} does not fit {cs:?}"))
    };
    if cs.len() != 4 || rs.len() != 4 || rs[1] != 3 || cs[0] != rs[0] || cs[2..] != rs[2..] {
        return Err(err());
    }
    let (o, c, kk) = (cs[0], cs[1], cs[2] * cs[3]);
    let mut out = cur.clone();
    let d = out.data_mut();
    let r = rgb.data();
    for oi in 0..o {
        for k in 0..kk {
            let src = |ch: usize| r[(oi * 3 + ch) * kk + k];
            match c {
                1 => d[oi * kk + k] = (src(0) + src(1) + src(2)) / 3.0,
                c if c >= 3 => {
                    for ch in 0..3 {
                        d[(oi * c + ch) * kk + k] = src(ch);
                    }
                }
                _ => return Err(err()),
            }
        }
    }
    Ok(out)
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

    #[test]
    fn initialization_is_seeded() {
        let a = Pipeline::new(&tiny()).unwrap();
        let b = Pipeline::new(&tiny()).unwrap();
        assert_eq!(a.store, b.store);
        let c = Pipeline::new(&TrainConfig { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a.store, c.store);
    }

    #[test]
    fn pretrained_stems_are_spliced() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::new(&tiny()).unwrap();
        let before = p.store.clone();
        let stem = before.get("heat.encoder.conv1.weight").unwrap();
        let o = stem.dim(0);
        let rgb = Tensor::new(vec![o, 3, 7, 7], (0..o * 3 * 49).map(|i| i as f64).collect()).unwrap();
        let bn = before.buffer("heat.encoder.bn1.running_var").unwrap().clone();
        let mut a = Archive::new(serde_json::Value::Null);
        a.push("param", "conv1.weight", rgb.clone());
        a.push("buffer", "bn1.running_var", Tensor::full(bn.shape().to_vec(), 2.0));
        a.push("param", "fc.weight", Tensor::zeros(vec![2, 2]));
        let path = dir.path().join("w.pgt");
        std::fs::write(&path, a.encode()).unwrap();
        assert_eq!(p.load_pretrained(&path, true).unwrap(), 4);

        let heat = p.store.get("heat.encoder.conv1.weight").unwrap();
        for oi in 0..o {
            for ch in 0..6 {
                for k in 0..49 {
                    let got = heat.data()[(oi * 6 + ch) * 49 + k];
                    let want = if ch < 3 { rgb.data()[(oi * 3 + ch) * 49 + k] } else { stem.data()[(oi * 6 + ch) * 49 + k] };
                    assert_eq!(got, want);
                }
            }
        }
        let depth = p.store.get("gaze.depth.encoder.conv1.weight").unwrap();
        let r = rgb.data();
        assert_eq!(depth.data()[0], (r[0] + r[49] + r[98]) / 3.0);
        assert!(p.store.buffer("gaze.depth.encoder.bn1.running_var").unwrap().data().iter().all(|&v| v == 2.0));

        let mut bad = Archive::new(serde_json::Value::Null);
        bad.push("param", "bn1.weight", Tensor::zeros(vec![o + 1]));
        std::fs::write(&path, bad.encode()).unwrap();
        assert!(p.load_pretrained(&path, false).is_err());
    }
}
