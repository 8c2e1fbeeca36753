//! Sample sources and conversion of samples into network input tensors.

use std::sync::Arc;

use privgaze_core::data::{augment, blur_face, DatasetManifest, GazeSample, Split};
use privgaze_core::geometry::{direction_field, unproject};
use privgaze_core::pose::{normalize_keypoints, select_upper_body, JointLayout};
use privgaze_core::supervision::{gaussian_gt_heatmap, normalized_to_cell};
use privgaze_nn::{Tensor, HEATMAP_SIZE, INPUT_SIZE};

use crate::config::TrainConfig;
use crate::error::{Result, TrainError};

/// Depth beyond this many meters is clipped before scaling to `[0, 1]`.
pub const DEPTH_CLIP_M: f64 = 10.0;

enum Source {
    Memory(Vec<(GazeSample, Split)>),
    Manifest(DatasetManifest),
}

/// Samples addressed by index. With `blur` set every sample handed out has
/// its head box blurred; in-memory samples are blurred once up front.
pub struct Dataset {
    source: Source,
    blur: bool,
}

fn blurred(mut s: GazeSample) -> GazeSample {
    s.scene = blur_face(&s.scene, &s.head_box);
    s
}

impl Dataset {
    pub fn from_samples(samples: Vec<(GazeSample, Split)>, blur: bool) -> Self {
        let samples = if blur {
            samples.into_iter().map(|(s, sp)| (blurred(s), sp)).collect()
        } else {
            samples
        };
        Self {
            source: Source::Memory(samples),
            blur,
        }
    }

    /// Loads lazily; each access decodes the record's files.
    pub fn from_manifest(manifest: DatasetManifest, blur: bool) -> Self {
        Self {
            source: Source::Manifest(manifest),
            blur,
        }
    }

    pub fn blurs(&self) -> bool {
        self.blur
    }

    pub fn len(&self) -> usize {
        match &self.source {
            Source::Memory(v) => v.len(),
            Source::Manifest(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, i: usize) -> String {
        match &self.source {
            Source::Memory(v) => v[i].0.id.clone(),
            Source::Manifest(m) => m.records[i].id.clone(),
        }
    }

    pub fn split(&self, split: Split) -> Vec<usize> {
        match &self.source {
            Source::Memory(v) => (0..v.len()).filter(|&i| v[i].1 == split).collect(),
            Source::Manifest(m) => m.split(split),
        }
    }

    pub fn get(&self, i: usize) -> Result<GazeSample> {
        match &self.source {
            Source::Memory(v) => Ok(v[i].0.clone()),
            Source::Manifest(m) => {
                let s = m.load_sample(i)?;
                Ok(if self.blur { blurred(s) } else { s })
            }
        }
    }
}

/// One sample converted to network inputs at 224x224.
#[derive(Clone, Debug)]
pub struct PreparedInput {
    /// Normalized pose features, `2 * joints` values.
    pub pose: Vec<f64>,
    /// Depth clipped to [`DEPTH_CLIP_M`] and scaled to `[0, 1]`.
    pub depth: Vec<f64>,
    /// RGB planes followed by the head mask plane.
    pub scene_mask: Vec<f64>,
    /// Unit eye-to-point directions, three values per pixel, zero where the
    /// depth is invalid.
    pub dirs: Vec<f64>,
    pub gt_gaze: [f64; 3],
    /// Gaussian target heatmap at 64x64.
    pub gt_heatmap: Vec<f64>,
}

/// Pose features for the configured joint set.
pub fn pose_features(s: &GazeSample, full_body: bool) -> Result<Vec<f64>> {
    let kp = match (s.keypoints.layout(), full_body) {
        (JointLayout::Coco17, false) => select_upper_body(&s.keypoints),
        (JointLayout::Upper13, true) => {
            return Err(TrainError::Data(format!(
                "sample {}: the full-body ablation needs 17 keypoints, record has 13",
                s.id
            )))
        }
        _ => s.keypoints.clone(),
    };
    Ok(normalize_keypoints(&kp)?.features())
}

pub fn prepare(s: &GazeSample, cfg: &TrainConfig) -> Result<PreparedInput> {
    let n = INPUT_SIZE;
    let pose = pose_features(s, cfg.ablation.use_full_body)?;
    let depth_small = s.depth.resized_nearest(n, n);
    let depth = depth_small
        .grid()
        .data()
        .iter()
        .map(|d| d.clamp(0.0, DEPTH_CLIP_M) / DEPTH_CLIP_M)
        .collect();
    let cloud = unproject(&depth_small, &s.intrinsics.resized(n, n))?;
    let dirs = direction_field(&cloud, &s.eye_3d);
    let scene = s.scene.resized(n, n);
    let mut scene_mask: Vec<f64> = scene.data().iter().map(|&v| v as f64).collect();
    scene_mask.extend_from_slice(s.head_mask(n).data());
    let (col, row) = normalized_to_cell(s.gt_target_2d[0], s.gt_target_2d[1], HEATMAP_SIZE);
    let gt_heatmap = gaussian_gt_heatmap(col, row, HEATMAP_SIZE, cfg.geometry.heatmap_sigma)?.into_data();
    Ok(PreparedInput {
        pose,
        depth,
        scene_mask,
        dirs,
        gt_gaze: s.gt_gaze.to_array(),
        gt_heatmap,
    })
}

/// Seed for augmenting sample `index` in `epoch`, independent of batching.
pub fn augment_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [epoch as u64, index as u64] {
        h = (h ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// Augments (when enabled for the stage) and prepares one training sample.
pub fn prepare_train(s: &GazeSample, cfg: &TrainConfig, augment_on: bool, epoch: usize, index: usize) -> Result<PreparedInput> {
    if augment_on {
        let a = augment(s, augment_seed(cfg.seed, epoch, index), &cfg.augment.params);
        prepare(&a, cfg)
    } else {
        prepare(s, cfg)
    }
}

/// Stacked tensors for a batch.
pub struct Batch {
    pub len: usize,
    pub pose: Tensor,
    pub depth: Tensor,
    pub scene_mask: Tensor,
    pub dirs: Arc<Vec<f64>>,
    pub gt_gaze: Tensor,
    pub gt_heatmap: Tensor,
}

pub fn stack(items: &[PreparedInput]) -> Result<Batch> {
    let n = items.len();
    if n == 0 {
        return Err(TrainError::Data("empty batch".into()));
    }
    let s = INPUT_SIZE;
    let j2 = items[0].pose.len();
    if items.iter().any(|p| p.pose.len() != j2) {
        return Err(TrainError::Data("mixed joint counts in one batch".into()));
    }
    let cat = |f: &dyn Fn(&PreparedInput) -> &[f64]| items.iter().flat_map(|p| f(p).iter().copied()).collect::<Vec<f64>>();
    Ok(Batch {
        len: n,
        pose: Tensor::new(vec![n, j2], cat(&|p| &p.pose))?,
        depth: Tensor::new(vec![n, 1, s, s], cat(&|p| &p.depth))?,
        scene_mask: Tensor::new(vec![n, 4, s, s], cat(&|p| &p.scene_mask))?,
        dirs: Arc::new(cat(&|p| &p.dirs)),
        gt_gaze: Tensor::new(vec![n, 3], cat(&|p| &p.gt_gaze))?,
        gt_heatmap: Tensor::new(vec![n, 1, HEATMAP_SIZE, HEATMAP_SIZE], cat(&|p| &p.gt_heatmap))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use privgaze_core::data::{synth_samples, SynthConfig};

    fn samples(n: usize) -> Vec<(GazeSample, Split)> {
        let cfg = SynthConfig {
            count: n,
            ..SynthConfig::default()
        };
        synth_samples(&cfg, 3).unwrap()
    }

    #[test]
    fn prepared_shapes_and_ranges() {
        let cfg = TrainConfig::default();
        let s = &samples(1)[0].0;
        let p = prepare(s, &cfg).unwrap();
        let px = INPUT_SIZE * INPUT_SIZE;
        assert_eq!(p.pose.len(), 26);
        assert_eq!((p.depth.len(), p.scene_mask.len(), p.dirs.len()), (px, 4 * px, 3 * px));
        assert!(p.depth.iter().all(|d| (0.0..=1.0).contains(d)));
        assert!(p.scene_mask[3 * px..].contains(&1.0));
        assert_eq!(p.gt_heatmap.iter().cloned().fold(0.0, f64::max), 1.0);
        for d in p.dirs.chunks(3) {
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
        let full = TrainConfig {
            ablation: crate::config::Ablation {
                use_full_body: true,
                blur_faces: true,
            },
            ..cfg
        };
        assert_eq!(prepare(s, &full).unwrap().pose.len(), 34);
        let b = stack(&[p.clone(), p]).unwrap();
        assert_eq!(b.scene_mask.shape(), &[2, 4, INPUT_SIZE, INPUT_SIZE]);
        assert_eq!(b.gt_heatmap.shape(), &[2, 1, HEATMAP_SIZE, HEATMAP_SIZE]);
    }

    #[test]
    fn memory_dataset_blurs_once_and_reports_splits() {
        let raw = samples(12);
        let d = Dataset::from_samples(raw.clone(), true);
        assert_eq!(d.len(), 12);
        for (i, (r, _)) in raw.iter().enumerate() {
            let s = d.get(i).unwrap();
            assert_eq!(s.depth, r.depth);
            assert!(privgaze_core::data::audit_blur(&r.scene, &s.scene, &s.head_box).passed());
        }
        let total: usize = [Split::Train, Split::Val, Split::Test].iter().map(|&sp| d.split(sp).len()).sum();
        assert_eq!(total, 12);
        let plain = Dataset::from_samples(raw.clone(), false);
        assert_eq!(plain.get(0).unwrap().scene, raw[0].0.scene);
    }

    #[test]
    fn augment_seeds_differ_across_epochs_and_indices() {
        let a = augment_seed(1, 0, 0);
        assert_ne!(a, augment_seed(1, 1, 0));
        assert_ne!(a, augment_seed(1, 0, 1));
        assert_ne!(a, augment_seed(2, 0, 0));
        assert_eq!(a, augment_seed(1, 0, 0));
    }
}
