//! Seeded geometric and photometric augmentation.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{DepthMap, GazeVector, Vec3};
use crate::grid::Grid;

use super::image::{BoundingBox, SceneImage};
use super::sample::{normalized_to_pixel, GazeSample};

pub const MAX_CROP_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub crop_prob: f64,
    /// Smallest crop side as a fraction of the image side.
    pub crop_min_scale: f64,
    /// Maximum relative change of each photometric factor.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            crop_prob: 0.5,
            crop_min_scale: 0.8,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
        }
    }
}

/// Crop, flip and color jitter driven by `seed` alone.
pub fn augment(sample: &GazeSample, seed: u64, cfg: &AugmentConfig) -> GazeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = sample.clone();
    if rng.random::<f64>() < cfg.crop_prob {
        if let Some(c) = sample_crop(&s, cfg.crop_min_scale, &mut rng) {
            s = crop(&s, c).expect("sampled crops lie inside the image");
        }
    }
    if rng.random::<f64>() < cfg.flip_prob {
        s = flip_horizontal(&s);
    }
    let mut jitter = |amount: f64| 1.0 + amount * (2.0 * rng.random::<f64>() - 1.0);
    let (b, c, sat) = (jitter(cfg.brightness), jitter(cfg.contrast), jitter(cfg.saturation));
    s.scene = adjust_photometric(&s.scene, b as f32, c as f32, sat as f32);
    s
}

/// Crop rectangle `(u0, v0, width, height)` in pixels.
pub type CropRect = (usize, usize, usize, usize);

/// Draws crops until one keeps the target and the eye inside; `None`
/// after [`MAX_CROP_ATTEMPTS`] failures.
fn sample_crop(s: &GazeSample, min_scale: f64, rng: &mut impl Rng) -> Option<CropRect> {
    let (w, h) = (s.width(), s.height());
    let (tu, tv) = s.target_pixel();
    for _ in 0..MAX_CROP_ATTEMPTS {
        let scale = min_scale + (1.0 - min_scale) * rng.random::<f64>();
        let cw = ((w as f64 * scale).round() as usize).clamp(1, w);
        let ch = ((h as f64 * scale).round() as usize).clamp(1, h);
        let u0 = rng.random_range(0..=w - cw);
        let v0 = rng.random_range(0..=h - ch);
        let inside = |u: f64, v: f64| u >= u0 as f64 && u < (u0 + cw) as f64 && v >= v0 as f64 && v < (v0 + ch) as f64;
        let eye_u = s.eye_2d[0] + 0.5;
        let eye_v = s.eye_2d[1] + 0.5;
        if inside(tu as f64, tv as f64) && inside(eye_u, eye_v) {
            return Some((u0, v0, cw, ch));
        }
    }
    debug!("sample {}: no crop kept the target after {MAX_CROP_ATTEMPTS} attempts", s.id);
    None
}

/// Cuts out a rectangle and shifts every 2D annotation and the principal
/// point; 3D quantities are unchanged.
pub fn crop(s: &GazeSample, (u0, v0, cw, ch): CropRect) -> Result<GazeSample> {
    if cw == 0 || ch == 0 || u0 + cw > s.width() || v0 + ch > s.height() {
        return Err(CoreError::Invalid(format!("crop {:?} outside {}x{}", (u0, v0, cw, ch), s.width(), s.height())));
    }
    let (tu, tv) = s.target_pixel();
    if !(u0..u0 + cw).contains(&tu) || !(v0..v0 + ch).contains(&tv) {
        return Err(CoreError::Invalid("crop excludes the gaze target".into()));
    }
    let (du, dv) = (u0 as f64, v0 as f64);
    let mut scene = SceneImage::filled(cw, ch, [0.0; 3]);
    for v in 0..ch {
        for u in 0..cw {
            scene.set_pixel(u, v, s.scene.pixel(u + u0, v + v0));
        }
    }
    let depth = DepthMap::new(Grid::from_fn(cw, ch, |v, u| s.depth.at(u + u0, v + v0)))?;
    let mut k = s.intrinsics;
    k.cx -= du;
    k.cy -= dv;
    k.width = cw;
    k.height = ch;
    let b = s.head_box;
    let head_box = BoundingBox {
        x0: b.x0 - du,
        y0: b.y0 - dv,
        x1: b.x1 - du,
        y1: b.y1 - dv,
    }
    .clipped(cw, ch);
    // keep the target in the same pixel, at its center offset within it
    let t = s.gt_target_2d;
    let tx = (t[0] * s.width() as f64 - du) / cw as f64;
    let ty = (t[1] * s.height() as f64 - dv) / ch as f64;
    let out = GazeSample {
        id: s.id.clone(),
        scene,
        depth,
        intrinsics: k,
        keypoints: s.keypoints.map_joints(|j| [j[0] - du, j[1] - dv])?,
        head_box,
        eye_2d: [s.eye_2d[0] - du, s.eye_2d[1] - dv],
        eye_3d: s.eye_3d,
        gt_gaze: s.gt_gaze,
        gt_target_2d: [tx.clamp(0.0, 1.0), ty.clamp(0.0, 1.0)],
        gt_target_3d: s.gt_target_3d,
    };
    debug_assert_eq!(normalized_to_pixel(out.gt_target_2d, cw, ch), (tu - u0, tv - v0));
    Ok(out)
}

fn mirror_x(p: &Vec3) -> Vec3 {
    Vec3::new(-p.x, p.y, p.z)
}

/// Mirrors the image left-right. Pixel `u` maps to `W - 1 - u`, camera X
/// and gaze x change sign, and left/right joints swap labels. Samples whose
/// principal point would leave the image are returned unchanged.
pub fn flip_horizontal(s: &GazeSample) -> GazeSample {
    let (w, h) = (s.width(), s.height());
    let wf = w as f64;
    if s.intrinsics.cx > wf - 1.0 {
        debug!("sample {}: principal point too close to the right edge to flip", s.id);
        return s.clone();
    }
    let mut scene = s.scene.clone();
    for c in 0..3 {
        let src = s.scene.plane(c);
        for (v, row) in scene.plane_mut(c).chunks_exact_mut(w).enumerate() {
            for (u, x) in row.iter_mut().enumerate() {
                *x = src[v * w + (w - 1 - u)];
            }
        }
    }
    let depth = DepthMap::new(Grid::from_fn(w, h, |v, u| s.depth.at(w - 1 - u, v))).expect("same values");
    let mut k = s.intrinsics;
    k.cx = wf - 1.0 - k.cx;
    let b = s.head_box;
    let g = s.gt_gaze.vec();
    GazeSample {
        id: s.id.clone(),
        scene,
        depth,
        intrinsics: k,
        keypoints: s.keypoints.mirrored((wf - 1.0) / 2.0),
        head_box: BoundingBox {
            x0: wf - b.x1,
            y0: b.y0,
            x1: wf - b.x0,
            y1: b.y1,
        },
        eye_2d: [wf - 1.0 - s.eye_2d[0], s.eye_2d[1]],
        eye_3d: mirror_x(&s.eye_3d),
        gt_gaze: GazeVector::normalize(Vec3::new(-g.x, g.y, g.z)).expect("unit input"),
        gt_target_2d: [1.0 - s.gt_target_2d[0], s.gt_target_2d[1]],
        gt_target_3d: mirror_x(&s.gt_target_3d),
    }
}

/// Scales brightness, stretches contrast around the mean gray level and
/// scales saturation around each pixel's gray value; results clamp to [0, 1].
pub fn adjust_photometric(img: &SceneImage, brightness: f32, contrast: f32, saturation: f32) -> SceneImage {
    let (w, h) = (img.width(), img.height());
    let gray = |p: [f32; 3]| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    let mut out = img.clone();
    let n = (w * h).max(1) as f32;
    let mut mean = 0.0f32;
    for v in 0..h {
        for u in 0..w {
            mean += gray(img.pixel(u, v).map(|x| (x * brightness).clamp(0.0, 1.0)));
        }
    }
    mean /= n;
    for v in 0..h {
        for u in 0..w {
            let p = img.pixel(u, v).map(|x| (x * brightness).clamp(0.0, 1.0));
            let p = p.map(|x| ((x - mean) * contrast + mean).clamp(0.0, 1.0));
            let g = gray(p);
            out.set_pixel(u, v, p.map(|x| ((x - g) * saturation + g).clamp(0.0, 1.0)));
        }
    }
    out
}
