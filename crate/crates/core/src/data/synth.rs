//! Procedural scenes with exact ground truth: a floor and a back wall seen
//! by a level camera at the origin looking down +z (y points down), one
//! stick-figure person whose head faces the gaze target, and a target on a
//! room surface. The person is drawn into the RGB image only; depth holds
//! the room.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{project, unproject, CameraIntrinsics, DepthMap, GazeVector, Vec3};
use crate::grid::Grid;
use crate::pose::{format_keypoints, JointLayout, Keypoints2D};

use super::image::{quantize_depth_mm, save_depth, save_scene, BoundingBox, SceneImage};
use super::manifest::{DatasetManifest, ManifestRecord, Split};
use super::sample::{pixel_to_normalized, GazeSample};

const HEAD_RADIUS: f64 = 0.11;
const MAX_TRIES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    /// Range of the back wall's distance from the camera, meters.
    pub back_wall_depth: [f64; 2],
    /// Range of the camera's height above the floor, meters.
    pub camera_height: [f64; 2],
    pub person_depth: [f64; 2],
    pub eye_height: [f64; 2],
    /// Minimum depth of the target beyond the eye, meters.
    pub target_clearance: f64,
    /// Standard deviation of 2D keypoint noise, pixels.
    pub keypoint_noise_px: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 64,
            width: 224,
            height: 224,
            fx: 180.0,
            fy: 180.0,
            back_wall_depth: [4.0, 6.0],
            camera_height: [1.1, 1.5],
            person_depth: [1.8, 3.0],
            eye_height: [1.45, 1.7],
            target_clearance: 0.5,
            keypoint_noise_px: 0.5,
            val_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.fx,
            self.fy,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics()?;
        if self.width < 32 || self.height < 32 {
            return Err(CoreError::Invalid("synthetic images must be at least 32x32".into()));
        }
        for (name, r) in [
            ("back_wall_depth", self.back_wall_depth),
            ("camera_height", self.camera_height),
            ("person_depth", self.person_depth),
            ("eye_height", self.eye_height),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return Err(CoreError::Invalid(format!("{name} range {r:?} must be positive and ordered")));
            }
        }
        if self.person_depth[1] + self.target_clearance >= self.back_wall_depth[0] {
            return Err(CoreError::Invalid("people must stand well in front of the back wall".into()));
        }
        let fracs = self.val_fraction + self.test_fraction;
        if !(self.val_fraction >= 0.0 && self.test_fraction >= 0.0 && fracs <= 1.0) {
            return Err(CoreError::Invalid("val and test fractions must be non-negative and sum to at most 1".into()));
        }
        if !(self.keypoint_noise_px >= 0.0 && self.target_clearance >= 0.0) {
            return Err(CoreError::Invalid("noise and clearance must be non-negative".into()));
        }
        Ok(())
    }

    /// Split of sample `i`: train first, then validation, then test.
    pub fn split_of(&self, i: usize) -> Split {
        let n_test = (self.count as f64 * self.test_fraction).round() as usize;
        let n_val = (self.count as f64 * self.val_fraction).round() as usize;
        let n_train = self.count.saturating_sub(n_val + n_test);
        if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

struct Room {
    wall_z: f64,
    floor_y: f64,
    wall_rgb: [f64; 3],
    tiles: [[f64; 3]; 2],
    /// Wall panels as `(x0, y0, x1, y1, rgb)` in meters on the wall plane.
    panels: Vec<(f64, f64, f64, f64, [f64; 3])>,
}

impl Room {
    fn random(cfg: &SynthConfig, rng: &mut impl Rng) -> Room {
        let mut color = |lo: f64, hi: f64| [0; 3].map(|_: i32| lo + (hi - lo) * rng.random::<f64>());
        let wall_rgb = color(0.55, 0.9);
        let tiles = [color(0.25, 0.5), color(0.45, 0.7)];
        let wall_z = uniform(rng, cfg.back_wall_depth);
        let floor_y = uniform(rng, cfg.camera_height);
        let n = rng.random_range(2..=4);
        let panels = (0..n)
            .map(|_| {
                let w = uniform(rng, [0.4, 1.4]);
                let h = uniform(rng, [0.3, 1.0]);
                let x0 = uniform(rng, [-2.5, 2.5 - w]);
                let y0 = uniform(rng, [-1.5, floor_y - 0.3 - h]);
                let rgb = [0; 3].map(|_: i32| rng.random::<f64>());
                (x0, y0, x0 + w, y0 + h, rgb)
            })
            .collect();
        Room {
            wall_z,
            floor_y,
            wall_rgb,
            tiles,
            panels,
        }
    }

    /// Analytic depth of the first surface along the ray through pixel (u, v).
    fn depth(&self, k: &CameraIntrinsics, v: usize) -> f64 {
        let ry = (v as f64 - k.cy) / k.fy;
        if ry > 0.0 {
            (self.floor_y / ry).min(self.wall_z)
        } else {
            self.wall_z
        }
    }

    fn shade(&self, p: &Vec3) -> [f64; 3] {
        if p.z >= quantize_depth_mm(self.wall_z) - 1e-9 {
            for &(x0, y0, x1, y1, rgb) in &self.panels {
                if (x0..x1).contains(&p.x) && (y0..y1).contains(&p.y) {
                    return rgb;
                }
            }
            let f = 0.85 + 0.15 * (p.y / self.floor_y).clamp(-1.0, 1.0);
            self.wall_rgb.map(|c| c * f)
        } else {
            let tile = ((p.x / 0.6).floor() + (p.z / 0.6).floor()) as i64;
            let f = (1.1 - 0.06 * p.z).clamp(0.5, 1.0);
            self.tiles[tile.rem_euclid(2) as usize].map(|c| c * f)
        }
    }
}

/// Person geometry in camera coordinates.
struct Person {
    joints: [Vec3; 17],
    head_center: Vec3,
    eye: Vec3,
    forward: Vec3,
}

fn person_facing(eye: Vec3, gaze: &Vec3, rng: &mut impl Rng) -> Option<Person> {
    let up = Vec3::new(0.0, -1.0, 0.0);
    let f = *gaze;
    let right = f.cross(&up);
    if right.norm() < 0.2 {
        return None;
    }
    let right = right.normalize();
    let head_up = right.cross(&f);
    let hc = eye - 0.08 * f;
    let nose = hc + 0.11 * f - 0.03 * head_up;
    let l_eye = eye - 0.032 * right;
    let r_eye = eye + 0.032 * right;
    let l_ear = hc - 0.075 * right;
    let r_ear = hc + 0.075 * right;

    // the torso turns partly with the head
    let yaw = rng.random_range(-0.4..0.4);
    let horiz = Vec3::new(f.x, 0.0, f.z).normalize();
    let (s, c) = f64::sin_cos(yaw);
    let body_f = Vec3::new(horiz.x * c - horiz.z * s, 0.0, horiz.x * s + horiz.z * c);
    let body_r = body_f.cross(&up).normalize();
    let down = -up;
    let neck = hc + 0.2 * down;
    let l_sh = neck - 0.19 * body_r;
    let r_sh = neck + 0.19 * body_r;
    let mid_hip = neck + 0.5 * down;
    let l_hip = mid_hip - 0.1 * body_r;
    let r_hip = mid_hip + 0.1 * body_r;
    let mut arm = |sh: Vec3, side: f64| {
        let elbow = sh + 0.28 * down + body_r * side * rng.random_range(0.0..0.08) + body_f * rng.random_range(-0.06..0.1);
        let wrist = elbow + 0.22 * down + body_r * side * rng.random_range(-0.05..0.1) + body_f * rng.random_range(0.0..0.15);
        (elbow, wrist)
    };
    let (l_el, l_wr) = arm(l_sh, -1.0);
    let (r_el, r_wr) = arm(r_sh, 1.0);
    let l_knee = l_hip + 0.45 * down;
    let r_knee = r_hip + 0.45 * down;
    let l_ankle = l_knee + 0.42 * down;
    let r_ankle = r_knee + 0.42 * down;
    Some(Person {
        joints: [
            nose, l_eye, r_eye, l_ear, r_ear, l_sh, r_sh, l_el, r_el, l_wr, r_wr, l_hip, r_hip, l_knee, r_knee, l_ankle,
            r_ankle,
        ],
        head_center: hc,
        eye,
        forward: f,
    })
}

fn to_u8(rgb: [f64; 3]) -> [f32; 3] {
    rgb.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8 as f32 / 255.0)
}

fn fill_disk(img: &mut SceneImage, cu: f64, cv: f64, r: f64, rgb: [f32; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (u0, u1) = ((cu - r).floor() as i64, (cu + r).ceil() as i64);
    let (v0, v1) = ((cv - r).floor() as i64, (cv + r).ceil() as i64);
    for v in v0.max(0)..=v1.min(h - 1) {
        for u in u0.max(0)..=u1.min(w - 1) {
            if (u as f64 - cu).powi(2) + (v as f64 - cv).powi(2) <= r * r {
                img.set_pixel(u as usize, v as usize, rgb);
            }
        }
    }
}

fn draw_segment(img: &mut SceneImage, a: (f64, f64), b: (f64, f64), r: f64, rgb: [f32; 3]) {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let steps = (len * 2.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        fill_disk(img, a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t, r, rgb);
    }
}

fn render(room: &Room, cloud_k: &CameraIntrinsics, depth: &DepthMap, person: &Person, rng: &mut impl Rng) -> SceneImage {
    let cloud = unproject(depth, cloud_k).expect("depth matches intrinsics");
    let mut img = SceneImage::filled(cloud_k.width, cloud_k.height, [0.0; 3]);
    for (u, v, p) in cloud.valid_points() {
        img.set_pixel(u, v, to_u8(room.shade(&p)));
    }
    let px = |p: &Vec3| project(p, cloud_k).expect("person is in front of the camera");
    let shirt = to_u8([0; 3].map(|_: i32| rng.random_range(0.05..0.6)));
    let pants = to_u8([0.15, 0.15, rng.random_range(0.2..0.5)]);
    let skin = to_u8([0.85, 0.65, 0.5].map(|c| c * rng.random_range(0.6..1.0)));
    let hair = to_u8([0.15, 0.1, 0.05].map(|c| c * rng.random_range(0.5..2.0)));
    let j: Vec<(f64, f64)> = person.joints.iter().map(px).collect();
    let limb_r = (0.035 * cloud_k.fx / person.eye.z).max(1.0);
    let bones: [(usize, usize, [f32; 3]); 12] = [
        (5, 6, shirt),
        (5, 11, shirt),
        (6, 12, shirt),
        (11, 12, shirt),
        (5, 7, shirt),
        (7, 9, skin),
        (6, 8, shirt),
        (8, 10, skin),
        (11, 13, pants),
        (13, 15, pants),
        (12, 14, pants),
        (14, 16, pants),
    ];
    for (a, b, rgb) in bones {
        draw_segment(&mut img, j[a], j[b], limb_r, rgb);
    }
    let neck = (person.joints[5] + person.joints[6]) / 2.0;
    draw_segment(&mut img, px(&neck), px(&person.head_center), limb_r, skin);
    // the head shows more face the more it turns toward the camera
    let (hu, hv) = px(&person.head_center);
    let hr = HEAD_RADIUS * cloud_k.fx / person.head_center.z;
    let toward = (-person.forward.dot(&person.head_center.normalize())).clamp(-1.0, 1.0);
    let mix = ((toward + 1.0) / 2.0) as f32;
    let head_rgb = [0, 1, 2].map(|c| hair[c] * (1.0 - mix) + skin[c] * mix);
    fill_disk(&mut img, hu, hv, hr, to_u8(head_rgb.map(f64::from)));
    for e in [1, 2] {
        let outward = person.joints[e] - person.head_center;
        if outward.dot(&-person.joints[e]) > 0.0 {
            fill_disk(&mut img, j[e].0, j[e].1, (hr / 6.0).max(0.8), to_u8([0.05; 3]));
        }
    }
    let nose_dir = person.joints[0] - person.head_center;
    if nose_dir.dot(&-person.joints[0]) > 0.0 {
        fill_disk(&mut img, j[0].0, j[0].1, (hr / 7.0).max(0.7), to_u8([0.6, 0.35, 0.3]));
    }
    img
}

fn inside(p: (f64, f64), k: &CameraIntrinsics, margin: f64) -> bool {
    p.0 >= margin && p.0 <= k.width as f64 - 1.0 - margin && p.1 >= margin && p.1 <= k.height as f64 - 1.0 - margin
}

/// Draws one sample; every annotation is derived from the same geometry.
pub fn synth_sample(cfg: &SynthConfig, rng: &mut ChaCha8Rng, id: String) -> Result<GazeSample> {
    cfg.validate()?;
    let k = cfg.intrinsics()?;
    let noise = Normal::new(0.0, cfg.keypoint_noise_px.max(f64::MIN_POSITIVE)).expect("valid sigma");
    for _ in 0..MAX_TRIES {
        let room = Room::random(cfg, rng);
        let depth = DepthMap::new(Grid::from_fn(k.width, k.height, |v, _| quantize_depth_mm(room.depth(&k, v))))?;
        let cloud = unproject(&depth, &k)?;

        let z = uniform(rng, cfg.person_depth);
        let half = (k.cx - 0.15 * k.width as f64) * z / k.fx;
        let eye = Vec3::new(
            rng.random_range(-half..half),
            room.floor_y - uniform(rng, cfg.eye_height),
            z,
        );
        let Ok(eye_px) = project(&eye, &k) else { continue };
        if !inside(eye_px, &k, 4.0) {
            continue;
        }

        for _ in 0..50 {
            let tu = rng.random_range(0..k.width);
            let tv = rng.random_range(0..k.height);
            let t3 = cloud.point(tu, tv);
            if !cloud.is_valid(tu, tv) || t3.z < eye.z + cfg.target_clearance {
                continue;
            }
            let gaze = GazeVector::normalize(t3 - eye)?;
            let Some(person) = person_facing(eye, &gaze.vec(), rng) else { continue };
            let joints2d: Vec<(f64, f64)> = person.joints.iter().map(|p| project(p, &k)).collect::<Result<_>>()?;
            if !joints2d[..13].iter().all(|p| inside(*p, &k, 2.0)) {
                continue;
            }
            let (hu, hv) = project(&person.head_center, &k)?;
            let hr = HEAD_RADIUS * k.fx / person.head_center.z;
            let head_box = BoundingBox {
                x0: hu + 0.5 - hr,
                y0: hv + 0.5 - hr,
                x1: hu + 0.5 + hr,
                y1: hv + 0.5 + hr,
            };
            if !head_box.within(k.width, k.height) {
                continue;
            }
            let in_box = |u: usize, v: usize| {
                let (x, y) = (u as f64 + 0.5, v as f64 + 0.5);
                x > head_box.x0 && x < head_box.x1 && y > head_box.y0 && y < head_box.y1
            };
            if in_box(tu, tv) {
                continue;
            }
            let joints = joints2d
                .iter()
                .map(|p| {
                    if cfg.keypoint_noise_px > 0.0 {
                        [p.0 + noise.sample(rng), p.1 + noise.sample(rng)]
                    } else {
                        [p.0, p.1]
                    }
                })
                .collect();
            let keypoints = Keypoints2D::new(JointLayout::Coco17, joints, Some(vec![1.0; 17]))?;
            let scene = render(&room, &k, &depth, &person, rng);
            let (eu, ev) = project(&eye, &k)?;
            let s = GazeSample {
                id,
                scene,
                depth,
                intrinsics: k,
                keypoints,
                head_box,
                eye_2d: [eu, ev],
                eye_3d: eye,
                gt_gaze: gaze,
                gt_target_2d: pixel_to_normalized(tu, tv, k.width, k.height),
                gt_target_3d: t3,
            };
            s.validate()?;
            return Ok(s);
        }
    }
    Err(CoreError::Invalid("synthetic configuration admits no valid person/target placement".into()))
}

pub fn sample_id(i: usize) -> String {
    format!("{i:06}")
}

/// All samples of a dataset in memory, with their splits.
pub fn synth_samples(cfg: &SynthConfig, seed: u64) -> Result<Vec<(GazeSample, Split)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.count)
        .map(|i| Ok((synth_sample(cfg, &mut rng, sample_id(i))?, cfg.split_of(i))))
        .collect()
}

/// Saves the sample's files under `root` and returns its manifest record.
pub fn write_sample(s: &GazeSample, split: Split, root: &Path) -> Result<ManifestRecord> {
    for dir in ["scenes", "depth", "keypoints"] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| CoreError::io(&d, e))?;
    }
    let rec = ManifestRecord {
        id: s.id.clone(),
        split,
        subject: format!("synth-{}", s.id),
        scene_id: format!("synth-{}", s.id),
        scene: format!("scenes/{}.png", s.id),
        depth: format!("depth/{}.png", s.id),
        keypoints: format!("keypoints/{}.txt", s.id),
        intrinsics: s.intrinsics,
        head_box: s.head_box,
        eye_2d: s.eye_2d,
        eye_3d: s.eye_3d.into(),
        gt_gaze: s.gt_gaze.to_array(),
        gt_target_2d: s.gt_target_2d,
        gt_target_3d: s.gt_target_3d.into(),
    };
    save_scene(&s.scene, &root.join(&rec.scene))?;
    save_depth(&s.depth, &root.join(&rec.depth))?;
    let kp = root.join(&rec.keypoints);
    fs::write(&kp, format_keypoints(&s.keypoints)).map_err(|e| CoreError::io(&kp, e))?;
    Ok(rec)
}

/// Generates `cfg.count` samples into `out_dir` and writes `manifest.jsonl`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let s = synth_sample(cfg, &mut rng, sample_id(i))?;
        records.push(write_sample(&s, cfg.split_of(i), out_dir)?);
    }
    let m = DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
    };
    let path = out_dir.join("manifest.jsonl");
    fs::write(&path, m.to_text()).map_err(|e| CoreError::io(&path, e))?;
    Ok(m)
}
