//! Pinhole geometry: unprojection, field-of-view maps and 3D target retrieval.
//!
//! Pixel `(u, v)` has its center at continuous image coordinate `(u, v)`;
//! the normalized coordinate of that pixel is `((u + 0.5) / W, (v + 0.5) / H)`.

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::Grid;

pub type Vec3 = Vector3<f64>;

/// Points closer than this to the eye have no defined direction.
pub const EYE_EPS: f64 = 1e-9;
/// Tolerance on `|g| - 1` for [`GazeVector::new`].
pub const UNIT_TOL: f64 = 1e-6;
pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_WINDOW_RADIUS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Intrinsics(m));
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx={} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy={} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Intrinsics of the same camera after resampling the image to
    /// `width x height` (pixel-center aligned).
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }
}

/// Depth in meters; 0 marks a missing measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap(Grid<f64>);

impl DepthMap {
    pub fn new(values: Grid<f64>) -> Result<Self> {
        if let Some(v) = values.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(CoreError::Invalid(format!("depth value {v} is not a finite non-negative number")));
        }
        Ok(Self(values))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        *self.0.get(v, u)
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.at(u, v) > 0.0
    }

    /// Nearest-neighbour resampling; never mixes valid and missing depth.
    pub fn resized_nearest(&self, width: usize, height: usize) -> DepthMap {
        let (w, h) = (self.width(), self.height());
        let g = Grid::from_fn(width, height, |r, c| {
            let sr = (((r as f64 + 0.5) * h as f64 / height as f64) as usize).min(h - 1);
            let sc = (((c as f64 + 0.5) * w as f64 / width as f64) as usize).min(w - 1);
            *self.0.get(sr, sc)
        });
        DepthMap(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    width: usize,
    height: usize,
    points: Vec<Vec3>,
    valid: Vec<bool>,
}

impl PointCloud {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn point(&self, u: usize, v: usize) -> Vec3 {
        self.points[v * self.width + u]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Row-major iterator over `(u, v, point)` of valid pixels.
    pub fn valid_points(&self) -> impl Iterator<Item = (usize, usize, Vec3)> + '_ {
        self.points
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(|(i, (p, _))| (i % self.width, i / self.width, *p))
    }
}

/// A unit-norm 3D direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct GazeVector(Vec3);

impl GazeVector {
    /// Accepts only vectors already unit-norm within [`UNIT_TOL`].
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        let n = v.norm();
        if !n.is_finite() {
            return Err(CoreError::NonFinite("gaze vector".into()));
        }
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(CoreError::Invalid(format!("gaze norm {n} is not 1")));
        }
        Ok(Self(v))
    }

    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() {
            return Err(CoreError::NonFinite("gaze vector".into()));
        }
        if n < EYE_EPS {
            return Err(CoreError::ZeroNorm);
        }
        Ok(Self(v / n))
    }

    pub fn vec(&self) -> Vec3 {
        self.0
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }
}

impl TryFrom<[f64; 3]> for GazeVector {
    type Error = CoreError;
    fn try_from(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<GazeVector> for [f64; 3] {
    fn from(g: GazeVector) -> Self {
        g.to_array()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FovHeatmaps {
    pub v: Grid<f64>,
    pub v_hat: Grid<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retrieval3D {
    pub refined_gaze: GazeVector,
    pub target_3d: Vec3,
    /// Pixel `(u, v)` of the selected point.
    pub target_2d: (usize, usize),
}

pub fn unproject(depth: &DepthMap, k: &CameraIntrinsics) -> Result<PointCloud> {
    if (depth.width(), depth.height()) != (k.width, k.height) {
        return Err(CoreError::Shape(format!(
            "depth is {}x{} but intrinsics describe {}x{}",
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    let n = k.width * k.height;
    let mut points = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for v in 0..k.height {
        for u in 0..k.width {
            let z = depth.at(u, v);
            if z > 0.0 {
                points.push(Vec3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z));
                valid.push(true);
            } else {
                points.push(Vec3::zeros());
                valid.push(false);
            }
        }
    }
    Ok(PointCloud {
        width: k.width,
        height: k.height,
        points,
        valid,
    })
}

/// Continuous pixel coordinates `(u, v)` of a camera-frame point.
pub fn project(point: &Vec3, k: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(point.z > 0.0) {
        return Err(CoreError::BehindCamera(point.z));
    }
    Ok((k.fx * point.x / point.z + k.cx, k.fy * point.y / point.z + k.cy))
}

/// Unit vectors from `eye` to every cloud point, packed as `[x, y, z]`
/// triples in row-major order. Invalid or eye-coincident pixels get zeros.
pub fn direction_field(cloud: &PointCloud, eye: &Vec3) -> Vec<f64> {
    let mut out = vec![0.0; cloud.points.len() * 3];
    for (i, (p, ok)) in cloud.points.iter().zip(&cloud.valid).enumerate() {
        if !ok {
            continue;
        }
        let d = p - eye;
        let n = d.norm();
        if n < EYE_EPS {
            continue;
        }
        out[i * 3] = d.x / n;
        out[i * 3 + 1] = d.y / n;
        out[i * 3 + 2] = d.z / n;
    }
    out
}

/// `V` is the cosine between the eye-to-point ray and the gaze, and
/// `V_hat = relu(V)^alpha`. A non-unit gaze is normalized with a warning.
pub fn compute_fov_heatmaps(cloud: &PointCloud, eye: &Vec3, gaze: &Vec3, alpha: f64) -> Result<FovHeatmaps> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CoreError::Invalid(format!("alpha must be positive, got {alpha}")));
    }
    let n = gaze.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        warn!("gaze norm {n} is not 1; normalizing before the field-of-view computation");
    }
    let g = GazeVector::normalize(*gaze)?.vec();
    let dirs = direction_field(cloud, eye);
    let v: Vec<f64> = dirs
        .chunks_exact(3)
        .map(|d| (d[0] * g.x + d[1] * g.y + d[2] * g.z).clamp(-1.0, 1.0))
        .collect();
    let v_hat = v.iter().map(|x| x.max(0.0).powf(alpha)).collect();
    Ok(FovHeatmaps {
        v: Grid::from_vec(cloud.width, cloud.height, v).expect("one value per pixel"),
        v_hat: Grid::from_vec(cloud.width, cloud.height, v_hat).expect("one value per pixel"),
    })
}

/// Pixel of a `width x height` image under the center of heatmap cell `(row, col)`.
pub fn cell_to_pixel(row: usize, col: usize, grid: (usize, usize), width: usize, height: usize) -> (usize, usize) {
    let u = ((col as f64 + 0.5) / grid.0 as f64 * width as f64) as usize;
    let v = ((row as f64 + 0.5) / grid.1 as f64 * height as f64) as usize;
    (u.min(width - 1), v.min(height - 1))
}

fn cosine(d: &Vec3, g: &Vec3) -> Option<f64> {
    let n = d.norm();
    (n >= EYE_EPS).then(|| d.dot(g) / n)
}

/// Best valid point by cosine to `g` inside the square window; the first
/// in row-major order wins ties.
fn best_in_window(cloud: &PointCloud, eye: &Vec3, g: &Vec3, center: (usize, usize), r: usize) -> Option<(usize, usize, f64)> {
    let u0 = center.0.saturating_sub(r);
    let u1 = (center.0 + r).min(cloud.width - 1);
    let v0 = center.1.saturating_sub(r);
    let v1 = (center.1 + r).min(cloud.height - 1);
    let mut best: Option<(usize, usize, f64)> = None;
    for v in v0..=v1 {
        for u in u0..=u1 {
            if !cloud.is_valid(u, v) {
                continue;
            }
            if let Some(c) = cosine(&(cloud.point(u, v) - eye), g) {
                if best.is_none_or(|b| c > b.2) {
                    best = Some((u, v, c));
                }
            }
        }
    }
    best
}

/// Picks the heatmap peak, maps it to the cloud and returns the point in a
/// window around it whose direction from the eye best matches `gaze`. The
/// window doubles until it contains a usable point.
pub fn retrieve_3d_target(
    heatmap: &Grid<f64>,
    cloud: &PointCloud,
    eye: &Vec3,
    gaze: &Vec3,
    window_radius: usize,
) -> Result<Retrieval3D> {
    if heatmap.data().iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("heatmap".into()));
    }
    if heatmap.width() == 0 || heatmap.height() == 0 {
        return Err(CoreError::Shape("empty heatmap".into()));
    }
    let g = GazeVector::normalize(*gaze)?.vec();
    let (row, col) = heatmap.argmax();
    let center = cell_to_pixel(row, col, heatmap.dims(), cloud.width, cloud.height);
    let span = cloud.width.max(cloud.height);
    let mut r = window_radius;
    loop {
        if let Some((u, v, _)) = best_in_window(cloud, eye, &g, center, r) {
            let p = cloud.point(u, v);
            return Ok(Retrieval3D {
                refined_gaze: GazeVector::normalize(p - eye)?,
                target_3d: p,
                target_2d: (u, v),
            });
        }
        if r >= span {
            return Err(CoreError::NoTarget);
        }
        r = (r * 2).max(1);
    }
}
