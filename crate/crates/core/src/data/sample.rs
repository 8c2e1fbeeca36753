use crate::error::{CoreError, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, GazeVector, Vec3};
use crate::grid::Grid;
use crate::pose::Keypoints2D;

use super::image::{head_mask, BoundingBox, SceneImage};

/// One annotated frame. 2D points (`eye_2d`, keypoints) use pixel-center
/// coordinates; `head_box` uses pixel-edge coordinates; `gt_target_2d` is
/// normalized to `[0, 1]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GazeSample {
    pub id: String,
    pub scene: SceneImage,
    pub depth: DepthMap,
    pub intrinsics: CameraIntrinsics,
    pub keypoints: Keypoints2D,
    pub head_box: BoundingBox,
    pub eye_2d: [f64; 2],
    pub eye_3d: Vec3,
    pub gt_gaze: GazeVector,
    pub gt_target_2d: [f64; 2],
    pub gt_target_3d: Vec3,
}

impl GazeSample {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn head_mask(&self, size: usize) -> Grid<f64> {
        head_mask(&self.head_box, (self.width(), self.height()), size)
    }

    /// Pixel `(u, v)` containing the normalized 2D target.
    pub fn target_pixel(&self) -> (usize, usize) {
        normalized_to_pixel(self.gt_target_2d, self.width(), self.height())
    }

    pub fn validate(&self) -> Result<()> {
        let field = |field: &'static str, msg: String| CoreError::Record {
            record: self.id.clone(),
            field,
            msg,
        };
        self.intrinsics.validate().map_err(|e| field("intrinsics", e.to_string()))?;
        let dims = (self.width(), self.height());
        if (self.scene.width(), self.scene.height()) != dims {
            return Err(field("scene", format!("{}x{} image, intrinsics say {dims:?}", self.scene.width(), self.scene.height())));
        }
        if (self.depth.width(), self.depth.height()) != dims {
            return Err(field("depth", format!("{}x{} map, intrinsics say {dims:?}", self.depth.width(), self.depth.height())));
        }
        check_annotations(
            &self.id,
            dims,
            &self.head_box,
            &self.eye_3d,
            &self.gt_gaze.vec(),
            self.gt_target_2d,
            &[("eye_2d", &self.eye_2d[..]), ("gt_target_3d", self.gt_target_3d.as_slice())],
        )
    }
}

pub fn normalized_to_pixel(p: [f64; 2], width: usize, height: usize) -> (usize, usize) {
    let u = ((p[0] * width as f64).floor().max(0.0) as usize).min(width - 1);
    let v = ((p[1] * height as f64).floor().max(0.0) as usize).min(height - 1);
    (u, v)
}

pub fn pixel_to_normalized(u: usize, v: usize, width: usize, height: usize) -> [f64; 2] {
    [(u as f64 + 0.5) / width as f64, (v as f64 + 0.5) / height as f64]
}

/// Invariant checks shared by manifest records and loaded samples.
pub(crate) fn check_annotations(
    id: &str,
    dims: (usize, usize),
    head_box: &BoundingBox,
    eye_3d: &Vec3,
    gaze: &Vec3,
    target_2d: [f64; 2],
    finite: &[(&'static str, &[f64])],
) -> Result<()> {
    let err = |field: &'static str, msg: String| {
        Err(CoreError::Record {
            record: id.to_string(),
            field,
            msg,
        })
    };
    for (name, values) in finite {
        if values.iter().any(|v| !v.is_finite()) {
            return err(name, "non-finite value".into());
        }
    }
    let n = gaze.norm();
    if !n.is_finite() || (n - 1.0).abs() > crate::geometry::UNIT_TOL {
        return err("gt_gaze", format!("norm {n} is not 1"));
    }
    if GazeVector::normalize(*gaze).is_err() {
        return err("gt_gaze", "zero vector".into());
    }
    if !(eye_3d.z > 0.0 && eye_3d.iter().all(|v| v.is_finite())) {
        return err("eye_3d", format!("z = {} must be positive", eye_3d.z));
    }
    if !head_box.within(dims.0, dims.1) {
        return err("head_box", format!("{:?} is not inside the {}x{} image", <[f64; 4]>::from(*head_box), dims.0, dims.1));
    }
    if !target_2d.iter().all(|v| (0.0..=1.0).contains(v)) {
        return err("gt_target_2d", format!("{target_2d:?} is outside [0, 1]^2"));
    }
    Ok(())
}
