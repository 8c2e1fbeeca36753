//! Losses, Gaussian heatmap targets and the four evaluation metrics.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{GazeVector, Vec3};
use crate::grid::Grid;

pub const HEATMAP_GRID: usize = 64;
pub const DEFAULT_SIGMA: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_heat: f64,
    pub w_gaze: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_heat: 10000.0,
            w_gaze: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_heat >= 0.0 && self.w_gaze >= 0.0 && self.w_heat.is_finite() && self.w_gaze.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "loss weights must be finite and non-negative, got ({}, {})",
                self.w_heat, self.w_gaze
            )));
        }
        Ok(())
    }
}

fn unit(v: &Vec3) -> Result<Vec3> {
    GazeVector::normalize(*v).map(|g| g.vec())
}

/// `1 - <gt, pred>` after normalizing both inputs.
pub fn gaze_loss(gt: &Vec3, pred: &Vec3) -> Result<f64> {
    Ok(1.0 - unit(gt)?.dot(&unit(pred)?))
}

pub fn heatmap_loss(pred: &Grid<f64>, gt: &Grid<f64>) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(CoreError::Shape(format!("heatmap {:?} vs target {:?}", pred.dims(), gt.dims())));
    }
    let n = pred.data().len().max(1) as f64;
    Ok(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

pub fn total_loss(l_heat: f64, l_gaze: f64, w: &LossWeights) -> f64 {
    w.w_heat * l_heat + w.w_gaze * l_gaze
}

/// Grid cell `(col, row)` containing a normalized image coordinate.
pub fn normalized_to_cell(x: f64, y: f64, size: usize) -> (i64, i64) {
    ((x * size as f64).floor() as i64, (y * size as f64).floor() as i64)
}

/// Unnormalized Gaussian with peak 1 at cell `(col, row)`. Targets off the
/// grid are clamped to the nearest border cell with a warning.
pub fn gaussian_gt_heatmap(col: i64, row: i64, size: usize, sigma: f64) -> Result<Grid<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) || size == 0 {
        return Err(CoreError::Invalid(format!("gaussian heatmap needs sigma > 0 and size > 0, got {sigma}, {size}")));
    }
    let last = size as i64 - 1;
    let (tx, ty) = (col.clamp(0, last), row.clamp(0, last));
    if (tx, ty) != (col, row) {
        warn!("heatmap target ({col}, {row}) outside the {size}x{size} grid; clamped to ({tx}, {ty})");
    }
    let k = 1.0 / (2.0 * sigma * sigma);
    Ok(Grid::from_fn(size, size, |i, j| {
        let d2 = ((i as i64 - ty).pow(2) + (j as i64 - tx).pow(2)) as f64;
        (-d2 * k).exp()
    }))
}

pub fn metric_dist3d(pred: &Vec3, gt: &Vec3) -> f64 {
    (pred - gt).norm()
}

/// Angle in degrees between two directions, normalized internally.
pub fn metric_angle(gt: &Vec3, pred: &Vec3) -> Result<f64> {
    let c = unit(gt)?.dot(&unit(pred)?).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Rank AUC of the ground-truth pixel against every other pixel of the
/// heatmap after bilinear resizing to the scene size. Ties count half.
pub fn metric_auc(heatmap: &Grid<f64>, gt_pixel: (usize, usize), scene: (usize, usize)) -> Result<f64> {
    let (w, h) = scene;
    if gt_pixel.0 >= w || gt_pixel.1 >= h {
        return Err(CoreError::Invalid(format!("target pixel {gt_pixel:?} outside {w}x{h} scene")));
    }
    if w * h < 2 {
        return Err(CoreError::Invalid("AUC needs at least one negative pixel".into()));
    }
    let r = heatmap.resize_bilinear(w, h);
    let s = *r.get(gt_pixel.1, gt_pixel.0);
    let (mut below, mut ties) = (0usize, 0usize);
    for &v in r.data() {
        if v < s {
            below += 1;
        } else if v == s {
            ties += 1;
        }
    }
    // the positive itself is one of the ties
    let negatives = (w * h - 1) as f64;
    Ok((below as f64 + 0.5 * (ties - 1) as f64) / negatives)
}

/// Normalized center of heatmap cell `(row, col)` as `(x, y)`.
pub fn cell_center(row: usize, col: usize, dims: (usize, usize)) -> (f64, f64) {
    ((col as f64 + 0.5) / dims.0 as f64, (row as f64 + 0.5) / dims.1 as f64)
}

/// Distance between the heatmap peak (cell center) and the target, both in
/// unit image coordinates.
pub fn metric_dist2d(heatmap: &Grid<f64>, gt: (f64, f64)) -> f64 {
    let (row, col) = heatmap.argmax();
    let (x, y) = cell_center(row, col, heatmap.dims());
    (x - gt.0).hypot(y - gt.1)
}

/// The four evaluation metrics, serialized as one `key=value` line in the
/// order `dist_3d angle_error auc dist_2d`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub dist_3d: f64,
    pub angle_error: f64,
    pub auc: f64,
    pub dist_2d: f64,
}

impl MetricReport {
    pub const FIELDS: [&'static str; 4] = ["dist_3d", "angle_error", "auc", "dist_2d"];

    pub fn values(&self) -> [f64; 4] {
        [self.dist_3d, self.angle_error, self.auc, self.dist_2d]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("metric report".into()));
        }
        if !(0.0..=1.0).contains(&self.auc) {
            return Err(CoreError::Invalid(format!("auc {} outside [0, 1]", self.auc)));
        }
        if !(0.0..=180.0).contains(&self.angle_error) {
            return Err(CoreError::Invalid(format!("angle error {} outside [0, 180]", self.angle_error)));
        }
        if self.dist_3d < 0.0 || self.dist_2d < 0.0 {
            return Err(CoreError::Invalid("negative distance".into()));
        }
        Ok(())
    }

    /// Field-wise mean; `None` for an empty slice.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mut acc = [0.0; 4];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        Some(MetricReport {
            dist_3d: acc[0] / n,
            angle_error: acc[1] / n,
            auc: acc[2] / n,
            dist_2d: acc[3] / n,
        })
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{:?}` on f64 prints the shortest string that parses back exactly
        write!(
            f,
            "dist_3d={:?} angle_error={:?} auc={:?} dist_2d={:?}",
            self.dist_3d, self.angle_error, self.auc, self.dist_2d
        )
    }
}

impl FromStr for MetricReport {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let err = |msg: String| CoreError::Parse { line: 1, msg };
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (i, (field, key)) in fields.iter().zip(Self::FIELDS).enumerate() {
            let (k, val) = field.split_once('=').ok_or_else(|| err(format!("`{field}` is not key=value")))?;
            if k != key {
                return Err(err(format!("expected key `{key}`, found `{k}`")));
            }
            v[i] = val.parse().map_err(|e| err(format!("`{val}`: {e}")))?;
        }
        let r = MetricReport {
            dist_3d: v[0],
            angle_error: v[1],
            auc: v[2],
            dist_2d: v[3],
        };
        r.validate()?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaze_loss_examples() {
        let x = Vec3::x();
        assert_eq!(gaze_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(gaze_loss(&x, &-x).unwrap(), 2.0);
        assert_eq!(gaze_loss(&x, &Vec3::y()).unwrap(), 1.0);
        assert_eq!(gaze_loss(&(x * 3.0), &x).unwrap(), 0.0);
        assert!(gaze_loss(&Vec3::zeros(), &x).is_err());
    }

    #[test]
    fn heatmap_loss_examples() {
        let gt = gaussian_gt_heatmap(20, 30, 64, 3.0).unwrap();
        assert_eq!(heatmap_loss(&gt, &gt).unwrap(), 0.0);
        let shifted = gt.map(|v| v + 0.1);
        assert!((heatmap_loss(&shifted, &gt).unwrap() - 0.01).abs() < 1e-15);
        let zeros = Grid::filled(64, 64, 0.0);
        let mut sq = 0.0;
        for v in gt.data() {
            sq += v * v;
        }
        assert!((heatmap_loss(&zeros, &gt).unwrap() - sq / 4096.0).abs() < 1e-15);
        assert!(heatmap_loss(&Grid::filled(8, 8, 0.0), &gt).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert!((total_loss(0.001, 0.1, &w) - 11.0).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, &w), 0.0);
        let zero = LossWeights { w_heat: 0.0, w_gaze: 0.0 };
        assert_eq!(total_loss(3.0, 1.5, &zero), 0.0);
        assert!(LossWeights { w_heat: -1.0, w_gaze: 0.0 }.validate().is_err());
    }

    #[test]
    fn gaussian_examples() {
        let g = gaussian_gt_heatmap(10, 40, 64, 3.0).unwrap();
        assert_eq!(*g.get(40, 10), 1.0);
        assert_eq!(g.argmax(), (40, 10));
        assert!((g.get(43, 10) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.get(40, 13) - 0.6065306597126334).abs() < 1e-15);
        for d in 1..10 {
            assert_eq!(g.get(40 - d, 10), g.get(40 + d, 10));
            assert_eq!(g.get(40, 10 - d), g.get(40, 10 + d));
        }
        let clamped = gaussian_gt_heatmap(-5, 99, 64, 3.0).unwrap();
        assert_eq!(clamped, gaussian_gt_heatmap(0, 63, 64, 3.0).unwrap());
        assert!(gaussian_gt_heatmap(0, 0, 64, 0.0).is_err());
    }

    #[test]
    fn distance_and_angle_examples() {
        assert_eq!(metric_dist3d(&Vec3::zeros(), &Vec3::zeros()), 0.0);
        assert_eq!(metric_dist3d(&Vec3::zeros(), &Vec3::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(metric_angle(&Vec3::x(), &Vec3::x()).unwrap(), 0.0);
        assert!((metric_angle(&Vec3::x(), &Vec3::y()).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(metric_angle(&Vec3::x(), &-Vec3::x()).unwrap(), 180.0);
        assert!(matches!(metric_angle(&Vec3::zeros(), &Vec3::x()), Err(CoreError::ZeroNorm)));
    }

    #[test]
    fn auc_examples() {
        let mut h = Grid::filled(64, 64, 0.1);
        *h.get_mut(5, 7) = 0.9;
        assert_eq!(metric_auc(&h, (7, 5), (64, 64)).unwrap(), 1.0);
        assert_eq!(metric_auc(&Grid::filled(64, 64, 0.3), (3, 3), (224, 224)).unwrap(), 0.5);
        assert!(metric_auc(&h, (64, 0), (64, 64)).is_err());
    }

    #[test]
    fn dist2d_examples() {
        let mut h = Grid::filled(64, 64, 0.0);
        *h.get_mut(10, 20) = 1.0;
        let (x, y) = cell_center(10, 20, (64, 64));
        assert_eq!(metric_dist2d(&h, (x, y)), 0.0);
        assert!(metric_dist2d(&h, (20.2 / 64.0, 10.9 / 64.0)) <= 2f64.sqrt() / 128.0);
        let mut corner = Grid::filled(64, 64, 0.0);
        *corner.get_mut(0, 0) = 1.0;
        let want = 2f64.sqrt() * (1.0 - 0.5 / 64.0);
        assert!((metric_dist2d(&corner, (1.0, 1.0)) - want).abs() < 1e-15);
        let uniform = Grid::filled(64, 64, 0.5);
        let want = (0.5 / 64.0 - 0.5f64).hypot(0.5 / 64.0 - 0.25);
        assert!((metric_dist2d(&uniform, (0.5, 0.25)) - want).abs() < 1e-15);
    }

    #[test]
    fn metric_report_round_trips_and_rejects_reordering() {
        let r = MetricReport {
            dist_3d: 0.284,
            angle_error: 15.9,
            auc: 0.983,
            dist_2d: 1.0 / 3.0,
        };
        let s = r.to_string();
        assert!(s.starts_with("dist_3d=0.284 angle_error=15.9 auc=0.983 dist_2d="));
        assert_eq!(s.parse::<MetricReport>().unwrap(), r);
        assert!("angle_error=1 dist_3d=1 auc=0.5 dist_2d=0".parse::<MetricReport>().is_err());
        assert!("dist_3d=1 angle_error=1 auc=1.5 dist_2d=0".parse::<MetricReport>().is_err());
        assert!("dist_3d=1 angle_error=1 auc=0.5".parse::<MetricReport>().is_err());
    }
}
