//! Planar RGB images, boxes, head masks and PNG I/O.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::DepthMap;
use crate::grid::Grid;

/// RGB in `[0, 1]`, stored as three row-major planes.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl SceneImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(CoreError::Shape(format!("{} values for a {width}x{height} RGB image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, width * height));
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, u: usize, v: usize) -> f32 {
        self.data[(c * self.height + v) * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, c: usize, u: usize, v: usize, value: f32) {
        self.data[(c * self.height + v) * self.width + u] = value;
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        [self.get(0, u, v), self.get(1, u, v), self.get(2, u, v)]
    }

    pub fn set_pixel(&mut self, u: usize, v: usize, rgb: [f32; 3]) {
        for (c, x) in rgb.into_iter().enumerate() {
            self.set(c, u, v, x);
        }
    }

    /// Bilinear resampling of every channel (pixel-center aligned).
    pub fn resized(&self, width: usize, height: usize) -> SceneImage {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            let g = Grid::from_vec(self.width, self.height, self.plane(c).iter().map(|v| *v as f64).collect())
                .expect("plane size");
            data.extend(g.resize_bilinear(width, height).data().iter().map(|v| *v as f32));
        }
        SceneImage { width, height, data }
    }

    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |u, v| {
            let p = self.pixel(u as usize, v as usize);
            Rgb(p.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }

    pub fn from_rgb8(img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> SceneImage {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = SceneImage::filled(w, h, [0.0; 3]);
        for (u, v, p) in img.enumerate_pixels() {
            out.set_pixel(u as usize, v as usize, p.0.map(|x| x as f32 / 255.0));
        }
        out
    }
}

pub fn load_scene(path: &Path) -> Result<SceneImage> {
    let img = image::open(path).map_err(|source| CoreError::Image {
        path: path.display().to_string(),
        source,
    })?;
    Ok(SceneImage::from_rgb8(&img.to_rgb8()))
}

pub fn save_scene(img: &SceneImage, path: &Path) -> Result<()> {
    img.to_rgb8().save(path).map_err(|source| CoreError::Image {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a 16-bit single-channel PNG of millimeters.
pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let img = image::open(path).map_err(|source| CoreError::Image {
        path: path.display().to_string(),
        source,
    })?;
    let img = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(CoreError::Invalid(format!(
                "{}: depth must be a 16-bit grayscale image, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.into_raw().into_iter().map(|mm| mm as f64 / 1000.0).collect();
    DepthMap::new(Grid::from_vec(w, h, values).expect("raw buffer size"))
}

/// Writes depth as 16-bit millimeters; values are rounded and saturate at 65.535 m.
pub fn save_depth(depth: &DepthMap, path: &Path) -> Result<()> {
    let raw: Vec<u16> = depth.grid().data().iter().map(|m| (m * 1000.0).round().clamp(0.0, 65535.0) as u16).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw).expect("raw buffer size");
    img.save(path).map_err(|source| CoreError::Image {
        path: path.display().to_string(),
        source,
    })
}

/// Rounds depth to whole millimeters, matching what [`save_depth`] stores.
pub fn quantize_depth_mm(m: f64) -> f64 {
    (m * 1000.0).round().clamp(0.0, 65535.0) / 1000.0
}

/// Axis-aligned rectangle in pixel-edge coordinates: the image spans
/// `[0, W] x [0, H]` and pixel `(u, v)` covers `[u, u+1) x [v, v+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(a: [f64; 4]) -> Self {
        Self {
            x0: a[0],
            y0: a[1],
            x1: a[2],
            y1: a[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn is_finite(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.is_finite()
            && 0.0 <= self.x0
            && self.x0 <= self.x1
            && self.x1 <= width as f64
            && 0.0 <= self.y0
            && self.y0 <= self.y1
            && self.y1 <= height as f64
    }

    pub fn clipped(&self, width: usize, height: usize) -> BoundingBox {
        let cx = |x: f64| x.clamp(0.0, width as f64);
        let cy = |y: f64| y.clamp(0.0, height as f64);
        let (x0, x1) = (cx(self.x0), cx(self.x1));
        let (y0, y1) = (cy(self.y0), cy(self.y1));
        BoundingBox {
            x0,
            y0,
            x1: x1.max(x0),
            y1: y1.max(y0),
        }
    }

    /// Inclusive pixel ranges `(u0..=u1, v0..=v1)` of pixels whose centers lie
    /// strictly inside the box, or `None` when no pixel qualifies.
    pub fn interior_pixels(&self, width: usize, height: usize) -> Option<((usize, usize), (usize, usize))> {
        let range = |a: f64, b: f64, n: usize| -> Option<(usize, usize)> {
            // center c + 0.5 strictly inside (a, b)
            let lo = (a - 0.5).floor() + 1.0;
            let hi = (b - 0.5).ceil() - 1.0;
            let lo = lo.max(0.0);
            let hi = hi.min(n as f64 - 1.0);
            (lo <= hi).then_some((lo as usize, hi as usize))
        };
        Some((range(self.x0, self.x1, width)?, range(self.y0, self.y1, height)?))
    }

    /// The box mapped into an image resampled from `from` to `to` size.
    pub fn rescaled(&self, from: (usize, usize), to: (usize, usize)) -> BoundingBox {
        let sx = to.0 as f64 / from.0 as f64;
        let sy = to.1 as f64 / from.1 as f64;
        BoundingBox {
            x0: self.x0 * sx,
            y0: self.y0 * sy,
            x1: self.x1 * sx,
            y1: self.y1 * sy,
        }
    }
}

/// Binary `size x size` mask of the box interior for an image of `scene` size.
pub fn head_mask(head_box: &BoundingBox, scene: (usize, usize), size: usize) -> Grid<f64> {
    let mut m = Grid::filled(size, size, 0.0);
    if let Some(((u0, u1), (v0, v1))) = head_box.rescaled(scene, (size, size)).interior_pixels(size, size) {
        for v in v0..=v1 {
            for u in u0..=u1 {
                *m.get_mut(v, u) = 1.0;
            }
        }
    }
    m
}
