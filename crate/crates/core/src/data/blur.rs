//! Gaussian blurring of the head region.

use log::warn;

use super::image::{BoundingBox, SceneImage};

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Replaces the pixels strictly inside `head_box` with a separable Gaussian
/// blur of the box contents (sigma = longer box side / 8, truncated at 3
/// sigma, mirrored at the box edges). Everything outside is copied verbatim.
pub fn blur_face(scene: &SceneImage, head_box: &BoundingBox) -> SceneImage {
    let mut out = scene.clone();
    let Some(((u0, u1), (v0, v1))) = head_box.interior_pixels(scene.width(), scene.height()) else {
        warn!("head box {head_box:?} covers no pixel; face blur skipped");
        return out;
    };
    let sigma = head_box.width().max(head_box.height()) / 8.0;
    if !(sigma > 0.0) {
        warn!("head box {head_box:?} has zero area; face blur skipped");
        return out;
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (bw, bh) = (u1 - u0 + 1, v1 - v0 + 1);
    let mut region = vec![0.0f64; bw * bh];
    let mut tmp = vec![0.0f64; bw * bh];
    for c in 0..3 {
        for y in 0..bh {
            for x in 0..bw {
                region[y * bw + x] = scene.get(c, u0 + x, v0 + y) as f64;
            }
        }
        for y in 0..bh {
            let row = &region[y * bw..(y + 1) * bw];
            for x in 0..bw {
                tmp[y * bw + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * row[reflect(x as isize + t as isize - r, bw)])
                    .sum();
            }
        }
        for y in 0..bh {
            for x in 0..bw {
                let s: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * tmp[reflect(y as isize + t as isize - r, bh) * bw + x])
                    .sum();
                out.set(c, u0 + x, v0 + y, s as f32);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlurAudit {
    pub interior_changed: usize,
    pub exterior_changed: usize,
}

impl BlurAudit {
    /// Interior altered somewhere and exterior bit-identical.
    pub fn passed(&self) -> bool {
        self.interior_changed > 0 && self.exterior_changed == 0
    }
}

/// Counts pixels that differ between `original` and `blurred` inside and
/// outside the box. Sizes must match.
pub fn audit_blur(original: &SceneImage, blurred: &SceneImage, head_box: &BoundingBox) -> BlurAudit {
    assert_eq!((original.width(), original.height()), (blurred.width(), blurred.height()));
    let inside = head_box.interior_pixels(original.width(), original.height());
    let mut audit = BlurAudit {
        interior_changed: 0,
        exterior_changed: 0,
    };
    for v in 0..original.height() {
        for u in 0..original.width() {
            let a = original.pixel(u, v).map(f32::to_bits);
            let b = blurred.pixel(u, v).map(f32::to_bits);
            if a == b {
                continue;
            }
            let is_in = inside.is_some_and(|((u0, u1), (v0, v1))| (u0..=u1).contains(&u) && (v0..=v1).contains(&v));
            if is_in {
                audit.interior_changed += 1;
            } else {
                audit.exterior_changed += 1;
            }
        }
    }
    audit
}
