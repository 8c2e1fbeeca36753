//! im2col / col2im for 2D convolutions on single images (`C x H x W`).

/// Geometry of a convolution from a `c x h x w` image to `oh x ow` outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if h + 2 * pad < k || w + 2 * pad < k || stride == 0 {
            return None;
        }
        Some(Self {
            c,
            h,
            w,
            kh: k,
            kw: k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1x1, stride-1, unpadded convolution needs no unfolding.
    /// Output rows per unfolding chunk, keeping a chunk around 256 KiB.
    pub fn chunk_rows(&self) -> usize {
        (32 * 1024 / (self.rows() * self.ow).max(1)).clamp(1, self.oh)
    }

    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output positions `[lo, hi)` whose tap at kernel offset `k` lands inside
    /// an input axis of length `size`.
    fn valid_out(&self, k: usize, outputs: usize, size: usize) -> (usize, usize) {
        // o * stride + k - pad in [0, size)
        let lo = self.pad.saturating_sub(k).div_ceil(self.stride);
        let hi = if size + self.pad > k {
            ((size + self.pad - k - 1) / self.stride + 1).min(outputs)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    #[inline]
    fn src(&self, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.stride + k).checked_sub(self.pad)?;
        Some(i)
    }
}

/// Unfolds `x` (`c*h*w`) into `cols` (`rows x cols`), zero-filling padding.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    im2col_rows(x, g, 0, g.oh, cols)
}

/// [`im2col`] restricted to output rows `[oy0, oy0 + count)`; `cols` is
/// `rows x (count * ow)`.
pub(crate) fn im2col_rows(x: &[f64], g: &ConvGeom, oy0: usize, count: usize, cols: &mut [f64]) {
    let l = count * g.ow;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let out = &mut cols[row * l..(row + 1) * l];
                let (lo, hi) = g.valid_out(kj, g.ow, g.w);
                for r in 0..count {
                    let dst = &mut out[r * g.ow..(r + 1) * g.ow];
                    match g.src(oy0 + r, ki).filter(|&iy| iy < g.h) {
                        Some(iy) if lo < hi => {
                            let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                            dst[..lo].fill(0.0);
                            dst[hi..].fill(0.0);
                            let first = lo * g.stride + kj - g.pad;
                            if g.stride == 1 {
                                dst[lo..hi].copy_from_slice(&src_row[first..first + hi - lo]);
                            } else {
                                for (d, s) in dst[lo..hi].iter_mut().zip(src_row[first..].iter().step_by(g.stride)) {
                                    *d = *s;
                                }
                            }
                        }
                        _ => dst.fill(0.0),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `x`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, x: &mut [f64]) {
    col2im_rows(cols, g, 0, g.oh, x)
}

/// Adjoint of [`im2col_rows`].
pub(crate) fn col2im_rows(cols: &[f64], g: &ConvGeom, oy0: usize, count: usize, x: &mut [f64]) {
    let l = count * g.ow;
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * l..(row + 1) * l];
                let (lo, hi) = g.valid_out(kj, g.ow, g.w);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for r in 0..count {
                    let Some(iy) = g.src(oy0 + r, ki).filter(|&iy| iy < g.h) else {
                        continue;
                    };
                    let dst_row = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let vals = &src[r * g.ow + lo..r * g.ow + hi];
                    for (d, v) in dst_row[first..].iter_mut().step_by(g.stride).zip(vals) {
                        *d += v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_sizes_follow_the_usual_formula() {
        let g = ConvGeom::new(3, 224, 224, 7, 2, 3).unwrap();
        assert_eq!((g.oh, g.ow), (112, 112));
        let g = ConvGeom::new(1, 56, 56, 3, 2, 1).unwrap();
        assert_eq!((g.oh, g.ow), (28, 28));
        assert!(ConvGeom::new(1, 2, 2, 7, 1, 0).is_none());
    }

    #[test]
    fn chunked_unfolding_matches_the_full_unfolding() {
        let g = ConvGeom::new(2, 11, 9, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..2 * 11 * 9).map(|i| i as f64).collect();
        let mut full = vec![0.0; g.rows() * g.cols()];
        im2col(&x, &g, &mut full);
        let mut chunk = vec![0.0; g.rows() * 2 * g.ow];
        im2col_rows(&x, &g, 3, 2, &mut chunk);
        for r in 0..g.rows() {
            assert_eq!(&chunk[r * 2 * g.ow..(r + 1) * 2 * g.ow], &full[r * g.cols() + 3 * g.ow..r * g.cols() + 5 * g.ow]);
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for arbitrary x, y.
        for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (7, 2, 3), (4, 2, 0), (1, 2, 0)] {
            let g = ConvGeom::new(2, 9, 8, k, s, p).unwrap();
            let x: Vec<f64> = (0..2 * 9 * 8).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
            let y: Vec<f64> = (0..g.rows() * g.cols()).map(|i| ((i * 5 % 11) as f64) * 0.5).collect();
            let mut cols = vec![0.0; g.rows() * g.cols()];
            im2col(&x, &g, &mut cols);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let mut back = vec![0.0; x.len()];
            col2im(&y, &g, &mut back);
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "k={k} s={s} p={p}: {lhs} vs {rhs}");
        }
    }
}

