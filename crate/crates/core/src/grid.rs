//! Row-major 2D grids.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// `None` when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Grid<f64> {
    /// `(row, col)` of the first maximum in row-major order. NaN cells are
    /// skipped; an all-NaN or empty grid yields `(0, 0)`.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut idx = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > best {
                best = v;
                idx = i;
            }
        }
        if self.width == 0 {
            return (0, 0);
        }
        (idx / self.width, idx % self.width)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Bilinear resampling with pixel-center alignment and edge clamping;
    /// same-size resampling is the identity.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Grid<f64> {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let sample = |pos: f64, n: usize| -> (usize, usize, f64) {
            let p = pos.clamp(0.0, (n - 1) as f64);
            let i0 = p.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, p - i0 as f64)
        };
        Grid::from_fn(width, height, |r, c| {
            let (y0, y1, fy) = sample((r as f64 + 0.5) * sy - 0.5, self.height);
            let (x0, x1, fx) = sample((c as f64 + 0.5) * sx - 0.5, self.width);
            let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
            let bottom = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_takes_the_first_maximum_in_scan_order() {
        let g = Grid::from_vec(3, 2, vec![0.0, 5.0, 1.0, 5.0, 2.0, 5.0]).unwrap();
        assert_eq!(g.argmax(), (0, 1));
        let flat = Grid::filled(4, 4, 0.25);
        assert_eq!(flat.argmax(), (0, 0));
    }

    #[test]
    fn same_size_resize_is_identity_and_constants_stay_constant() {
        let g = Grid::from_fn(5, 4, |r, c| (r * 5 + c) as f64);
        assert_eq!(g.resize_bilinear(5, 4), g);
        let c = Grid::filled(8, 8, 0.7).resize_bilinear(31, 17);
        assert!(c.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn upsampling_a_linear_ramp_stays_linear_in_the_interior() {
        let g = Grid::from_fn(4, 1, |_, c| c as f64);
        let up = g.resize_bilinear(8, 1);
        // dst x maps to src (x + 0.5) / 2 - 0.5
        for c in 1..7 {
            let want = (c as f64 + 0.5) / 2.0 - 0.5;
            assert!((up.get(0, c) - want).abs() < 1e-12);
        }
    }
}
