//! Two-dimensional DFT on [`ComplexField2D`] for arbitrary grid sizes.
//!
//! Row and column passes are delegated to `rustfft`, which plans mixed-radix
//! kernels for smooth sizes (440 = 2^3 * 5 * 11) and Bluestein's algorithm for
//! large prime factors. Forward is unnormalised, inverse carries `1/(rows*cols)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::ComplexField2D;

/// Planned forward/inverse transforms for one grid shape.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, field: &mut ComplexField2D) {
        self.run(field, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, field: &mut ComplexField2D) {
        self.run(field, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        field.data_mut().iter_mut().for_each(|z| *z *= scale);
    }

    fn run(&self, field: &mut ComplexField2D, rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(field.shape(), (self.rows, self.cols), "field shape does not match FFT plan");
        let (h, w) = (self.rows, self.cols);
        rows.process(field.data_mut());
        let mut t = vec![Complex64::new(0.0, 0.0); h * w];
        transpose(field.data(), &mut t, h, w);
        cols.process(&mut t);
        transpose(&t, field.data_mut(), w, h);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

pub fn fft2(field: &ComplexField2D) -> ComplexField2D {
    let mut out = field.clone();
    Fft2::new(field.rows(), field.cols()).forward(&mut out);
    out
}

pub fn ifft2(field: &ComplexField2D) -> ComplexField2D {
    let mut out = field.clone();
    Fft2::new(field.rows(), field.cols()).inverse(&mut out);
    out
}

/// Sample frequencies in standard FFT order (cycles per unit length) for `n`
/// samples spaced `pitch` apart.
pub fn fft_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let span = n as f64 * pitch;
    (0..n)
        .map(|k| {
            let signed = if k < n.div_ceil(2) { k as isize } else { k as isize - n as isize };
            signed as f64 / span
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(rows: usize, cols: usize, seed: u64) -> ComplexField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField2D::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    /// O(N^4) double-sum DFT.
    fn naive_dft(x: &ComplexField2D) -> ComplexField2D {
        let (h, w) = x.shape();
        ComplexField2D::from_fn(h, w, |u, v| {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let ang = -2.0 * PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    acc += x.get(r, c) * Complex64::from_polar(1.0, ang);
                }
            }
            acc
        })
    }

    #[test]
    fn ones_2x2_dc_only() {
        let out = fft2(&ComplexField2D::filled(2, 2, Complex64::new(1.0, 0.0)));
        assert_eq!(out.get(0, 0), Complex64::new(4.0, 0.0));
        for (r, c) in [(0, 1), (1, 0), (1, 1)] {
            assert!(out.get(r, c).norm() < 1e-15);
        }
    }

    #[test]
    fn round_trip_13x7() {
        let x = random_field(13, 7, 11);
        assert!(ifft2(&fft2(&x)).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn matches_naive_dft_8x8() {
        let x = random_field(8, 8, 12);
        assert!(fft2(&x).max_abs_diff(&naive_dft(&x)) < 1e-10);
    }

    #[test]
    fn handles_440_grid() {
        let x = random_field(440, 440, 13);
        assert!(ifft2(&fft2(&x)).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn frequency_layout() {
        let f = fft_frequencies(4, 0.5);
        assert_eq!(f, vec![0.0, 0.5, -1.0, -0.5]);
        let g = fft_frequencies(5, 1.0);
        assert_eq!(g, vec![0.0, 0.2, 0.4, -0.4, -0.2]);
    }
}
