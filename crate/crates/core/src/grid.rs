//! Dense row-major 2D grids: real images and complex optical fields.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real-valued `rows x cols` grid. Used for intensities, phase maps and height fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Min-max rescale into `[0, 1]`. A constant image maps to all ones.
    pub fn normalized(&self) -> Self {
        let (lo, hi) = (self.min(), self.max());
        let range = hi - lo;
        if range <= 0.0 || !range.is_finite() {
            return Self::filled(self.rows, self.cols, 1.0);
        }
        self.map(|v| (v - lo) / range)
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "grid shapes differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Mean squared difference between two equally shaped grids.
    pub fn mse(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(s / self.data.len() as f64)
    }

    /// Centre `self` inside a larger grid filled with `fill`.
    pub fn embed(&self, rows: usize, cols: usize, fill: f64) -> Result<Self> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::Dimension(format!(
                "cannot embed {:?} into {rows}x{cols}",
                self.shape()
            )));
        }
        let (r0, c0) = ((rows - self.rows) / 2, (cols - self.cols) / 2);
        let mut out = Self::filled(rows, cols, fill);
        for r in 0..self.rows {
            let dst = (r + r0) * cols + c0;
            out.data[dst..dst + self.cols].copy_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        Ok(out)
    }
}

/// Complex `rows x cols` field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField2D {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexField2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} field needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Real grid promoted to a complex field with zero imaginary part.
    pub fn from_real(img: &Image2D) -> Self {
        Self {
            rows: img.rows(),
            cols: img.cols(),
            data: img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    /// Sum of squared moduli.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn real(&self) -> Image2D {
        Image2D { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.re).collect() }
    }

    pub fn imag(&self) -> Image2D {
        Image2D { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.im).collect() }
    }

    pub fn arg(&self) -> Image2D {
        Image2D { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.arg()).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_constant_is_ones() {
        let img = Image2D::filled(3, 4, 7.0);
        assert!(img.normalized().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn embed_centres() {
        let img = Image2D::filled(2, 2, 1.0);
        let big = img.embed(4, 4, 0.0).unwrap();
        assert_eq!(big.get(1, 1), 1.0);
        assert_eq!(big.get(0, 0), 0.0);
        assert_eq!(big.data().iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Image2D::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
