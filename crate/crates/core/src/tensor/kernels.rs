//! Raw numeric kernels behind the graph operations. Everything here works on
//! flat row-major slices for a single image (batch of one).

/// `c = a * b + beta * c` for row-major `a: m x k`, `b: k x n`, `c: m x n`.
/// `trans_a` / `trans_b` read the stored operand transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe exactly the checked slice extents above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a sliding k x k window over a `channels x height x width` image.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    /// Returns `None` if the output extent is not an exact integer.
    pub fn new(channels: usize, height: usize, width: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        let span_h = (height + 2 * pad).checked_sub(k)?;
        let span_w = (width + 2 * pad).checked_sub(k)?;
        if stride == 0 || span_h % stride != 0 || span_w % stride != 0 {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            k,
            stride,
            pad,
            out_h: span_h / stride + 1,
            out_w: span_w / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfold `x` into a `(C*k*k) x (out_h*out_w)` matrix; padding reads as zero.
pub(crate) fn im2col(x: &[f64], win: &Window) -> Vec<f64> {
    let p = win.positions();
    let mut cols = vec![0.0; win.rows() * p];
    for c in 0..win.channels {
        let plane = &x[c * win.height * win.width..(c + 1) * win.height * win.width];
        for ky in 0..win.k {
            for kx in 0..win.k {
                let row = (c * win.k + ky) * win.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..win.out_h {
                    let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                    if iy < 0 || iy >= win.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * win.width..(iy as usize + 1) * win.width];
                    let drow = &mut dst[oy * win.out_w..(oy + 1) * win.out_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                        if ix >= 0 && ix < win.width as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add the column matrix back onto an image.
pub(crate) fn col2im(cols: &[f64], win: &Window) -> Vec<f64> {
    let p = win.positions();
    let mut x = vec![0.0; win.channels * win.height * win.width];
    for c in 0..win.channels {
        let plane = &mut x[c * win.height * win.width..(c + 1) * win.height * win.width];
        for ky in 0..win.k {
            for kx in 0..win.k {
                let row = (c * win.k + ky) * win.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..win.out_h {
                    let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                    if iy < 0 || iy >= win.height as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * win.width..(iy as usize + 1) * win.width];
                    let srow = &src[oy * win.out_w..(oy + 1) * win.out_w];
                    for (ox, s) in srow.iter().enumerate() {
                        let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                        if ix >= 0 && ix < win.width as isize {
                            drow[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn add_channel_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

pub(crate) fn channel_sums(grad: &[f64], plane: usize) -> Vec<f64> {
    grad.chunks(plane).map(|c| c.iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = vec![0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, vec![19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, vec![26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, vec![17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn window_rejects_fractional_extent() {
        assert!(Window::new(1, 5, 5, 2, 2, 0).is_none());
        let w = Window::new(1, 4, 4, 2, 2, 0).unwrap();
        assert_eq!((w.out_h, w.out_w), (2, 2));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let win = Window::new(2, 5, 4, 3, 1, 1).unwrap();
        let x: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..win.rows() * win.positions()).map(|i| ((i * 3) % 13) as f64 - 6.0).collect();
        let lhs: f64 = im2col(&x, &win).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, &win)).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
