//! Shape from shading: a brightness image defines the right-hand side of the
//! eikonal equation `|grad u| = f`, solved by Lax-Friedrichs fast sweeping,
//! and the resulting height field is triangulated.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::Image2D;

/// Brightness floor that keeps the slant finite.
pub const BRIGHTNESS_CLAMP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub u: Image2D,
    /// Grid spacing.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

/// Frontal-illumination slope `sqrt(1/I^2 - 1)` with `I` clamped to `[1e-3, 1]`.
pub fn brightness_to_speed(brightness: &Image2D) -> Image2D {
    brightness.map(|i| {
        let i = if i.is_nan() { BRIGHTNESS_CLAMP } else { i.clamp(BRIGHTNESS_CLAMP, 1.0) };
        (1.0 / (i * i) - 1.0).max(0.0).sqrt()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_sweeps: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub height: HeightField,
    /// Largest absolute change in each sweep (one entry per ordering pass).
    pub max_updates: Vec<f64>,
    pub converged: bool,
}

impl SweepResult {
    pub fn sweeps(&self) -> usize {
        self.max_updates.len()
    }

    /// Largest update within each full cycle of the four orderings.
    pub fn cycle_max_updates(&self) -> Vec<f64> {
        self.max_updates.chunks(4).map(|c| c.iter().cloned().fold(0.0, f64::max)).collect()
    }
}

/// Dirichlet mask covering the outer ring of the grid.
pub fn border_mask(rows: usize, cols: usize) -> Vec<bool> {
    (0..rows * cols).map(|k| k / cols == 0 || k / cols == rows - 1 || k % cols == 0 || k % cols == cols - 1).collect()
}

/// Solve `|grad u| = f` with `u = 0` on `dirichlet`, by Gauss-Seidel sweeps of the
/// Lax-Friedrichs scheme (viscosity 1 in both axes) over the four alternating
/// orderings. Each node only ever decreases from an upper bound. Non-Dirichlet
/// nodes on the grid edge are filled by linear extrapolation.
pub fn fast_sweep_eikonal(f: &Image2D, dirichlet: &[bool], h: f64, opts: &SweepOptions) -> Result<SweepResult> {
    let (rows, cols) = f.shape();
    if dirichlet.len() != rows * cols {
        return Err(Error::Dimension(format!("boundary mask has {} entries for a {rows}x{cols} grid", dirichlet.len())));
    }
    if !dirichlet.iter().any(|&b| b) {
        return Err(Error::Input("boundary set is empty".into()));
    }
    if let Some(v) = f.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Input(format!("eikonal speed must be finite and non-negative, found {v}")));
    }
    if !(h > 0.0) || rows < 3 || cols < 3 {
        return Err(Error::Config("sweeping needs h > 0 and at least 3x3 nodes".into()));
    }
    if opts.max_sweeps == 0 {
        return Err(Error::Config("max_sweeps must be at least 1".into()));
    }
    let (sx, sy) = (1.0, 1.0);
    let upper = f.max() * (rows + cols) as f64 * h;
    let mut u: Vec<f64> = dirichlet.iter().map(|&d| if d { 0.0 } else { upper }).collect();
    let fd = f.data();
    let idx = |r: usize, c: usize| r * cols + c;
    let on_edge = |r: usize, c: usize| r == 0 || c == 0 || r == rows - 1 || c == cols - 1;

    let mut max_updates = Vec::new();
    let mut converged = false;
    let orders = [(false, false), (true, false), (false, true), (true, true)];
    'outer: for sweep in 0..opts.max_sweeps {
        let (rev_c, rev_r) = orders[sweep % 4];
        let mut delta: f64 = 0.0;
        for ri in 1..rows - 1 {
            let r = if rev_r { rows - 1 - ri } else { ri };
            for ci in 1..cols - 1 {
                let c = if rev_c { cols - 1 - ci } else { ci };
                let k = idx(r, c);
                if dirichlet[k] {
                    continue;
                }
                let (ue, uw, un, us) = (u[k + 1], u[k - 1], u[k - cols], u[k + cols]);
                let (p, q) = ((ue - uw) / (2.0 * h), (us - un) / (2.0 * h));
                let ham = (p * p + q * q).sqrt();
                let cand = (fd[k] - ham + sx * (ue + uw) / (2.0 * h) + sy * (un + us) / (2.0 * h)) / (sx / h + sy / h);
                let new = cand.max(0.0).min(u[k]);
                delta = delta.max(u[k] - new);
                u[k] = new;
            }
        }
        // outflow edges
        for r in 0..rows {
            for c in 0..cols {
                let k = idx(r, c);
                if dirichlet[k] || !on_edge(r, c) {
                    continue;
                }
                let mut best = u[k];
                let mut extrap = |a: usize, b: usize| best = best.min((2.0 * u[a] - u[b]).max(u[b]));
                if c == 0 {
                    extrap(idx(r, 1), idx(r, 2));
                }
                if c == cols - 1 {
                    extrap(idx(r, cols - 2), idx(r, cols - 3));
                }
                if r == 0 {
                    extrap(idx(1, c), idx(2, c));
                }
                if r == rows - 1 {
                    extrap(idx(rows - 2, c), idx(rows - 3, c));
                }
                delta = delta.max(u[k] - best);
                u[k] = best;
            }
        }
        max_updates.push(delta);
        if delta < opts.tol {
            converged = true;
            break 'outer;
        }
    }
    Ok(SweepResult { height: HeightField { u: Image2D::from_vec(rows, cols, u)?, h }, max_updates, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurfaceOptions {
    pub sweep: SweepOptions,
}

/// Phase image to normalised height: scale to `[0,1]`, map brightness to
/// slope, sweep from a zero border, rescale heights to `[0,1]`.
pub fn reconstruct_surface(theta: &Image2D, opts: &SurfaceOptions) -> Result<SweepResult> {
    let (rows, cols) = theta.shape();
    if !theta.is_finite() {
        return Err(Error::Input("phase image contains non-finite values".into()));
    }
    let h = 1.0 / (rows.max(cols) - 1).max(1) as f64;
    if rows < 3 || cols < 3 {
        // every node sits on the boundary ring
        return Ok(SweepResult { height: HeightField { u: Image2D::zeros(rows, cols), h }, max_updates: Vec::new(), converged: true });
    }
    let f = brightness_to_speed(&theta.normalized());
    let mut res = fast_sweep_eikonal(&f, &border_mask(rows, cols), h, &opts.sweep)?;
    let top = res.height.u.max();
    if top > 0.0 {
        res.height.u = res.height.u.map(|v| v / top);
    }
    Ok(res)
}

/// Regular-grid triangulation, every cell split along its `(i,j)-(i+1,j+1)` diagonal.
pub fn mesh_from_height(height: &HeightField) -> Result<TriangleMesh> {
    let (rows, cols) = height.u.shape();
    if rows < 2 || cols < 2 {
        return Err(Error::Dimension(format!("meshing needs at least 2x2 samples, got {rows}x{cols}")));
    }
    let h = height.h;
    let vertices = (0..rows * cols).map(|k| [(k % cols) as f64 * h, (k / cols) as f64 * h, height.u.data()[k]]).collect();
    let mut triangles = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let (v00, v01, v10, v11) = (i * cols + j, i * cols + j + 1, (i + 1) * cols + j, (i + 1) * cols + j + 1);
            triangles.push([v00, v01, v11]);
            triangles.push([v00, v11, v10]);
        }
    }
    Ok(TriangleMesh { vertices, triangles })
}

impl TriangleMesh {
    /// Wavefront text: `v x y z` lines then 1-based `f i j k` lines.
    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        for [x, y, z] in &self.vertices {
            writeln!(w, "v {x} {y} {z}")?;
        }
        for [a, b, c] in &self.triangles {
            writeln!(w, "f {} {} {}", a + 1, b + 1, c + 1)?;
        }
        Ok(())
    }

    /// Unnormalised normal `(b - a) x (c - a)` of triangle `t`.
    pub fn normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let (u, v) = ([b[0] - a[0], b[1] - a[1], b[2] - a[2]], [c[0] - a[0], c[1] - a[1], c[2] - a[2]]);
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn square_distance(n: usize) -> (f64, SweepResult) {
        let h = 1.0 / (n - 1) as f64;
        let res = fast_sweep_eikonal(&Image2D::filled(n, n, 1.0), &border_mask(n, n), h, &SweepOptions::default()).unwrap();
        let exact = Image2D::from_fn(n, n, |r, c| {
            let (y, x) = (r as f64 * h, c as f64 * h);
            x.min(1.0 - x).min(y).min(1.0 - y)
        });
        let err = res.height.u.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (err, res)
    }

    #[test]
    fn speed_examples() {
        let f = brightness_to_speed(&Image2D::from_vec(1, 3, vec![1.0, 1.0 / 2f64.sqrt(), 0.0]).unwrap());
        assert_eq!(f.get(0, 0), 0.0);
        assert!((f.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((f.get(0, 2) - (1e6f64 - 1.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn distance_to_square_boundary() {
        let (err, res) = square_distance(101);
        assert!(res.converged);
        assert!(err <= 2.0 * 0.01, "L_inf error {err}");
        assert!(res.height.u.data().iter().all(|&v| v >= 0.0));
        let mask = border_mask(101, 101);
        assert!(res.height.u.data().iter().zip(&mask).all(|(v, m)| !m || *v == 0.0));
    }

    #[test]
    fn first_order_refinement() {
        let (coarse, _) = square_distance(51);
        let (fine, _) = square_distance(101);
        let ratio = coarse / fine;
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn updates_nonincreasing_after_first_cycle() {
        let (_, res) = square_distance(101);
        let cycles = res.cycle_max_updates();
        eprintln!("sweeps {} cycles {:?}", res.sweeps(), &cycles[..cycles.len().min(20)]);
        let tail = &cycles[1..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{:?}", &tail[..tail.len().min(12)]);
    }

    #[test]
    fn cone_from_centre_point() {
        let n = 81;
        let h = 1.0 / (n - 1) as f64;
        let mut mask = vec![false; n * n];
        mask[(n / 2) * n + n / 2] = true;
        let res = fast_sweep_eikonal(&Image2D::filled(n, n, 1.0), &mask, h, &SweepOptions::default()).unwrap();
        let err = (0..n * n)
            .map(|k| {
                let (y, x) = ((k / n) as f64 * h - 0.5, (k % n) as f64 * h - 0.5);
                (res.height.u.data()[k] - (x * x + y * y).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 2.0 * h * (1.0 + h.ln().abs()), "cone error {err}");
    }

    #[test]
    fn zero_speed_gives_zero_height() {
        let res = fast_sweep_eikonal(&Image2D::zeros(9, 9), &border_mask(9, 9), 0.1, &SweepOptions::default()).unwrap();
        assert!(res.height.u.data().iter().all(|&v| v == 0.0));
        assert!(res.converged);
    }

    #[test]
    fn invalid_inputs() {
        let f = Image2D::filled(5, 5, 1.0);
        assert!(fast_sweep_eikonal(&f, &[false; 25], 0.1, &SweepOptions::default()).is_err());
        assert!(fast_sweep_eikonal(&f, &[true; 3], 0.1, &SweepOptions::default()).is_err());
        assert!(fast_sweep_eikonal(&f.map(|_| -1.0), &border_mask(5, 5), 0.1, &SweepOptions::default()).is_err());
    }

    #[test]
    fn constant_phase_is_flat() {
        let res = reconstruct_surface(&Image2D::filled(12, 12, 0.3), &SurfaceOptions::default()).unwrap();
        assert!(res.height.u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bright_blob_has_single_interior_maximum() {
        let n = 33;
        // dark frame on the Dirichlet ring, so normalisation puts f = 1/eps only where it is unused
        let theta = Image2D::from_fn(n, n, |r, c| {
            if r == 0 || c == 0 || r == n - 1 || c == n - 1 {
                return 0.0;
            }
            let (y, x) = (r as f64 - 16.0, c as f64 - 16.0);
            0.5 + 0.5 * (-(x * x + y * y) / 40.0).exp()
        });
        let u = reconstruct_surface(&theta, &SurfaceOptions::default()).unwrap().height.u;
        assert!(u.min() >= 0.0 && u.max() == 1.0);
        let mut maxima = Vec::new();
        for r in 1..n - 1 {
            for c in 1..n - 1 {
                let v = u.get(r, c);
                let neighbours = [(r - 1, c - 1), (r - 1, c), (r - 1, c + 1), (r, c - 1), (r, c + 1), (r + 1, c - 1), (r + 1, c), (r + 1, c + 1)];
                if neighbours.iter().all(|&(a, b)| u.get(a, b) <= v) {
                    maxima.push((r, c));
                }
            }
        }
        // the scheme averages axial neighbours where f = 0, so the peak is resolved to one cell
        assert!(!maxima.is_empty());
        assert!(maxima.iter().all(|&(r, c)| r.abs_diff(16) <= 1 && c.abs_diff(16) <= 1), "{maxima:?}");
    }

    #[test]
    fn mesh_counts_and_flat_normals() {
        let small = mesh_from_height(&HeightField { u: Image2D::zeros(2, 2), h: 1.0 }).unwrap();
        assert_eq!((small.vertices.len(), small.triangles.len()), (4, 2));
        let mesh = mesh_from_height(&HeightField { u: Image2D::filled(5, 7, 0.4), h: 0.5 }).unwrap();
        assert_eq!(mesh.triangles.len(), 2 * 4 * 6);
        for t in 0..mesh.triangles.len() {
            let n = mesh.normal(t);
            assert!(n[0] == 0.0 && n[1] == 0.0 && n[2] > 0.0);
        }
    }

    #[test]
    fn interior_edges_shared_by_two_triangles() {
        let mesh = mesh_from_height(&HeightField { u: Image2D::from_fn(6, 5, |r, c| (r * c) as f64 * 0.01), h: 0.1 }).unwrap();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &mesh.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let (rows, cols) = (6, 5);
        let boundary = |v: usize| v / cols == 0 || v / cols == rows - 1 || v.is_multiple_of(cols) || v % cols == cols - 1;
        for ((a, b), count) in edges {
            let on_border = boundary(a) && boundary(b) && (a / cols == b / cols || a % cols == b % cols);
            assert_eq!(count, if on_border { 1 } else { 2 }, "edge {a}-{b}");
        }
    }

    #[test]
    fn obj_output_is_one_based() {
        let mesh = mesh_from_height(&HeightField { u: Image2D::zeros(2, 2), h: 1.0 }).unwrap();
        let mut buf = Vec::new();
        mesh.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert!(text.contains("f 1 2 4\nf 1 4 3\n"));
    }
}
