//! No-reference image quality from natural-scene statistics (BRISQUE-style
//! features scored by distance to a pristine model, and NIQE), plus mesh
//! quality measures.
//!
//! # Pristine model file
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `PPMVG001` |
//! | 8 | dimension `d` as little-endian u64 |
//! | 8·d | mean, little-endian f64 |
//! | 8·d·d | covariance, row-major little-endian f64 |

use std::io::{Read, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::Image2D;
use crate::surface::{HeightField, TriangleMesh};

pub const FEATURE_DIM: usize = 36;
const MVG_MAGIC: &[u8; 8] = b"PPMVG001";
/// Score reported for images without usable statistics (for example constant images).
pub const DEGENERATE_SCORE: f64 = 100.0;

/// Pristine model fitted from the bundled procedural corpus (see [`pristine_corpus`]).
static BUNDLED_MODEL: &[u8] = include_bytes!("../data/pristine.mvg");

// ---------------------------------------------------------------- MSCN

fn gaussian_window() -> [f64; 7] {
    let sigma = 7.0 / 6.0;
    let mut w = [0.0; 7];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - 3.0;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable 7x7 Gaussian filter with replicated borders.
fn local_filter(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let w = gaussian_window();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = (0..7).map(|k| w[k] * data[r * cols + clamp(c as isize + k as isize - 3, cols)]).sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = (0..7).map(|k| w[k] * tmp[clamp(r as isize + k as isize - 3, rows) * cols + c]).sum();
        }
    }
    out
}

/// Deviations from the local mean below this (0-255 scale) are rounding noise.
const MSCN_FLOOR: f64 = 1e-8;

/// MSCN coefficients and the local standard deviation map, on the 0-255 scale.
fn mscn_with_sigma(img: &Image2D) -> (Image2D, Vec<f64>) {
    let (rows, cols) = img.shape();
    // removing the global mean first keeps the local variance free of cancellation
    let m = img.mean();
    let x: Vec<f64> = img.data().iter().map(|v| 255.0 * (v - m)).collect();
    let mu = local_filter(&x, rows, cols);
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mu2 = local_filter(&sq, rows, cols);
    let sigma: Vec<f64> = mu.iter().zip(&mu2).map(|(a, b)| (b - a * a).abs().sqrt()).collect();
    // flat regions leave rounding residue whose sign would flip the AGGD side counts
    let out = x
        .iter()
        .zip(&mu)
        .zip(&sigma)
        .map(|((v, a), s)| if (v - a).abs() < MSCN_FLOOR { 0.0 } else { (v - a) / (s + 1.0) })
        .collect();
    (Image2D::from_vec(rows, cols, out).expect("same shape"), sigma)
}

/// Mean-subtracted contrast-normalised coefficients `(I - mu) / (sigma + 1)`
/// with 7x7 Gaussian local moments, computed on the 0-255 intensity scale.
pub fn mscn(img: &Image2D) -> Image2D {
    mscn_with_sigma(img).0
}

// ---------------------------------------------------------------- GGD / AGGD fits

struct ShapeTable {
    alpha: Vec<f64>,
    /// `Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a))`, increasing in `a`.
    rho: Vec<f64>,
}

fn shape_table() -> &'static ShapeTable {
    static TABLE: OnceLock<ShapeTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let alpha: Vec<f64> = (0..=9800).map(|i| 0.2 + i as f64 * 1e-3).collect();
        let rho = alpha.iter().map(|&a| (2.0 * ln_gamma(2.0 / a) - ln_gamma(1.0 / a) - ln_gamma(3.0 / a)).exp()).collect();
        ShapeTable { alpha, rho }
    })
}

/// Shape parameter whose moment ratio matches `target`, linearly
/// interpolated between table entries so the fit is continuous.
fn match_shape(target: f64) -> f64 {
    let t = shape_table();
    let i = t.rho.partition_point(|&r| r < target);
    if i == 0 {
        return t.alpha[0];
    }
    if i == t.rho.len() {
        return t.alpha[i - 1];
    }
    let w = (target - t.rho[i - 1]) / (t.rho[i] - t.rho[i - 1]);
    t.alpha[i - 1] + w * (t.alpha[i] - t.alpha[i - 1])
}

/// Generalised Gaussian `(shape, variance)` by moment matching.
fn fit_ggd(x: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if !(var > 0.0) {
        return None;
    }
    Some((match_shape(abs * abs / var), var))
}

/// Asymmetric generalised Gaussian `(shape, mean, left variance, right variance)`.
fn fit_aggd(x: &[f64]) -> Option<[f64; 4]> {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
    }
    let n = x.len() as f64;
    let var = (ls + rs) / n;
    if !(var > 0.0) {
        return None;
    }
    let tiny = var * 1e-12;
    let left = if ln > 0 { ls / ln as f64 } else { tiny };
    let right = if rn > 0 { rs / rn as f64 } else { tiny };
    let gamma = (left / right).sqrt();
    let abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let r_hat = abs * abs / var;
    let big_r = r_hat * (gamma.powi(3) + 1.0) * (gamma + 1.0) / (gamma * gamma + 1.0).powi(2);
    let alpha = match_shape(big_r);
    let ratio = (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp() * (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp().sqrt();
    let mean = (right.sqrt() - left.sqrt()) * ratio;
    Some([alpha, mean, left, right])
}

// ---------------------------------------------------------------- features

/// Natural-scene-statistics feature vector: for each of two scales, GGD
/// `(shape, variance)` of the MSCN map and AGGD `(shape, mean, left var,
/// right var)` of the horizontal, vertical and two diagonal neighbour products.
#[derive(Debug, Clone, PartialEq)]
pub struct NssFeatures(pub [f64; FEATURE_DIM]);

fn scale_features(m: &[f64], rows: usize, cols: usize, out: &mut Vec<f64>) -> Option<()> {
    let (a, v) = fit_ggd(m)?;
    out.extend([a, v]);
    let at = |r: usize, c: usize| m[r * cols + c];
    let mut prods: [Vec<f64>; 4] = Default::default();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                prods[0].push(at(r, c) * at(r, c + 1));
            }
            if r + 1 < rows {
                prods[1].push(at(r, c) * at(r + 1, c));
                if c + 1 < cols {
                    prods[2].push(at(r, c) * at(r + 1, c + 1));
                }
                if c >= 1 {
                    prods[3].push(at(r, c) * at(r + 1, c - 1));
                }
            }
        }
    }
    for p in &prods {
        out.extend(fit_aggd(p)?);
    }
    Some(())
}

/// 2x2 box average.
fn downsample(img: &Image2D) -> Image2D {
    let (rows, cols) = (img.rows() / 2, img.cols() / 2);
    Image2D::from_fn(rows, cols, |r, c| {
        (img.get(2 * r, 2 * c) + img.get(2 * r + 1, 2 * c) + img.get(2 * r, 2 * c + 1) + img.get(2 * r + 1, 2 * c + 1)) / 4.0
    })
}

fn check_size(img: &Image2D) -> Result<()> {
    if img.rows() < 8 || img.cols() < 8 {
        return Err(Error::Dimension(format!("quality metrics need at least 8x8 pixels, got {:?}", img.shape())));
    }
    if !img.is_finite() {
        return Err(Error::Input("image contains non-finite values".into()));
    }
    Ok(())
}

fn degenerate() -> Error {
    Error::Input("image has no local contrast (constant or near-constant)".into())
}

pub fn brisque_features(img: &Image2D) -> Result<NssFeatures> {
    check_size(img)?;
    let mut out = Vec::with_capacity(FEATURE_DIM);
    let mut cur = img.clone();
    for _ in 0..2 {
        let m = mscn(&cur);
        scale_features(m.data(), m.rows(), m.cols(), &mut out).ok_or_else(degenerate)?;
        cur = downsample(&cur);
    }
    Ok(NssFeatures(out.try_into().expect("36 features")))
}

// ---------------------------------------------------------------- MVG model

/// Multivariate Gaussian over [`NssFeatures`].
#[derive(Debug, Clone, PartialEq)]
pub struct MvgModel {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MvgModel {
    /// Sample mean and unbiased covariance of feature rows.
    pub fn from_samples(samples: &[[f64; FEATURE_DIM]]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("cannot fit a model to zero samples".into()));
        }
        let n = samples.len();
        let mut mean = DVector::zeros(FEATURE_DIM);
        for s in samples {
            mean += DVector::from_column_slice(s);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(FEATURE_DIM, FEATURE_DIM);
        if n > 1 {
            for s in samples {
                let d = DVector::from_column_slice(s) - &mean;
                cov += &d * d.transpose();
            }
            cov /= (n - 1) as f64;
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MVG_MAGIC)?;
        w.write_all(&(self.mean.len() as u64).to_le_bytes())?;
        for v in self.mean.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for r in 0..self.cov.nrows() {
            for c in 0..self.cov.ncols() {
                w.write_all(&self.cov[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MVG_MAGIC {
            return Err(Error::Input("not a pristine model file (bad magic)".into()));
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let d = u64::from_le_bytes(b) as usize;
        if d == 0 || d > 4096 {
            return Err(Error::Input(format!("implausible model dimension {d}")));
        }
        let mut next = || -> Result<f64> {
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mean = DVector::from_iterator(d, (0..d).map(|_| next()).collect::<Result<Vec<_>>>()?);
        let vals = (0..d * d).map(|_| next()).collect::<Result<Vec<_>>>()?;
        Ok(Self { mean, cov: DMatrix::from_row_slice(d, d, &vals) })
    }

    /// The model shipped with the crate.
    pub fn bundled() -> &'static MvgModel {
        static MODEL: OnceLock<MvgModel> = OnceLock::new();
        MODEL.get_or_init(|| MvgModel::read(BUNDLED_MODEL).expect("bundled pristine model is well formed"))
    }
}

/// `sqrt(d^T S^+ d)` with a pseudo-inverse.
fn mahalanobis(d: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let pinv = cov.clone().pseudo_inverse(1e-10 * cov.amax().max(f64::MIN_POSITIVE)).expect("non-negative epsilon");
    (d.transpose() * pinv * d)[(0, 0)].max(0.0).sqrt()
}

/// Distance of image features to the pristine model; lower is better.
pub fn brisque_score(features: &NssFeatures, model: &MvgModel) -> f64 {
    let d = DVector::from_column_slice(&features.0) - &model.mean;
    mahalanobis(&d, &model.cov)
}

/// A score plus a note when the fallback value was used.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityScore {
    pub value: f64,
    pub warning: Option<String>,
}

fn with_fallback(r: Result<f64>) -> Result<QualityScore> {
    match r {
        Ok(value) => Ok(QualityScore { value, warning: None }),
        Err(Error::Input(msg)) if msg.contains("no local contrast") => {
            Ok(QualityScore { value: DEGENERATE_SCORE, warning: Some(msg) })
        }
        Err(e) => Err(e),
    }
}

/// BRISQUE features scored against `model`, with the degenerate-image fallback.
pub fn brisque(img: &Image2D, model: &MvgModel) -> Result<QualityScore> {
    with_fallback(brisque_features(img).map(|f| brisque_score(&f, model)))
}

// ---------------------------------------------------------------- NIQE

/// Patch edge used for an image: a quarter of the shorter side, kept in `[16, 96]`.
pub fn niqe_patch_size(rows: usize, cols: usize) -> usize {
    (rows.min(cols) / 4).clamp(16, 96)
}

/// Share of the sharpest patch a patch must reach to be kept.
const SHARPNESS_KEEP: f64 = 0.75;

/// Features of the sharp patches of an image.
fn patch_features(img: &Image2D, patch: usize) -> Result<Vec<[f64; FEATURE_DIM]>> {
    check_size(img)?;
    if img.rows() < patch || img.cols() < patch || patch < 8 || patch % 2 == 1 {
        return Err(Error::Dimension(format!("patch size {patch} does not fit a {:?} image", img.shape())));
    }
    let (pr, pc) = (img.rows() / patch, img.cols() / patch);
    let (m1, sigma) = mscn_with_sigma(img);
    let m2 = mscn(&downsample(img));
    let mut feats = Vec::new();
    let mut sharpness = Vec::new();
    for i in 0..pr {
        for j in 0..pc {
            let mut out = Vec::with_capacity(FEATURE_DIM);
            let ok = [(&m1, patch, 1usize), (&m2, patch / 2, 2)].iter().all(|(m, p, _)| {
                let block: Vec<f64> =
                    (0..*p).flat_map(|r| (0..*p).map(move |c| (r, c))).map(|(r, c)| m.get(i * p + r, j * p + c)).collect();
                scale_features(&block, *p, *p, &mut out).is_some()
            });
            if ok {
                let s: f64 = (0..patch)
                    .flat_map(|r| (0..patch).map(move |c| (r, c)))
                    .map(|(r, c)| sigma[(i * patch + r) * img.cols() + j * patch + c])
                    .sum::<f64>()
                    / (patch * patch) as f64;
                feats.push(out.try_into().expect("36 features"));
                sharpness.push(s);
            }
        }
    }
    let top = sharpness.iter().cloned().fold(0.0, f64::max);
    if feats.is_empty() || top <= 0.0 {
        return Err(degenerate());
    }
    Ok(feats.into_iter().zip(sharpness).filter(|(_, s)| *s >= SHARPNESS_KEEP * top).map(|(f, _)| f).collect())
}

/// NIQE distance `sqrt(d^T ((S1 + S2)/2)^+ d)` between the pristine model and
/// an MVG fitted to the image's sharp patches; lower is better.
pub fn niqe_score(img: &Image2D, model: &MvgModel) -> Result<f64> {
    let feats = patch_features(img, niqe_patch_size(img.rows(), img.cols()))?;
    let test = MvgModel::from_samples(&feats)?;
    let d = &model.mean - &test.mean;
    let dist = mahalanobis(&d, &((&model.cov + &test.cov) * 0.5));
    if !dist.is_finite() {
        return Err(Error::NonFinite("niqe distance".into()));
    }
    Ok(dist)
}

/// NIQE with the degenerate-image fallback.
pub fn niqe(img: &Image2D, model: &MvgModel) -> Result<QualityScore> {
    with_fallback(niqe_score(img, model))
}

/// Fit the pristine model from the sharp-patch features of every corpus image.
pub fn fit_pristine_model(corpus: &[Image2D]) -> Result<MvgModel> {
    let mut all = Vec::new();
    for img in corpus {
        all.extend(patch_features(img, niqe_patch_size(img.rows(), img.cols()))?);
    }
    MvgModel::from_samples(&all)
}

/// The procedural corpus behind the bundled model: 24 dead-leaves images of 96x96.
pub fn pristine_corpus() -> Vec<Image2D> {
    (0..24).map(|s| crate::phantom::dead_leaves(96, 96, 1000 + s)).collect()
}

// ---------------------------------------------------------------- optional linear scorer

/// Externally trained linear quality regressor over the 36 features.
/// File format: whitespace-separated numbers, bias first, then 36 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub bias: f64,
    pub weights: [f64; FEATURE_DIM],
}

impl LinearScorer {
    pub fn parse(text: &str) -> Result<Self> {
        let vals = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Input(format!("bad coefficient '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != FEATURE_DIM + 1 {
            return Err(Error::Input(format!("expected {} coefficients, found {}", FEATURE_DIM + 1, vals.len())));
        }
        Ok(Self { bias: vals[0], weights: vals[1..].try_into().expect("36 weights") })
    }

    pub fn score(&self, f: &NssFeatures) -> f64 {
        self.bias + self.weights.iter().zip(&f.0).map(|(w, x)| w * x).sum::<f64>()
    }
}

// ---------------------------------------------------------------- meshes

/// Mean squared difference between two height fields of equal shape.
pub fn mesh_mse(a: &HeightField, b: &HeightField) -> Result<f64> {
    a.u.mse(&b.u)
}

const SKEW_ROUNDING: f64 = 1e-12;

/// Angle-based skew `max((t_max - 60)/120, (60 - t_min)/60)` of one triangle, in `[0, 1]`.
/// Zero-area triangles score 1.
pub fn triangle_skew(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let sub = |p: [f64; 3], q: [f64; 3]| [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
    let angle = |at: [f64; 3], p: [f64; 3], q: [f64; 3]| {
        let (u, v) = (sub(p, at), sub(q, at));
        let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        let cos = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        sin.atan2(cos).to_degrees()
    };
    let angles = [angle(a, b, c), angle(b, c, a), angle(c, a, b)];
    if angles.iter().any(|t| !(*t > 0.0)) {
        return 1.0;
    }
    let (lo, hi) = angles.iter().fold((f64::MAX, f64::MIN), |(l, h), &t| (l.min(t), h.max(t)));
    let skew = ((hi - 60.0) / 120.0).max((60.0 - lo) / 60.0).clamp(0.0, 1.0);
    // angle rounding leaves ~1e-16 on triangles that are equilateral to machine precision
    if skew < SKEW_ROUNDING {
        0.0
    } else {
        skew
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Skewness {
    pub mean: f64,
    pub max: f64,
}

pub fn mesh_skewness(mesh: &TriangleMesh) -> Result<Skewness> {
    if mesh.triangles.is_empty() {
        return Err(Error::Input("mesh has no triangles".into()));
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for t in &mesh.triangles {
        if t.iter().any(|&i| i >= mesh.vertices.len()) {
            return Err(Error::Input(format!("triangle {t:?} indexes past {} vertices", mesh.vertices.len())));
        }
        let s = triangle_skew(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        sum += s;
        max = max.max(s);
    }
    Ok(Skewness { mean: sum / mesh.triangles.len() as f64, max })
}

#[cfg(test)]
mod tests;
