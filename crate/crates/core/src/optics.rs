//! Image formation: angular-spectrum propagation and the weak-phase (Born)
//! linearisation.
//!
//! The object plane carries `sqrt(I0) * exp(i*theta)`, so a flat phase gives a
//! detector intensity of exactly `I0`. Propagation multiplies the spectrum by
//! `exp(-i k z sqrt(1 - lambda^2 |nu|^2))` on the propagating disc and by the
//! decaying factor `exp(-k |z| sqrt(lambda^2 |nu|^2 - 1))` outside it.
//!
//! The Born model linearises about the unscattered plane wave, so its
//! transfer function is referenced to the DC entry (`H / H(0)`). That keeps
//! it consistent with [`forward_full`] to first order for any `z`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_frequencies, Fft2};
use crate::grid::{ComplexField2D, Image2D};
use crate::tensor::VjpFn;

/// Physical parameters of a single-distance measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingConfig {
    /// Metres.
    pub wavelength: f64,
    /// Propagation distance in metres; negative values back-propagate.
    pub distance: f64,
    /// Metres per sample.
    pub pixel_pitch: f64,
    /// Illumination intensity.
    pub i0: f64,
    pub rows: usize,
    pub cols: usize,
}

impl ImagingConfig {
    pub const DEFAULT_WAVELENGTH: f64 = 0.5e-6;
    pub const DEFAULT_DISTANCE: f64 = 10e-6;
    pub const DEFAULT_PITCH: f64 = 1e-6;

    /// Default optics on a `rows x cols` grid.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            wavelength: Self::DEFAULT_WAVELENGTH,
            distance: Self::DEFAULT_DISTANCE,
            pixel_pitch: Self::DEFAULT_PITCH,
            i0: 1.0,
            rows,
            cols,
        }
    }

    pub fn with_distance(mut self, z: f64) -> Self {
        self.distance = z;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::Config(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(Error::Config(format!("pixel pitch must be positive, got {}", self.pixel_pitch)));
        }
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(Error::Config(format!("illumination I0 must be positive, got {}", self.i0)));
        }
        if !self.distance.is_finite() {
            return Err(Error::Config("distance must be finite".into()));
        }
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Config(format!("grid must be at least 2x2, got {}x{}", self.rows, self.cols)));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if shape != self.shape() {
            return Err(Error::Dimension(format!(
                "grid {:?} does not match imaging config {:?}",
                shape,
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Frequency-domain multipliers of free-space propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction(ComplexField2D);

impl TransferFunction {
    pub fn values(&self) -> &ComplexField2D {
        &self.0
    }
}

pub fn transfer_function(cfg: &ImagingConfig) -> Result<TransferFunction> {
    cfg.validate()?;
    let fy = fft_frequencies(cfg.rows, cfg.pixel_pitch);
    let fx = fft_frequencies(cfg.cols, cfg.pixel_pitch);
    let (k, z, lam2) = (cfg.wavenumber(), cfg.distance, cfg.wavelength * cfg.wavelength);
    Ok(TransferFunction(ComplexField2D::from_fn(cfg.rows, cfg.cols, |r, c| {
        let s = lam2 * (fx[c] * fx[c] + fy[r] * fy[r]);
        if z == 0.0 {
            Complex64::new(1.0, 0.0)
        } else if s <= 1.0 {
            Complex64::from_polar(1.0, -k * z * (1.0 - s).sqrt())
        } else {
            Complex64::new((-k * z.abs() * (s - 1.0).sqrt()).exp(), 0.0)
        }
    })))
}

/// A linear map between object and detector planes together with its adjoint.
pub trait LinearOptic {
    fn shape(&self) -> (usize, usize);
    fn apply(&self, field: &ComplexField2D) -> ComplexField2D;
    fn adjoint(&self, field: &ComplexField2D) -> ComplexField2D;
}

/// Trivial optic (`H = identity`), useful for toy problems of any size.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOptic {
    pub rows: usize,
    pub cols: usize,
}

impl LinearOptic for IdentityOptic {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn apply(&self, field: &ComplexField2D) -> ComplexField2D {
        field.clone()
    }

    fn adjoint(&self, field: &ComplexField2D) -> ComplexField2D {
        field.clone()
    }
}

/// Angular-spectrum propagator with cached FFT plans and transfer function.
#[derive(Debug, Clone)]
pub struct Propagator {
    cfg: ImagingConfig,
    tf: TransferFunction,
    fft: Fft2,
}

impl Propagator {
    pub fn new(cfg: &ImagingConfig) -> Result<Self> {
        Ok(Self { cfg: *cfg, tf: transfer_function(cfg)?, fft: Fft2::new(cfg.rows, cfg.cols) })
    }

    pub fn config(&self) -> &ImagingConfig {
        &self.cfg
    }

    pub fn transfer(&self) -> &TransferFunction {
        &self.tf
    }

    fn filter(&self, field: &ComplexField2D, conjugate: bool, reference: Complex64) -> ComplexField2D {
        let mut spec = field.clone();
        self.fft.forward(&mut spec);
        for (s, h) in spec.data_mut().iter_mut().zip(self.tf.0.data()) {
            let h = *h * reference;
            *s *= if conjugate { h.conj() } else { h };
        }
        self.fft.inverse(&mut spec);
        spec
    }

    /// Factor that references the transfer function to the unscattered wave.
    fn dc_reference(&self) -> Complex64 {
        self.tf.0.data()[0].conj()
    }

    /// `ifft2(H * fft2(near))`.
    pub fn propagate(&self, near: &ComplexField2D) -> Result<ComplexField2D> {
        self.cfg.check_shape(near.shape())?;
        Ok(self.filter(near, false, Complex64::new(1.0, 0.0)))
    }

    /// Adjoint propagation (conjugate transfer function).
    pub fn propagate_adjoint(&self, far: &ComplexField2D) -> Result<ComplexField2D> {
        self.cfg.check_shape(far.shape())?;
        Ok(self.filter(far, true, Complex64::new(1.0, 0.0)))
    }

    fn born_apply(&self, field: &ComplexField2D) -> ComplexField2D {
        self.filter(field, false, self.dc_reference())
    }

    fn born_adjoint(&self, field: &ComplexField2D) -> ComplexField2D {
        self.filter(field, true, self.dc_reference())
    }

    /// Real frequency response of `theta -> Re[H~(i theta)]` (the phase
    /// contrast transfer function), in FFT order.
    pub fn born_contrast_transfer(&self) -> Image2D {
        let r = self.dc_reference();
        let vals = self.tf.0.data().iter().map(|h| -(h * r).im).collect();
        Image2D::from_vec(self.cfg.rows, self.cfg.cols, vals).expect("shape from config")
    }

    pub(crate) fn fft(&self) -> &Fft2 {
        &self.fft
    }
}

impl LinearOptic for Propagator {
    fn shape(&self) -> (usize, usize) {
        self.cfg.shape()
    }

    fn apply(&self, field: &ComplexField2D) -> ComplexField2D {
        self.filter(field, false, Complex64::new(1.0, 0.0))
    }

    fn adjoint(&self, field: &ComplexField2D) -> ComplexField2D {
        self.filter(field, true, Complex64::new(1.0, 0.0))
    }
}

pub fn propagate(near: &ComplexField2D, cfg: &ImagingConfig) -> Result<ComplexField2D> {
    Propagator::new(cfg)?.propagate(near)
}

pub fn intensity(field: &ComplexField2D) -> Image2D {
    Image2D::from_vec(field.rows(), field.cols(), field.data().iter().map(|z| z.norm_sqr()).collect())
        .expect("same shape")
}

/// Pure-phase object field `sqrt(I0) * exp(i*theta)`.
pub fn phase_to_field(theta: &Image2D, cfg: &ImagingConfig) -> Result<ComplexField2D> {
    cfg.validate()?;
    cfg.check_shape(theta.shape())?;
    if !theta.is_finite() {
        return Err(Error::Input("phase contains non-finite values".into()));
    }
    let amp = cfg.i0.sqrt();
    ComplexField2D::from_vec(
        theta.rows(),
        theta.cols(),
        theta.data().iter().map(|&t| Complex64::from_polar(amp, t)).collect(),
    )
}

pub fn forward_full(theta: &Image2D, cfg: &ImagingConfig) -> Result<Image2D> {
    ForwardModel::Full.apply(&Propagator::new(cfg)?, theta)
}

pub fn forward_born(theta: &Image2D, cfg: &ImagingConfig) -> Result<Image2D> {
    ForwardModel::Born.apply(&Propagator::new(cfg)?, theta)
}

/// Which diffraction model maps phase to intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForwardModel {
    /// `|H_z sqrt(I0) e^{i theta}|^2`.
    Full,
    /// `I0 (1 + 2 Re[H~_z (i theta)])`.
    Born,
}

impl std::str::FromStr for ForwardModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "fourier_full" => Ok(ForwardModel::Full),
            "born" | "fourier_born" => Ok(ForwardModel::Born),
            _ => Err(Error::Usage(format!("unknown forward model '{s}' (expected full or born)"))),
        }
    }
}

impl ForwardModel {
    pub fn name(&self) -> &'static str {
        match self {
            ForwardModel::Full => "full",
            ForwardModel::Born => "born",
        }
    }

    pub fn apply(&self, prop: &Propagator, theta: &Image2D) -> Result<Image2D> {
        let cfg = prop.config();
        match self {
            ForwardModel::Full => {
                let near = phase_to_field(theta, cfg)?;
                Ok(intensity(&prop.propagate(&near)?))
            }
            ForwardModel::Born => {
                cfg.check_shape(theta.shape())?;
                let it = ComplexField2D::from_fn(theta.rows(), theta.cols(), |r, c| Complex64::new(0.0, theta.get(r, c)));
                let far = prop.born_apply(&it);
                Ok(far.real().map(|re| cfg.i0 * (1.0 + 2.0 * re)))
            }
        }
    }

    /// Forward intensity plus the vector-Jacobian product `dL/dI -> dL/dtheta`.
    pub fn apply_with_vjp(&self, prop: Arc<Propagator>, theta: &Image2D) -> Result<(Image2D, VjpFn)> {
        let cfg = *prop.config();
        match self {
            ForwardModel::Full => {
                let near = phase_to_field(theta, &cfg)?;
                let far = prop.propagate(&near)?;
                let out = intensity(&far);
                let vjp: VjpFn = Box::new(move |g: &[f64]| {
                    let weighted = ComplexField2D::from_vec(
                        far.rows(),
                        far.cols(),
                        far.data().iter().zip(g).map(|(z, gi)| z * *gi).collect(),
                    )
                    .expect("same shape");
                    let back = prop.adjoint(&weighted);
                    near.data().iter().zip(back.data()).map(|(p0, w)| -2.0 * (w.conj() * p0).im).collect()
                });
                Ok((out, vjp))
            }
            ForwardModel::Born => {
                let out = self.apply(&prop, theta)?;
                let (rows, cols) = theta.shape();
                let vjp: VjpFn = Box::new(move |g: &[f64]| {
                    let gf = ComplexField2D::from_vec(rows, cols, g.iter().map(|&v| Complex64::new(v, 0.0)).collect())
                        .expect("same shape");
                    prop.born_adjoint(&gf).data().iter().map(|u| 2.0 * cfg.i0 * u.im).collect()
                });
                Ok((out, vjp))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::{fft2, ifft2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_phase(rows: usize, cols: usize, amp: f64, seed: u64) -> Image2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(rows, cols, |_, _| amp * rng.gen_range(-1.0..1.0))
    }

    /// Random field whose spectrum is confined to the propagating disc.
    fn band_limited(cfg: &ImagingConfig, seed: u64) -> ComplexField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fy = fft_frequencies(cfg.rows, cfg.pixel_pitch);
        let fx = fft_frequencies(cfg.cols, cfg.pixel_pitch);
        let lam2 = cfg.wavelength * cfg.wavelength;
        let spec = ComplexField2D::from_fn(cfg.rows, cfg.cols, |r, c| {
            let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if lam2 * (fx[c] * fx[c] + fy[r] * fy[r]) < 0.9 {
                v
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        ifft2(&spec)
    }

    /// Fine sampling so that part of the spectrum is evanescent.
    fn evanescent_cfg() -> ImagingConfig {
        ImagingConfig { wavelength: 0.5e-6, distance: 2e-6, pixel_pitch: 0.2e-6, i0: 1.0, rows: 16, cols: 16 }
    }

    #[test]
    fn transfer_function_special_cases() {
        let cfg = ImagingConfig::new(8, 8).with_distance(0.0);
        assert!(transfer_function(&cfg).unwrap().values().data().iter().all(|h| *h == Complex64::new(1.0, 0.0)));

        let cfg = ImagingConfig::new(8, 8);
        let tf = transfer_function(&cfg).unwrap();
        let dc = tf.values().get(0, 0);
        let want = Complex64::from_polar(1.0, -cfg.wavenumber() * cfg.distance);
        assert!((dc - want).norm() < 1e-12);
        assert!((dc.norm() - 1.0).abs() < 1e-15);
        assert!(tf.values().data().iter().all(|h| h.norm() <= 1.0 + 1e-15));
    }

    #[test]
    fn evanescent_entry_decays() {
        let mut cfg = evanescent_cfg();
        let k = cfg.wavenumber();
        // Nyquist on both axes: lambda^2 * 2 * (1/(2p))^2 = 3.125.
        let nu = 1.0 / (2.0 * cfg.pixel_pitch);
        let s: f64 = cfg.wavelength.powi(2) * 2.0 * nu * nu;
        cfg.distance = 20.0 / (k * (s - 1.0).sqrt());
        let tf = transfer_function(&cfg).unwrap();
        let h = tf.values().get(8, 8);
        assert!((h.norm() - (-20.0f64).exp()).abs() < 1e-20);
        assert!((h.norm() - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn propagate_identities() {
        let cfg = ImagingConfig::new(12, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = ComplexField2D::from_fn(12, 10, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        assert!(propagate(&f, &cfg.with_distance(0.0)).unwrap().max_abs_diff(&f) < 1e-14);

        let c = ComplexField2D::filled(12, 10, Complex64::new(0.3, -0.7));
        let out = propagate(&c, &cfg).unwrap();
        let phase = Complex64::from_polar(1.0, -cfg.wavenumber() * cfg.distance);
        assert!(out.data().iter().all(|z| (z - Complex64::new(0.3, -0.7) * phase).norm() < 1e-12));

        assert!(matches!(propagate(&ComplexField2D::zeros(4, 4), &cfg), Err(Error::Dimension(_))));
    }

    #[test]
    fn round_trip_and_power() {
        let cfg = evanescent_cfg();
        let f = band_limited(&cfg, 4);
        let fwd = propagate(&f, &cfg).unwrap();
        assert!((fwd.power() - f.power()).abs() < 1e-10 * f.power().max(1.0));
        let back = propagate(&fwd, &cfg.with_distance(-cfg.distance)).unwrap();
        assert!(back.max_abs_diff(&f) < 1e-10);
    }

    #[test]
    fn propagation_is_linear() {
        let cfg = evanescent_cfg();
        let (a, b) = (band_limited(&cfg, 5), random_phase(16, 16, 1.0, 6));
        let b = ComplexField2D::from_real(&b);
        let (s, t) = (Complex64::new(0.7, -0.2), Complex64::new(-1.3, 0.4));
        let mix = ComplexField2D::from_fn(16, 16, |r, c| s * a.get(r, c) + t * b.get(r, c));
        let (pa, pb) = (propagate(&a, &cfg).unwrap(), propagate(&b, &cfg).unwrap());
        let want = ComplexField2D::from_fn(16, 16, |r, c| s * pa.get(r, c) + t * pb.get(r, c));
        assert!(propagate(&mix, &cfg).unwrap().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn adjoint_inner_product() {
        let cfg = evanescent_cfg();
        let p = Propagator::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rf = || ComplexField2D::from_fn(16, 16, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let (x, y) = (rf(), rf());
        let inner = |a: &ComplexField2D, b: &ComplexField2D| -> Complex64 {
            a.data().iter().zip(b.data()).map(|(u, v)| u.conj() * v).sum()
        };
        let lhs = inner(&p.apply(&x), &y);
        let rhs = inner(&x, &p.adjoint(&y));
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn intensity_and_phase_field() {
        let f = ComplexField2D::from_vec(1, 2, vec![Complex64::new(1.0, 0.0), Complex64::new(3.0, 4.0)]).unwrap();
        assert_eq!(intensity(&f).data(), &[1.0, 25.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ComplexField2D::from_fn(5, 5, |_, _| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
        let i = intensity(&g);
        for (z, v) in g.data().iter().zip(i.data()) {
            assert_eq!(*v, z.re * z.re + z.im * z.im);
        }

        let mut cfg = ImagingConfig::new(4, 4);
        cfg.i0 = 2.5;
        let zero = phase_to_field(&Image2D::zeros(4, 4), &cfg).unwrap();
        assert!(zero.data().iter().all(|z| (z - Complex64::new(2.5f64.sqrt(), 0.0)).norm() < 1e-15));
        let pi = phase_to_field(&Image2D::filled(4, 4, PI), &cfg).unwrap();
        assert!(pi.data().iter().all(|z| (z + Complex64::new(2.5f64.sqrt(), 0.0)).norm() < 1e-15));
        let rand = phase_to_field(&random_phase(4, 4, 10.0, 9), &cfg).unwrap();
        assert!(rand.data().iter().all(|z| (z.norm_sqr() - 2.5).abs() < 1e-14));
    }

    #[test]
    fn forward_full_cases() {
        let cfg = ImagingConfig::new(16, 16);
        let flat = forward_full(&Image2D::filled(16, 16, 0.8), &cfg).unwrap();
        assert!(flat.data().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let mut theta = Image2D::zeros(16, 16);
        theta.set(5, 9, 1.0);
        let direct = intensity(&propagate(&phase_to_field(&theta, &cfg).unwrap(), &cfg).unwrap());
        let composed = forward_full(&theta, &cfg).unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn born_cases() {
        let cfg = ImagingConfig::new(16, 16);
        assert!(forward_born(&Image2D::zeros(16, 16), &cfg).unwrap().data().iter().all(|&v| v == cfg.i0));

        let z0 = cfg.with_distance(0.0);
        let theta = random_phase(16, 16, 0.3, 10);
        assert!(forward_born(&theta, &z0).unwrap().data().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn born_error_is_quadratic() {
        let cfg = ImagingConfig::new(16, 16);
        let base = random_phase(16, 16, 1.0, 11);
        let err = |eps: f64| {
            let t = base.map(|v| v * eps);
            let (a, b) = (forward_full(&t, &cfg).unwrap(), forward_born(&t, &cfg).unwrap());
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let (e2, e4) = (err(1e-2), err(1e-4));
        let slope = (e2 / e4).log10() / 2.0;
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn contrast_transfer_matches_born_response() {
        // A single cosine mode is scaled by the CTF value at that frequency.
        let cfg = ImagingConfig::new(16, 16);
        let p = Propagator::new(&cfg).unwrap();
        let ctf = p.born_contrast_transfer();
        let theta = Image2D::from_fn(16, 16, |_, c| 0.01 * (2.0 * PI * 3.0 * c as f64 / 16.0).cos());
        let out = ForwardModel::Born.apply(&p, &theta).unwrap();
        let want = theta.map(|t| 1.0 + 2.0 * ctf.get(0, 3) * t);
        assert!(out.data().iter().zip(want.data()).all(|(a, b)| (a - b).abs() < 1e-14));
        let spec = fft2(&ComplexField2D::from_real(&ctf));
        assert!(spec.is_finite());
    }

    fn fd_check(model: ForwardModel, seed: u64) {
        let cfg = ImagingConfig::new(8, 8);
        let prop = Arc::new(Propagator::new(&cfg).unwrap());
        let theta = random_phase(8, 8, 0.8, seed);
        let target = random_phase(8, 8, 1.0, seed + 100).map(|v| 1.0 + 0.2 * v);
        let loss = |t: &Image2D| model.apply(&prop, t).unwrap().mse(&target).unwrap();
        let (i, vjp) = model.apply_with_vjp(prop.clone(), &theta).unwrap();
        let n = i.len() as f64;
        let g: Vec<f64> = i.data().iter().zip(target.data()).map(|(a, b)| 2.0 * (a - b) / n).collect();
        let grad = vjp(&g);
        let h = 1e-6;
        for k in 0..theta.len() {
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp.data_mut()[k] += h;
            tm.data_mut()[k] -= h;
            let fd = (loss(&tp) - loss(&tm)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * fd.abs().max(1e-3), "{model:?} k={k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn full_model_vjp_matches_finite_differences() {
        fd_check(ForwardModel::Full, 12);
    }

    #[test]
    fn born_model_vjp_matches_finite_differences() {
        fd_check(ForwardModel::Born, 13);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ImagingConfig::new(8, 8);
        cfg.wavelength = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ImagingConfig::new(1, 8);
        assert!(cfg.validate().is_err());
        let mut cfg = ImagingConfig::new(8, 8);
        cfg.i0 = -1.0;
        assert!(cfg.validate().is_err());
    }
}
