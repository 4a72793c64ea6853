//! Baseline single-measurement phase retrieval: Gerchberg-Saxton alternating
//! projections, Wirtinger-flow gradient descent and direct Born inversion.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ComplexField2D, Image2D};
use crate::optics::{intensity, phase_to_field, ImagingConfig, LinearOptic, Propagator};

/// Why an iterative solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    /// Relative loss change fell below `tol`.
    Tolerance,
    MaxIters,
    /// Loss exceeded [`DIVERGENCE_FACTOR`] times its initial value or became non-finite.
    Divergence,
    /// Non-iterative solver.
    ClosedForm,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxIters => "max_iters",
            Termination::Divergence => "divergence",
            Termination::ClosedForm => "closed_form",
        }
    }
}

pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Starting point for an iterative solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// Zero phase (GS) / flat amplitude `sqrt(mean(I))` (WF).
    #[default]
    Flat,
    /// Uniform random phase in `[-pi, pi)` drawn from the options seed.
    RandomPhase,
    /// Leading eigenvector of `A^H diag(I) A` by power iteration (WF only).
    Spectral { iters: usize },
    /// Explicit object-plane phase.
    Phase(Image2D),
    /// Explicit object-plane field.
    Field(ComplexField2D),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `0.1 / mean(I_meas)`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step_size: StepSize,
    /// Geometric decay applied to the WF step each iteration (1.0 = constant).
    pub step_decay: f64,
    /// GS object-plane support; outside it the field is pinned to the flat background.
    pub support: Option<Vec<bool>>,
    pub init: Init,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-4,
            step_size: StepSize::Auto,
            step_decay: 1.0,
            support: None,
            init: Init::Flat,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if let StepSize::Fixed(mu) = self.step_size {
            if !(mu > 0.0) {
                return Err(Error::Config(format!("step size must be positive, got {mu}")));
            }
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::Config(format!("step decay must lie in (0, 1], got {}", self.step_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Object-plane phase in radians.
    pub phase: Image2D,
    /// Loss before the first iteration followed by one entry per iteration.
    pub loss_trace: Vec<f64>,
    pub iterations_run: usize,
    pub terminated_by: Termination,
}

/// Tracks the loss trace and applies the shared stopping rules.
pub(crate) struct StopRule {
    tol: f64,
    pub trace: Vec<f64>,
}

impl StopRule {
    pub fn new(tol: f64, initial: f64) -> Self {
        Self { tol, trace: vec![initial] }
    }

    /// Record a loss; returns a termination reason if the loop should end.
    pub fn record(&mut self, loss: f64) -> Option<Termination> {
        let l0 = self.trace[0];
        let prev = *self.trace.last().expect("non-empty");
        self.trace.push(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * l0.max(f64::MIN_POSITIVE) {
            return Some(Termination::Divergence);
        }
        if (loss - prev).abs() < self.tol * l0 {
            return Some(Termination::Tolerance);
        }
        None
    }
}

fn check_intensity(i_meas: &Image2D) -> Result<()> {
    if let Some(v) = i_meas.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Input(format!("measured intensity must be finite and non-negative, found {v}")));
    }
    Ok(())
}

fn initial_phase(init: &Init, shape: (usize, usize), seed: u64) -> Result<Image2D> {
    let (rows, cols) = shape;
    match init {
        Init::Flat => Ok(Image2D::zeros(rows, cols)),
        Init::RandomPhase => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Image2D::from_fn(rows, cols, |_, _| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
        }
        Init::Phase(p) => {
            if p.shape() != shape {
                return Err(Error::Dimension("initial phase shape mismatch".into()));
            }
            Ok(p.clone())
        }
        Init::Field(f) => {
            if f.shape() != shape {
                return Err(Error::Dimension("initial field shape mismatch".into()));
            }
            Ok(f.arg())
        }
        Init::Spectral { .. } => Err(Error::Config("spectral initialisation is only defined for Wirtinger flow".into())),
    }
}

fn intensity_mse(far: &ComplexField2D, i_meas: &Image2D) -> f64 {
    far.data().iter().zip(i_meas.data()).map(|(z, i)| (z.norm_sqr() - i).powi(2)).sum::<f64>() / i_meas.len() as f64
}

/// Gerchberg-Saxton between the object plane and the detector plane at distance `z`.
///
/// Each iteration replaces the detector modulus with `sqrt(I_meas)`,
/// back-propagates, imposes the object amplitude `sqrt(I0)` (and the support),
/// then forward-propagates. The loss is the intensity MSE.
pub fn gerchberg_saxton(i_meas: &Image2D, cfg: &ImagingConfig, opts: &SolverOptions) -> Result<RetrievalResult> {
    opts.validate()?;
    check_intensity(i_meas)?;
    let prop = Propagator::new(cfg)?;
    if i_meas.shape() != cfg.shape() {
        return Err(Error::Dimension(format!("intensity {:?} vs config {:?}", i_meas.shape(), cfg.shape())));
    }
    if let Some(s) = &opts.support {
        if s.len() != i_meas.len() {
            return Err(Error::Dimension("support mask shape mismatch".into()));
        }
    }
    let amp_obj = cfg.i0.sqrt();
    let amp_meas: Vec<f64> = i_meas.data().iter().map(|v| v.sqrt()).collect();

    let mut obj = phase_to_field(&initial_phase(&opts.init, cfg.shape(), opts.seed)?, cfg)?;
    let mut far = prop.propagate(&obj)?;
    let mut stop = StopRule::new(opts.tol, intensity_mse(&far, i_meas));
    let mut reason = Termination::MaxIters;
    if stop.trace[0] == 0.0 {
        reason = Termination::Tolerance;
    } else {
        for _ in 0..opts.max_iters {
            for (z, a) in far.data_mut().iter_mut().zip(&amp_meas) {
                *z = if z.norm() > 0.0 { *z * (a / z.norm()) } else { Complex64::new(*a, 0.0) };
            }
            obj = prop.propagate_adjoint(&far)?;
            for (k, z) in obj.data_mut().iter_mut().enumerate() {
                let inside = opts.support.as_ref().is_none_or(|s| s[k]);
                *z = if inside { Complex64::from_polar(amp_obj, z.arg()) } else { Complex64::new(amp_obj, 0.0) };
            }
            far = prop.propagate(&obj)?;
            if let Some(r) = stop.record(intensity_mse(&far, i_meas)) {
                reason = r;
                break;
            }
        }
    }
    let iterations_run = stop.trace.len() - 1;
    Ok(RetrievalResult { phase: obj.arg(), loss_trace: stop.trace, iterations_run, terminated_by: reason })
}

/// Sum-of-squares intensity misfit `sum (|A psi|^2 - I)^2`.
pub fn wf_loss(optic: &dyn LinearOptic, psi: &ComplexField2D, i_meas: &Image2D) -> f64 {
    let far = optic.apply(psi);
    far.data().iter().zip(i_meas.data()).map(|(z, i)| (z.norm_sqr() - i).powi(2)).sum()
}

/// Wirtinger gradient `2 A^H[(|A psi|^2 - I) A psi]` of [`wf_loss`].
pub fn wf_gradient(optic: &dyn LinearOptic, psi: &ComplexField2D, i_meas: &Image2D) -> ComplexField2D {
    let mut far = optic.apply(psi);
    for (z, i) in far.data_mut().iter_mut().zip(i_meas.data()) {
        *z *= 2.0 * (z.norm_sqr() - i);
    }
    optic.adjoint(&far)
}

fn spectral_init(optic: &dyn LinearOptic, i_meas: &Image2D, iters: usize, seed: u64) -> ComplexField2D {
    let (rows, cols) = optic.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = ComplexField2D::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    for _ in 0..iters.max(1) {
        let mut far = optic.apply(&v);
        for (z, i) in far.data_mut().iter_mut().zip(i_meas.data()) {
            *z *= *i;
        }
        v = optic.adjoint(&far);
        let n = v.power().sqrt();
        if n > 0.0 {
            v.data_mut().iter_mut().for_each(|z| *z /= n);
        }
    }
    // scale so that ||A v||^2 matches the total measured intensity
    let total: f64 = i_meas.data().iter().sum();
    let norm = optic.apply(&v).power().sqrt();
    if norm > 0.0 {
        let s = total.sqrt() / norm;
        v.data_mut().iter_mut().for_each(|z| *z *= s);
    }
    v
}

/// Wirtinger flow on an arbitrary linear optic.
pub fn wirtinger_flow_with(optic: &dyn LinearOptic, i_meas: &Image2D, opts: &SolverOptions) -> Result<RetrievalResult> {
    opts.validate()?;
    check_intensity(i_meas)?;
    let shape = optic.shape();
    if i_meas.shape() != shape {
        return Err(Error::Dimension(format!("intensity {:?} vs optic {:?}", i_meas.shape(), shape)));
    }
    let mean_i = i_meas.mean();
    let mut psi = match &opts.init {
        Init::Flat => ComplexField2D::filled(shape.0, shape.1, Complex64::new(mean_i.sqrt(), 0.0)),
        Init::Spectral { iters } => spectral_init(optic, i_meas, *iters, opts.seed),
        Init::Field(f) => {
            if f.shape() != shape {
                return Err(Error::Dimension("initial field shape mismatch".into()));
            }
            f.clone()
        }
        other => {
            let phase = initial_phase(other, shape, opts.seed)?;
            let a = mean_i.sqrt();
            ComplexField2D::from_vec(shape.0, shape.1, phase.data().iter().map(|&t| Complex64::from_polar(a, t)).collect())?
        }
    };
    let mut mu = match opts.step_size {
        StepSize::Fixed(m) => m,
        StepSize::Auto if mean_i > 0.0 => 0.1 / mean_i,
        StepSize::Auto => 0.1,
    };
    let mut stop = StopRule::new(opts.tol, wf_loss(optic, &psi, i_meas));
    let mut reason = Termination::MaxIters;
    if stop.trace[0] == 0.0 {
        reason = Termination::Tolerance;
    } else {
        for _ in 0..opts.max_iters {
            let grad = wf_gradient(optic, &psi, i_meas);
            for (p, g) in psi.data_mut().iter_mut().zip(grad.data()) {
                *p -= mu * g;
            }
            mu *= opts.step_decay;
            if let Some(r) = stop.record(wf_loss(optic, &psi, i_meas)) {
                reason = r;
                break;
            }
        }
    }
    let iterations_run = stop.trace.len() - 1;
    Ok(RetrievalResult { phase: psi.arg(), loss_trace: stop.trace, iterations_run, terminated_by: reason })
}

/// Wirtinger flow through angular-spectrum propagation.
pub fn wirtinger_flow(i_meas: &Image2D, cfg: &ImagingConfig, opts: &SolverOptions) -> Result<RetrievalResult> {
    let prop = Propagator::new(cfg)?;
    wirtinger_flow_with(&prop, i_meas, opts)
}

pub const DEFAULT_BORN_ALPHA: f64 = 1e-3;

/// Closed-form weak-phase inversion with Tikhonov regularisation `alpha`.
pub fn fourier_born_inverse(i_meas: &Image2D, cfg: &ImagingConfig) -> Result<Image2D> {
    fourier_born_inverse_with(i_meas, cfg, DEFAULT_BORN_ALPHA)
}

pub fn fourier_born_inverse_with(i_meas: &Image2D, cfg: &ImagingConfig, alpha: f64) -> Result<Image2D> {
    check_intensity(i_meas)?;
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("regularisation alpha must be positive, got {alpha}")));
    }
    let prop = Propagator::new(cfg)?;
    if i_meas.shape() != cfg.shape() {
        return Err(Error::Dimension(format!("intensity {:?} vs config {:?}", i_meas.shape(), cfg.shape())));
    }
    let ctf = prop.born_contrast_transfer();
    let mut spec = ComplexField2D::from_real(&i_meas.map(|v| (v / cfg.i0 - 1.0) / 2.0));
    prop.fft().forward(&mut spec);
    for (s, c) in spec.data_mut().iter_mut().zip(ctf.data()) {
        *s *= c / (c * c + alpha);
    }
    prop.fft().inverse(&mut spec);
    Ok(spec.real())
}

/// Relative L2 phase error restricted to frequencies where the Born contrast
/// transfer magnitude is at least `threshold`. Returns `None` if the truth has
/// no energy there.
pub fn born_band_error(estimate: &Image2D, truth: &Image2D, cfg: &ImagingConfig, threshold: f64) -> Result<Option<f64>> {
    estimate.ensure_same_shape(truth)?;
    let prop = Propagator::new(cfg)?;
    let ctf = prop.born_contrast_transfer();
    let mut de = ComplexField2D::from_real(&Image2D::from_vec(
        truth.rows(),
        truth.cols(),
        estimate.data().iter().zip(truth.data()).map(|(a, b)| a - b).collect(),
    )?);
    let mut t = ComplexField2D::from_real(truth);
    prop.fft().forward(&mut de);
    prop.fft().forward(&mut t);
    let (mut num, mut den) = (0.0, 0.0);
    for ((e, tv), c) in de.data().iter().zip(t.data()).zip(ctf.data()) {
        if c.abs() >= threshold {
            num += e.norm_sqr();
            den += tv.norm_sqr();
        }
    }
    Ok((den > 0.0).then(|| (num / den).sqrt()))
}

/// Intensity MSE of a phase estimate under the full model.
pub fn intensity_residual(phase: &Image2D, i_meas: &Image2D, cfg: &ImagingConfig) -> Result<f64> {
    let prop = Propagator::new(cfg)?;
    let far = intensity(&prop.propagate(&phase_to_field(phase, cfg)?)?);
    far.mse(i_meas)
}
