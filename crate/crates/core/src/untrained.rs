//! Per-image fitting of a randomly initialised network through the
//! diffraction model: the network predicts a phase, the forward model turns it
//! into an intensity, and the intensity MSE drives Adam.

use std::sync::Arc;
use std::time::Instant;

use crate::classical::Termination;
use crate::error::{Error, Result};
use crate::grid::Image2D;
use crate::nets::{build, NetworkSpec};
use crate::optics::{ForwardModel, ImagingConfig, Propagator};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

/// How the `tol` threshold is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ToleranceMode {
    /// Stop when `|L_j - L_{j-1}| / L_0 < tol`.
    #[default]
    RelativeChange,
    /// Stop when `L_j < tol`.
    AbsoluteLoss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub model: ForwardModel,
    pub max_iters: usize,
    pub tol: f64,
    pub tol_mode: ToleranceMode,
    pub lr: f64,
    /// Overrides the network spec seed so that every compared network starts from the same stream.
    pub seed: u64,
    /// Record `(iteration, loss, seconds)` every `log_every` iterations; 0 disables.
    pub log_every: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { model: ForwardModel::Full, max_iters: 1000, tol: 1e-4, tol_mode: ToleranceMode::RelativeChange, lr: 1e-2, seed: 0, log_every: 0 }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub phase: Image2D,
    /// `loss_trace[j]` is the loss after `j` optimiser steps.
    pub loss_trace: Vec<f64>,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    pub wall_time: f64,
    /// `(iteration, loss, seconds)` rows when logging is enabled.
    pub log: Vec<(usize, f64, f64)>,
}

impl FitResult {
    /// Finite trace ending no higher than it started, without divergence.
    pub fn is_success(&self) -> bool {
        self.terminated_by != Termination::Divergence
            && self.loss_trace.iter().all(|v| v.is_finite())
            && self.loss_trace.last() <= self.loss_trace.first()
    }

    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("non-empty trace")
    }
}

/// Decides whether fitting should stop after recording `loss`.
fn tolerance_reached(mode: ToleranceMode, tol: f64, trace: &[f64]) -> bool {
    let last = trace[trace.len() - 1];
    match mode {
        ToleranceMode::AbsoluteLoss => last < tol,
        ToleranceMode::RelativeChange => {
            if trace.len() < 2 {
                return trace[0] == 0.0;
            }
            (last - trace[trace.len() - 2]).abs() < tol * trace[0]
        }
    }
}

/// Fit a fresh network to one intensity measurement.
pub fn retrieve_untrained(i_meas: &Image2D, cfg: &ImagingConfig, spec: &NetworkSpec, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    if i_meas.shape() != cfg.shape() {
        return Err(Error::Input(format!("intensity {:?} does not match config {:?}", i_meas.shape(), cfg.shape())));
    }
    if i_meas.data().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Input("measured intensity must be finite and non-negative".into()));
    }
    let peak = i_meas.max();
    if peak <= 0.0 {
        return Err(Error::Input("measured intensity is identically zero".into()));
    }
    let mut spec = spec.clone();
    spec.seed = opts.seed;
    spec.check_input(i_meas.rows(), i_meas.cols()).map_err(|e| Error::Input(e.to_string()))?;
    let mut net = build(&spec)?;
    let prop = Arc::new(Propagator::new(cfg)?);
    let i_norm = i_meas.map(|v| v / peak);
    let target = Tensor::new(vec![1, i_meas.rows(), i_meas.cols()], i_meas.data().to_vec())?;
    let mut adam = Adam::new(AdamConfig { lr: opts.lr, ..Default::default() })?;

    let start = Instant::now();
    let mut trace = Vec::new();
    let mut log = Vec::new();
    let mut phase = Image2D::zeros(i_meas.rows(), i_meas.cols());
    let mut reason = Termination::MaxIters;
    loop {
        let step = trace.len();
        let mut g = Graph::new();
        let pass = (|| -> Result<_> {
            let (theta, params) = net.forward_graph(&mut g, &i_norm)?;
            let theta_img = Image2D::from_vec(i_meas.rows(), i_meas.cols(), g.value(theta).data().to_vec())?;
            let (pred, vjp) = opts.model.apply_with_vjp(Arc::clone(&prop), &theta_img)?;
            let pred = g.custom(theta, Tensor::new(vec![1, pred.rows(), pred.cols()], pred.into_vec())?, vjp)?;
            let t = g.constant(target.clone());
            let loss = g.mse_loss(pred, t)?;
            Ok((theta_img, params, loss))
        })();
        let (theta_img, params, loss) = match pass {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                reason = Termination::Divergence;
                break;
            }
            Err(e) => return Err(e),
        };
        let l = g.value(loss).item();
        trace.push(l);
        phase = theta_img;
        if opts.log_every > 0 && step % opts.log_every == 0 {
            log.push((step, l, start.elapsed().as_secs_f64()));
        }
        if step > 0 && l > crate::classical::DIVERGENCE_FACTOR * trace[0] {
            reason = Termination::Divergence;
            break;
        }
        if tolerance_reached(opts.tol_mode, opts.tol, &trace) {
            reason = Termination::Tolerance;
            break;
        }
        if step == opts.max_iters {
            break;
        }
        if let Err(e) = g.backward(loss) {
            if matches!(e, Error::NonFinite(_)) {
                reason = Termination::Divergence;
                break;
            }
            return Err(e);
        }
        let grads: Vec<Tensor> = params.iter().map(|v| g.grad(*v)).collect();
        adam.step(net.params_mut(), &grads)?;
    }
    if trace.is_empty() {
        return Err(Error::NonFinite("network output is not finite at initialisation".into()));
    }
    Ok(FitResult {
        phase,
        iterations_run: trace.len() - 1,
        loss_trace: trace,
        terminated_by: reason,
        wall_time: start.elapsed().as_secs_f64(),
        log,
    })
}

/// One row of a network comparison.
#[derive(Debug)]
pub struct ComparisonRow {
    pub spec: NetworkSpec,
    pub result: Result<FitResult>,
}

/// Fit every spec with the same options, in order. Failures are kept per row.
pub fn compare_networks(i_meas: &Image2D, cfg: &ImagingConfig, specs: &[NetworkSpec], opts: &FitOptions) -> Vec<ComparisonRow> {
    specs
        .iter()
        .map(|spec| ComparisonRow { spec: spec.clone(), result: retrieve_untrained(i_meas, cfg, spec, opts) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetworkKind;
    use crate::optics::forward_born;
    use crate::phantom::{generate, Phantom};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(kind: NetworkKind) -> NetworkSpec {
        NetworkSpec::new(kind).with_depth(2).with_base_channels(4).with_inner_depth(2).with_stages(2)
    }

    fn measurement(n: usize, amp: f64, model: ForwardModel) -> (ImagingConfig, Image2D) {
        let cfg = ImagingConfig::new(n, n);
        let theta = generate(Phantom::Blob, n, n, amp).unwrap();
        let prop = Propagator::new(&cfg).unwrap();
        (cfg, model.apply(&prop, &theta).unwrap())
    }

    #[test]
    fn relative_rule_fires_on_plateau() {
        let trace = [10.0, 5.0, 4.0, 4.0005];
        assert!(!tolerance_reached(ToleranceMode::RelativeChange, 1e-4, &trace[..3]));
        assert!(tolerance_reached(ToleranceMode::RelativeChange, 1e-4, &trace));
        assert!(!tolerance_reached(ToleranceMode::RelativeChange, 1e-5, &trace));
        assert!(tolerance_reached(ToleranceMode::AbsoluteLoss, 4.1, &trace));
        assert!(tolerance_reached(ToleranceMode::RelativeChange, 1e-4, &[0.0]));
    }

    #[test]
    fn short_fit_descends_and_is_deterministic() {
        let (cfg, i) = measurement(16, 1.0, ForwardModel::Full);
        let opts = FitOptions { max_iters: 30, tol: 0.0, log_every: 10, ..Default::default() };
        let a = retrieve_untrained(&i, &cfg, &tiny(NetworkKind::UNet), &opts).unwrap();
        let b = retrieve_untrained(&i, &cfg, &tiny(NetworkKind::UNet), &opts).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.phase, b.phase);
        assert_eq!(a.iterations_run, 30);
        assert_eq!(a.loss_trace.len(), 31);
        assert_eq!(a.terminated_by, Termination::MaxIters);
        assert!(a.is_success());
        assert_eq!(a.log.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 10, 20, 30]);
    }

    #[test]
    fn flat_born_measurement_is_matched_at_zero_distance() {
        let cfg = ImagingConfig::new(16, 16).with_distance(0.0);
        let i = Image2D::filled(16, 16, cfg.i0);
        assert_eq!(forward_born(&Image2D::filled(16, 16, 0.7), &cfg).unwrap(), i);
        let opts = FitOptions { model: ForwardModel::Born, max_iters: 3, ..Default::default() };
        let res = retrieve_untrained(&i, &cfg, &tiny(NetworkKind::U2Net), &opts).unwrap();
        assert!(res.loss_trace[0] <= 1e-2 * cfg.i0 * cfg.i0);
        assert_eq!(res.terminated_by, Termination::Tolerance);
    }

    #[test]
    fn born_fit_beats_random_phase_baseline() {
        let (cfg, i) = measurement(16, 0.1, ForwardModel::Born);
        let opts = FitOptions { model: ForwardModel::Born, max_iters: 150, tol: 0.0, ..Default::default() };
        let res = retrieve_untrained(&i, &cfg, &tiny(NetworkKind::UNet), &opts).unwrap();
        let prop = Propagator::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let random = Image2D::from_fn(16, 16, |_, _| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let baseline = ForwardModel::Born.apply(&prop, &random).unwrap().mse(&i).unwrap();
        assert!(res.final_loss() * 10.0 <= baseline, "{} vs {baseline}", res.final_loss());
    }

    #[test]
    fn input_errors() {
        let (cfg, i) = measurement(16, 1.0, ForwardModel::Full);
        let spec = tiny(NetworkKind::UNet);
        assert!(matches!(retrieve_untrained(&Image2D::zeros(16, 16), &cfg, &spec, &FitOptions::default()), Err(Error::Input(_))));
        let odd = ImagingConfig::new(18, 18);
        assert!(matches!(retrieve_untrained(&Image2D::filled(18, 18, 1.0), &odd, &spec, &FitOptions::default()), Err(Error::Input(_))));
        assert!(retrieve_untrained(&i, &cfg, &spec, &FitOptions { max_iters: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn comparison_rows_follow_spec_order() {
        let (cfg, i) = measurement(16, 1.0, ForwardModel::Full);
        let specs = [tiny(NetworkKind::UNet), tiny(NetworkKind::UNet).with_depth(1), tiny(NetworkKind::UNet)];
        let opts = FitOptions { max_iters: 5, ..Default::default() };
        let rows = compare_networks(&i, &cfg, &specs, &opts);
        assert_eq!(rows.len(), 3);
        assert!(rows[1].result.is_err());
        let (a, c) = (rows[0].result.as_ref().unwrap(), rows[2].result.as_ref().unwrap());
        assert_eq!(a.loss_trace, c.loss_trace);
    }
}
