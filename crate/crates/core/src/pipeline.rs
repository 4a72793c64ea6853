//! Solver dispatch and the benchmark protocol: simulate a measurement from a
//! ground-truth phase, retrieve with each solver under each forward model,
//! then score the 2D estimate (BRISQUE-f, NIQE) and its 3D surface (mesh MSE
//! against the ground-truth surface, skewness).

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::classical::{fourier_born_inverse_with, gerchberg_saxton, wirtinger_flow, SolverOptions, Termination, DEFAULT_BORN_ALPHA};
use crate::error::{Error, Result};
use crate::grid::Image2D;
use crate::metrics::{brisque, mesh_mse, mesh_skewness, niqe, MvgModel, Skewness};
use crate::nets::{NetworkKind, NetworkSpec};
use crate::optics::{forward_full, ForwardModel, ImagingConfig, Propagator};
use crate::surface::{mesh_from_height, reconstruct_surface, SurfaceOptions};
use crate::untrained::{retrieve_untrained, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Gs,
    Wf,
    Born,
    Net(NetworkKind),
}

impl Solver {
    pub const ALL: [Solver; 6] =
        [Solver::Gs, Solver::Wf, Solver::Born, Solver::Net(NetworkKind::UNet), Solver::Net(NetworkKind::U2Net), Solver::Net(NetworkKind::ResU2Net)];

    pub fn name(&self) -> &'static str {
        match self {
            Solver::Gs => "gs",
            Solver::Wf => "wf",
            Solver::Born => "born",
            Solver::Net(k) => k.name(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Solver::Gs => "GS",
            Solver::Wf => "WF",
            Solver::Born => "Born",
            Solver::Net(k) => k.label(),
        }
    }

    /// Forward model the solver is built on, if it is fixed.
    pub fn native_model(&self) -> Option<ForwardModel> {
        match self {
            Solver::Gs | Solver::Wf => Some(ForwardModel::Full),
            Solver::Born => Some(ForwardModel::Born),
            Solver::Net(_) => None,
        }
    }

    pub fn supports(&self, model: ForwardModel) -> bool {
        self.native_model().is_none_or(|m| m == model)
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gs" => Ok(Solver::Gs),
            "wf" => Ok(Solver::Wf),
            "born" => Ok(Solver::Born),
            other => other
                .parse::<NetworkKind>()
                .map(Solver::Net)
                .map_err(|_| Error::Usage(format!("unknown solver '{s}' (expected gs, wf, born, unet, u2net or resu2net)"))),
        }
    }
}

/// Everything a solver may need; each solver reads its own part.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub classical: SolverOptions,
    pub born_alpha: f64,
    /// Template; the kind is taken from the solver.
    pub network: NetworkSpec,
    /// The forward model is taken from the call.
    pub fit: FitOptions,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            classical: SolverOptions::default(),
            born_alpha: DEFAULT_BORN_ALPHA,
            network: NetworkSpec::new(NetworkKind::UNet),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub phase: Image2D,
    pub loss_trace: Vec<f64>,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    pub wall_time: f64,
    /// `(iteration, loss, seconds)`; only network solvers log.
    pub log: Vec<(usize, f64, f64)>,
}

impl Outcome {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("non-empty trace")
    }
}

/// Run one solver on one measurement.
pub fn retrieve(solver: Solver, model: ForwardModel, i_meas: &Image2D, cfg: &ImagingConfig, params: &SolverParams) -> Result<Outcome> {
    if !solver.supports(model) {
        return Err(Error::Usage(format!("solver {} only supports the {} model", solver.name(), solver.native_model().expect("fixed").name())));
    }
    let start = Instant::now();
    let classical = |r: crate::classical::RetrievalResult| Outcome {
        phase: r.phase,
        loss_trace: r.loss_trace,
        iterations_run: r.iterations_run,
        terminated_by: r.terminated_by,
        wall_time: start.elapsed().as_secs_f64(),
        log: Vec::new(),
    };
    match solver {
        Solver::Gs => gerchberg_saxton(i_meas, cfg, &params.classical).map(classical),
        Solver::Wf => wirtinger_flow(i_meas, cfg, &params.classical).map(classical),
        Solver::Born => {
            let phase = fourier_born_inverse_with(i_meas, cfg, params.born_alpha)?;
            let loss = ForwardModel::Born.apply(&Propagator::new(cfg)?, &phase)?.mse(i_meas)?;
            Ok(Outcome {
                phase,
                loss_trace: vec![loss],
                iterations_run: 0,
                terminated_by: Termination::ClosedForm,
                wall_time: start.elapsed().as_secs_f64(),
                log: Vec::new(),
            })
        }
        Solver::Net(kind) => {
            let mut spec = params.network.clone();
            spec.kind = kind;
            let fit = FitOptions { model, ..params.fit.clone() };
            let r = retrieve_untrained(i_meas, cfg, &spec, &fit)?;
            Ok(Outcome {
                phase: r.phase,
                loss_trace: r.loss_trace,
                iterations_run: r.iterations_run,
                terminated_by: r.terminated_by,
                wall_time: r.wall_time,
                log: r.log,
            })
        }
    }
}

/// One (image, solver, model) measurement of the benchmark.
#[derive(Debug, Clone)]
pub struct Cell {
    pub image: String,
    pub solver: Solver,
    pub model: ForwardModel,
    pub brisque: f64,
    pub niqe: f64,
    pub mesh_mse: f64,
    pub skewness: Skewness,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    pub final_loss: f64,
    pub wall_time: f64,
}

/// A benchmark cell that could not be computed.
#[derive(Debug, Clone)]
pub struct FailedCell {
    pub image: String,
    pub solver: Solver,
    pub model: ForwardModel,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Benchmark {
    pub cells: Vec<Cell>,
    pub failures: Vec<FailedCell>,
}

/// Score every supported (solver, model) pair on one ground-truth phase.
/// The measurement is always simulated with the full model.
pub fn benchmark_image(
    name: &str,
    theta_true: &Image2D,
    cfg: &ImagingConfig,
    solvers: &[Solver],
    models: &[ForwardModel],
    params: &SolverParams,
    nss: &MvgModel,
    surface: &SurfaceOptions,
    out: &mut Benchmark,
) -> Result<()> {
    let i_meas = forward_full(theta_true, cfg)?;
    let truth_height = reconstruct_surface(theta_true, surface)?.height;
    for &solver in solvers {
        for &model in models {
            if !solver.supports(model) {
                continue;
            }
            let cell = (|| -> Result<Cell> {
                let o = retrieve(solver, model, &i_meas, cfg, params)?;
                let img = o.phase.normalized();
                let height = reconstruct_surface(&o.phase, surface)?.height;
                Ok(Cell {
                    image: name.to_string(),
                    solver,
                    model,
                    brisque: brisque(&img, nss)?.value,
                    niqe: niqe(&img, nss)?.value,
                    mesh_mse: mesh_mse(&height, &truth_height)?,
                    skewness: mesh_skewness(&mesh_from_height(&height)?)?,
                    iterations_run: o.iterations_run,
                    terminated_by: o.terminated_by,
                    final_loss: o.final_loss(),
                    wall_time: o.wall_time,
                })
            })();
            match cell {
                Ok(c) => out.cells.push(c),
                Err(e) => out.failures.push(FailedCell { image: name.to_string(), solver, model, reason: e.to_string() }),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Brisque,
    Niqe,
    MeshMse,
    Skewness,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Brisque, Measure::Niqe, Measure::MeshMse, Measure::Skewness];

    pub fn title(&self) -> &'static str {
        match self {
            Measure::Brisque => "2D phase retrieval: BRISQUE-f (lower is better)",
            Measure::Niqe => "2D phase retrieval: NIQE (lower is better)",
            Measure::MeshMse => "3D reconstruction: mesh MSE against ground truth (lower is better)",
            Measure::Skewness => "3D reconstruction: mean triangle skewness (lower is better)",
        }
    }

    fn of(&self, c: &Cell) -> f64 {
        match self {
            Measure::Brisque => c.brisque,
            Measure::Niqe => c.niqe,
            Measure::MeshMse => c.mesh_mse,
            Measure::Skewness => c.skewness.mean,
        }
    }
}

impl Benchmark {
    /// Mean of a measure over images for one (solver, model), if any cell exists.
    pub fn mean(&self, m: Measure, solver: Solver, model: ForwardModel) -> Option<f64> {
        let vals: Vec<f64> = self.cells.iter().filter(|c| c.solver == solver && c.model == model).map(|c| m.of(c)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Four aligned-column tables, rows = solvers, columns = forward models.
    pub fn tables(&self, solvers: &[Solver], models: &[ForwardModel]) -> String {
        let mut s = String::new();
        for m in Measure::ALL {
            let _ = writeln!(s, "{}", m.title());
            let _ = write!(s, "{:<12}", "network");
            for model in models {
                let _ = write!(s, " {:>14}", model_label(*model));
            }
            s.push('\n');
            for &solver in solvers {
                let _ = write!(s, "{:<12}", solver.label());
                for &model in models {
                    match self.mean(m, solver, model) {
                        Some(v) => write!(s, " {:>14.4}", v),
                        None => write!(s, " {:>14}", "-"),
                    }
                    .expect("string write");
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }

    /// Whether Res-U2Net <= U2Net <= UNet holds for the 2D scores, per model.
    /// Reported only; no pass/fail is attached.
    pub fn ordering_report(&self, models: &[ForwardModel]) -> String {
        let mut s = String::from("Network ordering (expected Res-U2Net <= U2Net <= UNet):\n");
        for m in [Measure::Brisque, Measure::Niqe] {
            for &model in models {
                let vals: Vec<Option<f64>> =
                    [NetworkKind::ResU2Net, NetworkKind::U2Net, NetworkKind::UNet].iter().map(|k| self.mean(m, Solver::Net(*k), model)).collect();
                let name = if m == Measure::Brisque { "BRISQUE-f" } else { "NIQE" };
                let line = match vals[..] {
                    [Some(r), Some(u2), Some(u)] => {
                        let holds = r <= u2 && u2 <= u;
                        format!(
                            "  {name:<9} {:<12} Res-U2Net {r:.4} | U2Net {u2:.4} | UNet {u:.4} -> {}",
                            model_label(model),
                            if holds { "holds" } else { "does not hold" }
                        )
                    }
                    _ => format!("  {name:<9} {:<12} not all three networks were run", model_label(model)),
                };
                let _ = writeln!(s, "{line}");
            }
        }
        s
    }

    /// Per-cell CSV without timing columns, so reruns are byte-identical.
    pub fn csv(&self) -> String {
        let mut s = String::from("image,solver,model,brisque_f,niqe,mesh_mse,skew_mean,skew_max,iterations,terminated_by,final_loss\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{},{:.10e}",
                c.image,
                c.solver.name(),
                c.model.name(),
                c.brisque,
                c.niqe,
                c.mesh_mse,
                c.skewness.mean,
                c.skewness.max,
                c.iterations_run,
                c.terminated_by.name(),
                c.final_loss
            );
        }
        s
    }
}

fn model_label(m: ForwardModel) -> &'static str {
    match m {
        ForwardModel::Full => "Fourier",
        ForwardModel::Born => "Fourier-Born",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, Phantom};

    fn quick_params() -> SolverParams {
        let mut p = SolverParams::default();
        p.network = p.network.with_depth(2).with_base_channels(4).with_inner_depth(2);
        p.fit.max_iters = 5;
        p.classical.max_iters = 20;
        p
    }

    #[test]
    fn solver_names_parse() {
        for s in Solver::ALL {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
        }
        assert!(matches!("sgd".parse::<Solver>(), Err(Error::Usage(_))));
    }

    #[test]
    fn classical_solvers_reject_foreign_models() {
        let cfg = ImagingConfig::new(16, 16);
        let i = Image2D::filled(16, 16, 1.0);
        assert!(retrieve(Solver::Gs, ForwardModel::Born, &i, &cfg, &quick_params()).is_err());
        assert!(retrieve(Solver::Born, ForwardModel::Full, &i, &cfg, &quick_params()).is_err());
        let o = retrieve(Solver::Born, ForwardModel::Born, &i, &cfg, &quick_params()).unwrap();
        assert_eq!(o.terminated_by, Termination::ClosedForm);
    }

    #[test]
    fn benchmark_fills_supported_cells() {
        let cfg = ImagingConfig::new(32, 32);
        let theta = generate(Phantom::Blob, 32, 32, 1.0).unwrap();
        let solvers = [Solver::Gs, Solver::Born, Solver::Net(NetworkKind::UNet)];
        let models = [ForwardModel::Full, ForwardModel::Born];
        let mut b = Benchmark::default();
        benchmark_image("blob", &theta, &cfg, &solvers, &models, &quick_params(), MvgModel::bundled(), &SurfaceOptions::default(), &mut b)
            .unwrap();
        assert!(b.failures.is_empty(), "{:?}", b.failures);
        assert_eq!(b.cells.len(), 4);
        assert!(b.cells.iter().all(|c| c.brisque.is_finite() && c.niqe.is_finite() && c.mesh_mse.is_finite()));
        let tables = b.tables(&solvers, &models);
        assert_eq!(tables.matches("(lower is better)").count(), 4);
        assert!(tables.contains(" -"));
        assert_eq!(b.csv().lines().count(), 5);
        assert!(b.ordering_report(&models).contains("not all three"));
    }
}
