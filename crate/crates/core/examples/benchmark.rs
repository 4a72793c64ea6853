//! The full benchmark on built-in phantoms: every solver under both forward
//! models, scored in 2D and 3D. Network budgets are kept small.

use phaseprior::metrics::MvgModel;
use phaseprior::optics::{ForwardModel, ImagingConfig};
use phaseprior::phantom::{generate, Phantom};
use phaseprior::pipeline::{benchmark_image, Benchmark, Solver, SolverParams};
use phaseprior::surface::SurfaceOptions;

fn main() -> phaseprior::Result<()> {
    let n = 64;
    let cfg = ImagingConfig::new(n, n);
    let mut params = SolverParams::default();
    params.network = params.network.with_base_channels(8);
    params.fit.max_iters = 200;
    params.classical.max_iters = 300;

    let models = [ForwardModel::Full, ForwardModel::Born];
    let mut bench = Benchmark::default();
    for kind in [Phantom::Blob, Phantom::Steps] {
        let theta = generate(kind, n, n, 1.0)?;
        benchmark_image(kind.name(), &theta, &cfg, &Solver::ALL, &models, &params, MvgModel::bundled(), &SurfaceOptions::default(), &mut bench)?;
    }
    print!("{}", bench.tables(&Solver::ALL, &models));
    print!("{}", bench.ordering_report(&models));
    for f in &bench.failures {
        println!("failed: {} {} {}: {}", f.image, f.solver.name(), f.model.name(), f.reason);
    }
    Ok(())
}
