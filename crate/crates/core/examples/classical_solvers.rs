//! Gerchberg-Saxton, Wirtinger flow and the direct Born inverse on one
//! simulated measurement.

use phaseprior::classical::{
    born_band_error, fourier_born_inverse, gerchberg_saxton, intensity_residual, wirtinger_flow, SolverOptions,
};
use phaseprior::optics::{forward_born, forward_full, ImagingConfig};
use phaseprior::phantom::{generate, Phantom};

fn main() -> phaseprior::Result<()> {
    let n = 64;
    let cfg = ImagingConfig::new(n, n);
    // object in the central quarter, flat background around it
    let theta = generate(Phantom::Blob, n / 2, n / 2, 0.5)?.embed(n, n, 0.0)?;
    let i_meas = forward_full(&theta, &cfg)?;
    let support: Vec<bool> = (0..n * n).map(|k| (n / 4..3 * n / 4).contains(&(k / n)) && (n / 4..3 * n / 4).contains(&(k % n))).collect();

    let gs = gerchberg_saxton(&i_meas, &cfg, &SolverOptions { max_iters: 500, support: Some(support), ..Default::default() })?;
    println!(
        "GS    {:>4} iterations ({:<10}) loss {:.3e} -> {:.3e}",
        gs.iterations_run,
        gs.terminated_by.name(),
        gs.loss_trace[0],
        gs.loss_trace.last().unwrap()
    );

    let wf = wirtinger_flow(&i_meas, &cfg, &SolverOptions { max_iters: 500, ..Default::default() })?;
    println!(
        "WF    {:>4} iterations ({:<10}) intensity MSE {:.3e}",
        wf.iterations_run,
        wf.terminated_by.name(),
        intensity_residual(&wf.phase, &i_meas, &cfg)?
    );

    let weak = generate(Phantom::TextMask, n, n, 0.05)?;
    let i_born = forward_born(&weak, &cfg)?;
    let est = fourier_born_inverse(&i_born, &cfg)?;
    let err = born_band_error(&est, &weak, &cfg, 0.2)?.unwrap_or(f64::NAN);
    println!("Born  closed form, error where |CTF| >= 0.2: {:.2}%", 100.0 * err);
    Ok(())
}
