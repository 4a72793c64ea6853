//! Fit UNet, U2Net and Res-U2Net to one simulated 64x64 hologram and compare.

use phaseprior::nets::{NetworkKind, NetworkSpec};
use phaseprior::optics::{forward_full, ImagingConfig};
use phaseprior::phantom::{generate, Phantom};
use phaseprior::untrained::{compare_networks, FitOptions};

fn main() -> phaseprior::Result<()> {
    let n = 64;
    let cfg = ImagingConfig::new(n, n);
    let theta = generate(Phantom::Blob, n, n, 1.0)?;
    let i_meas = forward_full(&theta, &cfg)?;
    let specs: Vec<NetworkSpec> = NetworkKind::ALL
        .iter()
        .map(|k| NetworkSpec::new(*k).with_depth(3).with_base_channels(8).with_inner_depth(3).with_stages(2))
        .collect();
    let opts = FitOptions::default();
    println!("{:<10} {:>12} {:>12} {:>7} {:>10} {:>8}", "network", "loss_0", "loss_end", "iters", "stop", "secs");
    for row in compare_networks(&i_meas, &cfg, &specs, &opts) {
        match row.result {
            Ok(r) => println!(
                "{:<10} {:>12.4e} {:>12.4e} {:>7} {:>10} {:>8.1}",
                row.spec.kind.label(),
                r.initial_loss(),
                r.final_loss(),
                r.iterations_run,
                r.terminated_by.name(),
                r.wall_time
            ),
            Err(e) => println!("{:<10} failed: {e}", row.spec.kind.label()),
        }
    }
    Ok(())
}
