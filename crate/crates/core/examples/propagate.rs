//! Free-space propagation of a phase object: full model against the weak-phase
//! (Born) approximation, over a range of phase strengths.

use phaseprior::optics::{forward_born, forward_full, ImagingConfig, Propagator};
use phaseprior::phantom::{generate, Phantom};

fn main() -> phaseprior::Result<()> {
    let cfg = ImagingConfig::new(64, 64);
    println!("wavelength {:.2e} m, distance {:.2e} m, pitch {:.2e} m", cfg.wavelength, cfg.distance, cfg.pixel_pitch);

    let ctf = Propagator::new(&cfg)?.born_contrast_transfer();
    println!("contrast transfer range [{:.3}, {:.3}]", ctf.min(), ctf.max());

    println!("{:>10} {:>12} {:>12} {:>14}", "amplitude", "contrast", "I range", "max |full-born|");
    for amp in [1e-3, 1e-2, 0.1, 0.5, 1.0, 3.0] {
        let theta = generate(Phantom::Steps, 64, 64, amp)?;
        let full = forward_full(&theta, &cfg)?;
        let born = forward_born(&theta, &cfg)?;
        let gap = full.data().iter().zip(born.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let contrast = (full.max() - full.min()) / (full.max() + full.min());
        println!("{amp:>10.0e} {contrast:>12.4e} {:>12.4} {gap:>14.3e}", full.max() - full.min());
    }
    Ok(())
}
