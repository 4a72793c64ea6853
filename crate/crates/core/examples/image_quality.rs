//! No-reference quality scores of a textured image under increasing noise.

use phaseprior::metrics::{brisque, niqe, MvgModel};
use phaseprior::phantom::{add_noise, dead_leaves, generate, Phantom};

fn main() -> phaseprior::Result<()> {
    let model = MvgModel::bundled();
    let img = dead_leaves(96, 96, 42);
    println!("{:>6} {:>10} {:>10}", "sigma", "BRISQUE-f", "NIQE");
    for sigma in [0.0, 0.01, 0.02, 0.05, 0.1, 0.2] {
        let noisy = add_noise(&img.map(|v| v + 0.5), sigma, 7);
        println!("{sigma:>6.2} {:>10.3} {:>10.3}", brisque(&noisy, model)?.value, niqe(&noisy, model)?.value);
    }

    println!();
    for kind in Phantom::ALL {
        let p = generate(kind, 64, 64, 1.0)?;
        println!("{:<10} BRISQUE-f {:>9.3}  NIQE {:>9.3}", kind.name(), brisque(&p, model)?.value, niqe(&p, model)?.value);
    }
    Ok(())
}
