//! Parameter counts and a forward pass of each architecture at several widths.

use std::time::Instant;

use phaseprior::nets::{build, NetworkKind, NetworkSpec};
use phaseprior::Image2D;

fn main() -> phaseprior::Result<()> {
    let x = Image2D::from_fn(64, 64, |r, c| 0.5 + 0.5 * ((r as f64 / 9.0).sin() * (c as f64 / 7.0).cos()));
    println!("{:<10} {:>5} {:>10} {:>12}", "network", "base", "params", "forward ms");
    for kind in NetworkKind::ALL {
        for base in [4, 8, 16] {
            let net = build(&NetworkSpec::new(kind).with_base_channels(base))?;
            let t = Instant::now();
            let theta = net.forward_phase(&x)?;
            let ms = t.elapsed().as_secs_f64() * 1e3;
            assert_eq!(theta.shape(), x.shape());
            println!("{:<10} {base:>5} {:>10} {ms:>12.1}", kind.label(), net.parameter_count());
        }
    }
    Ok(())
}
