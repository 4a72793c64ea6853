//! Regenerate `data/pristine.mvg`, the NSS model used by the BRISQUE-f and
//! NIQE scores, from the procedural dead-leaves corpus.
//!
//! ```text
//! cargo run --release --example fit_pristine_model [output path]
//! ```

use std::fs::File;
use std::io::BufWriter;

use phaseprior::metrics::{fit_pristine_model, pristine_corpus};

fn main() -> phaseprior::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/pristine.mvg").to_string());
    let corpus = pristine_corpus();
    let model = fit_pristine_model(&corpus)?;
    model.write(BufWriter::new(File::create(&path)?))?;
    let eig = model.cov.clone().symmetric_eigenvalues();
    println!("fitted {} images -> {path}", corpus.len());
    println!("feature mean (first scale): {:.4?}", &model.mean.as_slice()[..18]);
    println!("covariance eigenvalue range: [{:.3e}, {:.3e}]", eig.min(), eig.max());
    Ok(())
}
