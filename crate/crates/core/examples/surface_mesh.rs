//! Shape from shading on a phase map, written out as a Wavefront mesh.
//!
//! `cargo run --example surface_mesh -- out.obj`

use std::fs::File;
use std::io::BufWriter;

use phaseprior::metrics::{mesh_mse, mesh_skewness};
use phaseprior::phantom::{generate, Phantom};
use phaseprior::surface::{mesh_from_height, reconstruct_surface, HeightField, SurfaceOptions};

fn main() -> phaseprior::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "surface.obj".into());
    let theta = generate(Phantom::Blob, 64, 64, 1.0)?;

    let sfs = reconstruct_surface(&theta, &SurfaceOptions::default())?;
    println!("fast sweeping: {} sweeps, converged {}", sfs.sweeps(), sfs.converged);
    let direct = HeightField { u: theta.normalized(), h: sfs.height.h };

    for (name, height) in [("shape from shading", &sfs.height), ("phase as height", &direct)] {
        let skew = mesh_skewness(&mesh_from_height(height)?)?;
        println!("{name:<20} skewness mean {:.4} max {:.4}", skew.mean, skew.max);
    }
    println!("mesh MSE between the two: {:.4e}", mesh_mse(&sfs.height, &direct)?);

    let mesh = mesh_from_height(&sfs.height)?;
    mesh.write_obj(BufWriter::new(File::create(&path)?))?;
    println!("wrote {} vertices, {} triangles to {path}", mesh.vertices.len(), mesh.triangles.len());
    Ok(())
}
