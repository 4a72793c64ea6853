//! Single-shot phase retrieval from in-line holograms: angular-spectrum optics,
//! classical solvers, untrained U-Net style priors fitted through the physics,
//! shape-from-shading meshes and no-reference quality scores.

pub mod classical;
pub mod cli;
pub mod error;
pub mod fft;
pub mod grid;
pub mod imageio;
pub mod metrics;
pub mod nets;
pub mod optics;
pub mod phantom;
pub mod pipeline;
pub mod surface;
pub mod tensor;
pub mod untrained;

pub use error::{Error, Result};
pub use grid::{ComplexField2D, Image2D};
