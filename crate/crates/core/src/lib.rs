//! Geometry toolkit for voxel signed-distance grids.
//!
//! The crate covers the full path from triangle meshes to evaluated distance
//! volumes:
//!
//! * [`grid`] — dense voxel containers, finite-difference gradients, local
//!   smoothness masks, and trilinear sampling.
//! * [`mesh`] — triangle meshes, BVH-accelerated distance queries, ray-parity
//!   sign classification, near-surface sampling, and visibility carving.
//! * [`camera`] / [`render`] / [`tsdf`] — pinhole cameras, depth rendering,
//!   and truncated projective depth fusion.
//! * [`losses`] — masked distance/gradient/unit-norm objectives with
//!   deterministic reductions.
//! * [`surface`] — masked marching-cubes isosurface extraction.
//! * [`metrics`] — Chamfer distance, F-score, masked MAE, and exact EMD.
//! * [`align`] — closed-form similarity estimation and rigid ICP refinement.
//! * [`lift`] — a cross-attention decoder that lifts multi-view feature
//!   tokens into a latent volume and decodes it to an SDF grid.
//!
//! All file formats written by this crate are little-endian and byte-stable:
//! rerunning any operation with identical inputs and seeds reproduces
//! identical bytes.

pub mod align;
pub mod camera;
pub mod grid;
pub mod lift;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod render;
pub mod surface;
pub mod tsdf;
pub mod vsdf;

pub(crate) mod kdtree;
pub(crate) mod numeric;
pub(crate) mod sampling;

use thiserror::Error;

/// Crate-wide error type.
///
/// [`Error::Degenerate`] marks numerical failures (rank-deficient alignment,
/// empty visibility sets, divergent refinement); everything else is input
/// validation or I/O.
#[derive(Error, Debug)]
pub enum Error {
    /// A parameter or argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Two grids that must share a layout do not.
    #[error("grid spec mismatch: {0}")]
    SpecMismatch(String),
    /// A sample point fell outside the grid interior with clamping disabled.
    #[error("point ({:.6}, {:.6}, {:.6}) at index {index} is outside the grid sampling region", point[0], point[1], point[2])]
    OutOfBounds { index: usize, point: [f64; 3] },
    /// A file did not conform to the expected on-disk format.
    #[error("malformed {format} data: {detail}")]
    Format {
        format: &'static str,
        detail: String,
    },
    /// A computation failed for numerical rather than structural reasons.
    #[error("numerical failure: {0}")]
    Degenerate(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
