//! One module per subcommand; each exposes its clap `Args` struct and a
//! `run` function that does the work and fills in the run manifest.

pub mod align;
pub mod carve;
pub mod lift_demo;
pub mod loss;
pub mod masks;
pub mod mesh_sdf;
pub mod metrics;
pub mod render_depth;
pub mod slice;
pub mod surface;
pub mod tsdf_fuse;
