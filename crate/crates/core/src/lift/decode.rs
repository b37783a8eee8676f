//! Convolutional decoding of a latent volume to a scalar grid.
//!
//! Two kernel-2 stride-2 transposed convolutions (each output voxel draws on
//! exactly one input voxel, so the upsampling is overlap-free) with leaky
//! rectification, followed by a linear single-channel projection — no output
//! squashing, the decoded values are unbounded like a distance field.

use rayon::prelude::*;

use super::{component_rng, symmetric, LatentVolume, DECODER_STREAM};
use crate::grid::VoxelGrid;
use crate::Result;

const LEAKY_SLOPE: f64 = 0.1;

fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Fixed seeded weights of the decoding head.
struct DecoderWeights {
    /// Stage-one kernels: `[corner][out_channel][in_channel]`, flattened.
    w1: Vec<f64>,
    /// Stage-two kernels, same layout.
    w2: Vec<f64>,
    /// Final 1x1x1 projection to one channel.
    proj: Vec<f64>,
    c1: usize,
    c2: usize,
}

impl DecoderWeights {
    fn channel_plan(d: usize) -> (usize, usize) {
        ((d / 2).max(8), (d / 4).max(4))
    }

    fn draw(d: usize, seed: u64) -> Self {
        let (c1, c2) = Self::channel_plan(d);
        let mut rng = component_rng(seed, DECODER_STREAM);
        let mut kernel = |fan_in: usize, count: usize| -> Vec<f64> {
            let scale = 1.0 / (fan_in as f64).sqrt();
            (0..count).map(|_| symmetric(&mut rng) * scale).collect()
        };
        let w1 = kernel(d, 8 * c1 * d);
        let w2 = kernel(c1, 8 * c2 * c1);
        let proj = kernel(c2, c2);
        Self {
            w1,
            w2,
            proj,
            c1,
            c2,
        }
    }
}

/// One transposed-convolution stage: doubles the extent per axis. Output
/// voxel `(2i+a, 2j+b, 2k+c)` is a learned linear map (kernel corner
/// `(a, b, c)`) of input voxel `(i, j, k)`, passed through a leaky ReLU.
fn upsample_2x(
    input: &[f64],
    extent: usize,
    in_ch: usize,
    out_ch: usize,
    kernels: &[f64],
) -> Vec<f64> {
    let out_extent = 2 * extent;
    let mut output = vec![0.0; out_extent.pow(3) * out_ch];
    output
        .par_chunks_mut(out_ch)
        .enumerate()
        .for_each(|(idx, out_row)| {
            // Lattice order with the last axis fastest, matching grid layout.
            let z = idx % out_extent;
            let y = (idx / out_extent) % out_extent;
            let x = idx / (out_extent * out_extent);
            let corner = (x % 2) * 4 + (y % 2) * 2 + (z % 2);
            let in_idx = ((x / 2) * extent + y / 2) * extent + z / 2;
            let in_row = &input[in_idx * in_ch..(in_idx + 1) * in_ch];
            let kernel = &kernels[corner * out_ch * in_ch..(corner + 1) * out_ch * in_ch];
            for (oc, slot) in out_row.iter_mut().enumerate() {
                let weights = &kernel[oc * in_ch..(oc + 1) * in_ch];
                let mut acc = 0.0;
                for (w, v) in weights.iter().zip(in_row) {
                    acc += w * v;
                }
                *slot = leaky_relu(acc);
            }
        });
    output
}

/// Decodes a latent volume to a scalar grid at 4x the token extent over the
/// same unit volume, deterministically per the volume's configured seed.
pub fn decode_sdf(latent: &LatentVolume) -> Result<VoxelGrid> {
    let config = latent.config();
    let d = config.latent_dim;
    let weights = DecoderWeights::draw(d, config.seed);
    let e = config.latent_extent;

    let f1 = upsample_2x(latent.data(), e, d, weights.c1, &weights.w1);
    let f2 = upsample_2x(&f1, 2 * e, weights.c1, weights.c2, &weights.w2);

    let mut values = vec![0.0; (4 * e).pow(3)];
    values
        .par_iter_mut()
        .zip(f2.par_chunks(weights.c2))
        .for_each(|(slot, feat)| {
            let mut acc = 0.0;
            for (w, v) in weights.proj.iter().zip(feat) {
                acc += w * v;
            }
            *slot = acc;
        });

    VoxelGrid::new(config.output_spec()?, values)
}
