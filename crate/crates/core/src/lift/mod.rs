//! Forward-only multi-view token lifting.
//!
//! A volume of position-conditioned latent tokens is refined by interleaved
//! cross-attention (against 2D feature tokens injected stage by stage) and
//! self-attention, then decoded to a 4x-refined scalar grid by a small
//! transposed-convolution head. Weights are pseudo-random and fixed per seed:
//! the module exists to exercise shapes, determinism, and the attention
//! invariances of the architecture, not to produce trained-quality geometry.

mod attention;
mod decode;
mod toks;

pub use decode::decode_sdf;
pub use toks::{load_tokens, read_tokens_from, save_tokens, write_tokens_to};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::{Error, Result};

use attention::{attention_residual, layer_norm_rows, AttentionWeights};

/// Default unit volume bounds shared with the supervision grids.
const VOLUME_MIN: f64 = -0.5;
const VOLUME_MAX: f64 = 0.5;

/// Hyper-parameters of the lifting pipeline.
///
/// The default is a desk-scale toy configuration; [`LiftConfig::full_scale`]
/// matches the published model dimensions (16^3 tokens of width 2048,
/// decoded to 64^3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftConfig {
    /// Tokens per axis of the latent volume.
    pub latent_extent: usize,
    /// Channel width `d` of every token.
    pub latent_dim: usize,
    /// Number of injected 2D feature stages per sweep.
    pub n_stages: usize,
    /// How many times the full stage sequence is applied.
    pub n_repeats: usize,
    /// Attention heads; must divide `latent_dim`.
    pub n_heads: usize,
    /// Seed for every pseudo-random weight in the pipeline.
    pub seed: u64,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            latent_extent: 4,
            latent_dim: 32,
            n_stages: 4,
            n_repeats: 2,
            n_heads: 4,
            seed: 0,
        }
    }
}

impl LiftConfig {
    /// The published model dimensions: 16^3 tokens of width 2048, eight
    /// attention blocks, decoded to a 64^3 grid.
    pub fn full_scale() -> Self {
        Self {
            latent_extent: 16,
            latent_dim: 2048,
            ..Self::default()
        }
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.latent_extent == 0 || self.n_stages == 0 || self.n_repeats == 0 {
            return Err(Error::InvalidInput(format!(
                "extent, stages, and repeats must be positive, got {self:?}"
            )));
        }
        if self.latent_dim < 3 {
            return Err(Error::InvalidInput(format!(
                "latent_dim must be at least 3 (one positional channel per axis), got {}",
                self.latent_dim
            )));
        }
        if self.n_heads == 0 || self.latent_dim % self.n_heads != 0 {
            return Err(Error::InvalidInput(format!(
                "latent_dim {} must be divisible by n_heads {}",
                self.latent_dim, self.n_heads
            )));
        }
        Ok(())
    }

    /// Attention blocks executed per forward pass.
    pub fn n_blocks(&self) -> usize {
        self.n_stages * self.n_repeats
    }

    /// Tokens in the latent volume.
    pub fn token_count(&self) -> usize {
        self.latent_extent.pow(3)
    }

    /// Side length of the decoded grid (two 2x upsampling stages).
    pub fn output_extent(&self) -> usize {
        4 * self.latent_extent
    }

    /// Layout of the latent token lattice over the unit volume.
    pub fn latent_spec(&self) -> Result<GridSpec> {
        GridSpec::cell_centered(
            [self.latent_extent; 3],
            Vector3::repeat(VOLUME_MIN),
            Vector3::repeat(VOLUME_MAX),
        )
    }

    /// Layout of the decoded grid over the unit volume.
    pub fn output_spec(&self) -> Result<GridSpec> {
        GridSpec::cell_centered(
            [self.output_extent(); 3],
            Vector3::repeat(VOLUME_MIN),
            Vector3::repeat(VOLUME_MAX),
        )
    }
}

/// Deterministic per-component RNG stream so the embedding, the attention
/// weights, and the decoder weights stay independent of one another.
fn component_rng(seed: u64, component: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(component.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

const EMBEDDING_STREAM: u64 = 1;
const ATTENTION_STREAM: u64 = 2;
pub(crate) const DECODER_STREAM: u64 = 3;

fn symmetric(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

/// Dense volume of latent tokens, one per voxel of the coarse lattice over
/// the unit volume, stored token-major in lattice order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVolume {
    config: LiftConfig,
    data: Vec<f64>,
}

impl LatentVolume {
    /// Wraps raw token data; `data` holds `extent^3 * latent_dim` finite
    /// values, token-major.
    pub fn new(config: LiftConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = config.token_count() * config.latent_dim;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "latent volume needs {expected} values ({} tokens x {}), got {}",
                config.token_count(),
                config.latent_dim,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate(
                "latent volume contains non-finite values".into(),
            ));
        }
        Ok(Self { config, data })
    }

    pub fn config(&self) -> &LiftConfig {
        &self.config
    }

    pub fn token_count(&self) -> usize {
        self.config.token_count()
    }

    pub fn dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Flat token data, token-major in lattice order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One token's channels.
    pub fn token(&self, idx: usize) -> &[f64] {
        let d = self.config.latent_dim;
        &self.data[idx * d..(idx + 1) * d]
    }

    /// Voxel-center position of token `idx` in the unit volume.
    pub fn position(&self, idx: usize) -> Vector3<f64> {
        let spec = self
            .config
            .latent_spec()
            .expect("validated config has a valid lattice");
        let (i, j, k) = spec.unindex(idx);
        spec.center(i, j, k)
    }
}

/// Per-view 2D feature tokens for every injection stage, stored
/// stage -> view -> token -> channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    n_stages: usize,
    n_views: usize,
    tokens_per_view: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TokenSet {
    /// Wraps raw token data ordered stage -> view -> token -> channel.
    pub fn new(
        n_stages: usize,
        n_views: usize,
        tokens_per_view: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if n_stages == 0 || n_views == 0 || tokens_per_view == 0 || dim == 0 {
            return Err(Error::InvalidInput(format!(
                "token set shape must be positive, got {n_stages} stages x {n_views} views x \
                 {tokens_per_view} tokens x {dim} channels"
            )));
        }
        let expected = n_stages
            .checked_mul(n_views)
            .and_then(|v| v.checked_mul(tokens_per_view))
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::InvalidInput("token set shape overflows".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "token set needs {expected} values, got {}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "token set contains non-finite values".into(),
            ));
        }
        Ok(Self {
            n_stages,
            n_views,
            tokens_per_view,
            dim,
            data,
        })
    }

    /// Seeded synthetic tokens, uniform in [-1, 1), quantized to f32 so a
    /// set saved to the f32 token container and loaded back is identical.
    pub fn synthetic(
        n_stages: usize,
        n_views: usize,
        tokens_per_view: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let count = n_stages
            .checked_mul(n_views)
            .and_then(|v| v.checked_mul(tokens_per_view))
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::InvalidInput("token set shape overflows".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..count).map(|_| symmetric(&mut rng) as f32 as f64).collect();
        Self::new(n_stages, n_views, tokens_per_view, dim, data)
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn tokens_per_view(&self) -> usize {
        self.tokens_per_view
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// All views' tokens of one stage, concatenated (contiguous by layout).
    pub fn stage(&self, stage: usize) -> &[f64] {
        let stride = self.n_views * self.tokens_per_view * self.dim;
        &self.data[stage * stride..(stage + 1) * stride]
    }
}

/// Builds the scene-agnostic initial volume: every token is a shared seeded
/// base vector plus a sinusoidal encoding of its voxel center, normalized to
/// [0, 1] per axis. Channel `c` encodes axis `c % 3`; successive channel
/// triples alternate cosine and sine at angular frequencies `pi, 2*pi, ...`,
/// so the code is injective at any lattice resolution (the first cosine is
/// strictly monotone over the volume).
pub fn canonical_embedding(config: &LiftConfig) -> Result<LatentVolume> {
    config.validate()?;
    let d = config.latent_dim;
    let mut rng = component_rng(config.seed, EMBEDDING_STREAM);
    let base: Vec<f64> = (0..d).map(|_| symmetric(&mut rng)).collect();
    let spec = config.latent_spec()?;
    let span = VOLUME_MAX - VOLUME_MIN;
    let mut data = vec![0.0; spec.len() * d];
    for idx in 0..spec.len() {
        let (i, j, k) = spec.unindex(idx);
        let center = spec.center(i, j, k);
        let p = [
            (center.x - VOLUME_MIN) / span,
            (center.y - VOLUME_MIN) / span,
            (center.z - VOLUME_MIN) / span,
        ];
        let row = &mut data[idx * d..(idx + 1) * d];
        for (c, slot) in row.iter_mut().enumerate() {
            let pair = c / 3;
            let omega = std::f64::consts::PI * (pair / 2 + 1) as f64;
            let phase = omega * p[c % 3];
            let enc = if pair % 2 == 0 { phase.cos() } else { phase.sin() };
            *slot = base[c] + enc;
        }
    }
    LatentVolume::new(*config, data)
}

struct BlockWeights {
    cross: AttentionWeights,
    self_attn: AttentionWeights,
}

/// The full lifting stack with weights drawn once at construction; stateless
/// afterwards, so a single instance may serve concurrent forward passes.
pub struct LiftPipeline {
    config: LiftConfig,
    blocks: Vec<BlockWeights>,
}

impl LiftPipeline {
    /// Draws all attention weights for `config` from its seed.
    pub fn new(config: LiftConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = component_rng(config.seed, ATTENTION_STREAM);
        let blocks = (0..config.n_blocks())
            .map(|_| BlockWeights {
                cross: AttentionWeights::draw(&mut rng, config.latent_dim, config.n_heads),
                self_attn: AttentionWeights::draw(&mut rng, config.latent_dim, config.n_heads),
            })
            .collect();
        Ok(Self { config, blocks })
    }

    pub fn config(&self) -> &LiftConfig {
        &self.config
    }

    /// Runs the interleaved attention stack: per repeat, per stage, a
    /// pre-norm residual cross-attention (queries = volume tokens,
    /// keys/values = all views' tokens of that stage) followed by a pre-norm
    /// residual self-attention over the volume tokens.
    pub fn extract(&self, init: &LatentVolume, tokens: &TokenSet) -> Result<LatentVolume> {
        if init.config != self.config {
            return Err(Error::SpecMismatch(
                "initial volume was built for a different configuration".into(),
            ));
        }
        if tokens.dim() != self.config.latent_dim {
            return Err(Error::SpecMismatch(format!(
                "token dim {} does not match latent dim {}",
                tokens.dim(),
                self.config.latent_dim
            )));
        }
        if tokens.n_stages() != self.config.n_stages {
            return Err(Error::SpecMismatch(format!(
                "token set has {} stages, pipeline expects {}",
                tokens.n_stages(),
                self.config.n_stages
            )));
        }
        Ok(self.run(init, Some(tokens)))
    }

    /// Shared forward pass; `tokens = None` skips the cross-attention
    /// updates entirely (used to characterize the degenerate all-zero token
    /// case, whose cross-attention contributes exactly zero).
    fn run(&self, init: &LatentVolume, tokens: Option<&TokenSet>) -> LatentVolume {
        let d = self.config.latent_dim;
        let heads = self.config.n_heads;
        let mut volume = init.data.clone();
        // Keys/values are layer-normalized once per stage; the same stage
        // tokens are re-injected on every repeat.
        let stage_ln: Vec<Vec<f64>> = match tokens {
            Some(t) => (0..self.config.n_stages)
                .map(|b| layer_norm_rows(t.stage(b), d))
                .collect(),
            None => Vec::new(),
        };
        let mut blocks = self.blocks.iter();
        for _repeat in 0..self.config.n_repeats {
            for b in 0..self.config.n_stages {
                let block = blocks.next().expect("blocks sized to the schedule");
                if tokens.is_some() {
                    attention_residual(&block.cross, &mut volume, &stage_ln[b], d, heads);
                }
                let self_ln = layer_norm_rows(&volume, d);
                attention_residual(&block.self_attn, &mut volume, &self_ln, d, heads);
            }
        }
        LatentVolume {
            config: self.config,
            data: volume,
        }
    }
}

/// One-shot form of [`LiftPipeline::extract`] that draws the weights for
/// `config`, runs the stack, and discards them.
pub fn extract(init: &LatentVolume, tokens: &TokenSet, config: &LiftConfig) -> Result<LatentVolume> {
    if init.config() != config {
        return Err(Error::SpecMismatch(
            "initial volume was built for a different configuration".into(),
        ));
    }
    LiftPipeline::new(*config)?.extract(init, tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LiftConfig {
        LiftConfig::default()
    }

    #[test]
    fn config_validation_catches_bad_shapes() {
        assert!(toy().validate().is_ok());
        assert!(LiftConfig::full_scale().validate().is_ok());
        assert_eq!(LiftConfig::full_scale().n_blocks(), 8);
        for bad in [
            LiftConfig {
                latent_extent: 0,
                ..toy()
            },
            LiftConfig {
                latent_dim: 30,
                ..toy()
            },
            LiftConfig {
                latent_dim: 2,
                n_heads: 1,
                ..toy()
            },
            LiftConfig {
                n_heads: 0,
                ..toy()
            },
            LiftConfig {
                n_repeats: 0,
                ..toy()
            },
        ] {
            assert!(bad.validate().is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn embedding_tokens_are_pairwise_distinct() {
        let volume = canonical_embedding(&toy()).unwrap();
        assert_eq!(volume.token_count(), 64);
        assert_eq!(volume.dim(), 32);
        for a in 0..volume.token_count() {
            for b in (a + 1)..volume.token_count() {
                assert!(
                    volume.token(a) != volume.token(b),
                    "tokens {a} and {b} collide"
                );
            }
        }
    }

    #[test]
    fn embedding_is_deterministic_and_seed_sensitive() {
        let a = canonical_embedding(&toy()).unwrap();
        let b = canonical_embedding(&toy()).unwrap();
        assert_eq!(a.data(), b.data());
        let other = canonical_embedding(&LiftConfig { seed: 1, ..toy() }).unwrap();
        assert_ne!(a.data(), other.data());
    }

    #[test]
    fn embedding_positions_span_the_unit_volume() {
        let volume = canonical_embedding(&toy()).unwrap();
        let first = volume.position(0);
        let last = volume.position(volume.token_count() - 1);
        // 4 tokens per axis over [-0.5, 0.5]: centers at +-0.375, +-0.125.
        assert!((first - Vector3::repeat(-0.375)).amax() < 1e-12);
        assert!((last - Vector3::repeat(0.375)).amax() < 1e-12);
    }

    #[test]
    fn full_scale_embedding_has_published_shape() {
        let config = LiftConfig::full_scale();
        let volume = canonical_embedding(&config).unwrap();
        assert_eq!(volume.token_count(), 4096);
        assert_eq!(volume.dim(), 2048);
        assert_eq!(config.output_extent(), 64);
    }

    #[test]
    fn extract_preserves_volume_shape_for_any_view_count() {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let pipeline = LiftPipeline::new(config).unwrap();
        for n_views in [1usize, 2, 8] {
            let tokens = TokenSet::synthetic(4, n_views, 5, 32, 7).unwrap();
            let out = pipeline.extract(&init, &tokens).unwrap();
            assert_eq!(out.token_count(), 64);
            assert_eq!(out.dim(), 32);
            assert!(out.data().iter().all(|v| v.is_finite()));
            assert_ne!(out.data(), init.data(), "attention should move the tokens");
        }
    }

    #[test]
    fn extract_is_bit_identical_per_seed() {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let tokens = TokenSet::synthetic(4, 2, 6, 32, 3).unwrap();
        let a = extract(&init, &tokens, &config).unwrap();
        let b = extract(&init, &tokens, &config).unwrap();
        let bits = |v: &LatentVolume| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let other_seed = LiftConfig { seed: 9, ..config };
        let init9 = canonical_embedding(&other_seed).unwrap();
        let c = extract(&init9, &tokens, &other_seed).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    /// Reorders the concatenated (view, token) rows within every stage.
    fn permute_rows(tokens: &TokenSet, perm: &[usize]) -> TokenSet {
        let d = tokens.dim();
        let rows = tokens.n_views() * tokens.tokens_per_view();
        assert_eq!(perm.len(), rows);
        let mut data = Vec::with_capacity(tokens.data().len());
        for stage in 0..tokens.n_stages() {
            let src = tokens.stage(stage);
            for &r in perm {
                data.extend_from_slice(&src[r * d..(r + 1) * d]);
            }
        }
        TokenSet::new(
            tokens.n_stages(),
            tokens.n_views(),
            tokens.tokens_per_view(),
            d,
            data,
        )
        .unwrap()
    }

    fn assert_volumes_close(a: &LatentVolume, b: &LatentVolume, tol: f64) {
        for (x, y) in a.data().iter().zip(b.data()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!(
                (x - y).abs() <= tol * scale,
                "volumes differ: {x} vs {y}"
            );
        }
    }

    #[test]
    fn key_value_order_does_not_change_the_output()
    {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let pipeline = LiftPipeline::new(config).unwrap();
        let tokens = TokenSet::synthetic(4, 2, 5, 32, 21).unwrap();
        let rows = 10;
        // An order-scrambling permutation (reversal interleaved with a swap).
        let mut perm: Vec<usize> = (0..rows).rev().collect();
        perm.swap(0, 3);
        let shuffled = permute_rows(&tokens, &perm);
        assert_ne!(tokens.data(), shuffled.data());
        let a = pipeline.extract(&init, &tokens).unwrap();
        let b = pipeline.extract(&init, &shuffled).unwrap();
        assert_volumes_close(&a, &b, 1e-5);
    }

    #[test]
    fn duplicating_every_view_changes_nothing() {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let pipeline = LiftPipeline::new(config).unwrap();
        let tokens = TokenSet::synthetic(4, 2, 5, 32, 33).unwrap();
        // Duplicate the whole view block of every stage.
        let d = config.latent_dim;
        let mut doubled = Vec::with_capacity(tokens.data().len() * 2);
        for stage in 0..tokens.n_stages() {
            let src = tokens.stage(stage);
            doubled.extend_from_slice(src);
            doubled.extend_from_slice(src);
        }
        let doubled = TokenSet::new(4, 4, 5, d, doubled).unwrap();
        let a = pipeline.extract(&init, &tokens).unwrap();
        let b = pipeline.extract(&init, &doubled).unwrap();
        assert_volumes_close(&a, &b, 1e-5);
    }

    #[test]
    fn zero_tokens_reduce_to_the_self_attention_trajectory() {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let pipeline = LiftPipeline::new(config).unwrap();
        let zeros = TokenSet::new(4, 3, 6, 32, vec![0.0; 4 * 3 * 6 * 32]).unwrap();
        let with_zero_tokens = pipeline.extract(&init, &zeros).unwrap();
        let self_only = pipeline.run(&init, None);
        // Zero keys/values make every cross-attention update exactly zero,
        // so the two trajectories agree value-for-value.
        assert_eq!(with_zero_tokens.data(), self_only.data());
    }

    #[test]
    fn bounded_inputs_stay_finite_end_to_end() {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let n = 4 * 2 * 5 * 32;
        let spiky: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1e3 } else { -1e3 })
            .collect();
        let tokens = TokenSet::new(4, 2, 5, 32, spiky).unwrap();
        let volume = extract(&init, &tokens, &config).unwrap();
        assert!(volume.data().iter().all(|v| v.is_finite()));
        let grid = decode_sdf(&volume).unwrap();
        assert!(grid.is_finite());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let config = toy();
        let init = canonical_embedding(&config).unwrap();
        let pipeline = LiftPipeline::new(config).unwrap();
        let wrong_dim = TokenSet::synthetic(4, 1, 5, 16, 0).unwrap();
        assert!(matches!(
            pipeline.extract(&init, &wrong_dim),
            Err(Error::SpecMismatch(_))
        ));
        let wrong_stages = TokenSet::synthetic(3, 1, 5, 32, 0).unwrap();
        assert!(matches!(
            pipeline.extract(&init, &wrong_stages),
            Err(Error::SpecMismatch(_))
        ));
        let other = canonical_embedding(&LiftConfig {
            latent_extent: 2,
            ..config
        })
        .unwrap();
        let tokens = TokenSet::synthetic(4, 1, 5, 32, 0).unwrap();
        assert!(pipeline.extract(&other, &tokens).is_err());
        assert!(extract(&other, &tokens, &config).is_err());
    }

    #[test]
    fn token_set_validation_catches_bad_data() {
        assert!(TokenSet::new(0, 1, 1, 4, vec![]).is_err());
        assert!(TokenSet::new(1, 1, 2, 4, vec![0.0; 7]).is_err());
        assert!(TokenSet::new(1, 1, 1, 2, vec![0.0, f64::NAN]).is_err());
        let set = TokenSet::synthetic(2, 3, 4, 8, 5).unwrap();
        assert_eq!(set.stage(1).len(), 3 * 4 * 8);
        assert_eq!(set.data().len(), 2 * 3 * 4 * 8);
    }

    #[test]
    fn latent_volume_validates_shape_and_values() {
        let config = toy();
        assert!(LatentVolume::new(config, vec![0.0; 64 * 32]).is_ok());
        assert!(LatentVolume::new(config, vec![0.0; 63 * 32]).is_err());
        let mut bad = vec![0.0; 64 * 32];
        bad[5] = f64::INFINITY;
        assert!(LatentVolume::new(config, bad).is_err());
    }
}
