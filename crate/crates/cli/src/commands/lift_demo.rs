//! `lift-demo`: run the token-lifting pipeline — position-conditioned
//! embedding, interleaved cross/self attention, transposed-convolution
//! decode — on a token file or a seeded synthetic token set.

use std::path::PathBuf;

use fus3d_core::lift::{
    canonical_embedding, decode_sdf, extract, load_tokens, save_tokens, LiftConfig, TokenSet,
};
use fus3d_core::vsdf::write_vsdf;

use crate::manifest::Manifest;
use crate::support::CliResult;

#[derive(Debug, clap::Args)]
pub struct LiftDemoArgs {
    /// Token file (TOKS1); omitted, tokens are synthesized from the seed.
    #[arg(long)]
    pub tokens: Option<PathBuf>,

    /// Views for synthetic tokens.
    #[arg(long, default_value_t = 2)]
    pub views: usize,

    /// Tokens per view for synthetic tokens.
    #[arg(long, default_value_t = 16)]
    pub tokens_per_view: usize,

    /// Tokens per axis of the latent volume.
    #[arg(long, default_value_t = 4)]
    pub latent_extent: usize,

    /// Channel width shared by latent and feature tokens.
    #[arg(long, default_value_t = 32)]
    pub latent_dim: usize,

    /// Number of cross/self attention stages.
    #[arg(long, default_value_t = 4)]
    pub n_stages: usize,

    /// Block repeats per stage.
    #[arg(long, default_value_t = 2)]
    pub n_repeats: usize,

    /// Attention heads.
    #[arg(long, default_value_t = 4)]
    pub n_heads: usize,

    /// Also write the token set (useful to pin synthetic inputs).
    #[arg(long)]
    pub tokens_out: Option<PathBuf>,

    /// Output grid (VSDF1).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &LiftDemoArgs, seed: u64, manifest: &mut Manifest) -> CliResult<()> {
    let config = LiftConfig {
        latent_extent: args.latent_extent,
        latent_dim: args.latent_dim,
        n_stages: args.n_stages,
        n_repeats: args.n_repeats,
        n_heads: args.n_heads,
        seed,
    };
    config.validate()?;
    manifest.param("config", config);

    let tokens = match &args.tokens {
        Some(path) => {
            manifest.input(path)?;
            load_tokens(path)?
        }
        None => TokenSet::synthetic(
            config.n_stages,
            args.views,
            args.tokens_per_view,
            config.latent_dim,
            seed,
        )?,
    };

    let init = canonical_embedding(&config)?;
    let refined = extract(&init, &tokens, &config)?;
    let grid = decode_sdf(&refined)?;
    write_vsdf(&args.out, &grid, None)?;
    manifest.output(&args.out)?;

    if let Some(path) = &args.tokens_out {
        save_tokens(path, &tokens)?;
        manifest.output(path)?;
    }
    manifest.write_beside(&args.out)?;

    let summary = serde_json::json!({
        "out": args.out,
        "views": tokens.n_views(),
        "tokens_per_view": tokens.tokens_per_view(),
        "output_dims": grid.spec.dims,
    });
    println!("{summary}");
    Ok(())
}
