use std::path::PathBuf;

use clap::Args;

use grounded::embed::load_embeddings;
use grounded::model::{content_id, ground_vocabulary, load_checkpoint, Provenance};

use crate::config::{require_file, CliError, Context};

#[derive(Args)]
pub struct GroundArgs {
    /// Trained checkpoint from the train command.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Embedding table to ground, in the text vector format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output path for the grounded table [default: <out-dir>/grounded.vec].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: GroundArgs) -> Result<(), CliError> {
    let mut r = ctx.resolver("ground");
    let checkpoint = r.required_path("checkpoint", args.checkpoint)?;
    let embeddings = r.required_path("embeddings", args.embeddings)?;
    let out = r
        .optional_path("out", args.out)?
        .unwrap_or_else(|| ctx.out_dir.join("grounded.vec"));
    r.flag_only("seed", ctx.seed);

    require_file(&checkpoint)?;
    require_file(&embeddings)?;
    ctx.ensure_out_dir()?;
    let snapshot = ctx.out_dir.join("ground.resolved.cfg");
    r.finish(&snapshot)?;

    let (model, checkpoint_id) = load_checkpoint(&checkpoint)?;
    let source = load_embeddings(&embeddings, None)?.table;
    let config_hash = content_id(
        std::fs::read(&snapshot)
            .map_err(|e| CliError::Data(format!("{}: {e}", snapshot.display())))?
            .as_slice(),
    );
    let space = ground_vocabulary(
        &model.align,
        &source,
        Provenance {
            checkpoint_id: checkpoint_id.clone(),
            config_hash,
        },
    )?;
    space.table.save(&out)?;
    println!(
        "grounded {} words ({} -> {} dims) from checkpoint {} into {}",
        space.table.len(),
        model.align.input_dim(),
        model.align.output_dim(),
        checkpoint_id,
        out.display()
    );
    Ok(())
}
