use std::path::PathBuf;

use clap::Args;

use grounded::embed::load_embeddings;
use grounded::model::{
    save_checkpoint, AlignConfig, EncoderConfig, EncoderKind, GroundingModel, ModelConfig,
};
use grounded::train::{load_dataset, train, train_wl, DatasetOptions, TrainConfig};

use crate::config::{require_file, CliError, Context};

#[derive(Args)]
pub struct TrainArgs {
    /// Captions file: image_id<TAB>caption[<TAB>train|val], one per line.
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Image vectors file: 'N dim' header, then image_id f1 ... fdim.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Pretrained textual embeddings in the text vector format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Sentence encoder: wl, bow, gru, lstm, te:<layers> [default: lstm].
    #[arg(long)]
    encoder: Option<String>,
    /// Alignment: linear:1, relu:1, lrelu:1, lrelu:2, ... [default: linear:1].
    #[arg(long)]
    align: Option<String>,
    /// Captions per batch [default: 256].
    #[arg(long)]
    batch_size: Option<usize>,
    /// NAdam learning rate [default: 0.001].
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs [default: 20].
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping tolerance in epochs [default: 5].
    #[arg(long)]
    patience: Option<usize>,
    /// Keep this many most-frequent caption tokens [default: 10000].
    #[arg(long)]
    vocab_top_k: Option<usize>,
    /// Width of the grounded space [default: 1024].
    #[arg(long)]
    grounded_dim: Option<usize>,
    /// Recurrent/BoW hidden width [default: 2048].
    #[arg(long)]
    hidden: Option<usize>,
    /// Transformer attention heads [default: 16].
    #[arg(long)]
    heads: Option<usize>,
    /// Transformer feed-forward width [default: 4 x grounded_dim].
    #[arg(long)]
    ff_dim: Option<usize>,
    /// Negative slope for lrelu alignments [default: 0.01].
    #[arg(long)]
    leaky_alpha: Option<f64>,
    /// Disable the transformer's sinusoidal position information.
    #[arg(long)]
    no_positional: bool,
    /// Validation image fraction when captions carry no split tags
    /// [default: 0.05].
    #[arg(long)]
    val_fraction: Option<f64>,
}

pub fn run(ctx: &Context, args: TrainArgs) -> Result<(), CliError> {
    let mut r = ctx.resolver("train");
    let captions = r.required_path("captions", args.captions)?;
    let images = r.required_path("images", args.images)?;
    let embeddings = r.required_path("embeddings", args.embeddings)?;
    let encoder_spec: String = r.value("encoder", args.encoder, "lstm".into())?;
    let align_spec: String = r.value("align", args.align, "linear:1".into())?;
    let batch_size = r.value("batch_size", args.batch_size, 256)?;
    let lr = r.value("lr", args.lr, 0.001)?;
    let epochs = r.value("epochs", args.epochs, 20)?;
    let patience = r.value("patience", args.patience, 5)?;
    let vocab_top_k = r.value("vocab_top_k", args.vocab_top_k, 10_000)?;
    let grounded_dim = r.value("grounded_dim", args.grounded_dim, 1024)?;
    let hidden = r.value("hidden", args.hidden, 2048)?;
    let heads = r.value("heads", args.heads, 16)?;
    let ff_dim = r.optional("ff_dim", args.ff_dim)?;
    let leaky_alpha = r.value("leaky_alpha", args.leaky_alpha, 0.01)?;
    let positional = !r.value("no_positional", args.no_positional.then_some(true), false)?;
    let val_fraction = r.value("val_fraction", args.val_fraction, 0.05)?;
    r.flag_only("seed", ctx.seed);

    let align = AlignConfig::parse(&align_spec, leaky_alpha)?;
    let mut encoder = EncoderConfig::parse(&encoder_spec)?;
    encoder.hidden = hidden;
    encoder.heads = heads;
    encoder.ff_dim = ff_dim;
    encoder.positional = positional;

    require_file(&captions)?;
    require_file(&images)?;
    require_file(&embeddings)?;
    ctx.ensure_out_dir()?;
    r.finish(&ctx.out_dir.join("train.resolved.cfg"))?;

    let loaded = load_embeddings(&embeddings, None)?;
    if loaded.duplicates > 0 {
        eprintln!(
            "note: {} duplicate word(s) in {}",
            loaded.duplicates,
            embeddings.display()
        );
    }
    let table = loaded.table;
    let data = load_dataset(
        &captions,
        &images,
        &DatasetOptions {
            vocab_top_k,
            val_fraction,
        },
    )?;
    println!(
        "data: {} train pairs, {} val pairs, vocab {} tokens, {} caption(s) dropped",
        data.train.len(),
        data.val.len(),
        data.vocab.len(),
        data.dropped_empty
    );

    let config = TrainConfig {
        batch_size,
        lr,
        epochs,
        patience,
        vocab_top_k,
        grounded_dim,
        align,
        encoder: encoder.clone(),
        seed: ctx.seed,
    };

    let checkpoint_path = ctx.out_dir.join("checkpoint.gchk");
    let history_path = ctx.out_dir.join("history.tsv");

    if encoder.kind == EncoderKind::WordLevel {
        let outcome = train_wl(&config, &data.train, &data.val, &table)?;
        for rec in &outcome.history {
            print_epoch(rec);
        }
        super::write_history(&history_path, &outcome.history)?;
        outcome.pca.save(&ctx.out_dir.join("pca.txt"))?;

        // Package the trained alignment as a word-level checkpoint.
        let mut model = GroundingModel::new(ModelConfig {
            source_dim: table.dim(),
            grounded_dim,
            image_dim: grounded_dim,
            align,
            encoder,
            seed: ctx.seed,
        })?;
        for ((_, dst), (_, src)) in model
            .blocks_mut()
            .iter_mut()
            .zip(outcome.align.blocks().iter())
        {
            **dst = (*src).clone();
        }
        let id = save_checkpoint(&model, &checkpoint_path)?;
        println!(
            "checkpoint {} (best epoch {}, {} caption(s) without content words)",
            id, outcome.best_epoch, outcome.dropped_captions
        );
        if outcome.diverged {
            return Err(CliError::Diverged(
                "word-level training hit a non-finite value; checkpoint holds the last good parameters".into(),
            ));
        }
    } else {
        let outcome = train(&config, &data.train, &data.val, &table)?;
        for rec in &outcome.history {
            print_epoch(rec);
        }
        super::write_history(&history_path, &outcome.history)?;
        let id = save_checkpoint(&outcome.model, &checkpoint_path)?;
        println!(
            "checkpoint {} (best epoch {}, {} token(s) outside the table)",
            id, outcome.best_epoch, outcome.skipped_tokens
        );
        if outcome.diverged {
            return Err(CliError::Diverged(
                "training hit a non-finite value; checkpoint holds the last good parameters".into(),
            ));
        }
    }
    Ok(())
}

fn print_epoch(rec: &grounded::train::EpochRecord) {
    match rec.val_mse {
        Some(v) => println!(
            "epoch {:>3}  train_mse {:.6e}  val_mse {:.6e}  ({:.2}s)",
            rec.epoch, rec.train_mse, v, rec.seconds
        ),
        None => println!(
            "epoch {:>3}  train_mse {:.6e}  ({:.2}s)",
            rec.epoch, rec.train_mse, rec.seconds
        ),
    }
}
