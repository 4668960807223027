use clap::Args;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use grounded::mat::Mat;
use grounded::model::{
    AlignConfig, AlignmentMap, EncoderConfig, EncoderKind, GroundingModel, ModelConfig, ModelError,
    SequenceBatch,
};
use grounded::tensor::{grad_check, GradCheckConfig};

use crate::config::{CliError, Context};

#[derive(Args)]
pub struct GradcheckArgs {
    /// Encoder to check: wl, bow, gru, lstm, te:<layers> [default: lstm].
    #[arg(long)]
    encoder: Option<String>,
    /// Alignment to check [default: linear:1].
    #[arg(long)]
    align: Option<String>,
    /// Textual width d [default: 5].
    #[arg(long)]
    source_dim: Option<usize>,
    /// Grounded width c [default: 4].
    #[arg(long)]
    grounded_dim: Option<usize>,
    /// Encoder hidden width [default: 6].
    #[arg(long)]
    hidden: Option<usize>,
    /// Image width [default: 3].
    #[arg(long)]
    image_dim: Option<usize>,
    /// Caption length of the longest probe sample [default: 3].
    #[arg(long)]
    tokens: Option<usize>,
    /// Attention heads for te on toy widths [default: 2].
    #[arg(long)]
    heads: Option<usize>,
    /// Finite-difference step [default: 1e-5].
    #[arg(long)]
    eps: Option<f64>,
    /// Negative slope for lrelu alignments [default: 0.01].
    #[arg(long)]
    leaky_alpha: Option<f64>,
    /// Scale every adjoint by this factor to prove the check catches
    /// broken gradients.
    #[arg(long)]
    inject_fault: Option<f64>,
}

const PASS_THRESHOLD: f64 = 1e-4;

pub fn run(ctx: &Context, args: GradcheckArgs) -> Result<(), CliError> {
    let mut r = ctx.resolver("gradcheck");
    let encoder_spec: String = r.value("encoder", args.encoder, "lstm".into())?;
    let align_spec: String = r.value("align", args.align, "linear:1".into())?;
    let source_dim = r.value("source_dim", args.source_dim, 5)?;
    let grounded_dim = r.value("grounded_dim", args.grounded_dim, 4)?;
    let hidden = r.value("hidden", args.hidden, 6)?;
    let image_dim = r.value("image_dim", args.image_dim, 3)?;
    let tokens = r.value("tokens", args.tokens, 3)?;
    let heads = r.value("heads", args.heads, 2)?;
    let eps = r.value("eps", args.eps, 1e-5)?;
    let leaky_alpha = r.value("leaky_alpha", args.leaky_alpha, 0.01)?;
    let fault = r
        .optional("inject_fault", args.inject_fault)?
        .unwrap_or(1.0);
    r.flag_only("seed", ctx.seed);

    ctx.ensure_out_dir()?;
    r.finish(&ctx.out_dir.join("gradcheck.resolved.cfg"))?;

    let align_cfg = AlignConfig::parse(&align_spec, leaky_alpha)?;
    let mut encoder_cfg = EncoderConfig::parse(&encoder_spec)?;
    encoder_cfg.hidden = hidden;
    encoder_cfg.heads = heads;
    encoder_cfg.ff_dim = Some(2 * grounded_dim);

    let report = check_model(
        align_cfg,
        encoder_cfg,
        source_dim,
        grounded_dim,
        image_dim,
        tokens,
        ctx.seed,
        eps,
        fault,
    )?;

    let pass = report.max_rel_err < PASS_THRESHOLD;
    println!(
        "gradcheck {encoder_spec} {align_spec}: max rel err {:.3e} over {} probes (worst: {}) -> {}",
        report.max_rel_err,
        report.probes,
        if report.worst_block.is_empty() {
            "-"
        } else {
            &report.worst_block
        },
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed {
            block: report.worst_block,
            max_rel_err: report.max_rel_err,
        })
    }
}

/// Builds a toy model of the requested shape and runs the full
/// map-encode-loss pipeline through the finite-difference harness.
#[allow(clippy::too_many_arguments)]
pub fn check_model(
    align_cfg: AlignConfig,
    encoder_cfg: EncoderConfig,
    source_dim: usize,
    grounded_dim: usize,
    image_dim: usize,
    tokens: usize,
    seed: u64,
    eps: f64,
    fault: f64,
) -> Result<grounded::tensor::GradCheckReport, CliError> {
    fn mat(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Mat {
        Mat::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }
    let tokens = tokens.max(1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x6772_6164);
    let cfg = GradCheckConfig {
        epsilon: eps,
        max_probes_per_block: 25,
        seed,
        fault_scale: fault,
    };

    if encoder_cfg.kind == EncoderKind::WordLevel {
        // Word level has no sequence model: the pipeline is the alignment
        // against per-word targets of the grounded width.
        let align = AlignmentMap::new(&align_cfg, source_dim, grounded_dim, &mut rng)?;
        let x = mat(tokens, source_dim, &mut rng);
        let y = mat(tokens, grounded_dim, &mut rng);
        let blocks: Vec<(String, Mat)> = align
            .blocks()
            .into_iter()
            .map(|(n, m)| (n, m.clone()))
            .collect();
        let report = grad_check::<ModelError, _>(
            &blocks,
            move |tape, leaves| {
                let xt = tape.leaf_from(&x, false)?;
                let target = tape.leaf_from(&y, false)?;
                let pred = align.forward(tape, leaves, xt)?;
                Ok(pred.mse_loss(target)?)
            },
            &cfg,
        )?;
        return Ok(report);
    }

    let model = GroundingModel::new(ModelConfig {
        source_dim,
        grounded_dim,
        image_dim,
        align: align_cfg,
        encoder: encoder_cfg,
        seed,
    })?;
    // Two samples, one of them shorter, so true-length handling is probed.
    let long: Vec<Mat> = (0..tokens).map(|_| mat(1, source_dim, &mut rng)).collect();
    let short: Vec<Mat> = (0..tokens.saturating_sub(1).max(1))
        .map(|_| mat(1, source_dim, &mut rng))
        .collect();
    let rows = vec![
        long.iter().map(|m| m.row(0)).collect::<Vec<_>>(),
        short.iter().map(|m| m.row(0)).collect::<Vec<_>>(),
    ];
    let batch = SequenceBatch::build(model.encoder.kind(), &rows);
    let target = mat(2, image_dim, &mut rng);
    let blocks: Vec<(String, Mat)> = model
        .blocks()
        .into_iter()
        .map(|(n, m)| (n, m.clone()))
        .collect();
    let report = grad_check::<ModelError, _>(
        &blocks,
        move |tape, leaves| {
            let pred = model.forward_tape(tape, leaves, &batch)?;
            let y = tape.leaf_from(&target, false)?;
            Ok(pred.mse_loss(y)?)
        },
        &cfg,
    )?;
    Ok(report)
}
