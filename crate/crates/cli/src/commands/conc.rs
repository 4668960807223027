use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use grounded::embed::load_embeddings;
use grounded::eval::{concreteness_cv, display_x100, ConcretenessRatings};

use crate::config::{require_file, CliError, Context};

#[derive(Args)]
pub struct ConcArgs {
    /// Embedding table the probe regresses from.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Ratings file: word<TAB>rating per line.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Cross-validation folds [default: 10].
    #[arg(long)]
    folds: Option<usize>,
    /// Ridge strength [default: 0.001].
    #[arg(long)]
    ridge_lambda: Option<f64>,
}

pub fn run(ctx: &Context, args: ConcArgs) -> Result<(), CliError> {
    let mut r = ctx.resolver("conc");
    let table_path = r.required_path("table", args.table)?;
    let ratings_path = r.required_path("ratings", args.ratings)?;
    let folds = r.value("folds", args.folds, 10)?;
    let lambda = r.value("ridge_lambda", args.ridge_lambda, 0.001)?;
    r.flag_only("seed", ctx.seed);

    require_file(&table_path)?;
    require_file(&ratings_path)?;
    ctx.ensure_out_dir()?;
    r.finish(&ctx.out_dir.join("conc.resolved.cfg"))?;

    let table = load_embeddings(&table_path, None)?.table;
    let ratings = ConcretenessRatings::load(&ratings_path)?;
    let cv = concreteness_cv(&table, &ratings, folds, lambda, ctx.seed)?;

    println!(
        "concreteness probe on {}: mean rho_x100 {} over {} folds ({} words used, {} skipped)",
        table.name(),
        display_x100(cv.mean_rho),
        folds,
        cv.used,
        cv.skipped
    );
    if cv.lambda_floored {
        println!("note: singular system, ridge floored to 1e-6");
    }

    let mut record = String::from("# table\tfold\trho\trho_x100\n");
    for (i, rho) in cv.fold_rhos.iter().enumerate() {
        let _ = writeln!(
            record,
            "{}\t{}\t{:.6}\t{}",
            table.name(),
            i + 1,
            rho,
            display_x100(*rho)
        );
    }
    let _ = writeln!(
        record,
        "{}\t<mean>\t{:.6}\t{}",
        table.name(),
        cv.mean_rho,
        display_x100(cv.mean_rho)
    );
    std::fs::write(ctx.out_dir.join("concreteness.tsv"), record)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
