use std::path::PathBuf;

use clap::Args;

use grounded::embed::load_embeddings;
use grounded::eval::{display_x100, evaluate_table, SimilarityBenchmark};

use crate::config::{require_file, CliError, Context};

#[derive(Args)]
pub struct EvalArgs {
    /// Embedding table(s) to score; repeat the flag to compare spaces.
    #[arg(long = "table")]
    tables: Vec<PathBuf>,
    /// Directory of benchmark files (word1<TAB>word2<TAB>score[<TAB>tags]).
    #[arg(long)]
    benchmarks: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: EvalArgs) -> Result<(), CliError> {
    let mut r = ctx.resolver("eval");
    let benchmarks_dir = r.required_path("benchmarks", args.benchmarks)?;
    let flag_tables = if args.tables.is_empty() {
        None
    } else {
        Some(
            args.tables
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
    };
    let tables: Vec<PathBuf> = r
        .optional("tables", flag_tables)?
        .map(|list: String| list.split(',').map(|s| PathBuf::from(s.trim())).collect())
        .unwrap_or_default();
    if tables.is_empty() {
        return Err(CliError::Config("no --table given".into()));
    }
    r.flag_only("seed", ctx.seed);

    if !benchmarks_dir.is_dir() {
        return Err(CliError::Data(format!(
            "benchmark directory not found: {}",
            benchmarks_dir.display()
        )));
    }
    for t in &tables {
        require_file(t)?;
    }
    ctx.ensure_out_dir()?;
    r.finish(&ctx.out_dir.join("eval.resolved.cfg"))?;

    // Benchmark files in name order; .tags sidecars belong to their mains.
    let mut files: Vec<PathBuf> = std::fs::read_dir(&benchmarks_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", benchmarks_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().map(|e| e != "tags").unwrap_or(true))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no benchmark files in {}",
            benchmarks_dir.display()
        )));
    }
    let benches: Vec<SimilarityBenchmark> = files
        .iter()
        .map(|p| SimilarityBenchmark::load(p))
        .collect::<Result<_, _>>()?;

    let mut not_evaluable: Vec<String> = Vec::new();
    for table_path in &tables {
        let table = load_embeddings(table_path, None)?.table;
        let report = evaluate_table(&table, &benches);
        print!("{}", report.human_table());
        if let Some(mean) = report.mean_rho() {
            println!(
                "mean over {} benchmark(s): {}",
                report.results.len(),
                display_x100(mean)
            );
        }
        let tsv = ctx.out_dir.join(format!("{}.report.tsv", table.name()));
        let txt = ctx.out_dir.join(format!("{}.report.txt", table.name()));
        std::fs::write(tsv, report.records()).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(txt, report.human_table()).map_err(|e| CliError::Data(e.to_string()))?;
        for (name, why) in &report.failures {
            not_evaluable.push(format!("{name} ({why})"));
        }
    }
    if !not_evaluable.is_empty() {
        return Err(CliError::Data(format!(
            "benchmark(s) not evaluable: {}",
            not_evaluable.join("; ")
        )));
    }
    Ok(())
}
