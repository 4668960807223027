use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use grounded::embed::load_embeddings;
use grounded::eval::{nearest_neighbors, neighbor_diff};

use crate::config::{require_file, CliError, Context};

#[derive(Args)]
pub struct NeighborsArgs {
    /// Embedding table to query.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Second table; when given, only the differing neighbors are shown.
    #[arg(long)]
    table_b: Option<PathBuf>,
    /// Query word (must be in every table involved).
    #[arg(long)]
    query: Option<String>,
    /// Neighbors per list [default: 10].
    #[arg(short, long)]
    k: Option<usize>,
}

pub fn run(ctx: &Context, args: NeighborsArgs) -> Result<(), CliError> {
    let mut r = ctx.resolver("neighbors");
    let table_path = r.required_path("table", args.table)?;
    let table_b_path = r.optional_path("table_b", args.table_b)?;
    let query: String = r.required("query", args.query)?;
    let k = r.value("k", args.k, 10)?;
    r.flag_only("seed", ctx.seed);

    require_file(&table_path)?;
    if let Some(p) = &table_b_path {
        require_file(p)?;
    }
    ctx.ensure_out_dir()?;
    r.finish(&ctx.out_dir.join("neighbors.resolved.cfg"))?;

    let table = load_embeddings(&table_path, None)?.table;
    let mut record = String::from("# table\tquery\trank\tword\tcosine\n");

    let neighbors = nearest_neighbors(&table, &query, k, true)?;
    println!("top {k} neighbors of '{query}' in {}:", table.name());
    for (rank, (word, cos)) in neighbors.iter().enumerate() {
        println!("  {:>2}. {word}  {cos:.4}", rank + 1);
        let _ = writeln!(
            record,
            "{}\t{}\t{}\t{}\t{:.6}",
            table.name(),
            query,
            rank + 1,
            word,
            cos
        );
    }

    if let Some(b_path) = table_b_path {
        let table_b = load_embeddings(&b_path, None)?.table;
        let diff = neighbor_diff(&table, &table_b, &query, k)?;
        println!("neighbors only in {}:", table.name());
        for (word, cos) in &diff.only_in_a {
            println!("  {word}  {cos:.4}");
            let _ = writeln!(
                record,
                "only_in:{}\t{query}\t-\t{word}\t{cos:.6}",
                table.name()
            );
        }
        println!("neighbors only in {}:", table_b.name());
        for (word, cos) in &diff.only_in_b {
            println!("  {word}  {cos:.4}");
            let _ = writeln!(
                record,
                "only_in:{}\t{query}\t-\t{word}\t{cos:.6}",
                table_b.name()
            );
        }
    }

    std::fs::write(ctx.out_dir.join("neighbors.tsv"), record)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
