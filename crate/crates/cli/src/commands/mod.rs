pub mod conc;
pub mod eval;
pub mod gradcheck;
pub mod ground;
pub mod neighbors;
pub mod train;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use grounded::train::EpochRecord;

use crate::config::CliError;

/// Line-delimited history records; seconds are wall clock and carry no
/// determinism guarantee.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), CliError> {
    let mut out = String::from("# epoch\ttrain_mse\tval_mse\tseconds\n");
    for r in history {
        let val = r
            .val_mse
            .map(|v| format!("{v:.16e}"))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "{}\t{:.16e}\t{}\t{:.3}",
            r.epoch, r.train_mse, val, r.seconds
        );
    }
    fs::write(path, out).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
