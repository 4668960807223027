//! Versioned float-text checkpoints for trained models.
//!
//! Layout: a `gchk 1` magic line, `key value` header lines describing the
//! configuration, a `blocks N` line, then per block a `block <name> <rows>
//! <cols>` line followed by `rows` lines of floats. Deterministic bytes for
//! a given model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{
    AlignConfig, AlignmentMap, EncoderConfig, EncoderModel, GroundingModel, ModelConfig, ModelError,
};
use crate::mat::Mat;

const MAGIC: &str = "gchk 1";

fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Short content hash used as the checkpoint identity in provenance records.
pub fn content_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(16);
    for b in digest.iter().take(8) {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// Writes the model to `path` and returns the checkpoint id.
pub fn save_checkpoint(model: &GroundingModel, path: &Path) -> Result<String, ModelError> {
    let cfg = model.config();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "encoder {}", cfg.encoder.canonical_name());
    let _ = writeln!(out, "align {}", cfg.align.canonical_name());
    let _ = writeln!(
        out,
        "leaky_alpha {}",
        format_float(cfg.align.leaky_alpha().unwrap_or(0.01))
    );
    let _ = writeln!(out, "source_dim {}", cfg.source_dim);
    let _ = writeln!(out, "grounded_dim {}", cfg.grounded_dim);
    let _ = writeln!(out, "image_dim {}", cfg.image_dim);
    let _ = writeln!(out, "hidden {}", cfg.encoder.hidden);
    let _ = writeln!(out, "layers {}", cfg.encoder.layers);
    let _ = writeln!(out, "heads {}", cfg.encoder.heads);
    let _ = writeln!(
        out,
        "ff_dim {}",
        cfg.encoder.ff_dim.unwrap_or(4 * cfg.grounded_dim)
    );
    let _ = writeln!(out, "positional {}", u8::from(cfg.encoder.positional));
    let _ = writeln!(out, "seed {}", cfg.seed);

    let blocks = model.blocks();
    let _ = writeln!(out, "blocks {}", blocks.len());
    for (name, mat) in blocks {
        let _ = writeln!(out, "block {} {} {}", name, mat.rows(), mat.cols());
        for r in 0..mat.rows() {
            let line = mat
                .row(r)
                .iter()
                .map(|v| format_float(*v))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&line);
            out.push('\n');
        }
    }
    fs::write(path, &out).map_err(|source| ModelError::CheckpointIo {
        path: path.display().to_string(),
        source,
    })?;
    Ok(content_id(out.as_bytes()))
}

/// Reads a checkpoint back into a model; also returns the checkpoint id.
pub fn load_checkpoint(path: &Path) -> Result<(GroundingModel, String), ModelError> {
    let content = fs::read_to_string(path).map_err(|source| ModelError::CheckpointIo {
        path: path.display().to_string(),
        source,
    })?;
    let id = content_id(content.as_bytes());
    let pstr = path.display().to_string();
    let bad = |line: usize, msg: &str| ModelError::BadCheckpoint {
        path: pstr.clone(),
        line,
        msg: msg.to_string(),
    };

    let lines: Vec<&str> = content.lines().collect();
    if lines.first() != Some(&MAGIC) {
        return Err(bad(1, "missing gchk 1 magic"));
    }

    // Header key/value section up to "blocks N".
    let mut header: BTreeMap<&str, &str> = BTreeMap::new();
    let mut cursor = 1;
    let mut block_count = None;
    while cursor < lines.len() {
        let line = lines[cursor];
        cursor += 1;
        let Some((key, value)) = line.split_once(' ') else {
            return Err(bad(cursor, "expected 'key value'"));
        };
        if key == "blocks" {
            block_count = Some(
                value
                    .parse::<usize>()
                    .map_err(|_| bad(cursor, "bad block count"))?,
            );
            break;
        }
        header.insert(key, value);
    }
    let block_count = block_count.ok_or_else(|| bad(cursor, "missing blocks section"))?;

    let get = |key: &str| -> Result<&str, ModelError> {
        header
            .get(key)
            .copied()
            .ok_or_else(|| bad(1, &format!("missing header key '{key}'")))
    };
    let get_usize = |key: &str| -> Result<usize, ModelError> {
        get(key)?
            .parse()
            .map_err(|_| bad(1, &format!("bad integer for '{key}'")))
    };

    let leaky_alpha: f64 = get("leaky_alpha")?
        .parse()
        .map_err(|_| bad(1, "bad leaky_alpha"))?;
    let align_cfg = AlignConfig::parse(get("align")?, leaky_alpha)?;
    let mut encoder_cfg = EncoderConfig::parse(get("encoder")?)?;
    encoder_cfg.hidden = get_usize("hidden")?;
    encoder_cfg.layers = get_usize("layers")?;
    encoder_cfg.heads = get_usize("heads")?;
    encoder_cfg.ff_dim = Some(get_usize("ff_dim")?);
    encoder_cfg.positional = get("positional")? == "1";
    let config = ModelConfig {
        source_dim: get_usize("source_dim")?,
        grounded_dim: get_usize("grounded_dim")?,
        image_dim: get_usize("image_dim")?,
        align: align_cfg,
        encoder: encoder_cfg.clone(),
        seed: get("seed")?.parse().map_err(|_| bad(1, "bad seed"))?,
    };

    // Parameter blocks.
    let mut mats: BTreeMap<String, Mat> = BTreeMap::new();
    for _ in 0..block_count {
        if cursor >= lines.len() {
            return Err(bad(cursor, "truncated block section"));
        }
        let fields: Vec<&str> = lines[cursor].split_whitespace().collect();
        cursor += 1;
        if fields.len() != 4 || fields[0] != "block" {
            return Err(bad(cursor, "expected 'block <name> <rows> <cols>'"));
        }
        let name = fields[1].to_string();
        let rows: usize = fields[2].parse().map_err(|_| bad(cursor, "bad rows"))?;
        let cols: usize = fields[3].parse().map_err(|_| bad(cursor, "bad cols"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            if cursor >= lines.len() {
                return Err(bad(cursor, "truncated block data"));
            }
            let row: Result<Vec<f64>, _> =
                lines[cursor].split_whitespace().map(str::parse).collect();
            let row = row.map_err(|_| bad(cursor + 1, "bad float"))?;
            if row.len() != cols {
                return Err(bad(cursor + 1, "row width does not match block header"));
            }
            data.extend(row);
            cursor += 1;
        }
        mats.insert(name, Mat::from_vec(rows, cols, data));
    }

    let mut take = |name: &str, rows: usize, cols: usize| -> Result<Mat, ModelError> {
        let m = mats
            .remove(name)
            .ok_or_else(|| bad(0, &format!("missing block '{name}'")))?;
        if m.rows() != rows || m.cols() != cols {
            return Err(bad(
                0,
                &format!(
                    "block '{}' is {}x{}, expected {}x{}",
                    name,
                    m.rows(),
                    m.cols(),
                    rows,
                    cols
                ),
            ));
        }
        Ok(m)
    };

    let (d, c) = (config.source_dim, config.grounded_dim);
    let mut weights = Vec::with_capacity(config.align.layers);
    let mut biases = Vec::with_capacity(config.align.layers);
    for i in 0..config.align.layers {
        let rows = if i == 0 { d } else { c };
        weights.push(take(&format!("align.l{i}.w"), rows, c)?);
        biases.push(if config.align.activation.is_identity() {
            None
        } else {
            Some(take(&format!("align.l{i}.b"), 1, c)?)
        });
    }
    let align = AlignmentMap::from_parts(&config.align, weights, biases);

    let encoder = EncoderModel::from_parts(&encoder_cfg, c, config.image_dim, &mut take)?;
    if !mats.is_empty() {
        let names: Vec<&String> = mats.keys().collect();
        return Err(bad(0, &format!("unexpected blocks {names:?}")));
    }

    Ok((
        GroundingModel {
            align,
            encoder,
            config,
        },
        id,
    ))
}
