//! Principal component analysis for matching image-vector dimensions to the
//! alignment output, and for the word-level training path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{format_float, io_err, EmbedError};
use crate::mat::{sym_eigen, Mat};

/// A fitted PCA projection: per-feature mean, orthonormal components as the
/// columns of a d x k matrix, and the explained variance per component in
/// descending order.
#[derive(Clone, Debug)]
pub struct PcaProjection {
    mean: Vec<f64>,
    components: Mat,
    explained_variance: Vec<f64>,
}

impl PcaProjection {
    pub fn input_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Mat {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Fraction of total variance captured by each component.
    pub fn explained_variance_ratio(&self, total_variance: f64) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / total_variance)
            .collect()
    }

    /// (x - mean) . components
    #[allow(clippy::needless_range_loop)]
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, EmbedError> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(EmbedError::LengthMismatch {
                left: x.len(),
                right: d,
            });
        }
        let k = self.output_dim();
        let mut out = vec![0.0; k];
        for i in 0..d {
            let c = x[i] - self.mean[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += c * self.components.get(i, j);
            }
        }
        Ok(out)
    }

    /// Maps a projected vector back into the original space.
    #[allow(clippy::needless_range_loop)]
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>, EmbedError> {
        let k = self.output_dim();
        if y.len() != k {
            return Err(EmbedError::LengthMismatch {
                left: y.len(),
                right: k,
            });
        }
        let d = self.input_dim();
        let mut out = self.mean.clone();
        for j in 0..k {
            for (i, o) in out.iter_mut().enumerate().take(d) {
                *o += y[j] * self.components.get(i, j);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let d = self.input_dim();
        let k = self.output_dim();
        let mut out = String::new();
        let _ = writeln!(out, "pca {d} {k}");
        let join = |vals: &[f64]| {
            vals.iter()
                .map(|v| format_float(*v))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "{}", join(&self.mean));
        let _ = writeln!(out, "{}", join(&self.explained_variance));
        for i in 0..d {
            let _ = writeln!(out, "{}", join(self.components.row(i)));
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let pstr = path.display().to_string();
        let bad = |line: usize| EmbedError::BadProjection {
            path: pstr.clone(),
            line,
        };
        let mut lines = content.lines().enumerate();

        let (_, header) = lines.next().ok_or_else(|| bad(1))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "pca" {
            return Err(bad(1));
        }
        let d: usize = parts[1].parse().map_err(|_| bad(1))?;
        let k: usize = parts[2].parse().map_err(|_| bad(1))?;

        let mut parse_row = |expected: usize| -> Result<Vec<f64>, EmbedError> {
            let (lineno, line) = lines.next().ok_or_else(|| bad(0))?;
            let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| bad(lineno + 1))?;
            if vals.len() != expected {
                return Err(bad(lineno + 1));
            }
            Ok(vals)
        };

        let mean = parse_row(d)?;
        let explained_variance = parse_row(k)?;
        let mut comp = Vec::with_capacity(d * k);
        for _ in 0..d {
            comp.extend(parse_row(k)?);
        }
        Ok(Self {
            mean,
            components: Mat::from_vec(d, k, comp),
            explained_variance,
        })
    }
}

/// Fits the top-`k` principal components of mean-centered `data` (N x d).
///
/// Eigenvector signs are fixed by making the largest-magnitude entry of each
/// component positive, so repeated fits produce identical projections.
#[allow(clippy::needless_range_loop)]
pub fn pca_fit(data: &Mat, k: usize) -> Result<PcaProjection, EmbedError> {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return Err(EmbedError::TooFewSamples { got: n });
    }
    let max_k = d.min(n - 1);
    if k == 0 || k > max_k {
        return Err(EmbedError::RankOutOfRange {
            requested: k,
            max: max_k,
        });
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += data.get(i, j);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Covariance with divisor N - 1.
    let mut cov = Mat::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            let ca = data.get(i, a) - mean[a];
            for b in a..d {
                let cb = data.get(i, b) - mean[b];
                let v = cov.get(a, b) + ca * cb;
                cov.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / (n - 1) as f64;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }

    let (eigvals, eigvecs) = sym_eigen(&cov);
    let lead = eigvals[0].max(0.0);
    let tol = lead * 1e-9;
    let achievable = eigvals.iter().filter(|&&v| v > tol && v > 0.0).count();
    if achievable < k {
        return Err(EmbedError::RankDeficient {
            requested: k,
            achievable,
        });
    }

    let mut components = Mat::zeros(d, k);
    for j in 0..k {
        // Deterministic sign: largest-magnitude entry is positive.
        let mut best = 0;
        for i in 1..d {
            if eigvecs.get(i, j).abs() > eigvecs.get(best, j).abs() {
                best = i;
            }
        }
        let flip = if eigvecs.get(best, j) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..d {
            components.set(i, j, flip * eigvecs.get(i, j));
        }
    }

    Ok(PcaProjection {
        mean,
        components,
        explained_variance: eigvals[..k].to_vec(),
    })
}
