//! Central-finite-difference verification of recorded adjoints.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{Tape, Tensor, TensorError};
use crate::mat::Mat;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Step for the central differences.
    pub epsilon: f64,
    /// Coordinates probed per parameter block; larger blocks are sampled.
    pub max_probes_per_block: usize,
    /// Seed for the coordinate sampler.
    pub seed: u64,
    /// Adjoint fault injected into the analytic pass; 1.0 means none. Used
    /// to demonstrate that the harness catches broken adjoints.
    pub fault_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_probes_per_block: 40,
            seed: 0,
            fault_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error seen over all probed coordinates.
    pub max_rel_err: f64,
    pub worst_block: String,
    pub worst_coord: usize,
    pub probes: usize,
}

/// Compares analytic gradients of a scalar loss against central finite
/// differences, one parameter coordinate at a time.
///
/// `build` must construct the loss on the given tape from leaves that mirror
/// `blocks` (same order, same shapes) and must be deterministic. Differences
/// below 1e-9 are treated as measurement noise and score zero: a coordinate
/// with a structurally zero gradient still rounds at the f64 level, and that
/// floor must not drown out real adjoint bugs.
pub fn grad_check<E, F>(
    blocks: &[(String, Mat)],
    build: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, E>
where
    E: From<TensorError>,
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, E>,
{
    // Analytic pass.
    let tape = Tape::new();
    tape.inject_adjoint_fault(cfg.fault_scale);
    let leaves: Vec<Tensor<'_>> = blocks
        .iter()
        .map(|(_, m)| tape.leaf_from(m, true))
        .collect::<Result<_, TensorError>>()?;
    let loss = build(&tape, &leaves)?;
    loss.scalar_value()?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().expect("parameter leaf has a gradient buffer"))
        .collect();

    let eval = |mats: &[Mat]| -> Result<f64, E> {
        let tape = Tape::new();
        let leaves: Vec<Tensor<'_>> = mats
            .iter()
            .map(|m| tape.leaf_from(m, false))
            .collect::<Result<_, TensorError>>()?;
        let loss = build(&tape, &leaves)?;
        Ok(loss.scalar_value()?)
    };

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut scratch: Vec<Mat> = blocks.iter().map(|(_, m)| m.clone()).collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_block: String::new(),
        worst_coord: 0,
        probes: 0,
    };

    for (bi, (name, mat)) in blocks.iter().enumerate() {
        let len = mat.len();
        let coords: Vec<usize> = if len <= cfg.max_probes_per_block {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, cfg.max_probes_per_block).into_vec()
        };
        for coord in coords {
            let orig = scratch[bi].data()[coord];
            scratch[bi].data_mut()[coord] = orig + cfg.epsilon;
            let plus = eval(&scratch)?;
            scratch[bi].data_mut()[coord] = orig - cfg.epsilon;
            let minus = eval(&scratch)?;
            scratch[bi].data_mut()[coord] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let exact = analytic[bi][coord];
            let rel = relative_error(exact, numeric);
            report.probes += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_block = name.clone();
                report.worst_coord = coord;
            }
        }
    }
    Ok(report)
}

fn relative_error(exact: f64, numeric: f64) -> f64 {
    let diff = (exact - numeric).abs();
    if diff <= 1e-9 {
        return 0.0;
    }
    diff / exact.abs().max(numeric.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorError;

    #[test]
    fn relative_error_floors_noise() {
        assert_eq!(relative_error(0.0, 3e-10), 0.0);
        assert!(relative_error(1.0, 1.05) > 1e-2);
    }

    #[test]
    fn linear_map_passes() {
        // loss = mse(x . w, y) with constant x, y
        let w = Mat::from_vec(3, 2, vec![0.3, -0.2, 0.8, 0.5, -0.6, 0.1]);
        let report = grad_check::<TensorError, _>(
            &[("w".to_string(), w)],
            |tape, leaves| {
                let x = tape.constant(2, 3, vec![0.2, -0.4, 0.9, 1.1, 0.3, -0.7])?;
                let y = tape.constant(2, 2, vec![0.1, 0.2, -0.3, 0.4])?;
                x.matmul(leaves[0])?.mse_loss(y)
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-7,
            "rel err {} too large",
            report.max_rel_err
        );
    }

    #[test]
    fn injected_fault_is_detected() {
        let w = Mat::from_vec(2, 2, vec![0.4, -0.1, 0.7, 0.2]);
        let cfg = GradCheckConfig {
            fault_scale: 1.05,
            ..Default::default()
        };
        let report = grad_check::<TensorError, _>(
            &[("w".to_string(), w)],
            |tape, leaves| {
                let x = tape.constant(1, 2, vec![0.5, -0.8])?;
                let y = tape.constant(1, 2, vec![0.3, 0.9])?;
                x.matmul(leaves[0])?.mse_loss(y)
            },
            &cfg,
        )
        .unwrap();
        assert!(
            report.max_rel_err > 1e-2,
            "fault went undetected, rel err {}",
            report.max_rel_err
        );
    }
}
