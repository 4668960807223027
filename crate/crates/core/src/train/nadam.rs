//! Nesterov-accelerated adaptive moment optimizer.

use super::TrainError;
use crate::mat::Mat;

struct Moment {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// NAdam with bias correction. The update applied to each parameter is
///
/// ```text
/// m <- b1 m + (1 - b1) g            v <- b2 v + (1 - b2) g^2
/// m^ = m / (1 - b1^t)               v^ = v / (1 - b2^t)
/// dp = -lr (b1 m^ + (1 - b1) g / (1 - b1^t)) / (sqrt(v^) + eps)
/// ```
///
/// with b1 = 0.9, b2 = 0.999, eps = 1e-8. The step counter increments
/// before the update, so the first step uses t = 1.
pub struct Nadam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    moments: Vec<Moment>,
}

impl Nadam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. Moment buffers are allocated on the
    /// first call and must keep matching shapes afterwards. A non-finite
    /// gradient aborts the step before any parameter is touched.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Mat)],
        grads: &[Mat],
    ) -> Result<(), TrainError> {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.moments.is_empty() {
            self.moments = grads
                .iter()
                .map(|g| Moment {
                    m: vec![0.0; g.len()],
                    v: vec![0.0; g.len()],
                })
                .collect();
        }
        for ((name, p), g) in params.iter().zip(grads) {
            assert_eq!(p.len(), g.len(), "gradient shape mismatch for {name}");
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGrad {
                    block: name.clone(),
                    step: self.t + 1,
                });
            }
        }

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        #[allow(clippy::needless_range_loop)]
        for ((_, p), (g, s)) in params
            .iter_mut()
            .zip(grads.iter().zip(self.moments.iter_mut()))
        {
            let data = p.data_mut();
            for i in 0..data.len() {
                let gi = g.data()[i];
                s.m[i] = self.beta1 * s.m[i] + (1.0 - self.beta1) * gi;
                s.v[i] = self.beta2 * s.v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = s.m[i] / bc1;
                let v_hat = s.v[i] / bc2;
                let lookahead = self.beta1 * m_hat + (1.0 - self.beta1) * gi / bc1;
                data[i] -= self.lr * lookahead / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
