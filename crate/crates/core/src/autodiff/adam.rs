use super::{AutodiffError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Tensor,
    v: Tensor,
    steps: u64,
}

/// Adam moment buffers, one slot per parameter.
///
/// A parameter whose gradient is `None` in a step is skipped entirely: its
/// value, moments and bias-correction counter are left untouched.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    moments: Vec<Option<Moments>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        AdamState {
            config,
            moments: vec![None; num_params],
            step: 0,
        }
    }

    /// Number of optimizer steps taken.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update using `lr` for this step.
    pub fn step(
        &mut self,
        params: &mut [Tensor],
        grads: &[Option<Tensor>],
        lr: f64,
    ) -> Result<(), AutodiffError> {
        if params.len() != grads.len() || params.len() != self.moments.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                got: vec![grads.len()],
                expected: vec![params.len()],
            });
        }
        for ((p, g), _) in params.iter().zip(grads).zip(&self.moments) {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "adam_step",
                        got: g.shape().to_vec(),
                        expected: p.shape().to_vec(),
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            let Some(g) = g else { continue };
            let mom = slot.get_or_insert_with(|| Moments {
                m: Tensor::zeros(p.shape()),
                v: Tensor::zeros(p.shape()),
                steps: 0,
            });
            mom.steps += 1;
            let c1 = 1.0 - beta1.powi(mom.steps as i32);
            let c2 = 1.0 - beta2.powi(mom.steps as i32);
            let (m, v) = (mom.m.data_mut(), mom.v.data_mut());
            for (((x, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(Tensor::sq_norm)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let c = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| g.scale_in_place(c));
    }
    norm
}
