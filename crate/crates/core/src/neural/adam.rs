use super::{NeuralError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments. Moment buffers are created lazily on
/// the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NeuralError> {
        if params.len() != grads.len() {
            return Err(NeuralError::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(NeuralError::Shape(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
            }
            g.ensure_finite("gradient")?;
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &gi), (mi, vi)) in it {
                let gi = f64::from(gi);
                let m_new = c.beta1 * f64::from(*mi) + (1.0 - c.beta1) * gi;
                let v_new = c.beta2 * f64::from(*vi) + (1.0 - c.beta2) * gi * gi;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let step = c.lr * (m_new / bc1) / ((v_new / bc2).sqrt() + c.eps);
                *w = (f64::from(*w) - step) as f32;
            }
        }
        Ok(())
    }
}
