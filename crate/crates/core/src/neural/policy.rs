use rand::Rng;
use rand_distr::StandardNormal;

use super::{NeuralError, Tensor};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the tanh Jacobian.
pub const SQUASH_EPS: f64 = 1e-6;
/// Largest magnitude an `f32` action may take, keeps `atanh` finite.
const ACTION_LIMIT: f32 = 0.999_999_9;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn split_head(head: &Tensor) -> Result<usize, NeuralError> {
    if head.cols() % 2 != 0 || head.cols() == 0 {
        return Err(NeuralError::Shape(format!(
            "policy head needs an even number of columns (mean | log_std), got {}",
            head.cols()
        )));
    }
    Ok(head.cols() / 2)
}

/// `tanh(mean)` for a head laid out as `[mean | log_std]`.
pub fn deterministic_actions(head: &Tensor) -> Result<Tensor, NeuralError> {
    let a = split_head(head)?;
    let mut out = Tensor::zeros(head.rows(), a);
    for i in 0..head.rows() {
        for j in 0..a {
            let t = f64::from(head.get(i, j)).tanh() as f32;
            out.set(i, j, t.clamp(-ACTION_LIMIT, ACTION_LIMIT));
        }
    }
    Ok(out)
}

/// A reparameterized draw from the tanh-squashed diagonal Gaussian, with
/// what is needed to push gradients back into the head.
#[derive(Debug, Clone)]
pub struct GaussianSample {
    pub actions: Tensor,
    /// Log density of each row's action.
    pub log_prob: Vec<f64>,
    dims: usize,
    squashed: Vec<f64>,
    std_noise: Vec<f64>,
    log_std_clamped: Vec<bool>,
}

impl GaussianSample {
    /// Draws standard normal noise from `rng`.
    pub fn draw<R: Rng>(head: &Tensor, rng: &mut R) -> Result<Self, NeuralError> {
        let a = split_head(head)?;
        let data = (0..head.rows() * a).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        Self::with_noise(head, &Tensor::from_vec(head.rows(), a, data)?)
    }

    pub fn with_noise(head: &Tensor, noise: &Tensor) -> Result<Self, NeuralError> {
        let a = split_head(head)?;
        if noise.shape() != (head.rows(), a) {
            return Err(NeuralError::Shape(format!(
                "noise is {:?}, expected {}x{a}",
                noise.shape(),
                head.rows()
            )));
        }
        let n = head.rows();
        let mut actions = Tensor::zeros(n, a);
        let mut log_prob = vec![0.0; n];
        let mut squashed = Vec::with_capacity(n * a);
        let mut std_noise = Vec::with_capacity(n * a);
        let mut log_std_clamped = Vec::with_capacity(n * a);
        for i in 0..n {
            for j in 0..a {
                let mean = f64::from(head.get(i, j));
                let raw = f64::from(head.get(i, a + j));
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let eps = f64::from(noise.get(i, j));
                let sn = log_std.exp() * eps;
                let t = (mean + sn).tanh();
                log_prob[i] += -0.5 * eps * eps - log_std - HALF_LN_2PI - (1.0 - t * t + SQUASH_EPS).ln();
                actions.set(i, j, (t as f32).clamp(-ACTION_LIMIT, ACTION_LIMIT));
                squashed.push(t);
                std_noise.push(sn);
                log_std_clamped.push(raw != log_std);
            }
        }
        if log_prob.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite("policy log-probability".into()));
        }
        Ok(Self { actions, log_prob, dims: a, squashed, std_noise, log_std_clamped })
    }

    /// Gradient with respect to the head given `dL/d(actions)` and
    /// `dL/d(log_prob)`. The noise is held fixed.
    pub fn backward(&self, d_actions: &Tensor, d_log_prob: &[f64]) -> Result<Tensor, NeuralError> {
        let (n, a) = (self.log_prob.len(), self.dims);
        if d_actions.shape() != (n, a) || d_log_prob.len() != n {
            return Err(NeuralError::Shape(format!(
                "action gradient {:?} / log-prob gradient {} for a {n}x{a} sample",
                d_actions.shape(),
                d_log_prob.len()
            )));
        }
        let mut out = Tensor::zeros(n, 2 * a);
        for i in 0..n {
            for j in 0..a {
                let k = i * a + j;
                let t = self.squashed[k];
                let jac = 1.0 - t * t;
                let du = f64::from(d_actions.get(i, j)) * jac + d_log_prob[i] * 2.0 * t * jac / (jac + SQUASH_EPS);
                out.set(i, j, du as f32);
                let dls = if self.log_std_clamped[k] { 0.0 } else { du * self.std_noise[k] - d_log_prob[i] };
                out.set(i, a + j, dls as f32);
            }
        }
        Ok(out)
    }
}
