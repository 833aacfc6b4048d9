use super::{NeuralError, Tensor};

/// Batch renormalization settings. With `renorm = false` the layer is plain
/// batch normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormConfig {
    /// Running-statistics decay per train-mode forward.
    pub momentum: f64,
    pub eps: f64,
    pub renorm: bool,
    pub r_max: f64,
    pub d_max: f64,
    /// Train-mode forwards over which the correction limits ramp from
    /// (1, 0) up to (`r_max`, `d_max`).
    pub warmup_steps: u64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self { momentum: 0.99, eps: 1e-5, renorm: true, r_max: 3.0, d_max: 5.0, warmup_steps: 10_000 }
    }
}

/// Per-feature normalization with learned scale/shift and running
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRenorm {
    pub scale: Tensor,
    pub shift: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    /// Train-mode forwards seen so far.
    pub steps: u64,
    pub config: BatchNormConfig,
}

/// Intermediates of one normalization forward.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache {
    train: bool,
    /// Input centered and scaled by the statistics in use.
    z: Tensor,
    inv_std: Vec<f64>,
    r: Vec<f64>,
    d: Vec<f64>,
    /// Statistics the rows were normalized with (batch in train mode,
    /// running in eval mode).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl NormCache {
    /// Normalized activations before scale and shift.
    pub fn normalized(&self) -> Tensor {
        let mut out = self.z.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (f64::from(*v) * self.r[j] + self.d[j]) as f32;
            }
        }
        out
    }

    pub fn corrections(&self) -> (&[f64], &[f64]) {
        (&self.r, &self.d)
    }
}

/// New running statistics produced by a train-mode forward.
#[derive(Debug, Clone)]
pub(crate) struct StatUpdate {
    mean: Vec<f32>,
    var: Vec<f32>,
}

impl BatchRenorm {
    pub fn new(features: usize, config: BatchNormConfig) -> Self {
        Self {
            scale: Tensor::filled(1, features, 1.0),
            shift: Tensor::zeros(1, features),
            running_mean: Tensor::zeros(1, features),
            running_var: Tensor::filled(1, features, 1.0),
            steps: 0,
            config,
        }
    }

    pub fn features(&self) -> usize {
        self.scale.cols()
    }

    /// Current `(r_max, d_max)` after warm-up.
    pub fn limits(&self) -> (f64, f64) {
        if !self.config.renorm {
            return (1.0, 0.0);
        }
        let frac = if self.config.warmup_steps == 0 {
            1.0
        } else {
            (self.steps as f64 / self.config.warmup_steps as f64).min(1.0)
        };
        (1.0 + (self.config.r_max - 1.0) * frac, self.config.d_max * frac)
    }

    fn apply(&self, z: &Tensor, r: &[f64], d: &[f64]) -> Tensor {
        let mut y = z.clone();
        let (scale, shift) = (self.scale.data(), self.shift.data());
        for i in 0..y.rows() {
            for (j, v) in y.row_mut(i).iter_mut().enumerate() {
                let xhat = f64::from(*v) * r[j] + d[j];
                *v = (f64::from(scale[j]) * xhat + f64::from(shift[j])) as f32;
            }
        }
        y
    }

    pub(crate) fn forward_train(&self, x: &Tensor) -> Result<(Tensor, NormCache, StatUpdate), NeuralError> {
        let (n, f) = x.shape();
        if f != self.features() {
            return Err(NeuralError::Shape(format!("norm expects {} features, got {f}", self.features())));
        }
        if n == 0 {
            return Err(NeuralError::Shape("train-mode normalization of an empty batch".into()));
        }
        let inv_n = 1.0 / n as f64;
        let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s * inv_n).collect();
        let mut var = vec![0.0f64; f];
        for i in 0..n {
            for ((acc, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                let c = f64::from(v) - m;
                *acc += c * c;
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_n);

        let eps = self.config.eps;
        let (r_max, d_max) = self.limits();
        let mut inv_std = vec![0.0; f];
        let mut r = vec![1.0; f];
        let mut d = vec![0.0; f];
        for j in 0..f {
            let std = (var[j] + eps).sqrt();
            inv_std[j] = 1.0 / std;
            let run_std = (f64::from(self.running_var.data()[j]) + eps).sqrt();
            r[j] = (std / run_std).clamp(1.0 / r_max, r_max);
            d[j] = ((mean[j] - f64::from(self.running_mean.data()[j])) / run_std).clamp(-d_max, d_max);
        }
        let mut z = x.clone();
        for i in 0..n {
            for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                *v = ((f64::from(*v) - mean[j]) * inv_std[j]) as f32;
            }
        }
        let y = self.apply(&z, &r, &d);

        let keep = self.config.momentum;
        let update = StatUpdate {
            mean: (0..f)
                .map(|j| {
                    let old = f64::from(self.running_mean.data()[j]);
                    (old + (1.0 - keep) * (mean[j] - old)) as f32
                })
                .collect(),
            var: (0..f)
                .map(|j| {
                    let old = f64::from(self.running_var.data()[j]);
                    (old + (1.0 - keep) * (var[j] - old)) as f32
                })
                .collect(),
        };
        Ok((y, NormCache { train: true, z, inv_std, r, d, mean, var }, update))
    }

    pub(crate) fn commit(&mut self, update: StatUpdate) {
        self.running_mean.data_mut().copy_from_slice(&update.mean);
        self.running_var.data_mut().copy_from_slice(&update.var);
        self.steps += 1;
    }

    pub(crate) fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, NormCache), NeuralError> {
        let (n, f) = x.shape();
        if f != self.features() {
            return Err(NeuralError::Shape(format!("norm expects {} features, got {f}", self.features())));
        }
        let mean: Vec<f64> = self.running_mean.data().iter().map(|&v| f64::from(v)).collect();
        let var: Vec<f64> = self.running_var.data().iter().map(|&v| f64::from(v)).collect();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.config.eps).sqrt()).collect();
        let mut z = x.clone();
        for i in 0..n {
            for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                *v = ((f64::from(*v) - mean[j]) * inv_std[j]) as f32;
            }
        }
        let (r, d) = (vec![1.0; f], vec![0.0; f]);
        let y = self.apply(&z, &r, &d);
        Ok((y, NormCache { train: false, z, inv_std, r, d, mean, var }))
    }

    /// Returns `(d_input, d_scale, d_shift)`.
    pub(crate) fn backward(&self, cache: &NormCache, dy: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (n, f) = dy.shape();
        let scale = self.scale.data();
        let mut d_scale = vec![0.0f64; f];
        let mut d_shift = vec![0.0f64; f];
        for i in 0..n {
            let (g, z) = (dy.row(i), cache.z.row(i));
            for j in 0..f {
                let gj = f64::from(g[j]);
                d_shift[j] += gj;
                d_scale[j] += gj * (f64::from(z[j]) * cache.r[j] + cache.d[j]);
            }
        }
        let mut dx = Tensor::zeros(n, f);
        if !cache.train {
            for i in 0..n {
                let (g, out) = (dy.row(i), dx.row_mut(i));
                for j in 0..f {
                    out[j] = (f64::from(g[j]) * f64::from(scale[j]) * cache.inv_std[j]) as f32;
                }
            }
            return (dx, d_scale, d_shift);
        }
        // dz = dy * scale * r; dx = inv_std * (dz - mean(dz) - z * mean(dz * z)).
        let mut mean_dz = vec![0.0f64; f];
        let mut mean_dz_z = vec![0.0f64; f];
        for i in 0..n {
            let (g, z) = (dy.row(i), cache.z.row(i));
            for j in 0..f {
                let dz = f64::from(g[j]) * f64::from(scale[j]) * cache.r[j];
                mean_dz[j] += dz;
                mean_dz_z[j] += dz * f64::from(z[j]);
            }
        }
        let inv_n = 1.0 / n as f64;
        mean_dz.iter_mut().for_each(|v| *v *= inv_n);
        mean_dz_z.iter_mut().for_each(|v| *v *= inv_n);
        for i in 0..n {
            let (g, z) = (dy.row(i), cache.z.row(i));
            let out = dx.row_mut(i);
            for j in 0..f {
                let dz = f64::from(g[j]) * f64::from(scale[j]) * cache.r[j];
                out[j] = (cache.inv_std[j] * (dz - mean_dz[j] - f64::from(z[j]) * mean_dz_z[j])) as f32;
            }
        }
        (dx, d_scale, d_shift)
    }
}
