use rand::Rng;

use super::norm::{BatchNormConfig, BatchRenorm, NormCache, StatUpdate};
use super::{matmul, matmul_nt, matmul_tn, NeuralError, Tensor};

/// Architecture of a ReLU perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Normalization between each hidden affine map and its ReLU.
    pub batch_norm: Option<BatchNormConfig>,
    /// Also normalize the raw input (only with `batch_norm`).
    pub input_norm: bool,
}

/// Affine map `y = x W + b`, `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    /// Uniform weights with variance `1 / fan_in`, zero bias.
    fn init<R: Rng>(inputs: usize, outputs: usize, with_bias: bool, rng: &mut R) -> Self {
        let bound = (3.0 / inputs as f64).sqrt() as f32;
        let data = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Tensor::from_vec(inputs, outputs, data).expect("sized above"),
            bias: with_bias.then(|| Tensor::zeros(1, outputs)),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        let mut y = matmul(x, &self.weight)?;
        if let Some(b) = &self.bias {
            y.add_row_vector(b.data());
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; nothing is updated.
    Eval,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    mode: Mode,
    /// `inputs[0]` is the (normalized) network input, `inputs[i + 1]` the
    /// output of hidden block `i` (after ReLU).
    inputs: Vec<Tensor>,
    input_norm: Option<NormCache>,
    norms: Vec<NormCache>,
}

impl MlpCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_rows(&self) -> usize {
        self.inputs[0].rows()
    }

    /// Normalization intermediates of hidden block `layer`.
    pub fn norm(&self, layer: usize) -> Option<&NormCache> {
        self.norms.get(layer)
    }

    pub fn input_norm(&self) -> Option<&NormCache> {
        self.input_norm.as_ref()
    }

    pub fn hidden_output(&self, layer: usize) -> &Tensor {
        &self.inputs[layer + 1]
    }
}

/// Gradients for every parameter (same order as [`Mlp::params`]) and for
/// the input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    input_norm: Option<BatchRenorm>,
    hidden: Vec<Linear>,
    norms: Vec<BatchRenorm>,
    out: Linear,
}

fn relu_in_place(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

fn to_f32_row(v: &[f64]) -> Tensor {
    Tensor::from_vec(1, v.len(), v.iter().map(|&x| x as f32).collect()).expect("row vector")
}

impl Mlp {
    pub fn new<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut hidden = Vec::with_capacity(spec.hidden.len());
        let mut norms = Vec::new();
        let mut width = spec.input_dim;
        for &h in &spec.hidden {
            // A bias in front of a normalization is cancelled by the centering.
            hidden.push(Linear::init(width, h, spec.batch_norm.is_none(), rng));
            if let Some(cfg) = spec.batch_norm {
                norms.push(BatchRenorm::new(h, cfg));
            }
            width = h;
        }
        let out = Linear::init(width, spec.output_dim, true, rng);
        let input_norm = match spec.batch_norm {
            Some(cfg) if spec.input_norm => Some(BatchRenorm::new(spec.input_dim, cfg)),
            _ => None,
        };
        Self { spec, input_norm, hidden, norms, out }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// All normalization layers, input normalization first.
    pub fn norms(&self) -> Vec<&BatchRenorm> {
        self.input_norm.iter().chain(&self.norms).collect()
    }

    pub fn norms_mut(&mut self) -> Vec<&mut BatchRenorm> {
        self.input_norm.iter_mut().chain(self.norms.iter_mut()).collect()
    }

    /// Names matching [`Mlp::norms`].
    pub fn norm_names(&self) -> Vec<String> {
        let hidden = (0..self.norms.len()).map(|i| format!("norm.{i}"));
        self.input_norm.iter().map(|_| "input_norm".to_string()).chain(hidden).collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        if let Some(n) = &self.input_norm {
            out.push(&n.scale);
            out.push(&n.shift);
        }
        for (i, layer) in self.hidden.iter().enumerate() {
            out.push(&layer.weight);
            if let Some(b) = &layer.bias {
                out.push(b);
            }
            if let Some(n) = self.norms.get(i) {
                out.push(&n.scale);
                out.push(&n.shift);
            }
        }
        out.push(&self.out.weight);
        out.extend(self.out.bias.as_ref());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if let Some(n) = self.input_norm.as_mut() {
            out.push(&mut n.scale);
            out.push(&mut n.shift);
        }
        let mut norms = self.norms.iter_mut();
        for layer in self.hidden.iter_mut() {
            out.push(&mut layer.weight);
            if let Some(b) = layer.bias.as_mut() {
                out.push(b);
            }
            if let Some(n) = norms.next() {
                out.push(&mut n.scale);
                out.push(&mut n.shift);
            }
        }
        out.push(&mut self.out.weight);
        out.extend(self.out.bias.as_mut());
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.input_norm.is_some() {
            out.push("input_norm.scale".into());
            out.push("input_norm.shift".into());
        }
        for (i, layer) in self.hidden.iter().enumerate() {
            out.push(format!("hidden.{i}.weight"));
            if layer.bias.is_some() {
                out.push(format!("hidden.{i}.bias"));
            }
            if i < self.norms.len() {
                out.push(format!("norm.{i}.scale"));
                out.push(format!("norm.{i}.shift"));
            }
        }
        out.push("out.weight".into());
        if self.out.bias.is_some() {
            out.push("out.bias".into());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.data().len()).sum()
    }

    fn run(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, MlpCache, Vec<StatUpdate>), NeuralError> {
        if x.cols() != self.spec.input_dim {
            return Err(NeuralError::Shape(format!(
                "network expects {} input columns, got {}",
                self.spec.input_dim,
                x.cols()
            )));
        }
        let mut updates = Vec::new();
        let (x0, input_cache) = match &self.input_norm {
            None => (x.clone(), None),
            Some(norm) => {
                let (y, cache) = Self::normalize(norm, x, mode, &mut updates)?;
                (y, Some(cache))
            }
        };
        let mut inputs = vec![x0];
        let mut norm_caches = Vec::with_capacity(self.norms.len());
        for (i, layer) in self.hidden.iter().enumerate() {
            let mut h = layer.forward(&inputs[i])?;
            if let Some(norm) = self.norms.get(i) {
                let (y, cache) = Self::normalize(norm, &h, mode, &mut updates)?;
                norm_caches.push(cache);
                h = y;
            }
            relu_in_place(&mut h);
            inputs.push(h);
        }
        let y = self.out.forward(inputs.last().expect("input is always present"))?;
        y.ensure_finite("network output")?;
        Ok((y, MlpCache { mode, inputs, input_norm: input_cache, norms: norm_caches }, updates))
    }

    fn normalize(
        norm: &BatchRenorm,
        x: &Tensor,
        mode: Mode,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<(Tensor, NormCache), NeuralError> {
        match mode {
            Mode::Train => {
                let (y, cache, update) = norm.forward_train(x)?;
                updates.push(update);
                Ok((y, cache))
            }
            Mode::Eval => norm.forward_eval(x),
        }
    }

    /// Forward pass. In train mode the normalization layers use batch
    /// statistics and their running statistics are advanced.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, MlpCache), NeuralError> {
        let (y, cache, updates) = self.run(x, mode)?;
        for (norm, update) in self.norms_mut().into_iter().zip(updates) {
            norm.commit(update);
        }
        Ok((y, cache))
    }

    /// Eval-mode forward pass.
    pub fn infer(&self, x: &Tensor) -> Result<(Tensor, MlpCache), NeuralError> {
        let (y, cache, _) = self.run(x, Mode::Eval)?;
        Ok((y, cache))
    }

    /// Reverse-mode pass for `upstream = dL/d(output)`. Parameter
    /// gradients are skipped (left empty) when `param_grads` is false.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: &Tensor,
        param_grads: bool,
    ) -> Result<Gradients, NeuralError> {
        let last = cache.inputs.last().expect("input is always present");
        if upstream.shape() != (last.rows(), self.spec.output_dim) {
            return Err(NeuralError::Shape(format!(
                "upstream gradient is {:?}, output is {}x{}",
                upstream.shape(),
                last.rows(),
                self.spec.output_dim
            )));
        }
        // Collected back to front, reversed at the end.
        let mut grads: Vec<Tensor> = Vec::new();
        if param_grads {
            if self.out.bias.is_some() {
                grads.push(to_f32_row(&upstream.col_sums()));
            }
            grads.push(matmul_tn(last, upstream)?);
        }
        let mut g = matmul_nt(upstream, &self.out.weight)?;
        for i in (0..self.hidden.len()).rev() {
            let post = &cache.inputs[i + 1];
            for (gv, &pv) in g.data_mut().iter_mut().zip(post.data()) {
                if pv <= 0.0 {
                    *gv = 0.0;
                }
            }
            if let (Some(norm), Some(nc)) = (self.norms.get(i), cache.norms.get(i)) {
                let (dx, d_scale, d_shift) = norm.backward(nc, &g);
                if param_grads {
                    grads.push(to_f32_row(&d_shift));
                    grads.push(to_f32_row(&d_scale));
                }
                g = dx;
            }
            let layer = &self.hidden[i];
            if param_grads {
                if layer.bias.is_some() {
                    grads.push(to_f32_row(&g.col_sums()));
                }
                grads.push(matmul_tn(&cache.inputs[i], &g)?);
            }
            g = matmul_nt(&g, &layer.weight)?;
        }
        if let (Some(norm), Some(nc)) = (&self.input_norm, &cache.input_norm) {
            let (dx, d_scale, d_shift) = norm.backward(nc, &g);
            if param_grads {
                grads.push(to_f32_row(&d_shift));
                grads.push(to_f32_row(&d_scale));
            }
            g = dx;
        }
        grads.reverse();
        Ok(Gradients { params: grads, input: g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn random_input(rows: usize, cols: usize, scale: f32, seed: u64) -> Tensor {
        let mut rng = substream(seed, "input");
        let data = (0..rows * cols)
            .map(|_| scale * <StandardNormal as Distribution<f32>>::sample(&StandardNormal, &mut rng))
            .collect();
        Tensor::from_vec(rows, cols, data).unwrap()
    }

    fn bn_spec() -> MlpSpec {
        MlpSpec {
            input_dim: 16,
            hidden: vec![32, 32],
            output_dim: 4,
            batch_norm: Some(BatchNormConfig::default()),
            input_norm: true,
        }
    }

    #[test]
    fn zero_weights_give_constant_rows() {
        let mut rng = substream(0, "init");
        let spec = MlpSpec { input_dim: 3, hidden: vec![4, 4], output_dim: 2, batch_norm: None, input_norm: false };
        let mut net = Mlp::new(spec, &mut rng);
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        net.out.bias.as_mut().unwrap().data_mut().copy_from_slice(&[0.5, -1.5]);
        let (y, _) = net.forward(&random_input(5, 3, 1.0, 1), Mode::Train).unwrap();
        for i in 0..5 {
            assert_eq!(y.row(i), &[0.5, -1.5]);
        }
    }

    #[test]
    fn identical_rows_in_train_mode_are_finite() {
        let mut net = Mlp::new(bn_spec(), &mut substream(0, "init"));
        let row = random_input(1, 16, 1.0, 2);
        let mut x = row.clone();
        for _ in 0..7 {
            x = x.concat_rows(&row).unwrap();
        }
        let (y, cache) = net.forward(&x, Mode::Train).unwrap();
        y.ensure_finite("y").unwrap();
        let g = net.backward(&cache, &Tensor::filled(8, 4, 1.0), true).unwrap();
        g.params.iter().for_each(|t| t.ensure_finite("grad").unwrap());
    }

    #[test]
    fn train_mode_normalized_activations_are_standardized() {
        // Raw inputs at scale 2 keep the eps floor below the 1e-5 tolerance.
        let mut net = Mlp::new(MlpSpec { input_norm: false, ..bn_spec() }, &mut substream(3, "init"));
        let x = random_input(256, 16, 2.0, 4);
        let (_, cache) = net.forward(&x, Mode::Train).unwrap();
        let xhat = cache.norm(0).unwrap().normalized();
        let n = xhat.rows() as f64;
        let means: Vec<f64> = xhat.col_sums().iter().map(|s| s / n).collect();
        for (j, m) in means.iter().enumerate() {
            assert!(m.abs() < 1e-6, "feature {j} mean {m}");
            let var: f64 = (0..xhat.rows()).map(|i| (f64::from(xhat.get(i, j)) - m).powi(2)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 1e-5, "feature {j} var {var}");
        }
    }

    #[test]
    fn linear_layer_weight_gradient_is_input_column_sums() {
        // No hidden layers: the network is a single affine map.
        let spec = MlpSpec { input_dim: 3, hidden: vec![], output_dim: 2, batch_norm: None, input_norm: false };
        let net = Mlp::new(spec, &mut substream(0, "init"));
        let x = random_input(6, 3, 1.0, 5);
        let (_, cache) = net.infer(&x).unwrap();
        let g = net.backward(&cache, &Tensor::filled(6, 2, 1.0), true).unwrap();
        let sums = x.col_sums();
        for i in 0..3 {
            for j in 0..2 {
                assert!((f64::from(g.params[0].get(i, j)) - sums[i]).abs() < 1e-5);
            }
        }
        assert_eq!(g.params[1].data(), &[6.0, 6.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = Mlp::new(bn_spec(), &mut substream(1, "init"));
        let (_, cache) = net.forward(&random_input(10, 16, 1.0, 6), Mode::Train).unwrap();
        let g = net.backward(&cache, &Tensor::zeros(10, 4), true).unwrap();
        assert_eq!(g.params.len(), net.params().len());
        for (t, p) in g.params.iter().zip(net.params()) {
            assert_eq!(t.shape(), p.shape());
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut net = Mlp::new(bn_spec(), &mut substream(2, "init"));
        for s in 0..5 {
            net.forward(&random_input(32, 16, 1.0, 10 + s), Mode::Train).unwrap();
        }
        let x = random_input(7, 16, 1.0, 99);
        let a = net.infer(&x).unwrap().0;
        let b = net.infer(&x).unwrap().0;
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn running_mean_converges_to_stream_mean() {
        // Single affine layer with identity weights so the normalized
        // features see the raw stream.
        let spec = MlpSpec { input_dim: 2, hidden: vec![2], output_dim: 1, batch_norm: Some(BatchNormConfig::default()), input_norm: false };
        let mut net = Mlp::new(spec, &mut substream(0, "init"));
        net.hidden[0].weight = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut rng = substream(7, "stream");
        for _ in 0..1000 {
            let data: Vec<f32> = (0..64)
                .flat_map(|_| {
                    let a: f32 = StandardNormal.sample(&mut rng);
                    let b: f32 = StandardNormal.sample(&mut rng);
                    [3.0 + 0.5 * a, -2.0 + 2.0 * b]
                })
                .collect();
            net.forward(&Tensor::from_vec(64, 2, data).unwrap(), Mode::Train).unwrap();
        }
        // Stationary EMA spread: sigma / sqrt(batch) * sqrt((1 - m) / (1 + m)).
        let spread = |sigma: f64| sigma / 8.0 * (0.01f64 / 1.99).sqrt();
        let rm = net.norms()[0].running_mean.data();
        assert!((f64::from(rm[0]) - 3.0).abs() < 5.0 * spread(0.5), "{rm:?}");
        assert!((f64::from(rm[1]) + 2.0).abs() < 5.0 * spread(2.0), "{rm:?}");
        assert_eq!(net.norms()[0].steps, 1000);
    }

    #[test]
    fn names_match_params() {
        let net = Mlp::new(bn_spec(), &mut substream(0, "init"));
        assert_eq!(net.param_names().len(), net.params().len());
        assert_eq!(net.param_names()[..4], ["input_norm.scale", "input_norm.shift", "hidden.0.weight", "norm.0.scale"]);
        assert_eq!(net.norm_names(), ["input_norm", "norm.0", "norm.1"]);
        let plain = Mlp::new(MlpSpec { batch_norm: None, ..bn_spec() }, &mut substream(0, "init"));
        assert_eq!(plain.param_names()[1], "hidden.0.bias");
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::new(bn_spec(), &mut substream(0, "init"));
        assert!(net.infer(&Tensor::zeros(2, 15)).is_err());
        let (_, cache) = net.infer(&Tensor::zeros(2, 16)).unwrap();
        assert!(net.backward(&cache, &Tensor::zeros(3, 4), true).is_err());
    }
}
