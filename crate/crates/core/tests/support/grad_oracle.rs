//! Independent `f64` re-implementation of the network forward pass and a
//! central-difference gradient checker built on it.
//!
//! Shared by the gradient tests and the acceptance suite.

use dasmr_core::neural::{BatchNormConfig, GaussianSample, Mlp, MlpSpec, Mode, Tensor};
use dasmr_core::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Matrix = Vec<Vec<f64>>;

/// Normalization constants the oracle needs. Correction factors are
/// identity: checks run where running and batch statistics agree (before
/// any warm-up) or in eval mode.
#[derive(Clone, Copy)]
pub enum NormMode {
    Batch,
    Running,
}

pub struct Oracle<'a> {
    pub spec: &'a MlpSpec,
    /// Running statistics per normalization layer, input layer first.
    pub running: Vec<(Vec<f64>, Vec<f64>)>,
    pub mode: NormMode,
    pub eps: f64,
}

fn normalize(x: &Matrix, scale: &[f64], shift: &[f64], stats: Option<(&[f64], &[f64])>, eps: f64) -> Matrix {
    let (n, f) = (x.len(), x[0].len());
    let (mean, var) = match stats {
        Some((m, v)) => (m.to_vec(), v.to_vec()),
        None => {
            let mean: Vec<f64> = (0..f).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
            let var = (0..f).map(|j| x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).collect();
            (mean, var)
        }
    };
    x.iter()
        .map(|r| (0..f).map(|j| scale[j] * (r[j] - mean[j]) / (var[j] + eps).sqrt() + shift[j]).collect())
        .collect()
}

fn affine(x: &Matrix, w: &[f64], b: Option<&[f64]>, outs: usize) -> Matrix {
    x.iter()
        .map(|r| {
            (0..outs)
                .map(|j| r.iter().enumerate().map(|(i, v)| v * w[i * outs + j]).sum::<f64>() + b.map_or(0.0, |b| b[j]))
                .collect()
        })
        .collect()
}

impl Oracle<'_> {
    /// Parameters are consumed in the network's documented order.
    pub fn forward(&self, params: &[Vec<f64>], x: &Matrix) -> Matrix {
        let bn = self.spec.batch_norm.is_some();
        let mut it = params.iter();
        let mut norm_idx = 0;
        let mut norm = |h: &Matrix, it: &mut std::slice::Iter<Vec<f64>>| {
            let (scale, shift) = (it.next().unwrap(), it.next().unwrap());
            let stats = match self.mode {
                NormMode::Batch { .. } => None,
                NormMode::Running => {
                    let (m, v) = &self.running[norm_idx];
                    Some((m.as_slice(), v.as_slice()))
                }
            };
            norm_idx += 1;
            normalize(h, scale, shift, stats, self.eps)
        };
        let mut h = x.clone();
        if bn && self.spec.input_norm {
            h = norm(&h, &mut it);
        }
        for &width in &self.spec.hidden {
            let w = it.next().unwrap();
            let b = if bn { None } else { Some(it.next().unwrap().as_slice()) };
            h = affine(&h, w, b, width);
            if bn {
                h = norm(&h, &mut it);
            }
            h.iter_mut().flatten().for_each(|v| *v = v.max(0.0));
        }
        let w = it.next().unwrap();
        let b = it.next().unwrap();
        assert!(it.next().is_none(), "unused parameters");
        affine(&h, w, Some(b), self.spec.output_dim)
    }
}

/// Log density and squashed action of a tanh-Gaussian head row-wise.
pub fn squashed_gaussian(head: &Matrix, noise: &Matrix) -> (Matrix, Vec<f64>) {
    let a = head[0].len() / 2;
    let mut actions = Vec::new();
    let mut logp = Vec::new();
    for (row, eps) in head.iter().zip(noise) {
        let mut lp = 0.0;
        let mut act = Vec::new();
        for j in 0..a {
            let ls = row[a + j].clamp(-20.0, 2.0);
            let u = row[j] + ls.exp() * eps[j];
            let t = u.tanh();
            lp += -0.5 * eps[j] * eps[j] - ls - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - t * t + 1e-6).ln();
            act.push(t);
        }
        actions.push(act);
        logp.push(lp);
    }
    (actions, logp)
}

pub fn to_matrix(t: &Tensor) -> Matrix {
    (0..t.rows()).map(|i| t.row(i).iter().map(|&v| f64::from(v)).collect()).collect()
}

pub fn random_tensor<R: Rng>(rows: usize, cols: usize, scale: f32, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f32, _>(StandardNormal)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Worst disagreement found for one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    pub worst_rel: f64,
    pub passed: bool,
}

/// Which loss the checked network feeds.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Head {
    /// `sum(C * out)` for a fixed random `C`.
    Linear,
    /// `sum(W * action) + sum(w * log_prob)` through a tanh-Gaussian head
    /// with fixed noise.
    Policy,
}

pub struct Case {
    pub label: &'static str,
    pub spec: MlpSpec,
    pub head: Head,
    /// Train-mode forwards before the check; the check then runs in eval
    /// mode so correction factors never enter.
    pub warm_batches: usize,
    pub batch: usize,
    pub seed: u64,
}

pub const REL_TOL: f64 = 1e-3;
/// Central-difference step applied to the `f64` oracle.
pub const FD_STEP: f64 = 1e-4;

/// Relative error with an absolute floor at 1e-4 of the network's largest
/// gradient entry. Entries far below that are dominated by `f32` rounding
/// in the analytic pass (a shift feeding a batch-centered layer has an
/// exactly zero gradient, for instance).
fn rel_error(analytic: f64, fd: f64, scale: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4 * scale).max(1e-12)
}

fn max_abs(t: &Tensor) -> f64 {
    t.data().iter().fold(0.0f64, |m, &v| m.max(f64::from(v).abs()))
}

pub fn check(case: &Case) -> Vec<ParamReport> {
    let mut rng = substream(case.seed, "gradcheck");
    let mut net = Mlp::new(case.spec.clone(), &mut rng);
    // Non-trivial scale/shift so their gradients are exercised in general
    // position.
    for (name, p) in net.param_names().into_iter().zip(net.params_mut()) {
        if name.ends_with(".scale") || name.ends_with(".shift") {
            let base = if name.ends_with(".scale") { 1.0 } else { 0.0 };
            for v in p.data_mut() {
                *v = base + 0.3 * rng.sample::<f32, _>(StandardNormal);
            }
        }
    }
    for _ in 0..case.warm_batches {
        let xb = random_tensor(case.batch, case.spec.input_dim, 1.5, &mut rng);
        net.forward(&xb, Mode::Train).unwrap();
    }
    let mode = if case.warm_batches == 0 { Mode::Train } else { Mode::Eval };
    let x = random_tensor(case.batch, case.spec.input_dim, 1.5, &mut rng);
    let out_cols = case.spec.output_dim;
    let coeff = to_matrix(&random_tensor(case.batch, out_cols, 1.0, &mut rng));
    let action_dims = out_cols / 2;
    let noise = random_tensor(case.batch, action_dims.max(1), 1.0, &mut rng);
    let logp_weight: Vec<f64> = (0..case.batch).map(|_| rng.random_range(-1.0..1.0)).collect();

    let eps = case.spec.batch_norm.map_or(BatchNormConfig::default().eps, |c| c.eps);
    let snapshot = net.clone();
    let (y, cache) = match mode {
        Mode::Train => net.forward(&x, Mode::Train).unwrap(),
        Mode::Eval => net.infer(&x).unwrap(),
    };
    let upstream = match case.head {
        Head::Linear => {
            let data = coeff.iter().flatten().map(|&v| v as f32).collect();
            Tensor::from_vec(case.batch, out_cols, data).unwrap()
        }
        Head::Policy => {
            let s = GaussianSample::with_noise(&y, &noise).unwrap();
            let d_act: Vec<f32> = coeff.iter().map(|r| r[..action_dims].iter().map(|&v| v as f32)).flatten().collect();
            s.backward(&Tensor::from_vec(case.batch, action_dims, d_act).unwrap(), &logp_weight).unwrap()
        }
    };
    let grads = snapshot.backward(&cache, &upstream, true).unwrap();

    let oracle = Oracle {
        spec: &case.spec,
        running: snapshot
            .norms()
            .iter()
            .map(|n| {
                let f = |t: &Tensor| t.data().iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
                (f(&n.running_mean), f(&n.running_var))
            })
            .collect(),
        mode: match mode {
            Mode::Train => NormMode::Batch,
            Mode::Eval => NormMode::Running,
        },
        eps,
    };
    let xm = to_matrix(&x);
    let noise_m = to_matrix(&noise);
    let loss = |params: &[Vec<f64>], input: &Matrix| -> f64 {
        let out = oracle.forward(params, input);
        match case.head {
            Head::Linear => out.iter().zip(&coeff).map(|(o, c)| o.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()).sum(),
            Head::Policy => {
                let (act, logp) = squashed_gaussian(&out, &noise_m);
                let a: f64 = act.iter().zip(&coeff).map(|(o, c)| o.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()).sum();
                a + logp.iter().zip(&logp_weight).map(|(l, w)| l * w).sum::<f64>()
            }
        }
    };
    let params: Vec<Vec<f64>> =
        snapshot.params().iter().map(|t| t.data().iter().map(|&v| f64::from(v)).collect()).collect();

    let scale = grads.params.iter().map(max_abs).fold(0.0, f64::max);
    let mut reports = Vec::new();
    for (k, name) in snapshot.param_names().into_iter().enumerate() {
        let analytic = grads.params[k].data();
        let mut worst = 0.0f64;
        let mut p = params.clone();
        for e in 0..p[k].len() {
            let orig = p[k][e];
            p[k][e] = orig + FD_STEP;
            let up = loss(&p, &xm);
            p[k][e] = orig - FD_STEP;
            let down = loss(&p, &xm);
            p[k][e] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(f64::from(analytic[e]), fd, scale));
        }
        reports.push(ParamReport { name, checked: p[k].len(), worst_rel: worst, passed: worst <= REL_TOL });
    }
    // Input gradient (what the policy update pulls through a critic).
    let analytic = grads.input.data();
    let input_scale = max_abs(&grads.input);
    let mut worst = 0.0f64;
    let mut xp = xm.clone();
    for i in 0..xm.len() {
        for j in 0..xm[0].len() {
            let orig = xp[i][j];
            xp[i][j] = orig + FD_STEP;
            let up = loss(&params, &xp);
            xp[i][j] = orig - FD_STEP;
            let down = loss(&params, &xp);
            xp[i][j] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(f64::from(analytic[i * xm[0].len() + j]), fd, input_scale));
        }
    }
    reports.push(ParamReport { name: "input".into(), checked: analytic.len(), worst_rel: worst, passed: worst <= REL_TOL });
    reports
}

/// Critic-like, actor-like and plain nets up to 16 -> 32 -> 32 -> 4, in
/// train and eval mode.
pub fn standard_cases() -> Vec<Case> {
    let bn = Some(BatchNormConfig::default());
    vec![
        Case {
            label: "critic train",
            spec: MlpSpec { input_dim: 18, hidden: vec![32, 32], output_dim: 1, batch_norm: bn, input_norm: true },
            head: Head::Linear,
            warm_batches: 0,
            batch: 16,
            seed: 1,
        },
        Case {
            label: "critic eval",
            spec: MlpSpec { input_dim: 18, hidden: vec![32, 32], output_dim: 1, batch_norm: bn, input_norm: true },
            head: Head::Linear,
            warm_batches: 20,
            batch: 16,
            seed: 2,
        },
        Case {
            label: "actor train",
            spec: MlpSpec { input_dim: 16, hidden: vec![32, 32], output_dim: 4, batch_norm: bn, input_norm: true },
            head: Head::Policy,
            warm_batches: 0,
            batch: 12,
            seed: 3,
        },
        Case {
            label: "plain",
            spec: MlpSpec { input_dim: 16, hidden: vec![32, 32], output_dim: 4, batch_norm: None, input_norm: false },
            head: Head::Linear,
            warm_batches: 0,
            batch: 8,
            seed: 4,
        },
        Case {
            label: "plain policy",
            spec: MlpSpec { input_dim: 16, hidden: vec![32, 32], output_dim: 4, batch_norm: None, input_norm: false },
            head: Head::Policy,
            warm_batches: 0,
            batch: 8,
            seed: 5,
        },
    ]
}
