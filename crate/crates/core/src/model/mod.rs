//! Candidate-scoring policy with layer-normalized hidden layers.
//!
//! Every candidate is scored independently by a shared trunk
//! `[instruction ‖ history ‖ candidate] → (dense → LN → tanh)* → dense → logit`
//! and the logits are soft-maxed across candidates. The affine parameters of
//! the last `adaptable_norms` layer norms form the adaptable vector Θ, laid
//! out per norm as `gamma` then `beta`, norms in forward order.

mod io;
mod train;

pub use io::{load_params, read_params, save_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use train::{pretrain, step_accuracy, teacher_steps, LabeledStep, TrainConfig, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub instruction_dim: usize,
    pub history_dim: usize,
    pub candidate_dim: usize,
    /// Width of each hidden layer; every hidden layer is followed by LN and tanh.
    pub hidden: Vec<usize>,
    /// Number of trailing layer norms whose affine parameters are adaptable.
    pub adaptable_norms: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { instruction_dim: 8, history_dim: 8, candidate_dim: 8, hidden: vec![32, 32], adaptable_norms: 2 }
    }
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.instruction_dim + self.history_dim + self.candidate_dim
    }

    pub fn first_adaptable(&self) -> usize {
        self.hidden.len() - self.adaptable_norms
    }

    /// Length D of the adaptable vector.
    pub fn adaptable_dim(&self) -> usize {
        self.hidden[self.first_adaptable()..].iter().map(|w| 2 * w).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidData("architecture needs non-empty hidden layers".into()));
        }
        if self.adaptable_norms > self.hidden.len() {
            return Err(Error::InvalidData(format!(
                "{} adaptable norms requested but only {} exist",
                self.adaptable_norms,
                self.hidden.len()
            )));
        }
        if self.input_dim() == 0 {
            return Err(Error::InvalidData("input dimension is zero".into()));
        }
        Ok(())
    }
}

/// Dense layer, `weights` row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (1.0 / inputs as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let weights = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| linalg::dot(row, x) + b)
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self { inputs: self.inputs, outputs: self.outputs, weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.outputs] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    fn identity(width: usize) -> Self {
        Self { gamma: vec![1.0; width], beta: vec![0.0; width] }
    }
}

/// All policy parameters. At test time only the trailing norms may change,
/// and they do so through the separate Θ vector passed to the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub layers: Vec<Dense>,
    pub norms: Vec<LayerNorm>,
    pub head: Dense,
}

/// One decision: the goal descriptor, a summary of the path so far, and one
/// feature per candidate. Candidate 0 is STOP.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    pub instruction: Vec<f64>,
    pub history: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<f64>,
    normalized: Vec<f64>,
    inv_std: f64,
    activation: Vec<f64>,
}

/// Forward-pass values retained for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    caches: Vec<Vec<LayerCache>>,
}

impl Forward {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Gradients with the same shapes as [`PolicyParams`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<Dense>,
    pub norms: Vec<LayerNorm>,
    pub head: Dense,
}

impl PolicyParams {
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.hidden.len());
        let mut width = arch.input_dim();
        for &h in &arch.hidden {
            layers.push(Dense::init(width, h, &mut rng));
            width = h;
        }
        let norms = arch.hidden.iter().map(|&h| LayerNorm::identity(h)).collect();
        let head = Dense::init(width, 1, &mut rng);
        Ok(Self { arch, layers, norms, head })
    }

    pub fn adaptable_dim(&self) -> usize {
        self.arch.adaptable_dim()
    }

    /// Current adaptable norms flattened into Θ.
    pub fn adaptable(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.adaptable_dim());
        for ln in &self.norms[self.arch.first_adaptable()..] {
            theta.extend_from_slice(&ln.gamma);
            theta.extend_from_slice(&ln.beta);
        }
        theta
    }

    /// Writes Θ back into the adaptable norms.
    pub fn set_adaptable(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.adaptable_dim() {
            return Err(Error::Dimension { expected: self.adaptable_dim(), got: theta.len() });
        }
        let mut off = 0;
        let first = self.arch.first_adaptable();
        for ln in &mut self.norms[first..] {
            let w = ln.gamma.len();
            ln.gamma.copy_from_slice(&theta[off..off + w]);
            ln.beta.copy_from_slice(&theta[off + w..off + 2 * w]);
            off += 2 * w;
        }
        Ok(())
    }

    /// Frozen coordinates in a fixed order, for immutability checks.
    pub fn frozen(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for d in self.layers.iter().chain(std::iter::once(&self.head)) {
            out.extend_from_slice(&d.weights);
            out.extend_from_slice(&d.bias);
        }
        for ln in &self.norms[..self.arch.first_adaptable()] {
            out.extend_from_slice(&ln.gamma);
            out.extend_from_slice(&ln.beta);
        }
        out
    }

    fn norm_params<'a>(&'a self, layer: usize, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let first = self.arch.first_adaptable();
        if layer < first {
            let ln = &self.norms[layer];
            return (&ln.gamma, &ln.beta);
        }
        let off: usize = self.arch.hidden[first..layer].iter().map(|w| 2 * w).sum();
        let w = self.arch.hidden[layer];
        (&theta[off..off + w], &theta[off + w..off + 2 * w])
    }

    fn check_input(&self, theta: &[f64], input: &StepInput) -> Result<()> {
        let a = &self.arch;
        if theta.len() != a.adaptable_dim() {
            return Err(Error::Dimension { expected: a.adaptable_dim(), got: theta.len() });
        }
        if input.instruction.len() != a.instruction_dim {
            return Err(Error::Dimension { expected: a.instruction_dim, got: input.instruction.len() });
        }
        if input.history.len() != a.history_dim {
            return Err(Error::Dimension { expected: a.history_dim, got: input.history.len() });
        }
        if input.candidates.is_empty() {
            return Err(Error::InvalidData("step input has no candidates".into()));
        }
        for c in &input.candidates {
            if c.len() != a.candidate_dim {
                return Err(Error::Dimension { expected: a.candidate_dim, got: c.len() });
            }
        }
        Ok(())
    }

    /// Scores every candidate with adaptable parameters `theta`.
    pub fn forward(&self, theta: &[f64], input: &StepInput) -> Result<Forward> {
        self.check_input(theta, input)?;
        let mut logits = Vec::with_capacity(input.candidates.len());
        let mut caches = Vec::with_capacity(input.candidates.len());
        for cand in &input.candidates {
            let mut x = Vec::with_capacity(self.arch.input_dim());
            x.extend_from_slice(&input.instruction);
            x.extend_from_slice(&input.history);
            x.extend_from_slice(cand);
            let mut per_layer = Vec::with_capacity(self.layers.len());
            for (l, dense) in self.layers.iter().enumerate() {
                let z = dense.apply(&x);
                let (gamma, beta) = self.norm_params(l, theta);
                let (normalized, inv_std) = normalize(&z);
                let activation: Vec<f64> = normalized
                    .iter()
                    .zip(gamma.iter().zip(beta))
                    .map(|(n, (g, b))| (g * n + b).tanh())
                    .collect();
                let next = activation.clone();
                per_layer.push(LayerCache { input: x, normalized, inv_std, activation });
                x = next;
            }
            logits.push(self.head.apply(&x)[0]);
            caches.push(per_layer);
        }
        let probs = softmax(&logits);
        Ok(Forward { logits, probs, caches })
    }

    /// Probabilities over candidates.
    pub fn score_actions(&self, theta: &[f64], input: &StepInput) -> Result<Vec<f64>> {
        Ok(self.forward(theta, input)?.probs)
    }

    /// Backpropagates `dlogits` through every parameter.
    pub fn backward_full(&self, theta: &[f64], fwd: &Forward, dlogits: &[f64]) -> ParamGrads {
        let mut grads = ParamGrads {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            norms: self.arch.hidden.iter().map(|&w| LayerNorm { gamma: vec![0.0; w], beta: vec![0.0; w] }).collect(),
            head: self.head.zeros_like(),
        };
        self.backward_into(theta, fwd, dlogits, 0, true, &mut grads);
        grads
    }

    /// Gradient of the entropy of the candidate distribution with respect to Θ.
    pub fn backward_adaptable(&self, theta: &[f64], fwd: &Forward) -> Vec<f64> {
        let dlogits = entropy_logit_grad(&fwd.probs);
        let mut grads = ParamGrads {
            layers: Vec::new(),
            norms: self.arch.hidden.iter().map(|&w| LayerNorm { gamma: vec![0.0; w], beta: vec![0.0; w] }).collect(),
            head: self.head.zeros_like(),
        };
        self.backward_into(theta, fwd, &dlogits, self.arch.first_adaptable(), false, &mut grads);
        let mut out = Vec::with_capacity(self.adaptable_dim());
        for ln in &grads.norms[self.arch.first_adaptable()..] {
            out.extend_from_slice(&ln.gamma);
            out.extend_from_slice(&ln.beta);
        }
        out
    }

    fn backward_into(&self, theta: &[f64], fwd: &Forward, dlogits: &[f64], stop_at: usize, full: bool, grads: &mut ParamGrads) {
        for (cache, &dl) in fwd.caches.iter().zip(dlogits) {
            if dl == 0.0 {
                continue;
            }
            let last = &cache[cache.len() - 1].activation;
            if full {
                linalg::axpy(dl, last, &mut grads.head.weights);
                grads.head.bias[0] += dl;
            }
            let mut da: Vec<f64> = self.head.weights.iter().map(|w| w * dl).collect();
            for l in (stop_at..self.layers.len()).rev() {
                let c = &cache[l];
                let (gamma, _) = self.norm_params(l, theta);
                let w = gamma.len();
                let mut dn = vec![0.0; w];
                for i in 0..w {
                    let dy = da[i] * (1.0 - c.activation[i] * c.activation[i]);
                    grads.norms[l].gamma[i] += dy * c.normalized[i];
                    grads.norms[l].beta[i] += dy;
                    dn[i] = dy * gamma[i];
                }
                if l == stop_at && !full {
                    break;
                }
                let mean_dn = dn.iter().sum::<f64>() / w as f64;
                let mean_dn_n = linalg::dot(&dn, &c.normalized) / w as f64;
                let dz: Vec<f64> =
                    dn.iter().zip(&c.normalized).map(|(d, n)| c.inv_std * (d - mean_dn - n * mean_dn_n)).collect();
                let dense = &self.layers[l];
                if full {
                    let g = &mut grads.layers[l];
                    for (o, &dzo) in dz.iter().enumerate() {
                        linalg::axpy(dzo, &c.input, &mut g.weights[o * dense.inputs..(o + 1) * dense.inputs]);
                        g.bias[o] += dzo;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; dense.inputs];
                for (o, &dzo) in dz.iter().enumerate() {
                    linalg::axpy(dzo, &dense.weights[o * dense.inputs..(o + 1) * dense.inputs], &mut prev);
                }
                da = prev;
            }
        }
    }
}

fn normalize(z: &[f64]) -> (Vec<f64>, f64) {
    let w = z.len() as f64;
    let mean = z.iter().sum::<f64>() / w;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    (z.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy_loss(probs: &[f64]) -> f64 {
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    h.max(0.0)
}

/// `∂H/∂logitₖ = −pₖ (ln pₖ + H)`.
pub fn entropy_logit_grad(probs: &[f64]) -> Vec<f64> {
    let h = entropy_loss(probs);
    probs.iter().map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 }).collect()
}

/// Cross-entropy against a target index and its logit gradient.
pub fn cross_entropy(probs: &[f64], target: usize) -> (f64, Vec<f64>) {
    let loss = -probs[target].max(1e-300).ln();
    let mut grad = probs.to_vec();
    grad[target] -= 1.0;
    (loss, grad)
}
