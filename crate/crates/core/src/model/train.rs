//! Supervised pretraining on shortest-path teacher actions from seen scenes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, Architecture, ParamGrads, PolicyParams, StepInput};
use crate::error::{Error, Result};
use crate::sim::{generate_stream, step_input, Episode, ShiftSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub train_episodes: usize,
    pub heldout_episodes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Held-out step accuracy required after training.
    pub min_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            train_episodes: 2000,
            heldout_episodes: 400,
            epochs: 30,
            lr: 3e-3,
            batch: 32,
            min_accuracy: 0.85,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.train_episodes == 0 || self.heldout_episodes == 0 {
            return Err(Error::InvalidData("train and held-out episode counts must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidData("batch must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidData(format!("pretrain lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: usize,
    pub train_samples: usize,
    pub heldout_samples: usize,
    /// Mean training cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    pub heldout_accuracy: f64,
    /// Mean 1/K over held-out decisions: the accuracy of a uniform guess.
    pub chance_accuracy: f64,
}

/// A decision with its teacher label.
#[derive(Debug, Clone)]
pub struct LabeledStep {
    pub input: StepInput,
    pub label: usize,
}

/// Teacher-forced decisions along the shortest path of every episode.
pub fn teacher_steps(episodes: &[Episode]) -> Vec<LabeledStep> {
    let mut out = Vec::new();
    for e in episodes {
        let goal = e.spec.goal;
        let mut node = e.spec.start;
        let mut history = e.observed[node].clone();
        let mut visited = 1.0;
        loop {
            let (input, targets) = step_input(e, node, &history);
            let next = e.scene.next_hop(node, goal);
            let label = targets.iter().position(|t| *t == next).expect("teacher action is a candidate");
            out.push(LabeledStep { input, label });
            let Some(next) = next else { break };
            node = next;
            visited += 1.0;
            for (h, f) in history.iter_mut().zip(&e.observed[node]) {
                *h += (f - *h) / visited;
            }
        }
    }
    out
}

/// Fraction of decisions whose argmax matches the label.
pub fn step_accuracy(params: &PolicyParams, steps: &[LabeledStep]) -> Result<f64> {
    if steps.is_empty() {
        return Ok(0.0);
    }
    let theta = params.adaptable();
    let mut hits = 0usize;
    for s in steps {
        if params.forward(&theta, &s.input)?.argmax() == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / steps.len() as f64)
}

fn flatten(p: &PolicyParams) -> Vec<f64> {
    let mut v = Vec::new();
    for d in &p.layers {
        v.extend_from_slice(&d.weights);
        v.extend_from_slice(&d.bias);
    }
    for ln in &p.norms {
        v.extend_from_slice(&ln.gamma);
        v.extend_from_slice(&ln.beta);
    }
    v.extend_from_slice(&p.head.weights);
    v.extend_from_slice(&p.head.bias);
    v
}

fn flatten_grads(g: &ParamGrads, out: &mut [f64]) {
    let mut off = 0;
    let mut put = |s: &[f64]| {
        for (o, v) in out[off..off + s.len()].iter_mut().zip(s) {
            *o += v;
        }
        off += s.len();
    };
    for d in &g.layers {
        put(&d.weights);
        put(&d.bias);
    }
    for ln in &g.norms {
        put(&ln.gamma);
        put(&ln.beta);
    }
    put(&g.head.weights);
    put(&g.head.bias);
}

fn unflatten(p: &mut PolicyParams, v: &[f64]) {
    let mut off = 0;
    let mut take = |s: &mut [f64]| {
        s.copy_from_slice(&v[off..off + s.len()]);
        off += s.len();
    };
    for d in &mut p.layers {
        take(&mut d.weights);
        take(&mut d.bias);
    }
    for ln in &mut p.norms {
        take(&mut ln.gamma);
        take(&mut ln.beta);
    }
    take(&mut p.head.weights);
    take(&mut p.head.bias);
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a fresh policy on seen scenes. Deterministic given `seed`.
pub fn pretrain(cfg: &TrainConfig, seed: u64) -> Result<(PolicyParams, TrainReport)> {
    cfg.validate()?;
    let mut params = PolicyParams::init(cfg.arch.clone(), seed)?;
    let train_eps = generate_stream(seed.wrapping_add(0x7121), &ShiftSpec::seen(), cfg.train_episodes)?;
    let heldout_eps = generate_stream(seed.wrapping_add(0x4E1D), &ShiftSpec::seen(), cfg.heldout_episodes)?;
    let train = teacher_steps(&train_eps);
    let heldout = teacher_steps(&heldout_eps);

    let mut flat = flatten(&params);
    let mut adam = Adam::new(flat.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0DDB_A115);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; flat.len()];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let theta = params.adaptable();
            for &i in batch {
                let s = &train[i];
                let fwd = params.forward(&theta, &s.input)?;
                let (loss, dlogits) = cross_entropy(&fwd.probs, s.label);
                total += loss;
                flatten_grads(&params.backward_full(&theta, &fwd, &dlogits), &mut grad);
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut flat, &grad);
            unflatten(&mut params, &flat);
        }
        let mean = total / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {}", epoch_loss.len() + 1)));
        }
        epoch_loss.push(mean);
    }

    let heldout_accuracy = step_accuracy(&params, &heldout)?;
    let chance_accuracy = heldout.iter().map(|s| 1.0 / s.input.candidates.len() as f64).sum::<f64>() / heldout.len() as f64;
    let report = TrainReport {
        seed,
        epochs: cfg.epochs,
        train_samples: train.len(),
        heldout_samples: heldout.len(),
        epoch_loss,
        heldout_accuracy,
        chance_accuracy,
    };
    if cfg.epochs > 0 && heldout_accuracy < cfg.min_accuracy {
        return Err(Error::Training(format!(
            "held-out accuracy {:.4} below {:.2} after {} epochs (final loss {:.4})",
            heldout_accuracy,
            cfg.min_accuracy,
            cfg.epochs,
            report.epoch_loss.last().copied().unwrap_or(f64::NAN)
        )));
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teacher_steps_end_with_stop() {
        let eps = generate_stream(1, &ShiftSpec::seen(), 5).unwrap();
        let steps = teacher_steps(&eps);
        let stops = steps.iter().filter(|s| s.label == 0).count();
        assert_eq!(stops, 5);
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let cfg = TrainConfig { epochs: 0, train_episodes: 10, heldout_episodes: 50, ..TrainConfig::default() };
        let (p, r) = pretrain(&cfg, 0).unwrap();
        assert_eq!(p, PolicyParams::init(Architecture::default(), 0).unwrap());
        assert!(r.epoch_loss.is_empty());
        assert!((r.heldout_accuracy - r.chance_accuracy).abs() < 0.2, "{r:?}");
    }

    #[test]
    fn short_training_is_deterministic_and_learns() {
        let cfg = TrainConfig { epochs: 2, train_episodes: 60, heldout_episodes: 20, min_accuracy: 0.0, ..TrainConfig::default() };
        let (a, ra) = pretrain(&cfg, 5).unwrap();
        let (b, rb) = pretrain(&cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.epoch_loss[1] < ra.epoch_loss[0]);
    }

    #[test]
    fn unreachable_threshold_is_a_training_error() {
        let cfg = TrainConfig { epochs: 1, train_episodes: 5, heldout_episodes: 5, min_accuracy: 1.01, ..TrainConfig::default() };
        assert!(matches!(pretrain(&cfg, 0), Err(Error::Training(_))));
    }
}
