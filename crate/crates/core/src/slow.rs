//! Slow phase: consolidation over the trajectory of end-of-sample states.
//!
//! Slot 0 of the trajectory is the anchor produced by the previous slow
//! update. The reference direction is a geometrically weighted average of
//! anchor-minus-state deviations; the principal axes of the trajectory
//! scatter, oriented along it and weighted by normalized eigenvalues, give
//! the step that is applied from the anchor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, center_rows, scatter_eigen, RowMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowConfig {
    /// Samples per slow update (N).
    pub interval: usize,
    pub lr: f64,
    /// Decay q of the reference-direction weights.
    pub q: f64,
    pub eig_tol: f64,
    /// Axes with `|⟨h, z⟩| ≤ sign_tol · ‖h‖` have no orientation and are dropped.
    pub sign_tol: f64,
}

impl Default for SlowConfig {
    fn default() -> Self {
        Self { interval: 4, lr: 1e-3, q: 0.1, eig_tol: linalg::DEFAULT_EIG_TOL, sign_tol: 1e-10 }
    }
}

impl SlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval < 1 {
            return Err(Error::InvalidData("slow interval must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidData(format!("slow lr must be >= 0, got {}", self.lr)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidData(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if !(self.eig_tol >= 0.0 && self.sign_tol >= 0.0) {
            return Err(Error::InvalidData("eig_tol and sign_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Anchor followed by the recorded end-of-sample states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(anchor: Vec<f64>) -> Result<Self> {
        linalg::ensure_finite(&anchor, "anchor")?;
        Ok(Self { states: vec![anchor] })
    }

    pub fn from_states(states: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::InvalidData("trajectory needs an anchor".into()));
        };
        let dim = first.len();
        for s in &states {
            if s.len() != dim {
                return Err(Error::Dimension { expected: dim, got: s.len() });
            }
            linalg::ensure_finite(s, "trajectory state")?;
        }
        Ok(Self { states })
    }

    pub fn record(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: state.len() });
        }
        linalg::ensure_finite(state, "trajectory state")?;
        self.states.push(state.to_vec());
        Ok(())
    }

    pub fn anchor(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// Number of recorded states, excluding the anchor.
    pub fn recorded(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Drops recorded states and re-anchors.
    pub fn reset(&mut self, anchor: Vec<f64>) {
        self.states.clear();
        self.states.push(anchor);
    }
}

/// `h = Σₙ q^(N−n) (Θ₀ − Θₙ) / Σᵢ q^i`, most recent state weighted highest.
pub fn reference_direction(traj: &Trajectory, q: f64) -> Vec<f64> {
    let n = traj.recorded();
    let mut h = vec![0.0; traj.dim()];
    if n == 0 {
        return h;
    }
    let norm: f64 = (0..n).map(|i| q.powi(i as i32)).sum();
    let anchor = traj.anchor();
    for (k, state) in traj.states()[1..].iter().enumerate() {
        let w = q.powi((n - 1 - k) as i32) / norm;
        for ((hi, a), s) in h.iter_mut().zip(anchor).zip(state) {
            *hi += w * (a - s);
        }
    }
    h
}

/// Sign-aligned principal axes of the trajectory, weighted by `ε·‖h‖/‖ε‖`.
pub fn slow_gradient(traj: &Trajectory, h: &[f64], eig_tol: f64, sign_tol: f64) -> Result<Vec<f64>> {
    let dim = traj.dim();
    if h.len() != dim {
        return Err(Error::Dimension { expected: dim, got: h.len() });
    }
    let mut grad = vec![0.0; dim];
    let h_norm = linalg::norm(h);
    if h_norm == 0.0 || traj.recorded() == 0 {
        return Ok(grad);
    }
    let x = RowMatrix::from_rows(traj.states())?;
    let (_, centered) = center_rows(&x)?;
    let eig = scatter_eigen(&centered, traj.recorded(), eig_tol)?;

    let retained: Vec<(f64, f64, &Vec<f64>)> = eig
        .values
        .iter()
        .zip(&eig.vectors)
        .filter_map(|(&e, z)| {
            let p = linalg::dot(h, z);
            (p.abs() > sign_tol * h_norm).then_some((e, p.signum(), z))
        })
        .collect();
    let eps_norm = retained.iter().map(|(e, _, _)| e * e).sum::<f64>().sqrt();
    if retained.is_empty() || eps_norm == 0.0 {
        return Ok(grad);
    }
    for (e, sign, z) in retained {
        linalg::axpy(e * h_norm / eps_norm * sign, z, &mut grad);
    }
    Ok(grad)
}

/// `Θ⁽ˡ⁾ = anchor − lr · ∇`; always taken from the anchor, never from the
/// current fast-updated parameters.
pub fn slow_step(anchor: &[f64], grad: &[f64], lr: f64) -> Vec<f64> {
    anchor.iter().zip(grad).map(|(a, g)| a - lr * g).collect()
}
