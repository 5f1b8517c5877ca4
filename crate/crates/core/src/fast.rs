//! Fast phase: concordant gradient over a short window of step gradients.
//!
//! Every `window` action steps the collected gradients are centered and
//! decomposed. Components of the mean gradient along high-variance axes are
//! damped by `1/λ`, the result is rescaled to the length of the mean, and a
//! step is taken with a learning rate modulated by how far the window's
//! gradient variance strays from its running average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, center_rows, scatter_eigen, EigenSystem, RowMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastConfig {
    /// Steps per fast update (M).
    pub window: usize,
    /// Base learning rate γ̂.
    pub base_lr: f64,
    /// Threshold τ of the learning-rate modulation.
    pub tau: f64,
    /// Momentum ρ of the running variance σ̄.
    pub momentum: f64,
    pub trunc_lo: f64,
    pub trunc_hi: f64,
    /// Relative regularizer for the `1/λ` coefficients, in units of the trace.
    pub phi_eps: f64,
    pub eig_tol: f64,
    /// Dynamic learning-rate scaling; when off the step uses `base_lr`.
    pub dynamic_lr: bool,
}

impl Default for FastConfig {
    fn default() -> Self {
        Self {
            window: 3,
            base_lr: 6e-4,
            tau: 0.7,
            momentum: 0.95,
            trunc_lo: 0.9,
            trunc_hi: 1.1,
            phi_eps: 1e-6,
            eig_tol: linalg::DEFAULT_EIG_TOL,
            dynamic_lr: true,
        }
    }
}

impl FastConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidData(m));
        if self.window < 1 {
            return bad("fast window must be >= 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("fast base_lr must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.trunc_lo <= self.trunc_hi) || !self.trunc_lo.is_finite() || !self.trunc_hi.is_finite() {
            return bad(format!("truncation interval [{}, {}] is invalid", self.trunc_lo, self.trunc_hi));
        }
        if !(self.phi_eps >= 0.0) || !(self.eig_tol >= 0.0) || !self.tau.is_finite() {
            return bad("phi_eps, eig_tol must be >= 0 and tau finite".into());
        }
        Ok(())
    }
}

/// Buffer of the most recent step gradients.
#[derive(Debug, Clone)]
pub struct GradientWindow {
    capacity: usize,
    dim: usize,
    grads: Vec<Vec<f64>>,
}

impl GradientWindow {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be >= 1");
        Self { capacity, dim, grads: Vec::with_capacity(capacity) }
    }

    /// Appends a gradient; returns true once the window is full.
    pub fn push(&mut self, grad: Vec<f64>) -> Result<bool> {
        if grad.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: grad.len() });
        }
        linalg::ensure_finite(&grad, "gradient")?;
        if self.is_full() {
            return Err(Error::InvalidData("gradient window overflow".into()));
        }
        self.grads.push(grad);
        Ok(self.is_full())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.grads.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub fn clear(&mut self) {
        self.grads.clear();
    }

    pub fn mean(&self) -> Vec<f64> {
        linalg::row_mean(self.grads.iter().map(Vec::as_slice), self.dim)
    }
}

/// Running gradient-variance statistic σ̄, kept across all samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FastPhaseState {
    pub sigma_bar: f64,
    pub initialized: bool,
}

/// An axis of the window decomposition, handed to a coefficient function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axis {
    /// Eigen-axis with eigenvalue λ.
    Eigen(f64),
    /// The zero-variance complement of all retained eigen-axes.
    Null,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcordantGradient {
    pub grad: Vec<f64>,
    /// Trace of the window covariance, σ.
    pub sigma: f64,
}

/// Concordant direction of a window with regularized `1/λ` coefficients.
///
/// `Φ(λ) = 1/(λ + phi_eps·σ)`; the null space gets the λ → 0 limit
/// `1/(phi_eps·σ)`. With `phi_eps = 0` the null space, when present, takes
/// all of the weight.
pub fn concordant_gradient(window: &GradientWindow, phi_eps: f64, eig_tol: f64) -> Result<ConcordantGradient> {
    concordant_gradient_with(window, eig_tol, |axis, sigma| match axis {
        Axis::Eigen(l) => 1.0 / (l + phi_eps * sigma),
        Axis::Null => 1.0 / (phi_eps * sigma),
    })
}

/// Decomposition-accumulation with an arbitrary positive coefficient function.
///
/// `coeff(axis, σ)` weighs the projection of the mean gradient on each axis.
/// An infinite coefficient on the null space selects that component alone.
pub fn concordant_gradient_with<F>(window: &GradientWindow, eig_tol: f64, coeff: F) -> Result<ConcordantGradient>
where
    F: Fn(Axis, f64) -> f64,
{
    let count = window.len();
    if count < 2 {
        return Err(Error::InsufficientWindow { count });
    }
    let x = RowMatrix::from_rows(window.grads())?;
    let (mean, centered) = center_rows(&x)?;
    let eig = scatter_eigen(&centered, count - 1, eig_tol)?;
    let sigma = eig.trace;
    let mean_norm = linalg::norm(&mean);
    if mean_norm == 0.0 {
        return Ok(ConcordantGradient { grad: vec![0.0; mean.len()], sigma });
    }
    if sigma == 0.0 || eig.is_empty() {
        return Ok(ConcordantGradient { grad: mean, sigma });
    }
    let grad = accumulate(&mean, mean_norm, &eig, |a| coeff(a, sigma));
    Ok(ConcordantGradient { grad, sigma })
}

fn accumulate<F: Fn(Axis) -> f64>(mean: &[f64], mean_norm: f64, eig: &EigenSystem, coeff: F) -> Vec<f64> {
    let mut null = mean.to_vec();
    let mut spanned = vec![0.0; mean.len()];
    for (&lambda, u) in eig.values.iter().zip(&eig.vectors) {
        let p = linalg::dot(mean, u);
        linalg::axpy(-p, u, &mut null);
        linalg::axpy(coeff(Axis::Eigen(lambda)) * p, u, &mut spanned);
    }
    // Anything left after removing the eigen-axes is rounding residue when it
    // is this small relative to the mean.
    let null_norm = linalg::norm(&null);
    let has_null = null_norm > 1e-12 * mean_norm;
    let phi_null = coeff(Axis::Null);

    let mut out = if has_null && phi_null.is_infinite() {
        null
    } else {
        if has_null {
            linalg::axpy(phi_null, &null, &mut spanned);
        }
        spanned
    };
    let n = linalg::norm(&out);
    if n > 0.0 && n.is_finite() {
        linalg::scale(mean_norm / n, &mut out);
        out
    } else {
        mean.to_vec()
    }
}

/// Truncated learning-rate modulation; updates σ̄ afterwards.
pub fn dynamic_lr(sigma: f64, state: &mut FastPhaseState, cfg: &FastConfig) -> f64 {
    if !cfg.dynamic_lr {
        return cfg.base_lr;
    }
    let deviation = if state.initialized { (sigma - state.sigma_bar).abs() } else { 0.0 };
    let multiplier = (1.0 + cfg.tau - deviation).clamp(cfg.trunc_lo, cfg.trunc_hi);
    if state.initialized {
        state.sigma_bar = cfg.momentum * state.sigma_bar + (1.0 - cfg.momentum) * sigma;
    } else {
        state.sigma_bar = sigma;
        state.initialized = true;
    }
    multiplier * cfg.base_lr
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastStepReport {
    pub lr: f64,
    pub sigma: f64,
    pub grad_norm: f64,
}

/// One fast update `Θ ← Θ − lr · ∇`; clears the window on success.
pub fn fast_step(
    theta: &mut [f64],
    window: &mut GradientWindow,
    state: &mut FastPhaseState,
    cfg: &FastConfig,
) -> Result<FastStepReport> {
    if theta.len() != window.dim() {
        return Err(Error::Dimension { expected: window.dim(), got: theta.len() });
    }
    let ConcordantGradient { grad, sigma } = concordant_gradient(window, cfg.phi_eps, cfg.eig_tol)?;
    let lr = dynamic_lr(sigma, state, cfg);
    linalg::axpy(-lr, &grad, theta);
    window.clear();
    Ok(FastStepReport { lr, sigma, grad_norm: linalg::norm(&grad) })
}
