//! Online adaptation loop: gradient intake, fast/slow scheduling, baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast::{self, FastConfig, FastPhaseState, GradientWindow};
use crate::linalg;
use crate::model::{Forward, PolicyParams, StepInput};
use crate::slow::{self, SlowConfig, Trajectory};

/// How a session turns step gradients into parameter changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Frozen parameters; gradients are discarded.
    NoAdapt,
    /// Plain step with the mean of every `k` step gradients.
    TentInterval(usize),
    /// Step on every gradient, reset to the pristine parameters after each sample.
    TentStable,
    /// Fast updates only.
    FastOnly { dlr: bool },
    /// Fast updates plus anchored slow updates every N samples.
    FastSlow { dlr: bool },
}

impl Strategy {
    pub fn adapts(&self) -> bool {
        !matches!(self, Strategy::NoAdapt)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::NoAdapt => f.write_str("noadapt"),
            Strategy::TentInterval(k) => write!(f, "tent-int-{k}"),
            Strategy::TentStable => f.write_str("tent-stable"),
            Strategy::FastOnly { dlr: true } => f.write_str("fast-only"),
            Strategy::FastOnly { dlr: false } => f.write_str("fast-only-nodlr"),
            Strategy::FastSlow { dlr: true } => f.write_str("fast-slow"),
            Strategy::FastSlow { dlr: false } => f.write_str("fast-slow-nodlr"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "noadapt" => Strategy::NoAdapt,
            "tent" => Strategy::TentInterval(1),
            "tent-stable" => Strategy::TentStable,
            "fast-only" => Strategy::FastOnly { dlr: true },
            "fast-only-nodlr" => Strategy::FastOnly { dlr: false },
            "fast-slow" | "fstta" => Strategy::FastSlow { dlr: true },
            "fast-slow-nodlr" => Strategy::FastSlow { dlr: false },
            other => match other.strip_prefix("tent-int-").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Strategy::TentInterval(k),
                _ => return Err(Error::InvalidData(format!("unknown strategy `{other}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub fast: FastConfig,
    pub slow: SlowConfig,
    /// Fixed learning rate of the TENT-style baselines.
    pub tent_lr: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        let fast = FastConfig::default();
        Self { fast, slow: SlowConfig::default(), tent_lr: fast.base_lr }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.fast.validate()?;
        self.slow.validate()?;
        if !(self.tent_lr > 0.0 && self.tent_lr.is_finite()) {
            return Err(Error::InvalidData(format!("tent_lr must be positive, got {}", self.tent_lr)));
        }
        Ok(())
    }
}

/// Event counts of a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub steps: usize,
    pub fast_updates: usize,
    /// Fast updates in the current sample (j).
    pub fast_in_sample: usize,
    /// Completed samples (o).
    pub samples: usize,
    /// Slow updates (l).
    pub slow_updates: usize,
    /// Non-finite gradients that were dropped.
    pub quarantined: usize,
    /// Partial windows applied at sample end.
    pub flushed: usize,
    /// Single-gradient windows dropped at sample end.
    pub discarded: usize,
}

/// One online adaptation stream.
#[derive(Debug, Clone)]
pub struct AdaptSession {
    strategy: Strategy,
    cfg: AdaptConfig,
    pristine: Vec<f64>,
    theta: Vec<f64>,
    window: GradientWindow,
    fast_state: FastPhaseState,
    traj: Trajectory,
    counters: Counters,
}

impl AdaptSession {
    pub fn new(strategy: Strategy, mut cfg: AdaptConfig, pristine: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        linalg::ensure_finite(&pristine, "pristine parameters")?;
        match strategy {
            Strategy::FastOnly { dlr } | Strategy::FastSlow { dlr } => cfg.fast.dynamic_lr = dlr,
            Strategy::TentInterval(0) => return Err(Error::InvalidData("tent interval must be >= 1".into())),
            _ => {}
        }
        let capacity = match strategy {
            Strategy::NoAdapt | Strategy::TentStable => 1,
            Strategy::TentInterval(k) => k,
            Strategy::FastOnly { .. } | Strategy::FastSlow { .. } => cfg.fast.window,
        };
        let dim = pristine.len();
        Ok(Self {
            strategy,
            cfg,
            theta: pristine.clone(),
            traj: Trajectory::new(pristine.clone())?,
            pristine,
            window: GradientWindow::new(capacity, dim),
            fast_state: FastPhaseState::default(),
            counters: Counters::default(),
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.cfg
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn pristine(&self) -> &[f64] {
        &self.pristine
    }

    /// Result of the latest slow update, or the pristine parameters.
    pub fn anchor(&self) -> &[f64] {
        self.traj.anchor()
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn fast_state(&self) -> FastPhaseState {
        self.fast_state
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn pending(&self) -> usize {
        self.window.len()
    }

    /// Feeds one step gradient; applies an update when the window fills.
    pub fn on_action_step(&mut self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(Error::Dimension { expected: self.theta.len(), got: grad.len() });
        }
        self.counters.steps += 1;
        if !self.strategy.adapts() {
            return Ok(());
        }
        if !linalg::all_finite(grad) {
            self.counters.quarantined += 1;
            return Ok(());
        }
        if self.window.push(grad.to_vec())? {
            self.apply_window()?;
        }
        Ok(())
    }

    /// Closes a sample: flushes the window, records the state, and runs the
    /// slow update once N states are recorded.
    pub fn on_sample_end(&mut self) -> Result<()> {
        match self.window.len() {
            0 => {}
            1 => {
                self.window.clear();
                self.counters.discarded += 1;
            }
            _ => {
                self.apply_window()?;
                self.counters.flushed += 1;
            }
        }
        self.counters.samples += 1;
        self.counters.fast_in_sample = 0;

        match self.strategy {
            Strategy::TentStable => self.theta.clone_from(&self.pristine),
            Strategy::FastSlow { .. } => {
                self.traj.record(&self.theta)?;
                if self.traj.recorded() == self.cfg.slow.interval {
                    let s = &self.cfg.slow;
                    let h = slow::reference_direction(&self.traj, s.q);
                    let grad = slow::slow_gradient(&self.traj, &h, s.eig_tol, s.sign_tol)?;
                    let next = slow::slow_step(self.traj.anchor(), &grad, s.lr);
                    self.traj.reset(next.clone());
                    self.theta = next;
                    self.counters.slow_updates += 1;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn apply_window(&mut self) -> Result<()> {
        let result = match self.strategy {
            Strategy::NoAdapt => Ok(()),
            Strategy::TentInterval(_) | Strategy::TentStable => {
                let mean = self.window.mean();
                linalg::axpy(-self.cfg.tent_lr, &mean, &mut self.theta);
                Ok(())
            }
            Strategy::FastOnly { .. } | Strategy::FastSlow { .. } => {
                fast::fast_step(&mut self.theta, &mut self.window, &mut self.fast_state, &self.cfg.fast).map(|_| ())
            }
        };
        self.window.clear();
        result?;
        self.counters.fast_updates += 1;
        self.counters.fast_in_sample += 1;
        Ok(())
    }
}

/// Forward pass plus the entropy gradient with respect to Θ.
///
/// Only reads the policy; the adaptable values come from `theta`.
pub fn entropy_gradient(policy: &PolicyParams, theta: &[f64], input: &StepInput) -> Result<(Forward, Vec<f64>)> {
    let fwd = policy.forward(theta, input)?;
    let grad = policy.backward_adaptable(theta, &fwd);
    Ok((fwd, grad))
}
