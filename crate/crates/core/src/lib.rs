//! Fast-slow test-time adaptation.
//!
//! The optimizer adapts a small set of normalization parameters online from
//! unlabeled decisions: a fast phase takes concordant gradient steps every
//! few actions, and a slow phase periodically consolidates the trajectory of
//! recorded parameter states from an anchor. A synthetic navigation
//! benchmark with a controllable distribution shift exercises it end to end.

pub mod engine;
pub mod error;
pub mod fast;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod slow;

pub use engine::{entropy_gradient, AdaptConfig, AdaptSession, Counters, Strategy};
pub use error::{Error, Result};
pub use fast::{FastConfig, FastPhaseState, GradientWindow};
pub use linalg::{EigenSystem, RowMatrix};
pub use model::{Architecture, PolicyParams, StepInput};
pub use sim::{Episode, EpisodeRecord, MetricsRow, ShiftSpec};
pub use slow::{SlowConfig, Trajectory};
