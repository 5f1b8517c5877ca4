//! Synthetic online navigation benchmark.

mod episode;
mod metrics;
mod scene;
mod stream;

pub use episode::{navigate, run_episode, run_teacher, step_input, EpisodeRecord, SUCCESS_RADIUS};
pub use metrics::{evaluate, MetricsRow};
pub use scene::{position_feature, LayoutFamily, Scene, AREA, FEATURE_DIM};
pub use stream::{
    export_stream, generate_stream, import_stream, instruction_embedding, shuffled_order, Episode, EpisodeSpec,
    ShiftSpec, BUDGET_SLACK, MIN_START_GOAL,
};
