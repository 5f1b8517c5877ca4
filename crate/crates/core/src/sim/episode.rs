//! Episode execution.

use serde::{Deserialize, Serialize};

use super::stream::Episode;
use crate::engine::{entropy_gradient, AdaptSession};
use crate::error::Result;
use crate::model::{PolicyParams, StepInput};

/// Stopping closer than this to the goal counts as success.
pub const SUCCESS_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: usize,
    pub start: usize,
    pub goal: usize,
    /// Visited nodes, start included.
    pub path: Vec<usize>,
    /// Candidate probabilities per decision (empty for scripted agents).
    pub step_probs: Vec<Vec<f64>>,
    pub stopped: bool,
    pub success: bool,
    pub oracle_success: bool,
    /// Trajectory length, sum of traversed edges.
    pub tl: f64,
    /// Navigation error, straight-line distance from the final node to the goal.
    pub ne: f64,
    pub shortest: f64,
    /// `S·l/max(p, l)`, or `S` when the shortest path has zero length.
    pub spl: f64,
}

/// Decision input at `node`; candidate 0 is STOP, the rest are neighbors in
/// ascending order. Returns the input and each candidate's target node.
pub fn step_input(episode: &Episode, node: usize, history: &[f64]) -> (StepInput, Vec<Option<usize>>) {
    let nbs = episode.scene.neighbors(node);
    let mut candidates = Vec::with_capacity(nbs.len() + 1);
    let mut targets = Vec::with_capacity(nbs.len() + 1);
    candidates.push(episode.observed[node].clone());
    targets.push(None);
    for &nb in nbs {
        candidates.push(episode.observed[nb].clone());
        targets.push(Some(nb));
    }
    let input = StepInput { instruction: episode.instruction.clone(), history: history.to_vec(), candidates };
    (input, targets)
}

/// Runs an episode with an arbitrary decision rule.
///
/// `choose` receives the current node and the step input and returns the
/// chosen candidate index and the distribution it was drawn from.
pub fn navigate<F>(episode: &Episode, mut choose: F) -> Result<EpisodeRecord>
where
    F: FnMut(usize, &StepInput) -> Result<(usize, Vec<f64>)>,
{
    let goal = episode.spec.goal;
    let mut node = episode.spec.start;
    let mut path = vec![node];
    let mut history = episode.observed[node].clone();
    let mut step_probs = Vec::new();
    let mut stopped = false;
    let mut tl = 0.0;
    for _ in 0..episode.budget {
        let (input, targets) = step_input(episode, node, &history);
        let (action, probs) = choose(node, &input)?;
        step_probs.push(probs);
        match targets.get(action).copied().flatten() {
            None => {
                stopped = true;
                break;
            }
            Some(next) => {
                tl += episode.scene.euclidean(node, next);
                node = next;
                path.push(node);
                let k = path.len() as f64;
                for (h, f) in history.iter_mut().zip(&episode.observed[node]) {
                    *h += (f - *h) / k;
                }
            }
        }
    }
    let ne = episode.scene.euclidean(node, goal);
    let success = stopped && ne < SUCCESS_RADIUS;
    let oracle_success = path.iter().any(|&n| episode.scene.euclidean(n, goal) < SUCCESS_RADIUS);
    let spl = match (success, episode.shortest > 0.0) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        (true, true) => episode.shortest / tl.max(episode.shortest),
    };
    Ok(EpisodeRecord {
        id: episode.id,
        start: episode.spec.start,
        goal,
        path,
        step_probs,
        stopped,
        success,
        oracle_success,
        tl,
        ne,
        shortest: episode.shortest,
        spl,
    })
}

/// Greedy policy rollout with online adaptation, then closes the sample.
pub fn run_episode(policy: &PolicyParams, session: &mut AdaptSession, episode: &Episode) -> Result<EpisodeRecord> {
    let adapts = session.strategy().adapts();
    let record = navigate(episode, |_, input| {
        if adapts {
            let (fwd, grad) = entropy_gradient(policy, session.theta(), input)?;
            let action = fwd.argmax();
            session.on_action_step(&grad)?;
            Ok((action, fwd.probs))
        } else {
            let fwd = policy.forward(session.theta(), input)?;
            Ok((fwd.argmax(), fwd.probs))
        }
    })?;
    session.on_sample_end()?;
    Ok(record)
}

/// Shortest-path oracle.
pub fn run_teacher(episode: &Episode) -> Result<EpisodeRecord> {
    let goal = episode.spec.goal;
    let scene = &episode.scene;
    navigate(episode, |node, input| {
        let action = match scene.next_hop(node, goal) {
            None => 0,
            Some(next) => 1 + scene.neighbors(node).iter().position(|&n| n == next).expect("next hop is a neighbor"),
        };
        let mut probs = vec![0.0; input.candidates.len()];
        probs[action] = 1.0;
        Ok((action, probs))
    })
}
