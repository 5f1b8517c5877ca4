//! Episode streams, distribution shift and the line-delimited stream format.
//!
//! Each exported line is one JSON object:
//!
//! ```text
//! {"seed":<u64>,"scene_hash":"<hex sha256>","start":<node>,"goal":<node>,
//!  "shift":{"feature_bias":[f64; 8],"noise_sigma":f64,"layout":"base"|"alternate"}}
//! ```
//!
//! The scene is regenerated from `seed` and `shift.layout` and checked
//! against `scene_hash`; observation noise is drawn from a generator derived
//! from `(seed, start, goal)`, so a line fully determines its episode.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{LayoutFamily, Scene, AREA, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::linalg;

/// Minimum straight-line start-goal separation, beyond the success radius.
pub const MIN_START_GOAL: f64 = 4.0;
/// Extra decisions allowed beyond the shortest path's.
pub const BUDGET_SLACK: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Offset added to every delivered node feature.
    pub feature_bias: Vec<f64>,
    pub noise_sigma: f64,
    pub layout: LayoutFamily,
}

impl ShiftSpec {
    pub fn seen() -> Self {
        Self { feature_bias: vec![0.0; FEATURE_DIM], noise_sigma: 0.0, layout: LayoutFamily::Base }
    }

    /// Alternate layouts plus a bias of norm `bias_norm` in a seeded direction.
    pub fn unseen(seed: u64, bias_norm: f64, noise_sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5_0000_0000_0001);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut bias: Vec<f64> = (0..FEATURE_DIM).map(|_| n.sample(&mut rng)).collect();
        let norm = linalg::norm(&bias);
        linalg::scale(bias_norm / norm, &mut bias);
        Self { feature_bias: bias, noise_sigma, layout: LayoutFamily::Alternate }
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0 && self.feature_bias.iter().all(|&b| b == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_bias.len() != FEATURE_DIM {
            return Err(Error::Dimension { expected: FEATURE_DIM, got: self.feature_bias.len() });
        }
        linalg::ensure_finite(&self.feature_bias, "feature bias")?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidData(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Serializable identity of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub seed: u64,
    pub scene_hash: String,
    pub start: usize,
    pub goal: usize,
    pub shift: ShiftSpec,
}

/// A materialized episode with its observations.
#[derive(Debug, Clone)]
pub struct Episode {
    /// Position in the generated (unshuffled) stream.
    pub id: usize,
    pub spec: EpisodeSpec,
    pub scene: Scene,
    /// Delivered node features, shift applied.
    pub observed: Vec<Vec<f64>>,
    pub instruction: Vec<f64>,
    /// Maximum number of decisions, STOP included.
    pub budget: usize,
    /// Geodesic start-goal length.
    pub shortest: f64,
}

/// Instruction vector: the goal's clean feature plus a small positional code.
pub fn instruction_embedding(scene: &Scene, goal: usize) -> Vec<f64> {
    let [x, y] = scene.positions[goal];
    let (u, v) = (x / AREA * std::f64::consts::PI, y / AREA * std::f64::consts::PI);
    let code = [u.sin(), u.cos(), v.sin(), v.cos(), (2.0 * u).sin(), (2.0 * u).cos(), (2.0 * v).sin(), (2.0 * v).cos()];
    scene.features[goal].iter().zip(code).map(|(f, c)| f + 0.05 * c).collect()
}

impl Episode {
    pub fn materialize(id: usize, spec: EpisodeSpec) -> Result<Self> {
        spec.shift.validate()?;
        let scene = Scene::generate(spec.seed, spec.shift.layout);
        if scene.hash() != spec.scene_hash {
            return Err(Error::Format(format!("scene hash mismatch for seed {}", spec.seed)));
        }
        if spec.start >= scene.len() || spec.goal >= scene.len() {
            return Err(Error::Format(format!("start/goal out of range for a {}-node scene", scene.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.rotate_left(17) ^ ((spec.start as u64) << 32 | spec.goal as u64));
        let noise = Normal::new(0.0, 1.0).unwrap();
        let observed = scene
            .features
            .iter()
            .map(|f| {
                f.iter()
                    .zip(&spec.shift.feature_bias)
                    .map(|(v, b)| {
                        let eps = if spec.shift.noise_sigma > 0.0 { spec.shift.noise_sigma * noise.sample(&mut rng) } else { 0.0 };
                        v + b + eps
                    })
                    .collect()
            })
            .collect();
        let instruction = instruction_embedding(&scene, spec.goal);
        let budget = scene.hops(spec.start, spec.goal) + 1 + BUDGET_SLACK;
        let shortest = scene.geodesic(spec.start, spec.goal);
        Ok(Self { id, spec, scene, observed, instruction, budget, shortest })
    }
}

/// Deterministic stream of `count` episodes on freshly drawn scenes.
pub fn generate_stream(seed: u64, shift: &ShiftSpec, count: usize) -> Result<Vec<Episode>> {
    if count == 0 {
        return Err(Error::InvalidData("stream needs at least one episode".into()));
    }
    shift.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let scene_seed = rng.next_u64();
        let scene = Scene::generate(scene_seed, shift.layout);
        let pairs: Vec<(usize, usize)> = (0..scene.len())
            .flat_map(|a| (0..scene.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| scene.euclidean(a, b) >= MIN_START_GOAL && scene.hops(a, b) >= 2)
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let (start, goal) = pairs[rng.gen_range(0..pairs.len())];
        let spec = EpisodeSpec { seed: scene_seed, scene_hash: scene.hash(), start, goal, shift: shift.clone() };
        out.push(Episode::materialize(out.len(), spec)?);
    }
    Ok(out)
}

/// Presentation order of a stream for one shuffle repeat.
pub fn shuffled_order(count: usize, seed: u64, shuffle: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shuffle as u64 + 1);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    order
}

pub fn export_stream<W: Write>(mut w: W, episodes: &[Episode]) -> Result<()> {
    for e in episodes {
        serde_json::to_writer(&mut w, &e.spec).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_stream<R: BufRead>(r: R) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: EpisodeSpec =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        out.push(Episode::materialize(out.len(), spec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let shift = ShiftSpec::unseen(3, 0.5, 0.1);
        let a = generate_stream(11, &shift, 20).unwrap();
        let b = generate_stream(11, &shift, 20).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spec, y.spec);
            assert_eq!(x.observed, y.observed);
        }
        let c = generate_stream(12, &shift, 20).unwrap();
        assert_ne!(a[0].spec, c[0].spec);
    }

    #[test]
    fn zero_shift_delivers_clean_features() {
        for e in generate_stream(5, &ShiftSpec::seen(), 10).unwrap() {
            assert_eq!(e.observed, e.scene.features);
        }
    }

    #[test]
    fn shift_statistics() {
        let shift = ShiftSpec::unseen(9, 0.5, 0.1);
        assert!((linalg::norm(&shift.feature_bias) - 0.5).abs() < 1e-12);
        let stream = generate_stream(1, &shift, 800).unwrap();
        let mut sum = [0.0; FEATURE_DIM];
        let mut sq = [0.0; FEATURE_DIM];
        let mut n = 0.0;
        for e in &stream {
            for (obs, clean) in e.observed.iter().zip(&e.scene.features) {
                for k in 0..FEATURE_DIM {
                    let r = obs[k] - clean[k] - shift.feature_bias[k];
                    sum[k] += r;
                    sq[k] += r * r;
                }
                n += 1.0;
            }
        }
        assert!(n >= 1e4, "only {n} nodes");
        for k in 0..FEATURE_DIM {
            let mean = sum[k] / n;
            let std = (sq[k] / n - mean * mean).sqrt();
            assert!(mean.abs() < 4.0 * 0.1 / n.sqrt(), "dim {k} mean {mean}");
            assert!((std - 0.1).abs() < 0.005, "dim {k} std {std}");
        }
    }

    #[test]
    fn episodes_satisfy_generation_constraints() {
        for e in generate_stream(2, &ShiftSpec::seen(), 50).unwrap() {
            assert!(e.scene.euclidean(e.spec.start, e.spec.goal) >= MIN_START_GOAL);
            assert!(e.budget >= 3 + BUDGET_SLACK);
            assert_eq!(e.instruction.len(), FEATURE_DIM);
        }
    }

    #[test]
    fn export_import_round_trip() {
        let stream = generate_stream(4, &ShiftSpec::unseen(4, 0.5, 0.1), 12).unwrap();
        let mut buf = Vec::new();
        export_stream(&mut buf, &stream).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 12);
        let back = import_stream(&buf[..]).unwrap();
        for (a, b) in stream.iter().zip(&back) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.observed, b.observed);
            assert_eq!(a.budget, b.budget);
        }
    }

    #[test]
    fn import_rejects_tampered_hash() {
        let stream = generate_stream(4, &ShiftSpec::seen(), 1).unwrap();
        let mut spec = stream[0].spec.clone();
        spec.scene_hash = "00".into();
        let line = serde_json::to_string(&spec).unwrap();
        assert!(matches!(import_stream(line.as_bytes()), Err(Error::Format(_))));
        assert!(import_stream(&b"{not json"[..]).is_err());
    }

    #[test]
    fn shuffles_are_permutations() {
        let a = shuffled_order(50, 7, 0);
        let b = shuffled_order(50, 7, 1);
        assert_ne!(a, b);
        assert_eq!(a, shuffled_order(50, 7, 0));
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }
}
