//! Seeded navigation graphs over a 10 m × 10 m floor.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FEATURE_DIM: usize = 8;
pub const AREA: f64 = 10.0;
const PROJ_HIDDEN: usize = 16;
const WORLD_SEED: u64 = 0x5EED_F0CA_CC1A;

/// Graph-generation statistics. Seen scenes use `Base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutFamily {
    Base,
    Alternate,
}

impl LayoutFamily {
    /// Inclusive node-count range.
    pub fn node_range(self) -> (usize, usize) {
        match self {
            LayoutFamily::Base => (12, 18),
            LayoutFamily::Alternate => (14, 20),
        }
    }

    pub fn radius(self) -> f64 {
        match self {
            LayoutFamily::Base => 3.2,
            LayoutFamily::Alternate => 3.0,
        }
    }

    pub fn style_sigma(self) -> f64 {
        match self {
            LayoutFamily::Base => 0.05,
            LayoutFamily::Alternate => 0.08,
        }
    }
}

/// Fixed two-layer random projection from position to features, shared by
/// every scene so that features mean the same thing everywhere.
struct WorldProjection {
    w1: Vec<[f64; 2]>,
    b1: Vec<f64>,
    w2: Vec<f64>,
}

fn world() -> &'static WorldProjection {
    static WORLD: OnceLock<WorldProjection> = OnceLock::new();
    WORLD.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(WORLD_SEED);
        let n1 = Normal::new(0.0, 1.5).unwrap();
        let nb = Normal::new(0.0, 0.5).unwrap();
        let n2 = Normal::new(0.0, 1.5 / (PROJ_HIDDEN as f64).sqrt()).unwrap();
        WorldProjection {
            w1: (0..PROJ_HIDDEN).map(|_| [n1.sample(&mut rng), n1.sample(&mut rng)]).collect(),
            b1: (0..PROJ_HIDDEN).map(|_| nb.sample(&mut rng)).collect(),
            w2: (0..FEATURE_DIM * PROJ_HIDDEN).map(|_| n2.sample(&mut rng)).collect(),
        }
    })
}

/// Clean feature of a position, before any per-scene style.
pub fn position_feature(pos: [f64; 2]) -> Vec<f64> {
    let w = world();
    let p = [2.0 * pos[0] / AREA - 1.0, 2.0 * pos[1] / AREA - 1.0];
    let hidden: Vec<f64> = w.w1.iter().zip(&w.b1).map(|(r, b)| (r[0] * p[0] + r[1] * p[1] + b).tanh()).collect();
    w.w2.chunks_exact(PROJ_HIDDEN).map(|row| row.iter().zip(&hidden).map(|(a, h)| a * h).sum::<f64>().tanh()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub layout: LayoutFamily,
    pub positions: Vec<[f64; 2]>,
    /// Clean features, position projection plus the scene's style vector.
    pub features: Vec<Vec<f64>>,
    /// Sorted neighbor lists of the undirected graph.
    pub adjacency: Vec<Vec<usize>>,
    geodesic: Vec<f64>,
}

impl Scene {
    pub fn generate(seed: u64, layout: LayoutFamily) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = layout.node_range();
        let n = rng.gen_range(lo..=hi);
        let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(0.0..AREA), rng.gen_range(0.0..AREA)]).collect();
        let style_dist = Normal::new(0.0, layout.style_sigma()).unwrap();
        let style: Vec<f64> = (0..FEATURE_DIM).map(|_| style_dist.sample(&mut rng)).collect();
        let features = positions
            .iter()
            .map(|&p| position_feature(p).iter().zip(&style).map(|(f, s)| f + s).collect())
            .collect();

        let mut adjacency = vec![Vec::new(); n];
        let r = layout.radius();
        for i in 0..n {
            for j in i + 1..n {
                if dist(positions[i], positions[j]) <= r {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        connect_components(&positions, &mut adjacency);
        for a in &mut adjacency {
            a.sort_unstable();
        }
        let geodesic = all_pairs(&positions, &adjacency);
        Self { seed, layout, positions, features, adjacency, geodesic }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn euclidean(&self, a: usize, b: usize) -> f64 {
        dist(self.positions[a], self.positions[b])
    }

    /// Shortest-path length along edges.
    pub fn geodesic(&self, a: usize, b: usize) -> f64 {
        self.geodesic[a * self.len() + b]
    }

    /// Neighbor on a shortest path to `goal`, or `None` at the goal.
    pub fn next_hop(&self, node: usize, goal: usize) -> Option<usize> {
        if node == goal {
            return None;
        }
        let mut best: Option<(f64, usize)> = None;
        for &nb in self.neighbors(node) {
            let d = self.euclidean(node, nb) + self.geodesic(nb, goal);
            if best.map_or(true, |(bd, _)| d < bd - 1e-12) {
                best = Some((d, nb));
            }
        }
        best.map(|(_, nb)| nb)
    }

    /// Edge count of the shortest path found by repeated [`Self::next_hop`].
    pub fn hops(&self, from: usize, goal: usize) -> usize {
        let mut node = from;
        let mut hops = 0;
        while let Some(next) = self.next_hop(node, goal) {
            node = next;
            hops += 1;
        }
        hops
    }

    pub fn is_connected(&self) -> bool {
        self.geodesic.iter().all(|d| d.is_finite())
    }

    /// Hex SHA-256 over the seed, layout, node positions and edges.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update([self.layout as u8]);
        for p in &self.positions {
            h.update(p[0].to_le_bytes());
            h.update(p[1].to_le_bytes());
        }
        for (i, nbs) in self.adjacency.iter().enumerate() {
            for &j in nbs.iter().filter(|&&j| j > i) {
                h.update((i as u32).to_le_bytes());
                h.update((j as u32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn components(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(u) = stack.pop() {
            for &v in &adjacency[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Joins components through their closest node pair until one remains.
fn connect_components(positions: &[[f64; 2]], adjacency: &mut [Vec<usize>]) {
    loop {
        let label = components(adjacency);
        if label.iter().all(|&l| l == 0) {
            return;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..positions.len() {
            for j in 0..positions.len() {
                if label[i] == 0 && label[j] != 0 {
                    let d = dist(positions[i], positions[j]);
                    if d < best.0 {
                        best = (d, i, j);
                    }
                }
            }
        }
        let (_, i, j) = best;
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
}

fn all_pairs(positions: &[[f64; 2]], adjacency: &[Vec<usize>]) -> Vec<f64> {
    let n = positions.len();
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
        for &j in &adjacency[i] {
            d[i * n + j] = dist(positions[i], positions[j]);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    d
}
