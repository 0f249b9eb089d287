//! Restart-walk neighbor sampling over the provenance graph.
//!
//! A walker starts at the target, moves to uniformly random neighbors over
//! the undirected adjacency view, and teleports home with the restart
//! probability or whenever it is `hop_limit` steps out. Every non-target
//! node it lands on is appended until `walk_length` samples exist, so each
//! sample provably lies within `hop_limit` hops of the target (each move
//! changes graph distance by at most one). Repetition is allowed and
//! expected: revisit frequency is the signal.
//!
//! Randomness is pinned: ChaCha8 seeded from the 64-bit config seed, with
//! `node index + 1` as the stream id, so per-node sampling is bit-stable
//! regardless of scheduling. Each non-forced step draws one uniform f64 for
//! the restart decision; each move draws one bounded integer to pick the
//! neighbor. Forced restarts draw nothing.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provgraph::{NodeId, ProvGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RwrConfig {
    /// Samples per target (window length downstream).
    pub walk_length: usize,
    /// Maximum hop distance a sample may have from the target.
    pub hop_limit: usize,
    /// Per-step teleport-home probability, in `[0, 1)`.
    pub restart_probability: f64,
    pub seed: u64,
}

impl Default for RwrConfig {
    fn default() -> Self {
        RwrConfig { walk_length: 40, hop_limit: 3, restart_probability: 0.15, seed: 42 }
    }
}

impl RwrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length == 0 {
            return Err(Error::validation("rwr.walk_length", "must be at least 1"));
        }
        if self.hop_limit == 0 {
            return Err(Error::validation("rwr.hop_limit", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.restart_probability) {
            return Err(Error::validation(
                "rwr.restart_probability",
                format!("{} is outside [0, 1)", self.restart_probability),
            ));
        }
        Ok(())
    }
}

/// Sampled neighborhood window for one target node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSample {
    pub target: NodeId,
    /// Exactly `walk_length` entries, in visit order.
    pub samples: Vec<NodeId>,
    /// True when the target had no edges and the window is the target
    /// repeated; downstream treats such windows as degenerate.
    pub degenerate: bool,
}

/// Runs one restart walk and collects `cfg.walk_length` samples.
pub fn sample(graph: &ProvGraph, target: NodeId, cfg: &RwrConfig) -> Result<NeighborSample> {
    let start_neighbors = graph.neighbors(target)?;
    if start_neighbors.is_empty() {
        return Ok(NeighborSample {
            target,
            samples: vec![target; cfg.walk_length],
            degenerate: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(target.0 as u64 + 1);

    let mut samples = Vec::with_capacity(cfg.walk_length);
    let mut position = target;
    let mut depth = 0usize;
    while samples.len() < cfg.walk_length {
        if depth >= cfg.hop_limit {
            position = target;
            depth = 0;
            continue;
        }
        if rng.gen::<f64>() < cfg.restart_probability {
            position = target;
            depth = 0;
            continue;
        }
        let neighbors = graph.neighbors(position)?;
        debug_assert!(!neighbors.is_empty(), "reachable nodes keep the arriving edge");
        let next = neighbors[rng.gen_range(0..neighbors.len())].node;
        position = next;
        if position == target {
            depth = 0;
        } else {
            depth += 1;
            samples.push(position);
        }
    }

    Ok(NeighborSample { target, samples, degenerate: false })
}

/// Deterministic sampling-free window for ablation: the target's direct
/// neighbors in insertion order, repeated cyclically to `walk_length`.
/// Edgeless targets degrade exactly like [`sample`] does.
pub fn direct_window(graph: &ProvGraph, target: NodeId, walk_length: usize) -> Result<NeighborSample> {
    let neighbors = graph.neighbors(target)?;
    if neighbors.is_empty() {
        return Ok(NeighborSample {
            target,
            samples: vec![target; walk_length],
            degenerate: true,
        });
    }
    let samples = (0..walk_length).map(|i| neighbors[i % neighbors.len()].node).collect();
    Ok(NeighborSample { target, samples, degenerate: false })
}

/// Breadth-first hop distance over the undirected view; `None` when `to` is
/// unreachable from `from`.
pub fn hop_distance(graph: &ProvGraph, from: NodeId, to: NodeId) -> Result<Option<usize>> {
    graph.neighbors(to)?;
    if from == to {
        return Ok(Some(0));
    }
    let mut dist = vec![usize::MAX; graph.node_count()];
    dist[from.index()] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u.index()];
        for n in graph.neighbors(u)? {
            if dist[n.node.index()] == usize::MAX {
                dist[n.node.index()] = d + 1;
                if n.node == to {
                    return Ok(Some(d + 1));
                }
                queue.push_back(n.node);
            }
        }
    }
    Ok(None)
}
