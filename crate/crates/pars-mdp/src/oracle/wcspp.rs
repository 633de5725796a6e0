//! Weight-constrained shortest path as a shaping oracle.
//!
//! On a layered DAG with integer edge weights and costs in `0..=16`,
//! finding the cheapest source-to-sink path whose total weight stays within
//! a cap is a budget-shaping problem in disguise: score each edge
//! 1 − weight/16 for the agent and 1 − cost/16 for the principal. Because
//! every source-to-sink path has the same number of edges L, the agent's
//! path value is L − weight/16 — the default walks the minimum-weight path
//! — and a bonus budget of (cap − min_weight)/16 makes implementable
//! exactly the paths whose weight respects the cap. All rewards are dyadic
//! rationals, so the frontier solve recovers the constrained minimum cost
//! bit-for-bit, giving an independent integer check of the solver.

use crate::mdp::{InstanceBuilder, MdpInstance};
use crate::ParsError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest edge weight or cost; also the reward denominator.
pub const SCALE: u32 = 16;
/// The reward grid step implied by [`SCALE`] (1/16, exactly representable).
pub const EPSILON: f64 = 0.0625;

/// One directed edge of the layered graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WcsppEdge {
    pub from: usize,
    pub to: usize,
    pub weight: u32,
    pub cost: u32,
}

/// A weight-constrained shortest-path instance on a layered DAG:
/// node 0 is the source, nodes 1..=inner_layers·width sit in inner layers
/// of `width` nodes each, and the last node is the sink.
#[derive(Debug, Clone)]
pub struct WcsppSpec {
    pub inner_layers: usize,
    pub width: usize,
    pub edges: Vec<WcsppEdge>,
    pub weight_cap: u32,
}

/// Integer ground truth for a spec, by exhaustive path enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WcsppExact {
    /// Minimum path weight over all source-to-sink paths.
    pub weight_min: u32,
    /// Minimum path cost among paths with weight ≤ cap, if any qualify.
    pub constrained_min_cost: Option<u32>,
    pub num_paths: usize,
}

/// A spec rendered as a shaping instance.
#[derive(Debug, Clone)]
pub struct WcsppConversion {
    pub instance: MdpInstance,
    pub weight_min: u32,
}

impl WcsppSpec {
    pub fn num_nodes(&self) -> usize {
        2 + self.inner_layers * self.width
    }

    pub fn sink(&self) -> usize {
        self.num_nodes() - 1
    }

    /// Source is layer 0, inner layer j is 1 + j, sink is inner_layers + 1.
    fn layer_of(&self, node: usize) -> usize {
        if node == 0 {
            0
        } else if node == self.sink() {
            self.inner_layers + 1
        } else {
            1 + (node - 1) / self.width
        }
    }

    /// Number of edges on every source-to-sink path.
    pub fn path_len(&self) -> usize {
        self.inner_layers + 1
    }

    /// Structural validity: edge endpoints in range and spanning consecutive
    /// layers, weights and costs within the scale, and no reachable dead
    /// ends (those would break the equal-path-length premise).
    pub fn check(&self) -> Result<(), ParsError> {
        let n = self.num_nodes();
        for e in &self.edges {
            if e.from >= n || e.to >= n {
                return Err(ParsError::Precondition(format!(
                    "edge ({}, {}) leaves the node range 0..{n}",
                    e.from, e.to
                )));
            }
            if self.layer_of(e.to) != self.layer_of(e.from) + 1 {
                return Err(ParsError::Precondition(format!(
                    "edge ({}, {}) must connect consecutive layers",
                    e.from, e.to
                )));
            }
            if e.weight > SCALE || e.cost > SCALE {
                return Err(ParsError::Precondition(format!(
                    "edge ({}, {}) carries weight {} / cost {} beyond the scale {SCALE}",
                    e.from, e.to, e.weight, e.cost
                )));
            }
        }
        // Reachable non-sink nodes must be leavable.
        let mut reachable = vec![false; n];
        reachable[0] = true;
        let mut queue = vec![0usize];
        while let Some(v) = queue.pop() {
            for e in self.edges.iter().filter(|e| e.from == v) {
                if !reachable[e.to] {
                    reachable[e.to] = true;
                    queue.push(e.to);
                }
            }
        }
        for v in 0..n {
            if reachable[v] && v != self.sink() && !self.edges.iter().any(|e| e.from == v) {
                return Err(ParsError::Precondition(format!(
                    "node {v} can be entered but not left; every source-to-sink \
                     path must have equal length"
                )));
            }
        }
        if !reachable[self.sink()] {
            return Err(ParsError::Precondition(
                "the sink is unreachable from the source".to_string(),
            ));
        }
        Ok(())
    }
}

/// Enumerates every source-to-sink path and reports the integer optimum.
pub fn wcspp_exhaustive(spec: &WcsppSpec) -> Result<WcsppExact, ParsError> {
    spec.check()?;
    let mut outgoing: Vec<Vec<&WcsppEdge>> = vec![Vec::new(); spec.num_nodes()];
    for e in &spec.edges {
        outgoing[e.from].push(e);
    }
    let mut weight_min = u32::MAX;
    let mut best_cost: Option<u32> = None;
    let mut num_paths = 0usize;
    // Depth-first walk carrying (node, weight so far, cost so far).
    let mut stack = vec![(0usize, 0u32, 0u32)];
    while let Some((v, w, c)) = stack.pop() {
        if v == spec.sink() {
            num_paths += 1;
            weight_min = weight_min.min(w);
            if w <= spec.weight_cap && best_cost.map_or(true, |b| c < b) {
                best_cost = Some(c);
            }
            continue;
        }
        for e in &outgoing[v] {
            stack.push((e.to, w + e.weight, c + e.cost));
        }
    }
    Ok(WcsppExact {
        weight_min,
        constrained_min_cost: best_cost,
        num_paths,
    })
}

/// Renders a spec as a shaping instance: state per node, action arm per
/// edge, rewards 1 − weight/16 (agent) and 1 − cost/16 (principal), budget
/// (cap − min_weight)/16.
pub fn wcspp_to_pars(spec: &WcsppSpec) -> Result<WcsppConversion, ParsError> {
    spec.check()?;
    // Minimum path weight by forward relaxation over the layered order.
    let mut dist = vec![u32::MAX; spec.num_nodes()];
    dist[0] = 0;
    let mut nodes: Vec<usize> = (0..spec.num_nodes()).collect();
    nodes.sort_by_key(|&v| spec.layer_of(v));
    for &v in &nodes {
        if dist[v] == u32::MAX {
            continue;
        }
        for e in spec.edges.iter().filter(|e| e.from == v) {
            dist[e.to] = dist[e.to].min(dist[v] + e.weight);
        }
    }
    let weight_min = dist[spec.sink()];
    if spec.weight_cap < weight_min {
        return Err(ParsError::Precondition(format!(
            "weight cap {} is below the minimum achievable path weight {weight_min}",
            spec.weight_cap
        )));
    }

    let mut b = InstanceBuilder::new();
    for v in 0..spec.num_nodes() {
        b.state(&format!("v{v}"));
    }
    let mut out_degree = vec![0usize; spec.num_nodes()];
    for e in &spec.edges {
        let action = b.action(&format!("e{}", out_degree[e.from]));
        out_degree[e.from] += 1;
        let scale = f64::from(SCALE);
        b.reward(
            e.from,
            action,
            f64::from(SCALE - e.weight) / scale,
            f64::from(SCALE - e.cost) / scale,
        );
        b.transition(e.from, action, e.to, 1.0);
    }
    let budget = f64::from(spec.weight_cap - weight_min) / f64::from(SCALE);
    let instance = b.build(0, spec.path_len(), budget, false)?;
    Ok(WcsppConversion {
        instance,
        weight_min,
    })
}

/// Inverts the reward mapping: a principal path value of L − cost/16 over
/// `path_len` edges corresponds to this integer cost.
pub fn cost_from_principal(spec: &WcsppSpec, principal_value: f64) -> u32 {
    ((spec.path_len() as f64 - principal_value) * f64::from(SCALE)).round() as u32
}

/// Random graded instance: source fans out to 3 of 6 entry nodes, each
/// inner node picks 2 successors (the last inner layer feeds the sink), all
/// weights and costs uniform in 0..=16, and the cap sits a random slack
/// above the minimum weight.
pub fn gen_wcspp(seed: u64) -> WcsppSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inner_layers, width) = (3usize, 6usize);
    let node = |layer: usize, i: usize| 1 + layer * width + i;
    let mut edges = Vec::new();
    let push = |edges: &mut Vec<WcsppEdge>, rng: &mut ChaCha8Rng, from: usize, to: usize| {
        edges.push(WcsppEdge {
            from,
            to,
            weight: rng.gen_range(0..=SCALE),
            cost: rng.gen_range(0..=SCALE),
        });
    };
    let mut entries: Vec<usize> = (0..width).collect();
    entries.shuffle(&mut rng);
    for &i in entries.iter().take(3) {
        push(&mut edges, &mut rng, 0, node(0, i));
    }
    for layer in 0..inner_layers - 1 {
        for i in 0..width {
            let mut targets: Vec<usize> = (0..width).collect();
            targets.shuffle(&mut rng);
            for &t in targets.iter().take(2) {
                push(&mut edges, &mut rng, node(layer, i), node(layer + 1, t));
            }
        }
    }
    let sink = 1 + inner_layers * width;
    for i in 0..width {
        push(&mut edges, &mut rng, node(inner_layers - 1, i), sink);
    }
    let mut spec = WcsppSpec {
        inner_layers,
        width,
        edges,
        weight_cap: SCALE * 4,
    };
    let exact = wcspp_exhaustive(&spec).expect("generated graph is well formed");
    spec.weight_cap = exact.weight_min + rng.gen_range(0..=12);
    spec
}
