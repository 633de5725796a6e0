//! Seeded instance generators: full k-ary stochastic trees and layered
//! deterministic graphs. The same seed always reproduces the same instance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{InstanceBuilder, MdpInstance};
use crate::ParsError;

/// A full `arity`-ary stochastic tree of the given depth (so
/// (arity^(depth+1) − 1)/(arity − 1) states) with horizon = depth.
/// Each internal state carries 2 or 3 actions; every action arm spreads
/// probability over all children (positive, normalized exponentials) and
/// both rewards are uniform on [0, 1]. Budget defaults to 1 — adjust with
/// [`MdpInstance::with_budget`].
pub fn gen_random_tree(
    arity: usize,
    depth: usize,
    seed: u64,
) -> Result<MdpInstance, ParsError> {
    if arity == 0 || depth == 0 {
        return Err(ParsError::Precondition(
            "random tree needs arity ≥ 1 and depth ≥ 1".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = InstanceBuilder::new();

    // Breadth-first state ids: level j occupies a contiguous block.
    let mut level_start = vec![0usize];
    let mut total = 1usize;
    for j in 1..=depth {
        level_start.push(total);
        total += arity.pow(j as u32);
    }
    for i in 0..total {
        b.state(&format!("n{i}"));
    }

    for j in 0..depth {
        let level_size = arity.pow(j as u32);
        for offset in 0..level_size {
            let s = level_start[j] + offset;
            let first_child = level_start[j + 1] + offset * arity;
            let num_actions = rng.gen_range(2..=3usize);
            for k in 0..num_actions {
                let a = b.action(&format!("a{k}"));
                let agent = rng.gen::<f64>();
                let principal = rng.gen::<f64>();
                b.reward(s, a, agent, principal);
                // Positive Dirichlet(1,…,1) weights over the children.
                let weights: Vec<f64> = (0..arity)
                    .map(|_| -(1.0 - rng.gen::<f64>()).ln().max(1e-12))
                    .collect();
                let sum: f64 = weights.iter().sum();
                for (c, w) in weights.iter().enumerate() {
                    b.transition(s, a, first_child + c, w / sum);
                }
            }
        }
    }
    b.build(0, depth, 1.0, false)
}

/// A layered deterministic graph: a root plus `layers` layers of `width`
/// states, horizon = `layers`, budget 0. Every state above the last layer
/// carries `actions` arms, each moving deterministically to a distinct
/// (seeded-random) state of the next layer; rewards are uniform on [0, 1].
/// The last layer is terminal. Requires `actions ≤ width` so the successors
/// can be distinct.
pub fn gen_layer_graph(
    layers: usize,
    width: usize,
    actions: usize,
    seed: u64,
) -> Result<MdpInstance, ParsError> {
    if layers == 0 || width == 0 || actions == 0 {
        return Err(ParsError::Precondition(
            "layer graph needs layers ≥ 1, width ≥ 1, actions ≥ 1".to_string(),
        ));
    }
    if actions > width {
        return Err(ParsError::Precondition(format!(
            "actions ({actions}) must not exceed width ({width}): \
             each action needs a distinct successor"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = InstanceBuilder::new();
    let root = b.state("root");
    let mut layer_ids: Vec<Vec<usize>> = Vec::with_capacity(layers);
    for j in 1..=layers {
        layer_ids.push((0..width).map(|i| b.state(&format!("l{j}n{i}"))).collect());
    }
    let action_ids: Vec<usize> = (0..actions).map(|k| b.action(&format!("a{k}"))).collect();

    let mut pick = (0..width).collect::<Vec<usize>>();
    for j in 0..layers {
        let sources: &[usize] = if j == 0 { std::slice::from_ref(&root) } else { &layer_ids[j - 1] };
        for &s in sources {
            pick.shuffle(&mut rng);
            for (k, &a) in action_ids.iter().enumerate() {
                let agent = rng.gen::<f64>();
                let principal = rng.gen::<f64>();
                b.reward(s, a, agent, principal);
                b.transition(s, a, layer_ids[j][pick[k]], 1.0);
            }
        }
    }
    b.build(root, layers, 0.0, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Layout;
    use crate::oracle::brute_force::path_catalog;

    #[test]
    fn tree_shape_and_layout() {
        let inst = gen_random_tree(2, 2, 11).unwrap();
        assert_eq!(inst.num_states(), 7);
        assert_eq!(inst.horizon(), 2);
        let report = inst.validate();
        assert!(report.is_clean(), "violations: {:?}", report.violations);
        assert_eq!(report.layout, Layout::StochasticTree { arity: 2 });
        assert!(report.unreachable.is_empty());
    }

    #[test]
    fn tree_generation_is_deterministic_in_the_seed() {
        let a = gen_random_tree(3, 2, 7).unwrap();
        let b = gen_random_tree(3, 2, 7).unwrap();
        assert_eq!(a.num_states(), b.num_states());
        for s in 0..a.num_states() {
            assert_eq!(a.arms(s).len(), b.arms(s).len());
            for (x, y) in a.arms(s).iter().zip(b.arms(s)) {
                assert_eq!(x.agent_reward, y.agent_reward);
                assert_eq!(x.principal_reward, y.principal_reward);
                assert_eq!(x.transitions, y.transitions);
            }
        }
        // A different seed changes at least the root rewards.
        let c = gen_random_tree(3, 2, 8).unwrap();
        assert_ne!(a.arms(0)[0].agent_reward, c.arms(0)[0].agent_reward);
    }

    #[test]
    fn layer_graph_shape_is_graded() {
        let inst = gen_layer_graph(3, 4, 2, 5).unwrap();
        assert_eq!(inst.num_states(), 13);
        assert_eq!(inst.horizon(), 3);
        let report = inst.validate();
        assert!(report.is_clean(), "violations: {:?}", report.violations);
        assert_eq!(report.layout, Layout::AcyclicDeterministic);
        // Every reachable state sits exactly at its layer's depth.
        let depths = inst.min_depths();
        for j in 1..=3usize {
            for i in 0..4usize {
                let s = inst.state_id(&format!("l{j}n{i}")).unwrap();
                if let Some(d) = depths[s] {
                    assert_eq!(d, j);
                }
            }
        }
        // Paths multiply out: actions^layers.
        assert_eq!(path_catalog(&inst, None).unwrap().len(), 8);
    }

    #[test]
    fn layer_graph_rejects_more_actions_than_width() {
        let err = gen_layer_graph(3, 2, 3, 0).unwrap_err();
        assert!(err.to_string().contains("must not exceed width"));
    }
}
