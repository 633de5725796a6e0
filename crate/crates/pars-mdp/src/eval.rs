//! Policy evaluation: per-state values and Q-values under an arbitrary
//! reward map, with finite-horizon truncation.

use crate::mdp::{ActionId, MdpInstance, Policy, StateId};
use crate::ParsError;

/// A dense reward table indexed by (state, arm position). Arm positions
/// follow [`MdpInstance::arms`] order (ascending action id).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMap {
    values: Vec<Vec<f64>>,
}

impl RewardMap {
    /// Builds a map by evaluating `f` on every arm.
    pub fn from_fn(
        instance: &MdpInstance,
        mut f: impl FnMut(StateId, usize, &crate::mdp::ActionArm) -> f64,
    ) -> Self {
        let values = (0..instance.num_states())
            .map(|s| {
                instance
                    .arms(s)
                    .iter()
                    .enumerate()
                    .map(|(pos, arm)| f(s, pos, arm))
                    .collect()
            })
            .collect();
        RewardMap { values }
    }

    /// The agent's reward function R^A.
    pub fn agent(instance: &MdpInstance) -> Self {
        Self::from_fn(instance, |_, _, arm| arm.agent_reward)
    }

    /// The principal's reward function R^P.
    pub fn principal(instance: &MdpInstance) -> Self {
        Self::from_fn(instance, |_, _, arm| arm.principal_reward)
    }

    /// The all-zero reward function.
    pub fn zero(instance: &MdpInstance) -> Self {
        Self::from_fn(instance, |_, _, _| 0.0)
    }

    pub fn get(&self, s: StateId, arm_pos: usize) -> f64 {
        self.values[s][arm_pos]
    }

    pub fn set(&mut self, s: StateId, arm_pos: usize, value: f64) {
        self.values[s][arm_pos] = value;
    }
}

/// Per-state values of a fixed (policy, reward) pair.
///
/// The value at state `s` is computed with remaining horizon `H − depth(s)`
/// (BFS depth from the initial state): states reached at depth `H` onward
/// contribute nothing, and a terminal arm grants its reward and stops.
/// Unreachable states carry 0.
#[derive(Debug, Clone)]
pub struct ValueProfile {
    values: Vec<f64>,
}

impl ValueProfile {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn at(&self, s: StateId) -> f64 {
        self.values[s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Evaluates `policy` under `reward`: V_s = r(s, π(s)) + Σ P(s,π(s),t)·V_t
/// with horizon truncation as described on [`ValueProfile`].
///
/// Cyclic instances are refused — unroll them first.
pub fn evaluate_policy(
    instance: &MdpInstance,
    policy: &Policy,
    reward: &RewardMap,
) -> Result<ValueProfile, ParsError> {
    let order = instance.topological_order().ok_or_else(|| {
        ParsError::Precondition("cyclic instance requires layer-graph conversion".to_string())
    })?;
    let depths = instance.min_depths();
    let mut values = vec![0.0; instance.num_states()];
    for &s in order.iter().rev() {
        let Some(d) = depths[s] else { continue };
        if d >= instance.horizon() {
            continue;
        }
        let Some(a) = policy.choice(s) else { continue };
        let pos = instance.arm_position(s, a).ok_or_else(|| {
            ParsError::Precondition(format!(
                "policy chooses unknown action {} at state {}",
                a,
                instance.state_name(s)
            ))
        })?;
        let arm = &instance.arms(s)[pos];
        let mut v = reward.get(s, pos);
        for &(t, p) in &arm.transitions {
            v += p * values[t];
        }
        values[s] = v;
    }
    Ok(ValueProfile { values })
}

/// Q-value of taking `a` at `s` and then following `policy`:
/// r(s,a) + Σ P(s,a,t)·V_t(policy, reward), with the same horizon
/// truncation as [`evaluate_policy`] (zero at states out of horizon).
pub fn q_value(
    instance: &MdpInstance,
    policy: &Policy,
    s: StateId,
    a: ActionId,
    reward: &RewardMap,
) -> Result<f64, ParsError> {
    let pos = instance.arm_position(s, a).ok_or_else(|| {
        ParsError::Precondition(format!(
            "unknown action {} at state {}",
            a,
            instance.state_name(s)
        ))
    })?;
    let depths = instance.min_depths();
    match depths[s] {
        Some(d) if d < instance.horizon() => {}
        _ => return Ok(0.0),
    }
    let profile = evaluate_policy(instance, policy, reward)?;
    let arm = &instance.arms(s)[pos];
    let mut q = reward.get(s, pos);
    for &(t, p) in &arm.transitions {
        q += p * profile.at(t);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The worked example's default path (s0,s1,s4) is worth 8 to the agent
    /// and 2 to the principal.
    #[test]
    fn six_state_default_path_values() {
        let inst = fixtures::six_state_example();
        let mut policy = crate::mdp::Policy::empty(inst.num_states());
        let left = inst.action_id("left").unwrap();
        let right = inst.action_id("right").unwrap();
        policy.set(inst.state_id("s0").unwrap(), left);
        policy.set(inst.state_id("s1").unwrap(), right);
        let agent = evaluate_policy(&inst, &policy, &RewardMap::agent(&inst)).unwrap();
        let principal = evaluate_policy(&inst, &policy, &RewardMap::principal(&inst)).unwrap();
        assert_eq!(agent.at(inst.initial()), 8.0);
        assert_eq!(principal.at(inst.initial()), 2.0);
    }

    #[test]
    fn zero_reward_gives_zero_everywhere() {
        let inst = fixtures::six_state_example();
        let mut policy = crate::mdp::Policy::empty(inst.num_states());
        let left = inst.action_id("left").unwrap();
        for s in 0..3 {
            policy.set(s, left);
        }
        let profile = evaluate_policy(&inst, &policy, &RewardMap::zero(&inst)).unwrap();
        assert!(profile.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_equals_v_at_the_chosen_action() {
        let inst = fixtures::six_state_example();
        let mut policy = crate::mdp::Policy::empty(inst.num_states());
        let left = inst.action_id("left").unwrap();
        let right = inst.action_id("right").unwrap();
        policy.set(0, left);
        policy.set(1, right);
        policy.set(2, right);
        let agent = RewardMap::agent(&inst);
        let profile = evaluate_policy(&inst, &policy, &agent).unwrap();
        for s in 0..3 {
            let a = policy.choice(s).unwrap();
            let q = q_value(&inst, &policy, s, a, &agent).unwrap();
            assert!((q - profile.at(s)).abs() <= crate::ETA);
        }
        // Q at (s1, left) under the agent reward: 2 plus a terminal child.
        let q = q_value(&inst, &policy, 1, left, &agent).unwrap();
        assert_eq!(q, 2.0);
    }

    #[test]
    fn cyclic_instances_are_refused() {
        let inst = fixtures::two_state_cycle(3);
        let policy = crate::mdp::Policy::empty(inst.num_states());
        let err = evaluate_policy(&inst, &policy, &RewardMap::agent(&inst)).unwrap_err();
        assert!(err
            .to_string()
            .contains("cyclic instance requires layer-graph conversion"));
    }

    /// Independent Monte-Carlo rollout oracle: 10^6 seeded rollouts of a
    /// fixed policy on a random stochastic tree agree with the analytic
    /// value within three standard errors.
    #[test]
    fn monte_carlo_rollouts_agree_with_the_evaluator() {
        let inst = crate::oracle::generators::gen_random_tree(3, 2, 7).unwrap();
        assert!(inst.validate().is_clean());
        // Fixed policy: first arm everywhere.
        let mut policy = crate::mdp::Policy::empty(inst.num_states());
        for s in 0..inst.num_states() {
            if let Some(arm) = inst.arms(s).first() {
                policy.set(s, arm.action);
            }
        }
        let reward = RewardMap::agent(&inst);
        let analytic = evaluate_policy(&inst, &policy, &reward).unwrap().at(inst.initial());

        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let n = 1_000_000usize;
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let mut s = inst.initial();
            let mut acc = 0.0;
            for _ in 0..inst.horizon() {
                let Some(a) = policy.choice(s) else { break };
                let pos = inst.arm_position(s, a).unwrap();
                let arm = &inst.arms(s)[pos];
                acc += arm.agent_reward;
                if arm.is_terminal() {
                    break;
                }
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                let mut next = arm.transitions.last().unwrap().0;
                for &(t, p) in &arm.transitions {
                    cum += p;
                    if u < cum {
                        next = t;
                        break;
                    }
                }
                s = next;
            }
            sum += acc;
            sum_sq += acc * acc;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let std_err = (var / n as f64).sqrt();
        assert!(
            (analytic - mean).abs() <= 3.0 * std_err + 1e-9,
            "analytic {analytic} vs MC {mean} ± {std_err}"
        );
    }
}
