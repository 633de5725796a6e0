//! Instance representation, validation, layout classification, and the
//! layer-graph unrolling of cyclic deterministic decision processes.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::{ParsError, ETA};

/// Index into an instance's state table.
pub type StateId = usize;
/// Index into an instance's interned action-name table. Action ids are global
/// to the instance so different states can share names like "left".
pub type ActionId = usize;

/// One (state, action) arm: both rewards plus the transition support.
///
/// An arm with an empty transition list is *terminal*: taking it grants the
/// rewards and ends the episode. Arms with transitions must carry a
/// probability distribution summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionArm {
    pub action: ActionId,
    pub agent_reward: f64,
    pub principal_reward: f64,
    pub transitions: Vec<(StateId, f64)>,
}

impl ActionArm {
    /// True when taking this arm ends the episode.
    pub fn is_terminal(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// A finite-horizon MDP with two reward functions and a bonus budget.
///
/// Construction goes through [`InstanceBuilder`]; instances are immutable
/// afterwards and safe to share across threads.
#[derive(Debug, Clone)]
pub struct MdpInstance {
    state_names: Vec<String>,
    action_names: Vec<String>,
    initial: StateId,
    horizon: usize,
    budget: f64,
    allow_negative: bool,
    /// Arms per state, sorted by ascending action id.
    arms: Vec<Vec<ActionArm>>,
}

/// Structural class of an instance, deciding which solver applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Every transition is a point mass and the graph is acyclic.
    AcyclicDeterministic,
    /// Every non-initial state has exactly one predecessor state.
    StochasticTree { arity: usize },
    /// Point-mass transitions with at least one cycle.
    CyclicDeterministic,
    /// Anything else.
    GeneralStochastic,
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Layout::AcyclicDeterministic => write!(f, "acyclic-deterministic"),
            Layout::StochasticTree { arity } => write!(f, "stochastic-tree(arity {arity})"),
            Layout::CyclicDeterministic => write!(f, "cyclic-deterministic"),
            Layout::GeneralStochastic => write!(f, "general-stochastic"),
        }
    }
}

/// Outcome of [`MdpInstance::validate`]. Violations are hard errors that all
/// solvers refuse; unreachable states are informational (layer-graph images
/// legitimately contain unreachable copies).
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub layout: Layout,
    pub violations: Vec<String>,
    pub unreachable: Vec<StateId>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Deterministic map from states to chosen arms. `None` marks states with no
/// choice (terminal, or never intended to be reached).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    choices: Vec<Option<ActionId>>,
}

impl Policy {
    pub fn empty(num_states: usize) -> Self {
        Policy {
            choices: vec![None; num_states],
        }
    }

    pub fn choice(&self, s: StateId) -> Option<ActionId> {
        self.choices[s]
    }

    pub fn set(&mut self, s: StateId, a: ActionId) {
        self.choices[s] = Some(a);
    }

    pub fn num_states(&self) -> usize {
        self.choices.len()
    }

    /// The trajectory induced on a deterministic instance: states visited from
    /// the initial state, following choices until a terminal arm, a missing
    /// choice, or the horizon. `None` when the instance is not deterministic.
    pub fn induced_path(&self, instance: &MdpInstance) -> Option<Vec<StateId>> {
        if !instance.is_deterministic() {
            return None;
        }
        let mut path = vec![instance.initial()];
        let mut s = instance.initial();
        for _ in 0..instance.horizon() {
            let Some(a) = self.choice(s) else { break };
            let Some(arm) = instance.arm(s, a) else { break };
            match arm.transitions.first() {
                Some(&(t, _)) => {
                    path.push(t);
                    s = t;
                }
                None => break,
            }
        }
        Some(path)
    }

    /// States reachable from the initial state when following this policy
    /// (all transition targets of chosen arms, recursively).
    pub fn support(&self, instance: &MdpInstance) -> Vec<bool> {
        let mut seen = vec![false; instance.num_states()];
        let mut queue = VecDeque::from([instance.initial()]);
        seen[instance.initial()] = true;
        while let Some(s) = queue.pop_front() {
            let Some(a) = self.choice(s) else { continue };
            let Some(arm) = instance.arm(s, a) else {
                continue;
            };
            for &(t, _) in &arm.transitions {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }
}

impl MdpInstance {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn allow_negative(&self) -> bool {
        self.allow_negative
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.action_names.iter().position(|n| n == name)
    }

    /// Arms available at `s`, sorted by ascending action id.
    pub fn arms(&self, s: StateId) -> &[ActionArm] {
        &self.arms[s]
    }

    /// The arm for action `a` at state `s`, if `a ∈ A(s)`.
    pub fn arm(&self, s: StateId, a: ActionId) -> Option<&ActionArm> {
        self.arms[s].iter().find(|arm| arm.action == a)
    }

    /// Position of action `a` within `arms(s)`.
    pub fn arm_position(&self, s: StateId, a: ActionId) -> Option<usize> {
        self.arms[s].iter().position(|arm| arm.action == a)
    }

    /// A copy of this instance with a different bonus budget.
    pub fn with_budget(&self, budget: f64) -> MdpInstance {
        MdpInstance {
            budget,
            ..self.clone()
        }
    }

    /// True when every arm is a point mass (or terminal).
    pub fn is_deterministic(&self) -> bool {
        self.arms.iter().flatten().all(|arm| {
            arm.transitions.is_empty()
                || (arm.transitions.len() == 1 && (arm.transitions[0].1 - 1.0).abs() <= ETA)
        })
    }

    /// Kahn topological order over all states, or `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<StateId>> {
        let n = self.num_states();
        let mut indegree = vec![0usize; n];
        for arm in self.arms.iter().flatten() {
            for &(t, _) in &arm.transitions {
                indegree[t] += 1;
            }
        }
        let mut queue: VecDeque<StateId> =
            (0..n).filter(|&s| indegree[s] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for arm in &self.arms[s] {
                for &(t, _) in &arm.transitions {
                    indegree[t] -= 1;
                    if indegree[t] == 0 {
                        queue.push_back(t);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// BFS reachability from the initial state over all arms.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(s) = queue.pop_front() {
            for arm in &self.arms[s] {
                for &(t, _) in &arm.transitions {
                    if !seen[t] {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        seen
    }

    /// BFS minimum depth from the initial state; `None` for unreachable
    /// states. Values at a state use remaining horizon `H − depth(s)`.
    pub fn min_depths(&self) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.num_states()];
        let mut queue = VecDeque::from([self.initial]);
        depth[self.initial] = Some(0);
        while let Some(s) = queue.pop_front() {
            let d = depth[s].unwrap();
            for arm in &self.arms[s] {
                for &(t, _) in &arm.transitions {
                    if depth[t].is_none() {
                        depth[t] = Some(d + 1);
                        queue.push_back(t);
                    }
                }
            }
        }
        depth
    }

    /// True when the reachability graph is a tree rooted at the initial
    /// state: acyclic, all states reachable, and every non-initial state has
    /// exactly one predecessor state.
    pub fn is_tree(&self) -> bool {
        if !self.is_acyclic() || self.reachable().iter().any(|r| !r) {
            return false;
        }
        let mut parent: Vec<Option<StateId>> = vec![None; self.num_states()];
        for s in 0..self.num_states() {
            for arm in &self.arms[s] {
                for &(t, _) in &arm.transitions {
                    match parent[t] {
                        None => parent[t] = Some(s),
                        Some(p) if p == s => {}
                        Some(_) => return false,
                    }
                }
            }
        }
        // Acyclicity already rules out a parent for the initial state, and
        // reachability gives every other state at least one parent.
        true
    }

    /// Largest transition-support size over all arms.
    pub fn max_branching(&self) -> usize {
        self.arms
            .iter()
            .flatten()
            .map(|arm| arm.transitions.len())
            .max()
            .unwrap_or(0)
    }

    /// Structural classification deciding solver applicability.
    pub fn layout(&self) -> Layout {
        if self.is_deterministic() {
            if self.is_acyclic() {
                Layout::AcyclicDeterministic
            } else {
                Layout::CyclicDeterministic
            }
        } else if self.is_tree() {
            Layout::StochasticTree {
                arity: self.max_branching(),
            }
        } else {
            Layout::GeneralStochastic
        }
    }

    /// Checks probability sums, reward ranges, and basic shape; classifies
    /// the layout and lists unreachable states. Solvers require
    /// [`ValidationReport::is_clean`]. Rewards above 1 are legal (several
    /// worked fixtures use them); only negatives violate the range contract,
    /// with `allow_negative` widening the floor from 0 to −1.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.horizon == 0 {
            violations.push("horizon must be ≥ 1".to_string());
        }
        if !self.budget.is_finite() || self.budget < 0.0 {
            violations.push(format!("budget {} must be finite and ≥ 0", self.budget));
        }
        let floor = if self.allow_negative { -1.0 } else { 0.0 };
        for s in 0..self.num_states() {
            for arm in &self.arms[s] {
                let at = format!("({}, {})", self.state_name(s), self.action_name(arm.action));
                for &r in &[arm.agent_reward, arm.principal_reward] {
                    if !r.is_finite() {
                        violations.push(format!("non-finite reward at {at}"));
                    } else if r < floor - ETA {
                        violations.push(format!(
                            "reward {r} below the permitted floor {floor} at {at}"
                        ));
                    }
                }
                if arm.is_terminal() {
                    continue;
                }
                let mut sum = 0.0;
                let mut targets: Vec<StateId> = Vec::with_capacity(arm.transitions.len());
                for &(t, p) in &arm.transitions {
                    if !(p > 0.0 && p <= 1.0 + ETA) {
                        violations.push(format!("probability {p} outside (0, 1] at {at}"));
                    }
                    sum += p;
                    targets.push(t);
                }
                if (sum - 1.0).abs() > ETA {
                    violations.push(format!("probability mass {sum} ≠ 1 at {at}"));
                }
                targets.sort_unstable();
                if targets.windows(2).any(|w| w[0] == w[1]) {
                    violations.push(format!("duplicate transition target at {at}"));
                }
            }
        }
        let reachable = self.reachable();
        let unreachable = (0..self.num_states()).filter(|&s| !reachable[s]).collect();
        ValidationReport {
            layout: self.layout(),
            violations,
            unreachable,
        }
    }

    /// Unrolls a deterministic (possibly cyclic) instance into `H` layers of
    /// `|S|` states each. Layer-`j` copies of a state are named `name@j`.
    /// Arms in layers below `H` point at the next layer; layer-`H` arms keep
    /// their rewards but become terminal (the episode's last step). Any
    /// policy on the layer graph corresponds to a time-dependent policy on
    /// the original with identical value at the initial state.
    pub fn to_layer_graph(&self) -> Result<MdpInstance, ParsError> {
        if !self.is_deterministic() {
            return Err(ParsError::Precondition(
                "layer conversion defined for DDPs only; this instance has stochastic transitions"
                    .to_string(),
            ));
        }
        let h = self.horizon;
        let mut builder = InstanceBuilder::new();
        for j in 1..=h {
            for name in &self.state_names {
                builder.state(&format!("{name}@{j}"));
            }
        }
        let layered = |s: StateId, j: usize| (j - 1) * self.num_states() + s;
        for j in 1..=h {
            for s in 0..self.num_states() {
                for arm in &self.arms[s] {
                    let action = builder.action(self.action_name(arm.action));
                    builder.reward(
                        layered(s, j),
                        action,
                        arm.agent_reward,
                        arm.principal_reward,
                    );
                    if j < h {
                        if let Some(&(t, _)) = arm.transitions.first() {
                            builder.transition(layered(s, j), action, layered(t, j + 1), 1.0);
                        }
                    }
                }
            }
        }
        builder.build(
            layered(self.initial, 1),
            h,
            self.budget,
            self.allow_negative,
        )
    }
}

/// Incremental construction of an [`MdpInstance`] with string interning for
/// state and action names.
#[derive(Debug, Default)]
pub struct InstanceBuilder {
    state_names: Vec<String>,
    state_index: HashMap<String, StateId>,
    action_names: Vec<String>,
    action_index: HashMap<String, ActionId>,
    rewards: BTreeMap<(StateId, ActionId), (f64, f64)>,
    transitions: BTreeMap<(StateId, ActionId), Vec<(StateId, f64)>>,
}

impl InstanceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns a state name, returning its id.
    pub fn state(&mut self, name: &str) -> StateId {
        if let Some(&id) = self.state_index.get(name) {
            return id;
        }
        let id = self.state_names.len();
        self.state_names.push(name.to_string());
        self.state_index.insert(name.to_string(), id);
        id
    }

    /// Interns an action name, returning its id.
    pub fn action(&mut self, name: &str) -> ActionId {
        if let Some(&id) = self.action_index.get(name) {
            return id;
        }
        let id = self.action_names.len();
        self.action_names.push(name.to_string());
        self.action_index.insert(name.to_string(), id);
        id
    }

    /// Declares the arm `(s, a)` with its rewards. Every arm needs exactly
    /// one reward record; an arm never given transitions is terminal.
    pub fn reward(&mut self, s: StateId, a: ActionId, agent: f64, principal: f64) -> &mut Self {
        self.rewards.insert((s, a), (agent, principal));
        self
    }

    /// Appends one transition record to the arm `(s, a)`.
    pub fn transition(&mut self, s: StateId, a: ActionId, to: StateId, prob: f64) -> &mut Self {
        self.transitions.entry((s, a)).or_default().push((to, prob));
        self
    }

    /// Assembles the instance. Structural problems (missing reward records,
    /// out-of-range ids) are reported as validation errors.
    pub fn build(
        &mut self,
        initial: StateId,
        horizon: usize,
        budget: f64,
        allow_negative: bool,
    ) -> Result<MdpInstance, ParsError> {
        let mut violations = Vec::new();
        if self.state_names.is_empty() {
            violations.push("instance has no states".to_string());
        } else if initial >= self.state_names.len() {
            violations.push(format!("initial state id {initial} out of range"));
        }
        for (&(s, a), targets) in &self.transitions {
            if !self.rewards.contains_key(&(s, a)) {
                violations.push(format!(
                    "transition arm ({}, {}) has no reward record",
                    self.state_names[s], self.action_names[a]
                ));
            }
            for &(t, _) in targets {
                if t >= self.state_names.len() {
                    violations.push(format!("transition target id {t} out of range"));
                }
            }
        }
        if !violations.is_empty() {
            return Err(ParsError::Validation { violations });
        }
        let mut arms: Vec<Vec<ActionArm>> = vec![Vec::new(); self.state_names.len()];
        for (&(s, a), &(agent_reward, principal_reward)) in &self.rewards {
            arms[s].push(ActionArm {
                action: a,
                agent_reward,
                principal_reward,
                transitions: self.transitions.get(&(s, a)).cloned().unwrap_or_default(),
            });
        }
        // BTreeMap iteration already yields ascending action ids per state.
        Ok(MdpInstance {
            state_names: std::mem::take(&mut self.state_names),
            action_names: std::mem::take(&mut self.action_names),
            initial,
            horizon,
            budget,
            allow_negative,
            arms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn six_state_example_is_clean_acyclic_deterministic() {
        let inst = fixtures::six_state_example();
        let report = inst.validate();
        assert!(report.is_clean(), "violations: {:?}", report.violations);
        assert_eq!(report.layout, Layout::AcyclicDeterministic);
        assert!(report.unreachable.is_empty());
        // s4 has two predecessors (s1 and s2), so this is a DAG, not a tree.
        assert!(!inst.is_tree());
    }

    #[test]
    fn bad_probability_mass_is_reported() {
        let mut b = InstanceBuilder::new();
        let s0 = b.state("s0");
        let s1 = b.state("s1");
        let s2 = b.state("s2");
        let go = b.action("go");
        b.reward(s0, go, 0.5, 0.5);
        b.transition(s0, go, s1, 0.4);
        b.transition(s0, go, s2, 0.5);
        let inst = b.build(s0, 1, 0.0, false).unwrap();
        let report = inst.validate();
        assert_eq!(report.violations.len(), 1);
        assert!(
            report.violations[0].contains("probability mass 0.9 ≠ 1"),
            "got: {}",
            report.violations[0]
        );
    }

    #[test]
    fn negative_rewards_respect_the_allow_negative_flag() {
        let build = |reward: f64, allow: bool| {
            let mut b = InstanceBuilder::new();
            let s0 = b.state("s0");
            let a = b.action("a");
            b.reward(s0, a, reward, 0.0);
            b.build(s0, 1, 0.0, allow).unwrap()
        };
        assert!(!build(-0.5, false).validate().is_clean());
        assert!(build(-0.5, true).validate().is_clean());
        assert!(!build(-1.5, true).validate().is_clean());
        // Rewards above 1 are informational, not violations.
        assert!(build(5.0, false).validate().is_clean());
    }

    #[test]
    fn missing_reward_record_fails_construction() {
        let mut b = InstanceBuilder::new();
        let s0 = b.state("s0");
        let s1 = b.state("s1");
        let a = b.action("a");
        b.transition(s0, a, s1, 1.0);
        let err = b.build(s0, 1, 0.0, false).unwrap_err();
        assert!(matches!(err, ParsError::Validation { .. }));
    }

    #[test]
    fn two_state_cycle_layers_into_six_acyclic_states() {
        let inst = fixtures::two_state_cycle(3);
        assert_eq!(inst.layout(), Layout::CyclicDeterministic);
        let layered = inst.to_layer_graph().unwrap();
        assert_eq!(layered.num_states(), 6);
        assert_eq!(layered.layout(), Layout::AcyclicDeterministic);
        assert!(layered.validate().is_clean());
        assert_eq!(layered.state_name(layered.initial()), "a@1");
    }

    #[test]
    fn six_state_example_layers_into_twelve_states() {
        let inst = fixtures::six_state_example();
        let layered = inst.to_layer_graph().unwrap();
        assert_eq!(layered.num_states(), 12);
        assert!(layered.validate().is_clean());
        assert_eq!(layered.layout(), Layout::AcyclicDeterministic);
        // Non-initial layer-1 copies are unreachable by construction.
        assert!(!layered.validate().unreachable.is_empty());
    }

    #[test]
    fn layer_conversion_refuses_stochastic_instances() {
        let mut b = InstanceBuilder::new();
        let s0 = b.state("s0");
        let s1 = b.state("s1");
        let s2 = b.state("s2");
        let a = b.action("a");
        b.reward(s0, a, 0.1, 0.2);
        b.transition(s0, a, s1, 0.5);
        b.transition(s0, a, s2, 0.5);
        let inst = b.build(s0, 2, 0.0, false).unwrap();
        let err = inst.to_layer_graph().unwrap_err();
        assert!(err.to_string().contains("layer conversion defined for DDPs"));
    }

    #[test]
    fn diamond_is_not_a_tree() {
        let mut b = InstanceBuilder::new();
        let s0 = b.state("s0");
        let s1 = b.state("s1");
        let s2 = b.state("s2");
        let s3 = b.state("s3");
        for (from, to, name) in [(s0, s1, "l"), (s0, s2, "r"), (s1, s3, "l"), (s2, s3, "l")] {
            let a = b.action(name);
            b.reward(from, a, 0.1, 0.1);
            b.transition(from, a, to, 1.0);
        }
        let inst = b.build(s0, 2, 0.0, false).unwrap();
        assert!(!inst.is_tree());
        assert_eq!(inst.layout(), Layout::AcyclicDeterministic);
    }

    #[test]
    fn policy_induced_path_follows_choices() {
        let inst = fixtures::six_state_example();
        let mut policy = Policy::empty(inst.num_states());
        let left = inst.action_id("left").unwrap();
        policy.set(inst.state_id("s0").unwrap(), left);
        policy.set(inst.state_id("s1").unwrap(), left);
        let path = policy.induced_path(&inst).unwrap();
        let names: Vec<&str> = path.iter().map(|&s| inst.state_name(s)).collect();
        assert_eq!(names, ["s0", "s1", "s3"]);
    }
}
