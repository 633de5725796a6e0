//! JSON documents for instances, bonuses, and solutions, plus file helpers.
//!
//! Instance documents carry `states` (string ids), `initial`, `horizon`,
//! `budget`, optional `allow_negative`, `transitions` records
//! `{from, action, to, prob}`, and `rewards` records
//! `{state, action, agent, principal}`. An action exists at a state when a
//! reward record declares it; an arm with no transition records is
//! terminal, and every transition's arm must have a reward record.
//! Validation (probability sums, reward ranges) runs on load.
//!
//! Serialization is canonical — states in id order, arms in action-id
//! order, map keys sorted — so identical inputs produce byte-identical
//! documents.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::mdp::{InstanceBuilder, MdpInstance, Policy};
use crate::shaping::BonusFunction;
use crate::{ParsError, Solution};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    from: String,
    action: String,
    to: String,
    prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardRecord {
    state: String,
    action: String,
    agent: f64,
    principal: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    states: Vec<String>,
    initial: String,
    horizon: usize,
    budget: f64,
    #[serde(default)]
    allow_negative: bool,
    #[serde(default)]
    transitions: Vec<TransitionRecord>,
    rewards: Vec<RewardRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BonusRecord {
    state: String,
    action: String,
    bonus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BonusDoc {
    entries: Vec<BonusRecord>,
    /// Advisory on disk; always recomputed from the entries on load.
    total: f64,
}

/// On-disk form of a [`Solution`] with names instead of numeric ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub algorithm: String,
    pub principal_value: f64,
    pub agent_value: f64,
    pub budget_used: f64,
    pub epsilon: f64,
    pub effective_budget: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent_shortfall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<crate::BiCriteriaCertificate>,
    pub bonus: BTreeMap<String, f64>,
    pub bonus_total: f64,
    pub policy: BTreeMap<String, String>,
}

/// Parses an instance document, enforcing the structural rules and running
/// full validation.
pub fn parse_instance(text: &str) -> Result<MdpInstance, ParsError> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    let mut ix: HashMap<&str, usize> = HashMap::with_capacity(doc.states.len());
    for (i, name) in doc.states.iter().enumerate() {
        if ix.insert(name, i).is_some() {
            return Err(ParsError::Parse(format!("duplicate state id \"{name}\"")));
        }
    }
    let lookup = |name: &str, role: &str| {
        ix.get(name).copied().ok_or_else(|| {
            ParsError::Parse(format!("{role} references unknown state \"{name}\""))
        })
    };
    let initial = lookup(&doc.initial, "initial")?;

    let mut b = InstanceBuilder::new();
    for name in &doc.states {
        b.state(name);
    }
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for r in &doc.rewards {
        let s = lookup(&r.state, "reward record")?;
        let a = b.action(&r.action);
        if !seen.insert((s, a)) {
            return Err(ParsError::Parse(format!(
                "duplicate reward record for ({}, {})",
                r.state, r.action
            )));
        }
        b.reward(s, a, r.agent, r.principal);
    }
    for t in &doc.transitions {
        let s = lookup(&t.from, "transition")?;
        let to = lookup(&t.to, "transition")?;
        let a = b.action(&t.action);
        b.transition(s, a, to, t.prob);
    }
    let instance = b.build(initial, doc.horizon, doc.budget, doc.allow_negative)?;
    let report = instance.validate();
    if !report.is_clean() {
        return Err(ParsError::Validation {
            violations: report.violations,
        });
    }
    Ok(instance)
}

fn instance_doc(instance: &MdpInstance) -> InstanceDoc {
    let mut transitions = Vec::new();
    let mut rewards = Vec::new();
    for s in 0..instance.num_states() {
        for arm in instance.arms(s) {
            rewards.push(RewardRecord {
                state: instance.state_name(s).to_string(),
                action: instance.action_name(arm.action).to_string(),
                agent: arm.agent_reward,
                principal: arm.principal_reward,
            });
            for &(to, prob) in &arm.transitions {
                transitions.push(TransitionRecord {
                    from: instance.state_name(s).to_string(),
                    action: instance.action_name(arm.action).to_string(),
                    to: instance.state_name(to).to_string(),
                    prob,
                });
            }
        }
    }
    InstanceDoc {
        states: (0..instance.num_states())
            .map(|s| instance.state_name(s).to_string())
            .collect(),
        initial: instance.state_name(instance.initial()).to_string(),
        horizon: instance.horizon(),
        budget: instance.budget(),
        allow_negative: instance.allow_negative(),
        transitions,
        rewards,
    }
}

/// Canonical pretty-printed JSON for an instance.
pub fn instance_to_json(instance: &MdpInstance) -> Result<String, ParsError> {
    let mut text = serde_json::to_string_pretty(&instance_doc(instance))?;
    text.push('\n');
    Ok(text)
}

pub fn load_instance(path: &Path) -> Result<MdpInstance, ParsError> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn save_instance(instance: &MdpInstance, path: &Path) -> Result<(), ParsError> {
    Ok(std::fs::write(path, instance_to_json(instance)?)?)
}

/// Parses a bonus document against an instance. Entries must name existing
/// (state, action) arms; negative amounts are validation failures; the
/// total is recomputed from the entries (the stored field is advisory).
pub fn parse_bonus(text: &str, instance: &MdpInstance) -> Result<BonusFunction, ParsError> {
    let doc: BonusDoc = serde_json::from_str(text)?;
    let mut bonus = BonusFunction::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for e in &doc.entries {
        let s = instance.state_id(&e.state).ok_or_else(|| {
            ParsError::Parse(format!("bonus entry references unknown state \"{}\"", e.state))
        })?;
        let a = instance.action_id(&e.action).ok_or_else(|| {
            ParsError::Parse(format!(
                "bonus entry references unknown action \"{}\"",
                e.action
            ))
        })?;
        if instance.arm(s, a).is_none() {
            return Err(ParsError::Parse(format!(
                "bonus entry targets ({}, {}), but that state has no such action",
                e.state, e.action
            )));
        }
        if !seen.insert((s, a)) {
            return Err(ParsError::Parse(format!(
                "duplicate bonus entry for ({}, {})",
                e.state, e.action
            )));
        }
        if !e.bonus.is_finite() || e.bonus < 0.0 {
            return Err(ParsError::Validation {
                violations: vec![format!(
                    "bonus {} at ({}, {}) must be finite and ≥ 0",
                    e.bonus, e.state, e.action
                )],
            });
        }
        bonus.insert(s, a, e.bonus);
    }
    Ok(bonus)
}

fn bonus_doc(bonus: &BonusFunction, instance: &MdpInstance) -> BonusDoc {
    BonusDoc {
        entries: bonus
            .iter()
            .map(|(s, a, amount)| BonusRecord {
                state: instance.state_name(s).to_string(),
                action: instance.action_name(a).to_string(),
                bonus: amount,
            })
            .collect(),
        total: bonus.total(),
    }
}

pub fn bonus_to_json(bonus: &BonusFunction, instance: &MdpInstance) -> Result<String, ParsError> {
    let mut text = serde_json::to_string_pretty(&bonus_doc(bonus, instance))?;
    text.push('\n');
    Ok(text)
}

pub fn load_bonus(path: &Path, instance: &MdpInstance) -> Result<BonusFunction, ParsError> {
    parse_bonus(&std::fs::read_to_string(path)?, instance)
}

pub fn save_bonus(
    bonus: &BonusFunction,
    instance: &MdpInstance,
    path: &Path,
) -> Result<(), ParsError> {
    Ok(std::fs::write(path, bonus_to_json(bonus, instance)?)?)
}

/// Renders a solution with names resolved against its instance.
pub fn solution_doc(solution: &Solution, instance: &MdpInstance) -> SolutionDoc {
    let mut bonus = BTreeMap::new();
    for (s, a, amount) in solution.bonus.iter() {
        bonus.insert(
            format!("{}/{}", instance.state_name(s), instance.action_name(a)),
            amount,
        );
    }
    let mut policy = BTreeMap::new();
    for s in 0..solution.policy.num_states() {
        if let Some(a) = solution.policy.choice(s) {
            policy.insert(
                instance.state_name(s).to_string(),
                instance.action_name(a).to_string(),
            );
        }
    }
    SolutionDoc {
        algorithm: solution.algorithm.to_string(),
        principal_value: solution.principal_value,
        agent_value: solution.agent_value,
        budget_used: solution.budget_used,
        epsilon: solution.epsilon,
        effective_budget: solution.effective_budget,
        agent_shortfall: solution.agent_shortfall,
        certificate: solution.certificate.clone(),
        bonus_total: solution.bonus.total(),
        bonus,
        policy,
    }
}

pub fn solution_to_json(solution: &Solution, instance: &MdpInstance) -> Result<String, ParsError> {
    let mut text = serde_json::to_string_pretty(&solution_doc(solution, instance))?;
    text.push('\n');
    Ok(text)
}

pub fn save_solution(
    solution: &Solution,
    instance: &MdpInstance,
    path: &Path,
) -> Result<(), ParsError> {
    Ok(std::fs::write(path, solution_to_json(solution, instance)?)?)
}

pub fn parse_solution(text: &str) -> Result<SolutionDoc, ParsError> {
    Ok(serde_json::from_str(text)?)
}

/// Rebuilds the recorded policy of a solution document against an instance,
/// resolving names back to ids. Unknown names or a choice of an action the
/// state does not carry are parse errors.
pub fn doc_policy(doc: &SolutionDoc, instance: &MdpInstance) -> Result<Policy, ParsError> {
    let mut policy = Policy::empty(instance.num_states());
    for (state, action) in &doc.policy {
        let s = instance
            .state_id(state)
            .ok_or_else(|| ParsError::Parse(format!("policy names unknown state {state:?}")))?;
        let a = instance
            .action_id(action)
            .ok_or_else(|| ParsError::Parse(format!("policy names unknown action {action:?}")))?;
        if instance.arm(s, a).is_none() {
            return Err(ParsError::Parse(format!(
                "policy assigns state {state:?} the action {action:?}, which it has no arm for"
            )));
        }
        policy.set(s, a);
    }
    Ok(policy)
}
