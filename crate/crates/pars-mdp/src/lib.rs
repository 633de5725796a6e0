//! Principal-agent reward shaping over finite-horizon MDPs.
//!
//! A Principal wants an Agent to follow a particular policy in a finite-horizon
//! MDP, but the Agent maximizes his own reward function. The Principal may add a
//! nonnegative *bonus* to selected (state, action) pairs, subject to a total
//! budget, and the Agent then plays a best response (breaking exact ties in the
//! Principal's favor). This crate computes budget-optimal bonuses:
//!
//! * [`stum`] — budget-grid dynamic programming over stochastic trees, with the
//!   knapsack-style child-budget allocation subroutine and bonus extraction.
//! * [`dfar`] — Pareto-frontier propagation for deterministic acyclic
//!   instances, plus the discretize-and-inflate bi-criteria wrapper.
//! * [`shaping`] — best responses, advantage gaps, minimal implementations,
//!   implementability tests, and tie-breaking perturbations.
//! * [`mdp`] / [`eval`] — instance representation, validation, layout
//!   classification, policy evaluation, and layer-graph unrolling of cyclic
//!   deterministic processes.
//! * [`oracle`] — independent ground-truth oracles (policy enumeration, exact
//!   0/1 knapsack), instance generators, the weight-constrained shortest-path
//!   converter, and the batch simulation sweep.
//! * [`io`] — JSON instance/bonus/solution documents and the sweep CSV.
//!
//! All solvers are pure functions of their inputs; single-threaded runs are
//! bit-deterministic. The `parallel` feature (default on) lets the sweep fan
//! out across instances with rayon; `--no-default-features` builds a fully
//! sequential crate with the same results.

pub mod dfar;
mod error;
pub mod eval;
pub mod fixtures;
pub mod io;
pub mod mdp;
pub mod oracle;
pub mod shaping;
pub mod stum;

pub use error::ParsError;

/// Absolute tolerance for real comparisons: optimality ties, probability
/// sums, value equality. Fixed so tie-breaking is reproducible.
pub const ETA: f64 = 1e-9;

/// Which solver produced a [`Solution`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Budget-grid tree DP, strict agent.
    Stum,
    /// Budget-grid tree DP, δ-approximate agent.
    StumDelta,
    /// Exact Pareto-frontier solve on ε-discrete rewards.
    Dfar,
    /// Discretize-and-inflate wrapper around the frontier solve.
    DfarBiCriteria,
    /// Gap-cost frontier for a δ-approximate agent at the original budget.
    DfarDelta,
    /// True-value frontier with ε-resolution pruning (sweep mode).
    DfarPruned,
    /// Exhaustive policy-enumeration oracle.
    BruteForce,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Algorithm::Stum => "stum",
            Algorithm::StumDelta => "stum-delta",
            Algorithm::Dfar => "dfar",
            Algorithm::DfarBiCriteria => "dfar-bi-criteria",
            Algorithm::DfarDelta => "dfar-delta",
            Algorithm::DfarPruned => "dfar-pruned",
            Algorithm::BruteForce => "brute-force",
        };
        f.write_str(name)
    }
}

/// Result of any solver: the bonus, the policy it implements, and the values
/// realized at the initial state.
#[derive(Debug, Clone)]
pub struct Solution {
    pub algorithm: Algorithm,
    pub bonus: shaping::BonusFunction,
    pub policy: mdp::Policy,
    /// Principal's value at the initial state under the returned policy.
    pub principal_value: f64,
    /// Agent's value at the initial state under rewards + bonus.
    pub agent_value: f64,
    /// Total bonus mass actually placed.
    pub budget_used: f64,
    /// Grid/discretization step the solver ran with (0 for brute force).
    pub epsilon: f64,
    /// Budget the solver optimized against (after any inflation).
    pub effective_budget: f64,
    /// For δ-variants: how far the agent's value under the bonus falls short
    /// of his best response, i.e. the slack a δ-approximate agent absorbs.
    pub agent_shortfall: Option<f64>,
    /// For the bi-criteria wrapper: the guarantee actually certified.
    pub certificate: Option<BiCriteriaCertificate>,
}

/// What the bi-criteria wrapper certifies about its output.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BiCriteriaCertificate {
    /// Principal value of the returned policy under the ORIGINAL rewards.
    pub principal_value_original: f64,
    /// Additive slack H·ε: the value is guaranteed ≥ optimum(B) − slack.
    pub additive_slack: f64,
    /// Budget cap the bonus respects: B + H·ε.
    pub budget_cap: f64,
}
