//! Independent oracles and generators backing the test suite: exhaustive
//! enumeration, an exact knapsack solver and its gadget embedding, seeded
//! instance generators, a shortest-path reduction, and the benchmark sweep.

pub mod brute_force;
pub mod generators;
pub mod knapsack;
pub mod sweep;
pub mod wcspp;

pub use brute_force::{
    brute_force_catalog, brute_force_optimal, path_catalog, BruteForceSolution, PathIndex,
    PathOutcome, PolicyOutcome, DEFAULT_ENUMERATION_CAP,
};
pub use generators::{gen_layer_graph, gen_random_tree};
pub use knapsack::{
    gen_knapsack_gadget, gen_knapsack_spec, knapsack_exact, KnapsackGadget, KnapsackSpec,
};
pub use sweep::{simulate, SweepConfig, SweepRecord, SweepReport};
pub use wcspp::{
    cost_from_principal, gen_wcspp, wcspp_exhaustive, wcspp_to_pars, WcsppConversion, WcsppSpec,
};
