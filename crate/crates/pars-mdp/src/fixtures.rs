//! Small hand-built instances used throughout the documentation and tests.

use crate::mdp::{InstanceBuilder, MdpInstance};

/// The six-state worked example: a deterministic binary tree of depth 2 with
/// horizon 2 and budget 1.
///
/// ```text
///            s0
///     left /    \ right
///     (5,2)      (4,3)
///        s1        s2
///   left/ \right left/ \right
///  (2,1.5) (3,0) (3,0) (2,2)
///     s3    s4    s4'   s5        (terminal)
/// ```
///
/// Rewards are written (agent, principal). The agent's default path is
/// (s0,s1,s4) worth 8 to him and 2 to the principal; with budget 1 the best
/// implementable path is (s0,s1,s3) worth 3.5 to the principal, and with
/// unlimited budget (s0,s2,s5) worth 5 at bonus cost 2.
pub fn six_state_example() -> MdpInstance {
    let mut b = InstanceBuilder::new();
    let s: Vec<_> = (0..6).map(|i| b.state(&format!("s{i}"))).collect();
    let left = b.action("left");
    let right = b.action("right");

    b.reward(s[0], left, 5.0, 2.0).transition(s[0], left, s[1], 1.0);
    b.reward(s[0], right, 4.0, 3.0).transition(s[0], right, s[2], 1.0);
    b.reward(s[1], left, 2.0, 1.5).transition(s[1], left, s[3], 1.0);
    b.reward(s[1], right, 3.0, 0.0).transition(s[1], right, s[4], 1.0);
    b.reward(s[2], left, 3.0, 0.0).transition(s[2], left, s[4], 1.0);
    b.reward(s[2], right, 2.0, 2.0).transition(s[2], right, s[5], 1.0);

    b.build(s[0], 2, 1.0, false)
        .expect("six-state example is well-formed")
}

/// A two-state deterministic cycle a ⇄ b with the given horizon — the
/// smallest instance that needs layer-graph unrolling.
pub fn two_state_cycle(horizon: usize) -> MdpInstance {
    let mut b = InstanceBuilder::new();
    let a = b.state("a");
    let bb = b.state("b");
    let stay = b.action("hop");
    let back = b.action("back");
    b.reward(a, stay, 0.6, 0.1).transition(a, stay, bb, 1.0);
    b.reward(a, back, 0.2, 0.9).transition(a, back, a, 1.0);
    b.reward(bb, stay, 0.3, 0.5).transition(bb, stay, a, 1.0);
    b.reward(bb, back, 0.8, 0.2).transition(bb, back, bb, 1.0);
    b.build(a, horizon, 0.5, false)
        .expect("two-state cycle is well-formed")
}
