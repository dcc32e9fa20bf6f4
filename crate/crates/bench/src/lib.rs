//! Shared inputs for the benchmarks.

use pumpsched_core::milp::ScheduleMilp;
use pumpsched_core::network::{canonical_network, Network};
use pumpsched_core::pipeline::{prepare, OptimizeConfig};

/// The canonical network truncated to `horizon` steps with its MILP.
pub fn canonical_problem(horizon: usize) -> (Network, ScheduleMilp) {
    let net = canonical_network().truncated(horizon).expect("horizon within the fixture");
    let (_, _, milp) = prepare(&net, &OptimizeConfig::default()).expect("canonical network builds");
    (net, milp)
}
