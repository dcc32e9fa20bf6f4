//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use pumpsched_core::linearize::{linearize, BreakpointSource, LinearizedModel, OperatingPoint, PipePoint};
use pumpsched_core::network::{
    canonical_network, HeadCurve, Inputs, Network, NetworkFile, Node, NodeKind, Pipe, PowerCurve, PumpGroup, PumpModel,
    Tank, SCHEMA_VERSION,
};

/// The canonical pump model.
pub fn canonical_model() -> PumpModel {
    canonical_network().pump_groups()[0].model.clone()
}

fn node(id: &str, kind: NodeKind, elevation: f64) -> Node {
    Node { id: id.into(), kind, elevation }
}

fn pipe(id: String, from: &str, to: &str, resistance: f64) -> Pipe {
    Pipe { id, from_node: from.into(), to_node: to.into(), resistance }
}

/// A random small network: a reservoir feeding one or two parallel pump
/// groups of one to three pumps, a hub node, one or two tanks and one or
/// two demand nodes, over a horizon of one to four hourly steps.
pub fn fuzz_network(seed: u64) -> Network {
    let mut rng = StdRng::seed_from_u64(seed);
    let base = canonical_model();
    let n_groups = rng.gen_range(1..=2);
    let n_tanks = rng.gen_range(1..=2);
    let n_demands = rng.gen_range(1..=2);
    let horizon = rng.gen_range(1..=4);

    let mut nodes = vec![
        node("R", NodeKind::Reservoir, 210.0),
        node("S", NodeKind::Connection, 205.0),
        node("P", NodeKind::Connection, 205.0),
        node("H", NodeKind::Connection, 215.0),
    ];
    let mut pipes = vec![
        pipe("suction".into(), "R", "S", 1e-4 * rng.gen_range(0.5..2.0)),
        pipe("riser".into(), "P", "H", 1e-3 * rng.gen_range(0.5..2.0)),
    ];
    let mut tanks = Vec::new();
    for t in 0..n_tanks {
        let id = format!("T{t}");
        nodes.push(node(&id, NodeKind::Tank, rng.gen_range(225.0..235.0)));
        pipes.push(pipe(format!("fill{t}"), "H", &id, 2e-4 * rng.gen_range(0.5..2.0)));
        let mut tank = Tank::from_diameter(id, rng.gen_range(10.0..20.0));
        tank.level_min = 0.5;
        tank.level_max = 5.0;
        tank.level_init = rng.gen_range(1.5..3.5);
        tank.final_level_tolerance = 0.05;
        tanks.push(tank);
    }
    let mut demands = BTreeMap::new();
    for d in 0..n_demands {
        let id = format!("D{d}");
        nodes.push(node(&id, NodeKind::Demand, 200.0));
        pipes.push(pipe(format!("main{d}"), "H", &id, 2e-3 * rng.gen_range(0.5..2.0)));
        demands.insert(id, (0..horizon).map(|_| rng.gen_range(10.0..30.0)).collect());
    }
    let pump_groups = (0..n_groups)
        .map(|g| {
            let mut model = base.clone();
            model.head.c *= rng.gen_range(0.98..1.05);
            PumpGroup { id: format!("G{g}"), from_node: "S".into(), to_node: "P".into(), n_pumps: rng.gen_range(1..=3), model }
        })
        .collect();
    let tariff = (0..horizon).map(|_| [0.08, 0.16, 0.24][rng.gen_range(0..3)]).collect();
    let file = NetworkFile {
        schema_version: SCHEMA_VERSION,
        name: Some(format!("fuzz{seed}")),
        nodes,
        pipes,
        pump_groups,
        tanks,
        inputs: Inputs { horizon, dt_hours: 1.0, demands, tariff },
    };
    Network::new(file).expect("fuzzed network is valid")
}

/// Surrogates for `net` from random pipe breakpoints, without a
/// simulation.
pub fn fuzz_linearization(net: &Network, seed: u64) -> LinearizedModel {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let pipes = net
        .pipes()
        .iter()
        .map(|p| {
            let q1: f64 = rng.gen_range(5.0..40.0);
            PipePoint { q1, dh1: p.resistance * q1 * q1, q2: 2.5 * q1, source: BreakpointSource::ReferenceStep }
        })
        .collect();
    let pumps = net.pump_groups().iter().map(|g| (g.model.q_nominal, g.model.s_nominal)).collect();
    linearize(net, &OperatingPoint { reference_step: 0, pipes, pumps }).expect("fuzzed surrogates")
}

/// Random cubic power curves and quadratic head curves in the range of
/// real centrifugal pumps.
pub fn random_model(rng: &mut StdRng) -> PumpModel {
    let head = HeadCurve { a: -rng.gen_range(1e-4..5e-3), b: -rng.gen_range(0.0..1.0), c: rng.gen_range(20.0..60.0) };
    // Positive root of the nominal-speed head curve.
    let q_int = (-head.b - (head.b * head.b - 4.0 * head.a * head.c).sqrt()) / (2.0 * head.a);
    PumpModel {
        power: PowerCurve {
            a3: -rng.gen_range(1e-6..5e-5),
            a2: -rng.gen_range(1e-4..1e-2),
            a1: rng.gen_range(0.1..1.0),
            a0: rng.gen_range(0.5..5.0),
        },
        head,
        s_min: rng.gen_range(0.6..0.9),
        s_max: rng.gen_range(1.05..1.3),
        q_nominal: rng.gen_range(0.3..0.7) * q_int,
        s_nominal: 1.0,
    }
}

/// Relative difference with an absolute floor of 1 on the scale.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
