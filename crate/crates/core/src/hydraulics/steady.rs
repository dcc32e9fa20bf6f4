//! Steady-state solve of the mixed head/flow network equations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::network::{Element, Network};

use super::HydraulicError;

/// Control of one pump group during a step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupControl {
    pub n_active: u32,
    pub speed: f64,
}

impl GroupControl {
    pub const OFF: GroupControl = GroupControl { n_active: 0, speed: 0.0 };

    pub fn is_on(&self) -> bool {
        self.n_active > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydraulicState {
    /// Heads at calculated nodes, ordered as `Network::calculated_nodes`.
    pub heads: Vec<f64>,
    /// Flows per element; zero for inactive pump groups.
    pub flows: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Flow floor in the headloss derivative, L/s.
    pub flow_floor: f64,
    pub regularization_retries: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tolerance: 1e-8,
            max_iterations: 50,
            max_halvings: 10,
            flow_floor: 1e-6,
            regularization_retries: 3,
        }
    }
}

/// Solves one hydraulic snapshot for given fixed heads, demands and pump
/// group controls.
pub fn solve_steady_state(
    network: &Network,
    fixed_heads: &[f64],
    demand: &[f64],
    controls: &[GroupControl],
    warm_start: Option<&HydraulicState>,
) -> Result<HydraulicState, HydraulicError> {
    solve_with(network, fixed_heads, demand, controls, warm_start, &NewtonOptions::default())
}

struct System<'a> {
    network: &'a Network,
    fixed_heads: &'a [f64],
    controls: &'a [GroupControl],
    /// Active elements, in element order.
    elements: Vec<usize>,
    /// Calculated nodes (row index into `calculated_nodes`) solved for.
    unknown_nodes: Vec<usize>,
    /// Position of a calculated-node row among the unknown heads.
    head_slot: Vec<Option<usize>>,
    /// Demand per unknown node.
    demand: Vec<f64>,
    /// node index -> (is_calculated, row)
    node_row: Vec<(bool, usize)>,
}

impl System<'_> {
    fn size(&self) -> usize {
        self.elements.len() + self.unknown_nodes.len()
    }

    fn head(&self, x: &DVector<f64>, node: usize) -> (f64, Option<usize>) {
        let (calc, row) = self.node_row[node];
        if calc {
            let slot = self.head_slot[row].expect("active element touches an unknown node");
            let col = self.elements.len() + slot;
            (x[col], Some(col))
        } else {
            (self.fixed_heads[row], None)
        }
    }

    /// Fills residual and (optionally) the Jacobian at `x`.
    fn evaluate(&self, x: &DVector<f64>, jac: Option<&mut DMatrix<f64>>, floor: f64) -> DVector<f64> {
        let m = self.size();
        let ne = self.elements.len();
        let mut f = DVector::zeros(m);
        let mut jac = jac;
        if let Some(j) = jac.as_deref_mut() {
            j.fill(0.0);
        }
        for (r, &e) in self.elements.iter().enumerate() {
            let q = x[r];
            let (o, d) = self.network.endpoints(e);
            let (ho, co) = self.head(x, o);
            let (hd, cd) = self.head(x, d);
            let (value, slope) = match self.network.element(e) {
                Element::Pipe(p) => {
                    let res = self.network.pipes()[p].resistance;
                    (-res * q.abs() * q, -2.0 * res * q.abs().max(floor))
                }
                Element::PumpGroup(g) => {
                    let model = &self.network.pump_groups()[g].model;
                    let ctl = self.controls[g];
                    let n = ctl.n_active as f64;
                    (
                        model.group_head(q, n, ctl.speed),
                        model.group_head_slope(q, n, ctl.speed),
                    )
                }
            };
            f[r] = ho - hd + value;
            if let Some(j) = jac.as_deref_mut() {
                j[(r, r)] = slope;
                if let Some(c) = co {
                    j[(r, c)] += 1.0;
                }
                if let Some(c) = cd {
                    j[(r, c)] -= 1.0;
                }
            }
        }
        let inc = &self.network.incidence().calculated;
        for (slot, &row) in self.unknown_nodes.iter().enumerate() {
            let mut inflow = 0.0;
            for (r, &e) in self.elements.iter().enumerate() {
                let l = inc[row][e];
                if l != 0 {
                    inflow -= l as f64 * x[r];
                    if let Some(j) = jac.as_deref_mut() {
                        j[(ne + slot, r)] = -(l as f64);
                    }
                }
            }
            f[ne + slot] = inflow - self.demand[slot];
        }
        f
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn solve_with(
    network: &Network,
    fixed_heads: &[f64],
    demand: &[f64],
    controls: &[GroupControl],
    warm_start: Option<&HydraulicState>,
    opts: &NewtonOptions,
) -> Result<HydraulicState, HydraulicError> {
    let calc = network.calculated_nodes();
    let fixed = network.fixed_nodes();
    if fixed_heads.len() != fixed.len() {
        return Err(HydraulicError::InvalidInput(format!(
            "expected {} fixed heads, got {}",
            fixed.len(),
            fixed_heads.len()
        )));
    }
    if demand.len() != calc.len() {
        return Err(HydraulicError::InvalidInput(format!(
            "expected {} demands, got {}",
            calc.len(),
            demand.len()
        )));
    }
    if controls.len() != network.pump_groups().len() {
        return Err(HydraulicError::InvalidInput(format!(
            "expected {} group controls, got {}",
            network.pump_groups().len(),
            controls.len()
        )));
    }
    for (g, ctl) in controls.iter().enumerate() {
        if ctl.is_on() && !(ctl.speed > 0.0) {
            return Err(HydraulicError::InvalidInput(format!(
                "group `{}` is on with non-positive speed",
                network.pump_groups()[g].id
            )));
        }
    }

    let n_nodes = network.nodes().len();
    let mut node_row = vec![(false, 0); n_nodes];
    for (r, &n) in calc.iter().enumerate() {
        node_row[n] = (true, r);
    }
    for (r, &n) in fixed.iter().enumerate() {
        node_row[n] = (false, r);
    }

    let active: Vec<usize> = (0..network.n_elements())
        .filter(|&e| match network.element(e) {
            Element::Pipe(_) => true,
            Element::PumpGroup(g) => controls[g].is_on(),
        })
        .collect();

    // Components over active elements; calculated nodes cut off from every
    // fixed head carry no flow and keep their elevation as head.
    let mut parent: Vec<usize> = (0..n_nodes).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &e in &active {
        let (o, d) = network.endpoints(e);
        let (a, b) = (find(&mut parent, o), find(&mut parent, d));
        if a != b {
            parent[a] = b;
        }
    }
    let mut grounded = vec![false; n_nodes];
    for &f in fixed {
        let r = find(&mut parent, f);
        grounded[r] = true;
    }
    let mut head_slot = vec![None; calc.len()];
    let mut unknown_nodes = Vec::new();
    let mut node_demand = Vec::new();
    for (r, &n) in calc.iter().enumerate() {
        let root = find(&mut parent, n);
        if grounded[root] {
            head_slot[r] = Some(unknown_nodes.len());
            unknown_nodes.push(r);
            node_demand.push(demand[r]);
        } else if demand[r] > 0.0 {
            return Err(HydraulicError::InfeasibleHydraulics(format!(
                "node `{}` has demand but no path to a reservoir or tank",
                network.nodes()[n].id
            )));
        }
    }
    let elements: Vec<usize> = active
        .into_iter()
        .filter(|&e| {
            let (o, _) = network.endpoints(e);
            grounded[find(&mut parent, o)]
        })
        .collect();

    let system = System {
        network,
        fixed_heads,
        controls,
        elements,
        unknown_nodes,
        head_slot,
        demand: node_demand,
        node_row,
    };
    let m = system.size();
    let ne = system.elements.len();

    let mut x = DVector::zeros(m);
    match warm_start {
        Some(ws) if ws.flows.len() == network.n_elements() && ws.heads.len() == calc.len() => {
            for (r, &e) in system.elements.iter().enumerate() {
                x[r] = ws.flows[e];
            }
            for (slot, &row) in system.unknown_nodes.iter().enumerate() {
                x[ne + slot] = ws.heads[row];
            }
        }
        _ => {
            let mean = fixed_heads.iter().sum::<f64>() / fixed_heads.len() as f64;
            for slot in 0..system.unknown_nodes.len() {
                x[ne + slot] = mean;
            }
        }
    }

    let finish = |x: &DVector<f64>, iterations: usize, residual: f64| {
        let mut heads: Vec<f64> = calc.iter().map(|&n| network.nodes()[n].elevation).collect();
        let mut flows = vec![0.0; network.n_elements()];
        for (r, &e) in system.elements.iter().enumerate() {
            flows[e] = x[r];
        }
        for (slot, &row) in system.unknown_nodes.iter().enumerate() {
            heads[row] = x[ne + slot];
        }
        HydraulicState { heads, flows, iterations, residual }
    };

    if m == 0 {
        return Ok(finish(&x, 0, 0.0));
    }

    let mut jac = DMatrix::zeros(m, m);
    let mut f = system.evaluate(&x, None, opts.flow_floor);
    let mut res = inf_norm(&f);
    for iter in 0..opts.max_iterations {
        if res <= opts.tolerance {
            return Ok(finish(&x, iter, res));
        }
        let mut step = None;
        let mut floor = opts.flow_floor;
        for _ in 0..=opts.regularization_retries {
            system.evaluate(&x, Some(&mut jac), floor);
            if let Some(dx) = jac.clone().lu().solve(&(-&f)) {
                if dx.iter().all(|v| v.is_finite()) {
                    step = Some(dx);
                    break;
                }
            }
            floor *= 1e3;
        }
        let dx = step.ok_or(HydraulicError::SingularJacobian)?;
        let mut lambda = 1.0;
        let mut trial = &x + &dx;
        let mut f_trial = system.evaluate(&trial, None, opts.flow_floor);
        let mut res_trial = inf_norm(&f_trial);
        let mut halvings = 0;
        while res_trial > res && halvings < opts.max_halvings {
            lambda *= 0.5;
            halvings += 1;
            trial = &x + &dx * lambda;
            f_trial = system.evaluate(&trial, None, opts.flow_floor);
            res_trial = inf_norm(&f_trial);
        }
        x = trial;
        f = f_trial;
        res = res_trial;
    }
    if res <= opts.tolerance {
        return Ok(finish(&x, opts.max_iterations, res));
    }
    Err(HydraulicError::NonConvergence { iterations: opts.max_iterations, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::*;

    fn single_pipe(demand: f64) -> Network {
        Network::new(NetworkFile {
            schema_version: 1,
            name: None,
            nodes: vec![
                Node { id: "R".into(), kind: NodeKind::Reservoir, elevation: 10.0 },
                Node { id: "J".into(), kind: NodeKind::Demand, elevation: 0.0 },
            ],
            pipes: vec![Pipe { id: "P".into(), from_node: "R".into(), to_node: "J".into(), resistance: 1.0 }],
            pump_groups: vec![],
            tanks: vec![],
            inputs: Inputs {
                horizon: 1,
                dt_hours: 1.0,
                demands: [("J".to_string(), vec![demand])].into_iter().collect(),
                tariff: vec![1.0],
            },
        })
        .unwrap()
    }

    #[test]
    fn one_pipe_hand_solution() {
        let net = single_pipe(2.0);
        let st = solve_steady_state(&net, &[10.0], &[2.0], &[], None).unwrap();
        assert!((st.flows[0] - 2.0).abs() < 1e-10);
        assert!((st.heads[0] - 6.0).abs() < 1e-9);
        assert!(st.residual <= 1e-8);
    }

    #[test]
    fn zero_demand_gives_static_heads() {
        let net = single_pipe(0.0);
        let st = solve_steady_state(&net, &[10.0], &[0.0], &[], None).unwrap();
        assert!(st.flows[0].abs() < 1e-8);
        assert!((st.heads[0] - 10.0).abs() < 1e-8);
    }

    #[test]
    fn wrong_input_lengths_are_rejected() {
        let net = single_pipe(1.0);
        assert!(matches!(
            solve_steady_state(&net, &[10.0, 1.0], &[1.0], &[], None),
            Err(HydraulicError::InvalidInput(_))
        ));
    }
}
