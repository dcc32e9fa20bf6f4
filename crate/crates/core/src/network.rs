//! Network model: nodes, pipes, pump groups, tanks and the time-varying
//! inputs, plus loading and validation of the JSON network file.
//!
//! Units are fixed throughout the crate: flow in L/s, head and elevation in
//! m, power in kW, tariff in currency/kWh and the time step in hours. Pipe
//! resistance is expressed in m/(L/s)^2 so that the headloss of a pipe is
//! `R |q| q` with `q` in L/s. Conversion of flow to m^3/s and hours to
//! seconds happens only in the simulator and the MILP builder.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("topology error: {0}")]
    Topology(String),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> NetworkError {
    NetworkError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Connection,
    Demand,
    Reservoir,
    Tank,
}

impl NodeKind {
    /// Reservoirs and tanks have a known head in every hydraulic solve.
    pub fn is_fixed_head(self) -> bool {
        matches!(self, NodeKind::Reservoir | NodeKind::Tank)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// For a reservoir this is also its (constant) head.
    pub elevation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    /// Headloss coefficient in m/(L/s)^2.
    pub resistance: f64,
}

/// Cubic power curve of a single pump at nominal speed, kW against L/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl PowerCurve {
    pub fn eval(&self, q: f64) -> f64 {
        ((self.a3 * q + self.a2) * q + self.a1) * q + self.a0
    }
}

/// Quadratic head curve `H = a q^2 + b q + c` of a single pump at nominal speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

fn default_nominal_speed() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpModel {
    pub power: PowerCurve,
    pub head: HeadCurve,
    pub s_min: f64,
    pub s_max: f64,
    /// Best-efficiency flow at nominal speed, L/s.
    pub q_nominal: f64,
    #[serde(default = "default_nominal_speed")]
    pub s_nominal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpGroup {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub n_pumps: u32,
    pub model: PumpModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    pub node: String,
    /// Cross-section area, m^2 (cylindrical tanks only).
    pub area: f64,
    pub level_min: f64,
    pub level_max: f64,
    pub level_init: f64,
    /// Allowed deviation of the final level from its target, m.
    pub final_level_tolerance: f64,
}

impl Tank {
    pub fn from_diameter(node: impl Into<String>, diameter: f64) -> Tank {
        Tank {
            node: node.into(),
            area: std::f64::consts::PI * diameter * diameter / 4.0,
            level_min: 0.0,
            level_max: 0.0,
            level_init: 0.0,
            final_level_tolerance: 0.0,
        }
    }

    pub fn diameter(&self) -> f64 {
        (4.0 * self.area / std::f64::consts::PI).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub horizon: usize,
    pub dt_hours: f64,
    /// Demand series in L/s keyed by demand-node id, each of length `horizon`.
    pub demands: BTreeMap<String, Vec<f64>>,
    /// Energy tariff per step, currency/kWh.
    pub tariff: Vec<f64>,
}

/// On-disk layout of a network file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
    pub pump_groups: Vec<PumpGroup>,
    pub tanks: Vec<Tank>,
    pub inputs: Inputs,
}

/// Network element: a pipe or a pump group. Elements are numbered pipes
/// first (file order), then pump groups (file order).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Element {
    Pipe(usize),
    PumpGroup(usize),
}

/// Signed node-element incidence split into calculated-head rows and
/// fixed-head rows. An element has +1 at its origin node and -1 at its
/// destination node, so `lambda^T h` is the head drop `h_o - h_d` and
/// `-lambda_c q` is the net inflow into each calculated node.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceStructure {
    pub calculated: Vec<Vec<i8>>,
    pub fixed: Vec<Vec<i8>>,
    pub n_elements: usize,
}

impl IncidenceStructure {
    pub fn column_sum(&self, element: usize) -> i32 {
        self.calculated
            .iter()
            .chain(self.fixed.iter())
            .map(|row| row[element] as i32)
            .sum()
    }
}

/// A validated network. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Network {
    file: NetworkFile,
    node_index: HashMap<String, usize>,
    calculated: Vec<usize>,
    fixed: Vec<usize>,
    /// (origin, destination) node indices per element.
    endpoints: Vec<(usize, usize)>,
    tank_of_node: HashMap<usize, usize>,
    incidence: IncidenceStructure,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} nodes, {} pipes, {} pump groups, {} tanks, K={}",
            self.file.name.as_deref().unwrap_or("network"),
            self.file.nodes.len(),
            self.file.pipes.len(),
            self.file.pump_groups.len(),
            self.file.tanks.len(),
            self.file.inputs.horizon
        )
    }
}

/// The canonical two-pump, one-tank network shipped with the crate.
pub const CANONICAL_JSON: &str = include_str!("../fixtures/canonical.json");

pub fn canonical_network() -> Network {
    Network::from_json(CANONICAL_JSON).expect("canonical fixture is valid")
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network, NetworkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Network::from_json(&text)
}

impl Network {
    pub fn from_json(text: &str) -> Result<Network, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Network::new(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("network file serializes")
    }

    pub fn new(file: NetworkFile) -> Result<Network, NetworkError> {
        validate_values(&file)?;
        let mut node_index = HashMap::new();
        for (i, node) in file.nodes.iter().enumerate() {
            node_index.insert(node.id.clone(), i);
        }
        let lookup = |id: &str, what: &str| {
            node_index.get(id).copied().ok_or_else(|| {
                NetworkError::Topology(format!("{what} references unknown node `{id}`"))
            })
        };
        let mut endpoints = Vec::new();
        for p in &file.pipes {
            let what = format!("pipe `{}`", p.id);
            endpoints.push((lookup(&p.from_node, &what)?, lookup(&p.to_node, &what)?));
        }
        for g in &file.pump_groups {
            let what = format!("pump group `{}`", g.id);
            let ends = (lookup(&g.from_node, &what)?, lookup(&g.to_node, &what)?);
            if ends.0 == ends.1 {
                return Err(invalid(
                    format!("pump_groups[{}].to_node", endpoints.len() - file.pipes.len()),
                    "pump group must connect two distinct nodes",
                ));
            }
            endpoints.push(ends);
        }

        let mut tank_of_node = HashMap::new();
        for (t, tank) in file.tanks.iter().enumerate() {
            let idx = lookup(&tank.node, &format!("tank {t}"))?;
            if file.nodes[idx].kind != NodeKind::Tank {
                return Err(invalid(
                    format!("tanks[{t}].node"),
                    format!("node `{}` is not of kind tank", tank.node),
                ));
            }
            if tank_of_node.insert(idx, t).is_some() {
                return Err(invalid(
                    format!("tanks[{t}].node"),
                    format!("node `{}` has more than one tank entry", tank.node),
                ));
            }
        }
        for (i, node) in file.nodes.iter().enumerate() {
            if node.kind == NodeKind::Tank && !tank_of_node.contains_key(&i) {
                return Err(invalid(
                    format!("nodes[{i}]"),
                    format!("tank node `{}` has no entry in `tanks`", node.id),
                ));
            }
        }

        for id in file.inputs.demands.keys() {
            let idx = lookup(id, "demand series")?;
            if file.nodes[idx].kind != NodeKind::Demand {
                return Err(invalid(
                    format!("inputs.demands.{id}"),
                    "demands are allowed only at demand nodes",
                ));
            }
        }
        for node in &file.nodes {
            if node.kind == NodeKind::Demand && !file.inputs.demands.contains_key(&node.id) {
                return Err(invalid(
                    format!("inputs.demands.{}", node.id),
                    "demand node has no demand series",
                ));
            }
        }

        let calculated: Vec<usize> = (0..file.nodes.len())
            .filter(|&i| !file.nodes[i].kind.is_fixed_head())
            .collect();
        let fixed: Vec<usize> = (0..file.nodes.len())
            .filter(|&i| file.nodes[i].kind.is_fixed_head())
            .collect();
        if fixed.is_empty() {
            return Err(NetworkError::Topology(
                "network needs at least one reservoir or tank".into(),
            ));
        }
        check_connected(&file, &endpoints, &fixed)?;

        let incidence = incidence_from(&file, &endpoints, &calculated, &fixed);
        Ok(Network {
            file,
            node_index,
            calculated,
            fixed,
            endpoints,
            tank_of_node,
            incidence,
        })
    }

    pub fn file(&self) -> &NetworkFile {
        &self.file
    }

    pub fn into_file(self) -> NetworkFile {
        self.file
    }

    /// The same network over the first `horizon` steps of its inputs.
    pub fn truncated(&self, horizon: usize) -> Result<Network, NetworkError> {
        if horizon == 0 || horizon > self.horizon() {
            return Err(invalid("inputs.horizon", format!("cannot truncate {} steps to {horizon}", self.horizon())));
        }
        let mut file = self.file.clone();
        file.inputs.horizon = horizon;
        file.inputs.tariff.truncate(horizon);
        for series in file.inputs.demands.values_mut() {
            series.truncate(horizon);
        }
        Network::new(file)
    }

    pub fn name(&self) -> Option<&str> {
        self.file.name.as_deref()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.file.nodes
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.file.pipes
    }

    pub fn pump_groups(&self) -> &[PumpGroup] {
        &self.file.pump_groups
    }

    pub fn tanks(&self) -> &[Tank] {
        &self.file.tanks
    }

    pub fn inputs(&self) -> &Inputs {
        &self.file.inputs
    }

    pub fn horizon(&self) -> usize {
        self.file.inputs.horizon
    }

    pub fn dt_hours(&self) -> f64 {
        self.file.inputs.dt_hours
    }

    pub fn dt_seconds(&self) -> f64 {
        self.file.inputs.dt_hours * 3600.0
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    /// Indices (into `nodes()`) of calculated-head nodes, in file order.
    pub fn calculated_nodes(&self) -> &[usize] {
        &self.calculated
    }

    /// Indices (into `nodes()`) of fixed-head nodes, in file order.
    pub fn fixed_nodes(&self) -> &[usize] {
        &self.fixed
    }

    pub fn n_elements(&self) -> usize {
        self.endpoints.len()
    }

    pub fn element(&self, e: usize) -> Element {
        let n_pipes = self.file.pipes.len();
        if e < n_pipes {
            Element::Pipe(e)
        } else {
            Element::PumpGroup(e - n_pipes)
        }
    }

    pub fn element_id(&self, e: usize) -> &str {
        match self.element(e) {
            Element::Pipe(p) => &self.file.pipes[p].id,
            Element::PumpGroup(g) => &self.file.pump_groups[g].id,
        }
    }

    pub fn pipe_element(&self, pipe: usize) -> usize {
        pipe
    }

    pub fn group_element(&self, group: usize) -> usize {
        self.file.pipes.len() + group
    }

    /// Origin and destination node indices of element `e`.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.endpoints[e]
    }

    pub fn tank_at(&self, node: usize) -> Option<usize> {
        self.tank_of_node.get(&node).copied()
    }

    pub fn tank_node(&self, tank: usize) -> usize {
        self.node_index[&self.file.tanks[tank].node]
    }

    /// Demand of node `node` at step `k`, zero for non-demand nodes.
    pub fn demand(&self, node: usize, k: usize) -> f64 {
        self.file
            .inputs
            .demands
            .get(&self.file.nodes[node].id)
            .map_or(0.0, |series| series[k])
    }

    /// Demands of all calculated nodes at step `k`, ordered as `calculated_nodes()`.
    pub fn demand_column(&self, k: usize) -> Vec<f64> {
        self.calculated.iter().map(|&n| self.demand(n, k)).collect()
    }

    pub fn incidence(&self) -> &IncidenceStructure {
        &self.incidence
    }

    /// Total number of individual pumps across all groups.
    pub fn n_individual_pumps(&self) -> usize {
        self.file.pump_groups.iter().map(|g| g.n_pumps as usize).sum()
    }
}

pub fn build_incidence(network: &Network) -> IncidenceStructure {
    network.incidence.clone()
}

fn incidence_from(
    file: &NetworkFile,
    endpoints: &[(usize, usize)],
    calculated: &[usize],
    fixed: &[usize],
) -> IncidenceStructure {
    let n_el = endpoints.len();
    let mut row_of = vec![(false, 0usize); file.nodes.len()];
    for (r, &n) in calculated.iter().enumerate() {
        row_of[n] = (true, r);
    }
    for (r, &n) in fixed.iter().enumerate() {
        row_of[n] = (false, r);
    }
    let mut calc = vec![vec![0i8; n_el]; calculated.len()];
    let mut fix = vec![vec![0i8; n_el]; fixed.len()];
    for (e, &(o, d)) in endpoints.iter().enumerate() {
        for (node, sign) in [(o, 1i8), (d, -1i8)] {
            let (is_calc, r) = row_of[node];
            if is_calc {
                calc[r][e] += sign;
            } else {
                fix[r][e] += sign;
            }
        }
    }
    IncidenceStructure {
        calculated: calc,
        fixed: fix,
        n_elements: n_el,
    }
}

fn check_connected(
    file: &NetworkFile,
    endpoints: &[(usize, usize)],
    fixed: &[usize],
) -> Result<(), NetworkError> {
    let n = file.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for &(o, d) in endpoints {
        adj[o].push(d);
        adj[d].push(o);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = fixed.iter().copied().collect();
    for &f in fixed {
        seen[f] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(NetworkError::Topology(format!(
            "node `{}` is not connected to any reservoir or tank",
            file.nodes[i].id
        )));
    }
    Ok(())
}

fn finite(path: String, v: f64) -> Result<(), NetworkError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, "value must be finite"))
    }
}

impl PumpModel {
    pub fn validate(&self, path: &str) -> Result<(), NetworkError> {
        let p = |f: &str| format!("{path}.{f}");
        for (f, v) in [
            ("power.a3", self.power.a3),
            ("power.a2", self.power.a2),
            ("power.a1", self.power.a1),
            ("power.a0", self.power.a0),
            ("head.a", self.head.a),
            ("head.b", self.head.b),
            ("head.c", self.head.c),
            ("s_min", self.s_min),
            ("s_max", self.s_max),
            ("q_nominal", self.q_nominal),
            ("s_nominal", self.s_nominal),
        ] {
            finite(p(f), v)?;
        }
        if self.head.a >= 0.0 {
            return Err(invalid(p("head.a"), "head curve must be concave (a < 0)"));
        }
        if self.head.c <= 0.0 {
            return Err(invalid(p("head.c"), "shut-off head must be positive"));
        }
        if !(0.0 < self.s_min && self.s_min < self.s_nominal && self.s_nominal <= self.s_max) {
            return Err(invalid(
                p("s_min"),
                "speeds must satisfy 0 < s_min < s_nominal <= s_max",
            ));
        }
        if self.q_nominal <= 0.0 {
            return Err(invalid(p("q_nominal"), "nominal flow must be positive"));
        }
        let q_int = self.unit_intercept();
        if self.q_nominal / self.s_nominal >= q_int {
            return Err(invalid(
                p("q_nominal"),
                format!("nominal flow must lie below the intercept flow {q_int:.4}"),
            ));
        }
        if self.power.eval(self.q_nominal / self.s_nominal) <= 0.0 {
            return Err(invalid(p("power"), "power at the nominal point must be positive"));
        }
        Ok(())
    }

    /// Positive root of the single-pump head curve at nominal speed.
    pub fn unit_intercept(&self) -> f64 {
        let HeadCurve { a, b, c } = self.head;
        (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
    }
}

fn validate_values(file: &NetworkFile) -> Result<(), NetworkError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
        ));
    }
    let mut ids = HashSet::new();
    for (i, node) in file.nodes.iter().enumerate() {
        if node.id.is_empty() || node.id.contains(char::is_whitespace) {
            return Err(invalid(format!("nodes[{i}].id"), "ids must be non-empty without spaces"));
        }
        if !ids.insert(node.id.as_str()) {
            return Err(invalid(format!("nodes[{i}].id"), format!("duplicate node id `{}`", node.id)));
        }
        finite(format!("nodes[{i}].elevation"), node.elevation)?;
    }
    let mut element_ids = HashSet::new();
    for (i, pipe) in file.pipes.iter().enumerate() {
        if pipe.id.is_empty() || pipe.id.contains(char::is_whitespace) {
            return Err(invalid(format!("pipes[{i}].id"), "ids must be non-empty without spaces"));
        }
        if !element_ids.insert(pipe.id.as_str()) {
            return Err(invalid(format!("pipes[{i}].id"), format!("duplicate element id `{}`", pipe.id)));
        }
        if pipe.from_node == pipe.to_node {
            return Err(invalid(format!("pipes[{i}].to_node"), "pipe must connect two distinct nodes"));
        }
        if !(pipe.resistance > 0.0 && pipe.resistance.is_finite()) {
            return Err(invalid(format!("pipes[{i}].resistance"), "resistance must be positive"));
        }
    }
    for (i, group) in file.pump_groups.iter().enumerate() {
        if group.id.is_empty() || group.id.contains(char::is_whitespace) {
            return Err(invalid(format!("pump_groups[{i}].id"), "ids must be non-empty without spaces"));
        }
        if !element_ids.insert(group.id.as_str()) {
            return Err(invalid(
                format!("pump_groups[{i}].id"),
                format!("duplicate element id `{}`", group.id),
            ));
        }
        if group.n_pumps < 1 {
            return Err(invalid(format!("pump_groups[{i}].n_pumps"), "group needs at least one pump"));
        }
        group.model.validate(&format!("pump_groups[{i}].model"))?;
    }
    for (i, tank) in file.tanks.iter().enumerate() {
        let p = |f: &str| format!("tanks[{i}].{f}");
        for (f, v) in [
            ("area", tank.area),
            ("level_min", tank.level_min),
            ("level_max", tank.level_max),
            ("level_init", tank.level_init),
            ("final_level_tolerance", tank.final_level_tolerance),
        ] {
            finite(p(f), v)?;
        }
        if tank.area <= 0.0 {
            return Err(invalid(p("area"), "tank area must be positive"));
        }
        if tank.level_min >= tank.level_max {
            return Err(invalid(p("level_max"), "level_min must be below level_max"));
        }
        if tank.level_init < tank.level_min || tank.level_init > tank.level_max {
            return Err(invalid(p("level_init"), "initial level must lie within [level_min, level_max]"));
        }
        if tank.final_level_tolerance < 0.0 {
            return Err(invalid(p("final_level_tolerance"), "tolerance must be non-negative"));
        }
    }
    let inputs = &file.inputs;
    if inputs.horizon == 0 {
        return Err(invalid("inputs.horizon", "horizon must be positive"));
    }
    if !(inputs.dt_hours > 0.0 && inputs.dt_hours.is_finite()) {
        return Err(invalid("inputs.dt_hours", "time step must be positive"));
    }
    if inputs.tariff.len() != inputs.horizon {
        return Err(invalid(
            "inputs.tariff",
            format!("expected {} values, found {}", inputs.horizon, inputs.tariff.len()),
        ));
    }
    for (k, &t) in inputs.tariff.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("inputs.tariff[{k}]"), "tariff must be positive"));
        }
    }
    for (id, series) in &inputs.demands {
        if series.len() != inputs.horizon {
            return Err(invalid(
                format!("inputs.demands.{id}"),
                format!("expected {} values, found {}", inputs.horizon, series.len()),
            ));
        }
        for (k, &d) in series.iter().enumerate() {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(invalid(format!("inputs.demands.{id}[{k}]"), "demand must be non-negative"));
            }
        }
    }
    Ok(())
}
