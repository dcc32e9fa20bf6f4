//! Extended-period simulation.
//!
//! Each step solves the network with tank heads taken at the start of the
//! step, then advances every tank with the net inflow of that step:
//! `level(k) = level(k-1) + q_t(k) dt / A`, with `level(0)` the initial level.
//! The MILP builder uses the same discretization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::network::{Network, NodeKind};

use super::steady::{solve_steady_state, GroupControl, HydraulicState};
use super::{group_power, HydraulicError};

/// Per-group, per-step count of running pumps and their common speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    /// `controls[group][k]`.
    pub controls: Vec<Vec<GroupControl>>,
}

/// Schedule file layout: one entry per pump group id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub groups: BTreeMap<String, GroupSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSeries {
    pub n_active: Vec<u32>,
    pub speed: Vec<f64>,
}

impl GroupSchedule {
    /// Every pump of every group running at speed 1.0 for all steps.
    pub fn flat(network: &Network) -> GroupSchedule {
        GroupSchedule {
            controls: network
                .pump_groups()
                .iter()
                .map(|g| vec![GroupControl { n_active: g.n_pumps, speed: 1.0 }; network.horizon()])
                .collect(),
        }
    }

    pub fn all_off(network: &Network) -> GroupSchedule {
        GroupSchedule {
            controls: vec![vec![GroupControl::OFF; network.horizon()]; network.pump_groups().len()],
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.first().map_or(0, |c| c.len())
    }

    pub fn step(&self, k: usize) -> Vec<GroupControl> {
        self.controls.iter().map(|c| c[k]).collect()
    }

    pub fn validate(&self, network: &Network) -> Result<(), HydraulicError> {
        let groups = network.pump_groups();
        if self.controls.len() != groups.len() {
            return Err(HydraulicError::InvalidInput(format!(
                "schedule has {} groups, network has {}",
                self.controls.len(),
                groups.len()
            )));
        }
        for (g, series) in self.controls.iter().enumerate() {
            let group = &groups[g];
            if series.len() != network.horizon() {
                return Err(HydraulicError::InvalidInput(format!(
                    "schedule for `{}` has {} steps, horizon is {}",
                    group.id,
                    series.len(),
                    network.horizon()
                )));
            }
            for (k, ctl) in series.iter().enumerate() {
                if ctl.n_active > group.n_pumps {
                    return Err(HydraulicError::InvalidInput(format!(
                        "`{}` step {k}: {} pumps on, group has {}",
                        group.id, ctl.n_active, group.n_pumps
                    )));
                }
                let m = &group.model;
                if ctl.is_on() {
                    let tol = 1e-9;
                    if ctl.speed < m.s_min - tol || ctl.speed > m.s_max + tol {
                        return Err(HydraulicError::InvalidInput(format!(
                            "`{}` step {k}: speed {} outside [{}, {}]",
                            group.id, ctl.speed, m.s_min, m.s_max
                        )));
                    }
                } else if ctl.speed != 0.0 {
                    return Err(HydraulicError::InvalidInput(format!(
                        "`{}` step {k}: speed must be 0 when the group is off",
                        group.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self, network: &Network) -> ScheduleFile {
        ScheduleFile {
            groups: network
                .pump_groups()
                .iter()
                .zip(&self.controls)
                .map(|(g, c)| {
                    (
                        g.id.clone(),
                        GroupSeries {
                            n_active: c.iter().map(|x| x.n_active).collect(),
                            speed: c.iter().map(|x| x.speed).collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_file(file: &ScheduleFile, network: &Network) -> Result<GroupSchedule, HydraulicError> {
        let mut controls = Vec::new();
        for g in network.pump_groups() {
            let series = file.groups.get(&g.id).ok_or_else(|| {
                HydraulicError::InvalidInput(format!("schedule has no entry for group `{}`", g.id))
            })?;
            if series.n_active.len() != series.speed.len() {
                return Err(HydraulicError::InvalidInput(format!(
                    "`{}`: n_active and speed lengths differ",
                    g.id
                )));
            }
            controls.push(
                series
                    .n_active
                    .iter()
                    .zip(&series.speed)
                    .map(|(&n_active, &speed)| GroupControl { n_active, speed })
                    .collect(),
            );
        }
        if let Some(extra) = file
            .groups
            .keys()
            .find(|id| !network.pump_groups().iter().any(|g| &g.id == *id))
        {
            return Err(HydraulicError::InvalidInput(format!("unknown pump group `{extra}`")));
        }
        let schedule = GroupSchedule { controls };
        schedule.validate(network)?;
        Ok(schedule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelViolation {
    pub tank: String,
    pub step: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {step}: {source}")]
pub struct SimulationError {
    pub step: usize,
    #[source]
    pub source: HydraulicError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub calculated_ids: Vec<String>,
    pub fixed_ids: Vec<String>,
    pub element_ids: Vec<String>,
    pub tank_ids: Vec<String>,
    pub group_ids: Vec<String>,
    /// `[calculated node][k]`, m.
    pub heads: Vec<Vec<f64>>,
    /// Heads of fixed nodes used in the solve of step k, m.
    pub fixed_heads: Vec<Vec<f64>>,
    /// `[element][k]`, L/s.
    pub flows: Vec<Vec<f64>>,
    /// Tank level at the end of step k, m above tank elevation.
    pub tank_levels: Vec<Vec<f64>>,
    /// `[group][k]`, kW.
    pub power: Vec<Vec<f64>>,
    pub step_cost: Vec<f64>,
    pub cost: f64,
    pub schedule: GroupSchedule,
    pub level_violations: Vec<LevelViolation>,
    /// Largest mass-balance residual over all steps, L/s.
    pub max_mass_residual: f64,
}

pub fn simulate_eps(network: &Network, schedule: &GroupSchedule) -> Result<SimulationResult, SimulationError> {
    schedule.validate(network).map_err(|source| SimulationError { step: 0, source })?;
    let k_steps = network.horizon();
    let calc = network.calculated_nodes();
    let fixed = network.fixed_nodes();
    let nodes = network.nodes();
    let tanks = network.tanks();
    let groups = network.pump_groups();
    let dt_s = network.dt_seconds();

    let mut levels: Vec<f64> = tanks.iter().map(|t| t.level_init).collect();
    let mut result = SimulationResult {
        calculated_ids: calc.iter().map(|&n| nodes[n].id.clone()).collect(),
        fixed_ids: fixed.iter().map(|&n| nodes[n].id.clone()).collect(),
        element_ids: (0..network.n_elements()).map(|e| network.element_id(e).to_string()).collect(),
        tank_ids: tanks.iter().map(|t| t.node.clone()).collect(),
        group_ids: groups.iter().map(|g| g.id.clone()).collect(),
        heads: vec![Vec::with_capacity(k_steps); calc.len()],
        fixed_heads: vec![Vec::with_capacity(k_steps); fixed.len()],
        flows: vec![Vec::with_capacity(k_steps); network.n_elements()],
        tank_levels: vec![Vec::with_capacity(k_steps); tanks.len()],
        power: vec![Vec::with_capacity(k_steps); groups.len()],
        step_cost: Vec::with_capacity(k_steps),
        cost: 0.0,
        schedule: schedule.clone(),
        level_violations: Vec::new(),
        max_mass_residual: 0.0,
    };

    let mut warm: Option<HydraulicState> = None;
    for k in 0..k_steps {
        let fixed_heads: Vec<f64> = fixed
            .iter()
            .map(|&n| match nodes[n].kind {
                NodeKind::Tank => {
                    let t = network.tank_at(n).expect("tank node has a tank");
                    nodes[n].elevation + levels[t]
                }
                _ => nodes[n].elevation,
            })
            .collect();
        let demand = network.demand_column(k);
        let controls = schedule.step(k);
        let state = solve_steady_state(network, &fixed_heads, &demand, &controls, warm.as_ref())
            .map_err(|source| SimulationError { step: k, source })?;

        let mass = super::mass_balance_residual(network, &state.flows, &demand);
        let worst = mass.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        result.max_mass_residual = result.max_mass_residual.max(worst);

        let mut step_cost = 0.0;
        for (g, group) in groups.iter().enumerate() {
            let ctl = controls[g];
            let p = if ctl.is_on() {
                let q = state.flows[network.group_element(g)];
                group_power(&group.model, q, ctl.n_active, ctl.speed)
                    .map_err(|source| SimulationError { step: k, source })?
            } else {
                0.0
            };
            step_cost += p * network.inputs().tariff[k] * network.dt_hours();
            result.power[g].push(p);
        }
        result.step_cost.push(step_cost);
        result.cost += step_cost;

        let fixed_inc = &network.incidence().fixed;
        for (t, tank) in tanks.iter().enumerate() {
            let node = network.tank_node(t);
            let row = fixed.iter().position(|&f| f == node).expect("tank is a fixed node");
            let inflow: f64 = fixed_inc[row]
                .iter()
                .zip(&state.flows)
                .map(|(&l, q)| -(l as f64) * q)
                .sum();
            levels[t] += inflow * 1e-3 * dt_s / tank.area;
            if levels[t] < tank.level_min - 1e-9 || levels[t] > tank.level_max + 1e-9 {
                result.level_violations.push(LevelViolation {
                    tank: tank.node.clone(),
                    step: k,
                    level: levels[t],
                });
            }
            result.tank_levels[t].push(levels[t]);
        }
        for (r, h) in state.heads.iter().enumerate() {
            result.heads[r].push(*h);
        }
        for (r, h) in fixed_heads.iter().enumerate() {
            result.fixed_heads[r].push(*h);
        }
        for (e, q) in state.flows.iter().enumerate() {
            result.flows[e].push(*q);
        }
        warm = Some(state);
    }
    Ok(result)
}

impl SimulationResult {
    pub fn horizon(&self) -> usize {
        self.step_cost.len()
    }

    /// One row per step; columns `k`, then `h:<node>`, `hf:<node>`,
    /// `q:<element>`, `level:<tank>`, `P:<group>`, `n:<group>`, `s:<group>`,
    /// `cost`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k");
        for id in &self.calculated_ids {
            write!(out, ",h:{id}").unwrap();
        }
        for id in &self.fixed_ids {
            write!(out, ",hf:{id}").unwrap();
        }
        for id in &self.element_ids {
            write!(out, ",q:{id}").unwrap();
        }
        for id in &self.tank_ids {
            write!(out, ",level:{id}").unwrap();
        }
        for id in &self.group_ids {
            write!(out, ",P:{id},n:{id},s:{id}").unwrap();
        }
        out.push_str(",cost\n");
        for k in 0..self.horizon() {
            write!(out, "{}", k + 1).unwrap();
            for series in self.heads.iter().chain(&self.fixed_heads).chain(&self.flows).chain(&self.tank_levels) {
                write!(out, ",{}", series[k]).unwrap();
            }
            for (g, p) in self.power.iter().enumerate() {
                let ctl = self.schedule.controls[g][k];
                write!(out, ",{},{},{}", p[k], ctl.n_active, ctl.speed).unwrap();
            }
            writeln!(out, ",{}", self.step_cost[k]).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::*;

    /// Reservoir feeding a tank through one pipe, plus an optional demand node off the tank.
    fn reservoir_tank(res_head: f64, tank_level: f64) -> Network {
        Network::new(NetworkFile {
            schema_version: 1,
            name: None,
            nodes: vec![
                Node { id: "R".into(), kind: NodeKind::Reservoir, elevation: res_head },
                Node { id: "T".into(), kind: NodeKind::Tank, elevation: 0.0 },
            ],
            pipes: vec![Pipe { id: "P".into(), from_node: "R".into(), to_node: "T".into(), resistance: 0.01 }],
            pump_groups: vec![],
            tanks: vec![Tank {
                node: "T".into(),
                area: 100.0,
                level_min: 0.0,
                level_max: 1000.0,
                level_init: tank_level,
                final_level_tolerance: 0.0,
            }],
            inputs: Inputs { horizon: 4, dt_hours: 1.0, demands: BTreeMap::new(), tariff: vec![1.0; 4] },
        })
        .unwrap()
    }

    #[test]
    fn balanced_heads_keep_level_constant() {
        let net = reservoir_tank(5.0, 5.0);
        let sim = simulate_eps(&net, &GroupSchedule::all_off(&net)).unwrap();
        for &l in &sim.tank_levels[0] {
            assert!((l - 5.0).abs() < 1e-9);
        }
        assert_eq!(sim.cost, 0.0);
    }

    #[test]
    fn level_follows_explicit_update() {
        let net = reservoir_tank(10.0, 1.0);
        let sim = simulate_eps(&net, &GroupSchedule::all_off(&net)).unwrap();
        let mut level = 1.0;
        for k in 0..4 {
            let q = sim.flows[0][k];
            let expected_q = ((10.0 - level) / 0.01f64).sqrt();
            assert!((q - expected_q).abs() < 1e-6);
            level += q * 1e-3 * 3600.0 / 100.0;
            assert!((sim.tank_levels[0][k] - level).abs() < 1e-9);
        }
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let net = reservoir_tank(5.0, 5.0);
        let sched = GroupSchedule { controls: vec![] };
        assert!(simulate_eps(&net, &sched).is_ok());
        let file = ScheduleFile {
            groups: [("G".to_string(), GroupSeries { n_active: vec![1], speed: vec![1.0] })]
                .into_iter()
                .collect(),
        };
        assert!(GroupSchedule::from_file(&file, &net).is_err());
    }
}
