//! Translate a MILP incumbent into per-pump series and a group schedule.

use serde::{Deserialize, Serialize};

use super::MipResult;
use crate::hydraulics::{GroupControl, GroupSchedule};
use crate::milp::{VarKind, VariableLayout};
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("the result carries no incumbent")]
    NoIncumbent,
    #[error("binary {name} = {value} is not integral")]
    FractionalBinary { name: String, value: f64 },
    #[error("group {group} step {k}: running units do not form the symmetry chain")]
    SymmetryOrder { group: String, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedSchedule {
    /// Individual pump ids, e.g. `G1#1`.
    pub pump_ids: Vec<String>,
    /// `[pump][k]`.
    pub status: Vec<Vec<u8>>,
    pub speed: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    /// `[calculated node][k]`.
    pub heads: Vec<Vec<f64>>,
    /// `[tank][k]`, head at the end of step `k`.
    pub tank_heads: Vec<Vec<f64>>,
    /// Group translation: count of running units and their mean speed.
    pub schedule: GroupSchedule,
    /// Largest deviation of a running unit's speed from its group mean.
    pub speed_spread: f64,
}

const TOL: f64 = 1e-6;

pub fn extract_schedule(result: &MipResult, layout: &VariableLayout, network: &Network) -> Result<ExtractedSchedule, ExtractError> {
    let x = &result.x;
    if x.len() != layout.len() {
        return Err(ExtractError::NoIncumbent);
    }
    let horizon = layout.horizon;
    let series = |kind: VarKind, e: usize| -> Vec<f64> { (0..horizon).map(|k| x[layout.index(kind, e, 0, k)]).collect() };
    let mut status = Vec::new();
    for (j, _) in layout.pumps.iter().enumerate() {
        let mut row = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let col = layout.index(VarKind::NPump, j, 0, k);
            let v = x[col];
            if (v - v.round()).abs() > TOL {
                return Err(ExtractError::FractionalBinary { name: layout.name(col), value: v });
            }
            row.push(v.round() as u8);
        }
        status.push(row);
    }
    let n_pumps = layout.pumps.len();
    let speed: Vec<Vec<f64>> = (0..n_pumps)
        .map(|j| series(VarKind::SPump, j).into_iter().zip(&status[j]).map(|(s, &n)| if n == 1 { s } else { 0.0 }).collect())
        .collect();
    let flow: Vec<Vec<f64>> = (0..n_pumps).map(|j| series(VarKind::QPump, j)).collect();
    let power: Vec<Vec<f64>> = (0..n_pumps).map(|j| series(VarKind::PPump, j)).collect();
    let heads = (0..layout.calc_ids.len()).map(|r| series(VarKind::Hc, r)).collect();
    let tank_heads = (0..layout.tank_ids.len()).map(|t| series(VarKind::Ht, t)).collect();

    let mut controls = Vec::new();
    let mut speed_spread: f64 = 0.0;
    for (g, group) in network.pump_groups().iter().enumerate() {
        let units: Vec<usize> = layout.group_pumps(g).collect();
        let model = &group.model;
        let mut row = Vec::with_capacity(horizon);
        for k in 0..horizon {
            if units.windows(2).any(|w| status[w[0]][k] > status[w[1]][k]) {
                return Err(ExtractError::SymmetryOrder { group: group.id.clone(), k });
            }
            let on: Vec<usize> = units.iter().copied().filter(|&j| status[j][k] == 1).collect();
            if on.is_empty() {
                row.push(GroupControl::OFF);
                continue;
            }
            let mean = on.iter().map(|&j| speed[j][k]).sum::<f64>() / on.len() as f64;
            for &j in &on {
                speed_spread = speed_spread.max((speed[j][k] - mean).abs());
            }
            // LP tolerances may leave the speed a hair outside its range.
            row.push(GroupControl { n_active: on.len() as u32, speed: mean.clamp(model.s_min, model.s_max) });
        }
        controls.push(row);
    }
    Ok(ExtractedSchedule {
        pump_ids: layout.pumps.iter().map(|p| p.id.clone()).collect(),
        status,
        speed,
        flow,
        power,
        heads,
        tank_heads,
        schedule: GroupSchedule { controls },
        speed_spread,
    })
}
