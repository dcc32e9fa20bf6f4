//! Map a simulated trajectory onto MILP columns.

use super::layout::VarKind;
use super::ScheduleMilp;
use crate::hydraulics::SimulationResult;
use crate::linearize::LinearizedModel;
use crate::network::Network;

/// Column vector reproducing `sim` in the surrogate model: segments and
/// domains are chosen by membership, power is taken from the tangent, and a
/// group's flow is shared equally by its running units. Under the symmetry
/// rows the running units are the highest-indexed ones.
pub fn snap_simulation(net: &Network, lin: &LinearizedModel, milp: &ScheduleMilp, sim: &SimulationResult) -> Vec<f64> {
    let lay = &milp.layout;
    let mut x = vec![0.0; lay.len()];
    for k in 0..lay.horizon {
        for (r, _) in lay.calc_ids.iter().enumerate() {
            x[lay.index(VarKind::Hc, r, 0, k)] = sim.heads[r][k];
        }
        for (t, _) in lay.tank_ids.iter().enumerate() {
            let z = net.nodes()[net.tank_node(t)].elevation;
            x[lay.index(VarKind::Ht, t, 0, k)] = z + sim.tank_levels[t][k];
        }
        for (p, pwl) in lin.pipes.iter().enumerate() {
            let q = sim.flows[net.pipe_element(p)][k];
            let seg = pwl.segment_of(q);
            x[lay.index(VarKind::QPipe, p, 0, k)] = q;
            x[lay.index(VarKind::Ww, p, seg, k)] = q;
            x[lay.index(VarKind::Bb, p, seg, k)] = 1.0;
        }
        for (g, group) in net.pump_groups().iter().enumerate() {
            let ctl = sim.schedule.controls[g][k];
            let units: Vec<usize> = lay.group_pumps(g).collect();
            let q_group = sim.flows[net.group_element(g)][k];
            let sur = &lin.pumps[g];
            let first_on = group.n_pumps as usize - ctl.n_active as usize;
            for (u, &j) in units.iter().enumerate() {
                if u < first_on {
                    continue;
                }
                let q = q_group / ctl.n_active as f64;
                let s = ctl.speed;
                let dom = sur.pwl.best_domain(q, s);
                x[lay.index(VarKind::QPump, j, 0, k)] = q;
                x[lay.index(VarKind::SPump, j, 0, k)] = s;
                x[lay.index(VarKind::PPump, j, 0, k)] = sur.tangent.eval(q, s);
                x[lay.index(VarKind::NPump, j, 0, k)] = 1.0;
                x[lay.index(VarKind::Qq, j, dom, k)] = q;
                x[lay.index(VarKind::Ss, j, dom, k)] = s;
                x[lay.index(VarKind::Aa, j, dom, k)] = 1.0;
            }
        }
    }
    x
}
