//! Row assembly.
//!
//! Heads of step `k` are tied to the tank heads at the start of the step:
//! the `ht` column of step `k - 1`, or the initial head for the first step.
//! `ht(k)` is the head at the end of step `k`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::layout::{VarKind, VariableLayout};
use super::presolve::{probe, probe_binaries, tighten_bounds, PropagationOptions};
use super::{Family, MilpProblem, Row, RowTag};
use crate::linearize::{LinearizedModel, PumpPwl};
use crate::network::{Element, Network, NodeKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("linearized model does not cover the network: {0}")]
    Coverage(String),
    #[error("row audit failed for {family}: built {built}, expected {expected}")]
    Audit { family: Family, built: usize, expected: usize },
}

/// How the power tangent is switched off for a stopped pump.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerGating {
    /// `|m_q q + m_s s + c - P| <= (1 - n) U_power`.
    BigU,
    /// `m_q q + m_s s + c n - P = 0`, written as two inequalities. Exact
    /// for binary `n` because `q = s = 0` whenever `n = 0`.
    Perspective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Overrides the derived power big-U when set.
    pub u_power: Option<f64>,
    /// Overrides the derived head big-U when set.
    pub u_pump: Option<f64>,
    /// Slack of an inactive domain row; zero gives the tightest form.
    pub u_dom: f64,
    /// Target final-minus-initial tank level, m, for every tank.
    pub final_level_offset: f64,
    pub power_gating: PowerGating,
    /// Propagate row activities to shrink the column boxes and derive
    /// per-step head big-U constants from the resulting head bounds.
    pub bound_tightening: bool,
    /// Add, per running pump and step, the cuts
    /// `lift_min n <= plane(qq, ss, AA) <= lift_max n`.
    pub envelope_cuts: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            u_power: None,
            u_pump: None,
            u_dom: 0.0,
            final_level_offset: 0.0,
            power_gating: PowerGating::Perspective,
            bound_tightening: true,
            envelope_cuts: true,
        }
    }
}

/// Big-U constants actually used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigUConfig {
    /// Per group.
    pub u_power: Vec<f64>,
    /// Per group; the cap for every head row of the group.
    pub u_pump: Vec<f64>,
    /// Per individual pump and step: `[gain side, loss side]` slack of the
    /// two head rows of a stopped pump.
    pub u_head: Vec<Vec<[f64; 2]>>,
    /// Per individual pump and step: `[min, max]` lift of a running pump.
    pub lift: Vec<Vec<[f64; 2]>>,
}

/// A built problem together with its column catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMilp {
    pub problem: MilpProblem,
    pub layout: VariableLayout,
    pub big_u: BigUConfig,
    pub config: BuildConfig,
}

enum HeadRef {
    Col(usize),
    Const(f64),
}

#[derive(Default)]
struct Acc {
    terms: BTreeMap<usize, f64>,
    constant: f64,
}

impl Acc {
    fn add(&mut self, col: usize, v: f64) -> &mut Self {
        *self.terms.entry(col).or_insert(0.0) += v;
        self
    }

    fn head(&mut self, h: &HeadRef, coef: f64) -> &mut Self {
        match *h {
            HeadRef::Col(c) => self.add(c, coef),
            HeadRef::Const(v) => {
                self.constant += coef * v;
                self
            }
        }
    }

    fn finish(&mut self, rhs: f64, tag: RowTag) -> Row {
        let terms = std::mem::take(&mut self.terms);
        let (cols, vals) = terms.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Row { cols, vals, rhs: rhs - self.constant, tag }
    }
}

fn tag(family: Family, element: &str, sub: usize, k: Option<usize>) -> RowTag {
    RowTag { family, element: element.to_string(), sub, k }
}

struct Builder<'a> {
    net: &'a Network,
    lin: &'a LinearizedModel,
    lay: &'a VariableLayout,
    calc_pos: HashMap<usize, usize>,
    eq: Vec<Row>,
    ineq: Vec<Row>,
}

impl Builder<'_> {
    fn head(&self, node: usize, k: usize) -> HeadRef {
        let n = &self.net.nodes()[node];
        match n.kind {
            NodeKind::Reservoir => HeadRef::Const(n.elevation),
            NodeKind::Tank => {
                let t = self.net.tank_at(node).expect("tank node");
                if k == 0 {
                    HeadRef::Const(n.elevation + self.net.tanks()[t].level_init)
                } else {
                    HeadRef::Col(self.lay.index(VarKind::Ht, t, 0, k - 1))
                }
            }
            _ => HeadRef::Col(self.lay.index(VarKind::Hc, self.calc_pos[&node], 0, k)),
        }
    }

    /// Columns carrying the flow of element `e` at step `k`.
    fn flow_cols(&self, e: usize, k: usize) -> Vec<usize> {
        match self.net.element(e) {
            Element::Pipe(p) => vec![self.lay.index(VarKind::QPipe, p, 0, k)],
            Element::PumpGroup(g) => self.lay.group_pumps(g).map(|j| self.lay.index(VarKind::QPump, j, 0, k)).collect(),
        }
    }

    fn node_balance(&mut self, k: usize) {
        let inc = &self.net.incidence().calculated;
        for (r, &node) in self.net.calculated_nodes().iter().enumerate() {
            let mut acc = Acc::default();
            for (e, &l) in inc[r].iter().enumerate() {
                if l != 0 {
                    for c in self.flow_cols(e, k) {
                        acc.add(c, -(l as f64));
                    }
                }
            }
            let row = acc.finish(self.net.demand(node, k), tag(Family::NodeBalance, &self.lay.calc_ids[r], 0, Some(k)));
            self.eq.push(row);
        }
    }

    fn tank_dynamics(&mut self, k: usize) {
        let fixed = self.net.fixed_nodes();
        for (t, tank) in self.net.tanks().iter().enumerate() {
            let node = self.net.tank_node(t);
            let row_f = fixed.iter().position(|&f| f == node).expect("tank is fixed");
            let gain = self.net.dt_seconds() / (1000.0 * tank.area);
            let mut acc = Acc::default();
            acc.add(self.lay.index(VarKind::Ht, t, 0, k), 1.0);
            if k == 0 {
                acc.constant -= self.net.nodes()[node].elevation + tank.level_init;
            } else {
                acc.add(self.lay.index(VarKind::Ht, t, 0, k - 1), -1.0);
            }
            for (e, &l) in self.net.incidence().fixed[row_f].iter().enumerate() {
                if l != 0 {
                    for c in self.flow_cols(e, k) {
                        acc.add(c, (l as f64) * gain);
                    }
                }
            }
            let row = acc.finish(0.0, tag(Family::TankDynamics, &tank.node, 0, Some(k)));
            self.eq.push(row);
        }
    }

    fn pipes(&mut self, k: usize) {
        for (p, pipe) in self.net.pipes().iter().enumerate() {
            let pwl = &self.lin.pipes[p];
            let id = &pipe.id;
            let q = self.lay.index(VarKind::QPipe, p, 0, k);
            let ww = |i| self.lay.index(VarKind::Ww, p, i, k);
            let bb = |i| self.lay.index(VarKind::Bb, p, i, k);

            let mut acc = Acc::default();
            acc.add(q, 1.0);
            for i in 0..3 {
                acc.add(ww(i), -1.0);
            }
            self.eq.push(acc.finish(0.0, tag(Family::PipeSegmentFlow, id, 0, Some(k))));

            let mut acc = Acc::default();
            for i in 0..3 {
                acc.add(bb(i), 1.0);
            }
            self.eq.push(acc.finish(1.0, tag(Family::PipeSegmentSelect, id, 0, Some(k))));

            let (o, d) = self.net.endpoints(self.net.pipe_element(p));
            let mut acc = Acc::default();
            acc.head(&self.head(o, k), 1.0).head(&self.head(d, k), -1.0);
            for i in 0..3 {
                acc.add(ww(i), -pwl.slopes[i]).add(bb(i), -pwl.intercepts[i]);
            }
            self.eq.push(acc.finish(0.0, tag(Family::PipeHeadloss, id, 0, Some(k))));

            for i in 0..3 {
                let (lo, hi) = pwl.segment_range(i);
                let mut acc = Acc::default();
                acc.add(bb(i), lo).add(ww(i), -1.0);
                self.ineq.push(acc.finish(0.0, tag(Family::PipeSegmentBound, id, 2 * i, Some(k))));
                let mut acc = Acc::default();
                acc.add(ww(i), 1.0).add(bb(i), -hi);
                self.ineq.push(acc.finish(0.0, tag(Family::PipeSegmentBound, id, 2 * i + 1, Some(k))));
            }
        }
    }

    fn pumps(&mut self, k: usize, cfg: &BuildConfig, big_u: &BigUConfig) {
        for (j, unit) in self.lay.pumps.iter().enumerate() {
            let g = unit.group;
            let group = &self.net.pump_groups()[g];
            let sur = &self.lin.pumps[g];
            let pwl: &PumpPwl = &sur.pwl;
            let tan = sur.tangent;
            let id = unit.id.as_str();
            let col = |kind, i| self.lay.index(kind, j, i, k);
            let (q, s, p, n) = (col(VarKind::QPump, 0), col(VarKind::SPump, 0), col(VarKind::PPump, 0), col(VarKind::NPump, 0));
            let u_power = big_u.u_power[g];
            let u_head = big_u.u_head[j][k];

            // Domain decomposition equalities.
            let mut acc = Acc::default();
            acc.add(s, 1.0);
            for i in 0..4 {
                acc.add(col(VarKind::Ss, i), -1.0);
            }
            self.eq.push(acc.finish(0.0, tag(Family::PumpSegmentSpeed, id, 0, Some(k))));
            let mut acc = Acc::default();
            acc.add(q, 1.0);
            for i in 0..4 {
                acc.add(col(VarKind::Qq, i), -1.0);
            }
            self.eq.push(acc.finish(0.0, tag(Family::PumpSegmentFlow, id, 0, Some(k))));
            let mut acc = Acc::default();
            for i in 0..4 {
                acc.add(col(VarKind::Aa, i), 1.0);
            }
            acc.add(n, -1.0);
            self.eq.push(acc.finish(0.0, tag(Family::PumpSegmentSelect, id, 0, Some(k))));

            // Power tangent, switched by status.
            let rows = match cfg.power_gating {
                PowerGating::BigU => {
                    let mut up = Acc::default();
                    up.add(q, tan.m_q).add(s, tan.m_s).add(p, -1.0).add(n, u_power);
                    let mut lo = Acc::default();
                    lo.add(q, -tan.m_q).add(s, -tan.m_s).add(p, 1.0).add(n, u_power);
                    [(up, u_power - tan.c), (lo, u_power + tan.c)]
                }
                PowerGating::Perspective => {
                    let mut up = Acc::default();
                    up.add(q, tan.m_q).add(s, tan.m_s).add(n, tan.c).add(p, -1.0);
                    let mut lo = Acc::default();
                    lo.add(q, -tan.m_q).add(s, -tan.m_s).add(n, -tan.c).add(p, 1.0);
                    [(up, 0.0), (lo, 0.0)]
                }
            };
            for (sub, (mut acc, rhs)) in rows.into_iter().enumerate() {
                self.ineq.push(acc.finish(rhs, tag(Family::PowerTangent, id, sub, Some(k))));
            }
            let mut acc = Acc::default();
            acc.add(p, -1.0);
            self.ineq.push(acc.finish(0.0, tag(Family::PowerZero, id, 0, Some(k))));
            let mut acc = Acc::default();
            acc.add(p, 1.0).add(n, -u_power);
            self.ineq.push(acc.finish(0.0, tag(Family::PowerZero, id, 1, Some(k))));

            // Domain boxes.
            for i in 0..4 {
                let (ss, qq, aa) = (col(VarKind::Ss, i), col(VarKind::Qq, i), col(VarKind::Aa, i));
                let mut acc = Acc::default();
                acc.add(aa, pwl.s_min).add(ss, -1.0);
                self.ineq.push(acc.finish(0.0, tag(Family::PumpSpeedBox, id, 2 * i, Some(k))));
                let mut acc = Acc::default();
                acc.add(ss, 1.0).add(aa, -pwl.s_max);
                self.ineq.push(acc.finish(0.0, tag(Family::PumpSpeedBox, id, 2 * i + 1, Some(k))));
                let mut acc = Acc::default();
                acc.add(qq, -1.0);
                self.ineq.push(acc.finish(0.0, tag(Family::PumpFlowBox, id, 2 * i, Some(k))));
                let mut acc = Acc::default();
                acc.add(qq, 1.0).add(aa, -pwl.q_max);
                self.ineq.push(acc.finish(0.0, tag(Family::PumpFlowBox, id, 2 * i + 1, Some(k))));
            }

            // Head gain h_to - h_from on the active plane, relaxed when off.
            let e = self.net.group_element(g);
            let (o, d) = self.net.endpoints(e);
            for sub in 0..2 {
                let sign = if sub == 0 { 1.0 } else { -1.0 };
                let mut acc = Acc::default();
                acc.head(&self.head(d, k), sign).head(&self.head(o, k), -sign);
                for i in 0..4 {
                    let pl = pwl.planes[i];
                    acc.add(col(VarKind::Ss, i), -sign * pl.dd)
                        .add(col(VarKind::Qq, i), -sign * pl.ee)
                        .add(col(VarKind::Aa, i), -sign * pl.ff);
                }
                acc.add(n, u_head[sub]);
                self.ineq.push(acc.finish(u_head[sub], tag(Family::PumpHead, id, sub, Some(k))));
            }
            if cfg.envelope_cuts {
                let [lift_lo, lift_hi] = big_u.lift[j][k];
                for (sub, (sign, bound)) in [(-1.0, lift_lo), (1.0, lift_hi)].into_iter().enumerate() {
                    let mut acc = Acc::default();
                    for i in 0..4 {
                        let pl = pwl.planes[i];
                        acc.add(col(VarKind::Ss, i), sign * pl.dd)
                            .add(col(VarKind::Qq, i), sign * pl.ee)
                            .add(col(VarKind::Aa, i), sign * pl.ff);
                    }
                    acc.add(n, -sign * bound);
                    self.ineq.push(acc.finish(0.0, tag(Family::PumpEnvelope, id, sub, Some(k))));
                }
            }

            // Triangular domains.
            for i in 0..4 {
                for (r, hp) in pwl.domains[i].iter().enumerate() {
                    let mut acc = Acc::default();
                    acc.add(col(VarKind::Qq, i), hp.m_qq)
                        .add(col(VarKind::Ss, i), hp.m_ss)
                        .add(col(VarKind::Aa, i), hp.c + cfg.u_dom);
                    self.ineq.push(acc.finish(cfg.u_dom, tag(Family::PumpDomain, id, 3 * i + r, Some(k))));
                }
            }
            let _ = group;
        }
    }

    fn assemble(&mut self, cfg: &BuildConfig, big_u: &BigUConfig) -> (Vec<Row>, Vec<Row>) {
        for k in 0..self.net.horizon() {
            self.node_balance(k);
            self.tank_dynamics(k);
            self.pipes(k);
            self.pumps(k, cfg, big_u);
            self.symmetry(k);
        }
        self.final_level(cfg.final_level_offset);
        (std::mem::take(&mut self.eq), std::mem::take(&mut self.ineq))
    }

    fn symmetry(&mut self, k: usize) {
        for (g, group) in self.net.pump_groups().iter().enumerate() {
            let units: Vec<usize> = self.lay.group_pumps(g).collect();
            for w in 0..units.len().saturating_sub(1) {
                let mut acc = Acc::default();
                acc.add(self.lay.index(VarKind::NPump, units[w], 0, k), 1.0)
                    .add(self.lay.index(VarKind::NPump, units[w + 1], 0, k), -1.0);
                self.ineq.push(acc.finish(0.0, tag(Family::Symmetry, &group.id, w, Some(k))));
            }
        }
    }

    fn final_level(&mut self, offset: f64) {
        let last = self.lay.horizon - 1;
        for (t, tank) in self.net.tanks().iter().enumerate() {
            let z = self.net.nodes()[self.net.tank_node(t)].elevation;
            let target = z + tank.level_init + offset;
            let col = self.lay.index(VarKind::Ht, t, 0, last);
            let mut acc = Acc::default();
            acc.add(col, 1.0);
            self.ineq.push(acc.finish(target + tank.final_level_tolerance, tag(Family::FinalLevel, &tank.node, 0, None)));
            let mut acc = Acc::default();
            acc.add(col, -1.0);
            self.ineq.push(acc.finish(-target + tank.final_level_tolerance, tag(Family::FinalLevel, &tank.node, 1, None)));
        }
    }
}

/// Global head range implied by the fixed heads, pipe surrogates and pump lift.
fn head_range(net: &Network, lin: &LinearizedModel) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &f in net.fixed_nodes() {
        let node = &net.nodes()[f];
        let (a, b) = match net.tank_at(f) {
            Some(t) => {
                let tank = &net.tanks()[t];
                (node.elevation + tank.level_min, node.elevation + tank.level_max)
            }
            None => (node.elevation, node.elevation),
        };
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let loss: f64 = lin.pipes.iter().map(|p| p.resistance * p.q2() * p.q2()).sum();
    let lift: f64 = lin.pumps.iter().map(|s| max_vertex_head(&s.pwl)).sum();
    (lo - loss, hi + lift)
}

fn max_vertex_head(pwl: &PumpPwl) -> f64 {
    pwl.vertices.iter().map(|v| v.h).fold(0.0, f64::max)
}

fn derive_big_u(lay: &VariableLayout, lin: &LinearizedModel, cfg: &BuildConfig, head_span: f64) -> BigUConfig {
    let mut u_power = Vec::new();
    let mut u_pump = Vec::new();
    for sur in &lin.pumps {
        let (t, pwl) = (sur.tangent, &sur.pwl);
        let corner_max = [(0.0, pwl.s_min), (0.0, pwl.s_max), (pwl.q_max, pwl.s_min), (pwl.q_max, pwl.s_max)]
            .iter()
            .map(|&(q, s)| t.eval(q, s).abs())
            .fold(0.0, f64::max);
        u_power.push(cfg.u_power.unwrap_or((2.0 * corner_max).max(2.0 * t.c.abs())));
        let head_max = max_vertex_head(pwl);
        u_pump.push(cfg.u_pump.unwrap_or((2.0 * head_max).max(head_span)));
    }
    let u_head = lay.pumps.iter().map(|p| vec![[u_pump[p.group]; 2]; lay.horizon]).collect();
    // Plane values are interpolations of non-negative vertex heads.
    let lift = lay.pumps.iter().map(|p| vec![[0.0, max_vertex_head(&lin.pumps[p.group].pwl)]; lay.horizon]).collect();
    BigUConfig { u_power, u_pump, u_head, lift }
}

/// Interval of a head reference under column bounds.
fn head_interval(h: &HeadRef, lo: &[f64], hi: &[f64]) -> (f64, f64) {
    match *h {
        HeadRef::Col(c) => (lo[c], hi[c]),
        HeadRef::Const(v) => (v, v),
    }
}

pub fn build_milp(net: &Network, lin: &LinearizedModel, cfg: &BuildConfig) -> Result<ScheduleMilp, BuildError> {
    if lin.pipes.len() != net.pipes().len() {
        return Err(BuildError::Coverage(format!("{} pipe surrogates for {} pipes", lin.pipes.len(), net.pipes().len())));
    }
    if lin.pumps.len() != net.pump_groups().len() {
        return Err(BuildError::Coverage(format!(
            "{} pump surrogates for {} groups",
            lin.pumps.len(),
            net.pump_groups().len()
        )));
    }
    let lay = VariableLayout::new(net);
    let (h_lo, h_hi) = head_range(net, lin);
    let mut big_u = derive_big_u(&lay, lin, cfg, h_hi - h_lo);
    let calc_pos: HashMap<usize, usize> = net.calculated_nodes().iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut b = Builder { net, lin, lay: &lay, calc_pos, eq: Vec::new(), ineq: Vec::new() };
    let (objective, mut lower, mut upper) = column_boxes(net, lin, &lay, &big_u, (h_lo, h_hi));
    let mut problem = MilpProblem {
        name: net.name().unwrap_or("pump_schedule").replace(char::is_whitespace, "_"),
        col_names: (0..lay.len()).map(|c| lay.name(c)).collect(),
        objective,
        eq: Vec::new(),
        ineq: Vec::new(),
        lower: lower.clone(),
        upper: upper.clone(),
        integer: lay.integer_columns(),
    };
    (problem.eq, problem.ineq) = b.assemble(cfg, &big_u);

    if cfg.bound_tightening {
        let opts = PropagationOptions::default();
        // A few rounds: tighter head bounds give smaller head big-U
        // constants, which in turn propagate further.
        for _ in 0..3 {
            let Ok((mut lo, mut hi)) = tighten_bounds(&problem, &opts) else { break };
            if probe_binaries(&problem, &mut lo, &mut hi, &opts).is_err() {
                break;
            }
            let mut improved = false;
            if cfg.u_pump.is_none() {
                for (j, unit) in lay.pumps.iter().enumerate() {
                    let (o, d) = net.endpoints(net.group_element(unit.group));
                    for k in 0..lay.horizon {
                        // Head rows only bind a stopped pump, so probe n = 0.
                        let n = lay.index(VarKind::NPump, j, 0, k);
                        let Ok((plo, phi)) = probe(&problem, &lo, &hi, n, 0.0, &opts) else { continue };
                        let (to_lo, to_hi) = head_interval(&b.head(d, k), &plo, &phi);
                        let (from_lo, from_hi) = head_interval(&b.head(o, k), &plo, &phi);
                        let slack = [to_hi - from_lo, from_hi - to_lo];
                        for side in 0..2 {
                            let u = slack[side] + 1e-6 * slack[side].abs().max(1.0);
                            if u < big_u.u_head[j][k][side] * (1.0 - 1e-6) {
                                big_u.u_head[j][k][side] = u;
                                improved = true;
                            }
                        }
                        if !cfg.envelope_cuts {
                            continue;
                        }
                        // A running pump lifts exactly h_to - h_from.
                        let Ok((plo, phi)) = probe(&problem, &lo, &hi, n, 1.0, &opts) else { continue };
                        let (to_lo, to_hi) = head_interval(&b.head(d, k), &plo, &phi);
                        let (from_lo, from_hi) = head_interval(&b.head(o, k), &plo, &phi);
                        let lift = &mut big_u.lift[j][k];
                        let margin = |v: f64| 1e-6 * v.abs().max(1.0);
                        let lift_lo = to_lo - from_hi - margin(to_lo - from_hi);
                        let lift_hi = to_hi - from_lo + margin(to_hi - from_lo);
                        if lift_lo > lift[0] + 1e-6 * lift[0].abs().max(1.0) {
                            lift[0] = lift_lo.min(lift[1]);
                            improved = true;
                        }
                        if lift_hi < lift[1] - 1e-6 * lift[1].abs().max(1.0) {
                            lift[1] = lift_hi.max(lift[0]);
                            improved = true;
                        }
                    }
                }
            }
            lower = lo;
            upper = hi;
            problem.lower.clone_from(&lower);
            problem.upper.clone_from(&upper);
            if !improved {
                break;
            }
            (problem.eq, problem.ineq) = b.assemble(cfg, &big_u);
        }
    }
    let milp = ScheduleMilp { problem, layout: lay.clone(), big_u, config: cfg.clone() };
    audit(net, &milp.problem, cfg)?;
    Ok(milp)
}

type Boxes = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Objective and structural column bounds.
fn column_boxes(net: &Network, lin: &LinearizedModel, lay: &VariableLayout, big_u: &BigUConfig, (h_lo, h_hi): (f64, f64)) -> Boxes {
    let n = lay.len();
    let mut objective = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let tariff = &net.inputs().tariff;
    for col in 0..n {
        let key = lay.key(col);
        let (lo, hi) = match key.kind {
            VarKind::Hc => (h_lo, h_hi),
            VarKind::Ht => {
                let tank = &net.tanks()[key.element];
                let z = net.nodes()[net.tank_node(key.element)].elevation;
                (z + tank.level_min, z + tank.level_max)
            }
            VarKind::QPipe => {
                let q2 = lin.pipes[key.element].q2();
                (-q2, q2)
            }
            VarKind::Ww => {
                let (a, b) = lin.pipes[key.element].segment_range(key.segment);
                (a.min(0.0), b.max(0.0))
            }
            VarKind::QPump | VarKind::Qq => (0.0, lin.pumps[lay.pumps[key.element].group].pwl.q_max),
            VarKind::SPump | VarKind::Ss => (0.0, lin.pumps[lay.pumps[key.element].group].pwl.s_max),
            VarKind::PPump => {
                objective[col] = tariff[key.k] * net.dt_hours();
                (0.0, big_u.u_power[lay.pumps[key.element].group])
            }
            VarKind::NPump | VarKind::Bb | VarKind::Aa => (0.0, 1.0),
        };
        lower[col] = lo;
        upper[col] = hi;
    }
    (objective, lower, upper)
}

/// Closed-form row counts per family for a network; two-sided families
/// count both sides.
pub fn expected_row_counts(net: &Network, cfg: &BuildConfig) -> BTreeMap<Family, usize> {
    let k = net.horizon();
    let n_n = net.calculated_nodes().len();
    let n_t = net.tanks().len();
    let n_p = net.pipes().len();
    let n_pump = net.n_individual_pumps();
    let sym: usize = net.pump_groups().iter().map(|g| g.n_pumps as usize - 1).sum();
    let envelope = if cfg.envelope_cuts { 2 * n_pump * k } else { 0 };
    BTreeMap::from([
        (Family::NodeBalance, n_n * k),
        (Family::TankDynamics, n_t * k),
        (Family::PipeSegmentFlow, n_p * k),
        (Family::PipeSegmentSelect, n_p * k),
        (Family::PipeHeadloss, n_p * k),
        (Family::PumpSegmentSpeed, n_pump * k),
        (Family::PumpSegmentFlow, n_pump * k),
        (Family::PumpSegmentSelect, n_pump * k),
        (Family::PowerTangent, 2 * n_pump * k),
        (Family::PowerZero, 2 * n_pump * k),
        (Family::PipeSegmentBound, 2 * 3 * n_p * k),
        (Family::PumpSpeedBox, 2 * 4 * n_pump * k),
        (Family::PumpFlowBox, 2 * 4 * n_pump * k),
        (Family::PumpHead, 2 * n_pump * k),
        (Family::PumpDomain, 12 * n_pump * k),
        (Family::Symmetry, sym * k),
        (Family::FinalLevel, 2 * n_t),
        (Family::PumpEnvelope, envelope),
    ])
}

/// Compare row counts per family with the closed forms; also checks that
/// equality families only appear among equality rows and vice versa.
pub fn audit(net: &Network, problem: &MilpProblem, cfg: &BuildConfig) -> Result<(), BuildError> {
    let mut built: BTreeMap<Family, usize> = BTreeMap::new();
    for (row, is_eq) in problem.rows() {
        let expected_eq = Family::EQUALITY.contains(&row.tag.family);
        if expected_eq != is_eq || row.cols.is_empty() {
            return Err(BuildError::Audit { family: row.tag.family, built: 1, expected: 0 });
        }
        *built.entry(row.tag.family).or_insert(0) += 1;
    }
    for (family, expected) in expected_row_counts(net, cfg) {
        let got = built.get(&family).copied().unwrap_or(0);
        if got != expected {
            return Err(BuildError::Audit { family, built: got, expected });
        }
    }
    Ok(())
}
