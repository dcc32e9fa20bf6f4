//! LP-based branch-and-bound.
//!
//! Best-bound node selection (ties: deeper first, then creation order),
//! most-fractional branching (ties: smallest column index), bound
//! propagation at every node and a rounding heuristic that fixes the
//! rounded binaries and re-solves the LP. Integer incumbents are always
//! re-solved with their binaries fixed so that the reported point
//! satisfies the rows to LP accuracy with exactly integral binaries.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{relative_gap, BoundReport, LpBackend, LpStatus, MipResult, MipStatus, SolverError};
use crate::milp::presolve::{propagate, PropagationOptions};
use crate::milp::MilpProblem;

/// Integrality tolerance for binaries.
pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchAndBoundOptions {
    pub gap: f64,
    pub time_limit: f64,
    /// Run the rounding heuristic at every node.
    pub rounding: bool,
    /// Propagate bounds at every node.
    pub propagation: bool,
    pub node_limit: Option<u64>,
}

impl Default for BranchAndBoundOptions {
    fn default() -> Self {
        BranchAndBoundOptions { gap: 0.05, time_limit: 300.0, rounding: true, propagation: true, node_limit: None }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    /// Max-heap order: the "greatest" node is popped first, i.e. the
    /// smallest bound, then the deepest, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Index of the most fractional binary, or `None` if all are integral.
pub fn most_fractional(p: &MilpProblem, x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in &p.integer {
        let f = x[j] - x[j].floor();
        let dist = f.min(1.0 - f);
        if dist > INT_TOL && best.map_or(true, |(_, d)| dist > d + 1e-12) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

pub struct BranchAndBound<'a, B: LpBackend> {
    p: &'a MilpProblem,
    backend: B,
    opts: BranchAndBoundOptions,
    prop: PropagationOptions,
}

impl<'a, B: LpBackend> BranchAndBound<'a, B> {
    pub fn new(p: &'a MilpProblem, backend: B, opts: BranchAndBoundOptions) -> Self {
        BranchAndBound { p, backend, opts, prop: PropagationOptions::default() }
    }

    fn node_bounds(&self, root: &(Vec<f64>, Vec<f64>), fixings: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (mut lo, mut hi) = root.clone();
        for &(c, v) in fixings {
            if v < lo[c] - INT_TOL || v > hi[c] + INT_TOL {
                return None;
            }
            lo[c] = v;
            hi[c] = v;
        }
        if self.opts.propagation && propagate(self.p, &mut lo, &mut hi, &self.prop).is_err() {
            return None;
        }
        Some((lo, hi))
    }

    /// Fix the binaries of `x` at their rounded values and re-solve.
    fn fixed_solve(&mut self, lo: &[f64], hi: &[f64], x: &[f64]) -> Result<Option<(f64, Vec<f64>)>, SolverError> {
        let (mut l, mut h) = (lo.to_vec(), hi.to_vec());
        for &j in &self.p.integer {
            let v = x[j].round().clamp(l[j], h[j]);
            l[j] = v;
            h[j] = v;
        }
        if self.opts.propagation && propagate(self.p, &mut l, &mut h, &self.prop).is_err() {
            return Ok(None);
        }
        let sol = self.backend.solve(self.p, &l, &h)?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        let mut x = sol.x;
        for &j in &self.p.integer {
            x[j] = x[j].round();
        }
        Ok(Some((self.p.objective_value(&x), x)))
    }

    pub fn solve(mut self) -> Result<MipResult, SolverError> {
        let start = Instant::now();
        let p = self.p;
        let mut root = (p.lower.clone(), p.upper.clone());
        if propagate(p, &mut root.0, &mut root.1, &self.prop).is_err() {
            return Err(SolverError::Infeasible);
        }
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, seq, fixings: vec![] });
        let mut incumbent: Option<Vec<f64>> = None;
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut nodes = 0u64;
        let mut progress: Vec<BoundReport> = Vec::new();
        let mut tried: HashSet<Vec<u8>> = HashSet::new();
        let mut timed_out = false;
        let mut pruned_min = f64::INFINITY;
        let report = |progress: &mut Vec<BoundReport>, nodes: u64, lb: f64, ub: f64, t: f64| {
            if progress.last().map_or(true, |r| r.lower != lb || r.upper != ub) {
                progress.push(BoundReport { nodes, lower: lb, upper: ub, seconds: t });
            }
        };

        while let Some(node) = heap.pop() {
            let elapsed = start.elapsed().as_secs_f64();
            if elapsed > self.opts.time_limit || self.opts.node_limit.is_some_and(|n| nodes >= n) {
                heap.push(node);
                timed_out = true;
                break;
            }
            // Best-first: the popped bound is the global lower bound.
            let global = node.bound.min(pruned_min).min(ub);
            lb = lb.max(global);
            report(&mut progress, nodes, lb, ub, elapsed);
            if ub.is_finite() && relative_gap(ub, global) <= self.opts.gap {
                heap.push(node);
                break;
            }
            let Some((lo, hi)) = self.node_bounds(&root, &node.fixings) else { continue };
            let sol = self.backend.solve(p, &lo, &hi)?;
            nodes += 1;
            if sol.status != LpStatus::Optimal {
                continue;
            }
            let bound = sol.objective.max(node.bound);
            if ub.is_finite() && bound >= ub - (self.opts.gap * ub.abs().max(1e-9)).max(1e-9 * ub.abs().max(1.0)) {
                // The pruned subtree may still hold the bound of the run.
                pruned_min = pruned_min.min(bound);
                continue;
            }
            let branch = most_fractional(p, &sol.x);
            let key: Vec<u8> = p.integer.iter().map(|&j| sol.x[j].round() as u8).collect();
            if (branch.is_none() || self.opts.rounding) && tried.insert(key) {
                if let Some((obj, x)) = self.fixed_solve(&lo, &hi, &sol.x)? {
                    if obj < ub {
                        ub = obj;
                        incumbent = Some(x);
                        report(&mut progress, nodes, lb.min(ub), ub, start.elapsed().as_secs_f64());
                    }
                }
            }
            let Some(j) = branch else { continue };
            for v in [0.0, 1.0] {
                seq += 1;
                let mut fixings = node.fixings.clone();
                fixings.push((j, v));
                heap.push(Node { bound, depth: node.depth + 1, seq, fixings });
            }
        }

        let open_min = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let lower = open_min.min(pruned_min).min(ub).max(lb);
        let seconds = start.elapsed().as_secs_f64();
        report(&mut progress, nodes, lower, ub, seconds);
        let Some(x) = incumbent else {
            if timed_out {
                return Ok(MipResult {
                    status: MipStatus::GapNotReached,
                    x: vec![],
                    objective: f64::INFINITY,
                    bound: lower,
                    gap: f64::INFINITY,
                    nodes,
                    seconds,
                    progress,
                });
            }
            return Err(SolverError::Infeasible);
        };
        let gap = relative_gap(ub, lower);
        let status = if gap <= self.opts.gap || heap.is_empty() { MipStatus::OptimalWithinGap } else { MipStatus::GapNotReached };
        Ok(MipResult { status, x, objective: ub, bound: lower, gap, nodes, seconds, progress })
    }
}
