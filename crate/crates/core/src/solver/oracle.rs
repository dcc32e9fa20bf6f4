//! Exhaustive enumeration oracle for tiny problems.
//!
//! Every assignment of the binaries that survive root propagation is
//! visited depth-first in column order. A subtree is cut only when bound
//! propagation over the rows shows that no assignment in it can satisfy
//! them; no objective bound is used. Each complete assignment is scored by
//! the LP over the continuous columns.

use std::time::Instant;

use super::{relative_gap, DenseLp, LpBackend, LpStatus, MipResult, MipStatus, SolverError};
use crate::milp::presolve::{propagate, PropagationOptions};
use crate::milp::MilpProblem;

/// Default cap on free binaries.
pub const DEFAULT_MAX_BINARIES: usize = 24;

/// Free binaries after root propagation.
pub fn free_binaries(p: &MilpProblem) -> Result<Vec<usize>, SolverError> {
    let (mut lo, mut hi) = (p.lower.clone(), p.upper.clone());
    propagate(p, &mut lo, &mut hi, &PropagationOptions::default()).map_err(|_| SolverError::Infeasible)?;
    Ok(p.integer.iter().copied().filter(|&j| lo[j] < hi[j]).collect())
}

pub fn enumerate_oracle(p: &MilpProblem, max_binaries: usize) -> Result<MipResult, SolverError> {
    enumerate_with(p, max_binaries, DenseLp::default())
}

pub fn enumerate_with<B: LpBackend>(p: &MilpProblem, max_binaries: usize, mut lp: B) -> Result<MipResult, SolverError> {
    let start = Instant::now();
    let opts = PropagationOptions::default();
    let (mut lo, mut hi) = (p.lower.clone(), p.upper.clone());
    propagate(p, &mut lo, &mut hi, &opts).map_err(|_| SolverError::Infeasible)?;
    let free: Vec<usize> = p.integer.iter().copied().filter(|&j| lo[j] < hi[j]).collect();
    if free.len() > max_binaries {
        return Err(SolverError::TooManyBinaries { found: free.len(), max: max_binaries });
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut leaves = 0u64;
    // Explicit stack of (bounds, depth in `free`).
    let mut stack = vec![(lo, hi, 0usize)];
    while let Some((lo, hi, depth)) = stack.pop() {
        // Skip binaries already fixed by propagation.
        let mut d = depth;
        while d < free.len() && lo[free[d]] == hi[free[d]] {
            d += 1;
        }
        if d == free.len() {
            leaves += 1;
            let sol = lp.solve(p, &lo, &hi)?;
            if sol.status == LpStatus::Optimal {
                let mut x = sol.x;
                for &j in &p.integer {
                    x[j] = x[j].round();
                }
                let obj = p.objective_value(&x);
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, x));
                }
            }
            continue;
        }
        let j = free[d];
        // Push 1 first so that 0 is explored first.
        for v in [1.0, 0.0] {
            let (mut l, mut h) = (lo.clone(), hi.clone());
            l[j] = v;
            h[j] = v;
            if propagate(p, &mut l, &mut h, &opts).is_ok() {
                stack.push((l, h, d + 1));
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let (objective, x) = best.ok_or(SolverError::Infeasible)?;
    Ok(MipResult {
        status: MipStatus::OptimalWithinGap,
        x,
        objective,
        bound: objective,
        gap: relative_gap(objective, objective),
        nodes: leaves,
        seconds,
        progress: vec![],
    })
}
