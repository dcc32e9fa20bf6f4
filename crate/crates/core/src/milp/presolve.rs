//! Bound tightening by activity propagation.
//!
//! Every row `a·x <= b` (equalities contribute both sides) implies, for each
//! column `j`, `a_j x_j <= b - min_{i != j} a_i x_i`. Iterating these
//! implications to a fixed point shrinks the column boxes without removing
//! any feasible point. Integer columns are rounded inward.

use super::MilpProblem;

/// Reported when propagation proves the problem infeasible.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("bounds of column {col} crossed during propagation: [{lower}, {upper}]")]
pub struct PresolveInfeasible {
    pub col: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    pub max_passes: usize,
    /// Minimum improvement, relative to `max(1, |bound|)`, worth recording.
    pub min_improvement: f64,
    /// Safety margin added back to every derived bound.
    pub margin: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions { max_passes: 60, min_improvement: 1e-6, margin: 1e-7 }
    }
}

/// Tightened `(lower, upper)` starting from the problem's own bounds.
pub fn tighten_bounds(problem: &MilpProblem, opts: &PropagationOptions) -> Result<(Vec<f64>, Vec<f64>), PresolveInfeasible> {
    let mut lo = problem.lower.clone();
    let mut hi = problem.upper.clone();
    propagate(problem, &mut lo, &mut hi, opts)?;
    Ok((lo, hi))
}

/// Propagate in place over the supplied bounds (e.g. with some binaries
/// fixed by branching).
pub fn propagate(problem: &MilpProblem, lo: &mut [f64], hi: &mut [f64], opts: &PropagationOptions) -> Result<(), PresolveInfeasible> {
    let mut is_int = vec![false; problem.n_cols()];
    for &j in &problem.integer {
        is_int[j] = true;
    }
    // Each side as (row, sign): sign * (a·x) <= sign * rhs.
    let mut sides: Vec<(&super::Row, f64)> = Vec::with_capacity(2 * problem.eq.len() + problem.ineq.len());
    for r in &problem.eq {
        sides.push((r, 1.0));
        sides.push((r, -1.0));
    }
    for r in &problem.ineq {
        sides.push((r, 1.0));
    }
    for _ in 0..opts.max_passes {
        let mut changed = false;
        for &(row, sign) in &sides {
            let rhs = sign * row.rhs;
            let min_act: f64 = row
                .cols
                .iter()
                .zip(&row.vals)
                .map(|(&c, &v)| {
                    let a = sign * v;
                    if a > 0.0 {
                        a * lo[c]
                    } else {
                        a * hi[c]
                    }
                })
                .sum();
            if !min_act.is_finite() {
                continue;
            }
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                let a = sign * v;
                let own = if a > 0.0 { a * lo[c] } else { a * hi[c] };
                let slack = rhs - (min_act - own);
                let scale = |b: f64| opts.margin * b.abs().max(1.0);
                if a > 0.0 {
                    let mut nb = slack / a;
                    nb += scale(nb);
                    if is_int[c] {
                        nb = (nb + 1e-9).floor();
                    }
                    if nb < hi[c] - opts.min_improvement * hi[c].abs().max(1.0) {
                        hi[c] = nb;
                        changed = true;
                    }
                } else {
                    let mut nb = slack / a;
                    nb -= scale(nb);
                    if is_int[c] {
                        nb = (nb - 1e-9).ceil();
                    }
                    if nb > lo[c] + opts.min_improvement * lo[c].abs().max(1.0) {
                        lo[c] = nb;
                        changed = true;
                    }
                }
                if lo[c] > hi[c] {
                    let tol = 1e-6 * lo[c].abs().max(1.0);
                    if lo[c] - hi[c] > tol {
                        return Err(PresolveInfeasible { col: c, lower: lo[c], upper: hi[c] });
                    }
                    let m = 0.5 * (lo[c] + hi[c]);
                    lo[c] = m;
                    hi[c] = m;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(())
}

/// Bounds implied by fixing column `col` to `value` on top of `lo`/`hi`.
pub fn probe(
    problem: &MilpProblem,
    lo: &[f64],
    hi: &[f64],
    col: usize,
    value: f64,
    opts: &PropagationOptions,
) -> Result<(Vec<f64>, Vec<f64>), PresolveInfeasible> {
    let mut l = lo.to_vec();
    let mut h = hi.to_vec();
    l[col] = value;
    h[col] = value;
    propagate(problem, &mut l, &mut h, opts)?;
    Ok((l, h))
}

/// Fix every free binary whose opposite value propagates to infeasibility;
/// when both values are feasible, keep the hull of the two probed boxes.
/// Returns the number of columns fixed.
pub fn probe_binaries(problem: &MilpProblem, lo: &mut [f64], hi: &mut [f64], opts: &PropagationOptions) -> Result<usize, PresolveInfeasible> {
    let mut fixed = 0;
    for &j in &problem.integer {
        if lo[j] == hi[j] {
            continue;
        }
        let zero = probe(problem, lo, hi, j, 0.0, opts);
        let one = probe(problem, lo, hi, j, 1.0, opts);
        match (zero, one) {
            (Err(e), Err(_)) => return Err(e),
            (Ok((l, h)), Err(_)) | (Err(_), Ok((l, h))) => {
                lo.copy_from_slice(&l);
                hi.copy_from_slice(&h);
                fixed += 1;
            }
            (Ok((l0, h0)), Ok((l1, h1))) => {
                for c in 0..lo.len() {
                    lo[c] = lo[c].max(l0[c].min(l1[c]));
                    hi[c] = hi[c].min(h0[c].max(h1[c]));
                }
            }
        }
    }
    Ok(fixed)
}
