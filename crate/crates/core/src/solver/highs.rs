//! HiGHS backend.

use std::time::Instant;

use highs::{HighsModelStatus, Model, RowProblem, Sense};

use super::{relative_gap, LpSolution, LpStatus, MipResult, MipStatus, SolverError};
use crate::milp::MilpProblem;

/// Load `p` into a HiGHS model, optionally dropping integrality.
pub fn to_model(p: &MilpProblem, relax: bool) -> Model {
    to_model_bounded(p, &p.lower, &p.upper, relax)
}

/// As [`to_model`] with overridden column bounds.
pub fn to_model_bounded(p: &MilpProblem, lower: &[f64], upper: &[f64], relax: bool) -> Model {
    let mut hp = RowProblem::default();
    let cols: Vec<_> = (0..p.n_cols())
        .map(|c| {
            let int = !relax && p.is_integer(c);
            hp.add_column_with_integrality(p.objective[c], lower[c]..=upper[c], int)
        })
        .collect();
    for row in &p.eq {
        let terms: Vec<_> = row.cols.iter().zip(&row.vals).map(|(&c, &v)| (cols[c], v)).collect();
        hp.add_row(row.rhs..=row.rhs, terms);
    }
    for row in &p.ineq {
        let terms: Vec<_> = row.cols.iter().zip(&row.vals).map(|(&c, &v)| (cols[c], v)).collect();
        hp.add_row(..=row.rhs, terms);
    }
    let mut model = hp.optimise(Sense::Minimise);
    model.make_quiet();
    model.set_option("threads", 1);
    model.set_option("random_seed", 0);
    model
}

pub fn solve_lp(p: &MilpProblem) -> Result<LpSolution, SolverError> {
    solve_lp_bounded(p, &p.lower, &p.upper)
}

pub fn solve_lp_bounded(p: &MilpProblem, lower: &[f64], upper: &[f64]) -> Result<LpSolution, SolverError> {
    if (0..p.n_cols()).any(|c| lower[c] > upper[c]) {
        return Ok(LpSolution { status: LpStatus::Infeasible, objective: f64::INFINITY, x: vec![] });
    }
    let mut solved = to_model_bounded(p, lower, upper, true).solve();
    if solved.status() == HighsModelStatus::Infeasible {
        // Presolve can reject LPs with many fixed columns that are feasible
        // to well within tolerance; confirm on the original model.
        let mut model = to_model_bounded(p, lower, upper, true);
        model.set_option("presolve", "off");
        solved = model.solve();
    }
    match solved.status() {
        HighsModelStatus::Optimal => Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: p.objective_value(solved.get_solution().columns()),
            x: solved.get_solution().columns().to_vec(),
        }),
        HighsModelStatus::Infeasible => Ok(LpSolution { status: LpStatus::Infeasible, objective: f64::INFINITY, x: vec![] }),
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            Ok(LpSolution { status: LpStatus::Unbounded, objective: f64::NEG_INFINITY, x: vec![] })
        }
        other => Err(SolverError::Backend(format!("LP status {other:?}"))),
    }
}

/// Share of HiGHS' MIP effort spent in primal heuristics (the library
/// default). Incumbents come early on these problems; the effort is better
/// spent on the bound.
pub const HEURISTIC_EFFORT: f64 = 0.05;

pub fn solve_mip(p: &MilpProblem, gap: f64, time_limit: f64, heuristic_effort: f64) -> Result<MipResult, SolverError> {
    let start = Instant::now();
    let mut model = to_model(p, false);
    model.set_option("mip_rel_gap", gap);
    model.set_option("mip_abs_gap", if gap == 0.0 { 0.0 } else { 1e-6 });
    model.set_option("time_limit", time_limit);
    model.set_option("mip_heuristic_effort", heuristic_effort);
    let solved = model.solve();
    let seconds = start.elapsed().as_secs_f64();
    let status = solved.status();
    // The node count is an int64 info value that this binding cannot read.
    let nodes = 0;
    let bound = solved.double_info_value(c"mip_dual_bound").unwrap_or(f64::NEG_INFINITY);
    match status {
        HighsModelStatus::Infeasible => Err(SolverError::Infeasible),
        HighsModelStatus::Optimal | HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            let x = solved.get_solution().columns().to_vec();
            if x.is_empty() || solved.primal_solution_status() != highs::HighsSolutionStatus::Feasible {
                return Ok(MipResult {
                    status: MipStatus::GapNotReached,
                    x: vec![],
                    objective: f64::INFINITY,
                    bound,
                    gap: f64::INFINITY,
                    nodes,
                    seconds,
                    progress: vec![],
                });
            }
            let x = polish(p, x);
            let objective = p.objective_value(&x);
            let g = relative_gap(objective, bound);
            let status = if status == HighsModelStatus::Optimal || g <= gap {
                MipStatus::OptimalWithinGap
            } else {
                MipStatus::GapNotReached
            };
            Ok(MipResult { status, x, objective, bound, gap: g, nodes, seconds, progress: vec![] })
        }
        other => Err(SolverError::Backend(format!("MIP status {other:?}"))),
    }
}

/// Round the binaries of a MIP incumbent, fix them and re-solve the LP, so
/// the returned point has exactly integral binaries and rows satisfied to
/// LP accuracy. Falls back to the rounded point if the re-solve fails.
fn polish(p: &MilpProblem, mut x: Vec<f64>) -> Vec<f64> {
    let (mut lo, mut hi) = (p.lower.clone(), p.upper.clone());
    for &j in &p.integer {
        let v = x[j].round().clamp(lo[j], hi[j]);
        x[j] = v;
        lo[j] = v;
        hi[j] = v;
    }
    match solve_lp_bounded(p, &lo, &hi) {
        Ok(sol) if sol.status == LpStatus::Optimal => {
            let mut y = sol.x;
            for &j in &p.integer {
                y[j] = x[j];
            }
            y
        }
        _ => x,
    }
}
