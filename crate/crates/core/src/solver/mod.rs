//! LP and MIP solvers for [`MilpProblem`](crate::milp::MilpProblem).

pub mod bnb;
pub mod dense;
pub mod extract;
pub mod highs;
pub mod oracle;

pub use bnb::{BranchAndBound, BranchAndBoundOptions};
pub use extract::{extract_schedule, ExtractError, ExtractedSchedule};
pub use oracle::enumerate_oracle;

use serde::{Deserialize, Serialize};

use crate::milp::MilpProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    OptimalWithinGap,
    Infeasible,
    GapNotReached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipResult {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: u64,
    pub seconds: f64,
    /// Bound reports in run order (empty for external backends).
    #[serde(default)]
    pub progress: Vec<BoundReport>,
}

/// Lower and upper bound after `nodes` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub nodes: u64,
    pub lower: f64,
    pub upper: f64,
    pub seconds: f64,
}

/// An LP solver over a problem with overridden column bounds.
pub trait LpBackend {
    fn solve(&mut self, p: &MilpProblem, lower: &[f64], upper: &[f64]) -> Result<LpSolution, SolverError>;
}

/// The embedded dense simplex.
#[derive(Clone, Copy, Debug, Default)]
pub struct DenseLp(pub dense::SimplexOptions);

impl LpBackend for DenseLp {
    fn solve(&mut self, p: &MilpProblem, lower: &[f64], upper: &[f64]) -> Result<LpSolution, SolverError> {
        dense::solve_lp_bounded(p, lower, upper, &self.0)
    }
}

/// The HiGHS simplex.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsLp;

impl LpBackend for HighsLp {
    fn solve(&mut self, p: &MilpProblem, lower: &[f64], upper: &[f64]) -> Result<LpSolution, SolverError> {
        highs::solve_lp_bounded(p, lower, upper)
    }
}

/// LP engine used inside the branch-and-bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpEngine {
    Dense,
    Highs,
    /// Dense for small problems, HiGHS otherwise.
    Auto,
}

/// Which MIP search runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipEngine {
    /// The embedded branch-and-bound with the given LP engine.
    BranchAndBound(LpEngine),
    /// HiGHS' own branch-and-cut.
    Highs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipOptions {
    pub gap: f64,
    pub time_limit: f64,
    pub engine: MipEngine,
    /// Share of effort HiGHS spends in primal heuristics.
    #[serde(default = "default_heuristic_effort")]
    pub heuristic_effort: f64,
}

fn default_heuristic_effort() -> f64 {
    highs::HEURISTIC_EFFORT
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions { gap: 0.05, time_limit: 300.0, engine: MipEngine::Highs, heuristic_effort: highs::HEURISTIC_EFFORT }
    }
}

/// Dense tableau size (rows × columns) below which `LpEngine::Auto` picks
/// the dense simplex.
pub const DENSE_AUTO_LIMIT: usize = 250_000;

fn dense_fits(p: &MilpProblem) -> bool {
    let rows = p.eq.len() + p.ineq.len();
    rows * (p.n_cols() + p.ineq.len() + rows) <= DENSE_AUTO_LIMIT
}

/// Solve the LP relaxation with the engine's default LP.
pub fn solve_lp(p: &MilpProblem, engine: LpEngine) -> Result<LpSolution, SolverError> {
    match engine {
        LpEngine::Dense => dense::solve_lp(p),
        LpEngine::Highs => highs::solve_lp(p),
        LpEngine::Auto if dense_fits(p) => dense::solve_lp(p),
        LpEngine::Auto => highs::solve_lp(p),
    }
}

/// Solve `p` to relative gap `gap` within `time_limit` seconds with the
/// default engine.
pub fn solve_mip(p: &MilpProblem, gap: f64, time_limit: f64) -> Result<MipResult, SolverError> {
    solve_mip_with(p, &MipOptions { gap, time_limit, ..MipOptions::default() })
}

pub fn solve_mip_with(p: &MilpProblem, opts: &MipOptions) -> Result<MipResult, SolverError> {
    if !(0.0..1.0).contains(&opts.gap) {
        return Err(SolverError::Backend(format!("gap target {} outside [0, 1)", opts.gap)));
    }
    let bnb = BranchAndBoundOptions { gap: opts.gap, time_limit: opts.time_limit, ..BranchAndBoundOptions::default() };
    match opts.engine {
        MipEngine::Highs => highs::solve_mip(p, opts.gap, opts.time_limit, opts.heuristic_effort),
        MipEngine::BranchAndBound(LpEngine::Dense) => BranchAndBound::new(p, DenseLp::default(), bnb).solve(),
        MipEngine::BranchAndBound(LpEngine::Highs) => BranchAndBound::new(p, HighsLp, bnb).solve(),
        MipEngine::BranchAndBound(LpEngine::Auto) => {
            if dense_fits(p) {
                BranchAndBound::new(p, DenseLp::default(), bnb).solve()
            } else {
                BranchAndBound::new(p, HighsLp, bnb).solve()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem has {found} binaries, the oracle accepts at most {max}")]
    TooManyBinaries { found: usize, max: usize },
    #[error("column {col} has an infinite bound")]
    UnboundedColumn { col: usize },
    #[error("backend error: {0}")]
    Backend(String),
}

/// Relative gap with the `max(|UB|, 1e-9)` denominator.
pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if upper == f64::INFINITY {
        return f64::INFINITY;
    }
    ((upper - lower) / upper.abs().max(1e-9)).max(0.0)
}
