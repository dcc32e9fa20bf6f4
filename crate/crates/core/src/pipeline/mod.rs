//! End-to-end orchestration: baseline simulation, linearization, MILP
//! build and solve, re-simulation of the optimized schedule, reporting,
//! batch experiments and independent solution checks.

mod batch;
mod plots;
mod report;
mod solution;
mod validate;

pub use batch::{
    run_batch, scenario_network, BatchError, BatchSpec, BatchSummary, OrderingCheck, Scenario, ScenarioOutcome,
};
pub use plots::{batch_plot_data, emit_plots_data, CsvFile};
pub use report::{
    optimize, peak_total_demand, perturb_demands, prepare, GroupRow, HeadRow, OptimizeConfig, PipelineError, PumpRow,
    RunOutcome, RunReport, StepRow, TankRow,
    SolverSummary, Stage, Timing,
};
pub use solution::{SolutionError, SolutionFile};
pub use validate::{validate_solution, FamilyResidual, ValidationReport, VALIDATION_TOL};
