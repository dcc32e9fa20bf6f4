//! Nonlinear hydraulic simulation: per-step steady-state Newton solves
//! coupled through tank storage.

mod eps;
mod pump;
mod steady;

pub use eps::{
    simulate_eps, GroupSchedule, GroupSeries, LevelViolation, ScheduleFile, SimulationError, SimulationResult,
};
pub use pump::{group_power, intercept_flow};
pub use steady::{solve_steady_state, GroupControl, HydraulicState, NewtonOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HydraulicError {
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian after regularization retries")]
    SingularJacobian,
    #[error("infeasible hydraulics: {0}")]
    InfeasibleHydraulics(String),
    #[error("pump curve domain error: {0}")]
    Domain(String),
    #[error("head curve has no positive root")]
    NoPositiveRoot,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Net inflow minus demand at every calculated node for a given flow vector.
pub fn mass_balance_residual(
    network: &crate::network::Network,
    flows: &[f64],
    demand: &[f64],
) -> Vec<f64> {
    let inc = network.incidence();
    inc.calculated
        .iter()
        .zip(demand)
        .map(|(row, d)| {
            let inflow: f64 = row.iter().zip(flows).map(|(&l, q)| -(l as f64) * q).sum();
            inflow - d
        })
        .collect()
}
