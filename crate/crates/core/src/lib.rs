//! Pump scheduling for water distribution networks with variable-speed
//! pumps: an extended-period hydraulic simulator, linear surrogates of the
//! pipe and pump characteristics, a mixed-integer program over pump
//! statuses and speeds, solvers for it, and the pipeline tying them
//! together.

pub mod network;
pub mod hydraulics;
pub mod linearize;
pub mod milp;
pub mod solver;
pub mod pipeline;

pub use hydraulics::{simulate_eps, GroupSchedule, SimulationResult};
pub use milp::{MilpProblem, ScheduleMilp};
pub use network::{canonical_network, load_network, Network, NetworkFile};
pub use pipeline::{optimize, run_batch, validate_solution, BatchSpec, OptimizeConfig, RunReport, ValidationReport};
pub use solver::{MipOptions, MipResult, MipStatus};
