use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::milp::MilpProblem;
use crate::solver::{MipResult, MipStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolutionError {
    #[error("solution JSON: {0}")]
    Parse(String),
    #[error("solution has no value for column {0}")]
    MissingColumn(String),
    #[error("solution names column {0}, which the problem does not have")]
    UnknownColumn(String),
}

/// Solver-independent solution file: column name → value plus run stats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: MipStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: u64,
    pub seconds: f64,
    pub values: BTreeMap<String, f64>,
}

impl SolutionFile {
    pub fn from_result(problem: &MilpProblem, result: &MipResult) -> SolutionFile {
        SolutionFile {
            status: result.status,
            objective: result.objective,
            bound: result.bound,
            gap: result.gap,
            nodes: result.nodes,
            seconds: result.seconds,
            values: problem.col_names.iter().cloned().zip(result.x.iter().copied()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<SolutionFile, SolutionError> {
        serde_json::from_str(text).map_err(|e| SolutionError::Parse(e.to_string()))
    }

    /// Values in the column order of `problem`.
    pub fn to_vector(&self, problem: &MilpProblem) -> Result<Vec<f64>, SolutionError> {
        if let Some(name) = self.values.keys().find(|n| !problem.col_names.contains(n)) {
            return Err(SolutionError::UnknownColumn(name.clone()));
        }
        problem
            .col_names
            .iter()
            .map(|n| self.values.get(n).copied().ok_or_else(|| SolutionError::MissingColumn(n.clone())))
            .collect()
    }
}
