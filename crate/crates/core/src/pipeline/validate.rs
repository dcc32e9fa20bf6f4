use serde::{Deserialize, Serialize};

use crate::milp::{Family, MilpProblem};

/// Largest residual accepted by [`validate_solution`].
pub const VALIDATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResidual {
    pub family: Family,
    pub max_residual: f64,
    /// Name of the row attaining the maximum.
    pub worst_row: String,
}

/// Residuals of a column vector against a problem, checked independently
/// of the solver that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub families: Vec<FamilyResidual>,
    pub bound_violation: f64,
    pub worst_bound_column: Option<String>,
    pub integrality_violation: f64,
    pub worst_integer_column: Option<String>,
    /// Families whose residual exceeds the tolerance.
    pub failing_families: Vec<Family>,
    pub pass: bool,
}

pub fn validate_solution(problem: &MilpProblem, x: &[f64]) -> ValidationReport {
    if x.len() != problem.n_cols() {
        return ValidationReport {
            families: vec![],
            bound_violation: f64::INFINITY,
            worst_bound_column: None,
            integrality_violation: f64::INFINITY,
            worst_integer_column: None,
            failing_families: vec![],
            pass: false,
        };
    }
    let mut families: Vec<FamilyResidual> = Vec::new();
    for (row, is_eq) in problem.rows() {
        let r = row.activity(x) - row.rhs;
        let v = if is_eq { r.abs() } else { r.max(0.0) };
        match families.iter_mut().find(|f| f.family == row.tag.family) {
            Some(f) if v > f.max_residual => {
                f.max_residual = v;
                f.worst_row = row.tag.name();
            }
            Some(_) => {}
            None => families.push(FamilyResidual { family: row.tag.family, max_residual: v, worst_row: row.tag.name() }),
        }
    }
    families.sort_by_key(|f| f.family);

    let (mut bound_violation, mut worst_bound_column) = (0.0, None);
    for (c, v) in x.iter().enumerate() {
        let viol = (problem.lower[c] - v).max(v - problem.upper[c]).max(0.0);
        if viol > bound_violation {
            bound_violation = viol;
            worst_bound_column = Some(problem.col_names[c].clone());
        }
    }
    let (mut integrality_violation, mut worst_integer_column) = (0.0, None);
    for &j in &problem.integer {
        let viol = (x[j] - x[j].round()).abs();
        if viol > integrality_violation {
            integrality_violation = viol;
            worst_integer_column = Some(problem.col_names[j].clone());
        }
    }
    let failing_families: Vec<Family> =
        families.iter().filter(|f| f.max_residual > VALIDATION_TOL).map(|f| f.family).collect();
    let pass = failing_families.is_empty() && bound_violation <= VALIDATION_TOL && integrality_violation <= VALIDATION_TOL;
    ValidationReport {
        families,
        bound_violation,
        worst_bound_column,
        integrality_violation,
        worst_integer_column,
        failing_families,
        pass,
    }
}
