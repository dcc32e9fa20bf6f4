//! The pump-scheduling MILP: column layout, row assembly, audit and
//! serialization.

mod build;
mod layout;
pub mod mps;
pub mod presolve;
mod snap;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use build::{
    audit, build_milp, expected_row_counts, BigUConfig, BuildConfig, BuildError, PowerGating,
    ScheduleMilp,
};
pub use layout::{PumpUnit, VarKey, VarKind, VariableLayout};
pub use snap::snap_simulation;

/// Constraint family of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NodeBalance,
    TankDynamics,
    PipeSegmentFlow,
    PipeSegmentSelect,
    PipeHeadloss,
    PumpSegmentSpeed,
    PumpSegmentFlow,
    PumpSegmentSelect,
    PowerTangent,
    PowerZero,
    PipeSegmentBound,
    PumpSpeedBox,
    PumpFlowBox,
    PumpHead,
    PumpDomain,
    Symmetry,
    FinalLevel,
    /// Valid cuts bounding a running pump's lift by the head range its
    /// endpoints can take.
    PumpEnvelope,
    /// Rows read from a file without provenance.
    Imported,
}

impl Family {
    pub const EQUALITY: [Family; 8] = [
        Family::NodeBalance,
        Family::TankDynamics,
        Family::PipeSegmentFlow,
        Family::PipeSegmentSelect,
        Family::PipeHeadloss,
        Family::PumpSegmentSpeed,
        Family::PumpSegmentFlow,
        Family::PumpSegmentSelect,
    ];
    pub const INEQUALITY: [Family; 10] = [
        Family::PowerTangent,
        Family::PowerZero,
        Family::PipeSegmentBound,
        Family::PumpSpeedBox,
        Family::PumpFlowBox,
        Family::PumpHead,
        Family::PumpDomain,
        Family::Symmetry,
        Family::FinalLevel,
        Family::PumpEnvelope,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::NodeBalance => "node_balance",
            Family::TankDynamics => "tank_dynamics",
            Family::PipeSegmentFlow => "pipe_segment_flow",
            Family::PipeSegmentSelect => "pipe_segment_select",
            Family::PipeHeadloss => "pipe_headloss",
            Family::PumpSegmentSpeed => "pump_segment_speed",
            Family::PumpSegmentFlow => "pump_segment_flow",
            Family::PumpSegmentSelect => "pump_segment_select",
            Family::PowerTangent => "power_tangent",
            Family::PowerZero => "power_zero",
            Family::PipeSegmentBound => "pipe_segment_bound",
            Family::PumpSpeedBox => "pump_speed_box",
            Family::PumpFlowBox => "pump_flow_box",
            Family::PumpHead => "pump_head",
            Family::PumpDomain => "pump_domain",
            Family::Symmetry => "symmetry",
            Family::FinalLevel => "final_level",
            Family::PumpEnvelope => "pump_envelope",
            Family::Imported => "imported",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Provenance of a row: family, element id, sub-row index and step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTag {
    pub family: Family,
    pub element: String,
    pub sub: usize,
    pub k: Option<usize>,
}

impl RowTag {
    pub fn name(&self) -> String {
        match self.k {
            Some(k) => format!("{}.{}.{}.{}", self.family, self.element, self.sub + 1, k + 1),
            None => format!("{}.{}.{}", self.family, self.element, self.sub + 1),
        }
    }
}

/// Sparse row `sum vals[i] x[cols[i]] (= or <=) rhs`, columns ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: f64,
    pub tag: RowTag,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.cols.iter().zip(&self.vals).map(|(&c, v)| v * x[c]).sum()
    }

    pub fn coef(&self, col: usize) -> f64 {
        self.cols.binary_search(&col).map_or(0.0, |i| self.vals[i])
    }
}

/// `min c·x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  l <= x <= u,  x_j ∈ {0,1} for j ∈ integer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub name: String,
    pub col_names: Vec<String>,
    pub objective: Vec<f64>,
    pub eq: Vec<Row>,
    pub ineq: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Integer columns, ascending.
    pub integer: Vec<usize>,
}

impl MilpProblem {
    pub fn n_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn is_integer(&self, col: usize) -> bool {
        self.integer.binary_search(&col).is_ok()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Row, bool)> {
        self.eq.iter().map(|r| (r, true)).chain(self.ineq.iter().map(|r| (r, false)))
    }

    /// Largest row, bound and integrality violations of `x`.
    pub fn max_violation(&self, x: &[f64]) -> (f64, f64, f64) {
        let mut row_v: f64 = 0.0;
        for (row, is_eq) in self.rows() {
            let r = row.activity(x) - row.rhs;
            row_v = row_v.max(if is_eq { r.abs() } else { r.max(0.0) });
        }
        let bound_v = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        let int_v = self.integer.iter().map(|&j| (x[j] - x[j].round()).abs()).fold(0.0, f64::max);
        (row_v, bound_v, int_v)
    }

    /// Largest violation per constraint family (equalities two-sided).
    pub fn family_residuals(&self, x: &[f64]) -> BTreeMap<Family, f64> {
        let mut out = BTreeMap::new();
        for (row, is_eq) in self.rows() {
            let r = row.activity(x) - row.rhs;
            let v = if is_eq { r.abs() } else { r.max(0.0) };
            let e = out.entry(row.tag.family).or_insert(0.0f64);
            *e = e.max(v);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<MilpProblem, serde_json::Error> {
        serde_json::from_str(text)
    }
}
