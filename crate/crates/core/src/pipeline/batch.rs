use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{optimize, OptimizeConfig, RunReport, Stage, Timing};
use crate::network::{Network, NetworkError, NetworkFile, NodeKind};
use crate::solver::MipStatus;

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("grid `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("{0}")]
    Profile(String),
    #[error("scenario network: {0}")]
    Network(#[from] NetworkError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Parameter grids of a batch experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    /// Tank elevation z_t, m.
    pub elevations: Vec<f64>,
    /// Final-minus-initial tank level target, m.
    pub offsets: Vec<f64>,
    /// Average total demand, L/s.
    pub demands: Vec<f64>,
    /// Tank diameter D_t, m.
    pub diameters: Vec<f64>,
    /// Relative demand shape over the horizon; the network's own profile
    /// when absent.
    #[serde(default)]
    pub demand_shape: Option<Vec<f64>>,
    /// Tariff override, currency/kWh.
    #[serde(default)]
    pub tariff: Option<Vec<f64>>,
}

impl BatchSpec {
    /// The 3 × 3 × 3 × 3 grid around the canonical operating conditions.
    pub fn canonical() -> BatchSpec {
        BatchSpec {
            elevations: vec![225.0, 230.0, 235.0],
            offsets: vec![-0.5, 0.0, 0.5],
            demands: vec![34.16, 42.70, 47.00],
            diameters: vec![12.75, 15.0, 17.25],
            demand_shape: None,
            tariff: None,
        }
    }

    /// A grid of size one reproducing the network as given.
    pub fn single(net: &Network) -> BatchSpec {
        let tank = &net.tanks()[0];
        BatchSpec {
            elevations: vec![net.nodes()[net.tank_node(0)].elevation],
            offsets: vec![0.0],
            demands: vec![mean_total_demand(net.file())],
            diameters: vec![tank.diameter()],
            demand_shape: None,
            tariff: None,
        }
    }

    pub fn validate(&self) -> Result<(), BatchError> {
        for (name, grid) in [
            ("elevations", &self.elevations),
            ("offsets", &self.offsets),
            ("demands", &self.demands),
            ("diameters", &self.diameters),
        ] {
            if grid.is_empty() {
                return Err(BatchError::EmptyGrid(name));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elevations.len() * self.offsets.len() * self.demands.len() * self.diameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All combinations, elevation-major.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::with_capacity(self.len());
        for &elevation in &self.elevations {
            for &offset in &self.offsets {
                for &demand in &self.demands {
                    for &diameter in &self.diameters {
                        out.push(Scenario { index: out.len(), elevation, offset, demand, diameter });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub elevation: f64,
    pub offset: f64,
    pub demand: f64,
    pub diameter: f64,
}

impl Scenario {
    /// File-name friendly identifier.
    pub fn id(&self) -> String {
        format!(
            "s{:03}_z{:.2}_o{:+.2}_d{:.2}_D{:.2}",
            self.index, self.elevation, self.offset, self.demand, self.diameter
        )
    }
}

fn mean_total_demand(file: &NetworkFile) -> f64 {
    let k = file.inputs.horizon.max(1);
    file.inputs.demands.values().map(|s| s.iter().sum::<f64>()).sum::<f64>() / k as f64
}

/// The base network with the scenario's tank elevation and diameter,
/// demand level and optional profile overrides applied.
pub fn scenario_network(base: &NetworkFile, spec: &BatchSpec, sc: &Scenario) -> Result<Network, BatchError> {
    let mut file = base.clone();
    let horizon = file.inputs.horizon;
    let tank_nodes: Vec<String> = file.tanks.iter().map(|t| t.node.clone()).collect();
    for node in file.nodes.iter_mut().filter(|n| n.kind == NodeKind::Tank && tank_nodes.contains(&n.id)) {
        node.elevation = sc.elevation;
    }
    for tank in &mut file.tanks {
        tank.area = PI * sc.diameter * sc.diameter / 4.0;
    }

    let base_mean = mean_total_demand(&file);
    match &spec.demand_shape {
        Some(shape) => {
            if shape.len() != horizon {
                return Err(BatchError::Profile(format!("demand shape has {} values, horizon is {horizon}", shape.len())));
            }
            let shape_mean = shape.iter().sum::<f64>() / horizon as f64;
            if !(shape_mean > 0.0) || shape.iter().any(|v| *v < 0.0) {
                return Err(BatchError::Profile("demand shape must be non-negative with a positive mean".into()));
            }
            let n_series = file.inputs.demands.len().max(1) as f64;
            for series in file.inputs.demands.values_mut() {
                let node_mean = series.iter().sum::<f64>() / horizon as f64;
                let share = if base_mean > 0.0 { node_mean / base_mean } else { 1.0 / n_series };
                for (d, s) in series.iter_mut().zip(shape) {
                    *d = share * sc.demand * s / shape_mean;
                }
            }
        }
        None => {
            if base_mean <= 0.0 {
                return Err(BatchError::Profile("base network has no demand to scale".into()));
            }
            let factor = sc.demand / base_mean;
            for series in file.inputs.demands.values_mut() {
                series.iter_mut().for_each(|d| *d *= factor);
            }
        }
    }
    if let Some(tariff) = &spec.tariff {
        if tariff.len() != horizon {
            return Err(BatchError::Profile(format!("tariff has {} values, horizon is {horizon}", tariff.len())));
        }
        file.inputs.tariff.clone_from(tariff);
    }
    Ok(Network::new(file)?)
}

/// Result of one scenario; failures are recorded, not propagated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub report: Option<RunReport>,
    pub timing: Option<Timing>,
    pub error: Option<String>,
    pub failed_stage: Option<Stage>,
}

impl ScenarioOutcome {
    pub fn reached_gap(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.solver.status == MipStatus::OptimalWithinGap)
    }
}

/// Pairwise cost ordering check along one grid axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub pairs: usize,
    pub violations: Vec<(String, String)>,
}

impl OrderingCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    /// Scenarios with an incumbent and a completed re-simulation.
    pub solved: usize,
    pub reached_gap: usize,
    pub failed: usize,
    pub outcomes: Vec<ScenarioOutcome>,
}

impl BatchSummary {
    pub fn success_rate(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.reached_gap as f64 / self.total as f64
    }

    /// Solved scenarios whose tank-level MAE is at most `bound`.
    pub fn mae_within(&self, bound: f64) -> usize {
        self.outcomes.iter().filter_map(|o| o.report.as_ref()).filter(|r| r.tank_level_mae <= bound).count()
    }

    /// Optimized cost (MILP objective) must increase along an axis, all
    /// else equal. `key` extracts the axis value, `rest` the other three.
    fn ordering(&self, key: impl Fn(&Scenario) -> f64, rest: impl Fn(&Scenario) -> [u64; 3], only_extremes: bool) -> OrderingCheck {
        let solved: Vec<(&Scenario, f64)> =
            self.outcomes.iter().filter_map(|o| o.report.as_ref().map(|r| (&o.scenario, r.milp_objective))).collect();
        let mut check = OrderingCheck::default();
        for &(a, ca) in &solved {
            for &(b, cb) in &solved {
                if rest(a) != rest(b) || !(key(a) < key(b)) {
                    continue;
                }
                if only_extremes {
                    let values: Vec<f64> = solved.iter().filter(|(s, _)| rest(s) == rest(a)).map(|(s, _)| key(s)).collect();
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if key(a) != lo || key(b) != hi {
                        continue;
                    }
                } else {
                    // Adjacent grid values only.
                    let between = solved.iter().any(|(s, _)| rest(s) == rest(a) && key(s) > key(a) && key(s) < key(b));
                    if between {
                        continue;
                    }
                }
                check.pairs += 1;
                if !(ca < cb) {
                    check.violations.push((a.id(), b.id()));
                }
            }
        }
        check
    }

    /// Higher tank elevation costs more.
    pub fn elevation_ordering(&self) -> OrderingCheck {
        self.ordering(|s| s.elevation, |s| [s.offset.to_bits(), s.demand.to_bits(), s.diameter.to_bits()], false)
    }

    /// Higher average demand costs more.
    pub fn demand_ordering(&self) -> OrderingCheck {
        self.ordering(|s| s.demand, |s| [s.elevation.to_bits(), s.offset.to_bits(), s.diameter.to_bits()], false)
    }

    /// The largest final-level offset costs more than the smallest.
    pub fn offset_ordering(&self) -> OrderingCheck {
        self.ordering(|s| s.offset, |s| [s.elevation.to_bits(), s.demand.to_bits(), s.diameter.to_bits()], true)
    }
}

/// Run every scenario of `spec` on a pool of `jobs` workers. `on_done` is
/// called from the worker as each scenario finishes (e.g. to write its
/// files); outcomes are returned in scenario order.
pub fn run_batch<F>(base: &NetworkFile, spec: &BatchSpec, cfg: &OptimizeConfig, jobs: usize, on_done: F) -> Result<BatchSummary, BatchError>
where
    F: Fn(&ScenarioOutcome) + Sync,
{
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| BatchError::Pool(e.to_string()))?;
    let scenarios = spec.scenarios();
    let outcomes: Vec<ScenarioOutcome> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|sc| {
                let outcome = run_scenario(base, spec, cfg, sc);
                on_done(&outcome);
                outcome
            })
            .collect()
    });
    let solved = outcomes.iter().filter(|o| o.report.is_some()).count();
    let reached_gap = outcomes.iter().filter(|o| o.reached_gap()).count();
    Ok(BatchSummary { total: outcomes.len(), solved, reached_gap, failed: outcomes.len() - solved, outcomes })
}

fn run_scenario(base: &NetworkFile, spec: &BatchSpec, cfg: &OptimizeConfig, sc: &Scenario) -> ScenarioOutcome {
    let failed = |error: String, stage: Option<Stage>| ScenarioOutcome {
        scenario: *sc,
        report: None,
        timing: None,
        error: Some(error),
        failed_stage: stage,
    };
    let net = match scenario_network(base, spec, sc) {
        Ok(n) => n,
        Err(e) => return failed(e.to_string(), None),
    };
    let mut cfg = cfg.clone();
    cfg.build.final_level_offset = sc.offset;
    match optimize(&net, &cfg) {
        Ok(run) => ScenarioOutcome { scenario: *sc, report: Some(run.report), timing: Some(run.timing), error: None, failed_stage: None },
        Err(e) => failed(e.to_string(), Some(e.stage())),
    }
}
