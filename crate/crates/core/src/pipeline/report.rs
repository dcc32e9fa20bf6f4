use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::validate::{validate_solution, ValidationReport};
use crate::hydraulics::{simulate_eps, GroupSchedule, LevelViolation, SimulationError, SimulationResult};
use crate::linearize::{linearize, select_operating_points, LinearizeConfig, LinearizeError, LinearizedModel};
use crate::milp::{build_milp, BuildConfig, BuildError, ScheduleMilp, VarKind};
use crate::network::{Network, NetworkFile};
use crate::solver::{
    extract_schedule, solve_mip_with, ExtractError, ExtractedSchedule, LpEngine, MipEngine, MipOptions, MipResult,
    MipStatus, SolverError,
};

/// Everything `optimize` needs besides the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub linearize: LinearizeConfig,
    pub build: BuildConfig,
    pub mip: MipOptions,
    /// Raise the outer pipe breakpoint to at least the peak total demand,
    /// so pipes whose reference flow is small (the tank pipe) can still
    /// carry the flows a reshaped schedule routes through them.
    pub cover_peak_demand: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            linearize: LinearizeConfig::default(),
            build: BuildConfig::default(),
            mip: MipOptions::default(),
            cover_peak_demand: true,
        }
    }
}

/// Pipeline stage that produced an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Baseline,
    Linearize,
    Build,
    Solve,
    Extract,
    Resimulate,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("baseline simulation: {0}")]
    Baseline(#[source] SimulationError),
    #[error("linearization: {0}")]
    Linearize(#[from] LinearizeError),
    #[error("MILP build: {0}")]
    Build(#[from] BuildError),
    #[error("solve: {0}")]
    Solve(#[from] SolverError),
    #[error("solve: no incumbent found (best bound {bound})")]
    NoIncumbent { bound: f64 },
    #[error("schedule extraction: {0}")]
    Extract(#[from] ExtractError),
    #[error("re-simulation: {0}")]
    Resimulate(#[source] SimulationError),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Baseline(_) => Stage::Baseline,
            PipelineError::Linearize(_) => Stage::Linearize,
            PipelineError::Build(_) => Stage::Build,
            PipelineError::Solve(_) | PipelineError::NoIncumbent { .. } => Stage::Solve,
            PipelineError::Extract(_) => Stage::Extract,
            PipelineError::Resimulate(_) => Stage::Resimulate,
        }
    }
}

/// Solver statistics that do not depend on wall time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub engine: String,
    pub status: MipStatus,
    pub gap_target: f64,
    pub gap: f64,
    pub nodes: u64,
    pub time_limit: f64,
}

/// Wall times, kept out of the report so that reports are reproducible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub k: usize,
    pub tariff: f64,
    pub demand: f64,
    pub baseline_cost: f64,
    pub milp_cost: f64,
    pub resimulated_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpRow {
    pub k: usize,
    pub pump: String,
    pub status: u8,
    pub speed: f64,
    pub milp_flow: f64,
    pub milp_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub k: usize,
    pub group: String,
    pub n_active: u32,
    pub speed: f64,
    pub simulated_flow: f64,
    pub simulated_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankRow {
    pub k: usize,
    pub tank: String,
    pub milp_level: f64,
    pub simulated_level: f64,
    pub baseline_level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadRow {
    pub k: usize,
    pub node: String,
    pub milp_head: f64,
    pub simulated_head: f64,
}

/// Outcome of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub network: String,
    pub horizon: usize,
    pub dt_hours: f64,
    pub final_level_offset: f64,
    /// Cost of the flat schedule (every pump on at speed 1).
    pub baseline_cost: f64,
    pub milp_objective: f64,
    pub milp_bound: f64,
    /// Cost of the optimized schedule in the nonlinear simulator.
    pub resimulated_cost: f64,
    /// `100 (baseline - resimulated) / baseline`.
    pub saving_percent: f64,
    /// Largest, over tanks, mean absolute difference between the MILP and
    /// the re-simulated tank levels, m.
    pub tank_level_mae: f64,
    pub solver: SolverSummary,
    pub validation: ValidationReport,
    /// Largest deviation of a running unit's speed from its group mean.
    pub speed_spread: f64,
    pub baseline_level_violations: Vec<LevelViolation>,
    pub resimulated_level_violations: Vec<LevelViolation>,
    pub steps: Vec<StepRow>,
    pub pumps: Vec<PumpRow>,
    pub groups: Vec<GroupRow>,
    pub tanks: Vec<TankRow>,
    pub heads: Vec<HeadRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full artifacts of a run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timing: Timing,
    pub linearized: LinearizedModel,
    pub milp: ScheduleMilp,
    pub result: MipResult,
    pub extracted: ExtractedSchedule,
    pub baseline: SimulationResult,
    pub resimulated: SimulationResult,
}

/// Largest total demand over the horizon, L/s.
pub fn peak_total_demand(net: &Network) -> f64 {
    (0..net.horizon()).map(|k| net.demand_column(k).iter().sum::<f64>()).fold(0.0, f64::max)
}

/// Scale every demand value by an independent factor drawn uniformly from
/// `[1 - amplitude, 1 + amplitude]`.
pub fn perturb_demands(file: &mut NetworkFile, seed: u64, amplitude: f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    for series in file.inputs.demands.values_mut() {
        for d in series.iter_mut() {
            *d *= 1.0 + amplitude * rng.gen_range(-1.0..=1.0);
        }
    }
}

/// Baseline simulation, surrogates and the built MILP.
pub fn prepare(net: &Network, cfg: &OptimizeConfig) -> Result<(SimulationResult, LinearizedModel, ScheduleMilp), PipelineError> {
    let baseline = simulate_eps(net, &GroupSchedule::flat(net)).map_err(PipelineError::Baseline)?;
    let mut lin_cfg = cfg.linearize.clone();
    if cfg.cover_peak_demand {
        lin_cfg.min_outer_breakpoint = lin_cfg.min_outer_breakpoint.max(peak_total_demand(net));
    }
    let op = select_operating_points(net, &baseline, &lin_cfg)?;
    let lin = linearize(net, &op)?;
    let milp = build_milp(net, &lin, &cfg.build)?;
    Ok((baseline, lin, milp))
}

fn engine_label(engine: MipEngine) -> String {
    match engine {
        MipEngine::Highs => "highs".into(),
        MipEngine::BranchAndBound(lp) => format!(
            "branch_and_bound/{}",
            match lp {
                LpEngine::Dense => "dense",
                LpEngine::Highs => "highs",
                LpEngine::Auto => "auto",
            }
        ),
    }
}

/// Run the whole pipeline on `net`.
pub fn optimize(net: &Network, cfg: &OptimizeConfig) -> Result<RunOutcome, PipelineError> {
    let start = Instant::now();
    let (baseline, linearized, milp) = prepare(net, cfg)?;
    let build_seconds = start.elapsed().as_secs_f64();
    let result = solve_mip_with(&milp.problem, &cfg.mip)?;
    let solve_seconds = start.elapsed().as_secs_f64() - build_seconds;
    if result.x.is_empty() {
        return Err(PipelineError::NoIncumbent { bound: result.bound });
    }
    let extracted = extract_schedule(&result, &milp.layout, net)?;
    let resimulated = simulate_eps(net, &extracted.schedule).map_err(PipelineError::Resimulate)?;
    let validation = validate_solution(&milp.problem, &result.x);
    let report = assemble_report(net, cfg, &milp, &result, &extracted, &baseline, &resimulated, validation);
    let timing = Timing { build_seconds, solve_seconds, total_seconds: start.elapsed().as_secs_f64() };
    Ok(RunOutcome { report, timing, linearized, milp, result, extracted, baseline, resimulated })
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    net: &Network,
    cfg: &OptimizeConfig,
    milp: &ScheduleMilp,
    result: &MipResult,
    extracted: &ExtractedSchedule,
    baseline: &SimulationResult,
    resim: &SimulationResult,
    validation: ValidationReport,
) -> RunReport {
    let lay = &milp.layout;
    let x = &result.x;
    let horizon = net.horizon();
    let tariff = &net.inputs().tariff;

    let steps = (0..horizon)
        .map(|k| {
            let power: f64 = (0..lay.pumps.len()).map(|j| x[lay.index(VarKind::PPump, j, 0, k)]).sum();
            StepRow {
                k,
                tariff: tariff[k],
                demand: net.demand_column(k).iter().sum(),
                baseline_cost: baseline.step_cost[k],
                milp_cost: tariff[k] * net.dt_hours() * power,
                resimulated_cost: resim.step_cost[k],
            }
        })
        .collect();

    let mut pumps = Vec::new();
    for k in 0..horizon {
        for (j, id) in extracted.pump_ids.iter().enumerate() {
            pumps.push(PumpRow {
                k,
                pump: id.clone(),
                status: extracted.status[j][k],
                speed: extracted.speed[j][k],
                milp_flow: extracted.flow[j][k],
                milp_power: extracted.power[j][k],
            });
        }
    }

    let mut groups = Vec::new();
    for k in 0..horizon {
        for (g, group) in net.pump_groups().iter().enumerate() {
            let c = extracted.schedule.controls[g][k];
            groups.push(GroupRow {
                k,
                group: group.id.clone(),
                n_active: c.n_active,
                speed: c.speed,
                simulated_flow: resim.flows[net.group_element(g)][k],
                simulated_power: resim.power[g][k],
            });
        }
    }

    let mut tanks = Vec::new();
    let mut tank_level_mae: f64 = 0.0;
    for (t, tank) in net.tanks().iter().enumerate() {
        let z = net.nodes()[net.tank_node(t)].elevation;
        let mut abs_sum = 0.0;
        for k in 0..horizon {
            let milp_level = extracted.tank_heads[t][k] - z;
            abs_sum += (milp_level - resim.tank_levels[t][k]).abs();
            tanks.push(TankRow {
                k,
                tank: tank.node.clone(),
                milp_level,
                simulated_level: resim.tank_levels[t][k],
                baseline_level: baseline.tank_levels[t][k],
            });
        }
        tank_level_mae = tank_level_mae.max(abs_sum / horizon as f64);
    }
    // Sort tank rows by k for tidy output.
    tanks.sort_by_key(|r| r.k);

    let mut heads = Vec::new();
    for k in 0..horizon {
        for (r, id) in lay.calc_ids.iter().enumerate() {
            heads.push(HeadRow { k, node: id.clone(), milp_head: extracted.heads[r][k], simulated_head: resim.heads[r][k] });
        }
    }

    RunReport {
        network: net.name().unwrap_or("network").to_string(),
        horizon,
        dt_hours: net.dt_hours(),
        final_level_offset: cfg.build.final_level_offset,
        baseline_cost: baseline.cost,
        milp_objective: result.objective,
        milp_bound: result.bound,
        resimulated_cost: resim.cost,
        saving_percent: 100.0 * (baseline.cost - resim.cost) / baseline.cost,
        tank_level_mae,
        solver: SolverSummary {
            engine: engine_label(cfg.mip.engine),
            status: result.status,
            gap_target: cfg.mip.gap,
            gap: result.gap,
            nodes: result.nodes,
            time_limit: cfg.mip.time_limit,
        },
        validation,
        speed_spread: extracted.speed_spread,
        baseline_level_violations: baseline.level_violations.clone(),
        resimulated_level_violations: resim.level_violations.clone(),
        steps,
        pumps,
        groups,
        tanks,
        heads,
    }
}
