use std::path::Path;

use serde::Serialize;

use pumpsched_core::hydraulics::{simulate_eps, GroupSchedule, ScheduleFile, SimulationResult};
use pumpsched_core::milp::mps::{read_mps, write_mps};
use pumpsched_core::milp::MilpProblem;
use pumpsched_core::network::{canonical_network, load_network, Network};
use pumpsched_core::pipeline::{
    batch_plot_data, emit_plots_data, optimize as run_pipeline, perturb_demands, prepare, run_batch, validate_solution,
    BatchSpec, BatchSummary, CsvFile, OptimizeConfig, OrderingCheck, PipelineError, SolutionFile, Stage,
};
use pumpsched_core::solver::{LpEngine, MipEngine, MipOptions, MipStatus};

use crate::output::{read_text, write_atomic, write_csvs, write_json};
use crate::{CliError, Engine, NetworkArgs, SolverArgs};

fn load(args: &NetworkArgs) -> Result<Network, CliError> {
    let mut net = match &args.network {
        Some(path) => load_network(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => canonical_network(),
    };
    if let Some(k) = args.horizon {
        net = net.truncated(k).map_err(|e| CliError::Input(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        let mut file = net.into_file();
        perturb_demands(&mut file, seed, args.perturbation);
        net = Network::new(file).map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(net)
}

fn config(solver: &SolverArgs) -> OptimizeConfig {
    let engine = match solver.engine {
        Engine::Highs => MipEngine::Highs,
        Engine::Bnb => MipEngine::BranchAndBound(LpEngine::Auto),
        Engine::BnbDense => MipEngine::BranchAndBound(LpEngine::Dense),
    };
    OptimizeConfig {
        mip: MipOptions { gap: solver.gap, time_limit: solver.time_limit, engine, ..MipOptions::default() },
        ..OptimizeConfig::default()
    }
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e.stage() {
        Stage::Baseline | Stage::Linearize | Stage::Build => CliError::Input(e.to_string()),
        Stage::Solve | Stage::Extract | Stage::Resimulate => CliError::Solver(e.to_string()),
    }
}

fn simulation_csvs(net: &Network, sim: &SimulationResult) -> Vec<CsvFile> {
    let mut levels = String::from("k,tank,level\n");
    for (t, id) in sim.tank_ids.iter().enumerate() {
        for (k, level) in sim.tank_levels[t].iter().enumerate() {
            levels.push_str(&format!("{k},{id},{level}\n"));
        }
    }
    let mut steps = String::from("k,tariff,demand,cost\n");
    for (k, cost) in sim.step_cost.iter().enumerate() {
        let demand: f64 = net.demand_column(k).iter().sum();
        steps.push_str(&format!("{k},{},{demand},{cost}\n", net.inputs().tariff[k]));
    }
    vec![
        CsvFile { name: "tank_levels.csv".into(), contents: levels },
        CsvFile { name: "cost_tariff.csv".into(), contents: steps },
    ]
}

pub fn simulate(args: &NetworkArgs, schedule: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let net = load(args)?;
    let schedule = match schedule {
        Some(path) => {
            let file: ScheduleFile = serde_json::from_str(&read_text(path)?)
                .map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))?;
            GroupSchedule::from_file(&file, &net).map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))?
        }
        None => GroupSchedule::flat(&net),
    };
    let sim = simulate_eps(&net, &schedule).map_err(|e| CliError::Input(format!("simulation: {e}")))?;
    write_json(&out_dir.join("simulation.json"), &sim)?;
    write_csvs(out_dir, &simulation_csvs(&net, &sim))?;
    println!(
        "cost {:.4} over {} steps, {} level violations, max mass residual {:.1e} L/s",
        sim.cost,
        net.horizon(),
        sim.level_violations.len(),
        sim.max_mass_residual
    );
    Ok(())
}

pub fn optimize(
    args: &NetworkArgs,
    solver: &SolverArgs,
    export_mps: Option<&Path>,
    export_only: bool,
    out_dir: &Path,
) -> Result<(), CliError> {
    let net = load(args)?;
    let cfg = config(solver);
    if let Some(path) = export_mps {
        let (_, _, milp) = prepare(&net, &cfg).map_err(pipeline_error)?;
        write_atomic(path, &write_mps(&milp.problem))?;
        if export_only {
            println!("wrote {} ({} columns, {} rows)", path.display(), milp.problem.n_cols(), milp.problem.eq.len() + milp.problem.ineq.len());
            return Ok(());
        }
    }
    let run = run_pipeline(&net, &cfg).map_err(pipeline_error)?;
    let r = &run.report;
    write_atomic(&out_dir.join("report.json"), &r.to_json())?;
    write_json(&out_dir.join("timing.json"), &run.timing)?;
    write_atomic(&out_dir.join("solution.json"), &SolutionFile::from_result(&run.milp.problem, &run.result).to_json())?;
    write_atomic(&out_dir.join("problem.json"), &run.milp.problem.to_json())?;
    write_json(&out_dir.join("schedule.json"), &run.extracted.schedule.to_file(&net))?;
    write_csvs(out_dir, &emit_plots_data(r))?;
    println!(
        "baseline {:.4}  optimized {:.4} (bound {:.4}, gap {:.2}%)  re-simulated {:.4}  saving {:.2}%  level MAE {:.3} m  [{:.1} s]",
        r.baseline_cost,
        r.milp_objective,
        r.milp_bound,
        100.0 * r.solver.gap,
        r.resimulated_cost,
        r.saving_percent,
        r.tank_level_mae,
        run.timing.total_seconds
    );
    if !r.validation.pass {
        return Err(CliError::Validation(format!("failing families {:?}", r.validation.failing_families)));
    }
    if r.solver.status != MipStatus::OptimalWithinGap {
        return Err(CliError::Solver(format!("gap {:.4} above target {}", r.solver.gap, solver.gap)));
    }
    Ok(())
}

#[derive(Serialize)]
struct ScenarioLine {
    id: String,
    status: Option<MipStatus>,
    milp_objective: Option<f64>,
    resimulated_cost: Option<f64>,
    tank_level_mae: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct BatchFile<'a> {
    total: usize,
    solved: usize,
    reached_gap: usize,
    failed: usize,
    success_rate: f64,
    mae_within_half_metre: usize,
    elevation_ordering: OrderingCheck,
    demand_ordering: OrderingCheck,
    offset_ordering: OrderingCheck,
    spec: &'a BatchSpec,
    scenarios: Vec<ScenarioLine>,
}

fn batch_file<'a>(summary: &BatchSummary, spec: &'a BatchSpec) -> BatchFile<'a> {
    BatchFile {
        total: summary.total,
        solved: summary.solved,
        reached_gap: summary.reached_gap,
        failed: summary.failed,
        success_rate: summary.success_rate(),
        mae_within_half_metre: summary.mae_within(0.5),
        elevation_ordering: summary.elevation_ordering(),
        demand_ordering: summary.demand_ordering(),
        offset_ordering: summary.offset_ordering(),
        spec,
        scenarios: summary
            .outcomes
            .iter()
            .map(|o| ScenarioLine {
                id: o.scenario.id(),
                status: o.report.as_ref().map(|r| r.solver.status),
                milp_objective: o.report.as_ref().map(|r| r.milp_objective),
                resimulated_cost: o.report.as_ref().map(|r| r.resimulated_cost),
                tank_level_mae: o.report.as_ref().map(|r| r.tank_level_mae),
                error: o.error.clone(),
            })
            .collect(),
    }
}

pub fn batch(args: &NetworkArgs, solver: &SolverArgs, spec: Option<&Path>, jobs: usize, out_dir: &Path) -> Result<(), CliError> {
    let net = load(args)?;
    let spec = match spec {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))?,
        None => BatchSpec::canonical(),
    };
    let cfg = config(solver);
    let scenario_dir = out_dir.join("scenarios");
    let summary = run_batch(net.file(), &spec, &cfg, jobs, |o| {
        let dir = scenario_dir.join(o.scenario.id());
        // A scenario whose files cannot be written is reported, not fatal.
        let written = match (&o.report, &o.timing) {
            (Some(r), Some(t)) => write_atomic(&dir.join("report.json"), &r.to_json())
                .and_then(|()| write_json(&dir.join("timing.json"), t))
                .and_then(|()| write_csvs(&dir, &emit_plots_data(r)).map(|_| ())),
            _ => write_json(&dir.join("error.json"), o),
        };
        let status = o.report.as_ref().map_or("failed".to_string(), |r| format!("{:?}", r.solver.status));
        match written {
            Ok(()) => eprintln!("{} {status}", o.scenario.id()),
            Err(e) => eprintln!("{} {status} ({e})", o.scenario.id()),
        }
    })
    .map_err(|e| CliError::Input(e.to_string()))?;
    write_json(&out_dir.join("summary.json"), &batch_file(&summary, &spec))?;
    write_csvs(out_dir, &batch_plot_data(&summary))?;
    println!(
        "{}/{} scenarios reached the gap, {} failed, {} with level MAE <= 0.5 m",
        summary.reached_gap,
        summary.total,
        summary.failed,
        summary.mae_within(0.5)
    );
    if summary.reached_gap < summary.total {
        return Err(CliError::PartialBatch { failed: summary.total - summary.reached_gap, total: summary.total });
    }
    Ok(())
}

fn load_problem(path: &Path) -> Result<MilpProblem, CliError> {
    let text = read_text(path)?;
    let is_mps = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mps"));
    if is_mps {
        read_mps(&text).map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))
    } else {
        MilpProblem::from_json(&text).map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))
    }
}

pub fn validate(problem: &Path, solution: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let p = load_problem(problem)?;
    let sol = SolutionFile::from_json(&read_text(solution)?)
        .map_err(|e| CliError::Input(format!("`{}`: {e}", solution.display())))?;
    let x = sol.to_vector(&p).map_err(|e| CliError::Input(format!("`{}`: {e}", solution.display())))?;
    let report = validate_solution(&p, &x);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(path) => write_atomic(path, &text)?,
        None => println!("{text}"),
    }
    if report.pass {
        eprintln!("PASS");
        Ok(())
    } else {
        let worst = report
            .families
            .iter()
            .filter(|f| report.failing_families.contains(&f.family))
            .map(|f| format!("{:?} {:.3e} at {}", f.family, f.max_residual, f.worst_row))
            .collect::<Vec<_>>();
        let mut msg = worst.join("; ");
        if let Some(col) = &report.worst_integer_column {
            if report.integrality_violation > 1e-6 {
                msg.push_str(&format!("; integrality {:.3e} at {col}", report.integrality_violation));
            }
        }
        if let Some(col) = &report.worst_bound_column {
            if report.bound_violation > 1e-6 {
                msg.push_str(&format!("; bound {:.3e} at {col}", report.bound_violation));
            }
        }
        Err(CliError::Validation(msg.trim_start_matches("; ").to_string()))
    }
}

pub fn export_mps(args: &NetworkArgs, out: &Path) -> Result<(), CliError> {
    let net = load(args)?;
    let (_, _, milp) = prepare(&net, &OptimizeConfig::default()).map_err(pipeline_error)?;
    write_atomic(out, &write_mps(&milp.problem))?;
    println!("wrote {} ({} columns, {} rows)", out.display(), milp.problem.n_cols(), milp.problem.eq.len() + milp.problem.ineq.len());
    Ok(())
}
