//! Tidy CSV data behind the schedule, cost, level and batch figures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::batch::BatchSummary;
use super::report::RunReport;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvFile {
    pub name: String,
    pub contents: String,
}

fn csv(name: &str, header: &str, lines: impl IntoIterator<Item = String>) -> CsvFile {
    let mut contents = String::from(header);
    contents.push('\n');
    for line in lines {
        contents.push_str(&line);
        contents.push('\n');
    }
    CsvFile { name: name.to_string(), contents }
}

/// One CSV per figure family of a single run.
pub fn emit_plots_data(report: &RunReport) -> Vec<CsvFile> {
    vec![
        csv(
            "schedule.csv",
            "k,pump,status,speed",
            report.pumps.iter().map(|r| format!("{},{},{},{}", r.k, r.pump, r.status, r.speed)),
        ),
        csv(
            "cost_tariff.csv",
            "k,tariff,demand,baseline_cost,milp_cost,resimulated_cost",
            report.steps.iter().map(|r| {
                format!("{},{},{},{},{},{}", r.k, r.tariff, r.demand, r.baseline_cost, r.milp_cost, r.resimulated_cost)
            }),
        ),
        csv(
            "pump_flows.csv",
            "k,pump,status,speed,milp_flow,milp_power",
            report
                .pumps
                .iter()
                .map(|r| format!("{},{},{},{},{},{}", r.k, r.pump, r.status, r.speed, r.milp_flow, r.milp_power)),
        ),
        csv(
            "group_flows.csv",
            "k,group,n_active,speed,simulated_flow,simulated_power",
            report.groups.iter().map(|r| {
                format!("{},{},{},{},{},{}", r.k, r.group, r.n_active, r.speed, r.simulated_flow, r.simulated_power)
            }),
        ),
        csv(
            "tank_levels.csv",
            "k,tank,milp_level,simulated_level,baseline_level",
            report
                .tanks
                .iter()
                .map(|r| format!("{},{},{},{},{}", r.k, r.tank, r.milp_level, r.simulated_level, r.baseline_level)),
        ),
        csv(
            "heads.csv",
            "k,node,milp_head,simulated_head",
            report.heads.iter().map(|r| format!("{},{},{},{}", r.k, r.node, r.milp_head, r.simulated_head)),
        ),
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Cost surface and per-scenario statistics (solve time, MAE) of a batch.
pub fn batch_plot_data(summary: &BatchSummary) -> Vec<CsvFile> {
    let surface = summary.outcomes.iter().map(|o| {
        let s = &o.scenario;
        let cost = o.report.as_ref().map(|r| r.milp_objective);
        let resim = o.report.as_ref().map(|r| r.resimulated_cost);
        format!("{},{},{},{},{},{}", s.diameter, s.elevation, s.demand, s.offset, opt(cost), opt(resim))
    });
    let stats = summary.outcomes.iter().map(|o| {
        let mut line = String::new();
        let r = o.report.as_ref();
        let _ = write!(
            line,
            "{},{},{},{},{},{},{}",
            o.scenario.id(),
            r.map_or("failed".to_string(), |r| format!("{:?}", r.solver.status).to_lowercase()),
            opt(r.map(|r| r.solver.gap)),
            opt(o.timing.map(|t| t.solve_seconds)),
            opt(r.map(|r| r.tank_level_mae)),
            opt(r.map(|r| r.saving_percent)),
            o.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
        line
    });
    vec![
        csv("batch_surface.csv", "D_t,z_t,demand,offset,cost,resimulated_cost", surface),
        csv("batch_stats.csv", "scenario,status,gap,solve_seconds,mae,saving_percent,error", stats),
    ]
}
