mod common;

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use pumpsched_core::milp::{BuildConfig, Family, MilpProblem, Row, RowTag, VarKind};
use pumpsched_core::network::canonical_network;
use pumpsched_core::pipeline::{prepare, OptimizeConfig};
use pumpsched_core::solver::dense::{self, SimplexOptions};
use pumpsched_core::solver::oracle::enumerate_with;
use pumpsched_core::solver::{
    enumerate_oracle, extract_schedule, highs, solve_lp, BranchAndBound, BranchAndBoundOptions, DenseLp, ExtractError,
    HighsLp, LpBackend, LpEngine, LpSolution, LpStatus, MipEngine, MipOptions, MipStatus, SolverError,
};
use pumpsched_core::solver::solve_mip_with;

fn row(cols: Vec<usize>, vals: Vec<f64>, rhs: f64, sub: usize) -> Row {
    let mut pairs: Vec<(usize, f64)> = cols.into_iter().zip(vals).collect();
    pairs.sort_by_key(|p| p.0);
    let (cols, vals) = pairs.into_iter().unzip();
    Row { cols, vals, rhs, tag: RowTag { family: Family::Imported, element: "r".into(), sub, k: None } }
}

/// A random facility-style MILP: each binary opens capacity for a few
/// continuous columns, coverage rows demand flow, a budget row limits the
/// openings and an equality defines a total. Opening everything is
/// feasible.
fn random_milp(seed: u64, n_bin: usize, n_cont: usize) -> MilpProblem {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = n_bin + n_cont + 1;
    let total = n - 1;
    let mut objective = vec![0.0; n];
    let (lower, mut upper) = (vec![0.0; n], vec![0.0; n]);
    let mut ineq = Vec::new();
    for b in 0..n_bin {
        objective[b] = rng.gen_range(1.0..10.0);
        upper[b] = 1.0;
    }
    for i in 0..n_cont {
        let c = n_bin + i;
        objective[c] = rng.gen_range(0.1..2.0);
        upper[c] = 10.0;
        // y_c <= cap * b_owner
        let owner = i % n_bin;
        ineq.push(row(vec![c, owner], vec![1.0, -rng.gen_range(4.0..10.0)], 0.0, ineq.len()));
    }
    for _ in 0..rng.gen_range(3..6) {
        let members: Vec<usize> = (0..n_cont).filter(|_| rng.gen_bool(0.4)).map(|i| n_bin + i).collect();
        if members.is_empty() {
            continue;
        }
        let vals: Vec<f64> = members.iter().map(|_| -rng.gen_range(0.5..1.5)).collect();
        // Need at most a third of the members' joint capacity at the lowest cap.
        let cap: f64 = vals.iter().map(|v| -v * 4.0).sum();
        ineq.push(row(members, vals, -rng.gen_range(0.1..0.33) * cap, ineq.len()));
    }
    let budget = (0..n_bin).collect();
    ineq.push(row(budget, vec![1.0; n_bin], (n_bin - rng.gen_range(0..n_bin / 2)) as f64, ineq.len()));
    upper[total] = 10.0 * n_cont as f64;
    let mut cols: Vec<usize> = (n_bin..n_bin + n_cont).collect();
    let mut vals = vec![1.0; n_cont];
    cols.push(total);
    vals.push(-1.0);
    let eq = vec![row(cols, vals, 0.0, 0)];
    objective[total] = 0.01;
    MilpProblem {
        name: format!("random{seed}"),
        col_names: (0..n).map(|c| format!("x{c}")).collect(),
        objective,
        eq,
        ineq,
        lower,
        upper,
        integer: (0..n_bin).collect(),
    }
}

fn bnb<B: LpBackend>(p: &MilpProblem, lp: B, gap: f64) -> pumpsched_core::solver::MipResult {
    BranchAndBound::new(p, lp, BranchAndBoundOptions { gap, ..BranchAndBoundOptions::default() }).solve().unwrap()
}

#[test]
fn dense_and_highs_lps_agree_on_random_problems() {
    for seed in 0..40 {
        let p = random_milp(seed, 6, 20);
        let d = dense::solve_lp(&p).unwrap();
        let h = highs::solve_lp(&p).unwrap();
        assert_eq!(d.status, h.status, "seed {seed}");
        if d.status == LpStatus::Optimal {
            assert!(common::rel(d.objective, h.objective) < 1e-7, "seed {seed}: {} vs {}", d.objective, h.objective);
            let (rv, bv, _) = p.max_violation(&d.x);
            assert!(rv <= 1e-7 && bv <= 1e-9);
        }
    }
}

#[test]
fn dense_lp_detects_infeasibility() {
    let mut p = random_milp(1, 4, 8);
    // Demand more than every column can carry.
    let all: Vec<usize> = (4..12).collect();
    p.ineq.push(row(all, vec![-1.0; 8], -1000.0, 99));
    assert_eq!(dense::solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    assert_eq!(highs::solve_lp(&p).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn dense_lp_requires_finite_bounds() {
    let mut p = random_milp(2, 3, 5);
    p.upper[4] = f64::INFINITY;
    assert!(matches!(
        dense::solve_lp_bounded(&p, &p.lower, &p.upper, &SimplexOptions::default()),
        Err(SolverError::UnboundedColumn { col: 4 })
    ));
}

#[test]
fn oracle_and_both_searches_agree_on_random_milps() {
    for seed in 0..20 {
        let p = random_milp(seed, rng_bin(seed), 30);
        let oracle = enumerate_oracle(&p, 20).unwrap();
        let dense = bnb(&p, DenseLp::default(), 0.0);
        let highs = solve_mip_with(&p, &MipOptions { gap: 0.0, ..MipOptions::default() }).unwrap();
        assert!(common::rel(oracle.objective, dense.objective) <= 1e-6, "seed {seed}: oracle {} bnb {}", oracle.objective, dense.objective);
        assert!(common::rel(oracle.objective, highs.objective) <= 1e-6, "seed {seed}: oracle {} highs {}", oracle.objective, highs.objective);
        assert_eq!(dense.status, MipStatus::OptimalWithinGap);
        assert!(dense.bound <= dense.objective + 1e-9);
        let (rv, bv, iv) = p.max_violation(&dense.x);
        assert!(rv <= 1e-6 && bv <= 1e-6 && iv <= 1e-6);
    }
}

fn rng_bin(seed: u64) -> usize {
    8 + (seed % 5) as usize
}

#[test]
fn branch_and_bound_bounds_are_monotone_and_runs_repeat() {
    let p = random_milp(5, 12, 30);
    let a = bnb(&p, DenseLp::default(), 0.0);
    assert!(!a.progress.is_empty());
    for w in a.progress.windows(2) {
        assert!(w[1].lower >= w[0].lower - 1e-9, "{:?}", w);
        assert!(w[1].upper <= w[0].upper + 1e-9, "{:?}", w);
    }
    for r in &a.progress {
        assert!(r.lower <= r.upper + 1e-9);
    }
    let b = bnb(&p, DenseLp::default(), 0.0);
    assert_eq!((a.x, a.objective, a.bound, a.nodes), (b.x, b.objective, b.bound, b.nodes));
}

#[test]
fn fixed_binaries_need_a_single_lp() {
    let mut p = random_milp(3, 6, 12);
    // Drop the budget row so opening every unit is feasible.
    p.ineq.pop();
    for b in 0..6 {
        p.lower[b] = 1.0;
    }
    let r = bnb(&p, DenseLp::default(), 0.05);
    assert_eq!(r.status, MipStatus::OptimalWithinGap);
    assert_eq!(r.nodes, 1);
    assert_eq!(r.gap, 0.0);
    let lp = dense::solve_lp(&p).unwrap();
    assert!(common::rel(r.objective, lp.objective) < 1e-9);
}

#[test]
fn oracle_respects_its_binary_cap() {
    let p = random_milp(4, 10, 10);
    assert!(matches!(enumerate_oracle(&p, 5), Err(SolverError::TooManyBinaries { max: 5, .. })));
}

#[test]
fn infeasible_milp_is_reported() {
    let mut p = random_milp(6, 4, 8);
    p.ineq.push(row((0..4).collect(), vec![1.0; 4], -1.0, 99));
    assert!(matches!(enumerate_oracle(&p, 20), Err(SolverError::Infeasible)));
    let r = BranchAndBound::new(&p, DenseLp::default(), BranchAndBoundOptions::default()).solve();
    assert!(matches!(r, Err(SolverError::Infeasible)), "{r:?}");
}

#[test]
fn canonical_one_step_relaxation_bounds_the_optimum() {
    let net = canonical_network().truncated(1).unwrap();
    let (_, _, m) = prepare(&net, &OptimizeConfig::default()).unwrap();
    let oracle = enumerate_oracle(&m.problem, 24).unwrap();
    for engine in [LpEngine::Dense, LpEngine::Highs] {
        let lp = solve_lp(&m.problem, engine).unwrap();
        assert_eq!(lp.status, LpStatus::Optimal);
        assert!(lp.objective <= oracle.objective + 1e-9);
    }
    let highs = solve_mip_with(&m.problem, &MipOptions { gap: 0.0, ..MipOptions::default() }).unwrap();
    assert!(common::rel(highs.objective, oracle.objective) <= 1e-6);
}

/// Records the pump statuses of every leaf the oracle scores.
struct StatusRecorder {
    cols: Vec<usize>,
    seen: BTreeSet<Vec<u8>>,
}

impl LpBackend for &mut StatusRecorder {
    fn solve(&mut self, p: &MilpProblem, lower: &[f64], upper: &[f64]) -> Result<LpSolution, SolverError> {
        assert!(self.cols.iter().all(|&c| lower[c] == upper[c]));
        self.seen.insert(self.cols.iter().map(|&c| lower[c] as u8).collect());
        dense::solve_lp_bounded(p, lower, upper, &SimplexOptions::default())
    }
}

#[test]
fn symmetry_rows_leave_only_the_status_chain() {
    let net = canonical_network().truncated(1).unwrap();
    let cfg = OptimizeConfig { build: BuildConfig { bound_tightening: false, ..BuildConfig::default() }, ..Default::default() };
    let (_, _, m) = prepare(&net, &cfg).unwrap();
    let cols = vec![m.layout.index(VarKind::NPump, 0, 0, 0), m.layout.index(VarKind::NPump, 1, 0, 0)];

    let mut with = StatusRecorder { cols: cols.clone(), seen: BTreeSet::new() };
    let a = enumerate_with(&m.problem, 24, &mut with).unwrap();
    let chain: BTreeSet<Vec<u8>> = [vec![0, 0], vec![0, 1], vec![1, 1]].into_iter().collect();
    assert!(with.seen.is_subset(&chain), "{:?}", with.seen);

    let mut free = m.problem.clone();
    free.ineq.retain(|r| r.tag.family != Family::Symmetry);
    let mut without = StatusRecorder { cols, seen: BTreeSet::new() };
    let b = enumerate_with(&free, 24, &mut without).unwrap();
    assert!(without.seen.contains(&vec![1, 0]), "{:?}", without.seen);
    assert!(common::rel(a.objective, b.objective) <= 1e-9, "{} vs {}", a.objective, b.objective);
}

#[test]
fn embedded_search_matches_oracle_on_a_two_step_horizon() {
    let net = canonical_network().truncated(2).unwrap();
    let (_, _, m) = prepare(&net, &OptimizeConfig::default()).unwrap();
    let oracle = enumerate_with(&m.problem, 64, HighsLp).unwrap();
    for engine in [MipEngine::BranchAndBound(LpEngine::Highs), MipEngine::Highs] {
        let r = solve_mip_with(&m.problem, &MipOptions { gap: 0.0, engine, ..MipOptions::default() }).unwrap();
        assert!(common::rel(r.objective, oracle.objective) <= 1e-6, "{engine:?}: {} vs {}", r.objective, oracle.objective);
        assert!(r.bound <= r.objective + 1e-6);
        let x = extract_schedule(&r, &m.layout, &net).unwrap();
        for k in 0..2 {
            assert!(x.status[0][k] <= x.status[1][k], "higher-index unit runs first");
        }
    }
}

#[test]
fn extraction_rejects_fractional_status() {
    let net = canonical_network().truncated(2).unwrap();
    let (_, _, m) = prepare(&net, &OptimizeConfig::default()).unwrap();
    let mut r = solve_mip_with(&m.problem, &MipOptions::default()).unwrap();
    r.x[m.layout.index(VarKind::NPump, 1, 0, 0)] = 0.5;
    assert!(matches!(extract_schedule(&r, &m.layout, &net), Err(ExtractError::FractionalBinary { .. })));
    r.x.clear();
    assert!(matches!(extract_schedule(&r, &m.layout, &net), Err(ExtractError::NoIncumbent)));
}

#[test]
fn gap_target_is_validated() {
    let p = random_milp(7, 4, 6);
    assert!(solve_mip_with(&p, &MipOptions { gap: 1.5, ..MipOptions::default() }).is_err());
}
