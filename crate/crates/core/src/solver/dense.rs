//! Dense bounded-variable primal simplex.
//!
//! Two phases over a full tableau: phase one minimizes the sum of
//! artificial variables, phase two the true objective. Nonbasic variables
//! sit at one of their bounds; the ratio test includes bound flips of the
//! entering variable. Pricing is Dantzig's rule, switching to Bland's rule
//! after a run of degenerate pivots. Columns fixed by their bounds are
//! eliminated before the tableau is formed, and the final basic values are
//! recomputed from an LU factorization of the basis.

use nalgebra::{DMatrix, DVector};

use super::{LpSolution, LpStatus, SolverError};
use crate::milp::MilpProblem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_run: usize,
    /// Iteration cap as a multiple of `rows + columns`.
    pub iteration_factor: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            degenerate_run: 30,
            iteration_factor: 50,
        }
    }
}

/// Solve the continuous relaxation of `p` with its own bounds.
pub fn solve_lp(p: &MilpProblem) -> Result<LpSolution, SolverError> {
    solve_lp_bounded(p, &p.lower, &p.upper, &SimplexOptions::default())
}

/// Solve the continuous relaxation of `p` with bounds `lower`/`upper`.
pub fn solve_lp_bounded(p: &MilpProblem, lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> Result<LpSolution, SolverError> {
    for c in 0..p.n_cols() {
        if !lower[c].is_finite() || !upper[c].is_finite() {
            return Err(SolverError::UnboundedColumn { col: c });
        }
    }
    if (0..p.n_cols()).any(|c| lower[c] > upper[c] + opts.feasibility_tol) {
        return Ok(infeasible());
    }
    let attempt = |bland| match Tableau::build(p, lower, upper, opts) {
        Ok(t) => t.run(bland),
        // A row over fixed columns only is violated.
        Err(SolverError::Infeasible) => Ok(infeasible()),
        Err(e) => Err(e),
    };
    match attempt(false) {
        // One retry with Bland's rule from the first pivot.
        Err(SolverError::NumericalFailure(_)) => attempt(true),
        other => other,
    }
}

fn infeasible() -> LpSolution {
    LpSolution { status: LpStatus::Infeasible, objective: f64::INFINITY, x: vec![] }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarType {
    Structural(usize),
    Slack(usize),
    Artificial(usize),
}

struct Tableau<'a> {
    p: &'a MilpProblem,
    opts: SimplexOptions,
    /// Full-problem values; eliminated columns keep their fixed value.
    x_full: Vec<f64>,
    /// Row-major `m × n` tableau `B^-1 [A | I | Σ]`.
    t: Vec<f64>,
    m: usize,
    n: usize,
    vars: Vec<VarType>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Reduced-problem rows: (original row, is equality, rhs after elimination).
    rows: Vec<(usize, bool, f64)>,
    /// Sign applied to each row so that its initial basic variable is >= 0.
    sigma: Vec<f64>,
}

impl<'a> Tableau<'a> {
    fn build(p: &'a MilpProblem, lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> Result<Tableau<'a>, SolverError> {
        let tol = opts.feasibility_tol;
        let mut x_full: Vec<f64> = lower.to_vec();
        let mut col_pos = vec![usize::MAX; p.n_cols()];
        let mut vars = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut x = Vec::new();
        for c in 0..p.n_cols() {
            if upper[c] - lower[c] > tol {
                col_pos[c] = vars.len();
                vars.push(VarType::Structural(c));
                lo.push(lower[c]);
                hi.push(upper[c]);
                // Start at the bound closest to zero.
                let v = if lower[c].abs() <= upper[c].abs() { lower[c] } else { upper[c] };
                x.push(v);
                x_full[c] = v;
            } else {
                x_full[c] = 0.5 * (lower[c] + upper[c]);
            }
        }

        // Eliminate fixed columns; drop rows without free columns after
        // checking them.
        let mut rows = Vec::new();
        let mut dense_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for (ri, (row, is_eq)) in p.rows().enumerate() {
            let mut rhs = row.rhs;
            let mut terms = Vec::new();
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                if col_pos[c] == usize::MAX {
                    rhs -= v * x_full[c];
                } else {
                    terms.push((col_pos[c], v));
                }
            }
            let scale = row.rhs.abs().max(1.0);
            if terms.is_empty() {
                let bad = if is_eq { rhs.abs() > 1e-7 * scale } else { rhs < -1e-7 * scale };
                if bad {
                    return Err(SolverError::Infeasible);
                }
                continue;
            }
            rows.push((ri, is_eq, rhs));
            dense_rows.push(terms);
        }
        let m = rows.len();

        // Slack per inequality, artificial per row when needed.
        let mut sigma = vec![1.0; m];
        let mut basis = vec![usize::MAX; m];
        let mut resid = vec![0.0; m];
        for (i, terms) in dense_rows.iter().enumerate() {
            resid[i] = rows[i].2 - terms.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
        }
        let mut slack_of = vec![usize::MAX; m];
        for (i, &(_, is_eq, _)) in rows.iter().enumerate() {
            if !is_eq {
                slack_of[i] = vars.len();
                vars.push(VarType::Slack(i));
                lo.push(0.0);
                hi.push(f64::INFINITY);
                if resid[i] >= 0.0 {
                    x.push(resid[i]);
                    basis[i] = slack_of[i];
                } else {
                    x.push(0.0);
                }
            }
        }
        let mut art_of = vec![usize::MAX; m];
        for i in 0..m {
            if basis[i] == usize::MAX {
                art_of[i] = vars.len();
                vars.push(VarType::Artificial(i));
                lo.push(0.0);
                hi.push(f64::INFINITY);
                sigma[i] = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
                x.push(resid[i].abs());
                basis[i] = art_of[i];
            }
        }
        let n = vars.len();
        let mut t = vec![0.0; m * n];
        for i in 0..m {
            let s = sigma[i];
            let r = &mut t[i * n..(i + 1) * n];
            for &(j, v) in &dense_rows[i] {
                r[j] += s * v;
            }
            if slack_of[i] != usize::MAX {
                r[slack_of[i]] = s;
            }
            if art_of[i] != usize::MAX {
                r[art_of[i]] = 1.0;
            }
        }
        let mut is_basic = vec![false; n];
        for &b in &basis {
            is_basic[b] = true;
        }
        Ok(Tableau { p, opts: *opts, x_full, t, m, n, vars, lo, hi, x, basis, is_basic, rows, sigma })
    }

    fn cost(&self, j: usize, phase_one: bool) -> f64 {
        match self.vars[j] {
            VarType::Artificial(_) => {
                if phase_one {
                    1.0
                } else {
                    0.0
                }
            }
            VarType::Slack(_) => 0.0,
            VarType::Structural(c) => {
                if phase_one {
                    0.0
                } else {
                    self.p.objective[c]
                }
            }
        }
    }

    fn reduced_costs(&self, phase_one: bool) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.n).map(|j| self.cost(j, phase_one)).collect();
        for i in 0..self.m {
            let cb = self.cost(self.basis[i], phase_one);
            if cb != 0.0 {
                let r = &self.t[i * self.n..(i + 1) * self.n];
                for j in 0..self.n {
                    d[j] -= cb * r[j];
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let n = self.n;
        let piv = self.t[r * n + j];
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        let prow: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + j];
            if f != 0.0 {
                let row = &mut self.t[i * n..(i + 1) * n];
                for (v, &pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
            }
        }
        let f = d[j];
        if f != 0.0 {
            for (v, &pv) in d.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            d[j] = 0.0;
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Run simplex iterations for one phase. Returns `false` if unbounded.
    fn iterate(&mut self, phase_one: bool, bland_only: bool, budget: &mut usize) -> Result<bool, SolverError> {
        let (otol, ptol) = (self.opts.optimality_tol, self.opts.pivot_tol);
        let mut d = self.reduced_costs(phase_one);
        let mut degenerate = 0usize;
        loop {
            if *budget == 0 {
                return Err(SolverError::NumericalFailure("iteration limit reached".into()));
            }
            *budget -= 1;
            let bland = bland_only || degenerate >= self.opts.degenerate_run;
            // Pricing.
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..self.n {
                if self.is_basic[j] || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let at_upper = self.hi[j].is_finite() && self.x[j] >= self.hi[j];
                let score = if at_upper { d[j] } else { -d[j] };
                if score > otol {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if score > best {
                        best = score;
                        enter = Some(j);
                    }
                }
            }
            let Some(j) = enter else { return Ok(true) };
            let dir = if self.hi[j].is_finite() && self.x[j] >= self.hi[j] { -1.0 } else { 1.0 };

            // Ratio test.
            let mut theta = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * self.n + j];
                if a.abs() <= ptol {
                    continue;
                }
                let b = self.basis[i];
                let rate = -a * dir;
                let (lim, bound) = if rate < 0.0 {
                    ((self.x[b] - self.lo[b]).max(0.0) / -rate, self.lo[b])
                } else {
                    if !self.hi[b].is_finite() {
                        continue;
                    }
                    ((self.hi[b] - self.x[b]).max(0.0) / rate, self.hi[b])
                };
                let better = match leave {
                    None => lim < theta,
                    Some((r, _)) => {
                        if bland {
                            lim < theta - 1e-12 || (lim <= theta + 1e-12 && self.basis[i] < self.basis[r])
                        } else {
                            lim < theta - 1e-12 || (lim <= theta + 1e-12 && a.abs() > self.t[r * self.n + j].abs())
                        }
                    }
                };
                if better {
                    theta = lim;
                    leave = Some((i, bound));
                }
            }
            if !theta.is_finite() {
                return Ok(false);
            }
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            // Update the values along the edge.
            self.x[j] += dir * theta;
            for i in 0..self.m {
                let a = self.t[i * self.n + j];
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= a * dir * theta;
                }
            }
            match leave {
                None => {
                    // Bound flip.
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                }
                Some((r, bound)) => {
                    let b = self.basis[r];
                    self.pivot(r, j, &mut d);
                    self.x[b] = bound;
                }
            }
        }
    }

    fn run(mut self, bland_only: bool) -> Result<LpSolution, SolverError> {
        let mut budget = self.opts.iteration_factor * (self.m + self.n).max(10);
        let has_art = self.vars.iter().any(|v| matches!(v, VarType::Artificial(_)));
        if has_art {
            self.iterate(true, bland_only, &mut budget)?;
            if self.artificials_positive() {
                return Ok(infeasible());
            }
            // Drive basic artificials out where possible, then fix them.
            let mut d = vec![0.0; self.n];
            for r in 0..self.m {
                let b = self.basis[r];
                if !matches!(self.vars[b], VarType::Artificial(_)) {
                    continue;
                }
                let cand = (0..self.n)
                    .filter(|&j| !self.is_basic[j] && !matches!(self.vars[j], VarType::Artificial(_)))
                    .max_by(|&a, &c| self.t[r * self.n + a].abs().total_cmp(&self.t[r * self.n + c].abs()));
                if let Some(j) = cand {
                    if self.t[r * self.n + j].abs() > 1e-7 {
                        // Degenerate pivot: the artificial is (near) zero.
                        self.pivot(r, j, &mut d);
                        self.x[b] = 0.0;
                    }
                }
            }
            for j in 0..self.n {
                if matches!(self.vars[j], VarType::Artificial(_)) {
                    self.hi[j] = 0.0;
                    if !self.is_basic[j] {
                        self.x[j] = 0.0;
                    }
                }
            }
        }
        if !self.iterate(false, bland_only, &mut budget)? {
            return Ok(LpSolution { status: LpStatus::Unbounded, objective: f64::NEG_INFINITY, x: vec![] });
        }
        self.refine();
        // Phase one measured a zero infeasibility on drifted values that the
        // refined basic solution does not confirm.
        if self.artificials_positive() {
            return Ok(infeasible());
        }
        let mut x = self.x_full.clone();
        for (j, v) in self.vars.iter().enumerate() {
            if let VarType::Structural(c) = *v {
                x[c] = self.x[j].clamp(self.lo[j], self.hi[j]);
            }
        }
        for (row, is_eq) in self.p.rows() {
            let r = row.activity(&x) - row.rhs;
            let v = if is_eq { r.abs() } else { r.max(0.0) };
            if v > 1e-7 * row.rhs.abs().max(1.0) {
                return Err(SolverError::NumericalFailure(format!("row {} violated by {v:.3e} after solve", row.tag.name())));
            }
        }
        let objective = self.p.objective_value(&x);
        Ok(LpSolution { status: LpStatus::Optimal, objective, x })
    }

    /// Whether some artificial variable exceeds the feasibility tolerance
    /// of its row.
    fn artificials_positive(&self) -> bool {
        (0..self.n).any(|j| match self.vars[j] {
            VarType::Artificial(i) => self.x[j] > 1e-7 * self.rows[i].2.abs().max(1.0),
            _ => false,
        })
    }

    /// Recompute the basic values from the nonbasic ones with an LU
    /// factorization of the basis columns.
    fn refine(&mut self) {
        let m = self.m;
        if m == 0 {
            return;
        }
        // Original (unsigned) columns of the reduced problem.
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::from_iterator(m, self.rows.iter().map(|r| r.2));
        // Structural columns looked up through a row map for speed.
        let rows_all: Vec<&crate::milp::Row> = self.p.rows().map(|(r, _)| r).collect();
        let mut struct_cols: std::collections::HashMap<usize, Vec<(usize, f64)>> = std::collections::HashMap::new();
        for (ri, (orig, _, _)) in self.rows.iter().enumerate() {
            let row = rows_all[*orig];
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                struct_cols.entry(c).or_default().push((ri, v));
            }
        }
        let column = |var: VarType| -> Vec<(usize, f64)> {
            match var {
                VarType::Structural(c) => struct_cols.get(&c).cloned().unwrap_or_default(),
                VarType::Slack(i) => vec![(i, 1.0)],
                VarType::Artificial(i) => vec![(i, self.sigma[i])],
            }
        };
        for j in 0..self.n {
            if self.is_basic[j] {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                for (i, v) in column(self.vars[j]) {
                    rhs[i] -= v * xj;
                }
            }
        }
        for (k, &b) in self.basis.iter().enumerate() {
            for (i, v) in column(self.vars[b]) {
                bmat[(i, k)] = v;
            }
        }
        let lu = bmat.lu();
        if let Some(xb) = lu.solve(&rhs) {
            if xb.iter().all(|v| v.is_finite()) {
                for (k, &b) in self.basis.iter().enumerate() {
                    self.x[b] = xb[k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{Family, Row, RowTag};

    fn row(cols: Vec<usize>, vals: Vec<f64>, rhs: f64) -> Row {
        Row { cols, vals, rhs, tag: RowTag { family: Family::Imported, element: "r".into(), sub: 0, k: None } }
    }

    fn problem(obj: Vec<f64>, eq: Vec<Row>, ineq: Vec<Row>, lower: Vec<f64>, upper: Vec<f64>) -> MilpProblem {
        MilpProblem {
            name: "t".into(),
            col_names: (0..obj.len()).map(|i| format!("x{i}")).collect(),
            objective: obj,
            eq,
            ineq,
            lower,
            upper,
            integer: vec![],
        }
    }

    #[test]
    fn lower_bound_row() {
        // min x s.t. x >= 3.
        let p = problem(vec![1.0], vec![], vec![row(vec![0], vec![-1.0], -3.0)], vec![-10.0], vec![10.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn square_system_has_unique_point() {
        // x + y = 3, x - y = 1 → (2, 1) whatever the objective.
        for obj in [vec![1.0, 1.0], vec![-5.0, 2.0]] {
            let p = problem(
                obj,
                vec![row(vec![0, 1], vec![1.0, 1.0], 3.0), row(vec![0, 1], vec![1.0, -1.0], 1.0)],
                vec![],
                vec![-10.0, -10.0],
                vec![10.0, 10.0],
            );
            let s = solve_lp(&p).unwrap();
            assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_and_bound_flip() {
        let p = problem(vec![1.0], vec![], vec![row(vec![0], vec![1.0], -1.0)], vec![0.0], vec![5.0]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
        // max x + y with x, y in [0, 1] and x + y <= 1.5.
        let p = problem(vec![-1.0, -1.0], vec![], vec![row(vec![0, 1], vec![1.0, 1.0], 1.5)], vec![0.0, 0.0], vec![1.0, 1.0]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 1.5).abs() < 1e-9);
    }

    #[test]
    fn unbounded_slack_direction() {
        // Only slacks are unbounded; with finite column bounds the LP is bounded.
        let p = problem(vec![-1.0], vec![], vec![row(vec![0], vec![1.0], 100.0)], vec![0.0], vec![7.0]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 7.0).abs() < 1e-9);
    }
}
