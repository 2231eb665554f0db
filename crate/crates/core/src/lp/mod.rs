//! The primal program on the parity lattice and its primal-dual solution.
//!
//! Variables are the sojourn masses `p(j, t)`, the probability of being at
//! interior level `j` at step `1 <= t <= T` without having stopped. Stopped
//! masses `q` are slack of the dynamics rows. The program is truncated at the
//! horizon `T`: whatever is still running at `T` stops at `T + 1`.
//!
//! Two solvers share the same certificates: [`Method::ColumnGeneration`]
//! decomposes the program into a small master over pure stopping rules and an
//! optimal-stopping pricing step, and [`Method::Direct`] runs the revised
//! simplex on the full staircase matrix (practical for small grids only).

mod colgen;
pub mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteArray;
use crate::measure::{AtomicMeasure, Grid, PotentialArray};
use crate::payoff::PayoffTable;

pub use crate::survival::horizon;
use simplex::{RowKind, Simplex, SimplexOptions, Status};

const NO_VAR: u32 = u32::MAX;

/// The constraint family a row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowFamily {
    /// `p(j, t) <= (p(j-1, t-1) + p(j+1, t-1)) / 2`.
    Dynamics { j: i64, t: usize },
    /// `sum_t p(j, t) <= U_j - [j = j*]`.
    Potential { j: i64 },
}

#[derive(Clone, Debug)]
pub struct Row {
    pub family: RowFamily,
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// The assembled program `max c.p + c0` subject to `A p <= b`, `p >= 0`.
#[derive(Clone, Debug)]
pub struct LpProblem {
    grid: Grid,
    table: PayoffTable,
    potential: PotentialArray,
    /// `U_j - [j = j*]` for every level (zero at the boundaries).
    rhs: Vec<f64>,
    vars: Vec<(i64, usize)>,
    index: Vec<u32>,
    rows: Vec<Row>,
    objective: Vec<f64>,
    constant: f64,
    /// The target is the point mass at the start: stop at time zero.
    immediate: bool,
}

/// Assemble the program for target `mu` and (tilted) payoff `table`.
///
/// The horizon is the table's. Fails with [`Error::Infeasible`] when the
/// start level's potential is below one, which means the target cannot be
/// reached without stopping at time zero.
pub fn assemble(grid: &Grid, mu: &AtomicMeasure, table: &PayoffTable) -> Result<LpProblem> {
    if table.grid() != grid {
        return Err(Error::invalid("payoff table was built on a different grid"));
    }
    mu.validate(grid)?;
    let potential = crate::measure::potential(mu, grid)?;
    let horizon = table.horizon();
    let immediate = mu.is_dirac_at(grid.j_star);
    let rhs: Vec<f64> = grid
        .all_levels()
        .map(|j| {
            if !grid.is_interior(j) {
                0.0
            } else if j == grid.j_star {
                potential.get(j) - 1.0
            } else {
                potential.get(j)
            }
        })
        .collect();
    if !immediate && rhs[(grid.j_star - grid.j_lo) as usize] < -1e-9 {
        return Err(Error::Infeasible(format!(
            "potential at the start level is {} < 1",
            potential.get(grid.j_star)
        )));
    }
    let rhs: Vec<f64> = rhs.into_iter().map(|v| v.max(0.0)).collect();

    let width = grid.levels() + 1;
    let mut index = vec![NO_VAR; width * (horizon + 2)];
    let mut vars = Vec::new();
    // With a single interior level every path is absorbed at step one.
    if !immediate && grid.levels() > 2 {
        for t in 1..=horizon {
            for j in grid.interior() {
                if grid.reachable(j, t) {
                    index[t * width + (j - grid.j_lo) as usize] = vars.len() as u32;
                    vars.push((j, t));
                }
            }
        }
    }
    let mut problem = LpProblem {
        grid: *grid,
        table: table.clone(),
        potential,
        rhs,
        vars,
        index,
        rows: Vec::new(),
        objective: Vec::new(),
        constant: 0.0,
        immediate,
    };
    problem.build_rows();
    Ok(problem)
}

impl LpProblem {
    fn build_rows(&mut self) {
        let g = self.grid;
        let js = g.j_star;
        let mut rows = Vec::with_capacity(self.vars.len() + g.levels());
        for (k, &(j, t)) in self.vars.iter().enumerate() {
            let mut entries = vec![(k, 1.0)];
            let mut rhs = 0.0;
            for nb in [j - 1, j + 1] {
                if t == 1 {
                    if nb == js {
                        rhs += 0.5;
                    }
                } else if let Some(i) = self.var(nb, t - 1) {
                    entries.push((i, -0.5));
                }
            }
            rows.push(Row { family: RowFamily::Dynamics { j, t }, entries, rhs });
        }
        let mut by_level: Vec<Vec<(usize, f64)>> = vec![Vec::new(); g.levels() + 1];
        for (k, &(j, _)) in self.vars.iter().enumerate() {
            by_level[(j - g.j_lo) as usize].push((k, 1.0));
        }
        for j in g.interior() {
            rows.push(Row {
                family: RowFamily::Potential { j },
                entries: std::mem::take(&mut by_level[(j - g.j_lo) as usize]),
                rhs: self.rhs_at(j),
            });
        }
        self.rows = rows;

        // Objective in p alone: q(j,t) = in(j,t) - p(j,t), so each p(j,t)
        // collects the mean payoff of its two children minus its own.
        let tab = &self.table;
        self.objective = self
            .vars
            .iter()
            .map(|&(j, t)| 0.5 * (tab.value(j - 1, t + 1) + tab.value(j + 1, t + 1)) - tab.value(j, t))
            .collect();
        self.constant = if self.immediate {
            tab.value(js, 0)
        } else {
            0.5 * (tab.value(js - 1, 1) + tab.value(js + 1, 1))
        };
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn table(&self) -> &PayoffTable {
        &self.table
    }

    pub fn horizon(&self) -> usize {
        self.table.horizon()
    }

    pub fn potential(&self) -> &PotentialArray {
        &self.potential
    }

    /// Right-hand side `U_j - [j = j*]` of the potential row at `j`.
    pub fn rhs_at(&self, j: i64) -> f64 {
        if self.grid.is_interior(j) {
            self.rhs[(j - self.grid.j_lo) as usize]
        } else {
            0.0
        }
    }

    pub fn is_immediate(&self) -> bool {
        self.immediate
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[(i64, usize)] {
        &self.vars
    }

    /// Variable index of site `(j, t)`, if it carries one.
    pub fn var(&self, j: i64, t: usize) -> Option<usize> {
        if !self.grid.is_interior(j) || t > self.horizon() + 1 {
            return None;
        }
        let w = self.grid.levels() + 1;
        match self.index[t * w + (j - self.grid.j_lo) as usize] {
            NO_VAR => None,
            k => Some(k as usize),
        }
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn count_rows(&self, potential: bool) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r.family, RowFamily::Potential { .. }) == potential)
            .count()
    }

    pub fn objective_coefficients(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.constant
    }

    /// Objective of a variable vector: `c.p + c0` (tilted payoff).
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Scatter a variable vector onto the lattice, including `p(j*, 0)`.
    pub fn to_sites(&self, x: &[f64]) -> SiteArray {
        let g = &self.grid;
        let mut p = SiteArray::zeros(g.j_lo, g.j_hi, self.horizon() + 1);
        if !self.immediate {
            p.set(g.j_star, 0, 1.0);
        }
        for (&(j, t), &v) in self.vars.iter().zip(x) {
            p.set(j, t, v);
        }
        p
    }

    /// Gather the variable vector from a lattice array.
    pub fn from_sites(&self, p: &SiteArray) -> Vec<f64> {
        self.vars.iter().map(|&(j, t)| p.get_or_zero(j, t)).collect()
    }

    /// Largest violation of the program's constraints by `p`, and the row
    /// where it occurs. Sites outside the variable set must hold zero.
    pub fn feasibility(&self, p: &SiteArray) -> Feasibility {
        let mut worst = Feasibility { max_violation: 0.0, row: None };
        let mut note = |v: f64, what: String| {
            if v > worst.max_violation {
                worst.max_violation = v;
                worst.row = Some(what);
            }
        };
        let g = &self.grid;
        for (j, t, v) in p.iter() {
            let expected_var = t >= 1 && self.var(j, t).is_some();
            if expected_var {
                note(-v, format!("sign p({j},{t}) >= 0"));
            } else if !(t == 0 && j == g.j_star) {
                note(v.abs(), format!("p({j},{t}) = 0 outside the lattice"));
            }
        }
        let x = self.from_sites(p);
        for row in &self.rows {
            let lhs: f64 = row.entries.iter().map(|&(k, a)| a * x[k]).sum();
            let what = match row.family {
                RowFamily::Dynamics { j, t } => format!("dynamics ({j},{t})"),
                RowFamily::Potential { j } => format!("potential {j}"),
            };
            note(lhs - row.rhs, what);
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub max_violation: f64,
    pub row: Option<String>,
}

/// Stopped masses from sojourn masses: `q(j,t) = (p(j-1,t-1) + p(j+1,t-1))/2
/// - p(j,t)` inside, `q = p(neighbour, t-1)/2` on the boundary and
/// `q(j*, 0) = 1 - p(j*, 0)`.
///
/// Returns `q` with tiny negative values clipped to zero, together with the
/// largest clipped magnitude. Values below `-1e-6` are an error.
pub fn recover_q(p: &SiteArray, grid: &Grid) -> Result<(SiteArray, f64)> {
    let t_max = p.t_max();
    let mut q = SiteArray::zeros(grid.j_lo, grid.j_hi, t_max);
    let mut clip = 0.0f64;
    let mut put = |q: &mut SiteArray, j: i64, t: usize, v: f64| -> Result<()> {
        if v < -1e-6 {
            return Err(Error::invalid(format!(
                "stopped mass q({j},{t}) = {v:.3e} is negative: p is infeasible"
            )));
        }
        if v < 0.0 {
            clip = clip.max(-v);
        }
        q.set(j, t, v.max(0.0));
        Ok(())
    };
    put(&mut q, grid.j_star, 0, 1.0 - p.get(grid.j_star, 0))?;
    for t in 1..=t_max {
        for j in grid.all_levels() {
            let inflow = 0.5 * (p.get_or_zero(j - 1, t - 1) + p.get_or_zero(j + 1, t - 1));
            let v = if grid.is_interior(j) { inflow - p.get(j, t) } else { inflow };
            if v != 0.0 {
                put(&mut q, j, t, v)?;
            }
        }
    }
    Ok((q, clip))
}

/// Sojourn and stopped masses of a stopping rule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub grid: Grid,
    /// `p(j, t)` for `0 <= t <= T + 1`; zero at boundaries and at `T + 1`.
    pub p: SiteArray,
    /// `q(j, t)` for `0 <= t <= T + 1`.
    pub q: SiteArray,
    /// Untilted objective `sum F(j,t) q(j,t)`.
    pub objective: f64,
    /// Objective with the tilt, as seen by the program.
    pub tilted_objective: f64,
    /// Total stopped mass, including the forced stop at `T + 1`.
    pub stopped_mass: f64,
    /// Mass still running at the horizon.
    pub tail_mass: f64,
    /// Largest negative `q` clipped to zero.
    pub clip: f64,
}

impl PrimalSolution {
    pub fn from_p(p: SiteArray, table: &PayoffTable) -> Result<Self> {
        let grid = *table.grid();
        if p.t_max() != table.horizon() + 1 || p.j_lo() != grid.j_lo || p.j_hi() != grid.j_hi {
            return Err(Error::invalid("solution array does not match the payoff table"));
        }
        let (q, clip) = recover_q(&p, &grid)?;
        let mut s = Self {
            grid,
            p,
            q,
            objective: 0.0,
            tilted_objective: 0.0,
            stopped_mass: 0.0,
            tail_mass: 0.0,
            clip,
        };
        s.rescore(table);
        Ok(s)
    }

    /// Recompute objective values against `table`.
    pub fn rescore(&mut self, table: &PayoffTable) {
        let (mut obj, mut tilted, mut mass) = (0.0, 0.0, 0.0);
        for (j, t, v) in self.q.iter() {
            if v != 0.0 {
                obj += table.base(j, t) * v;
                tilted += table.value(j, t) * v;
                mass += v;
            }
        }
        self.objective = obj;
        self.tilted_objective = tilted;
        self.stopped_mass = mass;
        self.tail_mass = self.q.slice_sum(self.q.t_max());
    }

    pub fn horizon(&self) -> usize {
        self.p.t_max() - 1
    }

    /// `E[tau]` in continuous time under this solution.
    pub fn expected_time(&self) -> f64 {
        let n = self.grid.n as f64;
        self.q.iter().map(|(_, t, v)| v * t as f64 / n).sum()
    }

    /// `sum_{t >= 1} p(j, t)`: expected visits to `j` after the start.
    pub fn level_total(&self, j: i64) -> f64 {
        (1..=self.p.t_max()).map(|t| self.p.get(j, t)).sum()
    }

    /// Law of the stopping level.
    pub fn law(&self) -> Vec<(i64, f64)> {
        self.grid
            .all_levels()
            .map(|j| (j, self.q.level_sum(j)))
            .collect()
    }

    /// `max_j |U_j - [j = j*] - sum_t p(j,t)|` over interior levels.
    pub fn embedding_residual(&self, problem: &LpProblem) -> f64 {
        if problem.is_immediate() {
            return 0.0;
        }
        self.grid
            .interior()
            .map(|j| (problem.rhs_at(j) - self.level_total(j)).abs())
            .fold(0.0, f64::max)
    }
}

/// Potential prices `nu_j` and supermartingale surpluses `eta(j, t)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualSolution {
    pub grid: Grid,
    /// `nu_j` for every level, zero at the boundaries.
    pub nu: Vec<f64>,
    /// `eta(j, t)` for `0 <= t <= T + 1`; zero on boundaries and at `T + 1`.
    pub eta: SiteArray,
    /// Dual objective of the tilted program.
    pub tilted_objective: f64,
    /// Dual objective with the tilt removed using the primal's `E[tau]`.
    pub objective: f64,
}

impl DualSolution {
    pub fn nu(&self, j: i64) -> f64 {
        let k = j - self.grid.j_lo;
        if k < 0 || k as usize >= self.nu.len() {
            0.0
        } else {
            self.nu[k as usize]
        }
    }

    /// `sum_j nu_j (U_j - [j = j*]) + (eta + F)` averaged over the two
    /// first-step sites, against the tilted table.
    pub fn objective_for(&self, problem: &LpProblem) -> f64 {
        let g = &self.grid;
        let tab = problem.table();
        if problem.is_immediate() {
            return tab.value(g.j_star, 0) + self.eta.get(g.j_star, 0);
        }
        let hedge: f64 = g.interior().map(|j| self.nu(j) * problem.rhs_at(j)).sum();
        let first: f64 = [g.j_star - 1, g.j_star + 1]
            .iter()
            .map(|&j| 0.5 * (self.eta.get(j, 1) + tab.value(j, 1)))
            .sum();
        hedge + first
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    ColumnGeneration,
    Direct,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub method: Method,
    /// Stop once `(dual - primal) / (1 + |primal|)` is below this.
    pub gap_tol: f64,
    /// Outer iterations (column generation) or pivots (direct).
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::ColumnGeneration,
            gap_tol: 1e-10,
            max_iterations: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    IterationLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    pub columns: usize,
    pub pivots: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub primal: PrimalSolution,
    pub dual: DualSolution,
    pub status: SolveStatus,
    /// Relative duality gap `|P - D| / (1 + |P|)` of the tilted program.
    pub gap: f64,
    pub stats: SolveStats,
}

pub fn relative_gap(primal: f64, dual: f64) -> f64 {
    (dual - primal).abs() / (1.0 + primal.abs())
}

/// Solve with default options.
pub fn solve(problem: &LpProblem) -> Result<Solution> {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &LpProblem, opts: &SolverOptions) -> Result<Solution> {
    if problem.is_immediate() || problem.num_vars() == 0 {
        return trivial(problem);
    }
    match opts.method {
        Method::ColumnGeneration => colgen::solve(problem, opts),
        Method::Direct => solve_direct(problem, opts),
    }
}

/// No free variables: the rule is forced, and `eta = 0`, `nu = 0` certify it.
fn trivial(problem: &LpProblem) -> Result<Solution> {
    let x = vec![0.0; problem.num_vars()];
    let primal = PrimalSolution::from_p(problem.to_sites(&x), problem.table())?;
    let dual = zero_dual(problem);
    finish(problem, primal, dual, SolveStatus::Optimal, SolveStats {
        method: Method::Direct,
        iterations: 0,
        columns: 0,
        pivots: 0,
    })
}

fn zero_dual(problem: &LpProblem) -> DualSolution {
    let g = problem.grid();
    DualSolution {
        grid: *g,
        nu: vec![0.0; g.levels() + 1],
        eta: SiteArray::zeros(g.j_lo, g.j_hi, problem.horizon() + 1),
        tilted_objective: 0.0,
        objective: 0.0,
    }
}

pub(crate) fn finish(
    problem: &LpProblem,
    primal: PrimalSolution,
    mut dual: DualSolution,
    status: SolveStatus,
    stats: SolveStats,
) -> Result<Solution> {
    dual.tilted_objective = dual.objective_for(problem);
    let tilt = problem.table().tilt_constant() * primal.expected_time();
    dual.objective = dual.tilted_objective - tilt;
    let gap = relative_gap(primal.tilted_objective, dual.tilted_objective);
    Ok(Solution { primal, dual, status, gap, stats })
}

/// Revised simplex on the full staircase program.
pub fn solve_direct(problem: &LpProblem, opts: &SolverOptions) -> Result<Solution> {
    if problem.is_immediate() || problem.num_vars() == 0 {
        return trivial(problem);
    }
    let rows = problem.rows();
    let mut lp = Simplex::new(
        rows.iter().map(|r| r.rhs).collect(),
        vec![RowKind::Le; rows.len()],
        SimplexOptions {
            max_iterations: opts.max_iterations,
            ..Default::default()
        },
    );
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.num_vars()];
    for (i, r) in rows.iter().enumerate() {
        for &(k, a) in &r.entries {
            cols[k].push((i, a));
        }
    }
    for (k, col) in cols.into_iter().enumerate() {
        lp.add_column(col, problem.objective_coefficients()[k]);
    }
    lp.set_slack_basis()?;
    let status = match lp.solve()? {
        Status::Optimal => SolveStatus::Optimal,
        Status::IterationLimit => SolveStatus::IterationLimit,
        Status::Unbounded => return Err(Error::Numerical("bounded program reported unbounded".into())),
    };
    let x: Vec<f64> = (0..problem.num_vars()).map(|k| lp.column_value(k)).collect();
    let primal = PrimalSolution::from_p(problem.to_sites(&x), problem.table())?;
    let mut dual = zero_dual(problem);
    let y = lp.duals();
    let g = *problem.grid();
    for (i, r) in rows.iter().enumerate() {
        match r.family {
            RowFamily::Dynamics { j, t } => dual.eta.set(j, t, y[i].max(0.0)),
            RowFamily::Potential { j } => dual.nu[(j - g.j_lo) as usize] = y[i].max(0.0),
        }
    }
    let stats = SolveStats {
        method: Method::Direct,
        iterations: lp.iterations(),
        columns: problem.num_vars(),
        pivots: lp.iterations(),
    };
    finish(problem, primal, dual, status, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{project_measure, MeasureSpec};
    use crate::payoff::{discretise, tilt, PayoffSpec};

    fn setup(spec: MeasureSpec, n: u64, horizon: usize, payoff: PayoffSpec) -> LpProblem {
        let grid = spec.grid(n).unwrap();
        let mu = project_measure(&spec, &grid).unwrap();
        let table = tilt(&discretise(&payoff, &grid, horizon).unwrap());
        assemble(&grid, &mu, &table).unwrap()
    }

    fn three_point() -> MeasureSpec {
        MeasureSpec::new(vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)])
    }

    #[test]
    fn lattice_counts() {
        let lp = setup(MeasureSpec::symmetric_two_point(1.0), 1, 4, PayoffSpec::root());
        assert_eq!(lp.num_vars(), 0);
        let lp = setup(three_point(), 4, 2, PayoffSpec::root());
        assert_eq!(lp.num_vars(), 3);
        assert_eq!(lp.vars(), &[(-1, 1), (1, 1), (0, 2)]);
        let lp = setup(MeasureSpec::symmetric_two_point(1.0), 16, 64, PayoffSpec::root());
        assert_eq!(lp.count_rows(true), 7);
        assert_eq!(lp.count_rows(false), lp.num_vars());
        // Each variable sits in one potential row and at most three dynamics rows.
        let mut in_dyn = vec![0usize; lp.num_vars()];
        let mut in_pot = vec![0usize; lp.num_vars()];
        for r in lp.rows() {
            for &(k, _) in &r.entries {
                match r.family {
                    RowFamily::Dynamics { .. } => in_dyn[k] += 1,
                    RowFamily::Potential { .. } => in_pot[k] += 1,
                }
            }
        }
        assert!(in_pot.iter().all(|&c| c == 1));
        assert!(in_dyn.iter().all(|&c| (1..=3).contains(&c)));
    }

    #[test]
    fn recover_q_examples() {
        let grid = Grid::from_indices(-2, 2, 4).unwrap();
        let mut p = SiteArray::zeros(-2, 2, 3);
        p.set(0, 0, 1.0);
        let (q, clip) = recover_q(&p, &grid).unwrap();
        assert_eq!(clip, 0.0);
        assert_eq!((q.get(-1, 1), q.get(1, 1)), (0.5, 0.5));
        // Stop everything at t = 2.
        p.set(-1, 1, 0.5);
        p.set(1, 1, 0.5);
        let (q, _) = recover_q(&p, &grid).unwrap();
        assert_eq!((q.get(-2, 2), q.get(0, 2), q.get(2, 2)), (0.25, 0.5, 0.25));
        p.set(0, 2, 0.6);
        assert!(recover_q(&p, &grid).is_err());
    }

    #[test]
    fn two_point_single_step() {
        let lp = setup(MeasureSpec::symmetric_two_point(1.0), 1, 3, PayoffSpec::root());
        let sol = solve(&lp).unwrap();
        assert!((sol.primal.objective - (-1.0)).abs() < 1e-15);
        assert!(sol.gap < 1e-15);
    }

    #[test]
    fn dirac_target_stops_at_once() {
        let lp = setup(MeasureSpec::dirac(0.0), 16, 8, default_cave_spec());
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.primal.q.get(0, 0), 1.0);
        assert_eq!(sol.primal.objective, 0.0);
        assert_eq!(sol.gap, 0.0);
    }

    fn default_cave_spec() -> PayoffSpec {
        crate::payoff::default_cave(0.5)
    }

    #[test]
    fn three_point_root_both_methods() {
        let spec = three_point();
        let grid = spec.grid(4).unwrap();
        let t = horizon(&grid, 1e-10);
        let lp = setup(spec, 4, t, PayoffSpec::root());
        for method in [Method::ColumnGeneration, Method::Direct] {
            let sol = solve_with(&lp, &SolverOptions { method, ..Default::default() }).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.primal.objective + 0.25).abs() < 1e-9, "{method:?}: {}", sol.primal.objective);
            assert!(sol.gap < 1e-9);
            assert!(sol.primal.embedding_residual(&lp) < 1e-9);
            assert!((sol.primal.q.get(0, 2) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn feasibility_names_the_row() {
        let lp = setup(three_point(), 4, 6, PayoffSpec::root());
        let mut p = lp.to_sites(&vec![0.0; lp.num_vars()]);
        assert_eq!(lp.feasibility(&p).max_violation, 0.0);
        p.set(1, 1, 0.7);
        let f = lp.feasibility(&p);
        assert!((f.max_violation - 0.2).abs() < 1e-15);
        assert_eq!(f.row.as_deref(), Some("dynamics (1,1)"));
    }
}
