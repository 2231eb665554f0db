//! Dual-side certificates: feasibility, complementary slackness, and the
//! superhedging surfaces read off `(nu, eta)`.

use serde::{Deserialize, Serialize};

use crate::lattice::SiteArray;
use crate::lp::{DualSolution, LpProblem, PrimalSolution};
use crate::measure::Grid;
use crate::payoff::PayoffTable;
use crate::ZERO_THRESHOLD;

/// Tolerance for dual feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Tolerance for each complementary slackness residual.
pub const SLACKNESS_TOL: f64 = 1e-7;

/// Whether `(j, t)` carries a sojourn variable (and hence a dual row).
fn has_row(grid: &Grid, horizon: usize, j: i64, t: usize) -> bool {
    grid.levels() > 2 && grid.is_interior(j) && (1..=horizon).contains(&t) && grid.reachable(j, t)
}

/// `(eta(j+1,t+1) + eta(j-1,t+1))/2 - eta(j,t) - nu_j` minus the payoff
/// generator `F(j,t) - (F(j+1,t+1) + F(j-1,t+1))/2`; nonpositive when the
/// dual row holds.
fn row_excess(dual: &DualSolution, table: &PayoffTable, j: i64, t: usize) -> f64 {
    let e = &dual.eta;
    let lhs = 0.5 * (e.get(j + 1, t + 1) + e.get(j - 1, t + 1)) - e.get(j, t) - dual.nu(j);
    let rhs = table.value(j, t) - 0.5 * (table.value(j + 1, t + 1) + table.value(j - 1, t + 1));
    lhs - rhs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFeasibility {
    /// Most negative `nu` or `eta`, as a positive number.
    pub sign_violation: f64,
    pub row_violation: f64,
    pub violated_rows: usize,
    pub worst_row: Option<(i64, usize)>,
    pub pass: bool,
}

/// Sign constraints and one generator inequality per sojourn site.
pub fn check_dual_feasible(dual: &DualSolution, table: &PayoffTable) -> DualFeasibility {
    let grid = table.grid();
    let horizon = table.horizon();
    let sign = dual
        .nu
        .iter()
        .copied()
        .chain(dual.eta.iter().map(|(_, _, v)| v))
        .fold(0.0f64, |a, v| a.max(-v));
    let mut report = DualFeasibility {
        sign_violation: sign,
        row_violation: 0.0,
        violated_rows: 0,
        worst_row: None,
        pass: false,
    };
    for t in 1..=horizon {
        for j in grid.interior() {
            if !has_row(grid, horizon, j, t) {
                continue;
            }
            let v = row_excess(dual, table, j, t);
            if v > FEASIBILITY_TOL {
                report.violated_rows += 1;
            }
            if v > report.row_violation {
                report.row_violation = v;
                report.worst_row = Some((j, t));
            }
        }
    }
    report.pass = report.sign_violation <= FEASIBILITY_TOL && report.row_violation <= FEASIBILITY_TOL;
    report
}

/// Largest residual of one slackness condition over its trigger set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub max_residual: f64,
    pub triggered: usize,
    /// Site `(j, t)`, or `(j, 0)` for level conditions, of the largest residual.
    pub worst: Option<(i64, usize)>,
}

impl Condition {
    fn note(&mut self, r: f64, at: (i64, usize)) {
        self.triggered += 1;
        if r > self.max_residual || self.worst.is_none() {
            self.max_residual = self.max_residual.max(r);
            self.worst = Some(at);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slackness {
    /// `p > 0` forces the dual row at that site to be tight.
    pub fcs1: Condition,
    /// `q > 0` forces `eta = 0`.
    pub fcs2: Condition,
    /// `nu_j > 0` forces the potential row at `j` to be tight.
    pub fcs3: Condition,
    pub threshold: f64,
    pub pass: bool,
}

pub fn check_slackness(primal: &PrimalSolution, dual: &DualSolution, problem: &LpProblem) -> Slackness {
    check_slackness_with(primal, dual, problem, ZERO_THRESHOLD)
}

pub fn check_slackness_with(
    primal: &PrimalSolution,
    dual: &DualSolution,
    problem: &LpProblem,
    threshold: f64,
) -> Slackness {
    let table = problem.table();
    let mut fcs1 = Condition::default();
    let mut fcs2 = Condition::default();
    let mut fcs3 = Condition::default();
    for &(j, t) in problem.vars() {
        if primal.p.get(j, t) > threshold {
            fcs1.note(row_excess(dual, table, j, t).abs(), (j, t));
        }
        if primal.q.get(j, t) > threshold {
            fcs2.note(dual.eta.get(j, t).abs(), (j, t));
        }
    }
    if !problem.is_immediate() {
        for j in problem.grid().interior() {
            if dual.nu(j) > threshold {
                fcs3.note((problem.rhs_at(j) - primal.level_total(j)).abs(), (j, 0));
            }
        }
    }
    let pass = [&fcs1, &fcs2, &fcs3].iter().all(|c| c.max_residual <= SLACKNESS_TOL);
    Slackness { fcs1, fcs2, fcs3, threshold, pass }
}

/// Superhedging surfaces recovered from a dual solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HedgeEstimate {
    /// `eta + F`, which dominates the (tilted) payoff.
    pub eta_tilde: SiteArray,
    /// `(j, N nu_j)`, an estimate of half the second derivative of the static
    /// part of the hedge at `x(j)`.
    pub h_second: Vec<(i64, f64)>,
    /// Dual objective: cost of the hedge for the tilted payoff.
    pub hedge_cost: f64,
    /// `sum_j nu_j (U_j - [j = j*])`.
    pub potential_term: f64,
    /// The same quantity as a Riemann sum in continuous units:
    /// `sum_j (N nu_j) (U_j - [j = j*]) / sqrt(N) * dx`.
    pub integral_form: f64,
    /// Hedge cost minus the potential term: `(eta + F)` averaged over the
    /// two first-step sites.
    pub start_term: f64,
}

pub fn reconstruct_hedge(dual: &DualSolution, problem: &LpProblem) -> HedgeEstimate {
    let grid = problem.grid();
    let table = problem.table();
    let mut eta_tilde = dual.eta.clone();
    for (j, t, _) in dual.eta.iter().collect::<Vec<_>>() {
        eta_tilde.add(j, t, table.value(j, t));
    }
    let n = grid.n as f64;
    let dx = 1.0 / grid.sqrt_n();
    let h_second: Vec<(i64, f64)> = grid.interior().map(|j| (j, n * dual.nu(j))).collect();
    let potential_term: f64 = grid.interior().map(|j| dual.nu(j) * problem.rhs_at(j)).sum();
    let integral_form: f64 = h_second
        .iter()
        .map(|&(j, h)| h * problem.rhs_at(j) * dx * dx)
        .sum();
    let hedge_cost = dual.objective_for(problem);
    HedgeEstimate {
        eta_tilde,
        h_second,
        hedge_cost,
        potential_term,
        integral_form,
        start_term: hedge_cost - potential_term,
    }
}
