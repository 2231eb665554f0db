//! Column generation over pure stopping rules.
//!
//! The sojourn polytope `{0 <= p(j,t) <= in(j,t)}` is the convex hull of the
//! deterministic stop/continue rules, so the program is equivalent to a master
//! problem over mixtures of such rules with one row per potential constraint
//! and a convexity row. Given prices `nu`, the most profitable rule solves an
//! optimal stopping problem with running cost `nu_j` per step spent at `j`:
//!
//! ```text
//! W(j, t) = max(F(j, t), (W(j-1, t+1) + W(j+1, t+1)) / 2 - nu_j)
//! ```
//!
//! and `eta = W - F` together with `nu` is a feasible dual point whose
//! objective bounds the optimum from above. The loop stops once this bound
//! meets the master's value.

use crate::error::{Error, Result};
use crate::lattice::SiteArray;

use super::simplex::{BasisVar, RowKind, Simplex, SimplexOptions, Status};
use super::{
    finish, relative_gap, DualSolution, LpProblem, Method, PrimalSolution, SolveStats, SolveStatus,
    Solution, SolverOptions,
};

/// Decisions below this difference between stopping and continuing count as ties.
const TIE: f64 = 1e-13;

#[derive(Clone)]
struct Rule {
    stop: Vec<u64>,
}

impl Rule {
    fn new(n: usize) -> Self {
        Self { stop: vec![0; n.div_ceil(64)] }
    }

    fn set(&mut self, k: usize) {
        self.stop[k / 64] |= 1 << (k % 64);
    }

    fn stops(&self, k: usize) -> bool {
        self.stop[k / 64] >> (k % 64) & 1 == 1
    }
}

struct Pricing {
    /// Value function `W` over the lattice.
    w: SiteArray,
    price: f64,
    rules: Vec<Rule>,
}

/// Dense problem data shared by pricing and rule evaluation.
struct Kernel<'a> {
    problem: &'a LpProblem,
    j_lo: i64,
    j_hi: i64,
    j_star: i64,
    horizon: usize,
    f: SiteArray,
}

impl<'a> Kernel<'a> {
    fn new(problem: &'a LpProblem) -> Self {
        let g = problem.grid();
        let horizon = problem.horizon();
        let tab = problem.table();
        let mut f = SiteArray::zeros(g.j_lo, g.j_hi, horizon + 1);
        for t in 0..=horizon + 1 {
            for j in g.all_levels() {
                f.set(j, t, tab.value(j, t));
            }
        }
        Self { problem, j_lo: g.j_lo, j_hi: g.j_hi, j_star: g.j_star, horizon, f }
    }

    fn interior(&self) -> usize {
        (self.j_hi - self.j_lo - 1) as usize
    }

    fn row(&self, j: i64) -> usize {
        (j - self.j_lo - 1) as usize
    }

    /// Backward induction for prices `nu` (indexed by interior row).
    fn price(&self, nu: &[f64]) -> Pricing {
        let n = self.problem.num_vars();
        let mut w = self.f.clone();
        let mut eager = Rule::new(n);
        let mut lazy = Rule::new(n);
        let mut differ = false;
        for t in (1..=self.horizon).rev() {
            for j in self.j_lo + 1..self.j_hi {
                let Some(k) = self.problem.var(j, t) else { continue };
                let stop = self.f.get(j, t);
                let cont = 0.5 * (w.get(j - 1, t + 1) + w.get(j + 1, t + 1)) - nu[self.row(j)];
                if stop >= cont - TIE {
                    eager.set(k);
                }
                if stop > cont + TIE {
                    lazy.set(k);
                } else if stop >= cont - TIE {
                    differ = true;
                }
                w.set(j, t, stop.max(cont));
            }
        }
        let price = 0.5 * (w.get(self.j_star - 1, 1) + w.get(self.j_star + 1, 1));
        let rules = if differ { vec![eager, lazy] } else { vec![eager] };
        Pricing { w, price, rules }
    }

    /// Sojourn masses of a rule over the lattice.
    fn sojourn(&self, rule: &Rule) -> SiteArray {
        let mut p = SiteArray::zeros(self.j_lo, self.j_hi, self.horizon + 1);
        p.set(self.j_star, 0, 1.0);
        for t in 1..=self.horizon {
            for j in self.j_lo + 1..self.j_hi {
                let Some(k) = self.problem.var(j, t) else { continue };
                if !rule.stops(k) {
                    let inflow = 0.5 * (p.get(j - 1, t - 1) + p.get(j + 1, t - 1));
                    p.set(j, t, inflow);
                }
            }
        }
        p
    }

    /// Tilted value and per-level visit counts of a rule.
    fn evaluate(&self, rule: &Rule) -> (f64, Vec<f64>) {
        let p = self.sojourn(rule);
        let mut visits = vec![0.0; self.interior()];
        let mut value = 0.0;
        for t in 1..=self.horizon + 1 {
            for j in self.j_lo..=self.j_hi {
                let inflow = 0.5 * (p.get_or_zero(j - 1, t - 1) + p.get_or_zero(j + 1, t - 1));
                if inflow == 0.0 {
                    continue;
                }
                let stay = if j > self.j_lo && j < self.j_hi { p.get(j, t) } else { 0.0 };
                if stay > 0.0 {
                    visits[self.row(j)] += stay;
                }
                value += self.f.get(j, t) * (inflow - stay);
            }
        }
        (value, visits)
    }
}

#[derive(Clone)]
struct Column {
    rule: Rule,
    value: f64,
    visits: Vec<f64>,
}

/// Decisions that lose more than this under the final prices are repaired.
const DIRTY: f64 = 1e-10;
/// Purification rounds before giving up and reporting the residuals.
const MAX_ROUNDS: usize = 100;

fn master_entries(visits: &[f64], convexity: usize) -> Vec<(usize, f64)> {
    visits
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .chain(std::iter::once((convexity, 1.0)))
        .collect()
}

/// Master over the column pool, started from the slack basis plus the
/// artificial column in position 0.
fn build_master(pool: &[Column], u: &[f64]) -> Result<Simplex> {
    let m = u.len();
    let mut rhs = u.to_vec();
    rhs.push(1.0);
    let mut kinds = vec![RowKind::Le; m];
    kinds.push(RowKind::Eq);
    let mut master = Simplex::new(rhs, kinds, SimplexOptions::default());
    for col in pool {
        master.add_column(master_entries(&col.visits, m), col.value);
    }
    let mut basis: Vec<BasisVar> = (0..m).map(BasisVar::Slack).collect();
    basis.push(BasisVar::Col(0));
    master.set_basis(basis)?;
    Ok(master)
}

impl Kernel<'_> {
    fn column(&self, rule: Rule) -> Column {
        let (value, visits) = self.evaluate(&rule);
        Column { rule, value, visits }
    }

    /// Replace every decision of `rule` that loses more than [`DIRTY`] under
    /// prices `nu` (with value function `w`) by the better one. Returns
    /// `None` if no decision on the rule's own support needed changing.
    fn repair(&self, rule: &Rule, weight: f64, nu: &[f64], w: &SiteArray) -> Option<Rule> {
        let p = self.sojourn(rule);
        let mut fixed = rule.clone();
        let mut dirty = false;
        for (k, &(j, t)) in self.problem.vars().iter().enumerate() {
            let stop = self.f.get(j, t);
            let cont = 0.5 * (w.get(j - 1, t + 1) + w.get(j + 1, t + 1)) - nu[self.row(j)];
            let wrong = if rule.stops(k) { cont - stop } else { stop - cont };
            if wrong > DIRTY {
                let inflow = 0.5 * (p.get(j - 1, t - 1) + p.get(j + 1, t - 1));
                dirty |= weight * inflow > 0.1 * crate::ZERO_THRESHOLD;
                let b = &mut fixed.stop[k / 64];
                *b ^= 1 << (k % 64);
            }
        }
        dirty.then_some(fixed)
    }
}

pub(super) fn solve(problem: &LpProblem, opts: &SolverOptions) -> Result<Solution> {
    let kernel = Kernel::new(problem);
    let g = *problem.grid();
    let m = kernel.interior();
    let u: Vec<f64> = g.interior().map(|j| problem.rhs_at(j)).collect();

    // Stopping at the first step uses no potential and is always feasible.
    let mut first = Rule::new(problem.num_vars());
    for j in [g.j_star - 1, g.j_star + 1] {
        if let Some(k) = problem.var(j, 1) {
            first.set(k);
        }
    }
    let first = kernel.column(first);
    // Big-M copy of it keeps the start basis feasible however the pool changes.
    let scale = 1.0 + kernel.f.iter().fold(0.0f64, |a, (_, _, v)| a.max(v.abs()));
    let artificial = Column { value: first.value - 1e4 * scale, ..first.clone() };
    let mut pool = vec![artificial, first];
    let mut master = build_master(&pool, &u)?;

    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    let mut rounds = 0;
    let mut last: Option<(Vec<f64>, Pricing)> = None;
    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        match master.solve()? {
            Status::Optimal => {}
            Status::IterationLimit => break,
            Status::Unbounded => return Err(Error::Numerical("master program unbounded".into())),
        }
        let y = master.duals();
        let nu: Vec<f64> = y[..m].iter().map(|v| v.max(0.0)).collect();
        let sigma = y[m];
        let primal = master.objective();
        let pricing = kernel.price(&nu);
        let bound = nu.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() + pricing.price;
        let gap = relative_gap(primal, bound);
        let mut added = false;
        if gap > opts.gap_tol {
            for rule in &pricing.rules {
                let col = kernel.column(rule.clone());
                let reduced =
                    col.value - nu.iter().zip(&col.visits).map(|(a, b)| a * b).sum::<f64>() - sigma;
                if reduced > 1e-14 * (1.0 + col.value.abs()) {
                    master.add_column(master_entries(&col.visits, m), col.value);
                    pool.push(col);
                    added = true;
                }
            }
        }
        if !added {
            // Converged on the pool; purify the mixture if any member makes a
            // decision the final prices reject.
            let mut changed = false;
            if rounds < MAX_ROUNDS {
                for k in 1..pool.len() {
                    let lambda = master.column_value(k);
                    if lambda <= 0.0 {
                        continue;
                    }
                    if let Some(rule) = kernel.repair(&pool[k].rule, lambda, &nu, &pricing.w) {
                        pool[k] = kernel.column(rule);
                        changed = true;
                    }
                }
            }
            if changed {
                rounds += 1;
                master = build_master(&pool, &u)?;
                last = Some((nu, pricing));
                continue 'outer;
            }
            status = SolveStatus::Optimal;
            last = Some((nu, pricing));
            break;
        }
        last = Some((nu, pricing));
    }
    let (nu, pricing) = match last {
        Some(l) => l,
        None => (vec![0.0; m], kernel.price(&vec![0.0; m])),
    };
    if master.column_value(0) > 1e-9 {
        return Err(Error::Numerical("column pool lost feasibility".into()));
    }

    let mut p = SiteArray::zeros(g.j_lo, g.j_hi, problem.horizon() + 1);
    for (k, col) in pool.iter().enumerate().skip(1) {
        let lambda = master.column_value(k);
        if lambda <= 0.0 {
            continue;
        }
        let pk = kernel.sojourn(&col.rule);
        for (j, t, v) in pk.iter() {
            if v != 0.0 {
                p.add(j, t, lambda * v);
            }
        }
    }
    // The mixture weights sum to one up to rounding; pin the start mass.
    p.set(g.j_star, 0, 1.0);
    let primal = PrimalSolution::from_p(p, problem.table())?;

    let mut dual = DualSolution {
        grid: g,
        nu: vec![0.0; g.levels() + 1],
        eta: SiteArray::zeros(g.j_lo, g.j_hi, problem.horizon() + 1),
        tilted_objective: 0.0,
        objective: 0.0,
    };
    for j in g.interior() {
        dual.nu[(j - g.j_lo) as usize] = nu[kernel.row(j)];
    }
    for &(j, t) in problem.vars() {
        dual.eta.set(j, t, (pricing.w.get(j, t) - kernel.f.get(j, t)).max(0.0));
    }
    let stats = SolveStats {
        method: Method::ColumnGeneration,
        iterations,
        columns: pool.len() - 1,
        pivots: master.iterations(),
    };
    finish(problem, primal, dual, status, stats)
}
