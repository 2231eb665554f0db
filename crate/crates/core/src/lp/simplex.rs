//! Revised primal simplex for `max c.x  s.t.  A x (<= | =) b,  x >= 0`.
//!
//! The basis inverse is kept explicitly and updated by elementary row
//! operations, with periodic refactorisation. Pricing is Dantzig's rule; after
//! `3 m` consecutive degenerate pivots the solver switches to Bland's rule
//! until it makes progress again.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
}

/// A variable of the standard form: a row's slack or a structural column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisVar {
    Slack(usize),
    Col(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    IterationLimit,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Reduced-cost threshold for entering variables.
    pub opt_tol: f64,
    /// Smallest acceptable pivot element in the ratio test.
    pub pivot_tol: f64,
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            opt_tol: 1e-11,
            pivot_tol: 1e-11,
            refactor_every: 100,
        }
    }
}

pub struct Simplex {
    m: usize,
    rhs: Vec<f64>,
    kinds: Vec<RowKind>,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    basis: Vec<BasisVar>,
    col_pos: Vec<Option<usize>>,
    slack_pos: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    y: Vec<f64>,
    opts: SimplexOptions,
    iterations: usize,
    since_refactor: usize,
    stall: usize,
    bland: bool,
    bland_pivots: usize,
}

impl Simplex {
    pub fn new(rhs: Vec<f64>, kinds: Vec<RowKind>, opts: SimplexOptions) -> Self {
        assert_eq!(rhs.len(), kinds.len());
        let m = rhs.len();
        Self {
            m,
            rhs,
            kinds,
            cols: Vec::new(),
            cost: Vec::new(),
            basis: Vec::new(),
            col_pos: Vec::new(),
            slack_pos: vec![None; m],
            binv: Vec::new(),
            xb: Vec::new(),
            y: vec![0.0; m],
            opts,
            iterations: 0,
            since_refactor: 0,
            stall: 0,
            bland: false,
            bland_pivots: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn columns(&self) -> usize {
        self.cols.len()
    }

    /// Append a structural column given as `(row, coefficient)` pairs.
    pub fn add_column(&mut self, entries: Vec<(usize, f64)>, cost: f64) -> usize {
        debug_assert!(entries.iter().all(|&(r, _)| r < self.m));
        self.cols.push(entries);
        self.cost.push(cost);
        self.col_pos.push(None);
        self.cols.len() - 1
    }

    /// Start from the all-slack basis; requires every row to be `<=` with a
    /// nonnegative right-hand side.
    pub fn set_slack_basis(&mut self) -> Result<()> {
        if self.kinds.iter().any(|k| *k == RowKind::Eq) || self.rhs.iter().any(|&b| b < 0.0) {
            return Err(Error::Numerical("slack basis is not primal feasible".into()));
        }
        self.set_basis((0..self.m).map(BasisVar::Slack).collect())
    }

    pub fn set_basis(&mut self, basis: Vec<BasisVar>) -> Result<()> {
        assert_eq!(basis.len(), self.m);
        self.col_pos.iter_mut().for_each(|p| *p = None);
        self.slack_pos.iter_mut().for_each(|p| *p = None);
        for (r, v) in basis.iter().enumerate() {
            match *v {
                BasisVar::Slack(i) => {
                    assert_eq!(self.kinds[i], RowKind::Le, "equality rows have no slack");
                    self.slack_pos[i] = Some(r);
                }
                BasisVar::Col(k) => self.col_pos[k] = Some(r),
            }
        }
        self.basis = basis;
        self.refactor()?;
        if self.xb.iter().any(|&v| v < -1e-9) {
            return Err(Error::Numerical("initial basis is not primal feasible".into()));
        }
        Ok(())
    }

    fn var_cost(&self, v: BasisVar) -> f64 {
        match v {
            BasisVar::Slack(_) => 0.0,
            BasisVar::Col(k) => self.cost[k],
        }
    }

    fn order(&self, v: BasisVar) -> usize {
        match v {
            BasisVar::Slack(i) => i,
            BasisVar::Col(k) => self.m + k,
        }
    }

    /// Rebuild the basis inverse, basic values and multipliers from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (r, v) in self.basis.iter().enumerate() {
            match *v {
                BasisVar::Slack(i) => a[i * m + r] = 1.0,
                BasisVar::Col(k) => {
                    for &(i, x) in &self.cols[k] {
                        a[i * m + r] += x;
                    }
                }
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (piv, big) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if big < 1e-12 {
                return Err(Error::Numerical(format!("singular basis at column {c}")));
            }
            if piv != c {
                for k in 0..m {
                    a.swap(piv * m + k, c * m + k);
                    inv.swap(piv * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.xb = (0..m)
            .map(|r| (0..m).map(|i| self.binv[r * m + i] * self.rhs[i]).sum::<f64>())
            .collect();
        for v in self.xb.iter_mut() {
            if *v < 0.0 && *v > -1e-11 {
                *v = 0.0;
            }
        }
        self.recompute_duals();
        self.since_refactor = 0;
        Ok(())
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&v| self.var_cost(v)).collect();
        self.y = (0..m)
            .map(|i| (0..m).map(|r| cb[r] * self.binv[r * m + i]).sum())
            .collect();
    }

    fn reduced_cost(&self, v: BasisVar) -> f64 {
        match v {
            BasisVar::Slack(i) => -self.y[i],
            BasisVar::Col(k) => {
                self.cost[k] - self.cols[k].iter().map(|&(i, a)| self.y[i] * a).sum::<f64>()
            }
        }
    }

    fn choose_entering(&self) -> Option<(BasisVar, f64)> {
        let tol = self.opts.opt_tol;
        let slacks = (0..self.m)
            .filter(|&i| self.kinds[i] == RowKind::Le && self.slack_pos[i].is_none())
            .map(BasisVar::Slack);
        let cols = (0..self.cols.len())
            .filter(|&k| self.col_pos[k].is_none())
            .map(BasisVar::Col);
        let mut candidates = slacks.chain(cols).map(|v| (v, self.reduced_cost(v)));
        if self.bland {
            candidates.find(|&(_, d)| d > tol)
        } else {
            candidates
                .filter(|&(_, d)| d > tol)
                .fold(None, |best: Option<(BasisVar, f64)>, c| match best {
                    Some(b) if b.1 >= c.1 => Some(b),
                    _ => Some(c),
                })
        }
    }

    fn column_image(&self, v: BasisVar) -> Vec<f64> {
        let m = self.m;
        match v {
            BasisVar::Slack(i) => (0..m).map(|r| self.binv[r * m + i]).collect(),
            BasisVar::Col(k) => (0..m)
                .map(|r| self.cols[k].iter().map(|&(i, a)| self.binv[r * m + i] * a).sum())
                .collect(),
        }
    }

    /// Run pivots until optimality, unboundedness or the iteration limit.
    pub fn solve(&mut self) -> Result<Status> {
        if self.basis.len() != self.m {
            self.set_slack_basis()?;
        }
        let m = self.m;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Ok(Status::IterationLimit);
            }
            let Some((enter, d)) = self.choose_entering() else {
                // Confirm on a fresh factorisation before declaring optimality.
                if self.since_refactor > 0 {
                    self.refactor()?;
                    if self.choose_entering().is_some() {
                        continue;
                    }
                }
                return Ok(Status::Optimal);
            };
            let w = self.column_image(enter);
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for r in 0..m {
                if w[r] > self.opts.pivot_tol {
                    let theta = self.xb[r].max(0.0) / w[r];
                    let better = match leave {
                        None => true,
                        Some(p) => {
                            if theta < best - 1e-12 {
                                true
                            } else if theta <= best + 1e-12 {
                                if self.bland {
                                    self.order(self.basis[r]) < self.order(self.basis[p])
                                } else {
                                    w[r] > w[p]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(r);
                        best = best.min(theta);
                    }
                }
            }
            let Some(p) = leave else {
                return Ok(Status::Unbounded);
            };
            let theta = self.xb[p].max(0.0) / w[p];
            for r in 0..m {
                self.xb[r] -= theta * w[r];
            }
            self.xb[p] = theta;
            let wp = w[p];
            for k in 0..m {
                self.binv[p * m + k] /= wp;
            }
            let (before, rest) = self.binv.split_at_mut(p * m);
            let (prow, after) = rest.split_at_mut(m);
            for r in 0..m {
                if r == p || w[r] == 0.0 {
                    continue;
                }
                let f = w[r];
                let row = if r < p {
                    &mut before[r * m..(r + 1) * m]
                } else {
                    let o = (r - p - 1) * m;
                    &mut after[o..o + m]
                };
                for k in 0..m {
                    row[k] -= f * prow[k];
                }
            }
            for k in 0..m {
                self.y[k] += d * self.binv[p * m + k];
            }
            match self.basis[p] {
                BasisVar::Slack(i) => self.slack_pos[i] = None,
                BasisVar::Col(k) => self.col_pos[k] = None,
            }
            match enter {
                BasisVar::Slack(i) => self.slack_pos[i] = Some(p),
                BasisVar::Col(k) => self.col_pos[k] = Some(p),
            }
            self.basis[p] = enter;
            self.iterations += 1;
            self.since_refactor += 1;
            if self.bland {
                self.bland_pivots += 1;
            }
            if theta <= 1e-12 {
                self.stall += 1;
                if self.stall > 3 * m {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
                self.bland = false;
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Number of pivots taken under Bland's rule.
    pub fn bland_pivots(&self) -> usize {
        self.bland_pivots
    }

    pub fn column_value(&self, k: usize) -> f64 {
        self.col_pos[k].map_or(0.0, |r| self.xb[r].max(0.0))
    }

    pub fn slack_value(&self, i: usize) -> f64 {
        self.slack_pos[i].map_or(0.0, |r| self.xb[r].max(0.0))
    }

    /// Simplex multipliers `c_B B^{-1}`, one per row.
    pub fn duals(&self) -> &[f64] {
        &self.y
    }

    pub fn objective(&self) -> f64 {
        (0..self.cols.len()).map(|k| self.cost[k] * self.column_value(k)).sum()
    }

    pub fn basis(&self) -> &[BasisVar] {
        &self.basis
    }
}
