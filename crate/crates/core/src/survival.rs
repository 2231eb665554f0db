//! The never-stopped walk: survival probabilities and their decay profile.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteArray;
use crate::measure::Grid;

/// Slices whose mass drops below this are rescaled to avoid underflow.
const RESCALE_BELOW: f64 = 1e-280;

/// `pi(j, t)`: probability of being at `j` at step `t` without having hit
/// either boundary.
///
/// Stored as `scaled(j, t) * exp(log_scale[t])`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurvivalTable {
    grid: Grid,
    horizon: usize,
    scaled: SiteArray,
    log_scale: Vec<f64>,
}

fn step(grid: &Grid, prev: &[f64], next: &mut [f64]) {
    // Boundary entries of `prev` are always zero, so interior updates can
    // read both neighbours unconditionally.
    next.iter_mut().for_each(|v| *v = 0.0);
    for k in 1..grid.levels() {
        next[k] = 0.5 * (prev[k - 1] + prev[k + 1]);
    }
}

/// Forward recursion of the walk absorbed at `j_lo` and `j_hi`, for steps `0..=T`.
pub fn compute_pi(grid: &Grid, horizon: usize) -> SurvivalTable {
    let mut scaled = SiteArray::zeros(grid.j_lo, grid.j_hi, horizon);
    let mut log_scale = vec![0.0; horizon + 1];
    scaled.set(grid.j_star, 0, 1.0);
    let mut buf = vec![0.0; grid.levels() + 1];
    for t in 1..=horizon {
        step(grid, scaled.slice(t - 1), &mut buf);
        let mass: f64 = buf.iter().sum();
        log_scale[t] = log_scale[t - 1];
        if mass > 0.0 && mass < RESCALE_BELOW {
            buf.iter_mut().for_each(|v| *v /= mass);
            log_scale[t] += mass.ln();
        }
        scaled.slice_mut(t).copy_from_slice(&buf);
    }
    SurvivalTable { grid: *grid, horizon, scaled, log_scale }
}

/// Smallest `T` at which the never-stopped walk has at most `eps_tail` mass left.
pub fn horizon(grid: &Grid, eps_tail: f64) -> usize {
    assert!(eps_tail > 0.0 && eps_tail < 1.0, "eps_tail must lie in (0, 1)");
    let w = grid.levels() + 1;
    let mut cur = vec![0.0; w];
    let mut next = vec![0.0; w];
    cur[(grid.j_star - grid.j_lo) as usize] = 1.0;
    let mut t = 0;
    loop {
        t += 1;
        step(grid, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        if cur.iter().sum::<f64>() <= eps_tail {
            return t;
        }
    }
}

impl SurvivalTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `cos(pi / L)`.
    pub fn rho(&self) -> f64 {
        (PI / self.grid.levels() as f64).cos()
    }

    /// Unit-norm leading eigenvector `sqrt(2/L) sin((j - j_lo) pi / L)`.
    pub fn m(&self, j: i64) -> f64 {
        let l = self.grid.levels() as f64;
        (2.0 / l).sqrt() * ((j - self.grid.j_lo) as f64 * PI / l).sin()
    }

    pub fn pi(&self, j: i64, t: usize) -> f64 {
        self.scaled.get(j, t) * self.log_scale[t].exp()
    }

    /// `ln pi(j, t)`, finite even where `pi` itself underflows.
    pub fn ln_pi(&self, j: i64, t: usize) -> f64 {
        self.scaled.get(j, t).ln() + self.log_scale[t]
    }

    pub fn slice_mass(&self, t: usize) -> f64 {
        self.scaled.slice_sum(t) * self.log_scale[t].exp()
    }

    pub fn ln_slice_mass(&self, t: usize) -> f64 {
        self.scaled.slice_sum(t).ln() + self.log_scale[t]
    }

    /// The table as plain probabilities (entries below `f64` range become 0).
    pub fn to_array(&self) -> SiteArray {
        let mut a = self.scaled.clone();
        for t in 0..=self.horizon {
            let s = self.log_scale[t].exp();
            a.slice_mut(t).iter_mut().for_each(|v| *v *= s);
        }
        a
    }

    /// `sum_t pi(j, t)`: expected visits to `j` before `T`.
    pub fn visits(&self, j: i64) -> f64 {
        (0..=self.horizon).map(|t| self.pi(j, t)).sum()
    }
}

/// Within-parity proportionality of `pi(., t)` to the leading eigenvector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct YaglomReport {
    pub levels: usize,
    pub horizon: usize,
    pub rho: f64,
    /// `(t, (max - min) / mean)` of `pi(j, t) / (rho^t m_j)` over occupied levels.
    pub spreads: Vec<(usize, f64)>,
    pub max_spread: f64,
    /// `mass(T) / mass(T - 2)`, which should approach `rho^2`.
    pub two_step_ratio: f64,
    pub ratio_error: f64,
}

/// Compare the last ten slices of `pi` with the eigenvector profile.
pub fn yaglom_diagnostic(table: &SurvivalTable) -> Result<YaglomReport> {
    let grid = table.grid;
    let horizon = table.horizon;
    if horizon < 2 {
        return Err(Error::invalid("horizon too short for a decay diagnostic"));
    }
    let ln_rho = table.rho().ln();
    let first = horizon.saturating_sub(9).max(1);
    let mut spreads = Vec::new();
    for t in first..=horizon {
        if table.scaled.slice_sum(t) == 0.0 {
            return Err(Error::invalid(format!("walk extinct at step {t}")));
        }
        let logs: Vec<f64> = grid
            .interior()
            .filter(|&j| (j - grid.j_star + t as i64).rem_euclid(2) == 0)
            .filter(|&j| table.scaled.get(j, t) > 0.0)
            .map(|j| table.ln_pi(j, t) - t as f64 * ln_rho - table.m(j).ln())
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        spreads.push((t, (1.0 - min) / mean));
    }
    let max_spread = spreads.iter().map(|s| s.1).fold(0.0, f64::max);
    let two_step_ratio = (table.ln_slice_mass(horizon) - table.ln_slice_mass(horizon - 2)).exp();
    let rho2 = table.rho().powi(2);
    Ok(YaglomReport {
        levels: grid.levels(),
        horizon,
        rho: table.rho(),
        spreads,
        max_spread,
        two_step_ratio,
        ratio_error: (two_step_ratio - rho2).abs(),
    })
}
