//! End-to-end assembly: measure and payoff specs to a solved program.

use crate::error::Result;
use crate::lp::{self, LpProblem, Solution, SolverOptions};
use crate::measure::{potential, project_measure, AtomicMeasure, Grid, MeasureSpec, PotentialArray};
use crate::payoff::{discretise, tilt_with_margin, PayoffSpec, PayoffTable, TILT_MARGIN};
use crate::survival;

#[derive(Clone, Debug)]
pub struct Config {
    pub n: u64,
    /// Surviving mass allowed at the horizon of the never-stopped walk.
    pub eps_tail: f64,
    /// Overrides the horizon derived from `eps_tail`.
    pub horizon: Option<usize>,
    pub tilt_margin: f64,
    pub solver: SolverOptions,
}

impl Config {
    pub fn new(n: u64) -> Self {
        Self {
            n,
            eps_tail: 1e-8,
            horizon: None,
            tilt_margin: TILT_MARGIN,
            solver: SolverOptions::default(),
        }
    }

    pub fn eps_tail(mut self, eps: f64) -> Self {
        self.eps_tail = eps;
        self
    }

    pub fn horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

/// Everything needed to solve one instance.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub grid: Grid,
    pub mu: AtomicMeasure,
    pub potential: PotentialArray,
    pub horizon: usize,
    /// Tilted payoff table.
    pub table: PayoffTable,
    pub problem: LpProblem,
    /// Hinge step of the payoff (cave `t0`, 0 for Root, past `T` for Rost).
    pub hinge: usize,
}

pub fn prepare(measure: &MeasureSpec, payoff: &PayoffSpec, config: &Config) -> Result<Prepared> {
    payoff.validate()?;
    let grid = measure.grid(config.n)?;
    let mu = project_measure(measure, &grid)?;
    mu.validate(&grid)?;
    let potential = potential(&mu, &grid)?;
    let horizon = match config.horizon {
        Some(t) => t,
        None => survival::horizon(&grid, config.eps_tail),
    }
    .max(1);
    let table = tilt_with_margin(&discretise(payoff, &grid, horizon)?, config.tilt_margin);
    let problem = lp::assemble(&grid, &mu, &table)?;
    Ok(Prepared {
        grid,
        mu,
        potential,
        horizon,
        table,
        problem,
        hinge: payoff.hinge_index(config.n, horizon),
    })
}

/// Prepare and solve.
pub fn run(measure: &MeasureSpec, payoff: &PayoffSpec, config: &Config) -> Result<(Prepared, Solution)> {
    let prepared = prepare(measure, payoff, config)?;
    let solution = lp::solve_with(&prepared.problem, &config.solver)?;
    Ok((prepared, solution))
}
