//! `optsep`: solve, certify and simulate discretised optimal embeddings.
//!
//! Exit codes: 0 success, 1 a check failed, 2 invalid or infeasible input
//! (including unreadable files), 3 solver iteration limit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use optsep::barrier::{extract, verify_shape, CaveBarrier};
use optsep::dual::{check_dual_feasible, check_slackness, DualFeasibility, Slackness};
use optsep::exec::Execution;
use optsep::io;
use optsep::lp::{relative_gap, Method, PrimalSolution, SolveStats, SolveStatus};
use optsep::measure::Grid;
use optsep::pipeline::{self, Config, Prepared};
use optsep::sim::{self, StudyConfig};
use optsep::survival::{compute_pi, yaglom_diagnostic};
use optsep::{default_cave, PayoffSpec};

/// Relative duality gap accepted by `solve` and `verify`.
const GAP_TOL: f64 = 1e-7;
/// Largest primal row violation accepted by `verify`.
const PRIMAL_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "optsep", version, about = "Optimal Skorokhod embeddings on random-walk lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write solution, dual, reports and barrier.
    Solve(Common),
    /// Re-check stored solution and dual files.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        dual: Option<PathBuf>,
    },
    /// Extract the barrier from a stored solution, or from a fresh solve.
    Barrier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Solve along a sequence of grids and compare the results.
    Converge(Common),
    /// Simulate the walk stopped by a stored barrier.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Barrier CSV written by `solve`, `barrier` or `converge`.
        #[arg(long)]
        barrier: PathBuf,
        /// Stop deterministically at mixed sites instead of randomising.
        #[arg(long)]
        deterministic: bool,
    },
    /// Survival probabilities of the never-stopped walk.
    Pi {
        #[command(flatten)]
        common: Common,
        /// Number of grid intervals between the two boundaries.
        #[arg(long = "L")]
        levels: Option<i64>,
        /// Number of time steps to tabulate.
        #[arg(long = "T")]
        steps: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    ColumnGeneration,
    Direct,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ColumnGeneration => Method::ColumnGeneration,
            MethodArg::Direct => Method::Direct,
        }
    }
}

/// Flags shared by every command; any of them may come from `--config`.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Common {
    /// JSON file with any of these options; flags win on conflict.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Target measure, `{"atoms": [[x, mass], ...]}`.
    #[arg(long)]
    measure: Option<PathBuf>,
    /// `root`, `rost`, `cave`, or `table:<file>`.
    #[arg(long)]
    payoff: Option<String>,
    /// Hinge time of the cave payoff.
    #[arg(long)]
    t0: Option<f64>,
    /// Grid resolution, or a comma-separated list for `converge`.
    #[arg(long = "N", value_delimiter = ',')]
    #[serde(rename = "N")]
    n: Option<Vec<u64>>,
    /// Surviving mass allowed at the horizon (default 1e-8).
    #[arg(long)]
    eps_tail: Option<f64>,
    /// Explicit horizon in steps, overriding `eps_tail`.
    #[arg(long)]
    horizon: Option<usize>,
    /// LP algorithm (default column-generation).
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Relative gap at which the solver stops.
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Solver iteration budget; exceeding it exits with code 3.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Monte Carlo sample paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Seed for the path generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `.`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run sequentially even when built with parallel support.
    #[arg(long)]
    #[serde(skip)]
    sequential: bool,
}

impl Common {
    /// Fill unset flags from the config file.
    fn resolve(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file: Common = io::read_json(&path).with_context(|| format!("reading config {}", path.display()))?;
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = file.$f; } )* };
        }
        fill!(measure, payoff, t0, n, eps_tail, horizon, method, gap_tol, max_iterations, paths, seed, out);
        Ok(self)
    }

    fn measure(&self) -> Result<optsep::MeasureSpec> {
        let path = self.measure.as_ref().ok_or_else(|| invalid("--measure is required"))?;
        Ok(io::read_measure(path)?)
    }

    fn payoff(&self) -> Result<PayoffSpec> {
        let sel = self.payoff.as_deref().ok_or_else(|| invalid("--payoff is required"))?;
        Ok(match sel {
            "root" => PayoffSpec::root(),
            "rost" => PayoffSpec::rost(),
            "cave" => default_cave(self.t0.unwrap_or(0.5)),
            s => match s.strip_prefix("table:") {
                Some(file) => io::read_payoff_grid(Path::new(file))?.into_spec(s)?,
                None => return Err(invalid(format!("unknown payoff '{s}'"))),
            },
        })
    }

    fn n_list(&self) -> Result<Vec<u64>> {
        match &self.n {
            Some(v) if !v.is_empty() && v.iter().all(|&n| n >= 1) => Ok(v.clone()),
            Some(_) => Err(invalid("N must be at least 1")),
            None => Err(invalid("--N is required")),
        }
    }

    fn single_n(&self) -> Result<u64> {
        match self.n_list()?.as_slice() {
            [n] => Ok(*n),
            _ => Err(invalid("expected a single --N")),
        }
    }

    fn config(&self, n: u64) -> Result<Config> {
        let mut cfg = Config::new(n);
        if let Some(eps) = self.eps_tail {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(invalid("eps_tail must lie in (0, 1)"));
            }
            cfg.eps_tail = eps;
        }
        cfg.horizon = self.horizon;
        if let Some(m) = self.method {
            cfg.solver.method = m.into();
        }
        if let Some(g) = self.gap_tol {
            cfg.solver.gap_tol = g;
        }
        if let Some(k) = self.max_iterations {
            cfg.solver.max_iterations = k;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    optsep::Error::Invalid(msg.into()).into()
}

/// Combined certificate for a primal-dual pair.
#[derive(Serialize)]
struct Report {
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "T")]
    horizon: usize,
    payoff: String,
    objective: f64,
    tilted_objective: f64,
    dual_objective: f64,
    gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<SolveStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<SolveStats>,
    primal_violation: f64,
    embedding_residual: f64,
    dual_feasibility: DualFeasibility,
    slackness: Slackness,
    shape_violations: Vec<(i64, usize, usize)>,
    pass: bool,
}

fn certify(
    prep: &Prepared,
    payoff: &PayoffSpec,
    primal: &PrimalSolution,
    dual: &optsep::lp::DualSolution,
    extra: (Option<SolveStatus>, Option<SolveStats>),
) -> Report {
    let feas = prep.problem.feasibility(&primal.p);
    let dual_obj = dual.objective_for(&prep.problem);
    let gap = relative_gap(primal.tilted_objective, dual_obj);
    let dual_feasibility = check_dual_feasible(dual, &prep.table);
    let slackness = check_slackness(primal, dual, &prep.problem);
    let shape_violations = verify_shape(primal, prep.hinge);
    let pass = gap <= GAP_TOL
        && feas.max_violation <= PRIMAL_TOL
        && dual_feasibility.pass
        && slackness.pass
        && shape_violations.is_empty();
    Report {
        n: prep.grid.n,
        horizon: prep.horizon,
        payoff: payoff.name(),
        objective: primal.objective,
        tilted_objective: primal.tilted_objective,
        dual_objective: dual_obj,
        gap,
        status: extra.0,
        stats: extra.1,
        primal_violation: feas.max_violation,
        embedding_residual: primal.embedding_residual(&prep.problem),
        dual_feasibility,
        slackness,
        shape_violations,
        pass,
    }
}

fn header(prep: &Prepared, payoff: &PayoffSpec, primal: &PrimalSolution, gap: f64) -> io::SolutionHeader {
    io::SolutionHeader {
        n: prep.grid.n,
        horizon: prep.horizon,
        j_lo: prep.grid.j_lo,
        j_hi: prep.grid.j_hi,
        j_star: prep.grid.j_star,
        objective: primal.objective,
        tilted_objective: primal.tilted_objective,
        gap,
        tilt: prep.table.tilt_constant(),
        payoff: payoff.name(),
    }
}

fn cmd_solve(common: Common) -> Result<u8> {
    let (measure, payoff) = (common.measure()?, common.payoff()?);
    let n = common.single_n()?;
    let out = common.out_dir()?;
    let (prep, sol) = pipeline::run(&measure, &payoff, &common.config(n)?)?;
    io::write_solution(&out.join("solution.csv"), &header(&prep, &payoff, &sol.primal, sol.gap), &sol.primal)?;
    io::write_dual(&out.join("dual.json"), &sol.dual, prep.horizon)?;
    io::write_barrier(&out.join("barrier.csv"), &extract(&sol.primal, prep.hinge))?;
    let report = certify(&prep, &payoff, &sol.primal, &sol.dual, (Some(sol.status), Some(sol.stats.clone())));
    io::write_json(&out.join("report.json"), &report)?;
    println!(
        "N={} T={} objective={} gap={:.3e} pass={}",
        n,
        prep.horizon,
        io::fmt_f64(sol.primal.objective),
        report.gap,
        report.pass
    );
    if sol.status == SolveStatus::IterationLimit {
        eprintln!("solver stopped at the iteration limit");
        return Ok(3);
    }
    Ok(if report.pass { 0 } else { 1 })
}

/// Rebuild the problem a stored solution was solved on.
fn reload(common: &Common, path: &Path) -> Result<(Prepared, PayoffSpec, PrimalSolution)> {
    let (measure, payoff) = (common.measure()?, common.payoff()?);
    let (head, p, q) = io::read_solution(path)?;
    if let Some(v) = &common.n {
        if v.as_slice() != [head.n] {
            return Err(invalid(format!("solution is for N={}, not {v:?}", head.n)));
        }
    }
    let mut cfg = common.config(head.n)?;
    cfg.horizon = Some(head.horizon);
    let prep = pipeline::prepare(&measure, &payoff, &cfg)?;
    if (prep.grid.j_lo, prep.grid.j_hi, prep.grid.j_star) != (head.j_lo, head.j_hi, head.j_star) {
        return Err(invalid("solution grid does not match the measure"));
    }
    if (prep.table.tilt_constant() - head.tilt).abs() > 1e-12 * head.tilt.abs().max(1.0) {
        return Err(invalid("solution tilt does not match the payoff"));
    }
    let feas = prep.problem.feasibility(&p);
    if feas.max_violation > PRIMAL_TOL {
        let row = feas.row.unwrap_or_default();
        return Err(optsep::Error::Infeasible(format!("row {row} violated by {:.3e}", feas.max_violation)).into());
    }
    let primal = PrimalSolution::from_p(p, &prep.table)?;
    let q_err = primal.q.max_abs_diff(&q);
    if q_err > PRIMAL_TOL {
        return Err(optsep::Error::Infeasible(format!("stored q disagrees with p by {q_err:.3e}")).into());
    }
    Ok((prep, payoff, primal))
}

fn cmd_verify(common: Common, solution: &Path, dual: Option<&Path>) -> Result<u8> {
    let (prep, payoff, primal) = reload(&common, solution)?;
    let dual_path = dual.map(Path::to_path_buf).unwrap_or_else(|| solution.with_file_name("dual.json"));
    let dual = io::read_dual(&dual_path, &prep.grid)?;
    let report = certify(&prep, &payoff, &primal, &dual, (None, None));
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        io::write_json(&out.join("verify.json"), &report)?;
    }
    println!(
        "gap={:.3e} dual_feasible={} slackness={} shape_violations={} pass={}",
        report.gap,
        report.dual_feasibility.pass,
        report.slackness.pass,
        report.shape_violations.len(),
        report.pass
    );
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_barrier(common: Common, solution: Option<&Path>) -> Result<u8> {
    let out = common.out_dir()?;
    let (primal, hinge) = match solution {
        Some(path) => {
            let (prep, _, primal) = reload(&common, path)?;
            (primal, prep.hinge)
        }
        None => {
            let (measure, payoff) = (common.measure()?, common.payoff()?);
            let (prep, sol) = pipeline::run(&measure, &payoff, &common.config(common.single_n()?)?)?;
            (sol.primal, prep.hinge)
        }
    };
    let barrier = extract(&primal, hinge);
    io::write_barrier(&out.join("barrier.csv"), &barrier)?;
    let violations = verify_shape(&primal, hinge);
    io::write_json(&out.join("shape.json"), &violations)?;
    println!("mixed_sites={} shape_violations={}", barrier.mixed().count(), violations.len());
    Ok(if violations.is_empty() { 0 } else { 1 })
}

fn cmd_converge(common: Common) -> Result<u8> {
    let (measure, payoff) = (common.measure()?, common.payoff()?);
    let out = common.out_dir()?;
    let study = StudyConfig {
        n_list: common.n_list()?,
        eps_tail: common.config(1)?.eps_tail,
        n_paths: common.paths.unwrap_or(10_000),
        seed: common.seed.unwrap_or(0),
        exec: common.exec(),
    };
    let rows = sim::convergence_study(&measure, &payoff, &study)?;
    io::write_study(&out.join("study.csv"), &rows)?;
    for row in &rows {
        if let Some(b) = &row.barrier {
            io::write_barrier(&out.join(format!("barrier_N{}.csv", row.n)), b)?;
        }
        println!(
            "N={} T={} P={} gap={:.3e} mc_distance={:.3e} (se {:.3e})",
            row.n,
            row.horizon,
            io::fmt_f64(row.value),
            row.gap,
            row.mc_distance,
            row.mc_se
        );
    }
    Ok(if rows.iter().all(|r| r.gap <= GAP_TOL && r.slackness_pass) { 0 } else { 1 })
}

#[derive(Serialize)]
struct SimReport {
    #[serde(rename = "N")]
    n: u64,
    paths: u64,
    seed: u64,
    censored: u64,
    deterministic_mixed: usize,
    mean_time: (f64, f64),
    second_moment: (f64, f64),
    law: Vec<(i64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_binomial_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential_distance: Option<(f64, f64)>,
}

fn cmd_simulate(common: Common, barrier: &Path, deterministic: bool) -> Result<u8> {
    let out = common.out_dir()?;
    let b: CaveBarrier = io::read_barrier(barrier)?;
    let paths = common.paths.unwrap_or(100_000);
    let seed = common.seed.unwrap_or(0);
    let result = sim::simulate_barrier_with(&b, paths, seed, !deterministic, common.exec())?;
    // Compare with the target law when one is given.
    let target = match &common.measure {
        Some(_) => {
            let grid = b.grid;
            let mu = optsep::project_measure(&common.measure()?, &grid)?;
            Some(mu)
        }
        None => None,
    };
    let report = SimReport {
        n: b.grid.n,
        paths: result.n_paths,
        seed,
        censored: result.censored,
        deterministic_mixed: result.deterministic_mixed,
        mean_time: result.mean_time(),
        second_moment: result.second_moment(),
        law: result.law().into_iter().collect(),
        max_binomial_z: target.as_ref().map(|mu| result.max_binomial_z(mu)),
        potential_distance: target.as_ref().map(|mu| result.potential_distance(mu)),
    };
    io::write_sim(&out.join("simulation.csv"), &result)?;
    io::write_json(&out.join("simulation.json"), &report)?;
    let law: Vec<String> = report.law.iter().map(|(j, c)| format!("{j}:{c}")).collect();
    println!("paths={} censored={} law {}", result.n_paths, result.censored, law.join(" "));
    if result.censored > 0 {
        eprintln!("{} paths censored at the safety horizon", result.censored);
    }
    Ok(0)
}

fn cmd_pi(common: Common, levels: Option<i64>, horizon: Option<usize>) -> Result<u8> {
    let levels = levels.ok_or_else(|| invalid("--L is required"))?;
    let horizon = horizon.or(common.horizon).ok_or_else(|| invalid("--T is required"))?;
    if levels < 2 {
        return Err(invalid("L must be at least 2"));
    }
    let out = common.out_dir()?;
    let j_lo = -(levels / 2);
    let grid = Grid::from_indices(j_lo, j_lo + levels, 1)?;
    let table = compute_pi(&grid, horizon);
    io::write_pi(&out.join("pi.csv"), &table)?;
    match yaglom_diagnostic(&table) {
        Ok(report) => {
            io::write_json(&out.join("yaglom.json"), &report)?;
            println!(
                "rho={} max_spread={:.3e} two_step_ratio_error={:.3e}",
                io::fmt_f64(report.rho),
                report.max_spread,
                report.ratio_error
            );
        }
        Err(e) => {
            io::write_json(&out.join("yaglom.json"), &serde_json::json!({ "error": e.to_string() }))?;
            println!("yaglom diagnostic vacuous: {e}");
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve(c) => cmd_solve(c.resolve()?),
        Command::Verify { common, solution, dual } => cmd_verify(common.resolve()?, &solution, dual.as_deref()),
        Command::Barrier { common, solution } => cmd_barrier(common.resolve()?, solution.as_deref()),
        Command::Converge(c) => cmd_converge(c.resolve()?),
        Command::Simulate { common, barrier, deterministic } => cmd_simulate(common.resolve()?, &barrier, deterministic),
        Command::Pi { common, levels, steps } => cmd_pi(common.resolve()?, levels, steps),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<optsep::Error>() {
        Some(optsep::Error::IterationLimit { .. }) => 3,
        Some(optsep::Error::Numerical(_)) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
