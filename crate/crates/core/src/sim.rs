//! Monte Carlo checks: stopped walks on extracted barriers, discretised
//! continuous stopping rules, and grid-refinement studies.
//!
//! Path `k` of a run with seed `s` draws from the ChaCha8 stream `k` of key
//! `s`, and results are accumulated in integers, so output depends only on
//! `(seed, n_paths)` and not on how paths are scheduled across threads.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::{extract, CaveBarrier};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lattice::SiteArray;
use crate::measure::{AtomicMeasure, Grid, MeasureSpec};
use crate::payoff::PayoffSpec;
use crate::pipeline::{self, Config};

/// Paths per work unit.
const BLOCK: usize = 2048;
/// Paths are censored after this many multiples of the horizon.
pub const SAFETY_FACTOR: usize = 100;

/// Fair coin flips drawn 64 at a time.
struct Coin {
    rng: ChaCha8Rng,
    bits: u64,
    left: u32,
}

impl Coin {
    fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self { rng, bits: 0, left: 0 }
    }

    #[inline]
    fn step(&mut self) -> i64 {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.bits & 1;
        self.bits >>= 1;
        self.left -= 1;
        2 * b as i64 - 1
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Integer tallies of a batch of paths.
#[derive(Clone, Debug, Default, PartialEq)]
struct Tally {
    paths: u64,
    censored: u64,
    stops: BTreeMap<(i64, usize), u64>,
    visits: BTreeMap<(i64, usize), u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.paths += other.paths;
        self.censored += other.censored;
        for (k, v) in other.stops {
            *self.stops.entry(k).or_default() += v;
        }
        for (k, v) in other.visits {
            *self.visits.entry(k).or_default() += v;
        }
        self
    }
}

/// Empirical stopping law and times of a simulated rule on the coarse grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub grid: Grid,
    pub n_paths: u64,
    pub seed: u64,
    /// Paths still running at the safety horizon; excluded from all statistics.
    pub censored: u64,
    /// Stop counts per site `(j, t)`.
    pub stops: BTreeMap<(i64, usize), u64>,
    /// Counts of paths continuing at each site (only for discretised rules).
    pub visits: BTreeMap<(i64, usize), u64>,
    /// Sites where randomised stopping was replaced by a deterministic stop.
    pub deterministic_mixed: usize,
}

impl SimResult {
    fn from_tally(grid: Grid, seed: u64, tally: Tally) -> Self {
        Self {
            grid,
            n_paths: tally.paths,
            seed,
            censored: tally.censored,
            stops: tally.stops,
            visits: tally.visits,
            deterministic_mixed: 0,
        }
    }

    /// Number of paths that stopped.
    pub fn stopped(&self) -> u64 {
        self.n_paths - self.censored
    }

    /// Stop counts per level.
    pub fn law(&self) -> BTreeMap<i64, u64> {
        let mut law = BTreeMap::new();
        for (&(j, _), &c) in &self.stops {
            *law.entry(j).or_default() += c;
        }
        law
    }

    pub fn frequency(&self, j: i64) -> f64 {
        self.law().get(&j).copied().unwrap_or(0) as f64 / self.stopped().max(1) as f64
    }

    /// Sample mean and standard error of `g(j, t)` over stopped paths.
    pub fn mean_of(&self, g: impl Fn(i64, usize) -> f64) -> (f64, f64) {
        let n = self.stopped() as f64;
        if n == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = self.stops.iter().map(|(&(j, t), &c)| c as f64 * g(j, t)).sum::<f64>() / n;
        let var = self
            .stops
            .iter()
            .map(|(&(j, t), &c)| c as f64 * (g(j, t) - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }

    /// `E[tau~ / N]` and its standard error.
    pub fn mean_time(&self) -> (f64, f64) {
        let n = self.grid.n as f64;
        self.mean_of(|_, t| t as f64 / n)
    }

    /// `E[(tau~ / N)^2]` and its standard error.
    pub fn second_moment(&self) -> (f64, f64) {
        let n = self.grid.n as f64;
        self.mean_of(|_, t| (t as f64 / n).powi(2))
    }

    /// Empirical objective `E[F(x(j), t / N)]` and its standard error.
    pub fn objective(&self, payoff: &PayoffSpec) -> (f64, f64) {
        let g = self.grid;
        self.mean_of(|j, t| payoff.eval(g.x(j), g.time(t)))
    }

    /// Largest `|freq(j) - mu(j)|` in units of the binomial standard error
    /// `sqrt(mu (1 - mu) / n)`, over levels charged by either law.
    pub fn max_binomial_z(&self, mu: &AtomicMeasure) -> f64 {
        let n = self.stopped() as f64;
        let law = self.law();
        let mut z = 0.0f64;
        for j in self.grid.all_levels() {
            let m = mu.mass(j);
            let f = law.get(&j).copied().unwrap_or(0) as f64 / n;
            let se = (m * (1.0 - m) / n).sqrt();
            z = z.max(if se > 0.0 { (f - m).abs() / se } else if f == m { 0.0 } else { f64::INFINITY });
        }
        z
    }

    /// `sup_j |U_emp(x_j) - U_mu(x_j)|` with `U(x) = E|X - x|` in continuous
    /// units, and the largest per-level Monte Carlo standard error.
    pub fn potential_distance(&self, mu: &AtomicMeasure) -> (f64, f64) {
        let g = self.grid;
        let law = self.law();
        let n = self.stopped() as f64;
        let mut dist = 0.0f64;
        let mut se = 0.0f64;
        for j in g.all_levels() {
            let x = g.x(j);
            let (mut m1, mut m2) = (0.0, 0.0);
            for (&i, &c) in &law {
                let d = (g.x(i) - x).abs();
                m1 += c as f64 * d;
                m2 += c as f64 * d * d;
            }
            let (m1, m2) = (m1 / n, m2 / n);
            let exact: f64 = mu.atoms().map(|(i, m)| (g.x(i) - x).abs() * m).sum();
            dist = dist.max((m1 - exact).abs());
            se = se.max(((m2 - m1 * m1).max(0.0) / n).sqrt());
        }
        (dist, se)
    }

    /// Empirical stopped masses `q(j, t)` up to step `t_max`.
    pub fn empirical_q(&self, t_max: usize) -> SiteArray {
        let g = self.grid;
        let n = self.n_paths as f64;
        let mut q = SiteArray::zeros(g.j_lo, g.j_hi, t_max);
        for (&(j, t), &c) in &self.stops {
            if t <= t_max && j >= g.j_lo && j <= g.j_hi {
                q.add(j, t, c as f64 / n);
            }
        }
        q
    }

    /// Empirical sojourn masses `p(j, t)` up to step `t_max` (discretised
    /// rules only).
    pub fn empirical_p(&self, t_max: usize) -> SiteArray {
        let g = self.grid;
        let n = self.n_paths as f64;
        let mut p = SiteArray::zeros(g.j_lo, g.j_hi, t_max);
        for (&(j, t), &c) in &self.visits {
            if t <= t_max && j >= g.j_lo && j <= g.j_hi {
                p.add(j, t, c as f64 / n);
            }
        }
        p
    }
}

fn run_paths<F>(n_paths: usize, exec: Execution, path: F) -> Tally
where
    F: Fn(usize, &mut Tally) + Sync + Send,
{
    let blocks = n_paths.div_ceil(BLOCK);
    exec.map_reduce(
        0..blocks,
        Tally::default,
        |b| {
            let mut tally = Tally::default();
            for k in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                path(k, &mut tally);
                tally.paths += 1;
            }
            tally
        },
        Tally::merge,
    )
}

/// Walk from `j*` until the first entry into the barrier region or a
/// boundary. Sites listed as extras stop with their conditional stop
/// probability (or always, when `randomise` is off).
pub fn simulate_barrier(barrier: &CaveBarrier, n_paths: usize, seed: u64) -> Result<SimResult> {
    simulate_barrier_with(barrier, n_paths, seed, true, Execution::default())
}

pub fn simulate_barrier_with(
    barrier: &CaveBarrier,
    n_paths: usize,
    seed: u64,
    randomise: bool,
    exec: Execution,
) -> Result<SimResult> {
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let g = barrier.grid;
    let horizon = barrier.horizon;
    let mut stop_prob = SiteArray::zeros(g.j_lo, g.j_hi, horizon);
    let mut deterministic_mixed = 0;
    for s in &barrier.extras {
        let prob = if randomise { s.stop_probability } else { 1.0 };
        if !randomise && s.p > crate::ZERO_THRESHOLD {
            deterministic_mixed += 1;
        }
        stop_prob.set(s.j, s.t, prob);
    }
    let limit = SAFETY_FACTOR * horizon.max(1);
    let tally = run_paths(n_paths, exec, |k, tally| {
        let mut coin = Coin::new(seed, k as u64);
        let (mut j, mut t) = (g.j_star, 0usize);
        loop {
            j += coin.step();
            t += 1;
            if barrier.contains(j, t) {
                break;
            }
            if t <= horizon {
                let prob = stop_prob.get(j, t);
                if prob > 0.0 && (prob >= 1.0 || coin.uniform() < prob) {
                    break;
                }
            }
            if t >= limit {
                tally.censored += 1;
                return;
            }
        }
        *tally.stops.entry((j, t)).or_default() += 1;
    });
    let mut out = SimResult::from_tally(g, seed, tally);
    out.deterministic_mixed = deterministic_mixed;
    Ok(out)
}

/// A closed space-time region in continuous coordinates; the rule stops at
/// its first hitting time.
pub trait StoppingRegion: Sync {
    fn stops(&self, x: f64, t: f64) -> bool;
}

/// Stop on reaching `x <= lower` or `x >= upper`.
#[derive(Clone, Copy, Debug)]
pub struct HitLevels {
    pub lower: f64,
    pub upper: f64,
}

impl StoppingRegion for HitLevels {
    fn stops(&self, x: f64, _t: f64) -> bool {
        x <= self.lower + 1e-12 || x >= self.upper - 1e-12
    }
}

/// Stop at a fixed time.
#[derive(Clone, Copy, Debug)]
pub struct FixedTime(pub f64);

impl StoppingRegion for FixedTime {
    fn stops(&self, _x: f64, t: f64) -> bool {
        t >= self.0 - 1e-12
    }
}

/// A barrier given by continuous cutoff curves, interpolated piecewise
/// constantly from a coarse [`CaveBarrier`] (nearest level below).
pub struct BarrierRegion<'a> {
    pub barrier: &'a CaveBarrier,
}

impl StoppingRegion for BarrierRegion<'_> {
    fn stops(&self, x: f64, t: f64) -> bool {
        let b = self.barrier;
        let g = b.grid;
        let j = ((x * g.sqrt_n()) + 1e-9).floor() as i64;
        if j <= g.j_lo || j >= g.j_hi {
            return true;
        }
        let n = g.n as f64;
        let (l, r) = (b.l_bar(j), b.r_bar(j));
        (l >= 0 && t > 0.0 && t <= l as f64 / n) || (r != b.r_sentinel() && t >= r as f64 / n)
    }
}

/// Run a fine walk with spacing `1 / (refine sqrt N)` and time step
/// `1 / (refine^2 N)` as a stand-in for Brownian motion, stop it by `rule`,
/// and record the coarse crossing count `tau~`: the index of the first
/// crossing of the coarse grid at or after the stopping time (at least one).
/// The stop level is that crossing's coarse level.
pub fn discretise_stopping_rule(
    rule: &dyn StoppingRegion,
    grid: &Grid,
    refine: u32,
    n_paths: usize,
    seed: u64,
    max_steps: usize,
    exec: Execution,
) -> Result<SimResult> {
    if n_paths == 0 || refine == 0 {
        return Err(Error::invalid("need at least one path and a positive refinement"));
    }
    let m = refine as i64;
    let dx = 1.0 / (m as f64 * grid.sqrt_n());
    let dt = 1.0 / ((m * m) as f64 * grid.n as f64);
    let g = *grid;
    let fine_limit = max_steps * (m * m) as usize;
    let tally = run_paths(n_paths, exec, |k, tally| {
        let mut coin = Coin::new(seed, k as u64);
        let mut pos = m * g.j_star; // fine units
        let mut level = g.j_star;
        let mut crossings = 0usize;
        let mut fine = 0usize;
        let mut stopped = rule.stops(g.x(g.j_star), 0.0);
        loop {
            pos += coin.step();
            fine += 1;
            let crossed = pos % m == 0 && pos / m != level;
            if crossed {
                level = pos / m;
                crossings += 1;
            }
            if !stopped && rule.stops(pos as f64 * dx, fine as f64 * dt) {
                stopped = true;
            }
            if stopped && crossed {
                break;
            }
            if crossed {
                *tally.visits.entry((level, crossings)).or_default() += 1;
            }
            if fine >= fine_limit {
                tally.censored += 1;
                return;
            }
        }
        *tally.stops.entry((level, crossings)).or_default() += 1;
    });
    Ok(SimResult::from_tally(g, seed, tally))
}

/// One row of a refinement study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: u64,
    pub horizon: usize,
    /// Untilted optimal value.
    pub value: f64,
    pub gap: f64,
    pub slackness_pass: bool,
    /// Potential sup-distance between the simulated law of the extracted
    /// barrier and the target, and its Monte Carlo standard error.
    pub mc_distance: f64,
    pub mc_se: f64,
    /// Distance to the previous row's barrier, when they share a cutoff.
    pub barrier_distance: Option<f64>,
    /// `(x(j), l_bar / N, r_bar / N)` with sentinels as `NaN`.
    pub curve: Vec<(f64, f64, f64)>,
    #[serde(skip)]
    pub barrier: Option<CaveBarrier>,
}

/// `sup |cutoff_a / N_a - cutoff_b / N_b|` over interior levels at the same
/// position in both grids, ignoring sentinel cutoffs.
pub fn barrier_distance(a: &CaveBarrier, b: &CaveBarrier) -> Option<f64> {
    let mut best: Option<f64> = None;
    for ja in a.grid.interior() {
        let x = a.grid.x(ja);
        let jb_f = x * b.grid.sqrt_n();
        let jb = jb_f.round() as i64;
        if (jb_f - jb as f64).abs() > 1e-9 || !b.grid.is_interior(jb) {
            continue;
        }
        let (na, nb) = (a.grid.n as f64, b.grid.n as f64);
        let pairs = [
            (a.l_bar(ja), b.l_bar(jb), a.l_sentinel(), b.l_sentinel()),
            (a.r_bar(ja), b.r_bar(jb), a.r_sentinel(), b.r_sentinel()),
        ];
        for (ca, cb, sa, sb) in pairs {
            if ca != sa && cb != sb {
                let d = (ca as f64 / na - cb as f64 / nb).abs();
                best = Some(best.map_or(d, |v| v.max(d)));
            }
        }
    }
    best
}

/// Rescaled cutoff curves, sentinels as `NaN`.
pub fn barrier_curve(b: &CaveBarrier) -> Vec<(f64, f64, f64)> {
    let n = b.grid.n as f64;
    b.grid
        .all_levels()
        .map(|j| {
            let (l, r) = (b.l_bar(j), b.r_bar(j));
            let l = if l == b.l_sentinel() { f64::NAN } else { l as f64 / n };
            let r = if r == b.r_sentinel() { f64::NAN } else { r as f64 / n };
            (b.grid.x(j), l, r)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub n_list: Vec<u64>,
    pub eps_tail: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub exec: Execution,
}

/// Solve on each grid, simulate the extracted barrier, and compare
/// successive barriers.
pub fn convergence_study(measure: &MeasureSpec, payoff: &PayoffSpec, config: &StudyConfig) -> Result<Vec<StudyRow>> {
    if config.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("N list must be increasing"));
    }
    let solved = config.exec.map(&config.n_list, |&n| -> Result<StudyRow> {
        let cfg = Config::new(n).eps_tail(config.eps_tail);
        let (prep, sol) = pipeline::run(measure, payoff, &cfg)?;
        let slack = crate::dual::check_slackness(&sol.primal, &sol.dual, &prep.problem);
        let barrier = extract(&sol.primal, prep.hinge);
        let (mc_distance, mc_se) = if config.n_paths > 0 {
            let seed = config.seed ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let sim = simulate_barrier_with(&barrier, config.n_paths, seed, true, Execution::Sequential)?;
            sim.potential_distance(&prep.mu)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(StudyRow {
            n,
            horizon: prep.horizon,
            value: sol.primal.objective,
            gap: sol.gap,
            slackness_pass: slack.pass,
            mc_distance,
            mc_se,
            barrier_distance: None,
            curve: barrier_curve(&barrier),
            barrier: Some(barrier),
        })
    });
    let mut rows = solved.into_iter().collect::<Result<Vec<_>>>()?;
    for k in 1..rows.len() {
        let d = match (&rows[k - 1].barrier, &rows[k].barrier) {
            (Some(a), Some(b)) => barrier_distance(a, b),
            _ => None,
        };
        rows[k].barrier_distance = d;
    }
    Ok(rows)
}
