//! Cave barriers read off optimal solutions, the shape check, and the
//! mass-tracking swaps that drive the shape argument.
//!
//! A cave barrier stops the walk at level `j` for `t <= l_bar(j)` (the
//! inverse-barrier part before the hinge `t0`) and for `t >= r_bar(j)` (the
//! barrier part after it). Levels that never stop on a side carry the
//! sentinels `l_bar = -1` and `r_bar = T + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteArray;
use crate::lp::{LpProblem, PrimalSolution};
use crate::measure::Grid;
use crate::ZERO_THRESHOLD;

/// Tolerance for the feasibility re-check after a swap.
pub const SWAP_FEASIBILITY_TOL: f64 = 1e-9;

/// A site where the solution stops some mass outside the barrier region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopSite {
    pub j: i64,
    pub t: usize,
    pub p: f64,
    pub q: f64,
    /// Conditional probability of stopping on arrival, `q / (p + q)`.
    pub stop_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaveBarrier {
    pub grid: Grid,
    pub horizon: usize,
    pub t0_index: usize,
    /// Per level, indexed by `j - j_lo`.
    pub l_bar: Vec<i64>,
    pub r_bar: Vec<i64>,
    /// Interior sites with stopped mass that the region `{t <= l_bar} u
    /// {t >= r_bar}` does not cover.
    pub extras: Vec<StopSite>,
}

impl CaveBarrier {
    pub fn l_bar(&self, j: i64) -> i64 {
        self.l_bar[(j - self.grid.j_lo) as usize]
    }

    pub fn r_bar(&self, j: i64) -> i64 {
        self.r_bar[(j - self.grid.j_lo) as usize]
    }

    /// Cutoffs for the boundary levels, which stop at every time.
    pub fn boundary_cutoff(&self) -> i64 {
        self.t0_index as i64
    }

    pub fn l_sentinel(&self) -> i64 {
        -1
    }

    pub fn r_sentinel(&self) -> i64 {
        self.horizon as i64 + 1
    }

    /// Whether `(j, t)` lies in the stopping region. The start site never
    /// stops, and the sentinel cutoffs never match.
    pub fn contains(&self, j: i64, t: usize) -> bool {
        if j <= self.grid.j_lo || j >= self.grid.j_hi {
            return true;
        }
        if t == 0 {
            return false;
        }
        let t = t as i64;
        let (l, r) = (self.l_bar(j), self.r_bar(j));
        (l >= 0 && t <= l) || (r != self.r_sentinel() && t >= r)
    }

    /// Sites with both continuing and stopped mass above threshold.
    pub fn mixed(&self) -> impl Iterator<Item = &StopSite> {
        self.extras.iter().filter(|s| s.p > ZERO_THRESHOLD)
    }
}

/// Read the cutoffs off a solution with the default zero threshold.
pub fn extract(primal: &PrimalSolution, t0_index: usize) -> CaveBarrier {
    extract_with(primal, t0_index, ZERO_THRESHOLD)
}

/// Cutoffs are taken over sites the walk actually reaches (inflow above
/// `threshold`): `l_bar(j)` is the largest reached `t < t0` such that no mass
/// continues at `j` up to `t`, and `r_bar(j)` the smallest reached `t > t0`
/// such that none continues from `t` on.
pub fn extract_with(primal: &PrimalSolution, t0_index: usize, threshold: f64) -> CaveBarrier {
    let g = primal.grid;
    let horizon = primal.horizon();
    let width = g.levels() + 1;
    let mut l_bar = vec![-1i64; width];
    let mut r_bar = vec![horizon as i64 + 1; width];
    for j in g.all_levels() {
        let k = (j - g.j_lo) as usize;
        if g.is_boundary(j) {
            l_bar[k] = t0_index as i64;
            r_bar[k] = t0_index as i64;
            continue;
        }
        let reached = |t: usize| primal.p.get(j, t) + primal.q.get(j, t) > threshold;
        let open = |t: usize| primal.p.get(j, t) > threshold;
        for t in 1..t0_index.min(horizon + 1) {
            if open(t) {
                break;
            }
            if reached(t) {
                l_bar[k] = t as i64;
            }
        }
        for t in (t0_index + 1..=horizon).rev() {
            if open(t) {
                break;
            }
            if reached(t) {
                r_bar[k] = t as i64;
            }
        }
    }
    let mut barrier = CaveBarrier {
        grid: g,
        horizon,
        t0_index,
        l_bar,
        r_bar,
        extras: Vec::new(),
    };
    for t in 1..=horizon {
        for j in g.interior() {
            let (p, q) = (primal.p.get(j, t), primal.q.get(j, t));
            if q > threshold && !barrier.contains(j, t) {
                barrier.extras.push(StopSite { j, t, p, q, stop_probability: q / (p + q) });
            }
        }
    }
    barrier
}

/// Triples `(i, t, s)` contradicting the cave shape: mass stops at `(i, t)`
/// with `t < t0` while some continues at `(i, s)`, `s < t`; or it stops at
/// `t > t0` while some continues at `s > t`. Forced stops at `T + 1` are not
/// considered.
pub fn verify_shape(primal: &PrimalSolution, t0_index: usize) -> Vec<(i64, usize, usize)> {
    verify_shape_with(primal, t0_index, ZERO_THRESHOLD)
}

pub fn verify_shape_with(primal: &PrimalSolution, t0_index: usize, threshold: f64) -> Vec<(i64, usize, usize)> {
    let g = primal.grid;
    let horizon = primal.horizon();
    let mut out = Vec::new();
    for i in g.interior() {
        let open: Vec<usize> = (1..=horizon).filter(|&s| primal.p.get(i, s) > threshold).collect();
        for t in 1..=horizon {
            if primal.q.get(i, t) <= threshold {
                continue;
            }
            if t < t0_index {
                out.extend(open.iter().take_while(|&&s| s < t).map(|&s| (i, t, s)));
            } else if t > t0_index {
                let from = open.partition_point(|&s| s <= t);
                out.extend(open[from..].iter().map(|&s| (i, t, s)));
            }
        }
    }
    out
}

/// Masses tracing `eps` particles that continue from `(i, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tracked {
    pub p: SiteArray,
    pub q: SiteArray,
}

/// Follow `eps` of the mass continuing at `(i, s)` forward in time: at each
/// site the tracked inflow splits between continuing and stopping in the
/// same proportion as the full flow. Sites with no inflow receive nothing.
pub fn track_mass(primal: &PrimalSolution, source: (i64, usize), eps: f64) -> Result<Tracked> {
    let g = primal.grid;
    let (i, s) = source;
    let t_max = primal.p.t_max();
    if !(g.is_interior(i) && s < t_max) {
        return Err(Error::invalid(format!("source ({i},{s}) is not a sojourn site")));
    }
    let avail = primal.p.get(i, s);
    if !(eps >= 0.0) || eps > avail * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "cannot track {eps:e} from ({i},{s}), which only holds {avail:e}"
        )));
    }
    let mut p = SiteArray::zeros(g.j_lo, g.j_hi, t_max);
    let mut q = SiteArray::zeros(g.j_lo, g.j_hi, t_max);
    if eps == 0.0 {
        return Ok(Tracked { p, q });
    }
    p.set(i, s, eps);
    for r in s + 1..=t_max {
        for j in g.all_levels() {
            let tracked = 0.5 * (p.get_or_zero(j - 1, r - 1) + p.get_or_zero(j + 1, r - 1));
            if tracked == 0.0 {
                continue;
            }
            if g.is_boundary(j) {
                q.set(j, r, tracked);
                continue;
            }
            let inflow = 0.5 * (primal.p.get_or_zero(j - 1, r - 1) + primal.p.get_or_zero(j + 1, r - 1));
            if inflow <= 0.0 {
                continue;
            }
            let ratio = (tracked / inflow).min(1.0);
            p.set(j, r, primal.p.get(j, r) * ratio);
            q.set(j, r, primal.q.get(j, r) * ratio);
        }
    }
    Ok(Tracked { p, q })
}

/// Which side of the hinge a swap acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `s < t < t0`: stop earlier at `(i, s)`, release at `(i, t)`.
    Left,
    /// `t0 < t < s`: release at `(i, t)`, stop later at `(i, s)`.
    Right,
}

/// Stop `eps` of the mass continuing at `(i, s)` and release the same
/// amount of mass stopped at `(i, t)`, which then moves like the tracked
/// particles did (shifted by `t - s`). Requires `s < t < t0` and
/// `0 <= eps < min(q(i,t)/2, p(i,s))`.
pub fn swap_left(
    problem: &LpProblem,
    primal: &PrimalSolution,
    i: i64,
    s: usize,
    t: usize,
    eps: f64,
    t0_index: usize,
) -> Result<PrimalSolution> {
    if !(s < t && t < t0_index) {
        return Err(Error::invalid(format!("left swap needs s < t < t0, got s={s}, t={t}, t0={t0_index}")));
    }
    let bound = (0.5 * primal.q.get(i, t)).min(primal.p.get(i, s));
    apply_swap(problem, primal, i, s, t, eps, bound)
}

/// Release `eps` of the mass stopped at `(i, t)` and stop as much of the
/// mass continuing at `(i, s)`, whose future the released particles take
/// over. Requires `t0 < t < s` and `0 <= eps < min(q(i,t), p(i,s)/2)`.
pub fn swap_right(
    problem: &LpProblem,
    primal: &PrimalSolution,
    i: i64,
    t: usize,
    s: usize,
    eps: f64,
    t0_index: usize,
) -> Result<PrimalSolution> {
    if !(t0_index < t && t < s) {
        return Err(Error::invalid(format!("right swap needs t0 < t < s, got t={t}, s={s}, t0={t0_index}")));
    }
    let bound = primal.q.get(i, t).min(0.5 * primal.p.get(i, s));
    apply_swap(problem, primal, i, s, t, eps, bound)
}

/// Pick the side from the position of the stop time `t` relative to the hinge.
pub fn swap(
    problem: &LpProblem,
    primal: &PrimalSolution,
    i: i64,
    t: usize,
    s: usize,
    eps: f64,
    t0_index: usize,
) -> Result<(Side, PrimalSolution)> {
    if s < t && t < t0_index {
        Ok((Side::Left, swap_left(problem, primal, i, s, t, eps, t0_index)?))
    } else if t0_index < t && t < s {
        Ok((Side::Right, swap_right(problem, primal, i, t, s, eps, t0_index)?))
    } else {
        Err(Error::invalid(format!(
            "triple (i={i}, t={t}, s={s}) does not lie on one side of t0 = {t0_index}"
        )))
    }
}

/// `p' = p - p~(r) + p~(r - (t - s))`: the tracked particles from `(i, s)`
/// stop there, and a copy restarts from `(i, t)`.
fn apply_swap(
    problem: &LpProblem,
    primal: &PrimalSolution,
    i: i64,
    s: usize,
    t: usize,
    eps: f64,
    bound: f64,
) -> Result<PrimalSolution> {
    if eps == 0.0 {
        return Ok(primal.clone());
    }
    if !(eps > 0.0 && eps < bound) {
        return Err(Error::invalid(format!(
            "swap at level {i} needs 0 < eps < {bound:e}, got {eps:e}"
        )));
    }
    let tracked = track_mass(primal, (i, s), eps)?;
    let g = primal.grid;
    let t_max = primal.p.t_max();
    let mut p = primal.p.clone();
    for (j, r, v) in tracked.p.iter() {
        if v == 0.0 {
            continue;
        }
        p.add(j, r, -v);
        let shifted = r as i64 + t as i64 - s as i64;
        if shifted >= 0 && (shifted as usize) < t_max {
            p.add(j, shifted as usize, v);
        } else if shifted as usize >= t_max && g.is_interior(j) {
            return Err(Error::invalid(format!(
                "tracked mass at ({j},{r}) would be shifted past the horizon"
            )));
        }
    }
    for (j, r, v) in p.iter().collect::<Vec<_>>() {
        if v < 0.0 && v > -1e-15 {
            p.set(j, r, 0.0);
        }
    }
    let out = PrimalSolution::from_p(p, problem.table())?;
    let f = problem.feasibility(&out.p);
    if f.max_violation > SWAP_FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "swapped solution violates {} by {:e}",
            f.row.unwrap_or_default(),
            f.max_violation
        )));
    }
    Ok(out)
}

/// Predicted objective change of a swap from the tracked masses alone:
/// `sum q~(j,r) (F(j, r + d) - F(j, r)) - eps (F(i, t) - F(i, s))` with
/// `d = t - s`, against the untilted payoff.
pub fn predicted_gain(problem: &LpProblem, primal: &PrimalSolution, i: i64, s: usize, t: usize, eps: f64) -> Result<f64> {
    let tracked = track_mass(primal, (i, s), eps)?;
    let tab = problem.table();
    let d = t as i64 - s as i64;
    let t_max = primal.q.t_max() as i64;
    let mut gain = -eps * (tab.base(i, t) - tab.base(i, s));
    for (j, r, v) in tracked.q.iter() {
        if v != 0.0 {
            let shifted = (r as i64 + d).clamp(0, t_max) as usize;
            gain += v * (tab.base(j, shifted) - tab.base(j, r));
        }
    }
    Ok(gain)
}
