//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls the solver under test.

#![allow(dead_code)]

use optsep::lp::{assemble, LpProblem, PrimalSolution};
use optsep::measure::{AtomicMeasure, Grid};
use optsep::payoff::PayoffTable;
use optsep::{discretise, tilt, PayoffSpec, SiteArray};
use rand::Rng;

/// Solve the tridiagonal system `-a x_{k-1} + x_k - a x_{k+1} = d_k` with
/// `a = 1/2` and zero boundary values (Thomas algorithm).
fn solve_half_laplacian(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    for k in 0..n {
        let denom = 1.0 + if k > 0 { 0.5 * c[k - 1] } else { 0.0 };
        c[k] = -0.5 / denom;
        y[k] = (d[k] + if k > 0 { 0.5 * y[k - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        x[k] = y[k] - if k + 1 < n { c[k] * x[k + 1] } else { 0.0 };
    }
    x
}

/// `E[T^2]` for the simple walk started at 0 and absorbed at `-k` and `k`,
/// from the first- and second-moment recursions
/// `m1 = 1 + avg(m1)` and `m2 = 1 + avg(2 m1 + m2)`.
pub fn exit_second_moment(k: i64) -> f64 {
    let n = (2 * k - 1) as usize;
    let m1 = solve_half_laplacian(&vec![1.0; n]);
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { m1[i - 1] } else { 0.0 };
            let right = if i + 1 < n { m1[i + 1] } else { 0.0 };
            1.0 + left + right
        })
        .collect();
    let m2 = solve_half_laplacian(&rhs);
    m2[(k - 1) as usize]
}

/// Expected visits to each level `lo..=hi` before absorption, for the walk
/// started at `start`.
pub fn green(lo: i64, hi: i64, start: i64) -> Vec<f64> {
    let n = (hi - lo - 1) as usize;
    let d: Vec<f64> = (lo + 1..hi).map(|j| if j == start { 1.0 } else { 0.0 }).collect();
    let g = solve_half_laplacian(&d);
    let mut out = vec![0.0];
    out.extend(g);
    out.push(0.0);
    assert_eq!(out.len(), n + 2);
    out
}

/// Leading eigenpair of the walk killed outside `(0, L)` via power
/// iteration on the lazy chain `(I + P) / 2`, which is aperiodic.
pub fn power_iteration(levels: usize) -> (f64, Vec<f64>) {
    let n = levels - 1;
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * k as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..200_000 {
        let mut w = vec![0.0; n];
        for k in 0..n {
            let left = if k > 0 { v[k - 1] } else { 0.0 };
            let right = if k + 1 < n { v[k + 1] } else { 0.0 };
            w[k] = 0.5 * v[k] + 0.25 * (left + right);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= norm);
        let diff = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let num: f64 = (0..n)
            .map(|k| {
                let left = if k > 0 { w[k - 1] } else { 0.0 };
                let right = if k + 1 < n { w[k + 1] } else { 0.0 };
                w[k] * (0.5 * w[k] + 0.25 * (left + right))
            })
            .sum();
        lambda = num;
        v = w;
        if diff < 1e-15 {
            break;
        }
    }
    (2.0 * lambda - 1.0, v)
}

/// Maximise `c x` subject to `A x <= b`, `x >= 0`, `b >= 0`, on a dense
/// tableau with Bland's rule.
pub fn dense_lp_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let (m, n) = (a.len(), c.len());
    let width = n + m + 1;
    let mut tab = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        assert!(b[i] >= 0.0);
        tab[i][..n].copy_from_slice(&a[i]);
        tab[i][n + i] = 1.0;
        tab[i][width - 1] = b[i];
    }
    for k in 0..n {
        tab[m][k] = -c[k];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let tol = 1e-12;
    loop {
        let Some(enter) = (0..n + m).find(|&k| tab[m][k] < -tol) else { break };
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if tab[i][enter] > tol {
                let ratio = tab[i][width - 1] / tab[i][enter];
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let best = tab[l][width - 1] / tab[l][enter];
                        if ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[i] < basis[l]) {
                            Some(i)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
        }
        let r = leave.expect("bounded program");
        let piv = tab[r][enter];
        tab[r].iter_mut().for_each(|v| *v /= piv);
        let row = tab[r].clone();
        for (i, line) in tab.iter_mut().enumerate() {
            if i != r && line[enter] != 0.0 {
                let f = line[enter];
                line.iter_mut().zip(&row).for_each(|(v, w)| *v -= f * w);
            }
        }
        basis[r] = enter;
    }
    tab[m][width - 1]
}

/// Optimal tilted value of the discretised program, written out from the
/// definitions: variables are interior sojourn masses for `1 <= t <= T`,
/// rows keep stopped mass nonnegative and visit totals under the potential.
pub fn brute_force_value(grid: &Grid, mu: &AtomicMeasure, table: &PayoffTable) -> f64 {
    let horizon = table.horizon();
    let start = grid.j_star;
    let mut sites = Vec::new();
    for t in 1..=horizon {
        for j in grid.j_lo + 1..grid.j_hi {
            if (j - start + t as i64).rem_euclid(2) == 0 && (j - start).unsigned_abs() as usize <= t {
                sites.push((j, t));
            }
        }
    }
    let index = |j: i64, t: usize| sites.iter().position(|&s| s == (j, t));
    let n = sites.len();
    let f = |j: i64, t: usize| table.value(j, t);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut c = vec![0.0; n];
    for (k, &(j, t)) in sites.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[k] = 1.0;
        let mut rhs = 0.0;
        for nb in [j - 1, j + 1] {
            if t == 1 {
                if nb == start {
                    rhs += 0.5;
                }
            } else if let Some(m) = index(nb, t - 1) {
                row[m] -= 0.5;
            }
        }
        a.push(row);
        b.push(rhs);
        c[k] = 0.5 * (f(j - 1, t + 1) + f(j + 1, t + 1)) - f(j, t);
    }
    for j in grid.j_lo + 1..grid.j_hi {
        let spread: f64 = mu.atoms().map(|(i, m)| (i - j).abs() as f64 * m).sum();
        let u = spread - (start - j).abs() as f64 - if j == start { 1.0 } else { 0.0 };
        a.push(sites.iter().map(|&(i, _)| if i == j { 1.0 } else { 0.0 }).collect());
        b.push(u.max(0.0));
    }
    let constant = 0.5 * (f(start - 1, 1) + f(start + 1, 1));
    constant + dense_lp_max(&a, &b, &c)
}

/// Sojourn masses of the rule that continues a fraction `cont(j, t)` of the
/// mass arriving at each interior site, for `1 <= t <= T`.
pub fn forward_rule(grid: &Grid, horizon: usize, mut cont: impl FnMut(i64, usize) -> f64) -> SiteArray {
    let mut p = SiteArray::zeros(grid.j_lo, grid.j_hi, horizon + 1);
    p.set(grid.j_star, 0, 1.0);
    for t in 1..=horizon {
        for j in grid.j_lo + 1..grid.j_hi {
            let inflow = 0.5 * (p.get_or_zero(j - 1, t - 1) + p.get_or_zero(j + 1, t - 1));
            if inflow > 0.0 {
                p.set(j, t, cont(j, t).clamp(0.0, 1.0) * inflow);
            }
        }
    }
    p
}

/// A random rule: full continuation, full stop, or a random split at each
/// site, and everything stopped by `t_end`.
pub fn random_rule(grid: &Grid, horizon: usize, t_end: usize, rng: &mut impl Rng) -> SiteArray {
    forward_rule(grid, horizon, |_, t| {
        if t >= t_end {
            return 0.0;
        }
        match rng.gen_range(0..10) {
            0..=5 => 1.0,
            6 => 0.0,
            _ => rng.gen_range(0.05..0.95),
        }
    })
}

/// The program whose target is the law the rule `p` embeds; the rule is
/// then feasible with every potential row tight.
pub fn own_law_problem(grid: &Grid, horizon: usize, p: SiteArray, payoff: &PayoffSpec) -> (LpProblem, PrimalSolution) {
    let table = tilt(&discretise(payoff, grid, horizon).unwrap());
    let primal = PrimalSolution::from_p(p, &table).unwrap();
    let atoms: Vec<(i64, f64)> = grid.all_levels().map(|j| (j, primal.q.level_sum(j))).collect();
    let mu = AtomicMeasure::from_atoms(grid, &atoms).unwrap();
    let problem = assemble(grid, &mu, &table).unwrap();
    (problem, primal)
}
