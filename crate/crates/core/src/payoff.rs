//! Payoff functions, their grid tables and the linear time tilt.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteArray;
use crate::measure::Grid;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Payoff `F(x, t)` collected when the walk stops at level `x` and time `t`.
#[derive(Clone)]
pub enum PayoffSpec {
    /// `F = -phi(t)` with `phi` concave on `[0, t0]`, convex after, `phi(t0) = 1`.
    Cave { t0: f64, phi: TimeFn },
    /// `F = f(t)` with `f` concave; optimal rules are Root barriers.
    Root { f: TimeFn, label: String },
    /// `F = f(t)` with `f` convex; optimal rules are Rost inverse barriers.
    Rost { f: TimeFn, label: String },
    /// Any bounded `F(x, t)`.
    General { f: SpaceTimeFn, label: String },
}

impl fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PayoffSpec({})", self.name())
    }
}

/// The default cave payoff: `phi(t) = (2 t0 t - t^2) / t0^2` on `[0, t0]` and
/// `exp(-(t - t0))` afterwards.
pub fn default_cave(t0: f64) -> PayoffSpec {
    assert!(t0 > 0.0, "t0 must be positive");
    PayoffSpec::Cave {
        t0,
        phi: Arc::new(move |t: f64| {
            if t <= t0 {
                (2.0 * t0 * t - t * t) / (t0 * t0)
            } else {
                (-(t - t0)).exp()
            }
        }),
    }
}

impl PayoffSpec {
    /// `f(t) = -t^2`: minimising the second moment of the stopping time.
    pub fn root() -> Self {
        Self::Root {
            f: Arc::new(|t: f64| -t * t),
            label: "-t^2".into(),
        }
    }

    /// `f(t) = t^2`: maximising the second moment of the stopping time.
    pub fn rost() -> Self {
        Self::Rost {
            f: Arc::new(|t: f64| t * t),
            label: "t^2".into(),
        }
    }

    pub fn root_with(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Root { f: Arc::new(f), label: label.into() }
    }

    pub fn rost_with(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Rost { f: Arc::new(f), label: label.into() }
    }

    pub fn general(label: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::General { f: Arc::new(f), label: label.into() }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Cave { t0, .. } => format!("cave(t0={t0})"),
            Self::Root { label, .. } => format!("root({label})"),
            Self::Rost { label, .. } => format!("rost({label})"),
            Self::General { label, .. } => format!("general({label})"),
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Self::Cave { phi, .. } => -phi(t),
            Self::Root { f, .. } | Self::Rost { f, .. } => f(t),
            Self::General { f, .. } => f(x, t),
        }
    }

    pub fn is_time_only(&self) -> bool {
        !matches!(self, Self::General { .. })
    }

    /// Hinge step separating the inverse-barrier and barrier parts of the
    /// optimal stopping region: `floor(N t0)` for caves, 0 for Root, and past
    /// the horizon for Rost.
    pub fn hinge_index(&self, n: u64, horizon: usize) -> usize {
        match self {
            Self::Cave { t0, .. } => ((n as f64) * t0 + 1e-9).floor() as usize,
            Self::Rost { .. } => horizon + 1,
            Self::Root { .. } | Self::General { .. } => 0,
        }
    }

    /// Check the cave axioms by sampling: `phi(0) = 0`, `phi(t0) = 1`,
    /// nonpositive second differences on `[0, t0]`, nonnegative ones on
    /// `[t0, 20 t0]`, and `phi` small far out.
    pub fn validate(&self) -> Result<()> {
        let Self::Cave { t0, phi } = self else { return Ok(()) };
        let t0 = *t0;
        if phi(0.0).abs() > 1e-12 || (phi(t0) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("cave function needs phi(0) = 0 and phi(t0) = 1"));
        }
        let m = 400;
        let h = t0 / m as f64;
        for k in 1..m {
            let t = k as f64 * h;
            if phi(t - h) - 2.0 * phi(t) + phi(t + h) > 1e-12 {
                return Err(Error::invalid(format!("cave function not concave near t = {t}")));
            }
        }
        let h = 19.0 * t0 / m as f64;
        for k in 1..m {
            let t = t0 + k as f64 * h;
            if phi(t - h) - 2.0 * phi(t) + phi(t + h) < -1e-12 {
                return Err(Error::invalid(format!("cave function not convex near t = {t}")));
            }
        }
        if phi(t0 + 50.0).abs() > 1e-6 {
            return Err(Error::invalid("cave function does not decay to 0"));
        }
        Ok(())
    }
}

/// Payoff values on a rectangle of `(x, t)` nodes, bilinearly interpolated
/// and held constant outside the rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `values[k][i]` is the payoff at `(x[i], t[k])`.
    pub values: Vec<Vec<f64>>,
}

impl PayoffGrid {
    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.x.is_empty() || self.t.is_empty() || !increasing(&self.x) || !increasing(&self.t) {
            return Err(Error::invalid("payoff table axes must be nonempty and increasing"));
        }
        if self.values.len() != self.t.len() || self.values.iter().any(|r| r.len() != self.x.len()) {
            return Err(Error::invalid("payoff table values must have shape [t][x]"));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("payoff table contains non-finite values"));
        }
        Ok(())
    }

    fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
        if v <= axis[0] {
            return (0, 0, 0.0);
        }
        let last = axis.len() - 1;
        if v >= axis[last] {
            return (last, last, 0.0);
        }
        let hi = axis.partition_point(|&a| a <= v);
        let lo = hi - 1;
        (lo, hi, (v - axis[lo]) / (axis[hi] - axis[lo]))
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (i0, i1, wx) = Self::bracket(&self.x, x);
        let (k0, k1, wt) = Self::bracket(&self.t, t);
        let row = |k: usize| self.values[k][i0] * (1.0 - wx) + self.values[k][i1] * wx;
        row(k0) * (1.0 - wt) + row(k1) * wt
    }

    pub fn into_spec(self, label: impl Into<String>) -> Result<PayoffSpec> {
        self.validate()?;
        Ok(PayoffSpec::general(label, move |x, t| self.eval(x, t)))
    }
}

/// Payoff values on the grid for steps `0..=T+1`, plus the tilt constant.
///
/// Slice `T+1` holds the payoff of the mass still running at the horizon,
/// which the truncated program stops there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PayoffTable {
    grid: Grid,
    horizon: usize,
    base: SiteArray,
    /// Tilt constant in payoff per unit of continuous time.
    c: f64,
    bound: f64,
    space_dependent: bool,
}

/// Tabulate `F(x(j), t/N)` for every level and every step up to `T + 1`.
pub fn discretise(spec: &PayoffSpec, grid: &Grid, horizon: usize) -> Result<PayoffTable> {
    if horizon < 1 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut base = SiteArray::zeros(grid.j_lo, grid.j_hi, horizon + 1);
    let mut bound = 0.0f64;
    let mut space_dependent = false;
    for t in 0..=horizon + 1 {
        let time = grid.time(t);
        let mut first = None;
        for j in grid.all_levels() {
            let v = spec.eval(grid.x(j), time);
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "payoff {} is not finite at (x, t) = ({}, {time})",
                    spec.name(),
                    grid.x(j)
                )));
            }
            bound = bound.max(v.abs());
            match first {
                None => first = Some(v),
                Some(f) => space_dependent |= f != v,
            }
            base.set(j, t, v);
        }
    }
    Ok(PayoffTable {
        grid: *grid,
        horizon,
        base,
        c: 0.0,
        bound,
        space_dependent,
    })
}

/// Default tilt margin: one percent of the largest one-step change.
pub const TILT_MARGIN: f64 = 0.01;

/// Add the linear time tilt `C t / N` that makes the table nondecreasing in
/// time from step 1 on.
pub fn tilt(table: &PayoffTable) -> PayoffTable {
    tilt_with_margin(table, TILT_MARGIN)
}

/// [`tilt`] with an explicit margin: the per-step increment `C/N` is the
/// largest one-step decrease plus `margin` times the largest one-step change.
pub fn tilt_with_margin(table: &PayoffTable, margin: f64) -> PayoffTable {
    let grid = &table.grid;
    let mut max_dec = 0.0f64;
    let mut max_abs = 0.0f64;
    for t in 1..=table.horizon {
        for j in grid.all_levels() {
            let d = table.base.get(j, t + 1) - table.base.get(j, t);
            max_dec = max_dec.max(-d);
            max_abs = max_abs.max(d.abs());
        }
    }
    let per_step = max_dec + margin * max_abs;
    PayoffTable {
        c: per_step * grid.n as f64,
        ..table.clone()
    }
}

impl PayoffTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Untilted payoff `F(x(j), t/N)`.
    pub fn base(&self, j: i64, t: usize) -> f64 {
        self.base.get(j, t)
    }

    /// Objective coefficient used by the program: `F + C t / N`.
    #[inline]
    pub fn value(&self, j: i64, t: usize) -> f64 {
        self.base.get(j, t) + self.c * t as f64 / self.grid.n as f64
    }

    pub fn tilt_constant(&self) -> f64 {
        self.c
    }

    /// `C / N`, the tilt added per step.
    pub fn tilt_per_step(&self) -> f64 {
        self.c / self.grid.n as f64
    }

    /// Sup-norm of the untilted payoff over the table.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Set when the payoff depends on space; the tilt is then still exact but
    /// the Root/Rost/cave shape results no longer apply.
    pub fn space_dependent(&self) -> bool {
        self.space_dependent
    }

    /// Replace the tilt constant.
    pub fn with_tilt_constant(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::build_grid;

    fn phi(spec: &PayoffSpec, t: f64) -> f64 {
        -spec.eval(0.0, t)
    }

    #[test]
    fn default_cave_values() {
        let c = default_cave(1.0);
        assert_eq!(phi(&c, 0.0), 0.0);
        assert_eq!(phi(&c, 1.0), 1.0);
        assert_eq!(phi(&c, 0.5), 0.75);
        c.validate().unwrap();
        default_cave(0.5).validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_cave() {
        let bad = PayoffSpec::Cave { t0: 1.0, phi: Arc::new(|t: f64| t) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn discretise_examples() {
        let g = build_grid(-1.0, 1.0, 4).unwrap();
        let root = discretise(&PayoffSpec::root(), &g, 8).unwrap();
        assert_eq!(root.base(0, 2), -0.25);
        let cave = discretise(&default_cave(1.0), &g, 8).unwrap();
        assert_eq!(cave.base(1, 4), -1.0);
        assert!((cave.base(0, 8) + (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(cave.tilt_constant(), 0.0);
        assert!(!cave.space_dependent());
    }

    #[test]
    fn cave_tilt_matches_first_decrease() {
        let g = build_grid(-1.0, 1.0, 4).unwrap();
        let t = tilt(&discretise(&default_cave(1.0), &g, 8).unwrap());
        assert!((t.tilt_per_step() - (0.75 - 0.4375) * 1.01).abs() < 1e-15);
        assert!((t.tilt_constant() - 4.0 * 0.315625).abs() < 1e-14);
    }

    #[test]
    fn root_tilt_covers_last_step() {
        let g = build_grid(-1.0, 1.0, 4).unwrap();
        let horizon = 10;
        let t = tilt(&discretise(&PayoffSpec::root(), &g, horizon).unwrap());
        let last = ((horizon + 1).pow(2) - horizon.pow(2)) as f64 / 16.0;
        assert!((t.tilt_per_step() - 1.01 * last).abs() < 1e-14);
    }

    #[test]
    fn increasing_payoff_gets_margin_only() {
        let g = build_grid(-1.0, 1.0, 4).unwrap();
        let t = tilt(&discretise(&PayoffSpec::rost(), &g, 6).unwrap());
        let largest = (49.0 - 36.0) / 16.0;
        assert!((t.tilt_per_step() - 0.01 * largest).abs() < 1e-15);
    }

    #[test]
    fn tilted_table_is_nondecreasing() {
        let g = build_grid(-1.0, 1.0, 16).unwrap();
        for spec in [default_cave(0.5), PayoffSpec::root(), PayoffSpec::rost()] {
            let t = tilt(&discretise(&spec, &g, 40).unwrap());
            for j in g.all_levels() {
                for s in 1..=40 {
                    assert!(t.value(j, s + 1) >= t.value(j, s), "{} at ({j},{s})", spec.name());
                }
            }
        }
    }

    #[test]
    fn space_dependence_is_flagged() {
        let g = build_grid(-1.0, 1.0, 4).unwrap();
        let spec = PayoffSpec::general("x^2", |x, _| x * x);
        assert!(discretise(&spec, &g, 3).unwrap().space_dependent());
    }

    #[test]
    fn unbounded_payoff_is_an_error() {
        let g = build_grid(-1.0, 1.0, 4).unwrap();
        let spec = PayoffSpec::root_with("1/t", |t| -1.0 / t);
        assert!(discretise(&spec, &g, 3).is_err());
    }

    #[test]
    fn payoff_grid_interpolates() {
        let pg = PayoffGrid {
            x: vec![-1.0, 1.0],
            t: vec![0.0, 1.0],
            values: vec![vec![0.0, 2.0], vec![1.0, 3.0]],
        };
        assert_eq!(pg.eval(0.0, 0.5), 1.5);
        assert_eq!(pg.eval(5.0, 5.0), 3.0);
        let spec = pg.into_spec("file").unwrap();
        assert_eq!(spec.eval(-1.0, 0.0), 0.0);
    }
}
