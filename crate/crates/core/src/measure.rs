//! Spatial grids, target measures on grid atoms and their potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on the mean of a measure, before scaling by `sqrt(N)`.
pub const MEAN_TOL: f64 = 1e-10;

/// Round `v` to the nearest integer when it is within `1e-9` of one, so that
/// grid arithmetic is not thrown off by `x * sqrt(N)` landing just below an
/// integer.
fn snap(v: f64) -> Option<f64> {
    let r = v.round();
    ((v - r).abs() < 1e-9).then_some(r)
}

fn floor_snapped(v: f64) -> i64 {
    snap(v).unwrap_or_else(|| v.floor()) as i64
}

fn ceil_snapped(v: f64) -> i64 {
    snap(v).unwrap_or_else(|| v.ceil()) as i64
}

/// The mesh `x(j) = j / sqrt(N)` between two absorbing boundary levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: u64,
    pub j_lo: i64,
    pub j_hi: i64,
    pub j_star: i64,
}

/// `build_grid(x_lower, x_upper, N)`: boundaries at `floor(x * sqrt(N))`.
pub fn build_grid(x_lower: f64, x_upper: f64, n: u64) -> Result<Grid> {
    Grid::new(x_lower, x_upper, n)
}

impl Grid {
    /// Boundaries at `floor(x_lower sqrt N)` and `floor(x_upper sqrt N)`, start at 0.
    pub fn new(x_lower: f64, x_upper: f64, n: u64) -> Result<Self> {
        Self::check_bounds(x_lower, x_upper, n)?;
        let s = (n as f64).sqrt();
        Self::from_indices(floor_snapped(x_lower * s), floor_snapped(x_upper * s), n)
    }

    /// Like [`Grid::new`] but rounds the upper boundary up, so that an interval
    /// `[x_lower, x_upper]` is always covered by `[x(j_lo), x(j_hi)]`.
    pub fn covering(x_lower: f64, x_upper: f64, n: u64) -> Result<Self> {
        Self::check_bounds(x_lower, x_upper, n)?;
        let s = (n as f64).sqrt();
        Self::from_indices(floor_snapped(x_lower * s), ceil_snapped(x_upper * s), n)
    }

    /// Grid from explicit boundary indices; the walk starts at level 0.
    pub fn from_indices(j_lo: i64, j_hi: i64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N must be a positive integer"));
        }
        if j_hi - j_lo < 2 {
            return Err(Error::invalid(format!(
                "degenerate grid: L = {} (need at least three levels)",
                j_hi - j_lo
            )));
        }
        if !(j_lo < 0 && 0 < j_hi) {
            return Err(Error::invalid(format!(
                "start level 0 is not strictly inside [{j_lo}, {j_hi}]"
            )));
        }
        Ok(Self { n, j_lo, j_hi, j_star: 0 })
    }

    fn check_bounds(x_lower: f64, x_upper: f64, n: u64) -> Result<()> {
        if !(x_lower.is_finite() && x_upper.is_finite() && x_lower < 0.0 && 0.0 < x_upper) {
            return Err(Error::invalid(format!(
                "need x_lower < 0 < x_upper, got [{x_lower}, {x_upper}]"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("N must be a positive integer"));
        }
        Ok(())
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Number of spatial steps `L = j_hi - j_lo`.
    pub fn levels(&self) -> usize {
        (self.j_hi - self.j_lo) as usize
    }

    pub fn x(&self, j: i64) -> f64 {
        j as f64 / self.sqrt_n()
    }

    pub fn is_interior(&self, j: i64) -> bool {
        self.j_lo < j && j < self.j_hi
    }

    pub fn is_boundary(&self, j: i64) -> bool {
        j == self.j_lo || j == self.j_hi
    }

    pub fn interior(&self) -> impl Iterator<Item = i64> + Clone {
        (self.j_lo + 1)..self.j_hi
    }

    pub fn all_levels(&self) -> impl Iterator<Item = i64> + Clone {
        self.j_lo..=self.j_hi
    }

    /// Whether `(j, t)` lies on the parity lattice of a walk started at `j_star`.
    pub fn reachable(&self, j: i64, t: usize) -> bool {
        let d = (j - self.j_star).unsigned_abs() as usize;
        d <= t && (d + t) % 2 == 0
    }

    /// Time in continuous units for step `t`.
    pub fn time(&self, t: usize) -> f64 {
        t as f64 / self.n as f64
    }
}

/// A probability measure given by real positions, as read from input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    /// `(position, mass)` pairs.
    pub atoms: Vec<(f64, f64)>,
}

impl MeasureSpec {
    pub fn new(atoms: Vec<(f64, f64)>) -> Self {
        Self { atoms }
    }

    pub fn dirac(x: f64) -> Self {
        Self::new(vec![(x, 1.0)])
    }

    /// `1/2 delta_{-a} + 1/2 delta_{a}`.
    pub fn symmetric_two_point(a: f64) -> Self {
        Self::new(vec![(-a, 0.5), (a, 0.5)])
    }

    /// Smallest and largest atom positions with positive mass.
    pub fn support(&self) -> Option<(f64, f64)> {
        let mut it = self.atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(x, m)| x * m).sum()
    }

    /// The grid used for this measure at refinement `n`: boundaries at the
    /// outermost atoms, rounded outwards onto the mesh. A Dirac mass at the
    /// origin gets the unit interval so that the grid is well formed.
    pub fn grid(&self, n: u64) -> Result<Grid> {
        let (lo, hi) = self
            .support()
            .ok_or_else(|| Error::invalid("measure has no atoms with positive mass"))?;
        let s = (n as f64).sqrt();
        let lo = lo.min(-1.0 / s);
        let hi = hi.max(1.0 / s);
        if lo >= 0.0 || hi <= 0.0 {
            return Err(Error::invalid("measure support must straddle the start point 0"));
        }
        Grid::covering(lo, hi, n)
    }
}

/// A measure carried by grid levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    j_lo: i64,
    mass: Vec<f64>,
}

impl AtomicMeasure {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            j_lo: grid.j_lo,
            mass: vec![0.0; grid.levels() + 1],
        }
    }

    /// Build from `(j, mass)` pairs; repeated levels accumulate.
    pub fn from_atoms(grid: &Grid, atoms: &[(i64, f64)]) -> Result<Self> {
        let mut mu = Self::zeros(grid);
        for &(j, m) in atoms {
            if j < grid.j_lo || j > grid.j_hi {
                return Err(Error::invalid(format!("atom at level {j} outside the grid")));
            }
            if !(m >= 0.0) {
                return Err(Error::invalid(format!("negative or NaN mass {m} at level {j}")));
            }
            mu.mass[(j - grid.j_lo) as usize] += m;
        }
        Ok(mu)
    }

    pub fn mass(&self, j: i64) -> f64 {
        let k = j - self.j_lo;
        if k < 0 || k as usize >= self.mass.len() {
            0.0
        } else {
            self.mass[k as usize]
        }
    }

    /// `(j, mass)` for every level with positive mass.
    pub fn atoms(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(move |(k, &m)| (self.j_lo + k as i64, m))
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self, grid: &Grid) -> f64 {
        self.atoms().map(|(j, m)| grid.x(j) * m).sum()
    }

    /// `E[(X - x(j_star))^2]`, which equals the expected stopping time in
    /// continuous units of any embedding.
    pub fn second_moment(&self, grid: &Grid) -> f64 {
        let xs = grid.x(grid.j_star);
        self.atoms().map(|(j, m)| (grid.x(j) - xs).powi(2) * m).sum()
    }

    pub fn is_dirac_at(&self, j: i64) -> bool {
        (self.mass(j) - 1.0).abs() <= MASS_TOL
    }

    /// Check total mass and that the mean sits at the start level.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let total = self.total();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        let mean = self.mean(grid);
        let target = grid.x(grid.j_star);
        if (mean - target).abs() > MEAN_TOL * grid.sqrt_n() {
            return Err(Error::invalid(format!(
                "measure has mean {mean}, but the walk starts at {target}"
            )));
        }
        Ok(())
    }
}

/// Place a measure on the grid, splitting each off-grid atom between its two
/// neighbouring levels so that mass and mean are preserved.
pub fn project_measure(spec: &MeasureSpec, grid: &Grid) -> Result<AtomicMeasure> {
    let s = grid.sqrt_n();
    let (x_lo, x_hi) = (grid.x(grid.j_lo), grid.x(grid.j_hi));
    let mut mu = AtomicMeasure::zeros(grid);
    let mut total = 0.0;
    for &(x, m) in &spec.atoms {
        if !(m >= 0.0) {
            return Err(Error::invalid(format!("negative or NaN mass {m} at {x}")));
        }
        if !(x >= x_lo - 1e-12 && x <= x_hi + 1e-12) {
            return Err(Error::invalid(format!(
                "atom at {x} lies outside the grid [{x_lo}, {x_hi}]"
            )));
        }
        total += m;
        let v = x * s;
        match snap(v) {
            Some(r) => {
                let j = (r as i64).clamp(grid.j_lo, grid.j_hi);
                mu.mass[(j - grid.j_lo) as usize] += m;
            }
            None => {
                let lo = v.floor();
                let w_hi = v - lo;
                let j = lo as i64;
                mu.mass[(j - grid.j_lo) as usize] += m * (1.0 - w_hi);
                mu.mass[(j + 1 - grid.j_lo) as usize] += m * w_hi;
            }
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("masses sum to {total}, not 1")));
    }
    Ok(mu)
}

/// Expected visit counts `U_j` allowed at each level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialArray {
    j_lo: i64,
    u: Vec<f64>,
}

impl PotentialArray {
    pub fn get(&self, j: i64) -> f64 {
        let k = j - self.j_lo;
        if k < 0 || k as usize >= self.u.len() {
            0.0
        } else {
            self.u[k as usize]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }
}

/// `U_j = sqrt(N) (sum_i |x_i - x_j| mu_i - |x_{j*} - x_j|)` at every level.
///
/// The sum is taken in index units, where `sqrt(N) |x_i - x_j| = |i - j|`
/// holds exactly.
pub fn potential(mu: &AtomicMeasure, grid: &Grid) -> Result<PotentialArray> {
    let mut u = Vec::with_capacity(grid.levels() + 1);
    for j in grid.all_levels() {
        let spread: f64 = mu.atoms().map(|(i, m)| (i - j).abs() as f64 * m).sum();
        let v = spread - (grid.j_star - j).abs() as f64;
        if v < -1e-9 {
            return Err(Error::Infeasible(format!(
                "potential is negative at level {j} ({v:.3e}): the measure is not reachable from the start"
            )));
        }
        u.push(v.max(0.0));
    }
    Ok(PotentialArray { j_lo: grid.j_lo, u })
}
