//! Dense storage over the space-time rectangle `[j_lo, j_hi] x [0, t_max]`.

use serde::{Deserialize, Serialize};

/// Values indexed by level `j` and step `t`.
///
/// Off-parity and unreachable sites are stored like any other and simply hold
/// zero in every array produced by this crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteArray {
    j_lo: i64,
    width: usize,
    t_max: usize,
    data: Vec<f64>,
}

impl SiteArray {
    pub fn zeros(j_lo: i64, j_hi: i64, t_max: usize) -> Self {
        assert!(j_hi >= j_lo, "empty level range");
        let width = (j_hi - j_lo + 1) as usize;
        Self {
            j_lo,
            width,
            t_max,
            data: vec![0.0; width * (t_max + 1)],
        }
    }

    pub fn j_lo(&self) -> i64 {
        self.j_lo
    }

    pub fn j_hi(&self) -> i64 {
        self.j_lo + self.width as i64 - 1
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    #[inline]
    fn offset(&self, j: i64, t: usize) -> usize {
        debug_assert!(j >= self.j_lo && j <= self.j_hi() && t <= self.t_max);
        t * self.width + (j - self.j_lo) as usize
    }

    #[inline]
    pub fn get(&self, j: i64, t: usize) -> f64 {
        self.data[self.offset(j, t)]
    }

    /// Like [`get`](Self::get) but returns zero outside the stored rectangle.
    #[inline]
    pub fn get_or_zero(&self, j: i64, t: usize) -> f64 {
        if j < self.j_lo || j > self.j_hi() || t > self.t_max {
            0.0
        } else {
            self.get(j, t)
        }
    }

    #[inline]
    pub fn set(&mut self, j: i64, t: usize, v: f64) {
        let k = self.offset(j, t);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, j: i64, t: usize, v: f64) {
        let k = self.offset(j, t);
        self.data[k] += v;
    }

    /// Values of slice `t`, ordered from `j_lo` upwards.
    pub fn slice(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn slice_sum(&self, t: usize) -> f64 {
        self.slice(t).iter().sum()
    }

    /// Sum over time of level `j`.
    pub fn level_sum(&self, j: i64) -> f64 {
        (0..=self.t_max).map(|t| self.get(j, t)).sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &SiteArray) -> f64 {
        assert_eq!(self.j_lo, other.j_lo);
        assert_eq!(self.width, other.width);
        let t = self.t_max.max(other.t_max);
        let mut m = 0.0f64;
        for s in 0..=t {
            for j in self.j_lo..=self.j_hi() {
                m = m.max((self.get_or_zero(j, s) - other.get_or_zero(j, s)).abs());
            }
        }
        m
    }

    /// Iterate over `(j, t, value)` for every stored site.
    pub fn iter(&self) -> impl Iterator<Item = (i64, usize, f64)> + '_ {
        self.data.iter().enumerate().map(move |(k, &v)| {
            let t = k / self.width;
            let j = self.j_lo + (k % self.width) as i64;
            (j, t, v)
        })
    }
}
