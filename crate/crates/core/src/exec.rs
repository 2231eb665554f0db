//! Execution policy for the data-parallel loops (path simulation, sweeps
//! over `N`). With the `parallel` feature disabled every policy runs
//! sequentially.

use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

impl Execution {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Self::Parallel
    }

    /// `items.iter().map(f)`, in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Map over `range` and fold the results with an associative `reduce`.
    ///
    /// `reduce` must be associative and `identity` its unit; with integer
    /// accumulators the result is then independent of the schedule.
    pub fn map_reduce<R, M, Red, Id>(self, range: Range<usize>, identity: Id, map: M, reduce: Red) -> R
    where
        R: Send,
        M: Fn(usize) -> R + Sync + Send,
        Red: Fn(R, R) -> R + Sync + Send,
        Id: Fn() -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return range.into_par_iter().map(map).reduce(identity, reduce);
        }
        range.map(map).fold(identity(), reduce)
    }
}
