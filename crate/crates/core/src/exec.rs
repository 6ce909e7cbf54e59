//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] runs
//! on the rayon thread pool; without it, both variants run sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batch work (oracle sweeps, per-repair checks) is scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Number of items satisfying `pred`.
    pub fn count<T, F>(self, items: &[T], pred: F) -> usize
    where
        T: Sync,
        F: Fn(&T) -> bool + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().filter(|t| pred(t)).count(),
            _ => items.iter().filter(|t| pred(t)).count(),
        }
    }
}
