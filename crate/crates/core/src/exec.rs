//! Execution mode for the data-parallel kernels.
//!
//! Element loops, per-component solves and brute-force flip sweeps go through
//! [`Execution::map`]. Results are always gathered in index order, so the
//! parallel and sequential paths produce bitwise-identical output; only the
//! dense factorization kernels inside faer can differ in the last bits when
//! they are allowed to use threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Defaults to parallel when the `parallel` feature is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        self != Execution::Sequential
    }

    /// Evaluates `f` for every index in `0..n`, preserving order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }

    pub(crate) fn faer_par(self) -> faer::Par {
        match self {
            Execution::Sequential => faer::Par::Seq,
            #[cfg(feature = "parallel")]
            Execution::Parallel => faer::Par::rayon(0),
        }
    }
}
