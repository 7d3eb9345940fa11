//! Execution strategy for the data-parallel inner loops.
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] runs the same
//! code sequentially. Results never depend on the strategy: every parallel
//! loop writes disjoint outputs whose accumulation order is fixed.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Exec {
    #[default]
    Sequential,
    Parallel,
}

impl Exec {
    /// Whether this build can actually run loops on a thread pool.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Exec::Sequential => "sequential",
            Exec::Parallel => "parallel",
        }
    }
}

impl fmt::Display for Exec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Exec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Exec::Sequential),
            "parallel" => Ok(Exec::Parallel),
            other => Err(format!("unknown execution mode `{other}`")),
        }
    }
}

/// Runs `f` on every chunk of `out` (each `chunk` elements long, chunk index passed along).
pub(crate) fn for_each_chunk<T, F>(exec: Exec, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
        }
        _ => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
    }
}

/// Order-preserving map over a slice.
pub(crate) fn map_collect<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
