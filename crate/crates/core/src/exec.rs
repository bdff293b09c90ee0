//! Data-parallel map helpers with a sequential fallback.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans work out on the
//! rayon global pool (or whichever pool the caller installed). Without it,
//! every mode runs sequentially. Results always come back in input order,
//! so reductions downstream see the same sequence either way.

use crate::oracles::Concurrency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Falls back to sequential when any participating oracle is serial.
    pub fn with_oracles(self, oracles: &[Concurrency]) -> Self {
        if oracles.contains(&Concurrency::Serial) {
            Execution::Sequential
        } else {
            self
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over consecutive chunks of `items`, concatenating the outputs.
pub(crate) fn map_chunks<T, R, E, F>(
    items: &[T],
    chunk: usize,
    exec: Execution,
    f: F,
) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&[T]) -> Result<Vec<R>, E> + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && items.len() > chunk {
        use rayon::prelude::*;
        let parts: Vec<Vec<R>> = items.par_chunks(chunk).map(&f).collect::<Result<_, E>>()?;
        return Ok(parts.into_iter().flatten().collect());
    }
    let _ = exec;
    let mut out = Vec::with_capacity(items.len());
    for c in items.chunks(chunk) {
        out.extend(f(c)?);
    }
    Ok(out)
}

/// Maps `f` over `items` (with their index), preserving order.
pub fn map_indexed<T, R, E, F>(items: &[T], exec: Execution, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}
