//! Thin facade over rayon so every bulk computation has a sequential twin.
//!
//! With the default `parallel` feature, [`map`] fans work out over the global
//! rayon pool; without it, [`map`] is an alias for [`map_seq`]. Both preserve
//! input order, so downstream output is byte-identical either way.

use crate::error::{Error, Result};

/// Configures the global worker pool. `None` keeps the rayon default
/// (one worker per logical CPU). Calling this after the pool already exists
/// is a no-op rather than an error so that library consumers and tests can
/// both request a size.
pub fn install_workers(workers: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = workers {
            if n == 0 {
                return Err(Error::InvalidParameter("workers must be >= 1".into()));
            }
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(())
    }
    #[cfg(not(feature = "parallel"))]
    {
        match workers {
            Some(n) if n > 1 => Err(Error::Unsupported(
                "built without the `parallel` feature; only --workers 1 is available".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Order-preserving map, sequential baseline.
pub fn map_seq<I, O>(inputs: &[I], f: impl Fn(&I) -> O) -> Vec<O> {
    inputs.iter().map(f).collect()
}

/// Order-preserving map over the worker pool (or sequential without the
/// `parallel` feature).
#[cfg(feature = "parallel")]
pub fn map<I, O>(inputs: &[I], f: impl Fn(&I) -> O + Sync + Send) -> Vec<O>
where
    I: Sync,
    O: Send,
{
    use rayon::prelude::*;
    inputs.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<I, O>(inputs: &[I], f: impl Fn(&I) -> O + Sync + Send) -> Vec<O>
where
    I: Sync,
    O: Send,
{
    map_seq(inputs, f)
}
