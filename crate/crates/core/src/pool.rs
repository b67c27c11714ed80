//! Fixed-width work pool shared by element construction, linearization and
//! the scans.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

/// A pool of `width` workers. Width 1 runs everything on the calling thread.
pub struct WorkPool {
    pool: Option<ThreadPool>,
    width: usize,
}

impl std::fmt::Debug for WorkPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkPool").field("width", &self.width).finish()
    }
}

impl WorkPool {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidInput("work pool needs at least one worker".into()));
        }
        if width == 1 {
            return Ok(Self::sequential());
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(width)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start work pool: {e}")))?;
        Ok(Self {
            pool: Some(pool),
            width,
        })
    }

    pub fn sequential() -> Self {
        Self {
            pool: None,
            width: 1,
        }
    }

    /// One worker per available hardware thread.
    pub fn hardware() -> Result<Self> {
        let width = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self::new(width)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Order-preserving parallel map.
    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> U + Sync + Send,
    {
        match &self.pool {
            None => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
            Some(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()),
        }
    }

    /// Fallible map; on failure returns the error with the lowest index, so the
    /// outcome does not depend on scheduling.
    pub fn try_map<T, U, F>(&self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> Result<U> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        for width in [1, 3] {
            let pool = WorkPool::new(width).unwrap();
            assert_eq!(pool.map(&items, |i, x| i + x), (0..100).map(|x| 2 * x).collect::<Vec<_>>());
        }
    }

    #[test]
    fn try_map_reports_first_error() {
        let pool = WorkPool::new(4).unwrap();
        let items: Vec<usize> = (0..50).collect();
        let err = pool
            .try_map(&items, |i, _| {
                if i % 7 == 3 {
                    Err(Error::InvalidInput(format!("{i}")))
                } else {
                    Ok(i)
                }
            })
            .unwrap_err();
        assert_eq!(err, Error::InvalidInput("3".into()));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(WorkPool::new(0).is_err());
    }
}
