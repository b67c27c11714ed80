//! Work-efficient inclusive scan (Blelloch up-sweep / down-sweep).
//!
//! The array is conceptually padded to the next power of two; combinations
//! that would touch padding are skipped. The combination tree depends only on
//! the number of elements, so results are bitwise identical for every pool
//! width.

use crate::error::{Error, Result};
use crate::pool::WorkPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    /// `x_0 ⊗ … ⊗ x_k` for every `k`.
    Forward,
    /// `x_k ⊗ … ⊗ x_{N−1}` for every `k`.
    Reverse,
}

/// Operation counters for one scan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub combine_invocations: usize,
    /// Number of tree levels that performed at least one combination.
    pub sequential_depth: usize,
}

impl ScanStats {
    /// `max` per field, for reporting one figure over several scans.
    pub fn max(self, other: ScanStats) -> ScanStats {
        ScanStats {
            combine_invocations: self.combine_invocations.max(other.combine_invocations),
            sequential_depth: self.sequential_depth.max(other.sequential_depth),
        }
    }
}

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Inclusive scan of `elems` under the associative `op`.
///
/// `op(x, y)` always receives the earlier element (in time) as `x`, for both
/// directions. Operator failures are reported with the range of original
/// indices the failing combination covered.
pub fn associative_scan<T, F>(
    pool: &WorkPool,
    op: F,
    elems: Vec<T>,
    direction: ScanDirection,
) -> Result<(Vec<T>, ScanStats)>
where
    T: Send + Sync,
    F: Fn(&T, &T) -> Result<T> + Sync + Send,
{
    match direction {
        ScanDirection::Forward => scan_forward(pool, &op, elems),
        ScanDirection::Reverse => {
            let n = elems.len();
            let mut rev = elems;
            rev.reverse();
            let flipped = |x: &T, y: &T| op(y, x);
            let (mut out, stats) = scan_forward(pool, &flipped, rev).map_err(|e| match e {
                Error::Scan { start, end, source } => Error::Scan {
                    start: n - 1 - end,
                    end: n - 1 - start,
                    source,
                },
                other => other,
            })?;
            out.reverse();
            Ok((out, stats))
        }
    }
}

fn scan_forward<T, F>(pool: &WorkPool, op: &F, elems: Vec<T>) -> Result<(Vec<T>, ScanStats)>
where
    T: Send + Sync,
    F: Fn(&T, &T) -> Result<T> + Sync + Send,
{
    let n = elems.len();
    let mut stats = ScanStats::default();
    if n <= 1 {
        return Ok((elems, stats));
    }
    let mut values: Vec<T> = elems;
    let mut spans: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let levels = ceil_log2(n);

    let mut run_level = |pairs: Vec<(usize, usize)>,
                         values: &mut Vec<T>,
                         spans: &mut Vec<(usize, usize)>|
     -> Result<()> {
        if pairs.is_empty() {
            return Ok(());
        }
        stats.combine_invocations += pairs.len();
        stats.sequential_depth += 1;
        let results = pool.map(&pairs, |_, &(l, r)| op(&values[l], &values[r]));
        for (&(l, r), res) in pairs.iter().zip(results) {
            let span = (spans[l].0, spans[r].1);
            match res {
                Ok(v) => {
                    values[r] = v;
                    spans[r] = span;
                }
                Err(e) => {
                    return Err(Error::Scan {
                        start: span.0,
                        end: span.1,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(())
    };

    // up-sweep: build segment totals
    for d in 0..levels {
        let step = 1usize << (d + 1);
        let half = 1usize << d;
        let pairs = (0..n)
            .step_by(step)
            .map(|k| (k + half - 1, k + step - 1))
            .filter(|&(_, r)| r < n)
            .collect();
        run_level(pairs, &mut values, &mut spans)?;
    }
    // down-sweep: push totals into the gaps
    for d in (0..levels.saturating_sub(1)).rev() {
        let step = 1usize << (d + 1);
        let half = 1usize << d;
        let pairs = (step - 1..n)
            .step_by(step)
            .map(|k| (k, k + half))
            .filter(|&(_, r)| r < n)
            .collect();
        run_level(pairs, &mut values, &mut spans)?;
    }
    Ok((values, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add(a: &i64, b: &i64) -> Result<i64> {
        Ok(a + b)
    }

    /// Non-commutative operator: string concatenation.
    fn concat(a: &String, b: &String) -> Result<String> {
        Ok(format!("{a}{b}"))
    }

    #[test]
    fn single_element_untouched() {
        let (out, stats) =
            associative_scan(&WorkPool::sequential(), add, vec![5], ScanDirection::Forward).unwrap();
        assert_eq!(out, vec![5]);
        assert_eq!(stats, ScanStats::default());
    }

    #[test]
    fn prefix_sums_of_eight() {
        let (out, stats) = associative_scan(
            &WorkPool::sequential(),
            add,
            (1..=8).collect(),
            ScanDirection::Forward,
        )
        .unwrap();
        assert_eq!(out, vec![1, 3, 6, 10, 15, 21, 28, 36]);
        assert!(stats.combine_invocations <= 14);
        assert!(stats.sequential_depth <= 6);
    }

    #[test]
    fn matches_fold_for_all_sizes() {
        let pool = WorkPool::new(3).unwrap();
        for n in 1..=300usize {
            let elems: Vec<String> = (0..n).map(|i| format!("{},", i)).collect();
            let (fwd, stats) =
                associative_scan(&pool, concat, elems.clone(), ScanDirection::Forward).unwrap();
            let mut acc = String::new();
            for (i, e) in elems.iter().enumerate() {
                acc.push_str(e);
                assert_eq!(fwd[i], acc, "n={n} i={i}");
            }
            let bound = if n == 1 { 0 } else { 2 * n - 2 };
            assert!(stats.combine_invocations <= bound, "n={n}");
            assert!(stats.sequential_depth <= 2 * ceil_log2(n), "n={n}");

            let (rev, _) = associative_scan(&pool, concat, elems.clone(), ScanDirection::Reverse).unwrap();
            for i in 0..n {
                assert_eq!(rev[i], elems[i..].concat(), "n={n} i={i}");
            }
        }
    }

    #[test]
    fn errors_carry_index_range() {
        let op = |a: &(usize, usize), b: &(usize, usize)| {
            if a.0 <= 5 && 5 <= b.1 && b.0 == 6 {
                Err(Error::CombinationSingular)
            } else {
                Ok((a.0, b.1))
            }
        };
        let elems: Vec<(usize, usize)> = (0..10).map(|i| (i, i)).collect();
        let err = associative_scan(&WorkPool::sequential(), op, elems, ScanDirection::Forward).unwrap_err();
        match err {
            Error::Scan { start, end, source } => {
                assert!(start <= 5 && end >= 6);
                assert_eq!(*source, Error::CombinationSingular);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reverse_errors_use_original_indices() {
        let op = |a: &(usize, usize), b: &(usize, usize)| {
            if b.1 == 9 && a.0 == 8 {
                Err(Error::CombinationSingular)
            } else {
                Ok((a.0, b.1))
            }
        };
        let elems: Vec<(usize, usize)> = (0..10).map(|i| (i, i)).collect();
        let err = associative_scan(&WorkPool::sequential(), op, elems, ScanDirection::Reverse).unwrap_err();
        assert!(matches!(err, Error::Scan { start: 8, end: 9, .. }), "{err:?}");
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(7), 3);
        assert_eq!(ceil_log2(8), 3);
        assert_eq!(ceil_log2(257), 9);
    }
}
