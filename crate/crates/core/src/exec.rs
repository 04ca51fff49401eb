//! Sequential/parallel dispatch for the batch paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch operation should be executed.
///
/// `Parallel` silently degrades to sequential execution when the crate is
/// built without the `parallel` feature, so callers never need their own
/// `cfg` gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run batches on a thread pool.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Stable sort by `cmp`.
    pub fn sort_by<T, F>(self, items: &mut [T], cmp: F)
    where
        T: Send,
        F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_sort_by(cmp),
            _ => items.sort_by(cmp),
        }
    }

    /// Run `f` on each item for its side effects, collecting results in order.
    pub fn for_each_collect<T, U, F>(self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.into_par_iter().map(f).collect(),
            _ => items.into_iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let items: Vec<u32> = (0..10_000).collect();
        let a = Execution::Sequential.map(&items, |x| x * 3 + 1);
        let b = Execution::Parallel.map(&items, |x| x * 3 + 1);
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_sort_is_stable() {
        let mut items: Vec<(u8, usize)> = (0..5000).map(|i| ((i % 7) as u8, i)).collect();
        let mut expected = items.clone();
        expected.sort_by_key(|p| p.0);
        Execution::Parallel.sort_by(&mut items, |a, b| a.0.cmp(&b.0));
        assert_eq!(items, expected);
    }
}
