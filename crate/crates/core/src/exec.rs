//! Sequential/parallel dispatch for per-clip workloads.
//!
//! With the `parallel` feature, [`Exec::Parallel`] maps on the rayon pool;
//! without it, both variants run on the calling thread. Results are always
//! returned in input order, so the choice never changes outputs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn map<I, R, F>(self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Like [`Exec::map`], stopping at the first error in input order.
    pub fn try_map<I, R, E, F>(self, items: &[I], f: F) -> Result<Vec<R>, E>
    where
        I: Sync,
        R: Send,
        E: Send,
        F: Fn(&I) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = Exec::Sequential.map(&items, |v| v * v);
        let par = Exec::Parallel.map(&items, |v| v * v);
        assert_eq!(seq, par);
        assert_eq!(Exec::Parallel.map_range(5, |i| i), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn try_map_reports_first_error() {
        let items = [1, 2, 3, 4];
        let r: Result<Vec<i32>, i32> =
            Exec::Parallel.try_map(&items, |&v| if v >= 3 { Err(v) } else { Ok(v) });
        assert_eq!(r, Err(3));
    }
}
