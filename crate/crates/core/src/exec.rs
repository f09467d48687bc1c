//! Data-parallel map over independent work items.
//!
//! Every parallel loop in the crate goes through [`par_map`], which keeps the
//! input order and never reduces floats across threads, so results are
//! identical for any thread count. Without the `parallel` feature the
//! parallel mode runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work is actually spread over threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Self::Parallel
    }
}

pub fn par_map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// [`par_map`] over `0..n`.
pub fn par_map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    par_map(exec, &idx, |&i| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.37).collect();
        let f = |x: &f64| (x.sin() * 1e3).exp_m1();
        let a = par_map(Execution::Sequential, &xs, f);
        let b = par_map(Execution::Parallel, &xs, f);
        assert_eq!(a, b);
        assert_eq!(par_map_range(Execution::Parallel, 5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
