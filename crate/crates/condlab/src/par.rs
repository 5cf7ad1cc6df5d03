// SPDX-License-Identifier: Apache-2.0

//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan out over rayon's pool; without
//! it, or with [`Exec::Sequential`], they run in a plain loop. Reductions are
//! always formed over fixed blocks and then summed left to right, so both
//! paths return bit-identical results.

use std::ops::Range;

/// Execution policy for batch kernels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Block length used by deterministic reductions.
pub const BLOCK: usize = 2048;

/// `(0..n).map(f).collect()`, in index order.
pub fn map<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fills `out[i] = f(i)`.
pub fn fill<T, F>(exec: Exec, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        return;
    }
    let _ = exec;
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Sum of `f(range)` over consecutive blocks of `0..n`, combined in order.
pub fn sum_blocks<F>(exec: Exec, n: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let blocks = n.div_ceil(BLOCK);
    let partial = map(exec, blocks, |b| f(b * BLOCK..((b + 1) * BLOCK).min(n)));
    partial.into_iter().sum()
}

/// Deterministic dot product.
pub fn dot(exec: Exec, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_blocks(exec, a.len(), |r| a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree_bitwise() {
        let a: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.11).cos()).collect();
        let s = dot(Exec::Sequential, &a, &b);
        let p = dot(Exec::Parallel, &a, &b);
        assert_eq!(s.to_bits(), p.to_bits());
        assert_eq!(map(Exec::Parallel, 5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }

    #[test]
    fn fill_writes_every_slot() {
        let mut v = vec![0usize; 3000];
        fill(Exec::Parallel, &mut v, |i| i + 1);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i + 1));
    }
}
