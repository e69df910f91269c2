//! Reproducible reductions.
//!
//! Every sum that feeds a Fisher matrix or a loss goes through a fixed
//! pairwise tree over fixed-size leaves, so the result does not depend on how
//! many worker threads rayon happens to use. [`ReductionMode::Sequential`]
//! is the strict left-to-right alternative.

use std::sync::atomic::{AtomicU8, Ordering};

use rayon::prelude::*;

/// Leaf size of the pairwise tree.
pub const LEAF: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMode {
    Pairwise,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

pub fn set_mode(mode: ReductionMode) {
    MODE.store(
        match mode {
            ReductionMode::Pairwise => 0,
            ReductionMode::Sequential => 1,
        },
        Ordering::Relaxed,
    );
}

pub fn mode() -> ReductionMode {
    match MODE.load(Ordering::Relaxed) {
        1 => ReductionMode::Sequential,
        _ => ReductionMode::Pairwise,
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if mode() == ReductionMode::Sequential {
        return xs.iter().sum();
    }
    tree(xs)
}

fn tree(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let half = split_point(xs.len());
    tree(&xs[..half]) + tree(&xs[half..])
}

// Split on a multiple of LEAF so the tree shape depends only on the length.
fn split_point(n: usize) -> usize {
    let leaves = n.div_ceil(LEAF);
    (leaves / 2) * LEAF
}

/// Reduces per-item values of a vector-valued quantity: `f(i)` produces an
/// accumulator for item `i`, `add` merges two accumulators. Leaves are mapped
/// in parallel, then combined with the same fixed tree as [`pairwise_sum`].
pub fn reduce_indexed<T, F, A>(n: usize, zero: T, f: F, add: A) -> T
where
    T: Clone + Send + Sync,
    F: Fn(usize, &mut T) + Sync,
    A: Fn(&T, &T) -> T + Sync,
{
    if n == 0 {
        return zero;
    }
    if mode() == ReductionMode::Sequential {
        let mut acc = zero;
        for i in 0..n {
            f(i, &mut acc);
        }
        return acc;
    }
    let leaves: Vec<T> = (0..n.div_ceil(LEAF))
        .into_par_iter()
        .map(|leaf| {
            let mut acc = zero.clone();
            for i in leaf * LEAF..((leaf + 1) * LEAF).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    combine(&leaves, &add)
}

fn combine<T: Clone, A: Fn(&T, &T) -> T>(xs: &[T], add: &A) -> T {
    if xs.len() == 1 {
        return xs[0].clone();
    }
    let half = xs.len() / 2;
    add(&combine(&xs[..half], add), &combine(&xs[half..], add))
}
