//! Deterministic reductions and data-parallel helpers.
//!
//! Every parallel reduction in the crate goes through [`pairwise_sum`], whose
//! summation tree depends only on the input length. Results are therefore
//! bit-identical for any rayon pool size.

use rayon::prelude::*;

/// Leaf size of the pairwise summation tree.
const LEAF: usize = 256;
/// Below this many elements, elementwise kernels run on the calling thread.
pub(crate) const PAR_MIN: usize = 1 << 14;
/// Fixed chunk length for parallel elementwise kernels.
pub(crate) const PAR_CHUNK: usize = 4096;

/// Pairwise (tree) sum with a fixed, length-determined association order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = split_point(values.len());
    let (left, right) = values.split_at(mid);
    if values.len() >= PAR_MIN {
        let (a, b) = rayon::join(|| pairwise_sum(left), || pairwise_sum(right));
        a + b
    } else {
        pairwise_sum(left) + pairwise_sum(right)
    }
}

/// Pairwise sum of `f(i)` for `i in 0..len`, same tree as [`pairwise_sum`].
pub fn pairwise_sum_by<F>(len: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    fn rec<F: Fn(usize) -> f64 + Sync>(lo: usize, hi: usize, f: &F) -> f64 {
        let n = hi - lo;
        if n <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + split_point(n);
        if n >= PAR_MIN {
            let (a, b) = rayon::join(|| rec(lo, mid, f), || rec(mid, hi, f));
            a + b
        } else {
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, len, f)
}

// Split on a multiple of LEAF so leaves stay full.
fn split_point(n: usize) -> usize {
    let leaves = n.div_ceil(LEAF);
    (leaves / 2).max(1) * LEAF
}

/// Fills `out[i] = f(i)`, in parallel for large outputs.
pub(crate) fn fill_with<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    if out.len() >= PAR_MIN {
        out.par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * PAR_CHUNK;
                for (k, o) in chunk.iter_mut().enumerate() {
                    *o = f(base + k);
                }
            });
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
    }
}

/// Allocates and fills a vector with `f(i)`.
pub(crate) fn collect_with<F>(len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let mut out = vec![0.0; len];
    fill_with(&mut out, f);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sums_are_sequential() {
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn sum_is_pool_size_invariant() {
        let v: Vec<f64> = (0..100_003).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e-9 * i as f64).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| pairwise_sum(&v));
        let b = four.install(|| pairwise_sum(&v));
        let c = four.install(|| pairwise_sum_by(v.len(), &|i| v[i]));
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c.to_bits());
    }
}
