//! Dense vector kernels.
//!
//! Reductions split the input into fixed-size blocks and add the block sums in
//! order, so results do not depend on the number of worker threads.

use rayon::prelude::*;

const BLOCK: usize = 8192;

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    if x.len() <= BLOCK {
        return x.iter().zip(y).map(|(a, b)| a * b).sum();
    }
    let partial: Vec<f64> = x
        .par_chunks(BLOCK)
        .zip(y.par_chunks(BLOCK))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.par_chunks_mut(BLOCK)
        .zip(x.par_chunks(BLOCK))
        .for_each(|(ys, xs)| {
            for (yi, xi) in ys.iter_mut().zip(xs) {
                *yi += a * xi;
            }
        });
}

pub fn scale(a: f64, x: &mut [f64]) {
    x.par_chunks_mut(BLOCK).for_each(|xs| {
        for v in xs {
            *v *= a;
        }
    });
}

/// `out = b - out`, used after `out = A x` to form a residual in place.
pub fn residual_in_place(b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(b.len(), out.len());
    out.par_chunks_mut(BLOCK)
        .zip(b.par_chunks(BLOCK))
        .for_each(|(os, bs)| {
            for (o, bi) in os.iter_mut().zip(bs) {
                *o = bi - *o;
            }
        });
}

/// Elementwise `out = d * x`.
pub fn hadamard(d: &[f64], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(d.len(), x.len());
    out.par_chunks_mut(BLOCK)
        .zip(d.par_chunks(BLOCK).zip(x.par_chunks(BLOCK)))
        .for_each(|(os, (ds, xs))| {
            for ((o, di), xi) in os.iter_mut().zip(ds).zip(xs) {
                *o = di * xi;
            }
        });
}

/// Relative L2 distance `|a - b| / |b|` (absolute when `b` is zero).
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let nb = norm(b);
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}
