//! Small f32 GEMM kernels backing the convolution and fully-connected ops.
//!
//! Every kernel accumulates each output element in a fixed index order, so
//! results are bit-identical regardless of the rayon thread count. Rows of
//! the output are independent and are what gets parallelized.

use rayon::prelude::*;

/// Below this many multiply-adds the rayon dispatch overhead dominates.
const PAR_THRESHOLD: usize = 1 << 15;

/// `out = A * B` with `A: m x k`, `B: k x n`, all row-major. Overwrites `out`.
pub fn gemm_nn(a: &[f32], m: usize, k: usize, b: &[f32], n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);

    let row = |out_row: &mut [f32], a_row: &[f32]| {
        out_row.iter_mut().for_each(|v| *v = 0.0);
        for (l, &al) in a_row.iter().enumerate() {
            if al == 0.0 {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                *o += al * bv;
            }
        }
    };

    if m * n * k >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(o, ar)| row(o, ar));
    } else {
        for (o, ar) in out.chunks_mut(n).zip(a.chunks(k)) {
            row(o, ar);
        }
    }
}

/// `out += A * B^T` with `A: m x s`, `B: n x s`, `out: m x n`.
pub fn gemm_nt_acc(a: &[f32], m: usize, s: usize, b: &[f32], n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * s);
    debug_assert_eq!(b.len(), n * s);
    debug_assert_eq!(out.len(), m * n);

    let row = |out_row: &mut [f32], a_row: &[f32]| {
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * s..(j + 1) * s];
            let mut acc = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row.iter()) {
                acc += av * bv;
            }
            *o += acc;
        }
    };

    if m * n * s >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .zip(a.par_chunks(s))
            .for_each(|(o, ar)| row(o, ar));
    } else {
        for (o, ar) in out.chunks_mut(n).zip(a.chunks(s)) {
            row(o, ar);
        }
    }
}

/// `out = A^T * B` with `A: k x m`, `B: k x n`, `out: m x n`. Overwrites `out`.
pub fn gemm_tn(a: &[f32], k: usize, m: usize, b: &[f32], n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);

    let row = |i: usize, out_row: &mut [f32]| {
        out_row.iter_mut().for_each(|v| *v = 0.0);
        for l in 0..k {
            let al = a[l * m + i];
            if al == 0.0 {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                *o += al * bv;
            }
        }
    };

    if m * n * k >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, o)| row(i, o));
    } else {
        for (i, o) in out.chunks_mut(n).enumerate() {
            row(i, o);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn naive_nn(a: &[f32], m: usize, k: usize, b: &[f32], n: usize) -> Vec<f32> {
        let mut out = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    out[i * n + j] += a[i * k + l] as f64 * b[l * n + j] as f64;
                }
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        let mut rng = crate::rng::derive(3, 99);
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (3, 4, 5), (8, 17, 9), (33, 40, 65)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect = naive_nn(&a, m, k, &b, n);

            let mut out = vec![0.0; m * n];
            gemm_nn(&a, m, k, &b, n, &mut out);
            for (x, y) in out.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-4, "gemm_nn {x} vs {y}");
            }

            // A^T path: feed the transpose and expect the same product.
            let mut at = vec![0.0; m * k];
            for i in 0..m {
                for l in 0..k {
                    at[l * m + i] = a[i * k + l];
                }
            }
            let mut out_t = vec![0.0; m * n];
            gemm_tn(&at, k, m, &b, n, &mut out_t);
            for (x, y) in out_t.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-4, "gemm_tn {x} vs {y}");
            }

            // B^T path with accumulation starting from zero.
            let mut bt = vec![0.0; k * n];
            for l in 0..k {
                for j in 0..n {
                    bt[j * k + l] = b[l * n + j];
                }
            }
            let mut out_acc = vec![0.0; m * n];
            gemm_nt_acc(&a, m, k, &bt, n, &mut out_acc);
            for (x, y) in out_acc.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-4, "gemm_nt_acc {x} vs {y}");
            }
        }
    }

    #[test]
    fn nt_acc_accumulates() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0, 4.0];
        let mut out = vec![10.0];
        gemm_nt_acc(&a, 1, 2, &b, 1, &mut out);
        assert_eq!(out[0], 10.0 + 11.0);
    }
}
