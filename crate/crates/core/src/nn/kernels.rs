//! Dense f32 kernels with f64 accumulation.
//!
//! Rows of the output are independent, so the row loop may run on the rayon
//! pool without changing results: each row is reduced in a fixed order.

use rayon::prelude::*;

/// Below this many multiply-adds a kernel stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 18;

fn rows_mut<F>(out: &mut [f32], row_len: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    if work >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        out.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// Output rows computed together so each widened `b` element is loaded once
/// per block.
const ROW_BLOCK: usize = 4;

/// `a[m×k] · bf[k×n]` with `bf` already widened; every output element sums
/// over `p` in ascending order.
fn gemm_rows(a: &[f32], bf: &[f64], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    rows_mut(&mut out, ROW_BLOCK * n, m * k * n, |blk, rows| {
        let r0 = blk * ROW_BLOCK;
        let nr = rows.len() / n;
        let mut acc = vec![0.0f64; ROW_BLOCK * n];
        if nr == ROW_BLOCK {
            let (s0, rest) = acc.split_at_mut(n);
            let (s1, rest) = rest.split_at_mut(n);
            let (s2, s3) = rest.split_at_mut(n);
            for p in 0..k {
                let a0 = f64::from(a[r0 * k + p]);
                let a1 = f64::from(a[(r0 + 1) * k + p]);
                let a2 = f64::from(a[(r0 + 2) * k + p]);
                let a3 = f64::from(a[(r0 + 3) * k + p]);
                let b = &bf[p * n..(p + 1) * n];
                let lanes = s0.iter_mut().zip(s1.iter_mut()).zip(s2.iter_mut()).zip(s3.iter_mut()).zip(b);
                for ((((x0, x1), x2), x3), &bv) in lanes {
                    *x0 += a0 * bv;
                    *x1 += a1 * bv;
                    *x2 += a2 * bv;
                    *x3 += a3 * bv;
                }
            }
        } else {
            for r in 0..nr {
                let s = &mut acc[r * n..(r + 1) * n];
                for p in 0..k {
                    let av = f64::from(a[(r0 + r) * k + p]);
                    for (sj, &bv) in s.iter_mut().zip(&bf[p * n..(p + 1) * n]) {
                        *sj += av * bv;
                    }
                }
            }
        }
        for (o, s) in rows.iter_mut().zip(&acc) {
            *o = *s as f32;
        }
    });
    out
}

fn widen(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| f64::from(v)).collect()
}

/// `[r×c]` to `[c×r]`.
fn transpose<T: Copy + Default>(x: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::default(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
    out
}

/// `a[m×k] · b[k×n]`.
pub fn matmul_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    gemm_rows(a, &widen(b), m, k, n)
}

#[inline]
pub fn dot(x: &[f32], y: &[f32]) -> f64 {
    // Four fixed lanes keep the reduction order independent of the target.
    let mut lanes = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        lanes[0] += f64::from(x[i]) * f64::from(y[i]);
        lanes[1] += f64::from(x[i + 1]) * f64::from(y[i + 1]);
        lanes[2] += f64::from(x[i + 2]) * f64::from(y[i + 2]);
        lanes[3] += f64::from(x[i + 3]) * f64::from(y[i + 3]);
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for i in chunks * 4..x.len() {
        s += f64::from(x[i]) * f64::from(y[i]);
    }
    s
}

/// `a[m×k] · b[n×k]ᵀ`.
pub fn matmul_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    gemm_rows(a, &widen(&transpose(b, n, k)), m, k, n)
}

/// `a[m×k]ᵀ · c[m×n]`, giving `[k×n]`.
pub fn matmul_tn(a: &[f32], c: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    gemm_rows(&transpose(a, m, k), &widen(c), k, m, n)
}

/// Numerically stable softmax of one contiguous slice, in place.
pub fn softmax_in_place(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0f64;
    for v in x.iter_mut() {
        let e = f64::from(*v - max).exp();
        *v = e as f32;
        sum += e;
    }
    let inv = 1.0 / sum;
    for v in x.iter_mut() {
        *v = (f64::from(*v) * inv) as f32;
    }
}

/// Log-sum-exp of a slice, computed in f64.
pub fn log_sum_exp(x: &[f32]) -> f64 {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let max = f64::from(max);
    let sum: f64 = x.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f64;
                for p in 0..k {
                    s += f64::from(a[i * k + p]) * f64::from(b[p * n + j]);
                }
                out[i * n + j] = s as f32;
            }
        }
        out
    }

    fn transpose(x: &[f32], r: usize, c: usize) -> Vec<f32> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn three_layouts_agree() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.11).cos()).collect();
        let want = naive(&a, &b, m, k, n);
        let nn = matmul_nn(&a, &b, m, k, n);
        let nt = matmul_nt(&a, &transpose(&b, k, n), m, k, n);
        let tn = matmul_tn(&transpose(&a, m, k), &b, k, m, n);
        for i in 0..m * n {
            assert!((nn[i] - want[i]).abs() < 1e-6);
            assert!((nt[i] - want[i]).abs() < 1e-6);
            assert!((tn[i] - want[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_of_all_masked_row_is_zero() {
        let mut x = [f32::NEG_INFINITY; 3];
        softmax_in_place(&mut x);
        assert_eq!(x, [0.0; 3]);
    }
}
