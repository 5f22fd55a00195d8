//! Dense f64 kernels used by the autodiff primitives.
//!
//! Every reduction runs in a fixed order (eight explicit lanes, summed in a
//! fixed sequence), so results are bitwise reproducible regardless of SIMD
//! width or how callers chunk the work. All matrices are row-major.

/// Dot product with a fixed 8-lane accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f64; 8];
    let chunks = a.len() / 8;
    let (a_head, a_tail) = a.split_at(chunks * 8);
    let (b_head, b_tail) = b.split_at(chunks * 8);
    for (xa, xb) in a_head.chunks_exact(8).zip(b_head.chunks_exact(8)) {
        for l in 0..8 {
            lanes[l] += xa[l] * xb[l];
        }
    }
    let mut acc = 0.0;
    for l in 0..8 {
        acc += lanes[l];
    }
    for (xa, xb) in a_tail.iter().zip(b_tail.iter()) {
        acc += xa * xb;
    }
    acc
}

/// `out += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, v) in out.iter_mut().zip(x.iter()) {
        *o += s * v;
    }
}

/// `out[m,n] = a[m,k] · b[n,k]^T`; rows of both operands are contiguous.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let or = &mut out[i * n..(i + 1) * n];
        for (j, o) in or.iter_mut().enumerate() {
            *o = dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out[m,k] = a[m,n] · b[n,k]`; accumulated row-by-row with axpy.
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * k);
    out.fill(0.0);
    for i in 0..m {
        let or = &mut out[i * k..(i + 1) * k];
        for j in 0..n {
            axpy(a[i * n + j], &b[j * k..(j + 1) * k], or);
        }
    }
}

/// `out[n,k] += a[m,n]^T · b[m,k]`; rank-1 updates in fixed row order.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), m * k);
    debug_assert_eq!(out.len(), n * k);
    for i in 0..m {
        let br = &b[i * k..(i + 1) * k];
        for j in 0..n {
            axpy(a[i * n + j], br, &mut out[j * k..(j + 1) * k]);
        }
    }
}
