//! Differentiable primitives.
//!
//! Conventions (fixed across the crate):
//! - all buffers are row-major f64;
//! - convolution is cross-correlation (no kernel flip), valid padding, stride 1;
//! - LSTM gate order along the `4H` axis is (input, forget, candidate, output);
//! - every primitive's gradient is verified against central finite differences
//!   (see [`super::gradcheck`] and the acceptance suite).

use crate::error::{Error, Result};
use crate::linalg;
use crate::numcore::tensor::Tensor;

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Elementwise sum of two same-shape tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let values: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| x + y)
        .collect();
    Ok(Tensor::from_op(
        values,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

/// Elementwise product of two same-shape tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let values: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| x * y)
        .collect();
    Ok(Tensor::from_op(
        values,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|g, inputs| {
            let av = inputs[0].values();
            let bv = inputs[1].values();
            let da = g.iter().zip(bv.iter()).map(|(gi, y)| gi * y).collect();
            let db = g.iter().zip(av.iter()).map(|(gi, x)| gi * x).collect();
            vec![Some(da), Some(db)]
        }),
    ))
}

/// Multiply by a compile-time constant.
pub fn scale(a: &Tensor, s: f64) -> Tensor {
    let values: Vec<f64> = a.values().iter().map(|x| x * s).collect();
    Tensor::from_op(
        values,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, _| vec![Some(g.iter().map(|gi| gi * s).collect())]),
    )
}

pub fn tanh(a: &Tensor) -> Tensor {
    let y: Vec<f64> = a.values().iter().map(|x| x.tanh()).collect();
    let saved = y.clone();
    Tensor::from_op(
        y,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, _| {
            let da = g
                .iter()
                .zip(saved.iter())
                .map(|(gi, yi)| gi * (1.0 - yi * yi))
                .collect();
            vec![Some(da)]
        }),
    )
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic function 1 / (1 + e^-x).
pub fn logistic(a: &Tensor) -> Tensor {
    let y: Vec<f64> = a.values().iter().map(|&x| sigmoid(x)).collect();
    let saved = y.clone();
    Tensor::from_op(
        y,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, _| {
            let da = g
                .iter()
                .zip(saved.iter())
                .map(|(gi, yi)| gi * yi * (1.0 - yi))
                .collect();
            vec![Some(da)]
        }),
    )
}

/// Rectifier max(0, x). The subgradient at 0 is taken as 0.
pub fn relu(a: &Tensor) -> Tensor {
    let y: Vec<f64> = a
        .values()
        .iter()
        .map(|&x| if x > 0.0 { x } else { 0.0 })
        .collect();
    Tensor::from_op(
        y,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(|g, inputs| {
            let xv = inputs[0].values();
            let da = g
                .iter()
                .zip(xv.iter())
                .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                .collect();
            vec![Some(da)]
        }),
    )
}

/// View the same buffer under a new shape with equal element count.
pub fn reshape(a: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    if shape.iter().product::<usize>() != a.len() {
        return Err(Error::ShapeMismatch(format!(
            "reshape {:?} -> {:?}",
            a.shape(),
            shape
        )));
    }
    Ok(Tensor::from_op(
        a.to_vec(),
        shape,
        vec![a.clone()],
        Box::new(|g, _| vec![Some(g.to_vec())]),
    ))
}

fn permute_values(values: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let nd = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let out_strides = strides(&out_shape);
    let mut out = vec![0.0; values.len()];
    for (out_lin, slot) in out.iter_mut().enumerate() {
        let mut rem = out_lin;
        let mut in_lin = 0;
        for i in 0..nd {
            let q = rem / out_strides[i];
            rem %= out_strides[i];
            in_lin += q * in_strides[perm[i]];
        }
        *slot = values[in_lin];
    }
    (out, out_shape)
}

/// Permute axes; `perm[i]` names the input axis that becomes output axis `i`.
pub fn transpose(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let nd = a.shape().len();
    let mut seen = vec![false; nd];
    if perm.len() != nd
        || perm
            .iter()
            .any(|&p| p >= nd || std::mem::replace(&mut seen[p], true))
    {
        return Err(Error::ShapeMismatch(format!(
            "transpose: {:?} is not a permutation of {} axes",
            perm, nd
        )));
    }
    let (values, out_shape) = permute_values(&a.values(), a.shape(), perm);
    let perm_owned = perm.to_vec();
    let in_shape = a.shape().to_vec();
    Ok(Tensor::from_op(
        values,
        out_shape.clone(),
        vec![a.clone()],
        Box::new(move |g, _| {
            let mut inverse = vec![0usize; perm_owned.len()];
            for (i, &p) in perm_owned.iter().enumerate() {
                inverse[p] = i;
            }
            let (dg, back_shape) = permute_values(g, &out_shape, &inverse);
            debug_assert_eq!(back_shape, in_shape);
            vec![Some(dg)]
        }),
    ))
}

/// Contiguous slice `[start, start+len)` along one axis.
pub fn slice(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let shape = a.shape();
    if axis >= shape.len() || start + len > shape[axis] || len == 0 {
        return Err(Error::ShapeMismatch(format!(
            "slice: axis {axis} range {start}..{} out of {:?}",
            start + len,
            shape
        )));
    }
    let outer: usize = shape[..axis].iter().product();
    let dim = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * len * inner];
    {
        let v = a.values();
        for o in 0..outer {
            let src = (o * dim + start) * inner;
            let dst = o * len * inner;
            out[dst..dst + len * inner].copy_from_slice(&v[src..src + len * inner]);
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let total = a.len();
    Ok(Tensor::from_op(
        out,
        out_shape,
        vec![a.clone()],
        Box::new(move |g, _| {
            let mut da = vec![0.0; total];
            for o in 0..outer {
                let dst = (o * dim + start) * inner;
                let src = o * len * inner;
                da[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            vec![Some(da)]
        }),
    ))
}

/// Concatenate tensors along one axis.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::ShapeMismatch("concat: no inputs".into()));
    }
    let first = parts[0].shape().to_vec();
    if axis >= first.len() {
        return Err(Error::ShapeMismatch(format!(
            "concat: axis {axis} out of {:?}",
            first
        )));
    }
    for p in parts {
        if p.shape().len() != first.len()
            || p.shape()
                .iter()
                .enumerate()
                .any(|(i, &d)| i != axis && d != first[i])
        {
            return Err(Error::ShapeMismatch(format!(
                "concat: {:?} vs {:?} along axis {axis}",
                p.shape(),
                first
            )));
        }
    }
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let dims: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let total_dim: usize = dims.iter().sum();
    let mut out = vec![0.0; outer * total_dim * inner];
    let mut offset = 0;
    for (p, &d) in parts.iter().zip(dims.iter()) {
        let v = p.values();
        for o in 0..outer {
            let dst = (o * total_dim + offset) * inner;
            let src = o * d * inner;
            out[dst..dst + d * inner].copy_from_slice(&v[src..src + d * inner]);
        }
        offset += d;
    }
    let mut out_shape = first;
    out_shape[axis] = total_dim;
    Ok(Tensor::from_op(
        out,
        out_shape,
        parts.to_vec(),
        Box::new(move |g, inputs| {
            let mut grads = Vec::with_capacity(inputs.len());
            let mut offset = 0;
            for (p, &d) in inputs.iter().zip(dims.iter()) {
                let mut dp = vec![0.0; p.len()];
                for o in 0..outer {
                    let src = (o * total_dim + offset) * inner;
                    let dst = o * d * inner;
                    dp[dst..dst + d * inner].copy_from_slice(&g[src..src + d * inner]);
                }
                offset += d;
                grads.push(Some(dp));
            }
            grads
        }),
    ))
}

/// `a[M,K] · b[N,K]^T -> [M,N]`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[1] {
        return Err(Error::ShapeMismatch(format!(
            "matmul_nt: {ash:?} vs {bsh:?}"
        )));
    }
    let (rows, k, cols) = (ash[0], ash[1], bsh[0]);
    let mut out = vec![0.0; rows * cols];
    linalg::matmul_nt(&a.values(), &b.values(), rows, k, cols, &mut out);
    Ok(Tensor::from_op(
        out,
        vec![rows, cols],
        vec![a.clone(), b.clone()],
        Box::new(move |g, inputs| {
            let da = if inputs[0].needs_grad() {
                let mut d = vec![0.0; rows * k];
                linalg::matmul_nn(g, &inputs[1].values(), rows, cols, k, &mut d);
                Some(d)
            } else {
                None
            };
            let db = if inputs[1].needs_grad() {
                let mut d = vec![0.0; cols * k];
                linalg::matmul_tn_acc(g, &inputs[0].values(), rows, cols, k, &mut d);
                Some(d)
            } else {
                None
            };
            vec![da, db]
        }),
    ))
}

/// Add a bias row vector to every row of a 2-D tensor.
pub fn add_bias(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let ash = a.shape();
    if ash.len() != 2 || bias.shape() != [ash[1]] {
        return Err(Error::ShapeMismatch(format!(
            "add_bias: {:?} vs {:?}",
            ash,
            bias.shape()
        )));
    }
    let (rows, cols) = (ash[0], ash[1]);
    let bv = bias.to_vec();
    let mut values = a.to_vec();
    for r in 0..rows {
        for c in 0..cols {
            values[r * cols + c] += bv[c];
        }
    }
    Ok(Tensor::from_op(
        values,
        ash.to_vec(),
        vec![a.clone(), bias.clone()],
        Box::new(move |g, _| {
            let mut db = vec![0.0; cols];
            for r in 0..rows {
                for c in 0..cols {
                    db[c] += g[r * cols + c];
                }
            }
            vec![Some(g.to_vec()), Some(db)]
        }),
    ))
}

/// Sum of all elements into a scalar.
pub fn sum(a: &Tensor) -> Tensor {
    let s: f64 = a.values().iter().sum();
    let n = a.len();
    Tensor::from_op(
        vec![s],
        vec![],
        vec![a.clone()],
        Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
    )
}

/// Mean of all elements into a scalar.
pub fn mean(a: &Tensor) -> Tensor {
    let n = a.len();
    let s: f64 = a.values().iter().sum();
    Tensor::from_op(
        vec![s / n as f64],
        vec![],
        vec![a.clone()],
        Box::new(move |g, _| vec![Some(vec![g[0] / n as f64; n])]),
    )
}

/// Elementwise maximum. Ties route the gradient to the first argument, so a
/// left fold keeps the earliest candidate on ties.
pub fn max_pairwise(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("max_pairwise", a, b)?;
    let values: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(&x, &y)| if x >= y { x } else { y })
        .collect();
    Ok(Tensor::from_op(
        values,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|g, inputs| {
            let av = inputs[0].values();
            let bv = inputs[1].values();
            let mut da = vec![0.0; g.len()];
            let mut db = vec![0.0; g.len()];
            for i in 0..g.len() {
                if av[i] >= bv[i] {
                    da[i] = g[i];
                } else {
                    db[i] = g[i];
                }
            }
            vec![Some(da), Some(db)]
        }),
    ))
}

/// Affine map `x[B,D] · w[K,D]^T + b[K]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    add_bias(&matmul_nt(x, weight)?, bias)
}

/// Temporal convolution over axis 2 of `[B, F_in, T, C]`, sharing kernels
/// across the trailing sensor-channel axis.
///
/// `out[b,f,t,c] = bias[f] + sum_{g,k} input[b,g,t+k,c] * kernels[f,g,k,0]`
pub fn conv_temporal(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let ish = input.shape().to_vec();
    let ksh = kernels.shape().to_vec();
    if ish.len() != 4 || ksh.len() != 4 || ksh[3] != 1 {
        return Err(Error::ShapeMismatch(format!(
            "conv_temporal: input {ish:?}, kernels {ksh:?}"
        )));
    }
    let (b_n, g_n, t_n, c_n) = (ish[0], ish[1], ish[2], ish[3]);
    let (f_n, k_n) = (ksh[0], ksh[2]);
    if ksh[1] != g_n {
        return Err(Error::ShapeMismatch(format!(
            "conv_temporal: {} input features vs kernels {:?}",
            g_n, ksh
        )));
    }
    if bias.shape() != [f_n] {
        return Err(Error::ShapeMismatch(format!(
            "conv_temporal: bias {:?} vs {} filters",
            bias.shape(),
            f_n
        )));
    }
    if t_n < k_n {
        return Err(Error::ShapeMismatch(format!(
            "conv_temporal: T={t_n} shorter than kernel K={k_n}"
        )));
    }
    let t_out = t_n - k_n + 1;
    let gk = g_n * k_n;

    let mut out = vec![0.0; b_n * f_n * t_out * c_n];
    {
        let iv = input.values();
        let kv = kernels.values(); // [F, G*K] row-major
        let bv = bias.values();
        let mut col = vec![0.0; gk * t_out];
        let mut obuf = vec![0.0; f_n * t_out];
        for b in 0..b_n {
            for c in 0..c_n {
                gather_col(&iv, &mut col, b, c, g_n, t_n, c_n, k_n, t_out);
                linalg::matmul_nn(&kv, &col, f_n, gk, t_out, &mut obuf);
                for f in 0..f_n {
                    for t in 0..t_out {
                        out[((b * f_n + f) * t_out + t) * c_n + c] = obuf[f * t_out + t] + bv[f];
                    }
                }
            }
        }
    }

    Ok(Tensor::from_op(
        out,
        vec![b_n, f_n, t_out, c_n],
        vec![input.clone(), kernels.clone(), bias.clone()],
        Box::new(move |gout, inputs| {
            let iv = inputs[0].values();
            let kv = inputs[1].values();
            let need_input = inputs[0].needs_grad();

            let mut dinput = vec![0.0; b_n * g_n * t_n * c_n];
            let mut dker = vec![0.0; f_n * gk];
            let mut dbias = vec![0.0; f_n];
            let mut col = vec![0.0; gk * t_out];
            let mut colgrad = vec![0.0; gk * t_out];
            let mut gbuf = vec![0.0; f_n * t_out];
            let mut kpart = vec![0.0; f_n * gk];

            for b in 0..b_n {
                for c in 0..c_n {
                    for f in 0..f_n {
                        for t in 0..t_out {
                            gbuf[f * t_out + t] = gout[((b * f_n + f) * t_out + t) * c_n + c];
                        }
                    }
                    for f in 0..f_n {
                        for t in 0..t_out {
                            dbias[f] += gbuf[f * t_out + t];
                        }
                    }
                    gather_col(&iv, &mut col, b, c, g_n, t_n, c_n, k_n, t_out);
                    // dK += gbuf · col^T
                    linalg::matmul_nt(&gbuf, &col, f_n, t_out, gk, &mut kpart);
                    for (d, p) in dker.iter_mut().zip(kpart.iter()) {
                        *d += p;
                    }
                    if need_input {
                        // colgrad = kernels^T · gbuf, then scatter-add
                        colgrad.fill(0.0);
                        linalg::matmul_tn_acc(&kv, &gbuf, f_n, gk, t_out, &mut colgrad);
                        for g in 0..g_n {
                            for k in 0..k_n {
                                let row =
                                    &colgrad[(g * k_n + k) * t_out..(g * k_n + k + 1) * t_out];
                                for (t, &cg) in row.iter().enumerate() {
                                    dinput[((b * g_n + g) * t_n + (t + k)) * c_n + c] += cg;
                                }
                            }
                        }
                    }
                }
            }
            vec![
                if need_input { Some(dinput) } else { None },
                Some(dker),
                Some(dbias),
            ]
        }),
    ))
}

#[allow(clippy::too_many_arguments)]
fn gather_col(
    input: &[f64],
    col: &mut [f64],
    b: usize,
    c: usize,
    g_n: usize,
    t_n: usize,
    c_n: usize,
    k_n: usize,
    t_out: usize,
) {
    for g in 0..g_n {
        let base = (b * g_n + g) * t_n;
        for k in 0..k_n {
            let row = &mut col[(g * k_n + k) * t_out..(g * k_n + k + 1) * t_out];
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = input[(base + t + k) * c_n + c];
            }
        }
    }
}

/// LSTM cell parameters; the `4H` axis is ordered (i, f, g, o).
#[derive(Clone)]
pub struct LstmParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

/// One LSTM timestep. Built from primitives, so backpropagation through time
/// falls out of the graph when steps are chained.
pub fn lstm_step(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    params: &LstmParams,
) -> Result<(Tensor, Tensor)> {
    let (xs, hs) = (x.shape(), h.shape());
    if xs.len() != 2 || hs.len() != 2 || c.shape() != hs || xs[0] != hs[0] {
        return Err(Error::ShapeMismatch(format!(
            "lstm_step: x {:?}, h {:?}, c {:?}",
            xs,
            hs,
            c.shape()
        )));
    }
    let (d, hsz) = (xs[1], hs[1]);
    if params.w_ih.shape() != [4 * hsz, d]
        || params.w_hh.shape() != [4 * hsz, hsz]
        || params.bias.shape() != [4 * hsz]
    {
        return Err(Error::ShapeMismatch(format!(
            "lstm_step: params w_ih {:?} w_hh {:?} bias {:?} for D={d}, H={hsz}",
            params.w_ih.shape(),
            params.w_hh.shape(),
            params.bias.shape()
        )));
    }
    let pre = add_bias(
        &add(&matmul_nt(x, &params.w_ih)?, &matmul_nt(h, &params.w_hh)?)?,
        &params.bias,
    )?;
    let gate_i = logistic(&slice(&pre, 1, 0, hsz)?);
    let gate_f = logistic(&slice(&pre, 1, hsz, hsz)?);
    let gate_g = tanh(&slice(&pre, 1, 2 * hsz, hsz)?);
    let gate_o = logistic(&slice(&pre, 1, 3 * hsz, hsz)?);
    let c_next = add(&mul(&gate_f, c)?, &mul(&gate_i, &gate_g)?)?;
    let h_next = mul(&gate_o, &tanh(&c_next))?;
    Ok((h_next, c_next))
}

/// Per-row cross-entropy of logits against row-stochastic targets, computed
/// in log-sum-exp stabilized form. Returns a `[B]` tensor.
pub fn softmax_cross_entropy_rows(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    same_shape("softmax_cross_entropy", logits, targets)?;
    let sh = logits.shape();
    if sh.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "softmax_cross_entropy: expected [B, K], got {sh:?}"
        )));
    }
    let (b_n, k_n) = (sh[0], sh[1]);
    let lv = logits.to_vec();
    let tv = targets.to_vec();
    let mut probs = vec![0.0; b_n * k_n];
    let mut losses = vec![0.0; b_n];
    for b in 0..b_n {
        let row = &lv[b * k_n..(b + 1) * k_n];
        let trow = &tv[b * k_n..(b + 1) * k_n];
        let tsum: f64 = trow.iter().sum();
        if (tsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArg(format!(
                "non-stochastic target row {b}: sums to {tsum}"
            )));
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &l in row {
            z += (l - m).exp();
        }
        let lse = m + z.ln();
        let mut dot_tl = 0.0;
        for k in 0..k_n {
            probs[b * k_n + k] = (row[k] - lse).exp();
            dot_tl += trow[k] * row[k];
        }
        losses[b] = lse - dot_tl;
    }
    Ok(Tensor::from_op(
        losses,
        vec![b_n],
        vec![logits.clone(), targets.clone()],
        Box::new(move |g, inputs| {
            let lv = inputs[0].values();
            let tv = inputs[1].values();
            let mut dl = vec![0.0; b_n * k_n];
            for b in 0..b_n {
                for k in 0..k_n {
                    dl[b * k_n + k] = g[b] * (probs[b * k_n + k] - tv[b * k_n + k]);
                }
            }
            let dt = if inputs[1].needs_grad() {
                let mut dt = vec![0.0; b_n * k_n];
                for b in 0..b_n {
                    for k in 0..k_n {
                        dt[b * k_n + k] = -g[b] * lv[b * k_n + k];
                    }
                }
                Some(dt)
            } else {
                None
            };
            vec![Some(dl), dt]
        }),
    ))
}

/// Batch-mean cross-entropy; the gradient w.r.t. logits is `(softmax - target) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    Ok(mean(&softmax_cross_entropy_rows(logits, targets)?))
}

/// Row-stochastic softmax of the values (no graph; used for inspection).
pub fn softmax_values(logits: &Tensor) -> Result<Vec<f64>> {
    let sh = logits.shape();
    if sh.len() != 2 {
        return Err(Error::ShapeMismatch(format!("softmax: {sh:?}")));
    }
    let (b_n, k_n) = (sh[0], sh[1]);
    let lv = logits.values();
    let mut out = vec![0.0; b_n * k_n];
    for b in 0..b_n {
        let row = &lv[b * k_n..(b + 1) * k_n];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &l in row {
            z += (l - m).exp();
        }
        for k in 0..k_n {
            out[b * k_n + k] = (row[k] - m).exp() / z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::backward;

    fn t(values: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(values.to_vec(), shape.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        // K=1 kernel holding a single 1.0 reproduces the input exactly.
        let input = t(&[1.0, -2.0, 3.0, 0.5], &[1, 1, 4, 1]);
        let kernel = t(&[1.0], &[1, 1, 1, 1]);
        let bias = t(&[0.0], &[1]);
        let out = conv_temporal(&input, &kernel, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 1, 4, 1]);
        assert_eq!(out.to_vec(), input.to_vec());
    }

    #[test]
    fn conv_small_signal_by_hand() {
        // [1,2,3] * [1,1] -> [3,5]
        let input = t(&[1.0, 2.0, 3.0], &[1, 1, 3, 1]);
        let kernel = t(&[1.0, 1.0], &[1, 1, 2, 1]);
        let bias = t(&[0.0], &[1]);
        let out = conv_temporal(&input, &kernel, &bias).unwrap();
        assert_eq!(out.to_vec(), vec![3.0, 5.0]);
    }

    #[test]
    fn conv_zero_kernels_emit_bias() {
        let input = t(&[0.3, 0.7, -1.0, 2.0, 0.0, 1.0], &[1, 1, 3, 2]);
        let kernel = t(&[0.0, 0.0, 0.0, 0.0], &[2, 1, 2, 1]);
        let bias = t(&[5.0, -1.0], &[2]);
        let out = conv_temporal(&input, &kernel, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2, 2]);
        let v = out.to_vec();
        for f in 0..2 {
            for i in 0..4 {
                assert_eq!(v[f * 4 + i], bias.to_vec()[f]);
            }
        }
    }

    #[test]
    fn conv_multichannel_shares_kernels_across_sensor_axis() {
        // Two sensor channels, same temporal content shifted: each channel is
        // convolved independently with the same kernel.
        let input = t(&[1.0, 10.0, 2.0, 20.0, 3.0, 30.0], &[1, 1, 3, 2]);
        let kernel = t(&[1.0, 1.0], &[1, 1, 2, 1]);
        let bias = t(&[0.0], &[1]);
        let out = conv_temporal(&input, &kernel, &bias).unwrap();
        assert_eq!(out.to_vec(), vec![3.0, 30.0, 5.0, 50.0]);
    }

    #[test]
    fn lstm_zero_params_zero_cell() {
        let b = 2;
        let (d, h) = (3, 4);
        let x = t(&vec![0.5; b * d], &[b, d]);
        let h0 = Tensor::zeros(vec![b, h]);
        let c0 = Tensor::zeros(vec![b, h]);
        let params = LstmParams {
            w_ih: Tensor::zeros(vec![4 * h, d]),
            w_hh: Tensor::zeros(vec![4 * h, h]),
            bias: Tensor::zeros(vec![4 * h]),
        };
        let (h1, c1) = lstm_step(&x, &h0, &c0, &params).unwrap();
        assert!(c1.values().iter().all(|&v| v == 0.0));
        assert!(h1.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_zero_params_halves_cell() {
        // gates at logistic(0)=0.5, candidate tanh(0)=0:
        // c' = 0.5*c, h' = 0.5*tanh(0.5*c)
        let (b, d, h) = (1, 2, 3);
        let x = t(&[0.0, 0.0], &[b, d]);
        let h0 = Tensor::zeros(vec![b, h]);
        let cvals = [0.8, -1.2, 2.0];
        let c0 = t(&cvals, &[b, h]);
        let params = LstmParams {
            w_ih: Tensor::zeros(vec![4 * h, d]),
            w_hh: Tensor::zeros(vec![4 * h, h]),
            bias: Tensor::zeros(vec![4 * h]),
        };
        let (h1, c1) = lstm_step(&x, &h0, &c0, &params).unwrap();
        for (i, &c) in cvals.iter().enumerate() {
            assert!((c1.values()[i] - 0.5 * c).abs() < 1e-12);
            assert!((h1.values()[i] - 0.5 * (0.5 * c).tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_saturated_forget_gate_preserves_cell() {
        // forget bias 30 saturates the gate; with x=0 the cell carries over.
        let (b, d, h) = (1, 2, 2);
        let x = t(&[0.0, 0.0], &[b, d]);
        let h0 = Tensor::zeros(vec![b, h]);
        let c0 = t(&[0.7, -0.3], &[b, h]);
        let mut bias = vec![0.0; 4 * h];
        for i in h..2 * h {
            bias[i] = 30.0;
        }
        let params = LstmParams {
            w_ih: Tensor::zeros(vec![4 * h, d]),
            w_hh: Tensor::zeros(vec![4 * h, h]),
            bias: t(&bias, &[4 * h]),
        };
        let (_, c1) = lstm_step(&x, &h0, &c0, &params).unwrap();
        for (a, b) in c1.values().iter().zip(c0.values().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_identity_and_zero_weight() {
        let x = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let eye = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let zb = Tensor::zeros(vec![2]);
        assert_eq!(dense(&x, &eye, &zb).unwrap().to_vec(), x.to_vec());

        let zw = Tensor::zeros(vec![3, 2]);
        let b = t(&[5.0, 6.0, 7.0], &[3]);
        assert_eq!(
            dense(&x, &zw, &b).unwrap().to_vec(),
            vec![5.0, 6.0, 7.0, 5.0, 6.0, 7.0]
        );
    }

    #[test]
    fn dense_dot_product_by_hand() {
        let x = t(&[1.0, 2.0], &[1, 2]);
        let w = t(&[3.0, 4.0], &[1, 2]);
        let b = Tensor::zeros(vec![1]);
        assert_eq!(dense(&x, &w, &b).unwrap().to_vec(), vec![11.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        for k in [2usize, 5, 8] {
            let logits = Tensor::zeros(vec![1, k]);
            let mut target = vec![0.0; k];
            target[k - 1] = 0.25;
            target[0] = 0.75;
            let tt = t(&target, &[1, k]);
            let loss = softmax_cross_entropy(&logits, &tt).unwrap();
            assert!((loss.item() - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_is_prob_minus_target() {
        let k = 4;
        let logits = Tensor::param(vec![0.0; k], vec![1, k]).unwrap();
        let mut target = vec![0.0; k];
        target[1] = 1.0;
        let tt = t(&target, &[1, k]);
        let loss = softmax_cross_entropy(&logits, &tt).unwrap();
        backward(&loss).unwrap();
        let g = logits.grad().unwrap();
        for (i, gi) in g.iter().enumerate() {
            let expect = if i == 1 {
                1.0 / k as f64 - 1.0
            } else {
                1.0 / k as f64
            };
            assert!((gi - expect).abs() < 1e-12, "analytic p - y formula");
        }
    }

    #[test]
    fn cross_entropy_is_shift_invariant() {
        let logits_a = t(&[0.2, -1.0, 0.5, 3.0, 1.0, -2.0], &[2, 3]);
        let shifted: Vec<f64> = logits_a
            .to_vec()
            .chunks(3)
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |v| v + 10.0 * (r as f64 + 1.0)))
            .collect();
        let logits_b = t(&shifted, &[2, 3]);
        let targets = t(&[0.2, 0.3, 0.5, 1.0, 0.0, 0.0], &[2, 3]);
        let la = softmax_cross_entropy(&logits_a, &targets).unwrap();
        let lb = softmax_cross_entropy(&logits_b, &targets).unwrap();
        assert!((la.item() - lb.item()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_rejects_non_stochastic_rows() {
        let logits = Tensor::zeros(vec![1, 3]);
        let bad = t(&[0.5, 0.2, 0.2], &[1, 3]);
        assert!(softmax_cross_entropy(&logits, &bad).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = t(&[3.0, -5.0, 100.0, 0.1, 0.2, 0.3], &[2, 3]);
        let p = softmax_values(&logits).unwrap();
        for row in p.chunks(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_concat_round_trip() {
        let x = t(&(0..24).map(|i| i as f64).collect::<Vec<_>>(), &[2, 3, 4]);
        let a = slice(&x, 1, 0, 1).unwrap();
        let b = slice(&x, 1, 1, 2).unwrap();
        let back = concat(&[a, b], 1).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
        assert_eq!(back.shape(), x.shape());
    }

    #[test]
    fn transpose_round_trip_and_values() {
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let xt = transpose(&x, &[1, 0]).unwrap();
        assert_eq!(xt.shape(), &[3, 2]);
        assert_eq!(xt.to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let back = transpose(&xt, &[1, 0]).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
    }

    #[test]
    fn max_pairwise_ties_prefer_first() {
        let a = Tensor::param(vec![1.0, 2.0], vec![2]).unwrap();
        let b = Tensor::param(vec![1.0, 5.0], vec![2]).unwrap();
        let m = max_pairwise(&a, &b).unwrap();
        assert_eq!(m.to_vec(), vec![1.0, 5.0]);
        let loss = sum(&m);
        backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 0.0]); // tie at index 0 goes left
        assert_eq!(b.grad().unwrap(), vec![0.0, 1.0]);
    }
}
