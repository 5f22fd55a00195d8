//! Central-difference gradient verification.
//!
//! Every differentiable primitive is checked by comparing the reverse-mode
//! gradient against `(f(x + h) - f(x - h)) / 2h` elementwise.

use crate::numcore::tensor::{backward, no_grad, Tensor};
use crate::Result;

/// Relative error with an absolute floor so near-zero pairs compare sanely.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central finite differences of a scalar function at `x`.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe)?;
        probe[i] = x[i] - step;
        let minus = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Checks reverse-mode gradients of `build_loss` against finite differences
/// for every input, returning the worst relative error observed.
///
/// `build_loss` must produce a scalar from freshly built parameter tensors;
/// it is re-invoked for every probe point.
pub fn check_params(
    params: &[(Vec<f64>, Vec<usize>)],
    step: f64,
    build_loss: &mut dyn FnMut(&[Tensor]) -> Result<Tensor>,
) -> Result<f64> {
    let make = |vals: &[(Vec<f64>, Vec<usize>)]| -> Result<Vec<Tensor>> {
        vals.iter()
            .map(|(v, s)| Tensor::param(v.clone(), s.clone()))
            .collect()
    };

    let tensors = make(params)?;
    let loss = build_loss(&tensors)?;
    backward(&loss)?;
    let analytic: Vec<Vec<f64>> = tensors
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        let mut eval = |x: &[f64]| -> Result<f64> {
            let mut probe = params.to_vec();
            probe[pi].0 = x.to_vec();
            let tensors = make(&probe)?;
            no_grad(|| build_loss(&tensors).map(|l| l.item()))
        };
        let numeric = finite_difference_gradient(&mut eval, &params[pi].0, step)?;
        for (a, n) in analytic[pi].iter().zip(numeric.iter()) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops;

    #[test]
    fn quadratic_gradient_matches() {
        let params = vec![(vec![0.3, -1.2, 2.0], vec![3usize])];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            Ok(ops::sum(&ops::mul(&ts[0], &ts[0])?))
        })
        .unwrap();
        assert!(worst < 1e-8, "worst = {worst}");
    }

    #[test]
    fn tanh_chain_matches() {
        let params = vec![(vec![0.1, 0.5, -0.7, 1.1], vec![2usize, 2])];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            Ok(ops::mean(&ops::tanh(&ops::scale(&ts[0], 1.7))))
        })
        .unwrap();
        assert!(worst < 1e-7, "worst = {worst}");
    }

    #[test]
    fn relative_error_floors_near_zero() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-9, 0.0) < 1e-2);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }

    fn randv(n: usize, r: &mut impl rand::Rng) -> Vec<f64> {
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut r = crate::rng::stream(7, &[crate::rng::GRADCHECK, 0]);
        let params = vec![
            (randv(2 * 2 * 6 * 2, &mut r), vec![2usize, 2, 6, 2]),
            (randv(3 * 2 * 3, &mut r), vec![3usize, 2, 3, 1]),
            (randv(3, &mut r), vec![3usize]),
        ];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            Ok(ops::mean(&ops::tanh(&ops::conv_temporal(
                &ts[0], &ts[1], &ts[2],
            )?)))
        })
        .unwrap();
        assert!(worst < 1e-6, "worst = {worst}");
    }

    #[test]
    fn lstm_two_step_chain_matches_finite_differences() {
        let (b, d, h) = (2usize, 3usize, 4usize);
        let mut r = crate::rng::stream(11, &[crate::rng::GRADCHECK, 1]);
        let params = vec![
            (randv(b * d, &mut r), vec![b, d]),
            (randv(b * d, &mut r), vec![b, d]),
            (randv(4 * h * d, &mut r), vec![4 * h, d]),
            (randv(4 * h * h, &mut r), vec![4 * h, h]),
            (randv(4 * h, &mut r), vec![4 * h]),
        ];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            let p = ops::LstmParams {
                w_ih: ts[2].clone(),
                w_hh: ts[3].clone(),
                bias: ts[4].clone(),
            };
            let h0 = Tensor::zeros(vec![b, h]);
            let c0 = Tensor::zeros(vec![b, h]);
            let (h1, c1) = ops::lstm_step(&ts[0], &h0, &c0, &p)?;
            let (h2, _) = ops::lstm_step(&ts[1], &h1, &c1, &p)?;
            Ok(ops::mean(&ops::mul(&h2, &h2)?))
        })
        .unwrap();
        assert!(worst < 1e-6, "worst = {worst}");
    }

    #[test]
    fn matmul_bias_chain_matches_finite_differences() {
        let mut r = crate::rng::stream(3, &[crate::rng::GRADCHECK, 2]);
        let params = vec![
            (randv(6, &mut r), vec![2usize, 3]),
            (randv(12, &mut r), vec![4usize, 3]),
            (randv(4, &mut r), vec![4usize]),
        ];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            Ok(ops::sum(&ops::logistic(&ops::dense(
                &ts[0], &ts[1], &ts[2],
            )?)))
        })
        .unwrap();
        assert!(worst < 1e-6, "worst = {worst}");
    }

    #[test]
    fn cross_entropy_logit_gradients_match_finite_differences() {
        let mut r = crate::rng::stream(5, &[crate::rng::GRADCHECK, 3]);
        let params = vec![(randv(8, &mut r), vec![2usize, 4])];
        let targets = vec![0.1, 0.2, 0.3, 0.4, 1.0, 0.0, 0.0, 0.0];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            let tt = Tensor::from_vec(targets.clone(), vec![2, 4])?;
            ops::softmax_cross_entropy(&ts[0], &tt)
        })
        .unwrap();
        assert!(worst < 1e-6, "worst = {worst}");
    }

    #[test]
    fn shape_ops_compose_and_match_finite_differences() {
        let mut r = crate::rng::stream(13, &[crate::rng::GRADCHECK, 4]);
        let params = vec![
            (randv(12, &mut r), vec![3usize, 4]),
            (randv(12, &mut r), vec![3usize, 4]),
        ];
        let worst = check_params(&params, 1e-5, &mut |ts| {
            let m = ops::max_pairwise(&ts[0], &ts[1])?;
            let t = ops::transpose(&m, &[1, 0])?;
            let a = ops::slice(&t, 0, 0, 2)?;
            let b = ops::slice(&t, 0, 2, 2)?;
            let c = ops::concat(&[a, b], 1)?;
            let f = ops::reshape(&c, vec![12])?;
            Ok(ops::mean(&ops::relu(&f)))
        })
        .unwrap();
        assert!(worst < 1e-6, "worst = {worst}");
    }
}
