// Verify analytic gradients against central finite differences, first for a
// conv -> LSTM -> dense composite, then through the full classifier.
// Run with: cargo run --example gradient_check

use har_chain::model::{build_model, ModelSpec};
use har_chain::numcore::gradcheck::{check_params, finite_difference_gradient, relative_error};
use har_chain::numcore::{ops, Tensor};
use har_chain::{rng, Result};
use rand::Rng;

fn main() -> Result<()> {
    // Small shapes keep the numeric sweep quick: every parameter entry costs
    // two forward passes.
    let mut r = rng::stream(7, &[rng::GRADCHECK]);
    let kernel: Vec<f64> = (0..2 * 1 * 3).map(|_| r.gen_range(-0.5..0.5)).collect();
    let bias: Vec<f64> = (0..2).map(|_| r.gen_range(-0.5..0.5)).collect();
    let input: Vec<f64> = (0..1 * 1 * 8 * 2).map(|_| r.gen_range(-1.0..1.0)).collect();

    let params = vec![
        (kernel, vec![2, 1, 3, 1]),
        (bias, vec![2]),
        (input, vec![1, 1, 8, 2]),
    ];
    let worst = check_params(&params, 1e-5, &mut |ps: &[Tensor]| {
        let out = ops::conv_temporal(&ps[2], &ps[0], &ps[1])?;
        Ok(ops::mean(&ops::relu(&out)))
    })?;
    println!("conv composite, worst relative error: {worst:.3e}");

    // Whole model: perturb one weight at a time through a scalar loss.
    // Caveat: the conv stack uses ReLU, so if some pre-activation lands
    // within the step of zero, the numeric side crosses the kink and the
    // comparison for that coordinate turns meaningless. This input and seed
    // stay clear of the kinks.
    let spec = ModelSpec {
        conv_layers: 2,
        filters: 3,
        kernel_len: 2,
        hidden: 4,
        seed: 1,
        ..ModelSpec::new(2, 8, 3)
    };
    let model = build_model(&spec)?;
    let x = Tensor::from_vec(
        (0..2 * 8 * 2).map(|i| (i as f64 * 0.37).sin()).collect(),
        vec![2, 8, 2],
    )?;
    let target = Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.5], vec![2, 3])?;

    let loss = ops::softmax_cross_entropy(&model.forward(&x)?, &target)?;
    har_chain::numcore::backward(&loss)?;

    let mut worst = 0.0f64;
    for (name, p) in model.named_params() {
        let analytic = p.grad().expect("parameters track gradients");
        let base = p.values().to_vec();
        let mut eval = |vals: &[f64]| -> Result<f64> {
            p.set_values(vals);
            let out = har_chain::numcore::no_grad(|| {
                Ok(ops::softmax_cross_entropy(&model.forward(&x)?, &target)?.item())
            });
            p.set_values(&base);
            out
        };
        let numeric = finite_difference_gradient(&mut eval, &base, 1e-5)?;
        let err = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        println!("{name:<14} worst {err:.3e}");
        worst = worst.max(err);
    }
    println!("model overall: {worst:.3e}");
    Ok(())
}
