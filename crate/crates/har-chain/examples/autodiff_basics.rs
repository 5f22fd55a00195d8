// Build a tiny expression graph, run backward, and read gradients.
// Run with: cargo run --example autodiff_basics

use har_chain::numcore::{backward, no_grad, ops, Tensor};
use har_chain::Result;

fn main() -> Result<()> {
    // z = mean(tanh(x * w)) for a 2x3 input and 3x1 weight (as 1x3 for the
    // transposed matmul). Parameters track gradients, plain tensors don't.
    let x = Tensor::from_vec(vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5], vec![2, 3])?;
    let w = Tensor::param(vec![0.1, -0.2, 0.3], vec![1, 3])?;

    let z = ops::mean(&ops::tanh(&ops::matmul_nt(&x, &w)?));
    println!("z = {:.6}", z.item());

    backward(&z)?;
    let g = w.grad().expect("w tracks gradients");
    println!(
        "dz/dw = {:?}",
        g.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()
    );

    // Check one component by bumping w[0] and re-evaluating without a graph.
    let eps = 1e-6;
    let eval = |w0: f64| -> Result<f64> {
        no_grad(|| {
            let w = Tensor::from_vec(vec![w0, -0.2, 0.3], vec![1, 3])?;
            let x = Tensor::from_vec(vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5], vec![2, 3])?;
            Ok(ops::mean(&ops::tanh(&ops::matmul_nt(&x, &w)?)).item())
        })
    };
    let numeric = (eval(0.1 + eps)? - eval(0.1 - eps)?) / (2.0 * eps);
    println!("dz/dw[0] analytic {:.8} vs numeric {:.8}", g[0], numeric);

    // Gradients accumulate when a parameter feeds the graph twice.
    let a = Tensor::param(vec![3.0], vec![1])?;
    let double = ops::add(&a, &a)?;
    backward(&double)?;
    println!("d(a+a)/da = {:?} (two paths, summed)", a.grad().unwrap());

    // A graph is consumed by backward; a second call reports the error
    // instead of silently returning stale numbers.
    let b = Tensor::param(vec![1.0], vec![1])?;
    let y = ops::scale(&b, 5.0);
    backward(&y)?;
    println!("second backward: {}", backward(&y).unwrap_err());
    Ok(())
}
