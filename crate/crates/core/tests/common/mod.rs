//! Finite-difference helpers shared by the gradient tests.
#![allow(dead_code)]

use inpaint_core::autograd::{Graph, Tensor, Var};
use inpaint_core::seed;
use rand::Rng;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-6;

pub fn random(shape: &[usize], rng: &mut impl Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Evaluate `build` on `inputs` and return the loss and, if asked, the
/// gradient of every input.
pub fn eval<F>(inputs: &[Tensor], build: &F, want_grad: bool) -> (f64, Vec<Vec<f64>>)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars);
    let value = g.value(loss).item();
    if !want_grad {
        return (value, Vec::new());
    }
    let grads = g.backward(loss).unwrap();
    let out = vars
        .iter()
        .map(|v| grads.get(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.value(*v).numel()]))
        .collect();
    (value, out)
}

/// Largest relative error between analytic and central-difference gradients.
pub fn max_rel_error<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let (_, analytic) = eval(inputs, &build, true);
    let mut worst: f64 = 0.0;
    for (ti, t) in inputs.iter().enumerate() {
        for i in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[ti].data_mut()[i] += EPS;
            let mut minus = inputs.to_vec();
            minus[ti].data_mut()[i] -= EPS;
            let numeric = (eval(&plus, &build, false).0 - eval(&minus, &build, false).0) / (2.0 * EPS);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Weighted sum of a tensor-valued output, so every element contributes a
/// distinct gradient.
pub fn project(g: &mut Graph, y: Var, seed: u64) -> Var {
    let shape = g.value(y).shape().to_vec();
    let w = random(&shape, &mut seed::rng(seed), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w).unwrap();
    g.sum(p)
}
