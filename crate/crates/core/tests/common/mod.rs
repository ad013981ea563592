#![allow(dead_code)]

use freqspoof_core::tensor::{init_normal, Tape, Var};
use freqspoof_core::Tensor;

/// Central-difference step.
pub const H: f64 = 1e-5;

pub fn randn(dims: &[usize], seed: u64) -> Tensor<f64> {
    init_normal(dims, 0.0, 1.0, seed).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)` in the Euclidean norm.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Reduces any tensor node to a scalar through a fixed random projection so
/// every output element contributes a distinct weight.
pub fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let n = tape.value(y).len();
    let flat = tape.reshape(y, &[1, n]).unwrap();
    let w = tape.constant(randn(&[n, 1], seed));
    let b = tape.constant(Tensor::zeros(&[1]));
    let out = tape.fully_connected(flat, w, b).unwrap();
    tape.reshape(out, &[1]).unwrap()
}

/// Compares tape gradients against central finite differences for every
/// input. `build` maps leaf vars to a scalar loss var.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F) -> Vec<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.leaf(v.clone())).collect();
        let l = build(&mut tape, &vars);
        tape.scalar(l)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();

    let mut errs = Vec::new();
    for (k, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = tape
            .grad(vars[k])
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        let mut numeric = vec![0.0; input.len()];
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            numeric[i] = (eval(&plus) - eval(&minus)) / (2.0 * H);
        }
        errs.push(rel_err(&analytic, &numeric));
    }
    errs
}
