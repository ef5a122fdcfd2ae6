//! Central finite-difference gradient checking.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Worst norm-relative disagreement between autodiff and central differences
/// over every parameter tensor.
///
/// `build` records a scalar loss on a fresh tape given leaf handles for
/// `params`, in order.
pub fn max_relative_error<F>(params: &[Tensor], step: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new(0);
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p)).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.item(loss))
    };

    let mut tape = Tape::new(0);
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        if !p.requires_grad() {
            continue;
        }
        let analytic = grads.wrt(vars[pi]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]);
        let mut numeric = vec![0.0; p.len()];
        for k in 0..p.len() {
            let orig = p.values()[k];
            work[pi].values_mut()[k] = orig + step;
            let up = eval(&work)?;
            work[pi].values_mut()[k] = orig - step;
            let down = eval(&work)?;
            work[pi].values_mut()[k] = orig;
            numeric[k] = (up - down) / (2.0 * step);
        }
        let diff = norm(analytic.iter().zip(&numeric).map(|(a, b)| a - b));
        let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
        let rel = if scale < 1e-12 { diff } else { diff / scale };
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|x| x * x).sum::<f64>().sqrt()
}
