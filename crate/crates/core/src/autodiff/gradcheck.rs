//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward pass, so it is independent
//! of every backward rule it checks.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Norm-wise relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`,
    /// worst case over inputs. Zero when both gradients vanish.
    pub max_rel_error: f64,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares tape gradients of the scalar `f(inputs)` against central
/// differences with step `step`, probing every coordinate of every input.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, exec: Exec, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>> + Sync + Send,
{
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let root = f(&tape, &vars)?;
        let grads = tape.backward(root)?;
        vars.iter().map(|&v| grads.get(v)).collect::<Vec<_>>()
    };

    let eval = |which: usize, coord: usize, delta: f64| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                if i == which {
                    t.data_mut()[coord] += delta;
                }
                tape.param(t)
            })
            .collect();
        let root = f(&tape, &vars)?;
        root.value()
            .item()
            .ok_or_else(|| Error::NonScalarRoot(root.shape()))
    };

    let probes: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |c| (i, c)))
        .collect();
    let values = exec.map(&probes, |&(i, c)| -> Result<f64> {
        Ok((eval(i, c, step)? - eval(i, c, -step)?) / (2.0 * step))
    });

    let mut numeric: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (&(i, c), v) in probes.iter().zip(values) {
        numeric[i].data_mut()[c] = v?;
    }
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a.data(), n.data()))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        analytic,
        numeric,
    })
}
