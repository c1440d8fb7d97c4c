use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

/// Partner row of row `i` under the `(a1, b1, a2, b2, …)` layout.
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// NT-Xent over `2N` projections laid out as `(a1, b1, a2, b2, …)`.
///
/// With `s_ik = cos(z_i, z_k) / τ`, the per-anchor loss is
/// `l(i, j) = −s_ij + ln Σ_{k≠i} exp(s_ik)` and the result is the mean of
/// `l` over all `2N` anchors with `j` the partner of `i`. The log-sum-exp
/// is max-shifted. For `N = 1` the sum holds only the positive and the
/// loss is exactly 0.
pub fn ntxent_loss<'t>(z: Var<'t>, temperature: f64) -> Result<Var<'t>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature {temperature} must be positive")));
    }
    let value = z.value();
    if value.rank() != 2 {
        return Err(Error::shape("ntxent", format!("expected a matrix, got {:?}", value.shape())));
    }
    let n = value.rows();
    if !n.is_multiple_of(2) {
        return Err(Error::shape("ntxent", format!("{n} rows cannot form view pairs")));
    }
    if let Some(row) = (0..n).find(|&i| value.row(i).iter().all(|&v| v == 0.0)) {
        return Err(Error::ZeroNorm { row });
    }
    let tape = z.tape();
    let unit = z.div(z.l2_norm(1)?)?;
    let sim = unit.matmul(unit.t()?)?.scale(1.0 / temperature)?;
    let denominator = sim.without_diagonal()?.logsumexp(1)?;
    let mut mask = vec![0.0; n * n];
    for i in 0..n {
        mask[i * n + partner(i)] = 1.0;
    }
    let positives = sim
        .mul(tape.constant(Tensor::from_parts(vec![n, n], mask)))?
        .sum_axis(1)?;
    denominator.sub(positives)?.mean()
}
