//! Finite-difference helpers for checking analytic gradients.

use crate::{NetworkParams, Result};

/// Central difference of `loss` with respect to every parameter.
pub fn numeric_param_grad<F>(net: &NetworkParams, h: f64, mut loss: F) -> Result<Vec<f64>>
where
    F: FnMut(&NetworkParams) -> Result<f64>,
{
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.len());
    for i in 0..net.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let plus = loss(&probe)?;
        probe.params_mut()[i] = orig - h;
        let minus = loss(&probe)?;
        probe.params_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Largest relative error `|a - n| / max(|a| + |n|, floor)` over all entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Weighted-sum loss `sum_t <w_t, y_t>` used by gradient checks.
pub fn linear_probe_loss(net: &NetworkParams, inputs: &[Vec<f64>], weights: &[Vec<f64>]) -> Result<f64> {
    let pass = net.forward(inputs, None, None)?;
    Ok(pass
        .outputs
        .iter()
        .zip(weights)
        .map(|(y, w)| y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .sum())
}
