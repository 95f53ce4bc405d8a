use crate::error::{check_len, Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes `x` to zero mean and unit population variance, scales by `gain`
/// and shifts by `bias`.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_len("layer_norm gain", x.len(), gain.len())?;
    check_len("layer_norm bias", x.len(), bias.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("layer_norm eps must be > 0, got {eps}")));
    }
    if x.is_empty() {
        return Err(Error::Empty("layer_norm input"));
    }
    let mut xhat = vec![0.0; x.len()];
    normalize(x, eps, &mut xhat);
    Ok(xhat
        .iter()
        .zip(gain)
        .zip(bias)
        .map(|((&h, &g), &b)| g * h + b)
        .collect())
}

/// Writes `(x - mean) / sqrt(var + eps)` into `out` and returns the inverse std.
#[inline]
pub(crate) fn normalize(x: &[f64], eps: f64, out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}
