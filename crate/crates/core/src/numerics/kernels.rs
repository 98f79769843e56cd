use crate::error::{Error, Result};

use super::Matrix;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    softmax_rows_inplace(&mut out);
    out
}

pub fn softmax_rows_inplace(m: &mut Matrix) {
    let cols = m.cols();
    for row in m.data_mut().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Layer normalization of one row with population variance.
pub fn layer_norm(x: &[f32], gamma: &[f32], beta: &[f32], eps: f32) -> Result<Vec<f32>> {
    let mut out = x.to_vec();
    layer_norm_inplace(&mut out, gamma, beta, eps)?;
    Ok(out)
}

fn layer_norm_inplace(x: &mut [f32], gamma: &[f32], beta: &[f32], eps: f32) -> Result<()> {
    if gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::shape(
            "layer_norm",
            format!("x={} gamma={} beta={}", x.len(), gamma.len(), beta.len()),
        ));
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps as f64).sqrt();
    for ((v, g), b) in x.iter_mut().zip(gamma).zip(beta) {
        *v = ((*v as f64 - mean) * inv_std) as f32 * g + b;
    }
    Ok(())
}

/// [`layer_norm`] applied to every row.
pub fn layer_norm_rows(m: &Matrix, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Matrix> {
    let mut out = m.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        layer_norm_inplace(row, gamma, beta, eps)?;
    }
    Ok(out)
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}
