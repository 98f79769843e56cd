//! Linear probe: multinomial logistic regression trained by full-batch
//! gradient descent on mean softmax cross-entropy. Arithmetic is in `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const INIT_STD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeHead {
    pub dim: usize,
    pub classes: usize,
    /// `dim × classes`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Loss before each update.
    pub train_log: Vec<f64>,
}

impl ProbeHead {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        ProbeHead {
            dim,
            classes,
            weight: vec![0.0; dim * classes],
            bias: vec![0.0; classes],
            train_log: Vec::new(),
        }
    }

    fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            let xi = xi as f64;
            let w = &self.weight[i * self.classes..(i + 1) * self.classes];
            for (o, wv) in out.iter_mut().zip(w) {
                *o += xi * wv;
            }
        }
    }

    /// Argmax class per row; ties go to the lower class index.
    pub fn predict(&self, features: &Matrix) -> Vec<usize> {
        let mut logits = vec![0.0; self.classes];
        features
            .iter_rows()
            .map(|row| {
                self.logits_into(row, &mut logits);
                let mut best = 0;
                for (c, &v) in logits.iter().enumerate() {
                    if v > logits[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn check_inputs(features: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::shape(
            "probe",
            format!("{} feature rows for {} labels", features.rows(), labels.len()),
        ));
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("probe features"));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid("labels", format!("label {l} out of range for {classes} classes")));
    }
    Ok(())
}

/// Mean cross-entropy and its gradient with respect to `(weight, bias)`.
pub fn loss_and_grad(head: &ProbeHead, features: &Matrix, labels: &[usize]) -> (f64, Vec<f64>, Vec<f64>) {
    let k = head.classes;
    let n = features.rows() as f64;
    let mut gw = vec![0.0; head.weight.len()];
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    let mut p = vec![0.0; k];
    for (row, &y) in features.iter_rows().zip(labels) {
        head.logits_into(row, &mut p);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in p.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in p.iter_mut() {
            *v /= sum;
        }
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        p[y] -= 1.0;
        for (i, &xi) in row.iter().enumerate() {
            let xi = xi as f64;
            for (g, &d) in gw[i * k..(i + 1) * k].iter_mut().zip(&p) {
                *g += xi * d;
            }
        }
        for (g, &d) in gb.iter_mut().zip(&p) {
            *g += d;
        }
    }
    gw.iter_mut().for_each(|g| *g /= n);
    gb.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb)
}

/// Train a probe head. Initial weights are N(0, 0.01²) from `seed`.
pub fn fit_head(features: &Matrix, labels: &[usize], classes: usize, epochs: usize, lr: f64, seed: u64) -> Result<ProbeHead> {
    check_inputs(features, labels, classes)?;
    let dim = features.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut head = ProbeHead::zeros(dim, classes);
    head.weight.iter_mut().for_each(|w| *w = normal.sample(&mut rng));

    for _ in 0..epochs {
        let (loss, gw, gb) = loss_and_grad(&head, features, labels);
        head.train_log.push(loss);
        for (w, g) in head.weight.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        for (b, g) in head.bias.iter_mut().zip(&gb) {
            *b -= lr * g;
        }
    }
    Ok(head)
}

/// Fraction of rows whose argmax matches the label.
pub fn probe_accuracy(head: &ProbeHead, features: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = head
        .predict(features)
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Per-column standardization fitted on training features.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

impl Standardizer {
    pub fn fit(features: &Matrix) -> Self {
        let (n, d) = features.shape();
        let mut mean = vec![0.0f64; d];
        for row in features.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; d];
        for row in features.iter_rows() {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let std = (v / n as f64).sqrt();
                if std > 1e-12 {
                    (1.0 / std) as f32
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            scale,
        }
    }

    pub fn apply(&self, features: &Matrix) -> Matrix {
        let mut out = features.clone();
        let cols = out.cols();
        for row in out.data_mut().chunks_exact_mut(cols) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn separable_two_class_reaches_full_accuracy() {
        let rows: Vec<Vec<f32>> = vec![
            vec![1.0, 2.0],
            vec![2.0, 1.5],
            vec![1.5, 3.0],
            vec![-1.0, -2.0],
            vec![-2.0, -0.5],
            vec![-0.5, -1.5],
        ];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let x = Matrix::from_rows(&rows).unwrap();
        let head = fit_head(&x, &labels, 2, 200, 0.1, 0).unwrap();
        assert_eq!(probe_accuracy(&head, &x, &labels), 1.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::new(5, 3, (0..15).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let labels = vec![0, 1, 2, 1, 0];
        let mut head = fit_head(&x, &labels, 3, 0, 0.1, 1).unwrap();
        for b in head.bias.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        for w in head.weight.iter_mut() {
            *w = rng.random_range(-0.5..0.5);
        }
        let (_, gw, gb) = loss_and_grad(&head, &x, &labels);
        let h = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for i in 0..head.weight.len() {
            let mut plus = head.clone();
            let mut minus = head.clone();
            plus.weight[i] += h;
            minus.weight[i] -= h;
            let fd = (loss_and_grad(&plus, &x, &labels).0 - loss_and_grad(&minus, &x, &labels).0) / (2.0 * h);
            assert!(rel(fd, gw[i]) < 1e-4, "w[{i}]: fd {fd} vs {}", gw[i]);
        }
        for i in 0..head.bias.len() {
            let mut plus = head.clone();
            let mut minus = head.clone();
            plus.bias[i] += h;
            minus.bias[i] -= h;
            let fd = (loss_and_grad(&plus, &x, &labels).0 - loss_and_grad(&minus, &x, &labels).0) / (2.0 * h);
            assert!(rel(fd, gb[i]) < 1e-4, "b[{i}]");
        }
    }

    #[test]
    fn accuracy_fixtures() {
        // Constant class-0 head on all-zero labels.
        let x = Matrix::zeros(4, 3);
        let head = ProbeHead::zeros(3, 5);
        assert_eq!(probe_accuracy(&head, &x, &[0, 0, 0, 0]), 1.0);

        // Identity head over one-hot-ish rows; predictions 0,1,2,1,0,2,2,1,0,0
        let mut head = ProbeHead::zeros(3, 3);
        for c in 0..3 {
            head.weight[c * 3 + c] = 1.0;
        }
        let rows: Vec<Vec<f32>> = [0, 1, 2, 1, 0, 2, 2, 1, 0, 0]
            .iter()
            .map(|&c| {
                let mut r = vec![0.0; 3];
                r[c] = 1.0;
                r
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let labels = [0, 1, 1, 1, 2, 2, 0, 1, 0, 2];
        // matches at positions 0, 1, 3, 5, 7, 8 → 6 of 10
        assert_eq!(probe_accuracy(&head, &x, &labels), 0.6);
    }

    #[test]
    fn ties_break_to_lower_class() {
        let head = ProbeHead::zeros(2, 4);
        assert_eq!(head.predict(&Matrix::zeros(1, 2)), vec![0]);
    }

    #[test]
    fn chance_level_on_random_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::new(1000, 4, (0..4000).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..1000).map(|_| rng.random_range(0..5)).collect();
        let mut head = ProbeHead::zeros(4, 5);
        head.weight.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        let acc = probe_accuracy(&head, &x, &labels);
        assert!((acc - 0.2).abs() < 0.05, "{acc}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut x = Matrix::zeros(2, 2);
        assert!(fit_head(&x, &[0], 2, 1, 0.1, 0).is_err());
        assert!(fit_head(&x, &[0, 3], 2, 1, 0.1, 0).is_err());
        x.set(0, 0, f32::NAN);
        assert!(matches!(fit_head(&x, &[0, 1], 2, 1, 0.1, 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn standardizer_centers_columns() {
        let x = Matrix::from_rows(&[vec![1.0, 10.0], vec![3.0, 10.0]]).unwrap();
        let s = Standardizer::fit(&x);
        let y = s.apply(&x);
        assert_eq!(y.row(0), &[-1.0, 0.0]);
        assert_eq!(y.row(1), &[1.0, 0.0]);
    }
}
