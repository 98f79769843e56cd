//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vitjoint::cost::CostReport;
use vitjoint::model::{ArchConfig, ModelWeights, NORM_EPS};
use vitjoint::numerics::{gelu, layer_norm, Matrix, PrecisionMode};
use vitjoint::search::{EvalRecord, Genome};

fn rows_times(a: &[Vec<f32>], w: &Matrix, bias: &[f32]) -> Vec<Vec<f32>> {
    a.iter()
        .map(|row| {
            (0..w.cols())
                .map(|j| {
                    let mut acc = 0.0f32;
                    for (p, &x) in row.iter().enumerate() {
                        acc += x * w.get(p, j);
                    }
                    acc + bias[j]
                })
                .collect()
        })
        .collect()
}

fn norm_rows(x: &[Vec<f32>], gamma: &[f32], beta: &[f32]) -> Vec<Vec<f32>> {
    x.iter().map(|r| layer_norm(r, gamma, beta, NORM_EPS).unwrap()).collect()
}

fn add_into(x: &mut [Vec<f32>], y: &[Vec<f32>]) {
    for (a, b) in x.iter_mut().zip(y) {
        for (u, v) in a.iter_mut().zip(b) {
            *u += v;
        }
    }
}

/// Plain single-precision ViT forward with no token merging machinery.
/// Returns the logits of one image.
#[allow(clippy::needless_range_loop)]
pub fn reference_logits(model: &ModelWeights, image: &[f32]) -> Vec<f32> {
    let arch = &model.arch;
    let w = &model.weights;
    let (p, s, g, d) = (arch.patch_size, arch.image_size, arch.grid(), arch.embed_dim);

    let mut patches = Vec::new();
    for gy in 0..g {
        for gx in 0..g {
            let mut v = Vec::new();
            for c in 0..arch.channels {
                for y in 0..p {
                    for x in 0..p {
                        v.push(image[c * s * s + (gy * p + y) * s + gx * p + x]);
                    }
                }
            }
            patches.push(v);
        }
    }
    let mut x = vec![w.cls_token.clone()];
    x.extend(rows_times(&patches, &w.patch_weight, &w.patch_bias));
    for (t, row) in x.iter_mut().enumerate() {
        for (v, pe) in row.iter_mut().zip(w.pos_embed.row(t)) {
            *v += pe;
        }
    }

    for (l, b) in w.blocks.iter().enumerate() {
        let n = x.len();
        let heads = arch.heads[l];
        let hd = d / heads;
        let scale = 1.0 / (hd as f32).sqrt();
        let h = norm_rows(&x, &b.norm1_gamma, &b.norm1_beta);
        let qkv = rows_times(&h, &b.qkv_weight, &b.qkv_bias);
        let mut concat = vec![vec![0.0f32; d]; n];
        for head in 0..heads {
            let q = |i: usize| &qkv[i][head * hd..(head + 1) * hd];
            let k = |i: usize| &qkv[i][d + head * hd..d + (head + 1) * hd];
            let v = |i: usize| &qkv[i][2 * d + head * hd..2 * d + (head + 1) * hd];
            for i in 0..n {
                let mut scores: Vec<f32> = (0..n)
                    .map(|j| {
                        let mut acc = 0.0f32;
                        for (a, c) in q(i).iter().zip(k(j)) {
                            acc += a * c;
                        }
                        acc * scale
                    })
                    .collect();
                let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0.0f32;
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    sum += *sc;
                }
                let inv = 1.0 / sum;
                scores.iter_mut().for_each(|sc| *sc *= inv);
                for c in 0..hd {
                    let mut acc = 0.0f32;
                    for (j, &a) in scores.iter().enumerate() {
                        acc += a * v(j)[c];
                    }
                    concat[i][head * hd + c] = acc;
                }
            }
        }
        let proj = rows_times(&concat, &b.proj_weight, &b.proj_bias);
        add_into(&mut x, &proj);
        let h = norm_rows(&x, &b.norm2_gamma, &b.norm2_beta);
        let mut hidden = rows_times(&h, &b.fc1_weight, &b.fc1_bias);
        hidden.iter_mut().flatten().for_each(|v| *v = gelu(*v));
        let out = rows_times(&hidden, &b.fc2_weight, &b.fc2_bias);
        add_into(&mut x, &out);
    }
    let feat = layer_norm(&x[0], &w.norm_gamma, &w.norm_beta, NORM_EPS).unwrap();
    rows_times(&[feat], &w.head_weight, &w.head_bias).remove(0)
}

/// All-pairs domination check: indices of records no other record beats on
/// both axes, keeping the first of exact duplicates, sorted by cost.
pub fn pareto_oracle(points: &[(f64, f64)]) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..points.len())
        .filter(|&i| {
            let (ai, ci) = points[i];
            !points.iter().enumerate().any(|(j, &(aj, cj))| {
                let dominates = aj >= ai && cj <= ci && (aj > ai || cj < ci);
                let earlier_twin = j < i && aj == ai && cj == ci;
                dominates || earlier_twin
            })
        })
        .collect();
    keep.sort_by(|&a, &b| points[a].1.total_cmp(&points[b].1));
    keep
}

/// Exhaustive edge oracle for merge selection in `f64`: every source's best
/// destination, then the strongest `r` edges.
pub fn merge_oracle(keys: &[Vec<f64>], r: usize) -> Vec<(usize, usize)> {
    let n = keys.len();
    let a: Vec<usize> = (1..n).step_by(2).collect();
    let b: Vec<usize> = (2..n).step_by(2).collect();
    if b.is_empty() {
        return Vec::new();
    }
    let cos = |i: usize, j: usize| {
        let dot: f64 = keys[i].iter().zip(&keys[j]).map(|(x, y)| x * y).sum();
        let ni: f64 = keys[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        let nj: f64 = keys[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (ni * nj)
    };
    let mut edges = Vec::new();
    for &i in &a {
        let mut best = b[0];
        for &j in &b {
            if cos(i, j) > cos(i, best) {
                best = j;
            }
        }
        edges.push((cos(i, best), i, best));
    }
    let mut all = edges.clone();
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let r = r.min(a.len()).min(n - 2);
    all.into_iter().take(r).map(|(_, i, j)| (i, j)).collect()
}

/// Largest |single − half| logit over the largest |single| logit.
pub fn relative_deviation(single: &[f32], half: &[f32]) -> f64 {
    let scale = single.iter().map(|v| v.abs() as f64).fold(0.0, f64::max);
    let diff = single
        .iter()
        .zip(half)
        .map(|(a, b)| (a - b).abs() as f64)
        .fold(0.0, f64::max);
    diff / scale
}

/// Synthetic records with the given accuracy and FLOPs.
pub fn records(points: &[(f64, u64)], arch: &ArchConfig) -> Vec<EvalRecord> {
    points
        .iter()
        .map(|&(accuracy, flops)| {
            let mut cost = CostReport::new(arch, 0, PrecisionMode::Single);
            cost.flops = flops;
            cost.energy_units = flops as f64;
            EvalRecord {
                genome: Genome {
                    arch: arch.clone(),
                    merge_r: 0,
                    precision: PrecisionMode::Single,
                },
                accuracy,
                cost,
                bench: None,
                eval_seed: 0,
            }
        })
        .collect()
}

/// Random record sets drawn from a small grid so ties and duplicates occur.
pub fn random_points(rng: &mut ChaCha8Rng, max: usize) -> Vec<(f64, u64)> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|_| (rng.random_range(0..20) as f64 / 20.0, rng.random_range(1..30u64) * 1000))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Image whose patch columns come in identical horizontal pairs.
pub fn paired_image(arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (s, p) = (arch.image_size, arch.patch_size);
    let mut img: Vec<f32> = (0..arch.image_len()).map(|_| rng.random::<f32>()).collect();
    for c in 0..arch.channels {
        for y in 0..s {
            for x in 0..s {
                let gx = x / p;
                if gx % 2 == 1 {
                    img[c * s * s + y * s + x] = img[c * s * s + y * s + x - p];
                }
            }
        }
    }
    img
}
