//! Analytic cost model and wall-clock throughput harness.
//!
//! FLOPs follow the MAC convention: one multiply-accumulate is one FLOP, only
//! matmuls are counted (patch embedding, QKV, attention scores, attention
//! times values, output projection, both MLP layers), and the classification
//! head is left out. Attention terms use the token count entering a block;
//! MLP terms use the count after that block's merge.
//!
//! Parameters exclude the classification head unless asked for.
//!
//! The energy proxy is `flops × κ` with κ = 1 for single precision and 0.5
//! for half. It is a relative, dimensionless number, never joules.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{forward, ArchConfig, ModelWeights};
use crate::numerics::{OpCounter, PrecisionMode};
use crate::tome::token_schedule;

/// Identifies the counting convention in reports.
pub const CONVENTION_TAG: &str = "mac-matmul-nohead-x1";

pub fn count_params(arch: &ArchConfig, include_head: bool) -> u64 {
    let d = arch.embed_dim as u64;
    let mut p = arch.patch_dim() as u64 * d + d // patch embedding
        + d // class token
        + arch.num_tokens() as u64 * d // position embedding
        + 2 * d; // final norm
    for l in 0..arch.depth {
        let h = arch.mlp_hidden(l) as u64;
        p += 3 * d * d + 3 * d // qkv
            + d * d + d // proj
            + d * h + h + h * d + d // mlp
            + 4 * d; // two norms
    }
    if include_head {
        p += d * arch.num_classes as u64 + arch.num_classes as u64;
    }
    p
}

/// FLOPs split into the patch embedding and each block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlopsBreakdown {
    pub patch_embed: u64,
    pub per_layer: Vec<u64>,
}

impl FlopsBreakdown {
    pub fn total(&self) -> u64 {
        self.patch_embed + self.per_layer.iter().sum::<u64>()
    }
}

pub fn flops_breakdown(arch: &ArchConfig, merge_r: usize, image_size: usize) -> FlopsBreakdown {
    let grid = (image_size / arch.patch_size) as u64;
    let patches = grid * grid;
    let d = arch.embed_dim as u64;
    let schedule = token_schedule(patches as usize + 1, arch.depth, merge_r);
    let per_layer = (0..arch.depth)
        .map(|l| {
            let n = schedule[l] as u64;
            let m = schedule[l + 1] as u64;
            let h = arch.mlp_hidden(l) as u64;
            3 * n * d * d // qkv
                + 2 * n * n * d // scores and attention × values, summed over heads
                + n * d * d // proj
                + 2 * m * d * h // fc1 + fc2
        })
        .collect();
    FlopsBreakdown {
        patch_embed: patches * arch.patch_dim() as u64 * d,
        per_layer,
    }
}

pub fn count_flops(arch: &ArchConfig, merge_r: usize, image_size: usize) -> u64 {
    flops_breakdown(arch, merge_r, image_size).total()
}

pub fn energy_coefficient(precision: PrecisionMode) -> f64 {
    match precision {
        PrecisionMode::Single => 1.0,
        PrecisionMode::Half => 0.5,
    }
}

pub fn energy_proxy(arch: &ArchConfig, merge_r: usize, precision: PrecisionMode) -> f64 {
    count_flops(arch, merge_r, arch.image_size) as f64 * energy_coefficient(precision)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub flops: u64,
    pub energy_units: f64,
    pub convention_tag: String,
}

impl CostReport {
    pub fn new(arch: &ArchConfig, merge_r: usize, precision: PrecisionMode) -> Self {
        CostReport {
            params: count_params(arch, false),
            flops: count_flops(arch, merge_r, arch.image_size),
            energy_units: energy_proxy(arch, merge_r, precision),
            convention_tag: CONVENTION_TAG.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub fps: f64,
    pub wall_ms_per_batch: Vec<f64>,
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub batch: usize,
}

impl BenchResult {
    /// Throughput from recorded per-iteration times.
    pub fn from_timings(batch: usize, warmup_iters: usize, wall_ms_per_batch: Vec<f64>) -> Self {
        let seconds: f64 = wall_ms_per_batch.iter().sum::<f64>() / 1e3;
        let timed_iters = wall_ms_per_batch.len();
        BenchResult {
            fps: (batch * timed_iters) as f64 / seconds,
            wall_ms_per_batch,
            warmup_iters,
            timed_iters,
            batch,
        }
    }
}

/// Uniform `[0, 1)` images for benchmarking.
pub fn random_images(arch: &ArchConfig, batch: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch)
        .map(|_| (0..arch.image_len()).map(|_| rng.random::<f32>()).collect())
        .collect()
}

/// Time `timed_iters` forward passes after `warmup_iters` discarded ones.
///
/// Runs on the calling thread only.
pub fn measure_throughput(
    weights: &ModelWeights,
    merge_r: usize,
    precision: PrecisionMode,
    batch: usize,
    warmup_iters: usize,
    timed_iters: usize,
    seed: u64,
) -> crate::Result<BenchResult> {
    if timed_iters == 0 {
        return Err(crate::Error::invalid("timed_iters", "must be at least 1"));
    }
    if batch == 0 {
        return Err(crate::Error::invalid("batch", "must be at least 1"));
    }
    let images = random_images(&weights.arch, batch, seed);
    let mut counter = OpCounter::disabled();
    for _ in 0..warmup_iters {
        std::hint::black_box(forward(weights, &images, merge_r, precision, &mut counter)?);
    }
    let mut wall = Vec::with_capacity(timed_iters);
    for _ in 0..timed_iters {
        let t = Instant::now();
        std::hint::black_box(forward(weights, &images, merge_r, precision, &mut counter)?);
        wall.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(BenchResult::from_timings(batch, warmup_iters, wall))
}
