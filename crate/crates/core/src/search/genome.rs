use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{count_flops, count_params};
use crate::error::Result;
use crate::model::{ArchConfig, SearchSpace};
use crate::numerics::PrecisionMode;

/// One point of the joint space: architecture, merge ratio, precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub arch: ArchConfig,
    pub merge_r: usize,
    pub precision: PrecisionMode,
}

impl Genome {
    pub fn check(&self, space: &SearchSpace) -> Result<()> {
        space.check_arch(&self.arch)?;
        space.check_merge_r(self.merge_r)?;
        space.check_precision(self.precision)
    }

    /// Compact stable identity, used for caching and labels.
    pub fn key(&self) -> String {
        let heads: Vec<String> = self.arch.heads.iter().map(|h| h.to_string()).collect();
        let mlp: Vec<String> = self.arch.mlp_ratios.iter().map(|m| m.to_string()).collect();
        format!(
            "e{}-d{}-h{}-m{}-r{}-{}",
            self.arch.embed_dim,
            self.arch.depth,
            heads.join(";"),
            mlp.join(";"),
            self.merge_r,
            self.precision
        )
    }

    /// Cheapest member of the space: minimum architecture, largest merge
    /// ratio, first listed precision.
    pub fn cheapest(space: &SearchSpace) -> Genome {
        Genome {
            arch: space.min_arch(),
            merge_r: space.max_merge_ratio(),
            precision: space.precisions[0],
        }
    }
}

/// Optional hard limits on parameters (head excluded) and FLOPs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub flops: Option<u64>,
    pub params: Option<u64>,
}

impl Budgets {
    pub fn admits(&self, g: &Genome) -> bool {
        let flops_ok = self
            .flops
            .is_none_or(|b| count_flops(&g.arch, g.merge_r, g.arch.image_size) <= b);
        let params_ok = self.params.is_none_or(|b| count_params(&g.arch, false) <= b);
        flops_ok && params_ok
    }
}

fn pick<T: Copy, R: Rng + ?Sized>(values: &[T], rng: &mut R) -> T {
    values[rng.random_range(0..values.len())]
}

/// Uniform draw over every gene.
pub fn sample_genome<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Genome {
    let embed_dim = pick(&space.embed_dims, rng);
    let depth = rng.random_range(space.depth_min..=space.depth_max);
    let heads = (0..depth).map(|_| pick(&space.heads, rng)).collect();
    let mlp_ratios = (0..depth).map(|_| pick(&space.mlp_ratios, rng)).collect();
    Genome {
        arch: ArchConfig {
            image_size: space.image_size,
            patch_size: space.patch_size,
            channels: space.channels,
            embed_dim,
            depth,
            heads,
            mlp_ratios,
            num_classes: space.num_classes,
        },
        merge_r: pick(&space.merge_ratios, rng),
        precision: pick(&space.precisions, rng),
    }
}

/// Rejection attempts before falling back to [`Genome::cheapest`].
pub const MAX_RANDOM_DRAWS: usize = 10_000;

/// Uniform draw conditioned on the budgets.
pub fn sample_feasible<R: Rng + ?Sized>(space: &SearchSpace, budgets: &Budgets, rng: &mut R) -> Genome {
    for _ in 0..MAX_RANDOM_DRAWS {
        let g = sample_genome(space, rng);
        if budgets.admits(&g) {
            return g;
        }
    }
    Genome::cheapest(space)
}

/// Which axis a mutation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Architecture,
    Token,
    Precision,
}

fn resize_layers<R: Rng + ?Sized>(arch: &mut ArchConfig, depth: usize, space: &SearchSpace, rng: &mut R) {
    arch.heads.truncate(depth);
    arch.mlp_ratios.truncate(depth);
    while arch.heads.len() < depth {
        arch.heads.push(pick(&space.heads, rng));
        arch.mlp_ratios.push(pick(&space.mlp_ratios, rng));
    }
    arch.depth = depth;
}

/// Resample exactly one gene on `axis`.
///
/// Architecture genes are embed width, depth, and every per-layer head count
/// and MLP ratio; one of them is chosen uniformly.
pub fn mutate<R: Rng + ?Sized>(parent: &Genome, axis: Axis, space: &SearchSpace, rng: &mut R) -> Genome {
    let mut child = parent.clone();
    match axis {
        Axis::Token => child.merge_r = pick(&space.merge_ratios, rng),
        Axis::Precision => child.precision = pick(&space.precisions, rng),
        Axis::Architecture => {
            let depth = child.arch.depth;
            let gene = rng.random_range(0..2 + 2 * depth);
            match gene {
                0 => child.arch.embed_dim = pick(&space.embed_dims, rng),
                1 => {
                    let d = rng.random_range(space.depth_min..=space.depth_max);
                    resize_layers(&mut child.arch, d, space, rng);
                }
                g if g < 2 + depth => child.arch.heads[g - 2] = pick(&space.heads, rng),
                g => child.arch.mlp_ratios[g - 2 - depth] = pick(&space.mlp_ratios, rng),
            }
        }
    }
    child
}

/// Uniform crossover: every gene comes from either parent with equal odds.
/// Per-layer genes missing from the chosen parent come from the other one.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let either = |rng: &mut R| rng.random_bool(0.5);
    let embed_dim = if either(rng) { a.arch.embed_dim } else { b.arch.embed_dim };
    let depth = if either(rng) { a.arch.depth } else { b.arch.depth };
    let mut heads = Vec::with_capacity(depth);
    let mut mlp_ratios = Vec::with_capacity(depth);
    for l in 0..depth {
        let (first, second) = if either(rng) { (a, b) } else { (b, a) };
        let src = if l < first.arch.depth { first } else { second };
        heads.push(src.arch.heads[l]);
        let (first, second) = if either(rng) { (a, b) } else { (b, a) };
        let src = if l < first.arch.depth { first } else { second };
        mlp_ratios.push(src.arch.mlp_ratios[l]);
    }
    Genome {
        arch: ArchConfig {
            embed_dim,
            depth,
            heads,
            mlp_ratios,
            ..a.arch.clone()
        },
        merge_r: if either(rng) { a.merge_r } else { b.merge_r },
        precision: if either(rng) { a.precision } else { b.precision },
    }
}
