//! Supernet weight store and prefix-slice subnet extraction.
//!
//! The supernet holds every tensor at the maximum dimensions of its search
//! space. A subnet takes the leading sub-block of each tensor along every
//! sliced axis, so all candidate architectures share (are "entangled" with)
//! the same underlying values.
//!
//! The fused QKV projection is laid out as three column blocks `[q | k | v]`
//! of width `max_embed` each; slicing keeps the first `embed_dim` columns of
//! each block.
//!
//! Initialization: every tensor gets its own ChaCha8 stream seeded with
//! FNV-1a-64 over `seed.to_le_bytes() ++ tensor_name`. Weight matrices and
//! the class/position embeddings are drawn from N(0, 0.02²) truncated to
//! ±2σ by rejection; biases are zero and norm scales are one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ArchConfig, SearchSpace};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, PrecisionMode};

pub const INIT_STD: f32 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub norm1_gamma: Vec<f32>,
    pub norm1_beta: Vec<f32>,
    pub qkv_weight: Matrix,
    pub qkv_bias: Vec<f32>,
    pub proj_weight: Matrix,
    pub proj_bias: Vec<f32>,
    pub norm2_gamma: Vec<f32>,
    pub norm2_beta: Vec<f32>,
    pub fc1_weight: Matrix,
    pub fc1_bias: Vec<f32>,
    pub fc2_weight: Matrix,
    pub fc2_bias: Vec<f32>,
}

/// Every tensor of a ViT, row-major, activations multiply from the left.
#[derive(Clone, Debug, PartialEq)]
pub struct VitWeights {
    pub patch_weight: Matrix,
    pub patch_bias: Vec<f32>,
    pub cls_token: Vec<f32>,
    pub pos_embed: Matrix,
    pub blocks: Vec<BlockWeights>,
    pub norm_gamma: Vec<f32>,
    pub norm_beta: Vec<f32>,
    pub head_weight: Matrix,
    pub head_bias: Vec<f32>,
}

/// Borrowed view of one named tensor.
#[derive(Debug)]
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f32],
}

fn vector(name: String, v: &[f32]) -> NamedTensor<'_> {
    NamedTensor {
        name,
        shape: (1, v.len()),
        data: v,
    }
}

fn matrix(name: String, m: &Matrix) -> NamedTensor<'_> {
    NamedTensor {
        name,
        shape: m.shape(),
        data: m.data(),
    }
}

impl VitWeights {
    /// All tensors in a fixed order with stable names.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = vec![
            matrix("patch_embed.weight".into(), &self.patch_weight),
            vector("patch_embed.bias".into(), &self.patch_bias),
            vector("cls_token".into(), &self.cls_token),
            matrix("pos_embed".into(), &self.pos_embed),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{l}");
            out.push(vector(format!("{p}.norm1.weight"), &b.norm1_gamma));
            out.push(vector(format!("{p}.norm1.bias"), &b.norm1_beta));
            out.push(matrix(format!("{p}.attn.qkv.weight"), &b.qkv_weight));
            out.push(vector(format!("{p}.attn.qkv.bias"), &b.qkv_bias));
            out.push(matrix(format!("{p}.attn.proj.weight"), &b.proj_weight));
            out.push(vector(format!("{p}.attn.proj.bias"), &b.proj_bias));
            out.push(vector(format!("{p}.norm2.weight"), &b.norm2_gamma));
            out.push(vector(format!("{p}.norm2.bias"), &b.norm2_beta));
            out.push(matrix(format!("{p}.mlp.fc1.weight"), &b.fc1_weight));
            out.push(vector(format!("{p}.mlp.fc1.bias"), &b.fc1_bias));
            out.push(matrix(format!("{p}.mlp.fc2.weight"), &b.fc2_weight));
            out.push(vector(format!("{p}.mlp.fc2.bias"), &b.fc2_bias));
        }
        out.push(vector("norm.weight".into(), &self.norm_gamma));
        out.push(vector("norm.bias".into(), &self.norm_beta));
        out.push(matrix("head.weight".into(), &self.head_weight));
        out.push(vector("head.bias".into(), &self.head_bias));
        out
    }

    /// Total number of scalars, head included.
    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn for_each_buffer(&mut self, mut f: impl FnMut(&mut [f32])) {
        f(self.patch_weight.data_mut());
        f(&mut self.patch_bias);
        f(&mut self.cls_token);
        f(self.pos_embed.data_mut());
        for b in &mut self.blocks {
            f(&mut b.norm1_gamma);
            f(&mut b.norm1_beta);
            f(b.qkv_weight.data_mut());
            f(&mut b.qkv_bias);
            f(b.proj_weight.data_mut());
            f(&mut b.proj_bias);
            f(&mut b.norm2_gamma);
            f(&mut b.norm2_beta);
            f(b.fc1_weight.data_mut());
            f(&mut b.fc1_bias);
            f(b.fc2_weight.data_mut());
            f(&mut b.fc2_bias);
        }
        f(&mut self.norm_gamma);
        f(&mut self.norm_beta);
        f(self.head_weight.data_mut());
        f(&mut self.head_bias);
    }

    /// Round every tensor for `precision` (no-op in single mode).
    pub fn apply_precision(&mut self, precision: PrecisionMode) {
        if precision == PrecisionMode::Half {
            self.for_each_buffer(|buf| precision.apply(buf));
        }
    }
}

/// Maximum-dimension weight store shared by every architecture in a space.
#[derive(Clone, Debug, PartialEq)]
pub struct SupernetWeights {
    pub space: SearchSpace,
    pub seed: u64,
    pub weights: VitWeights,
}

/// Weights of one extracted architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub arch: ArchConfig,
    pub weights: VitWeights,
}

struct Init {
    seed: u64,
}

impl Init {
    fn stream(&self, name: &str) -> ChaCha8Rng {
        let key = crate::seed::derive_seed(self.seed, name);
        ChaCha8Rng::seed_from_u64(key)
    }

    fn trunc_normal(&self, name: &str, len: usize) -> Vec<f32> {
        let mut rng = self.stream(name);
        let normal = Normal::new(0.0f32, INIT_STD).expect("positive std");
        let bound = 2.0 * INIT_STD;
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let v = normal.sample(&mut rng);
            if v.abs() <= bound {
                out.push(v);
            }
        }
        out
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, self.trunc_normal(name, rows * cols)).expect("sized buffer")
    }
}

/// Deterministically initialize the supernet of `space`.
pub fn build_supernet(space: &SearchSpace, seed: u64) -> Result<SupernetWeights> {
    space.validate()?;
    let max = space.max_arch();
    let d = max.embed_dim;
    let h = space.max_mlp_hidden();
    let init = Init { seed };

    let blocks = (0..max.depth)
        .map(|l| {
            let p = format!("blocks.{l}");
            BlockWeights {
                norm1_gamma: vec![1.0; d],
                norm1_beta: vec![0.0; d],
                qkv_weight: init.matrix(&format!("{p}.attn.qkv.weight"), d, 3 * d),
                qkv_bias: vec![0.0; 3 * d],
                proj_weight: init.matrix(&format!("{p}.attn.proj.weight"), d, d),
                proj_bias: vec![0.0; d],
                norm2_gamma: vec![1.0; d],
                norm2_beta: vec![0.0; d],
                fc1_weight: init.matrix(&format!("{p}.mlp.fc1.weight"), d, h),
                fc1_bias: vec![0.0; h],
                fc2_weight: init.matrix(&format!("{p}.mlp.fc2.weight"), h, d),
                fc2_bias: vec![0.0; d],
            }
        })
        .collect();

    let weights = VitWeights {
        patch_weight: init.matrix("patch_embed.weight", max.patch_dim(), d),
        patch_bias: vec![0.0; d],
        cls_token: init.trunc_normal("cls_token", d),
        pos_embed: init.matrix("pos_embed", max.num_tokens(), d),
        blocks,
        norm_gamma: vec![1.0; d],
        norm_beta: vec![0.0; d],
        head_weight: init.matrix("head.weight", d, space.num_classes),
        head_bias: vec![0.0; space.num_classes],
    };
    Ok(SupernetWeights {
        space: space.clone(),
        seed,
        weights,
    })
}

fn qkv_prefix(m: &Matrix, rows: usize, width: usize, max_width: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows * 3 * width);
    for r in 0..rows {
        let row = m.row(r);
        for part in 0..3 {
            data.extend_from_slice(&row[part * max_width..part * max_width + width]);
        }
    }
    Matrix::new(rows, 3 * width, data)
}

fn qkv_bias_prefix(b: &[f32], width: usize, max_width: usize) -> Vec<f32> {
    (0..3)
        .flat_map(|part| b[part * max_width..part * max_width + width].iter().copied())
        .collect()
}

/// Slice the weights of `arch` out of `supernet`.
pub fn extract_subnet(supernet: &SupernetWeights, arch: &ArchConfig) -> Result<ModelWeights> {
    supernet.space.check_arch(arch)?;
    let sw = &supernet.weights;
    let d = arch.embed_dim;
    let d_max = sw.norm_gamma.len();
    if sw.blocks.len() < arch.depth {
        return Err(Error::outside("depth", "deeper than the supernet"));
    }

    let blocks = sw.blocks[..arch.depth]
        .iter()
        .enumerate()
        .map(|(l, b)| {
            let hidden = arch.mlp_hidden(l);
            Ok(BlockWeights {
                norm1_gamma: b.norm1_gamma[..d].to_vec(),
                norm1_beta: b.norm1_beta[..d].to_vec(),
                qkv_weight: qkv_prefix(&b.qkv_weight, d, d, d_max)?,
                qkv_bias: qkv_bias_prefix(&b.qkv_bias, d, d_max),
                proj_weight: b.proj_weight.prefix(d, d)?,
                proj_bias: b.proj_bias[..d].to_vec(),
                norm2_gamma: b.norm2_gamma[..d].to_vec(),
                norm2_beta: b.norm2_beta[..d].to_vec(),
                fc1_weight: b.fc1_weight.prefix(d, hidden)?,
                fc1_bias: b.fc1_bias[..hidden].to_vec(),
                fc2_weight: b.fc2_weight.prefix(hidden, d)?,
                fc2_bias: b.fc2_bias[..d].to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let weights = VitWeights {
        patch_weight: sw.patch_weight.prefix(arch.patch_dim(), d)?,
        patch_bias: sw.patch_bias[..d].to_vec(),
        cls_token: sw.cls_token[..d].to_vec(),
        pos_embed: sw.pos_embed.prefix(arch.num_tokens(), d)?,
        blocks,
        norm_gamma: sw.norm_gamma[..d].to_vec(),
        norm_beta: sw.norm_beta[..d].to_vec(),
        head_weight: sw.head_weight.prefix(d, arch.num_classes)?,
        head_bias: sw.head_bias[..arch.num_classes].to_vec(),
    };
    Ok(ModelWeights {
        arch: arch.clone(),
        weights,
    })
}
