use crate::error::{Error, Result};
use crate::numerics::{gelu, layer_norm_rows, matmul, matmul_transposed, softmax_rows_inplace, Matrix, OpCounter, PrecisionMode};
use crate::tome::{apply_merge, bipartite_soft_match, proportional_attention_bias, TokenState};

use super::weights::{BlockWeights, ModelWeights, VitWeights};
use super::ArchConfig;

pub const NORM_EPS: f32 = 1e-6;

/// Token counts observed during a forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardTrace {
    /// Tokens entering each block, then the count leaving the last block.
    pub tokens_per_layer: Vec<usize>,
    /// MACs recorded on the caller's counter during this call.
    pub mac_count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub logits: Matrix,
    /// Final-norm class-token embedding per image.
    pub features: Matrix,
    pub trace: ForwardTrace,
}

/// Flatten a CHW image into one row per patch, patches in raster order,
/// each patch laid out as `(channel, y, x)`.
pub fn patchify(arch: &ArchConfig, image: &[f32]) -> Result<Matrix> {
    if image.len() != arch.image_len() {
        return Err(Error::shape(
            "patchify",
            format!("image has {} values, arch expects {}", image.len(), arch.image_len()),
        ));
    }
    let (p, s, g) = (arch.patch_size, arch.image_size, arch.grid());
    let mut data = Vec::with_capacity(arch.num_patches() * arch.patch_dim());
    for gy in 0..g {
        for gx in 0..g {
            for c in 0..arch.channels {
                for y in 0..p {
                    let start = c * s * s + (gy * p + y) * s + gx * p;
                    data.extend_from_slice(&image[start..start + p]);
                }
            }
        }
    }
    Matrix::new(arch.num_patches(), arch.patch_dim(), data)
}

/// Patch embedding, class token and position embedding.
pub fn embed(w: &VitWeights, arch: &ArchConfig, image: &[f32], precision: PrecisionMode, counter: &mut OpCounter) -> Result<Matrix> {
    let patches = patchify(arch, image)?;
    let mut x = matmul(&patches, &w.patch_weight, counter)?;
    x.add_row_vector(&w.patch_bias)?;
    precision.apply_matrix(&mut x);

    let d = arch.embed_dim;
    let mut data = Vec::with_capacity(arch.num_tokens() * d);
    data.extend_from_slice(&w.cls_token);
    data.extend_from_slice(x.data());
    let mut tokens = Matrix::new(arch.num_tokens(), d, data)?;
    tokens.add_assign(&w.pos_embed)?;
    precision.apply_matrix(&mut tokens);
    Ok(tokens)
}

/// Multi-head self-attention with the size bias. Returns the projected
/// output and the head-averaged keys used for merge matching.
pub fn attention(
    block: &BlockWeights,
    x: &Matrix,
    sizes: &[u32],
    heads: usize,
    precision: PrecisionMode,
    counter: &mut OpCounter,
) -> Result<(Matrix, Matrix)> {
    let (n, d) = x.shape();
    let hd = d / heads;
    let scale = 1.0 / (hd as f32).sqrt();

    let mut h = layer_norm_rows(x, &block.norm1_gamma, &block.norm1_beta, NORM_EPS)?;
    precision.apply_matrix(&mut h);
    let mut qkv = matmul(&h, &block.qkv_weight, counter)?;
    qkv.add_row_vector(&block.qkv_bias)?;
    precision.apply_matrix(&mut qkv);

    let bias = proportional_attention_bias(sizes);
    let mut concat = Matrix::zeros(n, d);
    let mut key_mean = Matrix::zeros(n, hd);
    for head in 0..heads {
        let q = qkv.column_block(head * hd, hd)?;
        let k = qkv.column_block(d + head * hd, hd)?;
        let v = qkv.column_block(2 * d + head * hd, hd)?;

        let mut scores = matmul_transposed(&q, &k, counter)?;
        for r in 0..n {
            for (s, b) in scores.row_mut(r).iter_mut().zip(&bias) {
                *s = *s * scale + b;
            }
        }
        precision.apply_matrix(&mut scores);
        softmax_rows_inplace(&mut scores);
        precision.apply_matrix(&mut scores);

        let mut out = matmul(&scores, &v, counter)?;
        precision.apply_matrix(&mut out);
        for r in 0..n {
            concat.row_mut(r)[head * hd..(head + 1) * hd].copy_from_slice(out.row(r));
            for (m, kv) in key_mean.row_mut(r).iter_mut().zip(k.row(r)) {
                *m += kv;
            }
        }
    }
    let inv_heads = 1.0 / heads as f32;
    key_mean.map_inplace(|v| v * inv_heads);

    let mut proj = matmul(&concat, &block.proj_weight, counter)?;
    proj.add_row_vector(&block.proj_bias)?;
    precision.apply_matrix(&mut proj);
    Ok((proj, key_mean))
}

pub fn mlp(block: &BlockWeights, x: &Matrix, precision: PrecisionMode, counter: &mut OpCounter) -> Result<Matrix> {
    let mut h = layer_norm_rows(x, &block.norm2_gamma, &block.norm2_beta, NORM_EPS)?;
    precision.apply_matrix(&mut h);
    let mut hidden = matmul(&h, &block.fc1_weight, counter)?;
    hidden.add_row_vector(&block.fc1_bias)?;
    precision.apply_matrix(&mut hidden);
    hidden.map_inplace(gelu);
    precision.apply_matrix(&mut hidden);
    let mut out = matmul(&hidden, &block.fc2_weight, counter)?;
    out.add_row_vector(&block.fc2_bias)?;
    precision.apply_matrix(&mut out);
    Ok(out)
}

/// One image through the backbone. Returns the pre-norm class row and the
/// token counts entering each block (plus the final count).
fn backbone(
    w: &VitWeights,
    arch: &ArchConfig,
    image: &[f32],
    merge_r: usize,
    precision: PrecisionMode,
    counter: &mut OpCounter,
) -> Result<(Vec<f32>, Vec<usize>)> {
    let tokens = embed(w, arch, image, precision, counter)?;
    let mut state = TokenState::new(tokens);
    let mut schedule = Vec::with_capacity(arch.depth + 1);
    for (l, block) in w.blocks.iter().enumerate() {
        schedule.push(state.len());
        let (attn, keys) = attention(block, &state.features, &state.sizes, arch.heads[l], precision, counter)?;
        state.features.add_assign(&attn)?;
        precision.apply_matrix(&mut state.features);

        if merge_r > 0 && l + 1 < arch.depth {
            let plan = bipartite_soft_match(&keys, &state, merge_r);
            state = apply_merge(&state, &plan)?;
            precision.apply_matrix(&mut state.features);
        }

        let m = mlp(block, &state.features, precision, counter)?;
        state.features.add_assign(&m)?;
        precision.apply_matrix(&mut state.features);
    }
    schedule.push(state.len());
    Ok((state.features.row(0).to_vec(), schedule))
}

/// Batched forward pass.
///
/// Each image runs independently (merge plans are per image). Token merging
/// happens between attention and MLP of every block but the last. In half
/// mode the weights are rounded once on entry and every kernel output is
/// rounded through binary16. The classification head is not recorded on
/// `counter`.
pub fn forward<I: AsRef<[f32]>>(
    weights: &ModelWeights,
    images: &[I],
    merge_r: usize,
    precision: PrecisionMode,
    counter: &mut OpCounter,
) -> Result<ForwardOutput> {
    if images.is_empty() {
        return Err(Error::Empty("forward"));
    }
    let arch = &weights.arch;
    let rounded;
    let w = if precision == PrecisionMode::Half {
        let mut copy = weights.weights.clone();
        copy.apply_precision(precision);
        rounded = copy;
        &rounded
    } else {
        &weights.weights
    };

    let start = counter.mac_count();
    let d = arch.embed_dim;
    let mut class_rows = Vec::with_capacity(images.len() * d);
    let mut schedule = Vec::new();
    for image in images {
        let (cls, sched) = backbone(w, arch, image.as_ref(), merge_r, precision, counter)?;
        class_rows.extend(cls);
        schedule = sched;
    }
    let class_rows = Matrix::new(images.len(), d, class_rows)?;
    let mut features = layer_norm_rows(&class_rows, &w.norm_gamma, &w.norm_beta, NORM_EPS)?;
    precision.apply_matrix(&mut features);
    let mac_count = counter.mac_count() - start;

    let mut uncounted = OpCounter::disabled();
    let mut logits = matmul(&features, &w.head_weight, &mut uncounted)?;
    logits.add_row_vector(&w.head_bias)?;
    precision.apply_matrix(&mut logits);

    Ok(ForwardOutput {
        logits,
        features,
        trace: ForwardTrace {
            tokens_per_layer: schedule,
            mac_count,
        },
    })
}
