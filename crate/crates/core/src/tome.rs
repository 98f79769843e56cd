//! Token merging by bipartite soft matching.
//!
//! Unprotected tokens are split by position parity into sources (even
//! positions, set A) and destinations (odd positions, set B). Every source
//! proposes an edge to its most cosine-similar destination, and the `r`
//! strongest edges are merged by size-weighted averaging. Token sizes are
//! carried forward so attention can add `ln(size)` to each key's logit and
//! a merged token keeps the attention mass of its constituents.
//!
//! ```
//! use vitjoint::numerics::Matrix;
//! use vitjoint::tome::{apply_merge, bipartite_soft_match, TokenState};
//!
//! // class token, then two identical patches and one different patch
//! let feats = Matrix::from_rows(&[
//!     vec![9.0, 9.0],
//!     vec![1.0, 0.0],
//!     vec![1.0, 0.0],
//!     vec![0.0, 1.0],
//! ]).unwrap();
//! let state = TokenState::new(feats.clone());
//! let plan = bipartite_soft_match(&feats, &state, 1);
//! assert_eq!(plan.pairs, vec![(1, 2)]);
//! let merged = apply_merge(&state, &plan).unwrap();
//! assert_eq!(merged.sizes, vec![1, 2, 1]);
//! ```

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Features, sizes and protection flags for the live tokens of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenState {
    pub features: Matrix,
    pub sizes: Vec<u32>,
    pub protected: Vec<bool>,
}

impl TokenState {
    /// Fresh state: all sizes one, row 0 is the protected class token.
    pub fn new(features: Matrix) -> Self {
        let n = features.rows();
        let mut protected = vec![false; n];
        protected[0] = true;
        TokenState {
            features,
            sizes: vec![1; n],
            protected,
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn protected_count(&self) -> usize {
        self.protected.iter().filter(|&&p| p).count()
    }

    /// Token floor: protected tokens plus one survivor.
    pub fn min_tokens(&self) -> usize {
        self.protected_count() + 1
    }

    pub fn total_size(&self) -> u64 {
        self.sizes.iter().map(|&s| s as u64).sum()
    }

    /// Source (A) and destination (B) indices.
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (pos, idx) in (0..self.len()).filter(|&i| !self.protected[i]).enumerate() {
            if pos % 2 == 0 {
                a.push(idx);
            } else {
                b.push(idx);
            }
        }
        (a, b)
    }
}

/// Pairs to merge, `(source, destination)` in original row indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergePlan {
    pub pairs: Vec<(usize, usize)>,
    /// Cosine similarity of each selected edge.
    pub scores: Vec<f32>,
}

impl MergePlan {
    pub fn r_effective(&self) -> usize {
        self.pairs.len()
    }
}

/// Number of merges actually performed for `n` tokens with `protected`
/// protected ones when `r` are requested.
pub fn effective_r(n: usize, protected: usize, r: usize) -> usize {
    let free = n.saturating_sub(protected);
    let sources = free.div_ceil(2);
    let destinations = free / 2;
    if destinations == 0 {
        return 0;
    }
    r.min(sources).min(n.saturating_sub(protected + 1))
}

/// Token count entering each block plus the final count, for one protected
/// class token. Merging happens in every block except the last, so the
/// final entry repeats the one before it.
pub fn token_schedule(n0: usize, depth: usize, r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(depth + 1);
    out.push(n0);
    for l in 0..depth {
        let n = out[l];
        let next = if l + 1 < depth { n - effective_r(n, 1, r) } else { n };
        out.push(next);
    }
    out
}

fn unit_rows(keys: &Matrix) -> Matrix {
    let mut out = keys.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
        for v in row {
            *v /= norm;
        }
    }
    out
}

/// Select up to `r` merges. Never fails; `r` is clipped.
///
/// Each source picks its most similar destination (lowest index on ties);
/// edges are ranked by similarity, ties going to the lower source index.
pub fn bipartite_soft_match(keys: &Matrix, state: &TokenState, r: usize) -> MergePlan {
    debug_assert_eq!(keys.rows(), state.len());
    let r = effective_r(state.len(), state.protected_count(), r);
    if r == 0 {
        return MergePlan::default();
    }
    let (a, b) = state.partition();
    let unit = unit_rows(keys);

    let mut edges: Vec<(f32, usize, usize)> = a
        .iter()
        .map(|&src| {
            let s = unit.row(src);
            let mut best = (f32::NEG_INFINITY, b[0]);
            for &dst in &b {
                let sim: f32 = s.iter().zip(unit.row(dst)).map(|(x, y)| x * y).sum();
                if sim > best.0 {
                    best = (sim, dst);
                }
            }
            (best.0, src, best.1)
        })
        .collect();
    // Stable sort keeps ascending source order among equal scores.
    edges.sort_by(|x, y| y.0.total_cmp(&x.0));
    edges.truncate(r);

    MergePlan {
        pairs: edges.iter().map(|&(_, s, d)| (s, d)).collect(),
        scores: edges.iter().map(|&(sim, _, _)| sim).collect(),
    }
}

/// Fold every source into its destination by size-weighted mean.
///
/// Survivors keep their relative order.
pub fn apply_merge(state: &TokenState, plan: &MergePlan) -> Result<TokenState> {
    let n = state.len();
    if plan.pairs.is_empty() {
        return Ok(state.clone());
    }
    if plan.pairs.len() > n - state.min_tokens() {
        return Err(Error::InvalidPlan(format!(
            "{} merges would drop {n} tokens below {}",
            plan.pairs.len(),
            state.min_tokens()
        )));
    }
    let mut is_source = vec![false; n];
    for &(s, d) in &plan.pairs {
        if s >= n || d >= n {
            return Err(Error::InvalidPlan(format!("pair ({s}, {d}) out of range for {n} tokens")));
        }
        if s == d {
            return Err(Error::InvalidPlan(format!("token {s} merged into itself")));
        }
        if state.protected[s] {
            return Err(Error::InvalidPlan(format!("protected token {s} used as a source")));
        }
        if is_source[s] {
            return Err(Error::InvalidPlan(format!("source {s} appears twice")));
        }
        is_source[s] = true;
    }
    if let Some(&(_, d)) = plan.pairs.iter().find(|&&(_, d)| is_source[d]) {
        return Err(Error::InvalidPlan(format!("destination {d} is also a source")));
    }

    let dim = state.features.cols();
    // f64 accumulators make merges of identical rows exact.
    let mut acc: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut sizes = state.sizes.clone();
    for &(s, d) in &plan.pairs {
        let dst_size = sizes[d] as f64;
        let slot = acc[d].get_or_insert_with(|| state.features.row(d).iter().map(|&v| v as f64 * dst_size).collect());
        let src_size = state.sizes[s] as f64;
        for (a, &v) in slot.iter_mut().zip(state.features.row(s)) {
            *a += v as f64 * src_size;
        }
        sizes[d] += state.sizes[s];
    }

    let survivors = n - plan.pairs.len();
    let mut data = Vec::with_capacity(survivors * dim);
    let mut out_sizes = Vec::with_capacity(survivors);
    let mut protected = Vec::with_capacity(survivors);
    for i in (0..n).filter(|&i| !is_source[i]) {
        match &acc[i] {
            Some(sum) => {
                let total = sizes[i] as f64;
                data.extend(sum.iter().map(|&v| (v / total) as f32));
            }
            None => data.extend_from_slice(state.features.row(i)),
        }
        out_sizes.push(sizes[i]);
        protected.push(state.protected[i]);
    }
    Ok(TokenState {
        features: Matrix::new(survivors, dim, data)?,
        sizes: out_sizes,
        protected,
    })
}

/// `ln(size)` per key, added to that key's attention logits.
pub fn proportional_attention_bias(sizes: &[u32]) -> Vec<f32> {
    sizes.iter().map(|&s| (s as f32).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matmul, matmul_transposed, softmax_rows, OpCounter};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(rows: &[Vec<f32>]) -> TokenState {
        TokenState::new(Matrix::from_rows(rows).unwrap())
    }

    /// Scores every A→B edge in f64, then picks per-source best and global top-r.
    fn exhaustive_plan(keys: &Matrix, st: &TokenState, r: usize) -> Vec<(usize, usize)> {
        let free: Vec<usize> = (0..st.len()).filter(|&i| !st.protected[i]).collect();
        let a: Vec<usize> = free.iter().copied().step_by(2).collect();
        let b: Vec<usize> = free.iter().copied().skip(1).step_by(2).collect();
        let cos = |i: usize, j: usize| {
            let (x, y) = (keys.row(i), keys.row(j));
            let dot: f64 = x.iter().zip(y).map(|(p, q)| *p as f64 * *q as f64).sum();
            let nx: f64 = x.iter().map(|p| (*p as f64).powi(2)).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|p| (*p as f64).powi(2)).sum::<f64>().sqrt();
            dot / (nx * ny)
        };
        let mut all = Vec::new();
        for &i in &a {
            for &j in &b {
                all.push((cos(i, j), i, j));
            }
        }
        let mut best: Vec<(f64, usize, usize)> = Vec::new();
        for &i in &a {
            let mut cand: Vec<_> = all.iter().filter(|e| e.1 == i).copied().collect();
            cand.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.2.cmp(&y.2)));
            best.push(cand[0]);
        }
        best.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        let limit = r.min(a.len()).min(st.len() - 2);
        best.into_iter().take(limit).map(|e| (e.1, e.2)).collect()
    }

    #[test]
    fn zero_r_is_empty() {
        let st = state(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!(bipartite_soft_match(&st.features, &st, 0).pairs.is_empty());
    }

    #[test]
    fn identical_keys_across_partition_pair_up() {
        let st = state(&[vec![5.0, 5.0], vec![0.3, -0.2], vec![0.3, -0.2], vec![-1.0, 0.4], vec![0.2, 0.9]]);
        let plan = bipartite_soft_match(&st.features, &st, 1);
        assert_eq!(plan.pairs, vec![(1, 2)]);
        assert!((plan.scores[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn six_token_fixture_matches_exhaustive() {
        // Class token, then A = {1, 3, 5}, B = {2, 4}.
        let keys = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.8, 0.3],
            vec![0.5, 0.5, 0.0],
        ])
        .unwrap();
        let st = TokenState::new(keys.clone());
        let plan = bipartite_soft_match(&keys, &st, 2);
        // cos(1,2)=0.9939, cos(3,4)=0.9363, cos(5,2)=0.7809
        assert_eq!(plan.pairs, vec![(1, 2), (3, 4)]);
        assert_eq!(plan.pairs, exhaustive_plan(&keys, &st, 2));
    }

    #[test]
    fn random_cases_match_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(6..=12);
            let d = rng.random_range(2..=6);
            let data = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let keys = Matrix::new(n, d, data).unwrap();
            let st = TokenState::new(keys.clone());
            let r = rng.random_range(0..=n);
            let plan = bipartite_soft_match(&keys, &st, r);
            assert_eq!(plan.pairs, exhaustive_plan(&keys, &st, r));
        }
    }

    #[test]
    fn merge_arithmetic() {
        let mut st = state(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        st.sizes[2] = 3;
        let plan = MergePlan {
            pairs: vec![(1, 2)],
            scores: vec![0.0],
        };
        let out = apply_merge(&st, &plan).unwrap();
        assert_eq!(out.features.row(1), &[0.25, 0.75]);
        assert_eq!(out.sizes, vec![1, 4]);
        assert_eq!(out.protected, vec![true, false]);
    }

    #[test]
    fn identical_rows_merge_exactly() {
        let v = vec![0.1f32, -3.7, 1e-3];
        let mut st = state(&[vec![0.0; 3], v.clone(), v.clone(), v.clone()]);
        st.sizes = vec![1, 1, 2, 5];
        let plan = MergePlan {
            pairs: vec![(1, 2), (3, 2)],
            scores: vec![1.0, 1.0],
        };
        let out = apply_merge(&st, &plan).unwrap();
        assert_eq!(out.features.row(1), v.as_slice());
        assert_eq!(out.sizes, vec![1, 8]);
    }

    #[test]
    fn invalid_plans_rejected() {
        let st = state(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let bad = |pairs: Vec<(usize, usize)>| {
            let scores = vec![0.0; pairs.len()];
            apply_merge(&st, &MergePlan { pairs, scores }).unwrap_err()
        };
        assert!(matches!(bad(vec![(0, 1)]), Error::InvalidPlan(_)));
        assert!(matches!(bad(vec![(1, 9)]), Error::InvalidPlan(_)));
        assert!(matches!(bad(vec![(1, 2), (1, 3)]), Error::InvalidPlan(_)));
        assert!(matches!(bad(vec![(1, 2), (2, 3)]), Error::InvalidPlan(_)));
        assert!(matches!(bad(vec![(1, 2), (3, 2), (2, 1)]), Error::InvalidPlan(_)));
    }

    #[test]
    fn bias_values() {
        assert_eq!(proportional_attention_bias(&[1, 1, 1]), vec![0.0; 3]);
        assert!((proportional_attention_bias(&[2])[0] - std::f32::consts::LN_2).abs() < 1e-6);
    }

    /// Single-head attention for every query row against the given keys.
    fn attend(x: &Matrix, sizes: &[u32]) -> Matrix {
        let mut c = OpCounter::disabled();
        let mut scores = matmul_transposed(x, x, &mut c).unwrap();
        let bias = proportional_attention_bias(sizes);
        for r in 0..scores.rows() {
            for (v, b) in scores.row_mut(r).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        matmul(&softmax_rows(&scores), x, &mut c).unwrap()
    }

    #[test]
    fn proportional_attention_matches_duplicated_tokens() {
        let a = vec![0.3f32, -0.5, 0.8];
        let b = vec![-0.2f32, 0.7, 0.1];
        let c = vec![0.9f32, 0.0, -0.4];
        let dup = Matrix::from_rows(&[a.clone(), b.clone(), b.clone(), c.clone()]).unwrap();
        let merged = Matrix::from_rows(&[a, b, c]).unwrap();
        let full = attend(&dup, &[1, 1, 1, 1]);
        let short = attend(&merged, &[1, 2, 1]);
        for (fr, sr) in [(0, 0), (1, 1), (2, 1), (3, 2)] {
            for (x, y) in full.row(fr).iter().zip(short.row(sr)) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn schedule_and_clipping() {
        assert_eq!(token_schedule(17, 4, 0), vec![17; 5]);
        assert_eq!(token_schedule(17, 4, 2), vec![17, 15, 13, 11, 11]);
        // r beyond the source count clips to it, never below two tokens.
        assert_eq!(token_schedule(17, 4, 12), vec![17, 9, 5, 3, 3]);
        assert_eq!(token_schedule(5, 6, 3), vec![5, 3, 2, 2, 2, 2, 2]);
        assert_eq!(effective_r(2, 1, 5), 0);
        assert_eq!(effective_r(3, 1, 5), 1);
    }

    proptest! {
        #[test]
        fn merges_conserve_size_and_width(
            seed in any::<u64>(),
            n in 3usize..20,
            d in 1usize..6,
            rs in prop::collection::vec(0usize..8, 1..5),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let mut st = TokenState::new(Matrix::new(n, d, data).unwrap());
            let total = st.total_size();
            for r in rs {
                let before = st.len();
                let plan = bipartite_soft_match(&st.features, &st, r);
                st = apply_merge(&st, &plan).unwrap();
                prop_assert_eq!(st.len(), before - plan.r_effective());
                prop_assert!(st.len() >= 2);
                prop_assert_eq!(st.features.cols(), d);
                prop_assert_eq!(st.total_size(), total);
                prop_assert!(st.protected[0]);
                prop_assert_eq!(st.protected_count(), 1);
            }
        }

        #[test]
        fn uniform_tokens_stay_uniform(v in prop::collection::vec(-10f32..10.0, 1..5), n in 3usize..16, r in 1usize..6) {
            let mut rows = vec![vec![0.5; v.len()]];
            rows.extend(std::iter::repeat_n(v.clone(), n - 1));
            let mut st = state(&rows);
            for _ in 0..4 {
                let plan = bipartite_soft_match(&st.features, &st, r);
                st = apply_merge(&st, &plan).unwrap();
            }
            for i in 1..st.len() {
                prop_assert_eq!(st.features.row(i), v.as_slice());
            }
        }
    }
}
