use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::PrecisionMode;

/// One concrete ViT architecture.
///
/// `heads` and `mlp_ratios` are per layer; `embed_dim` is shared by every
/// layer. The head dimension of layer `l` is `embed_dim / heads[l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: Vec<usize>,
    pub mlp_ratios: Vec<f64>,
    pub num_classes: usize,
}

/// `ratio · width` when it is a positive integer.
pub(crate) fn hidden_width(ratio: f64, width: usize) -> Option<usize> {
    let h = ratio * width as f64;
    let rounded = h.round();
    if ratio > 0.0 && rounded >= 1.0 && (h - rounded).abs() < 1e-9 {
        Some(rounded as usize)
    } else {
        None
    }
}

impl ArchConfig {
    /// Architecture with the same head count and MLP ratio in every layer.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        image_size: usize,
        patch_size: usize,
        channels: usize,
        embed_dim: usize,
        depth: usize,
        heads: usize,
        mlp_ratio: f64,
        num_classes: usize,
    ) -> Self {
        ArchConfig {
            image_size,
            patch_size,
            channels,
            embed_dim,
            depth,
            heads: vec![heads; depth],
            mlp_ratios: vec![mlp_ratio; depth],
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("num_classes", self.num_classes),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::invalid(
                "patch_size",
                format!("{} does not divide image_size {}", self.patch_size, self.image_size),
            ));
        }
        if self.heads.len() != self.depth {
            return Err(Error::invalid(
                "heads",
                format!("{} entries for depth {}", self.heads.len(), self.depth),
            ));
        }
        if self.mlp_ratios.len() != self.depth {
            return Err(Error::invalid(
                "mlp_ratios",
                format!("{} entries for depth {}", self.mlp_ratios.len(), self.depth),
            ));
        }
        for (l, &h) in self.heads.iter().enumerate() {
            if h == 0 || !self.embed_dim.is_multiple_of(h) {
                return Err(Error::invalid(
                    "heads",
                    format!("layer {l}: {h} heads do not divide embed_dim {}", self.embed_dim),
                ));
            }
        }
        for (l, &r) in self.mlp_ratios.iter().enumerate() {
            if hidden_width(r, self.embed_dim).is_none() {
                return Err(Error::invalid(
                    "mlp_ratios",
                    format!("layer {l}: ratio {r} x embed_dim {} is not a positive integer", self.embed_dim),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patch tokens plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    /// Length of one flattened patch.
    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }

    pub fn mlp_hidden(&self, layer: usize) -> usize {
        hidden_width(self.mlp_ratios[layer], self.embed_dim).expect("validated mlp ratio")
    }

    pub fn head_dim(&self, layer: usize) -> usize {
        self.embed_dim / self.heads[layer]
    }
}

/// Allowed values along every axis of the joint search.
///
/// Image geometry and class count are fixed per space; the architecture
/// genes are `embed_dims`, the depth range and the per-layer `heads` and
/// `mlp_ratios` choices. The token axis is `merge_ratios` and the bit-width
/// axis is `precisions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub embed_dims: Vec<usize>,
    pub depth_min: usize,
    pub depth_max: usize,
    pub heads: Vec<usize>,
    pub mlp_ratios: Vec<f64>,
    pub merge_ratios: Vec<usize>,
    pub precisions: Vec<PrecisionMode>,
}

fn max_of<T: Copy + PartialOrd>(values: &[T]) -> T {
    values
        .iter()
        .copied()
        .fold(values[0], |m, v| if v > m { v } else { m })
}

fn min_of<T: Copy + PartialOrd>(values: &[T]) -> T {
    values
        .iter()
        .copied()
        .fold(values[0], |m, v| if v < m { v } else { m })
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (field, empty) in [
            ("embed_dims", self.embed_dims.is_empty()),
            ("heads", self.heads.is_empty()),
            ("mlp_ratios", self.mlp_ratios.is_empty()),
            ("merge_ratios", self.merge_ratios.is_empty()),
            ("precisions", self.precisions.is_empty()),
        ] {
            if empty {
                return Err(Error::invalid(field, "must list at least one value"));
            }
        }
        if self.depth_min == 0 || self.depth_min > self.depth_max {
            return Err(Error::invalid(
                "depth_min",
                format!("depth range {}..={} is empty or starts at 0", self.depth_min, self.depth_max),
            ));
        }
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::invalid(
                "patch_size",
                format!("{} does not divide image_size {}", self.patch_size, self.image_size),
            ));
        }
        if self.channels == 0 || self.num_classes == 0 {
            return Err(Error::invalid("channels", "channels and num_classes must be positive"));
        }
        for &d in &self.embed_dims {
            for &h in &self.heads {
                if d == 0 || h == 0 || d % h != 0 {
                    return Err(Error::invalid(
                        "heads",
                        format!("{h} heads do not divide embed_dim choice {d}"),
                    ));
                }
            }
            for &r in &self.mlp_ratios {
                if hidden_width(r, d).is_none() {
                    return Err(Error::invalid(
                        "mlp_ratios",
                        format!("ratio {r} x embed_dim {d} is not a positive integer"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The architecture at the maximum of every dimension; the supernet is
    /// allocated at this shape.
    pub fn max_arch(&self) -> ArchConfig {
        self.corner_arch(max_of(&self.embed_dims), self.depth_max, max_of(&self.heads), max_of(&self.mlp_ratios))
    }

    /// The architecture at the minimum of every dimension. Cheapest member
    /// in both parameters and FLOPs.
    pub fn min_arch(&self) -> ArchConfig {
        self.corner_arch(min_of(&self.embed_dims), self.depth_min, min_of(&self.heads), min_of(&self.mlp_ratios))
    }

    fn corner_arch(&self, embed: usize, depth: usize, heads: usize, mlp: f64) -> ArchConfig {
        ArchConfig::uniform(
            self.image_size,
            self.patch_size,
            self.channels,
            embed,
            depth,
            heads,
            mlp,
            self.num_classes,
        )
    }

    pub fn max_merge_ratio(&self) -> usize {
        max_of(&self.merge_ratios)
    }

    /// Widest MLP hidden layer across the space.
    pub fn max_mlp_hidden(&self) -> usize {
        hidden_width(max_of(&self.mlp_ratios), max_of(&self.embed_dims)).expect("validated space")
    }

    /// Check `arch` against every allowed set, naming the offending field.
    pub fn check_arch(&self, arch: &ArchConfig) -> Result<()> {
        arch.validate()?;
        let fixed = [
            ("image_size", arch.image_size, self.image_size),
            ("patch_size", arch.patch_size, self.patch_size),
            ("channels", arch.channels, self.channels),
            ("num_classes", arch.num_classes, self.num_classes),
        ];
        for (field, got, want) in fixed {
            if got != want {
                return Err(Error::outside(field, format!("{got} but the space fixes {want}")));
            }
        }
        if !self.embed_dims.contains(&arch.embed_dim) {
            return Err(Error::outside(
                "embed_dim",
                format!("{} not in {:?}", arch.embed_dim, self.embed_dims),
            ));
        }
        if arch.depth < self.depth_min || arch.depth > self.depth_max {
            return Err(Error::outside(
                "depth",
                format!("{} not in {}..={}", arch.depth, self.depth_min, self.depth_max),
            ));
        }
        if let Some(h) = arch.heads.iter().find(|h| !self.heads.contains(h)) {
            return Err(Error::outside("heads", format!("{h} not in {:?}", self.heads)));
        }
        if let Some(r) = arch.mlp_ratios.iter().find(|r| !self.mlp_ratios.contains(r)) {
            return Err(Error::outside("mlp_ratios", format!("{r} not in {:?}", self.mlp_ratios)));
        }
        Ok(())
    }

    pub fn check_merge_r(&self, r: usize) -> Result<()> {
        if self.merge_ratios.contains(&r) {
            Ok(())
        } else {
            Err(Error::outside("merge_r", format!("{r} not in {:?}", self.merge_ratios)))
        }
    }

    pub fn check_precision(&self, p: PrecisionMode) -> Result<()> {
        if self.precisions.contains(&p) {
            Ok(())
        } else {
            Err(Error::outside("precision", format!("{p} not in {:?}", self.precisions)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_space() -> SearchSpace {
        SearchSpace {
            image_size: 32,
            patch_size: 8,
            channels: 1,
            num_classes: 5,
            embed_dims: vec![32, 64],
            depth_min: 1,
            depth_max: 3,
            heads: vec![2, 4],
            mlp_ratios: vec![2.0, 4.0],
            merge_ratios: vec![0, 2],
            precisions: vec![PrecisionMode::Single],
        }
    }

    #[test]
    fn arch_validation() {
        let ok = ArchConfig::uniform(32, 8, 1, 64, 4, 4, 4.0, 5);
        ok.validate().unwrap();
        assert_eq!(ok.num_tokens(), 17);
        assert_eq!(ok.patch_dim(), 64);
        assert_eq!(ok.mlp_hidden(0), 256);

        let mut bad = ok.clone();
        bad.image_size = 30;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.heads[1] = 3;
        assert!(matches!(bad.validate(), Err(Error::Invalid { field, .. }) if field == "heads"));
        let mut bad = ok.clone();
        bad.mlp_ratios.pop();
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.mlp_ratios[0] = 0.3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn space_corners_and_membership() {
        let space = toy_space();
        space.validate().unwrap();
        let max = space.max_arch();
        assert_eq!((max.embed_dim, max.depth, max.heads[0]), (64, 3, 4));
        assert_eq!(space.max_mlp_hidden(), 256);
        space.check_arch(&max).unwrap();
        space.check_arch(&space.min_arch()).unwrap();

        let mut outside = max.clone();
        outside.embed_dim = 48;
        outside.heads = vec![2; 3];
        let err = space.check_arch(&outside).unwrap_err();
        assert!(matches!(err, Error::OutsideSpace { ref field, .. } if field == "embed_dim"), "{err}");
        assert!(space.check_merge_r(1).is_err());
        assert!(space.check_precision(PrecisionMode::Half).is_err());
    }

    #[test]
    fn malformed_space_rejected() {
        let mut s = toy_space();
        s.heads.push(3);
        assert!(s.validate().is_err());
        let mut s = toy_space();
        s.depth_min = 4;
        assert!(s.validate().is_err());
        let mut s = toy_space();
        s.precisions.clear();
        assert!(s.validate().is_err());
    }
}
