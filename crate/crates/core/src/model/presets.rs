//! Versioned preset file: named search spaces and named architectures.
//!
//! ```toml
//! version = 1
//!
//! [spaces.toy]
//! image_size = 32
//! patch_size = 8
//! channels = 1
//! num_classes = 5
//! embed_dims = [32, 48, 64]
//! depth_min = 2
//! depth_max = 4
//! heads = [2, 4]
//! mlp_ratios = [2.0, 3.0, 4.0]
//! merge_ratios = [0, 1, 2, 4, 5, 8, 12]
//! precisions = ["single", "half"]
//!
//! [presets.toy]
//! space = "toy"
//! embed_dim = 64
//! depth = 4
//! heads = 4            # or a per-layer list
//! mlp_ratio = 4.0      # or `mlp_ratios = [...]`
//! ```
//!
//! Geometry and class count of a preset come from its space.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{ArchConfig, SearchSpace};
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../presets.toml");

/// Current preset file format version.
pub const PRESET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PerLayer<T> {
    Uniform(T),
    List(Vec<T>),
}

impl<T: Clone> PerLayer<T> {
    fn expand(&self, depth: usize) -> Vec<T> {
        match self {
            PerLayer::Uniform(v) => vec![v.clone(); depth],
            PerLayer::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetEntry {
    space: String,
    embed_dim: usize,
    depth: usize,
    heads: PerLayer<usize>,
    #[serde(alias = "mlp_ratios")]
    mlp_ratio: PerLayer<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    version: u32,
    spaces: BTreeMap<String, SearchSpace>,
    presets: BTreeMap<String, PresetEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: String,
    pub space: String,
    pub arch: ArchConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresetLibrary {
    pub version: u32,
    pub spaces: BTreeMap<String, SearchSpace>,
    pub presets: BTreeMap<String, Preset>,
}

impl PresetLibrary {
    /// The preset file shipped with the crate.
    pub fn builtin() -> &'static PresetLibrary {
        static LIB: std::sync::OnceLock<PresetLibrary> = std::sync::OnceLock::new();
        LIB.get_or_init(|| PresetLibrary::parse(BUILTIN, "presets.toml").expect("shipped preset file is valid"))
    }

    pub fn load(path: &Path) -> Result<PresetLibrary> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        PresetLibrary::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<PresetLibrary> {
        let file: PresetFile = toml::from_str(text).map_err(|e| Error::Syntax {
            path: origin.to_string(),
            message: e.to_string().trim_end().replace('\n', " "),
        })?;
        if file.version != PRESET_FORMAT_VERSION {
            return Err(Error::invalid(
                "version",
                format!("preset format {} is not supported (expected {PRESET_FORMAT_VERSION})", file.version),
            ));
        }
        for (name, space) in &file.spaces {
            space
                .validate()
                .map_err(|e| Error::invalid(format!("spaces.{name}"), e.to_string()))?;
        }
        let mut presets = BTreeMap::new();
        for (name, entry) in file.presets {
            let space = file
                .spaces
                .get(&entry.space)
                .ok_or_else(|| Error::invalid(format!("presets.{name}.space"), format!("unknown space `{}`", entry.space)))?;
            let arch = ArchConfig {
                image_size: space.image_size,
                patch_size: space.patch_size,
                channels: space.channels,
                embed_dim: entry.embed_dim,
                depth: entry.depth,
                heads: entry.heads.expand(entry.depth),
                mlp_ratios: entry.mlp_ratio.expand(entry.depth),
                num_classes: space.num_classes,
            };
            space.check_arch(&arch).map_err(|e| match e {
                Error::OutsideSpace { field, message } => Error::OutsideSpace {
                    field: format!("presets.{name}.{field}"),
                    message,
                },
                Error::Invalid { field, message } => Error::Invalid {
                    field: format!("presets.{name}.{field}"),
                    message,
                },
                other => other,
            })?;
            presets.insert(
                name.clone(),
                Preset {
                    name,
                    space: entry.space,
                    arch,
                },
            );
        }
        Ok(PresetLibrary {
            version: file.version,
            spaces: file.spaces,
            presets,
        })
    }

    pub fn preset(&self, name: &str) -> Result<&Preset> {
        self.presets.get(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))
    }

    pub fn arch(&self, name: &str) -> Result<&ArchConfig> {
        Ok(&self.preset(name)?.arch)
    }

    pub fn space(&self, name: &str) -> Result<&SearchSpace> {
        self.spaces
            .get(name)
            .ok_or_else(|| Error::invalid("space", format!("unknown space `{name}`")))
    }

    /// Space a preset belongs to.
    pub fn space_of(&self, preset: &str) -> Result<&SearchSpace> {
        let p = self.preset(preset)?;
        self.space(&p.space)
    }

    /// Name of the first preset whose architecture equals `arch`.
    pub fn name_of(&self, arch: &ArchConfig) -> Option<&str> {
        self.presets
            .values()
            .find(|p| &p.arch == arch)
            .map(|p| p.name.as_str())
    }
}
