//! Configurable ViT backbone over a weight-entangled supernet.

mod config;
mod forward;
mod presets;
mod weights;

pub use self::config::{ArchConfig, SearchSpace};
pub use self::forward::{attention, embed, forward, mlp, patchify, ForwardOutput, ForwardTrace, NORM_EPS};
pub use self::presets::{Preset, PresetLibrary, PRESET_FORMAT_VERSION};
pub use self::weights::{build_supernet, extract_subnet, BlockWeights, ModelWeights, NamedTensor, SupernetWeights, VitWeights, INIT_STD};
