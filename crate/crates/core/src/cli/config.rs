//! Experiment configuration file.
//!
//! ```toml
//! seed = 7
//! out_dir = "out/smoke"
//! space = "toy"
//!
//! [dataset]
//! n_per_class = 20
//!
//! [eval]
//! preset = "toy"
//! merge_r = 4
//! precision = "single"
//!
//! [search]
//! population = 6
//! generations = 3
//! ```
//!
//! `space` names a space from `[spaces.<name>]` in the same file or from the
//! built-in preset file. Extra architectures can be declared under
//! `[models.<name>]` with the same keys as a preset entry minus `space`.
//! Unknown keys anywhere are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArchConfig, PresetLibrary, SearchSpace};
use crate::numerics::PrecisionMode;
use crate::search::{ProbeSettings, SearchConfig};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLayer<T> {
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: PerLayer<usize>,
    #[serde(alias = "mlp_ratios")]
    pub mlp_ratio: PerLayer<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n_per_class: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { n_per_class: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub preset: String,
    #[serde(default)]
    pub merge_r: usize,
    #[serde(default = "single")]
    pub precision: PrecisionMode,
}

fn single() -> PrecisionMode {
    PrecisionMode::Single
}

/// Search settings; the sampling seed is derived from the global seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub population: usize,
    pub generations: usize,
    pub mutation_arch: f64,
    pub mutation_token: f64,
    pub mutation_precision: f64,
    pub parent_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flops_budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_budget: Option<u64>,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        SearchSection {
            population: d.population,
            generations: d.generations,
            mutation_arch: d.mutation_arch,
            mutation_token: d.mutation_token,
            mutation_precision: d.mutation_precision,
            parent_fraction: d.parent_fraction,
            flops_budget: None,
            params_budget: None,
        }
    }
}

impl SearchSection {
    pub fn to_search_config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            population: self.population,
            generations: self.generations,
            mutation_arch: self.mutation_arch,
            mutation_token: self.mutation_token,
            mutation_precision: self.mutation_precision,
            parent_fraction: self.parent_fraction,
            flops_budget: self.flops_budget,
            params_budget: self.params_budget,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub batch: usize,
    pub warmup_iters: usize,
    pub timed_iters: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            batch: 8,
            warmup_iters: 2,
            timed_iters: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub space: String,
    #[serde(default)]
    pub dataset: DatasetSection,
    pub eval: EvalSection,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub spaces: BTreeMap<String, SearchSpace>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub models: BTreeMap<String, ModelEntry>,
}

/// A validated configuration with its space and named models resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub space: SearchSpace,
    /// Built-in presets that lie in the space, then the file's own models.
    pub models: BTreeMap<String, ArchConfig>,
}

fn syntax(origin: &str, e: impl std::fmt::Display) -> Error {
    Error::Syntax {
        path: origin.to_string(),
        message: e.to_string().trim_end().replace('\n', " "),
    }
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::OutsideSpace { field, message } => Error::outside(format!("{prefix}.{field}"), message),
        Error::Invalid { field, message } => Error::invalid(format!("{prefix}.{field}"), message),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| syntax(origin, e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn validate(self) -> Result<Experiment> {
        let space = match self.spaces.get(&self.space) {
            Some(s) => s.clone(),
            None => PresetLibrary::builtin()
                .spaces
                .get(&self.space)
                .cloned()
                .ok_or_else(|| Error::invalid("space", format!("unknown space `{}`", self.space)))?,
        };
        space.validate().map_err(|e| prefixed("space", e))?;
        if space.channels != 1 || space.num_classes != crate::probe::CLASS_NAMES.len() || space.image_size < 16 {
            return Err(Error::invalid(
                "space",
                format!(
                    "`{}` does not match the synthetic task (1 channel, {} classes, images of at least 16 px)",
                    self.space,
                    crate::probe::CLASS_NAMES.len()
                ),
            ));
        }
        if self.dataset.n_per_class == 0 {
            return Err(Error::invalid("dataset.n_per_class", "must be positive"));
        }
        self.probe.validate()?;
        self.search.to_search_config(0).validate()?;
        let bench = &self.bench;
        if bench.batch == 0 || bench.timed_iters == 0 {
            return Err(Error::invalid("bench", "batch and timed_iters must be at least 1"));
        }

        let mut models = BTreeMap::new();
        for p in PresetLibrary::builtin().presets.values() {
            if space.check_arch(&p.arch).is_ok() {
                models.insert(p.name.clone(), p.arch.clone());
            }
        }
        for (name, entry) in &self.models {
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
            space.check_arch(&arch).map_err(|e| prefixed(&format!("models.{name}"), e))?;
            models.insert(name.clone(), arch);
        }

        let experiment = Experiment {
            space,
            models,
            config: self,
        };
        experiment.eval_target(None, None, None)?;
        Ok(experiment)
    }
}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<Experiment> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml(&text, &path.display().to_string())?.validate()
}

impl Experiment {
    pub fn seed(&self, purpose: &str) -> u64 {
        derive_seed(self.config.seed, purpose)
    }

    pub fn arch(&self, name: &str) -> Result<&ArchConfig> {
        self.models.get(name).ok_or_else(|| {
            if PresetLibrary::builtin().presets.contains_key(name) {
                Error::outside("preset", format!("`{name}` does not belong to space `{}`", self.config.space))
            } else {
                Error::UnknownPreset(name.to_string())
            }
        })
    }

    /// Model, merge ratio and precision for `eval` and `bench`, with
    /// command-line overrides applied and checked against the space.
    pub fn eval_target(
        &self,
        preset: Option<&str>,
        merge_r: Option<usize>,
        precision: Option<PrecisionMode>,
    ) -> Result<(String, ArchConfig, usize, PrecisionMode)> {
        let e = &self.config.eval;
        let name = preset.unwrap_or(&e.preset);
        let arch = self.arch(name)?.clone();
        let r = merge_r.unwrap_or(e.merge_r);
        let p = precision.unwrap_or(e.precision);
        self.space.check_merge_r(r).map_err(|e| prefixed("eval", e))?;
        self.space.check_precision(p).map_err(|e| prefixed("eval", e))?;
        Ok((name.to_string(), arch, r, p))
    }

    /// Name of the model whose architecture equals `arch`, preferring models
    /// declared in the configuration.
    pub fn name_of(&self, arch: &ArchConfig) -> Option<&str> {
        self.config
            .models
            .keys()
            .find(|n| self.models.get(*n) == Some(arch))
            .or_else(|| self.models.iter().find(|(_, a)| *a == arch).map(|(n, _)| n))
            .map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
out_dir = "out"
space = "toy"

[eval]
preset = "toy"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let e = ExperimentConfig::from_toml(BASE, "t").unwrap().validate().unwrap();
        assert_eq!(e.config.dataset, DatasetSection::default());
        assert_eq!(e.config.eval.precision, PrecisionMode::Single);
        assert!(e.models.contains_key("toy"));
        assert!(!e.models.contains_key("deit-b16-like"));
    }

    #[test]
    fn unknown_keys_are_syntax_errors() {
        let text = format!("{BASE}bogus = 1\n");
        let err = ExperimentConfig::from_toml(&text, "t").unwrap_err();
        assert_eq!(err.category(), "syntax");
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn model_outside_space_names_the_field() {
        let text = format!("{BASE}[models.wide]\nembed_dim = 80\ndepth = 2\nheads = 2\nmlp_ratio = 2.0\n");
        let err = ExperimentConfig::from_toml(&text, "t").unwrap().validate().unwrap_err();
        assert_eq!(err.category(), "out-of-space");
        assert!(err.to_string().contains("models.wide.embed_dim"), "{err}");
    }

    #[test]
    fn preset_from_another_space_is_rejected() {
        let text = BASE.replace("preset = \"toy\"", "preset = \"deit-b16-like\"");
        let err = ExperimentConfig::from_toml(&text, "t").unwrap().validate().unwrap_err();
        assert_eq!(err.category(), "out-of-space");
        let text = BASE.replace("preset = \"toy\"", "preset = \"nope\"");
        let err = ExperimentConfig::from_toml(&text, "t").unwrap().validate().unwrap_err();
        assert_eq!(err.category(), "unknown-preset");
    }

    #[test]
    fn round_trips_through_text() {
        let text = format!(
            "{BASE}[search]\nflops_budget = 40000\n[models.mine]\nembed_dim = 48\ndepth = 3\nheads = [2, 4, 2]\nmlp_ratio = 3.0\n"
        );
        let a = ExperimentConfig::from_toml(&text, "t").unwrap();
        let b = ExperimentConfig::from_toml(&a.to_toml().unwrap(), "t").unwrap();
        assert_eq!(a, b);
        b.validate().unwrap();
    }
}
