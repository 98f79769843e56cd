use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::genome::{crossover, mutate, sample_feasible, Axis, Budgets, Genome};
use crate::cost::{BenchResult, CostReport};
use crate::error::{Error, Result};
use crate::model::{extract_subnet, forward, ModelWeights, SearchSpace, SupernetWeights};
use crate::numerics::{Matrix, OpCounter, PrecisionMode};
use crate::probe::{fit_head, probe_accuracy, Standardizer, SyntheticDataset};

/// Attempts at producing a budget-feasible child before drawing a fresh
/// random genome instead.
pub const OFFSPRING_RETRIES: usize = 32;

/// Images per forward call when extracting features.
const FEATURE_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings { epochs: 100, lr: 0.1 }
    }
}

impl ProbeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("probe.epochs", "must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("probe.lr", format!("{} is not a positive step size", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub genome: Genome,
    pub accuracy: f64,
    pub cost: CostReport,
    pub bench: Option<BenchResult>,
    pub eval_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_arch: f64,
    pub mutation_token: f64,
    pub mutation_precision: f64,
    pub parent_fraction: f64,
    #[serde(default)]
    pub flops_budget: Option<u64>,
    #[serde(default)]
    pub params_budget: Option<u64>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 8,
            generations: 5,
            mutation_arch: 0.5,
            mutation_token: 0.3,
            mutation_precision: 0.2,
            parent_fraction: 0.25,
            flops_budget: None,
            params_budget: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("search.population", format!("{} is below the minimum of 2", self.population)));
        }
        if self.generations == 0 {
            return Err(Error::invalid("search.generations", "must be at least 1"));
        }
        for (field, p) in [
            ("search.mutation_arch", self.mutation_arch),
            ("search.mutation_token", self.mutation_token),
            ("search.mutation_precision", self.mutation_precision),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(field, format!("{p} is not a probability")));
            }
        }
        if !(self.parent_fraction > 0.0 && self.parent_fraction <= 1.0) {
            return Err(Error::invalid(
                "search.parent_fraction",
                format!("{} is outside (0, 1]", self.parent_fraction),
            ));
        }
        Ok(())
    }

    pub fn budgets(&self) -> Budgets {
        Budgets {
            flops: self.flops_budget,
            params: self.params_budget,
        }
    }

    /// Number of genomes carried over unchanged, at least one.
    pub fn parent_count(&self) -> usize {
        ((self.population as f64 * self.parent_fraction).round() as usize).clamp(1, self.population)
    }
}

/// Backbone class features for the selected samples, one row each.
pub fn extract_features(
    weights: &ModelWeights,
    dataset: &SyntheticDataset,
    indices: &[usize],
    merge_r: usize,
    precision: PrecisionMode,
) -> Result<Matrix> {
    if indices.is_empty() {
        return Err(Error::Empty("feature extraction"));
    }
    let chunks: Vec<Vec<f32>> = indices
        .par_chunks(FEATURE_CHUNK)
        .map(|chunk| {
            let images: Vec<&[f32]> = chunk.iter().map(|&i| dataset.image(i)).collect();
            let mut counter = OpCounter::disabled();
            forward(weights, &images, merge_r, precision, &mut counter).map(|o| o.features.into_data())
        })
        .collect::<Result<_>>()?;
    Matrix::new(indices.len(), weights.arch.embed_dim, chunks.concat())
}

/// Score one genome: slice the subnet, extract frozen features, fit a probe on
/// the train split and measure test accuracy.
pub fn evaluate_genome(
    genome: &Genome,
    supernet: &SupernetWeights,
    dataset: &SyntheticDataset,
    eval_seed: u64,
    settings: &ProbeSettings,
) -> Result<EvalRecord> {
    genome.check(&supernet.space)?;
    let arch = &genome.arch;
    if dataset.image_size != arch.image_size || dataset.channels != arch.channels {
        return Err(Error::shape(
            "evaluate_genome",
            format!(
                "dataset images are {}x{}x{}, the space expects {}x{}x{}",
                dataset.channels, dataset.image_size, dataset.image_size, arch.channels, arch.image_size, arch.image_size
            ),
        ));
    }
    if dataset.num_classes() != arch.num_classes {
        return Err(Error::shape(
            "evaluate_genome",
            format!("dataset has {} classes, the space {}", dataset.num_classes(), arch.num_classes),
        ));
    }
    let weights = extract_subnet(supernet, arch)?;
    let (train, test) = (dataset.train_indices(), dataset.test_indices());
    let train_x = extract_features(&weights, dataset, &train, genome.merge_r, genome.precision)?;
    let test_x = extract_features(&weights, dataset, &test, genome.merge_r, genome.precision)?;
    let scaler = Standardizer::fit(&train_x);
    let (train_x, test_x) = (scaler.apply(&train_x), scaler.apply(&test_x));
    let head = fit_head(
        &train_x,
        &dataset.labels_of(&train),
        dataset.num_classes(),
        settings.epochs,
        settings.lr,
        eval_seed,
    )?;
    Ok(EvalRecord {
        genome: genome.clone(),
        accuracy: probe_accuracy(&head, &test_x, &dataset.labels_of(&test)),
        cost: CostReport::new(arch, genome.merge_r, genome.precision),
        bench: None,
        eval_seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Every generation's population, in genome order.
    pub generations: Vec<Vec<EvalRecord>>,
    pub final_population: Vec<Genome>,
}

impl SearchResult {
    pub fn history(&self) -> Vec<EvalRecord> {
        self.generations.iter().flatten().cloned().collect()
    }

    /// Indices of the carried-over parents selected from generation `g`.
    pub fn parents_of(&self, g: usize, config: &SearchConfig) -> Vec<usize> {
        rank_by_accuracy(&self.generations[g])
            .into_iter()
            .take(config.parent_count())
            .collect()
    }
}

/// Population order by descending accuracy, ties by position.
fn rank_by_accuracy(records: &[EvalRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].accuracy.total_cmp(&records[a].accuracy).then(a.cmp(&b)));
    order
}

fn pick_axis<R: Rng + ?Sized>(config: &SearchConfig, rng: &mut R) -> Option<Axis> {
    let weights = [
        (Axis::Architecture, config.mutation_arch),
        (Axis::Token, config.mutation_token),
        (Axis::Precision, config.mutation_precision),
    ];
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (axis, w) in weights {
        if u < w {
            return Some(axis);
        }
        u -= w;
    }
    weights.iter().rev().find(|(_, w)| *w > 0.0).map(|(a, _)| *a)
}

fn offspring<R: Rng + ?Sized>(
    parents: &[Genome],
    use_crossover: bool,
    space: &SearchSpace,
    config: &SearchConfig,
    rng: &mut R,
) -> Genome {
    let budgets = config.budgets();
    for _ in 0..OFFSPRING_RETRIES {
        let a = &parents[rng.random_range(0..parents.len())];
        let child = if use_crossover {
            let b = &parents[rng.random_range(0..parents.len())];
            crossover(a, b, rng)
        } else {
            match pick_axis(config, rng) {
                Some(axis) => mutate(a, axis, space, rng),
                None => a.clone(),
            }
        };
        if budgets.admits(&child) {
            return child;
        }
    }
    sample_feasible(space, &budgets, rng)
}

fn evaluate_all(
    genomes: &[Genome],
    cache: &mut HashMap<String, EvalRecord>,
    supernet: &SupernetWeights,
    dataset: &SyntheticDataset,
    eval_seed: u64,
    settings: &ProbeSettings,
) -> Result<Vec<EvalRecord>> {
    let mut todo: Vec<&Genome> = Vec::new();
    for g in genomes {
        if !cache.contains_key(&g.key()) && !todo.iter().any(|t| t.key() == g.key()) {
            todo.push(g);
        }
    }
    let fresh: Vec<EvalRecord> = todo
        .par_iter()
        .map(|g| evaluate_genome(g, supernet, dataset, eval_seed, settings))
        .collect::<Result<_>>()?;
    for r in fresh {
        cache.insert(r.genome.key(), r);
    }
    Ok(genomes.iter().map(|g| cache[&g.key()].clone()).collect())
}

/// Budget-constrained evolutionary search maximizing probe accuracy.
///
/// Generation 0 draws `population` feasible genomes uniformly. Each later
/// generation keeps the best `parent_fraction` of the previous one and fills
/// the remainder alternately with single-axis mutants and uniform crossovers
/// of those parents. All sampling comes from one ChaCha8 stream seeded with
/// `config.seed`; evaluation is parallel but results are kept in genome order.
pub fn evolve(
    space: &SearchSpace,
    config: &SearchConfig,
    supernet: &SupernetWeights,
    dataset: &SyntheticDataset,
    eval_seed: u64,
    settings: &ProbeSettings,
) -> Result<SearchResult> {
    config.validate()?;
    settings.validate()?;
    let budgets = config.budgets();
    let cheapest = Genome::cheapest(space);
    if !budgets.admits(&cheapest) {
        return Err(Error::UnsatisfiableBudget(format!(
            "the cheapest member of the space ({}) exceeds the budget",
            cheapest.key()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cache = HashMap::new();
    let mut population: Vec<Genome> = (0..config.population)
        .map(|_| sample_feasible(space, &budgets, &mut rng))
        .collect();
    let mut generations = Vec::with_capacity(config.generations);

    for g in 0..config.generations {
        let records = evaluate_all(&population, &mut cache, supernet, dataset, eval_seed, settings)?;
        if g + 1 < config.generations {
            let parents: Vec<Genome> = rank_by_accuracy(&records)
                .into_iter()
                .take(config.parent_count())
                .map(|i| records[i].genome.clone())
                .collect();
            let mut next = parents.clone();
            let mut use_crossover = false;
            while next.len() < config.population {
                next.push(offspring(&parents, use_crossover, space, config, &mut rng));
                use_crossover = !use_crossover;
            }
            population = next;
        }
        generations.push(records);
    }
    Ok(SearchResult {
        generations,
        final_population: population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_supernet, PresetLibrary};
    use crate::probe::generate_dataset;

    fn fixture() -> (SearchSpace, SupernetWeights, SyntheticDataset) {
        let space = PresetLibrary::builtin().space("toy").unwrap().clone();
        let supernet = build_supernet(&space, 1).unwrap();
        let data = generate_dataset(10, 32, 2).unwrap();
        (space, supernet, data)
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = SearchConfig { population: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SearchConfig { mutation_token: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn axis_weights_respected() {
        let config = SearchConfig {
            mutation_arch: 0.0,
            mutation_token: 1.0,
            mutation_precision: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(pick_axis(&config, &mut rng), Some(Axis::Token));
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_cost_consistent() {
        let (space, supernet, data) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = super::super::sample_genome(&space, &mut rng);
        let a = evaluate_genome(&g, &supernet, &data, 3, &ProbeSettings::default()).unwrap();
        let b = evaluate_genome(&g, &supernet, &data, 3, &ProbeSettings::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cost, CostReport::new(&g.arch, g.merge_r, g.precision));
        assert!((0.0..=1.0).contains(&a.accuracy));
    }

    #[test]
    fn population_size_and_unsatisfiable_budget() {
        let (space, supernet, data) = fixture();
        let config = SearchConfig {
            population: 4,
            generations: 2,
            ..Default::default()
        };
        let res = evolve(&space, &config, &supernet, &data, 0, &ProbeSettings { epochs: 20, lr: 0.1 }).unwrap();
        assert!(res.generations.iter().all(|g| g.len() == 4));
        assert_eq!(res.final_population.len(), 4);

        let config = SearchConfig { flops_budget: Some(1), ..config };
        assert!(matches!(
            evolve(&space, &config, &supernet, &data, 0, &ProbeSettings::default()),
            Err(Error::UnsatisfiableBudget(_))
        ));
    }
}
