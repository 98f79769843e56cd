//! Budgeted evolutionary search over architecture, merge ratio and precision,
//! and Pareto-front extraction over the evaluated records.

mod evolve;
mod genome;
mod pareto;

pub use self::evolve::{
    evaluate_genome, evolve, extract_features, EvalRecord, ProbeSettings, SearchConfig, SearchResult, OFFSPRING_RETRIES,
};
pub use self::genome::{crossover, mutate, sample_feasible, sample_genome, Axis, Budgets, Genome, MAX_RANDOM_DRAWS};
pub use self::pareto::{pareto_front, pareto_indices, CostObjective};
