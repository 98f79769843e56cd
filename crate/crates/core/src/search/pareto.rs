use serde::{Deserialize, Serialize};

use super::EvalRecord;
use crate::error::{Error, Result};

/// Cost side of the accuracy / cost trade-off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostObjective {
    #[default]
    Flops,
    Energy,
}

impl CostObjective {
    pub fn cost(self, r: &EvalRecord) -> f64 {
        match self {
            CostObjective::Flops => r.cost.flops as f64,
            CostObjective::Energy => r.cost.energy_units,
        }
    }
}

impl std::str::FromStr for CostObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flops" => Ok(CostObjective::Flops),
            "energy" => Ok(CostObjective::Energy),
            other => Err(Error::invalid("objective", format!("`{other}` is not one of flops, energy"))),
        }
    }
}

/// Records not dominated under (accuracy ↑, cost ↓), sorted by cost.
///
/// Among records equal on both objectives only the earliest is kept, so the
/// returned accuracies strictly increase along the front.
pub fn pareto_front(records: &[EvalRecord], objective: CostObjective) -> Result<Vec<EvalRecord>> {
    Ok(pareto_indices(records, objective)?
        .into_iter()
        .map(|i| records[i].clone())
        .collect())
}

pub fn pareto_indices(records: &[EvalRecord], objective: CostObjective) -> Result<Vec<usize>> {
    if records.is_empty() {
        return Err(Error::Empty("pareto_front"));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (objective.cost(&records[a]), objective.cost(&records[b]));
        ca.total_cmp(&cb)
            .then(records[b].accuracy.total_cmp(&records[a].accuracy))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if records[i].accuracy > best {
            best = records[i].accuracy;
            front.push(i);
        }
    }
    Ok(front)
}
