//! Weighted forest aggregation.
//!
//! Client forests are merged by sampling trees, not by averaging anything:
//! silo `i` with resolved weight `w_i` and `N_i` trees contributes
//! `k_i = floor(w_i * N_i)` trees drawn without replacement. The global
//! forest is sized like a single client model, `N = max N_i`; whatever the
//! floors leave short is topped up round-robin from the silos' unsampled
//! trees, heaviest silo first. Silos with zero weight only contribute when
//! the weighted silos run out of trees.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::RandomForest;
use crate::rng::StreamRng;

pub type SiloId = String;

/// Tolerance on weight sums.
pub const WEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("no client completed the round")]
    NoSuccessfulClients,
    #[error("declared weights sum to {0}, more than 1")]
    DeclaredWeightsExceedOne(f64),
    #[error("weight {weight} for silo {silo:?} is outside [0, 1]")]
    InvalidWeight { silo: SiloId, weight: f64 },
    #[error("silo {0:?} listed twice")]
    DuplicateSilo(SiloId),
    #[error("weights and forests name different silos")]
    WeightsMismatch,
    #[error("weights are not resolved: {0}")]
    UnresolvedWeights(String),
    #[error("forest from silo {0:?} does not match the first forest's schema")]
    SchemaMismatch(SiloId),
    #[error("forest from silo {0:?} has no trees")]
    EmptyForest(SiloId),
    #[error("no forests to aggregate")]
    NoForests,
}

/// Per-silo weights in `[0, 1]`, possibly absent, in silo order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClientWeights {
    pub entries: Vec<(SiloId, Option<f64>)>,
}

impl ClientWeights {
    pub fn new(entries: Vec<(SiloId, Option<f64>)>) -> Self {
        Self { entries }
    }

    /// Every silo with an absent weight.
    pub fn absent<I, S>(silos: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<SiloId>,
    {
        Self {
            entries: silos.into_iter().map(|s| (s.into(), None)).collect(),
        }
    }

    pub fn get(&self, silo: &str) -> Option<Option<f64>> {
        self.entries
            .iter()
            .find(|(s, _)| s == silo)
            .map(|(_, w)| *w)
    }

    pub fn silos(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(s, _)| s.as_str())
    }

    pub fn is_resolved(&self) -> bool {
        self.entries.iter().all(|(_, w)| w.is_some()) && (self.total() - 1.0).abs() <= WEIGHT_EPS
    }

    /// Sum of the present weights.
    pub fn total(&self) -> f64 {
        self.entries.iter().filter_map(|(_, w)| *w).sum()
    }

    /// Resolved weight of `silo`, or 0.
    pub fn weight(&self, silo: &str) -> f64 {
        self.get(silo).flatten().unwrap_or(0.0)
    }
}

/// How mass left over by declared weights is shared among silos without a
/// declared weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WeightFill {
    #[default]
    Equal,
    /// Proportional to each silo's reported sample count.
    Proportional(HashMap<SiloId, u64>),
}

/// Resolves missing weights over the silos that completed the round,
/// splitting leftover mass equally.
pub fn resolve_weights(
    declared: &ClientWeights,
    successful: &[SiloId],
) -> Result<ClientWeights, AggregationError> {
    resolve_weights_with(declared, successful, &WeightFill::Equal)
}

/// Resolves missing weights over the silos that completed the round.
///
/// Declared weights of surviving silos are kept. Silos with absent weights
/// share `1 - sum(declared survivors)` according to `fill`. When every
/// survivor declared a weight, the declared weights are renormalized to
/// sum to one (which only changes them if a declared silo failed). Silos
/// that failed are dropped. Successful silos missing from `declared` count
/// as absent.
pub fn resolve_weights_with(
    declared: &ClientWeights,
    successful: &[SiloId],
    fill: &WeightFill,
) -> Result<ClientWeights, AggregationError> {
    if successful.is_empty() {
        return Err(AggregationError::NoSuccessfulClients);
    }
    let mut seen = HashSet::new();
    for (silo, w) in &declared.entries {
        if !seen.insert(silo.as_str()) {
            return Err(AggregationError::DuplicateSilo(silo.clone()));
        }
        if let Some(w) = *w {
            if !(0.0..=1.0).contains(&w) {
                return Err(AggregationError::InvalidWeight {
                    silo: silo.clone(),
                    weight: w,
                });
            }
        }
    }
    let declared_total = declared.total();
    if declared_total > 1.0 + WEIGHT_EPS {
        return Err(AggregationError::DeclaredWeightsExceedOne(declared_total));
    }
    let mut alive = HashSet::new();
    for s in successful {
        if !alive.insert(s.as_str()) {
            return Err(AggregationError::DuplicateSilo(s.clone()));
        }
    }

    let mut survivors: Vec<(SiloId, Option<f64>)> = Vec::new();
    for (silo, w) in &declared.entries {
        if alive.contains(silo.as_str()) {
            survivors.push((silo.clone(), *w));
        } else if w.is_some() {
            log::warn!("dropping weight of unsuccessful silo {silo}");
        }
    }
    for s in successful {
        if declared.get(s).is_none() {
            survivors.push((s.clone(), None));
        }
    }

    let present: f64 = survivors.iter().filter_map(|(_, w)| *w).sum();
    let absent: Vec<usize> = (0..survivors.len())
        .filter(|&i| survivors[i].1.is_none())
        .collect();

    let mut resolved: Vec<(SiloId, f64)> = Vec::with_capacity(survivors.len());
    if absent.is_empty() {
        if present > 0.0 {
            resolved.extend(
                survivors
                    .iter()
                    .map(|(s, w)| (s.clone(), w.unwrap() / present)),
            );
        } else {
            let share = 1.0 / survivors.len() as f64;
            resolved.extend(survivors.iter().map(|(s, _)| (s.clone(), share)));
        }
    } else {
        let remaining = (1.0 - present).max(0.0);
        let shares = fill_shares(&survivors, &absent, fill);
        let mut next = shares.into_iter();
        for (silo, w) in &survivors {
            let value = match w {
                Some(w) => *w,
                None => remaining * next.next().unwrap(),
            };
            resolved.push((silo.clone(), value));
        }
    }

    Ok(ClientWeights {
        entries: resolved.into_iter().map(|(s, w)| (s, Some(w))).collect(),
    })
}

/// Fractions (summing to 1) of the leftover mass for each absent silo.
fn fill_shares(
    survivors: &[(SiloId, Option<f64>)],
    absent: &[usize],
    fill: &WeightFill,
) -> Vec<f64> {
    let equal = vec![1.0 / absent.len() as f64; absent.len()];
    match fill {
        WeightFill::Equal => equal,
        WeightFill::Proportional(samples) => {
            let counts: Vec<u64> = absent
                .iter()
                .map(|&i| samples.get(&survivors[i].0).copied().unwrap_or(0))
                .collect();
            let total: u64 = counts.iter().sum();
            if total == 0 {
                equal
            } else {
                counts.iter().map(|&c| c as f64 / total as f64).collect()
            }
        }
    }
}

/// Trees a silo contributed to the global forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiloSelection {
    pub silo: SiloId,
    pub weight: f64,
    /// `N_i`.
    pub available: usize,
    /// `floor(w_i * N_i)`.
    pub sampled: usize,
    /// Extra trees taken to reach the target size.
    pub top_up: usize,
    /// Indices into the silo's forest, in the order they were added.
    pub picked: Vec<usize>,
}

impl SiloSelection {
    pub fn total(&self) -> usize {
        self.sampled + self.top_up
    }
}

#[derive(Debug, Clone)]
pub struct Aggregated {
    pub forest: RandomForest,
    pub target: usize,
    pub selections: Vec<SiloSelection>,
}

/// `floor(w * n)`, forgiving representation error just below an integer.
pub fn weighted_count(weight: f64, n: usize) -> usize {
    ((weight * n as f64 + WEIGHT_EPS).floor().max(0.0) as usize).min(n)
}

fn check_inputs(
    forests: &[(SiloId, RandomForest)],
    weights: &ClientWeights,
) -> Result<(), AggregationError> {
    let Some((_, first)) = forests.first() else {
        return Err(AggregationError::NoForests);
    };
    let mut seen = HashSet::new();
    for (silo, forest) in forests {
        if !seen.insert(silo.as_str()) {
            return Err(AggregationError::DuplicateSilo(silo.clone()));
        }
        if forest.is_empty() {
            return Err(AggregationError::EmptyForest(silo.clone()));
        }
        if !forest.same_schema(first) {
            return Err(AggregationError::SchemaMismatch(silo.clone()));
        }
    }
    if weights.entries.len() != forests.len()
        || forests.iter().any(|(s, _)| weights.get(s).is_none())
    {
        return Err(AggregationError::WeightsMismatch);
    }
    if !weights.is_resolved() {
        return Err(AggregationError::UnresolvedWeights(format!(
            "weights must all be present and sum to 1, got {:?}",
            weights.entries
        )));
    }
    Ok(())
}

/// Samples the global forest from client forests. See the module docs.
pub fn aggregate(
    forests: &[(SiloId, RandomForest)],
    weights: &ClientWeights,
    seed: u64,
) -> Result<RandomForest, AggregationError> {
    aggregate_detailed(forests, weights, seed).map(|a| a.forest)
}

/// [`aggregate`] with per-silo selection counts.
pub fn aggregate_detailed(
    forests: &[(SiloId, RandomForest)],
    weights: &ClientWeights,
    seed: u64,
) -> Result<Aggregated, AggregationError> {
    check_inputs(forests, weights)?;
    let target = forests.iter().map(|(_, f)| f.len()).max().unwrap_or(0);

    // One random order per silo; the first k_i entries are the sample and
    // the rest feed the top-up in order.
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(forests.len());
    let mut selections: Vec<SiloSelection> = Vec::with_capacity(forests.len());
    for (i, (silo, forest)) in forests.iter().enumerate() {
        let weight = weights.weight(silo);
        let n = forest.len();
        let k = weighted_count(weight, n);
        let mut order: Vec<usize> = (0..n).collect();
        StreamRng::new(seed, i as u64).shuffle(&mut order);
        selections.push(SiloSelection {
            silo: silo.clone(),
            weight,
            available: n,
            sampled: k,
            top_up: 0,
            picked: order[..k].to_vec(),
        });
        orders.push(order);
    }

    let mut deficit = target.saturating_sub(selections.iter().map(|s| s.sampled).sum());
    if deficit > 0 {
        let mut by_weight: Vec<usize> = (0..forests.len()).collect();
        by_weight.sort_by(|&a, &b| selections[b].weight.total_cmp(&selections[a].weight));
        let (weighted, zero): (Vec<usize>, Vec<usize>) = by_weight
            .into_iter()
            .partition(|&i| selections[i].weight > 0.0);
        for group in [weighted, zero] {
            while deficit > 0 {
                let mut progressed = false;
                for &i in &group {
                    if deficit == 0 {
                        break;
                    }
                    let s = &mut selections[i];
                    let next = s.sampled + s.top_up;
                    if next < s.available {
                        s.picked.push(orders[i][next]);
                        s.top_up += 1;
                        deficit -= 1;
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
        }
    }

    let total: usize = selections.iter().map(SiloSelection::total).sum();
    let mut trees = Vec::with_capacity(total);
    for ((_, forest), s) in forests.iter().zip(&selections) {
        trees.extend(s.picked.iter().map(|&t| forest.trees[t].clone()));
    }
    let first = &forests[0].1;
    let mut params = first.params.clone();
    params.n_estimators = trees.len();
    Ok(Aggregated {
        forest: RandomForest {
            trees,
            params,
            label_names: first.label_names.clone(),
            feature_names: first.feature_names.clone(),
        },
        target,
        selections,
    })
}

/// Equal-weight aggregation over every given silo.
pub fn uniform_aggregate(
    forests: &[(SiloId, RandomForest)],
    seed: u64,
) -> Result<RandomForest, AggregationError> {
    let silos: Vec<SiloId> = forests.iter().map(|(s, _)| s.clone()).collect();
    let weights = resolve_weights(&ClientWeights::absent(silos.iter().cloned()), &silos)?;
    aggregate(forests, &weights, seed)
}

/// Every tree of every forest, in silo order. Debug variant that ignores
/// weights and the size target.
pub fn concatenate(forests: &[(SiloId, RandomForest)]) -> Result<RandomForest, AggregationError> {
    let silos: Vec<SiloId> = forests.iter().map(|(s, _)| s.clone()).collect();
    let weights = resolve_weights(&ClientWeights::absent(silos.iter().cloned()), &silos)?;
    check_inputs(forests, &weights)?;
    let mut out = forests[0].1.clone();
    for (_, f) in &forests[1..] {
        out.trees.extend_from_slice(&f.trees);
    }
    out.params.n_estimators = out.trees.len();
    Ok(out)
}

/// Which strategy the coordinator uses to merge client forests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    #[default]
    Uniform,
    Weighted,
}
