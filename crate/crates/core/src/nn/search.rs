use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

use super::dataset::TrainData;
use super::network::ModelKind;
use super::train::{train_model, TrainConfig, BATCH_CHOICES, DROPOUT_MAX, FILTER_RANGE, LAYER_CHOICES, LR_RANGE, NEURON_CHOICES};

/// Candidate values per hyper-parameter. Ranges are closed except dropout,
/// which is sampled from `[lo, hi)` (or fixed when `lo == hi`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub filters: (usize, usize),
    pub dropout: (f64, f64),
    /// Log-uniform range.
    pub learning_rate: (f64, f64),
    pub batch_size: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            layers: LAYER_CHOICES.to_vec(),
            neurons: NEURON_CHOICES.to_vec(),
            filters: FILTER_RANGE,
            dropout: (0.0, DROPOUT_MAX),
            learning_rate: LR_RANGE,
            batch_size: BATCH_CHOICES.to_vec(),
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.neurons.is_empty() || self.batch_size.is_empty() {
            return Err(Error::invalid("search space has an empty choice list"));
        }
        let (f0, f1) = self.filters;
        let (d0, d1) = self.dropout;
        let (l0, l1) = self.learning_rate;
        if f0 > f1 || d0 > d1 || !(l0 > 0.0 && l0 <= l1) {
            return Err(Error::invalid("search space has an inverted range"));
        }
        Ok(())
    }

    /// Whether every searched field of `c` lies in the space.
    pub fn contains(&self, c: &TrainConfig) -> bool {
        let (d0, d1) = self.dropout;
        let dropout_ok = if d1 > d0 { (d0..d1).contains(&c.dropout) } else { c.dropout == d0 };
        self.layers.contains(&c.layers)
            && self.neurons.contains(&c.neurons)
            && (self.filters.0..=self.filters.1).contains(&c.filters)
            && dropout_ok
            && (self.learning_rate.0..=self.learning_rate.1).contains(&c.learning_rate)
            && self.batch_size.contains(&c.batch_size)
    }

    /// One configuration: sampled fields over `base`.
    pub fn sample(&self, base: &TrainConfig, rng: &mut impl Rng) -> TrainConfig {
        let pick = |xs: &[usize], rng: &mut dyn rand::RngCore| *xs.choose(rng).expect("non-empty choices");
        let (d0, d1) = self.dropout;
        let (l0, l1) = self.learning_rate;
        TrainConfig {
            layers: pick(&self.layers, rng),
            neurons: pick(&self.neurons, rng),
            filters: rng.gen_range(self.filters.0..=self.filters.1),
            dropout: if d1 > d0 { rng.gen_range(d0..d1) } else { d0 },
            learning_rate: if l1 > l0 {
                (rng.gen_range(l0.ln()..=l1.ln())).exp().clamp(l0, l1)
            } else {
                l0
            },
            batch_size: pick(&self.batch_size, rng),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: TrainConfig,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_validation: f64,
    pub trials: Vec<Trial>,
}

/// Seeded random search over `budget` configurations, each trained with the
/// epochs and repeats of `base`; returns the lowest validation loss. When
/// `base` lies in the space it is the first trial, so the result never
/// validates worse than `base` itself.
pub fn search_hyperparameters(
    kind: ModelKind,
    adjacency: &AdjacencyMatrix,
    data: &TrainData,
    base: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::invalid("search budget must be at least 1"));
    }
    if data.validation.is_empty() {
        return Err(Error::invalid("search needs a validation block"));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    let include_base = space.contains(base);
    for k in 0..budget {
        let config = if k == 0 && include_base {
            base.clone()
        } else {
            space.sample(base, &mut rng)
        };
        let validation = match train_model::<f64>(kind, adjacency, data, &config) {
            Ok(out) => out.best_run().best_validation,
            Err(Error::Training { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        log::info!("trial {k}: validation {validation:.6} with {config:?}");
        trials.push(Trial { config, validation });
    }
    let best = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.validation.total_cmp(&b.1.validation).then(a.0.cmp(&b.0)))
        .map(|(_, t)| t.clone())
        .expect("budget ≥ 1");
    Ok(SearchOutcome {
        best: best.config,
        best_validation: best.validation,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::train::tests_support::sine_data;

    fn base() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            repeats: 1,
            lookback: 12,
            patience: 2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn base_inside_the_space_is_the_first_trial() {
        let (data, _) = sine_data(6, 12, 24);
        let adj = AdjacencyMatrix::empty(1);
        let space = SearchSpace::default();
        assert!(space.contains(&base()));
        let out = search_hyperparameters(ModelKind::Lstm, &adj, &data, &base(), &space, 3, 9).unwrap();
        assert_eq!(out.trials[0].config, base());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(out.trials[1].config, space.sample(&base(), &mut rng));
        assert!(out.trials.iter().all(|t| out.best_validation <= t.validation));
        assert!(search_hyperparameters(ModelKind::Lstm, &adj, &data, &base(), &space, 0, 9).is_err());
    }

    #[test]
    fn base_outside_the_space_is_not_evaluated() {
        let (data, _) = sine_data(6, 12, 24);
        let outside = TrainConfig { neurons: 7, ..base() };
        let space = SearchSpace::default();
        assert!(!space.contains(&outside));
        let out =
            search_hyperparameters(ModelKind::Lstm, &AdjacencyMatrix::empty(1), &data, &outside, &space, 1, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(out.best, space.sample(&outside, &mut rng));
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn collapsed_space_returns_its_point() {
        let (data, _) = sine_data(6, 12, 24);
        let space = SearchSpace {
            layers: vec![1],
            neurons: vec![10],
            filters: (16, 16),
            dropout: (0.1, 0.1),
            learning_rate: (1e-2, 1e-2),
            batch_size: vec![64],
        };
        let out =
            search_hyperparameters(ModelKind::Lstm, &AdjacencyMatrix::empty(1), &data, &base(), &space, 3, 1).unwrap();
        let b = &out.best;
        assert_eq!((b.layers, b.neurons, b.filters, b.batch_size), (1, 10, 16, 64));
        assert_eq!((b.dropout, b.learning_rate), (0.1, 1e-2));
    }

    #[test]
    fn samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = SearchSpace::default();
        for _ in 0..200 {
            let c = space.sample(&base(), &mut rng);
            c.validate(ModelKind::Lstm).unwrap();
            c.validate(ModelKind::ConvLstm).unwrap();
            assert!(space.contains(&c));
        }
    }
}
