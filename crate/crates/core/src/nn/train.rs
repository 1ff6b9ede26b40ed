use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::scalar::Scalar;

use super::cell::PIXELS;
use super::dataset::{Sample, TrainData};
use super::forecast::rollout;
use super::network::{compute_loss, ModelKind, ModelSpec, Network};
use super::optim::{rmsprop_update, OpCounter, RmsPropState};

pub const LAYER_CHOICES: [usize; 2] = [1, 2];
pub const NEURON_CHOICES: [usize; 4] = [10, 20, 50, 100];
pub const BATCH_CHOICES: [usize; 2] = [64, 128];
pub const FILTER_RANGE: (usize, usize) = (16, 258);
pub const DROPOUT_MAX: f64 = 0.5;
pub const LR_RANGE: (f64, f64) = (1e-6, 1e-1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub layers: usize,
    /// LSTM hidden size; GraphLSTM always uses one unit per node.
    pub neurons: usize,
    /// ConvLSTM filter count.
    pub filters: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub repeats: usize,
    pub lookback: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Score validation by recursive forecasts of this many steps, from
    /// origins spaced one horizon apart, instead of one-step predictions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_horizon: Option<usize>,
    /// Optional cap on optimizer steps per repeat.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            neurons: 20,
            filters: 16,
            dropout: 0.0,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 500,
            repeats: 5,
            lookback: 24,
            patience: 20,
            seed: 0,
            validation_horizon: None,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// Checks every field against the tuning ranges.
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let bad = |what: String| Err(Error::invalid(what));
        if !LAYER_CHOICES.contains(&self.layers) {
            return bad(format!("layers must be 1 or 2, got {}", self.layers));
        }
        if kind == ModelKind::Lstm && !NEURON_CHOICES.contains(&self.neurons) {
            return bad(format!("neurons must be one of {NEURON_CHOICES:?}, got {}", self.neurons));
        }
        if kind == ModelKind::ConvLstm && !(FILTER_RANGE.0..=FILTER_RANGE.1).contains(&self.filters) {
            return bad(format!("filters must lie in {FILTER_RANGE:?}, got {}", self.filters));
        }
        if !(0.0..DROPOUT_MAX).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, {DROPOUT_MAX}), got {}", self.dropout));
        }
        if !(LR_RANGE.0..=LR_RANGE.1).contains(&self.learning_rate) {
            return bad(format!("learning rate must lie in [1e-6, 1e-1], got {}", self.learning_rate));
        }
        if !BATCH_CHOICES.contains(&self.batch_size) {
            return bad(format!("batch size must be 64 or 128, got {}", self.batch_size));
        }
        if self.epochs == 0
            || self.repeats == 0
            || self.lookback == 0
            || self.max_steps == Some(0)
            || self.validation_horizon == Some(0)
        {
            return bad("epochs, repeats, lookback, horizons and max steps must be positive".into());
        }
        Ok(())
    }
}

/// Seed of repeat `k`, decorrelated from the base seed (SplitMix64).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Architecture of a `kind` model for this data and configuration.
pub fn model_spec(kind: ModelKind, adjacency: &AdjacencyMatrix, input_dim: usize, cfg: &TrainConfig) -> Result<ModelSpec> {
    match kind {
        ModelKind::Lstm => Ok(ModelSpec::lstm(input_dim, cfg.neurons, cfg.layers)),
        ModelKind::ConvLstm => {
            if input_dim == 0 || input_dim % PIXELS != 0 {
                return Err(Error::invalid(format!("ConvLSTM input of {input_dim} values is not a stack of 3×3 frames")));
            }
            Ok(ModelSpec::convlstm(input_dim / PIXELS, cfg.filters, cfg.layers))
        }
        ModelKind::GraphLstm => {
            if adjacency.n() != input_dim {
                return Err(Error::invalid(format!(
                    "graph of {} nodes for {input_dim} inputs",
                    adjacency.n()
                )));
            }
            Ok(ModelSpec::graphlstm(adjacency, cfg.layers))
        }
    }
}

/// One training run from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun<T> {
    pub seed: u64,
    /// Weights at the best validation loss (or the last epoch without a
    /// validation block).
    pub network: Network<T>,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub train_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
    /// Training passes and updates only; validation passes are not counted.
    pub ops: OpCounter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub runs: Vec<TrainRun<T>>,
    /// Index of the run with the lowest validation loss.
    pub best: usize,
}

impl<T> TrainOutcome<T> {
    pub fn best_run(&self) -> &TrainRun<T> {
        &self.runs[self.best]
    }

    pub fn total_ops(&self) -> OpCounter {
        let mut c = OpCounter::default();
        for r in &self.runs {
            c.add(&r.ops);
        }
        c
    }
}

/// Mean loss over `samples`, without dropout.
pub fn evaluate_loss<T: Scalar>(net: &Network<T>, data: &TrainData, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let losses: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| {
            let w: Vec<T> = data.layout.window(&data.scaled, s, data.lookback);
            let y: Vec<T> = data.layout.target(&data.scaled, s);
            Ok(compute_loss(&y, &net.predict(&w)?)?.as_f64())
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Mean loss of recursive `h`-step forecasts over the validation block, from
/// origins `h` steps apart (a shorter final leg is included).
pub fn rollout_loss<T: Scalar>(net: &Network<T>, data: &TrainData, h: usize) -> Result<f64> {
    let (start, end) = match (data.validation.first(), data.validation.last()) {
        (Some(a), Some(b)) => (a.t, b.t + 1),
        _ => return Err(Error::invalid("no samples to evaluate")),
    };
    let mut total = 0.0;
    let mut count = 0usize;
    let mut origin = start;
    while origin < end {
        let steps = h.min(end - origin);
        let history: Vec<Vec<f64>> = data.scaled.iter().map(|r| r[..origin].to_vec()).collect();
        let pred = rollout(net, &data.layout, data.lookback, &history, steps)?;
        for (row, p) in data.scaled.iter().zip(&pred) {
            total += compute_loss(&row[origin..origin + steps], p)? * steps as f64;
            count += steps;
        }
        origin += steps;
    }
    Ok(total / count as f64)
}

fn validation_loss<T: Scalar>(net: &Network<T>, data: &TrainData, cfg: &TrainConfig) -> Result<f64> {
    match cfg.validation_horizon {
        Some(h) => rollout_loss(net, data, h),
        None => evaluate_loss(net, data, &data.validation),
    }
}

/// Mini-batch RMSprop with early stopping, from one seed.
pub fn fit_once<T: Scalar>(spec: &ModelSpec, data: &TrainData, cfg: &TrainConfig, seed: u64) -> Result<TrainRun<T>> {
    if data.train.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if data.lookback != cfg.lookback {
        return Err(Error::invalid(format!(
            "data built for lookback {}, config asks for {}",
            data.lookback, cfg.lookback
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<T>::new(spec.clone(), &mut rng)?;
    if net.input_dim() != data.input_dim() || net.output_dim() != data.layout.output_dim() {
        return Err(Error::invalid("model shape does not match the data layout"));
    }
    let mut opt = RmsPropState::new(net.tensors());
    let lr = T::of(cfg.learning_rate);
    let fwd = net.forward_flops(cfg.lookback);
    let bwd = net.backward_flops(cfg.lookback);
    let diverged = |epoch: usize| Error::Training {
        epoch,
        lr: cfg.learning_rate,
    };

    let mut order = data.train.clone();
    let mut ops = OpCounter::default();
    let mut train_curve = Vec::new();
    let mut validation_curve = Vec::new();
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut epochs_run = 0;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| ops.optimizer_steps >= m) {
                break;
            }
            let windows: Vec<(Vec<T>, Vec<T>, u64)> = chunk
                .iter()
                .map(|s| {
                    (
                        data.layout.window(&data.scaled, s, cfg.lookback),
                        data.layout.target(&data.scaled, s),
                        rng.gen(),
                    )
                })
                .collect();
            let batch: Vec<(&[T], &[T], u64)> = windows.iter().map(|(w, y, s)| (w.as_slice(), y.as_slice(), *s)).collect();
            let (loss, grads) = net.batch_gradient(&batch, cfg.dropout).map_err(|e| match e {
                Error::Numeric { .. } => diverged(epoch),
                other => other,
            })?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(diverged(epoch));
            }
            ops.update_flops += rmsprop_update(net.tensors_mut(), &grads, &mut opt, lr);
            ops.forward_flops += fwd * chunk.len() as u64;
            ops.backward_flops += bwd * chunk.len() as u64;
            ops.optimizer_steps += 1;
            ops.samples += chunk.len() as u64;
            loss_sum += loss.as_f64() * chunk.len() as f64;
            seen += chunk.len();
        }
        if seen == 0 {
            break;
        }
        epochs_run = epoch + 1;
        train_curve.push(loss_sum / seen as f64);
        if data.validation.is_empty() {
            best = (f64::NAN, net.clone(), epoch);
        } else {
            let v = validation_loss(&net, data, cfg).map_err(|e| match e {
                Error::Numeric { .. } => diverged(epoch),
                other => other,
            })?;
            if !v.is_finite() {
                return Err(diverged(epoch));
            }
            validation_curve.push(v);
            log::debug!("epoch {epoch}: train {:.6} validation {v:.6}", train_curve[epoch]);
            if v < best.0 {
                best = (v, net.clone(), epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > cfg.patience {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }
        if cfg.max_steps.is_some_and(|m| ops.optimizer_steps >= m) {
            break;
        }
    }
    let (best_validation, network, best_epoch) = best;
    Ok(TrainRun {
        seed,
        network,
        best_epoch,
        best_validation,
        epochs_run,
        stopped_early,
        train_curve,
        validation_curve,
        ops,
    })
}

/// Runs `cfg.repeats` seeds derived from `cfg.seed` and keeps all runs; the
/// best is the one with the lowest validation loss.
pub fn train_model<T: Scalar>(
    kind: ModelKind,
    adjacency: &AdjacencyMatrix,
    data: &TrainData,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate(kind)?;
    let spec = model_spec(kind, adjacency, data.input_dim(), cfg)?;
    let mut runs = Vec::with_capacity(cfg.repeats);
    for k in 0..cfg.repeats {
        let seed = derive_seed(cfg.seed, k as u64);
        let run = fit_once::<T>(&spec, data, cfg, seed)?;
        log::info!(
            "{kind} repeat {k}: {} epochs, best validation {:.6} at epoch {}",
            run.epochs_run,
            run.best_validation,
            run.best_epoch
        );
        runs.push(run);
    }
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.best_validation.total_cmp(&b.1.best_validation).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one repeat");
    Ok(TrainOutcome { runs, best })
}


#[cfg(test)]
mod tests {
    use super::tests_support::sine_data;
    use super::*;
    use crate::data::{Split, SeriesMatrix};
    use crate::nn::dataset::InputLayout;
    use chrono::NaiveDate;

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            neurons: 10,
            learning_rate: 1e-2,
            epochs: 30,
            repeats: 1,
            lookback: 12,
            patience: 5,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_ranges() {
        let ok = TrainConfig::default();
        assert!(ok.validate(ModelKind::Lstm).is_ok());
        assert!(TrainConfig { layers: 3, ..ok.clone() }.validate(ModelKind::Lstm).is_err());
        assert!(TrainConfig { neurons: 30, ..ok.clone() }.validate(ModelKind::Lstm).is_err());
        assert!(TrainConfig { neurons: 30, ..ok.clone() }.validate(ModelKind::GraphLstm).is_ok());
        assert!(TrainConfig { filters: 8, ..ok.clone() }.validate(ModelKind::ConvLstm).is_err());
        assert!(TrainConfig { dropout: 0.5, ..ok.clone() }.validate(ModelKind::Lstm).is_err());
        assert!(TrainConfig { learning_rate: 0.5, ..ok.clone() }.validate(ModelKind::Lstm).is_err());
        assert!(TrainConfig { batch_size: 32, ..ok }.validate(ModelKind::Lstm).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|k| derive_seed(42, k)).collect();
        let mut u = s.clone();
        u.dedup();
        assert_eq!(u.len(), 5);
        assert_eq!(s[0], derive_seed(42, 0));
    }

    #[test]
    fn identical_seeds_give_identical_curves() {
        let (data, _) = sine_data(8, 12, 24);
        let cfg = TrainConfig { epochs: 4, dropout: 0.2, ..quick_cfg() };
        let adj = AdjacencyMatrix::empty(1);
        let a = train_model::<f64>(ModelKind::Lstm, &adj, &data, &cfg).unwrap();
        let b = train_model::<f64>(ModelKind::Lstm, &adj, &data, &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.runs[0].train_curve), bits(&b.runs[0].train_curve));
        assert_eq!(bits(&a.runs[0].validation_curve), bits(&b.runs[0].validation_curve));
        assert_eq!(a.runs[0].network, b.runs[0].network);
    }

    #[test]
    fn zero_patience_stops_at_first_deterioration() {
        let (data, _) = sine_data(8, 12, 24);
        let cfg = TrainConfig { patience: 0, epochs: 200, learning_rate: 1e-1, ..quick_cfg() };
        let run = &train_model::<f64>(ModelKind::Lstm, &AdjacencyMatrix::empty(1), &data, &cfg).unwrap().runs[0];
        let v = &run.validation_curve;
        assert!(run.stopped_early);
        let last = v.len() - 1;
        assert!(v[last] >= v[last - 1]);
        assert!(v[..last].windows(2).all(|w| w[1] < w[0]));
        assert_eq!(run.best_epoch, last - 1);
        assert_eq!(run.best_validation, v[last - 1]);
    }

    #[test]
    fn max_steps_caps_updates() {
        let (data, _) = sine_data(8, 12, 24);
        let cfg = TrainConfig { max_steps: Some(3), ..quick_cfg() };
        let run = &train_model::<f64>(ModelKind::Lstm, &AdjacencyMatrix::empty(1), &data, &cfg).unwrap().runs[0];
        assert_eq!(run.ops.optimizer_steps, 3);
        assert_eq!(run.epochs_run, 1);
        assert!(run.ops.update_flops > 0 && run.ops.backward_flops == 2 * run.ops.forward_flops);
    }

    #[test]
    fn divergence_reports_epoch_and_rate() {
        let (mut data, _) = sine_data(4, 6, 12);
        for v in &mut data.scaled[0] {
            *v *= 1e300;
        }
        let cfg = TrainConfig { lookback: 6, learning_rate: 0.1, ..quick_cfg() };
        match train_model::<f64>(ModelKind::Lstm, &AdjacencyMatrix::empty(1), &data, &cfg) {
            Err(Error::Training { epoch, lr }) => {
                assert_eq!(epoch, 0);
                assert_eq!(lr, 0.1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn masked_weights_stay_zero_through_training() {
        let n = 5;
        let adj = AdjacencyMatrix::from_edges(n, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let steps = 24 * 6;
        let values: Vec<Vec<f64>> = (0..n)
            .map(|r| (0..steps).map(|t| 5.0 + 4.0 * ((t + 3 * r) as f64 * 0.26).sin()).collect())
            .collect();
        let t0 = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut series = SeriesMatrix::new((0..n).map(|i| format!("r{i}")).collect(), t0, 60, values).unwrap();
        series.sites = None;
        let split = Split { train: 0..96, validation: 96..120, test: 120..144 };
        let scaler = crate::data::fit_minmax(&series.values, split.train.clone()).unwrap();
        let hist: Vec<Vec<f64>> = series.values.iter().map(|r| r[..120].to_vec()).collect();
        let layout = InputLayout::Graph { regions: n };
        let data = TrainData {
            train: layout.samples(split.train.clone(), 12),
            validation: layout.samples(split.validation.clone(), 12),
            scaled: scaler.apply(&hist).unwrap(),
            scaler,
            layout,
            lookback: 12,
        };
        let cfg = TrainConfig { epochs: 3, ..quick_cfg() };
        let out = train_model::<f64>(ModelKind::GraphLstm, &adj, &data, &cfg).unwrap();
        let net = &out.best_run().network;
        let support = adj.augment();
        for name in ["w_gc", "w_n"] {
            let t = net.layers[0].tensor(name).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if !support.get(i, j) {
                        assert_eq!(t.data[i * n + j], 0.0, "{name}[{i},{j}]");
                    }
                }
            }
        }
    }
}
