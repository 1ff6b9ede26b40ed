use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, AugmentedAdjacency};
use crate::linalg::{gemv_acc, gemv_backward};
use crate::scalar::Scalar;

use super::cell::{Cell, CellShape, StepCache};
use super::param::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    ConvLstm,
    GraphLstm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lstm => "lstm",
            ModelKind::ConvLstm => "convlstm",
            ModelKind::GraphLstm => "graphlstm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "convlstm" | "conv-lstm" => Ok(ModelKind::ConvLstm),
            "graphlstm" | "graph-lstm" => Ok(ModelKind::GraphLstm),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Architecture of a network, enough to rebuild it with fresh weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layers: usize,
    /// Feature count (LSTM), channel count (ConvLSTM) or node count (GraphLSTM).
    pub input: usize,
    /// Hidden size (LSTM) or filter count (ConvLSTM); GraphLSTM uses one unit per node.
    pub units: usize,
    pub outputs: usize,
    /// Graph edges (GraphLSTM only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl ModelSpec {
    pub fn lstm(features: usize, hidden: usize, layers: usize) -> Self {
        Self {
            kind: ModelKind::Lstm,
            layers,
            input: features,
            units: hidden,
            outputs: 1,
            edges: None,
        }
    }

    pub fn convlstm(channels: usize, filters: usize, layers: usize) -> Self {
        Self {
            kind: ModelKind::ConvLstm,
            layers,
            input: channels,
            units: filters,
            outputs: 1,
            edges: None,
        }
    }

    pub fn graphlstm(adjacency: &AdjacencyMatrix, layers: usize) -> Self {
        let n = adjacency.n();
        Self {
            kind: ModelKind::GraphLstm,
            layers,
            input: n,
            units: n,
            outputs: n,
            edges: Some(adjacency.edge_list()),
        }
    }

    pub fn support(&self) -> Result<Option<AugmentedAdjacency>> {
        match &self.edges {
            Some(edges) => Ok(Some(AdjacencyMatrix::from_edges(self.input, edges)?.augment())),
            None => Ok(None),
        }
    }

    pub fn cell_shapes(&self) -> Result<Vec<CellShape>> {
        if self.layers == 0 || self.input == 0 || self.units == 0 || self.outputs == 0 {
            return Err(Error::invalid(format!("degenerate model spec {self:?}")));
        }
        let shapes = match self.kind {
            ModelKind::Lstm => (0..self.layers)
                .map(|l| CellShape::Lstm {
                    input: if l == 0 { self.input } else { self.units },
                    hidden: self.units,
                })
                .collect(),
            ModelKind::ConvLstm => (0..self.layers)
                .map(|l| CellShape::ConvLstm {
                    channels: if l == 0 { self.input } else { self.units },
                    filters: self.units,
                })
                .collect(),
            ModelKind::GraphLstm => {
                let support = self
                    .support()?
                    .ok_or_else(|| Error::invalid("GraphLSTM spec needs graph edges"))?;
                if self.units != self.input || self.outputs != self.input {
                    return Err(Error::invalid("GraphLSTM uses one unit and one output per node"));
                }
                vec![CellShape::GraphLstm { support }; self.layers]
            }
        };
        Ok(shapes)
    }
}

/// Initial output bias: the middle of the scaled range. The head weights
/// start at zero, so every output starts here with the rectifier active. A
/// random head can start negative for every sample when the hidden state
/// barely varies (e.g. inputs dominated by constant sentinel channels), and
/// then no gradient ever flows.
pub const HEAD_BIAS_INIT: f64 = 0.5;

/// Stacked recurrent cells followed by an affine head with a rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub spec: ModelSpec,
    pub layers: Vec<Cell<T>>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
}

/// Forward record of one window, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    steps: Vec<Vec<StepCache<T>>>,
    /// Inverted-dropout multipliers per layer and step (empty without dropout).
    masks: Vec<Vec<Vec<T>>>,
    head_in: Vec<T>,
    pre: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        let shapes = spec.cell_shapes()?;
        let layers: Vec<Cell<T>> = shapes.into_iter().map(|s| Cell::new(s, rng)).collect();
        let d = layers.last().expect("at least one layer").shape.state_dim();
        let head_w = Tensor::zeros("out.w", &[spec.outputs, d]);
        let mut head_b = Tensor::zeros("out.b", &[spec.outputs]);
        head_b.fill(T::of(HEAD_BIAS_INIT));
        Ok(Self {
            spec,
            layers,
            head_w,
            head_b,
        })
    }

    /// All weights zero (every forecast is zero).
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let shapes = spec.cell_shapes()?;
        let layers: Vec<Cell<T>> = shapes.into_iter().map(Cell::zeros).collect();
        let d = layers.last().expect("at least one layer").shape.state_dim();
        Ok(Self {
            head_w: Tensor::zeros("out.w", &[spec.outputs, d]),
            head_b: Tensor::zeros("out.b", &[spec.outputs]),
            spec,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].shape.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.outputs
    }

    /// Tensors in canonical order: layer by layer, then the head.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.layers.iter().flat_map(|l| l.tensors.iter()).collect();
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.layers.iter_mut().flat_map(|l| l.tensors.iter_mut()).collect();
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Qualified tensor names, e.g. `l0.w_gc`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.tensors.iter().map(move |t| format!("l{i}.{}", t.name)))
            .collect();
        out.push(self.head_w.name.clone());
        out.push(self.head_b.name.clone());
        out
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameters free to be non-zero (masked entries excluded).
    pub fn trainable_count(&self) -> usize {
        self.tensors().iter().map(|t| t.support_size()).sum()
    }

    pub fn forward_flops(&self, lookback: usize) -> u64 {
        let cells: u64 = self.layers.iter().map(|l| l.shape.forward_flops()).sum();
        let d = self.head_w.shape[1] as u64;
        cells * lookback as u64 + 2 * self.spec.outputs as u64 * d + self.spec.outputs as u64
    }

    /// Reverse accumulation costs about two forward passes.
    pub fn backward_flops(&self, lookback: usize) -> u64 {
        2 * self.forward_flops(lookback)
    }

    /// Runs `window` (`L × input_dim`, row per step). With `dropout = Some((p, rng))`
    /// inverted dropout is applied to every layer's hidden output.
    pub fn forward<R: Rng>(&self, window: &[T], dropout: Option<(f64, &mut R)>) -> Result<Trace<T>> {
        let m = self.input_dim();
        if window.is_empty() || window.len() % m != 0 {
            return Err(Error::invalid(format!(
                "window of {} values is not a whole number of {m}-wide steps",
                window.len()
            )));
        }
        let steps = window.len() / m;
        let mut masks: Vec<Vec<Vec<T>>> = Vec::new();
        if let Some((p, rng)) = dropout {
            if p > 0.0 {
                let keep = T::of(1.0 / (1.0 - p));
                for layer in &self.layers {
                    let d = layer.shape.state_dim();
                    masks.push(
                        (0..steps)
                            .map(|_| {
                                (0..d)
                                    .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
                                    .collect()
                            })
                            .collect(),
                    );
                }
            }
        }
        let mut caches: Vec<Vec<StepCache<T>>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let d = layer.shape.state_dim();
            let mut h = vec![T::zero(); d];
            let mut c = vec![T::zero(); d];
            let mut layer_caches = Vec::with_capacity(steps);
            for t in 0..steps {
                let x: Vec<T> = if l == 0 {
                    window[t * m..(t + 1) * m].to_vec()
                } else {
                    let below = &caches[l - 1][t].h;
                    match masks.get(l - 1) {
                        Some(mk) => below.iter().zip(&mk[t]).map(|(&a, &b)| a * b).collect(),
                        None => below.clone(),
                    }
                };
                let cache = layer.forward(&x, &h, &c);
                if cache.h.iter().chain(&cache.c).any(|v| !v.is_finite()) {
                    return Err(Error::Numeric {
                        step: t,
                        message: format!("non-finite activation in layer {l}"),
                    });
                }
                h.clone_from(&cache.h);
                c.clone_from(&cache.c);
                layer_caches.push(cache);
            }
            caches.push(layer_caches);
        }
        let last = self.layers.len() - 1;
        let top = &caches[last][steps - 1].h;
        let head_in: Vec<T> = match masks.get(last) {
            Some(mk) => top.iter().zip(&mk[steps - 1]).map(|(&a, &b)| a * b).collect(),
            None => top.clone(),
        };
        let mut pre = self.head_b.data.clone();
        gemv_acc(&self.head_w.data, &head_in, &mut pre);
        let output = pre.iter().map(|&v| v.max(T::zero())).collect();
        Ok(Trace {
            steps: caches,
            masks,
            head_in,
            pre,
            output,
        })
    }

    pub fn predict(&self, window: &[T]) -> Result<Vec<T>> {
        Ok(self.forward::<rand_chacha::ChaCha8Rng>(window, None)?.output)
    }

    /// Backpropagation through time from `d_out = ∂L/∂ŷ`, accumulating into `grads`.
    pub fn backward(&self, trace: &Trace<T>, d_out: &[T], grads: &mut [Vec<T>]) {
        let n_layer_tensors: Vec<usize> = self.layers.iter().map(|l| l.tensors.len()).collect();
        let head_at: usize = n_layer_tensors.iter().sum();
        // rectifier: gradient passes where the preactivation is positive
        let dpre: Vec<T> = trace
            .pre
            .iter()
            .zip(d_out)
            .map(|(&p, &g)| if p > T::zero() { g } else { T::zero() })
            .collect();
        let (layer_grads, head_grads) = grads.split_at_mut(head_at);
        for (b, &g) in head_grads[1].iter_mut().zip(&dpre) {
            *b = *b + g;
        }
        let d_top = self.head_w.shape[1];
        let mut d_head_in = vec![T::zero(); d_top];
        gemv_backward(&self.head_w.data, &trace.head_in, &dpre, &mut head_grads[0], Some(&mut d_head_in));

        let steps = trace.steps[0].len();
        let last = self.layers.len() - 1;
        // gradient w.r.t. each layer's (post-dropout) output, per step
        let mut d_out_seq: Vec<Vec<T>> = vec![vec![T::zero(); d_top]; steps];
        d_out_seq[steps - 1] = d_head_in;
        let mut offset = head_at;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let d = layer.shape.state_dim();
            offset -= n_layer_tensors[l];
            let g = &mut layer_grads[offset..offset + n_layer_tensors[l]];
            let mut dh_rec = vec![T::zero(); d];
            let mut dc_rec = vec![T::zero(); d];
            let mut d_below = if l > 0 {
                vec![vec![T::zero(); layer.shape.input_dim()]; steps]
            } else {
                Vec::new()
            };
            for t in (0..steps).rev() {
                let mut dh: Vec<T> = match trace.masks.get(l) {
                    Some(mk) => d_out_seq[t].iter().zip(&mk[t]).map(|(&a, &b)| a * b).collect(),
                    None => d_out_seq[t].clone(),
                };
                for (a, &b) in dh.iter_mut().zip(&dh_rec) {
                    *a = *a + b;
                }
                let dx = if l > 0 { Some(d_below[t].as_mut_slice()) } else { None };
                let (dhp, dcp) = layer.backward(&trace.steps[l][t], &dh, &dc_rec, g, dx);
                dh_rec = dhp;
                dc_rec = dcp;
            }
            d_out_seq = d_below;
        }
    }

    /// Loss and parameter gradient for one sample.
    pub fn sample_gradient<R: Rng>(
        &self,
        window: &[T],
        target: &[T],
        dropout: Option<(f64, &mut R)>,
    ) -> Result<(T, Vec<Vec<T>>)> {
        let trace = self.forward(window, dropout)?;
        let loss = compute_loss(target, &trace.output)?;
        let d_out = loss_gradient(target, &trace.output);
        let mut grads = self.zero_grads();
        self.backward(&trace, &d_out, &mut grads);
        Ok((loss, grads))
    }

    /// Mean loss and mean gradient over a batch. Samples run in parallel; the
    /// reduction is sequential in batch order, so results do not depend on
    /// thread scheduling.
    pub fn batch_gradient(&self, batch: &[(&[T], &[T], u64)], dropout: f64) -> Result<(T, Vec<Vec<T>>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let per_sample: Vec<Result<(T, Vec<Vec<T>>)>> = batch
            .par_iter()
            .map(|&(window, target, seed)| {
                if dropout > 0.0 {
                    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                    self.sample_gradient(window, target, Some((dropout, &mut rng)))
                } else {
                    self.sample_gradient::<rand_chacha::ChaCha8Rng>(window, target, None)
                }
            })
            .collect();
        let mut total = T::zero();
        let mut acc = self.zero_grads();
        for r in per_sample {
            let (loss, g) = r?;
            total = total + loss;
            for (a, b) in acc.iter_mut().zip(&g) {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x = *x + y;
                }
            }
        }
        let scale = T::one() / T::of_usize(batch.len());
        for a in &mut acc {
            a.iter_mut().for_each(|v| *v = *v * scale);
        }
        Ok((total * scale, acc))
    }
}

/// `(1/N) Σ [(y − ŷ)² + |y − ŷ|]`.
pub fn compute_loss<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "loss needs equal non-empty lengths, got {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    let total: T = y
        .iter()
        .zip(y_hat)
        .map(|(&a, &b)| {
            let e = a - b;
            e * e + e.abs()
        })
        .sum();
    Ok(total / T::of_usize(y.len()))
}

/// `∂L/∂ŷ`, with the subgradient of `|·|` taken as 0 at 0.
pub fn loss_gradient<T: Scalar>(y: &[T], y_hat: &[T]) -> Vec<T> {
    let inv = T::one() / T::of_usize(y.len());
    y.iter()
        .zip(y_hat)
        .map(|(&a, &b)| {
            let e = b - a;
            let sign = if e > T::zero() {
                T::one()
            } else if e < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            (T::of(2.0) * e + sign) * inv
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_examples() {
        assert_eq!(compute_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(compute_loss(&[2.0], &[0.0]).unwrap(), 6.0);
        let y = [0.3, -1.2, 4.0];
        let a = [1.0, 0.0, 2.5];
        let b: Vec<f64> = y.iter().zip(&a).map(|(yi, ai)| 2.0 * yi - ai).collect();
        assert!((compute_loss(&y, &a).unwrap() - compute_loss(&y, &b).unwrap()).abs() < 1e-12);
        assert!(compute_loss::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn zero_residual_gradient_is_zero() {
        assert_eq!(loss_gradient(&[1.0, 2.0], &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn kind_parses() {
        for k in [ModelKind::Lstm, ModelKind::ConvLstm, ModelKind::GraphLstm] {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("gru".parse::<ModelKind>().is_err());
    }

    #[test]
    fn zero_network_forecasts_zero() {
        let net = Network::<f64>::zeros(ModelSpec::lstm(3, 4, 2)).unwrap();
        assert_eq!(net.predict(&[0.5; 3 * 6]).unwrap(), vec![0.0]);
    }

    #[test]
    fn dropout_masks_are_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::<f64>::new(ModelSpec::lstm(2, 5, 2), &mut rng).unwrap();
        let window = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let run = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            net.forward(&window, Some((0.3, &mut r))).unwrap().output
        };
        assert_eq!(run(4), run(4));
        assert!(net.forward::<ChaCha8Rng>(&window, None).unwrap().output[0] >= 0.0);
    }

    #[test]
    fn parallel_batch_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let adj = AdjacencyMatrix::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let net = Network::<f64>::new(ModelSpec::graphlstm(&adj, 1), &mut rng).unwrap();
        let windows: Vec<Vec<f64>> = (0..16).map(|i| (0..12).map(|j| ((i * 7 + j) % 5) as f64 / 5.0).collect()).collect();
        let targets: Vec<Vec<f64>> = (0..16).map(|i| vec![(i % 3) as f64 / 3.0; 4]).collect();
        let batch: Vec<(&[f64], &[f64], u64)> = windows
            .iter()
            .zip(&targets)
            .enumerate()
            .map(|(i, (w, t))| (w.as_slice(), t.as_slice(), i as u64))
            .collect();
        let a = net.batch_gradient(&batch, 0.2).unwrap();
        let b = net.batch_gradient(&batch, 0.2).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    /// Central differences on every on-support entry; returns the worst
    /// relative error `|a − n| / max(|a|, |n|, floor)`.
    fn worst_gradient_error(net: &mut Network<f64>, window: &[f64], target: &[f64], dropout: Option<(f64, u64)>) -> f64 {
        let loss = |net: &Network<f64>| {
            let out = match dropout {
                Some((p, seed)) => net.forward(window, Some((p, &mut ChaCha8Rng::seed_from_u64(seed)))).unwrap().output,
                None => net.predict(window).unwrap(),
            };
            compute_loss(target, &out).unwrap()
        };
        let analytic = match dropout {
            Some((p, seed)) => net.sample_gradient(window, target, Some((p, &mut ChaCha8Rng::seed_from_u64(seed)))),
            None => net.sample_gradient::<ChaCha8Rng>(window, target, None),
        }
        .unwrap()
        .1;
        let h = 1e-5;
        let mut worst = 0.0f64;
        let n_tensors = net.tensors().len();
        for k in 0..n_tensors {
            for i in 0..net.tensors()[k].len() {
                if !net.tensors()[k].on_support(i) {
                    assert_eq!(analytic[k][i], 0.0);
                    continue;
                }
                let orig = net.tensors()[k].data[i];
                net.tensors_mut()[k].data[i] = orig + h;
                let up = loss(net);
                net.tensors_mut()[k].data[i] = orig - h;
                let down = loss(net);
                net.tensors_mut()[k].data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[k][i];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
        worst
    }

    fn check_kind(spec: ModelSpec, seed: u64, dropout: Option<(f64, u64)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::<f64>::new(spec, &mut rng).unwrap();
        // random head so lower layers receive gradient; keep the rectifier away from its kink
        net.head_w.glorot(net.head_w.shape[1], net.head_w.shape[0], &mut rng);
        net.head_b.fill(0.5);
        let m = net.input_dim();
        let window: Vec<f64> = (0..5 * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(2.0..3.0)).collect();
        let worst = worst_gradient_error(&mut net, &window, &target, dropout);
        assert!(worst < 1e-4, "{:?}: worst relative error {worst:e}", net.spec.kind);
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        check_kind(ModelSpec::lstm(6, 6, 1), 1, None);
        check_kind(ModelSpec::lstm(4, 6, 2), 2, Some((0.3, 7)));
    }

    #[test]
    fn convlstm_gradients_match_finite_differences() {
        check_kind(ModelSpec::convlstm(1, 3, 1), 3, None);
        check_kind(ModelSpec::convlstm(2, 2, 2), 4, Some((0.2, 8)));
    }

    #[test]
    fn graphlstm_gradients_match_finite_differences() {
        let adj = AdjacencyMatrix::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]).unwrap();
        check_kind(ModelSpec::graphlstm(&adj, 1), 5, None);
        check_kind(ModelSpec::graphlstm(&adj, 2), 6, Some((0.25, 9)));
    }
}
