//! LSTM, ConvLSTM and GraphLSTM cells sharing one gate algebra.
//!
//! Every cell computes stacked preactivations `z = [z_f; z_i; z_o; z_c]`
//! from its input and previous hidden state, then
//!
//! ```text
//! f, i, o = σ(z_f), σ(z_i), σ(z_o)    c̄ = tanh(z_c)
//! c' = f ∘ c* + i ∘ c̄                 h' = o ∘ tanh(c')
//! ```
//!
//! where the carried state `c*` is `c` itself, except for GraphLSTM where it
//! is `(W_N ∘ Ã) · c`. The cells differ only in how `z` and `c*` are formed.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{masked_matvec, AugmentedAdjacency};
use crate::linalg::{gemv_acc, gemv_backward};
use crate::scalar::{sigmoid, Scalar};

use super::param::Tensor;

pub const GATES: usize = 4;
/// ConvLSTM frames are 3×3.
pub const FRAME: usize = 3;
pub const PIXELS: usize = FRAME * FRAME;

#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    Lstm { input: usize, hidden: usize },
    /// State is `PIXELS × filters`, pixel-major.
    ConvLstm { channels: usize, filters: usize },
    /// Input, hidden and cell state all have one entry per node.
    GraphLstm { support: AugmentedAdjacency },
}

impl CellShape {
    pub fn input_dim(&self) -> usize {
        match self {
            CellShape::Lstm { input, .. } => *input,
            CellShape::ConvLstm { channels, .. } => PIXELS * channels,
            CellShape::GraphLstm { support } => support.n(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            CellShape::Lstm { hidden, .. } => *hidden,
            CellShape::ConvLstm { filters, .. } => PIXELS * filters,
            CellShape::GraphLstm { support } => support.n(),
        }
    }

    /// Zero tensors with the canonical names and shapes of this cell.
    pub fn zero_tensors<T: Scalar>(&self) -> Vec<Tensor<T>> {
        match self {
            CellShape::Lstm { input, hidden } => vec![
                Tensor::zeros("w", &[GATES * hidden, *input]),
                Tensor::zeros("r", &[GATES * hidden, *hidden]),
                Tensor::zeros("b", &[GATES * hidden]),
            ],
            CellShape::ConvLstm { channels, filters } => vec![
                Tensor::zeros("w", &[GATES * filters, *channels, FRAME, FRAME]),
                Tensor::zeros("r", &[GATES * filters, *filters, FRAME, FRAME]),
                Tensor::zeros("b", &[GATES * filters]),
            ],
            CellShape::GraphLstm { support } => {
                let n = support.n();
                vec![
                    Tensor::zeros("w_gc", &[n, n]).masked(support.mask().to_vec()),
                    Tensor::zeros("w", &[GATES * n, n]),
                    Tensor::zeros("r", &[GATES * n, n]),
                    Tensor::zeros("b", &[GATES * n]),
                    Tensor::zeros("w_n", &[n, n]).masked(support.mask().to_vec()),
                ]
            }
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate at +1.
    pub fn init_tensors<T: Scalar>(&self, rng: &mut impl Rng) -> Vec<Tensor<T>> {
        let mut t = self.zero_tensors();
        match self {
            CellShape::Lstm { input, hidden } => {
                t[0].glorot(*input, *hidden, rng);
                t[1].glorot(*hidden, *hidden, rng);
                t[2].data[..*hidden].iter_mut().for_each(|b| *b = T::one());
            }
            CellShape::ConvLstm { channels, filters } => {
                t[0].glorot(PIXELS * channels, PIXELS * filters, rng);
                t[1].glorot(PIXELS * filters, PIXELS * filters, rng);
                t[2].data[..*filters].iter_mut().for_each(|b| *b = T::one());
            }
            CellShape::GraphLstm { support } => {
                let n = support.n();
                t[0].glorot(n, n, rng);
                t[1].glorot(n, n, rng);
                t[2].glorot(n, n, rng);
                t[3].data[..n].iter_mut().for_each(|b| *b = T::one());
                t[4].glorot(n, n, rng);
            }
        }
        t
    }

    /// Analytic floating-point operations of one forward step.
    pub fn forward_flops(&self) -> u64 {
        let d = self.state_dim() as u64;
        let gates = GATES as u64;
        let elementwise = 12 * d;
        let products = match self {
            CellShape::Lstm { input, hidden } => 2 * gates * *hidden as u64 * (*input + *hidden) as u64,
            CellShape::ConvLstm { channels, filters } => {
                2 * gates * *filters as u64 * (*channels + *filters) as u64 * valid_taps() as u64
            }
            CellShape::GraphLstm { support } => {
                let n = support.n() as u64;
                let s = support.support_size() as u64;
                2 * s + 2 * gates * n * 2 * n + 2 * s
            }
        };
        products + elementwise
    }
}

/// Number of (pixel, tap) pairs that stay inside a 3×3 frame.
fn valid_taps() -> usize {
    let mut count = 0;
    for p in 0..PIXELS {
        for tap in 0..PIXELS {
            if shifted(p, tap).is_some() {
                count += 1;
            }
        }
    }
    count
}

/// Pixel read by filter tap `tap` when producing pixel `p`, if inside the frame.
#[inline]
fn shifted(p: usize, tap: usize) -> Option<usize> {
    let (r, c) = ((p / FRAME) as isize, (p % FRAME) as isize);
    let (dr, dc) = ((tap / FRAME) as isize - 1, (tap % FRAME) as isize - 1);
    let (rr, cc) = (r + dr, c + dc);
    if (0..FRAME as isize).contains(&rr) && (0..FRAME as isize).contains(&cc) {
        Some((rr * FRAME as isize + cc) as usize)
    } else {
        None
    }
}

/// Same-padded 3×3 cross-correlation: `out[p][o] += Σ w[o][ci][tap] · x[p+tap][ci]`.
fn conv3_acc<T: Scalar>(w: &[T], x: &[T], cin: usize, cout: usize, out: &mut [T]) {
    for p in 0..PIXELS {
        for tap in 0..PIXELS {
            let Some(q) = shifted(p, tap) else { continue };
            let xq = &x[q * cin..(q + 1) * cin];
            for o in 0..cout {
                let mut acc = T::zero();
                for (ci, &xv) in xq.iter().enumerate() {
                    acc = acc + w[(o * cin + ci) * PIXELS + tap] * xv;
                }
                out[p * cout + o] = out[p * cout + o] + acc;
            }
        }
    }
}

fn conv3_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    cin: usize,
    cout: usize,
    dw: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    for p in 0..PIXELS {
        for tap in 0..PIXELS {
            let Some(q) = shifted(p, tap) else { continue };
            for o in 0..cout {
                let g = dy[p * cout + o];
                if g == T::zero() {
                    continue;
                }
                for ci in 0..cin {
                    let k = (o * cin + ci) * PIXELS + tap;
                    dw[k] = dw[k] + g * x[q * cin + ci];
                    if let Some(dx) = dx.as_deref_mut() {
                        dx[q * cin + ci] = dx[q * cin + ci] + g * w[k];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> CellState<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            h: vec![T::zero(); dim],
            c: vec![T::zero(); dim],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    gc: Vec<T>,
    cstar: Vec<T>,
    /// Activated gates, `[f; i; o; c̄]`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

/// A cell together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<T> {
    pub shape: CellShape,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Cell<T> {
    pub fn new(shape: CellShape, rng: &mut impl Rng) -> Self {
        let tensors = shape.init_tensors(rng);
        Self { shape, tensors }
    }

    pub fn zeros(shape: CellShape) -> Self {
        let tensors = shape.zero_tensors();
        Self { shape, tensors }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// One checked recurrence step.
    pub fn step(&self, x: &[T], state: &CellState<T>) -> Result<CellState<T>> {
        let d = self.shape.state_dim();
        if x.len() != self.shape.input_dim() || state.h.len() != d || state.c.len() != d {
            return Err(Error::invalid(format!(
                "cell expects input {} and state {d}, got input {} and state {}/{}",
                self.shape.input_dim(),
                x.len(),
                state.h.len(),
                state.c.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: 0,
                message: "non-finite cell input".into(),
            });
        }
        self.check_support()?;
        let cache = self.forward(x, &state.h, &state.c);
        Ok(CellState { h: cache.h, c: cache.c })
    }

    /// Masked tensors must be exactly zero off their support.
    pub fn check_support(&self) -> Result<()> {
        for t in &self.tensors {
            if let Some(mask) = &t.mask {
                if let Some(k) = mask.iter().zip(&t.data).position(|(&m, &v)| !m && v != T::zero()) {
                    return Err(Error::Invariant(format!(
                        "{} has non-zero entry {k} outside its support",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T], h: &[T], c: &[T]) -> StepCache<T> {
        let d = self.shape.state_dim();
        let p = &self.tensors;
        let mut z = vec![T::zero(); GATES * d];
        let mut gc = Vec::new();
        match &self.shape {
            CellShape::Lstm { .. } => {
                z.copy_from_slice(&p[2].data);
                gemv_acc(&p[0].data, x, &mut z);
                gemv_acc(&p[1].data, h, &mut z);
            }
            CellShape::ConvLstm { channels, filters } => {
                let k = *filters;
                let mut tmp = Vec::with_capacity(PIXELS * GATES * k);
                for _ in 0..PIXELS {
                    tmp.extend_from_slice(&p[2].data);
                }
                conv3_acc(&p[0].data, x, *channels, GATES * k, &mut tmp);
                conv3_acc(&p[1].data, h, k, GATES * k, &mut tmp);
                for px in 0..PIXELS {
                    for q in 0..GATES {
                        for j in 0..k {
                            z[q * d + px * k + j] = tmp[px * GATES * k + q * k + j];
                        }
                    }
                }
            }
            CellShape::GraphLstm { support } => {
                gc = masked_matvec(&p[0].data, support.mask(), x);
                z.copy_from_slice(&p[3].data);
                gemv_acc(&p[1].data, &gc, &mut z);
                gemv_acc(&p[2].data, h, &mut z);
            }
        }
        let cstar = match &self.shape {
            CellShape::GraphLstm { support } => masked_matvec(&p[4].data, support.mask(), c),
            _ => c.to_vec(),
        };
        let mut gates = vec![T::zero(); GATES * d];
        let mut c_new = vec![T::zero(); d];
        let mut tanh_c = vec![T::zero(); d];
        let mut h_new = vec![T::zero(); d];
        for e in 0..d {
            let f = sigmoid(z[e]);
            let i = sigmoid(z[d + e]);
            let o = sigmoid(z[2 * d + e]);
            let g = z[3 * d + e].tanh();
            gates[e] = f;
            gates[d + e] = i;
            gates[2 * d + e] = o;
            gates[3 * d + e] = g;
            c_new[e] = f * cstar[e] + i * g;
            tanh_c[e] = c_new[e].tanh();
            h_new[e] = o * tanh_c[e];
        }
        StepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            gc,
            cstar,
            gates,
            tanh_c,
            c: c_new,
            h: h_new,
        }
    }

    /// Accumulates parameter gradients into `grads` (one vector per tensor)
    /// and returns `(∂/∂h_prev, ∂/∂c_prev)`. `dx`, when given, receives `∂/∂x`.
    pub fn backward(
        &self,
        cache: &StepCache<T>,
        dh: &[T],
        dc: &[T],
        grads: &mut [Vec<T>],
        mut dx: Option<&mut [T]>,
    ) -> (Vec<T>, Vec<T>) {
        let d = self.shape.state_dim();
        let p = &self.tensors;
        let one = T::one();
        let mut dz = vec![T::zero(); GATES * d];
        let mut dcstar = vec![T::zero(); d];
        for e in 0..d {
            let (f, i, o, g) = (
                cache.gates[e],
                cache.gates[d + e],
                cache.gates[2 * d + e],
                cache.gates[3 * d + e],
            );
            let tc = cache.tanh_c[e];
            let dct = dc[e] + dh[e] * o * (one - tc * tc);
            dz[e] = dct * cache.cstar[e] * f * (one - f);
            dz[d + e] = dct * g * i * (one - i);
            dz[2 * d + e] = dh[e] * tc * o * (one - o);
            dz[3 * d + e] = dct * i * (one - g * g);
            dcstar[e] = dct * f;
        }
        let mut dh_prev = vec![T::zero(); d];
        match &self.shape {
            CellShape::Lstm { .. } => {
                add_into(&mut grads[2], &dz);
                gemv_backward(&p[0].data, &cache.x, &dz, &mut grads[0], dx);
                gemv_backward(&p[1].data, &cache.h_prev, &dz, &mut grads[1], Some(&mut dh_prev));
            }
            CellShape::ConvLstm { channels, filters } => {
                let k = *filters;
                let mut tmp = vec![T::zero(); PIXELS * GATES * k];
                for px in 0..PIXELS {
                    for q in 0..GATES {
                        for j in 0..k {
                            let v = dz[q * d + px * k + j];
                            tmp[px * GATES * k + q * k + j] = v;
                            grads[2][q * k + j] = grads[2][q * k + j] + v;
                        }
                    }
                }
                conv3_backward(&p[0].data, &cache.x, &tmp, *channels, GATES * k, &mut grads[0], dx);
                conv3_backward(&p[1].data, &cache.h_prev, &tmp, k, GATES * k, &mut grads[1], Some(&mut dh_prev));
            }
            CellShape::GraphLstm { support } => {
                let n = d;
                add_into(&mut grads[3], &dz);
                let mut dgc = vec![T::zero(); n];
                gemv_backward(&p[1].data, &cache.gc, &dz, &mut grads[1], Some(&mut dgc));
                gemv_backward(&p[2].data, &cache.h_prev, &dz, &mut grads[2], Some(&mut dh_prev));
                let mask = support.mask();
                for (i, &g) in dgc.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    for j in 0..n {
                        let k = i * n + j;
                        if mask[k] {
                            grads[0][k] = grads[0][k] + g * cache.x[j];
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[j] = dx[j] + p[0].data[k] * g;
                            }
                        }
                    }
                }
            }
        }
        let dc_prev = match &self.shape {
            CellShape::GraphLstm { support } => {
                let n = d;
                let mask = support.mask();
                let mut out = vec![T::zero(); n];
                for (i, &g) in dcstar.iter().enumerate() {
                    for j in 0..n {
                        let k = i * n + j;
                        if mask[k] {
                            grads[4][k] = grads[4][k] + g * cache.c_prev[j];
                            out[j] = out[j] + p[4].data[k] * g;
                        }
                    }
                }
                out
            }
            _ => dcstar,
        };
        (dh_prev, dc_prev)
    }
}

fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

fn expect_kind<T>(cell: &Cell<T>, want: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("expected a {want} cell, got {:?}", cell.shape)))
    }
}

pub fn lstm_step<T: Scalar>(cell: &Cell<T>, x: &[T], state: &CellState<T>) -> Result<CellState<T>> {
    expect_kind(cell, "LSTM", matches!(cell.shape, CellShape::Lstm { .. }))?;
    cell.step(x, state)
}

/// `frame` is pixel-major `3 × 3 × channels`.
pub fn convlstm_step<T: Scalar>(cell: &Cell<T>, frame: &[T], state: &CellState<T>) -> Result<CellState<T>> {
    expect_kind(cell, "ConvLSTM", matches!(cell.shape, CellShape::ConvLstm { .. }))?;
    cell.step(frame, state)
}

/// GraphLSTM step over the support `ã`; the cell's masked weights must vanish off `ã`.
pub fn graphlstm_step<T: Scalar>(
    cell: &Cell<T>,
    support: &AugmentedAdjacency,
    x: &[T],
    state: &CellState<T>,
) -> Result<CellState<T>> {
    expect_kind(cell, "GraphLSTM", matches!(cell.shape, CellShape::GraphLstm { .. }))?;
    if support.n() != cell.shape.state_dim() {
        return Err(Error::invalid("support size differs from the cell's node count"));
    }
    let mut cell = cell.clone();
    for t in &mut cell.tensors {
        if t.mask.is_some() {
            t.mask = Some(support.mask().to_vec());
        }
    }
    cell.shape = CellShape::GraphLstm {
        support: support.clone(),
    };
    cell.step(x, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AdjacencyMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn path_support(n: usize) -> AugmentedAdjacency {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        AdjacencyMatrix::from_edges(n, &edges).unwrap().augment()
    }

    fn randomize(cell: &mut Cell<f64>, rng: &mut ChaCha8Rng) {
        for t in &mut cell.tensors {
            for v in &mut t.data {
                *v = rng.gen_range(-0.5..0.5);
            }
            t.apply_mask();
        }
    }

    #[test]
    fn zero_lstm_gives_zero_state() {
        let cell = Cell::<f64>::zeros(CellShape::Lstm { input: 3, hidden: 4 });
        let s = lstm_step(&cell, &[1.0, -2.0, 0.5], &CellState::zeros(4)).unwrap();
        assert_eq!(s.h, vec![0.0; 4]);
        assert_eq!(s.c, vec![0.0; 4]);
    }

    #[test]
    fn saturated_gates_keep_memory() {
        let mut cell = Cell::<f64>::zeros(CellShape::Lstm { input: 2, hidden: 3 });
        let b = &mut cell.tensor_mut("b").unwrap().data;
        b[..3].iter_mut().for_each(|v| *v = 100.0);
        b[3..6].iter_mut().for_each(|v| *v = -100.0);
        let state = CellState {
            h: vec![0.1, 0.2, 0.3],
            c: vec![0.7, -1.2, 2.0],
        };
        let next = lstm_step(&cell, &[0.4, 0.9], &state).unwrap();
        for (a, b) in next.c.iter().zip(&state.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_matches_scalar_gate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, k) = (4, 5);
        let mut cell = Cell::<f64>::zeros(CellShape::Lstm { input: m, hidden: k });
        randomize(&mut cell, &mut rng);
        let x = random_vec(&mut rng, m);
        let state = CellState {
            h: random_vec(&mut rng, k),
            c: random_vec(&mut rng, k),
        };
        let next = lstm_step(&cell, &x, &state).unwrap();
        let (w, r, b) = (&cell.tensors[0].data, &cell.tensors[1].data, &cell.tensors[2].data);
        // straight-line evaluation, one gate block at a time
        let pre = |gate: usize, e: usize| {
            let row = gate * k + e;
            let mut s = b[row];
            for j in 0..m {
                s += w[row * m + j] * x[j];
            }
            for j in 0..k {
                s += r[row * k + j] * state.h[j];
            }
            s
        };
        for e in 0..k {
            let f = sig(pre(0, e));
            let i = sig(pre(1, e));
            let o = sig(pre(2, e));
            let cbar = pre(3, e).tanh();
            let c = f * state.c[e] + i * cbar;
            let h = o * c.tanh();
            assert!((next.c[e] - c).abs() < 1e-12);
            assert!((next.h[e] - h).abs() < 1e-12);
        }
    }

    #[test]
    fn center_tap_convlstm_is_per_pixel_lstm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (cin, k) = (2, 3);
        let mut conv = Cell::<f64>::zeros(CellShape::ConvLstm { channels: cin, filters: k });
        let mut lstm = Cell::<f64>::zeros(CellShape::Lstm { input: cin, hidden: k });
        randomize(&mut lstm, &mut rng);
        let center = PIXELS / 2;
        for o in 0..GATES * k {
            for ci in 0..cin {
                conv.tensors[0].data[(o * cin + ci) * PIXELS + center] = lstm.tensors[0].data[o * cin + ci];
            }
            for ci in 0..k {
                conv.tensors[1].data[(o * k + ci) * PIXELS + center] = lstm.tensors[1].data[o * k + ci];
            }
        }
        conv.tensors[2].data.clone_from(&lstm.tensors[2].data);
        let frame = random_vec(&mut rng, PIXELS * cin);
        let state = CellState {
            h: random_vec(&mut rng, PIXELS * k),
            c: random_vec(&mut rng, PIXELS * k),
        };
        let out = convlstm_step(&conv, &frame, &state).unwrap();
        for px in 0..PIXELS {
            let s = CellState {
                h: state.h[px * k..(px + 1) * k].to_vec(),
                c: state.c[px * k..(px + 1) * k].to_vec(),
            };
            let o = lstm_step(&lstm, &frame[px * cin..(px + 1) * cin], &s).unwrap();
            for j in 0..k {
                assert!((out.h[px * k + j] - o.h[j]).abs() < 1e-12);
                assert!((out.c[px * k + j] - o.c[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_convlstm_gives_zero_state() {
        let cell = Cell::<f64>::zeros(CellShape::ConvLstm { channels: 1, filters: 2 });
        let s = convlstm_step(&cell, &[1.0; PIXELS], &CellState::zeros(PIXELS * 2)).unwrap();
        assert!(s.h.iter().all(|&v| v == 0.0));
        assert!(convlstm_step(&cell, &[1.0; 8], &CellState::zeros(PIXELS * 2)).is_err());
    }

    #[test]
    fn constant_input_center_pixel_is_shift_invariant() {
        let mut cell = Cell::<f64>::zeros(CellShape::ConvLstm { channels: 1, filters: 2 });
        // spatially constant filters: every tap of a filter shares one value
        for o in 0..GATES * 2 {
            for tap in 0..PIXELS {
                cell.tensors[0].data[o * PIXELS + tap] = 0.1 * (o as f64 + 1.0);
            }
        }
        let s0 = CellState::zeros(PIXELS * 2);
        let a = convlstm_step(&cell, &[0.5; PIXELS], &s0).unwrap();
        // the same constant frame seen from a shifted window is the same frame
        let b = convlstm_step(&cell, &[0.5; PIXELS], &s0).unwrap();
        let center = PIXELS / 2;
        assert_eq!(a.h[center * 2..center * 2 + 2], b.h[center * 2..center * 2 + 2]);
        // the center sees all nine taps, a corner only four
        assert!(a.h[center * 2] != a.h[0]);
    }

    #[test]
    fn zero_graphlstm_ignores_input() {
        let support = path_support(4);
        let cell = Cell::<f64>::zeros(CellShape::GraphLstm { support: support.clone() });
        let s = graphlstm_step(&cell, &support, &[3.0, -1.0, 2.0, 9.0], &CellState::zeros(4)).unwrap();
        assert_eq!(s.h, vec![0.0; 4]);
    }

    #[test]
    fn identity_support_is_fully_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let support = AugmentedAdjacency::identity(n);
        let mut cell = Cell::<f64>::zeros(CellShape::GraphLstm { support: support.clone() });
        randomize(&mut cell, &mut rng);
        // diagonal input blocks and no recurrence, so gates stay per-node
        let w = &mut cell.tensor_mut("w").unwrap().data;
        for row in 0..GATES * n {
            for j in 0..n {
                if row % n != j {
                    w[row * n + j] = 0.0;
                }
            }
        }
        cell.tensor_mut("r").unwrap().fill(0.0);
        let x = random_vec(&mut rng, n);
        let state = CellState {
            h: random_vec(&mut rng, n),
            c: random_vec(&mut rng, n),
        };
        let base = graphlstm_step(&cell, &support, &x, &state).unwrap();
        let mut x2 = x.clone();
        x2[2] += 0.5;
        let moved = graphlstm_step(&cell, &support, &x2, &state).unwrap();
        for i in 0..n {
            assert_eq!(base.h[i] == moved.h[i], i != 2, "node {i}");
        }
    }

    #[test]
    fn graph_convolution_is_one_hop_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 6;
        let support = path_support(n);
        let mut cell = Cell::<f64>::zeros(CellShape::GraphLstm { support: support.clone() });
        randomize(&mut cell, &mut rng);
        let x = random_vec(&mut rng, n);
        let base = cell.forward(&x, &vec![0.0; n], &vec![0.0; n]);
        let mut x2 = x.clone();
        x2[0] += 1.0;
        let moved = cell.forward(&x2, &vec![0.0; n], &vec![0.0; n]);
        for i in 0..n {
            assert_eq!(base.gc[i] != moved.gc[i], support.get(i, 0), "node {i}");
        }
    }

    #[test]
    fn support_violation_is_an_invariant_error() {
        let support = path_support(4);
        let mut cell = Cell::<f64>::zeros(CellShape::GraphLstm { support: support.clone() });
        cell.tensors[0].data[3] = 1.0; // (0, 3) is not an edge
        let err = graphlstm_step(&cell, &support, &[0.0; 4], &CellState::zeros(4)).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn init_sets_forget_bias_and_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let support = path_support(5);
        let cell = Cell::<f64>::new(CellShape::GraphLstm { support: support.clone() }, &mut rng);
        cell.check_support().unwrap();
        let b = &cell.tensor("b").unwrap().data;
        assert!(b[..5].iter().all(|&v| v == 1.0) && b[5..].iter().all(|&v| v == 0.0));
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(cell.tensor("w").unwrap().data.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn nonfinite_input_is_numeric_error() {
        let cell = Cell::<f64>::zeros(CellShape::Lstm { input: 1, hidden: 1 });
        assert!(matches!(
            lstm_step(&cell, &[f64::NAN], &CellState::zeros(1)),
            Err(Error::Numeric { .. })
        ));
    }
}
