//! Discounted HEDGE (dHEDGE) online expert selection.
//!
//! Each step the weights decay geometrically (`w^γ`) and are penalised by the
//! step's loss (`β^l`). The forecast used at a step is the one from the
//! expert carrying the largest weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_BETA: f64 = 0.5;
pub const GAMMA_GRID: [f64; 3] = [0.8, 0.9, 0.99];
pub const BETA_GRID: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeState<T> {
    pub weights: Vec<T>,
    pub gamma: T,
    pub beta: T,
    pub expert_ids: Vec<String>,
}

impl<T: Scalar> HedgeState<T> {
    pub fn new(weights: Vec<T>, gamma: T, beta: T, expert_ids: Vec<String>) -> Result<Self> {
        if weights.is_empty() || weights.len() != expert_ids.len() {
            return Err(Error::invalid("need one positive weight per expert"));
        }
        if !(gamma > T::zero() && gamma <= T::one()) {
            return Err(Error::invalid(format!("gamma {gamma} outside (0, 1]")));
        }
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::invalid(format!("beta {beta} outside (0, 1)")));
        }
        if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::invalid("weights must be positive and finite"));
        }
        Ok(Self {
            weights,
            gamma,
            beta,
            expert_ids,
        })
    }

    /// Highest weight; ties go to the lowest index.
    pub fn leader(&self) -> usize {
        leader(&self.weights)
    }
}

pub(crate) fn leader<T: Scalar>(w: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in w.iter().enumerate().skip(1) {
        if v > w[best] {
            best = i;
        }
    }
    best
}

fn normalize<T: Scalar>(w: &mut [T]) {
    let total: T = w.iter().copied().sum();
    for v in w.iter_mut() {
        *v = *v / total;
    }
}

/// Softmax of `−λ·loss`; uniform when no losses are given.
pub fn init_weights<T: Scalar>(validation_losses: Option<&[T]>, n_experts: usize, lambda: T) -> Result<Vec<T>> {
    if n_experts == 0 {
        return Err(Error::invalid("need at least one expert"));
    }
    let Some(losses) = validation_losses else {
        return Ok(vec![T::one() / T::of_usize(n_experts); n_experts]);
    };
    if losses.len() != n_experts {
        return Err(Error::invalid("one validation loss per expert"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("validation losses must be finite"));
    }
    let lo = losses.iter().copied().fold(T::infinity(), T::min);
    // shifting by the minimum keeps exp() in range without changing the ratios
    let mut w: Vec<T> = losses.iter().map(|&l| (-(lambda * (l - lo))).exp()).collect();
    normalize(&mut w);
    Ok(w)
}

/// Unnormalised update `w_i ← w_i^γ · β^{l_i}`.
pub fn raw_update<T: Scalar>(weights: &mut [T], gamma: T, beta: T, losses: &[T]) {
    for (w, &l) in weights.iter_mut().zip(losses) {
        *w = w.powf(gamma) * beta.powf(l);
    }
}

/// One dHEDGE step followed by renormalisation to unit sum.
pub fn hedge_step<T: Scalar>(state: &HedgeState<T>, losses: &[T]) -> Result<HedgeState<T>> {
    if losses.len() != state.weights.len() {
        return Err(Error::invalid("one loss per expert"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite loss"));
    }
    let mut next = state.clone();
    raw_update(&mut next.weights, state.gamma, state.beta, losses);
    normalize(&mut next.weights);
    // keep weights strictly positive even if β^l underflows
    for w in next.weights.iter_mut() {
        if !(*w > T::zero()) {
            *w = T::min_positive_value();
        }
    }
    Ok(next)
}

/// Per-step losses: city-mean absolute error of each expert divided by the
/// largest among experts, clamped to `[0, 1]`.
pub fn normalized_losses<T: Scalar>(errors: &[T]) -> Vec<T> {
    let max = errors.iter().copied().fold(T::zero(), T::max);
    errors
        .iter()
        .map(|&e| (e.abs() / (max + T::of(1e-9))).min(T::one()).max(T::zero()))
        .collect()
}

/// Forecasts of every expert for one step: `forecasts[expert][region]`.
pub type StepForecasts<T> = Vec<Vec<T>>;

/// Aligned forecasts of several experts over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPool<T> {
    pub ids: Vec<String>,
    /// `forecasts[expert][step][region]`
    pub forecasts: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ExpertPool<T> {
    pub fn new(ids: Vec<String>, forecasts: Vec<Vec<Vec<T>>>) -> Result<Self> {
        if ids.is_empty() || ids.len() != forecasts.len() {
            return Err(Error::invalid("one forecast matrix per expert"));
        }
        let h = forecasts[0].len();
        let n = forecasts[0].first().map_or(0, Vec::len);
        for (id, f) in ids.iter().zip(&forecasts) {
            if f.len() != h || f.iter().any(|row| row.len() != n) {
                return Err(Error::invalid(format!("expert {id} is not aligned with the pool")));
            }
        }
        Ok(Self { ids, forecasts })
    }

    pub fn horizon(&self) -> usize {
        self.forecasts[0].len()
    }

    pub fn regions(&self) -> usize {
        self.forecasts[0].first().map_or(0, Vec::len)
    }

    /// City-mean absolute error of each expert at `step`.
    pub fn step_errors(&self, step: usize, truth: &[T]) -> Vec<T> {
        self.forecasts
            .iter()
            .map(|f| {
                let row = &f[step];
                row.iter().zip(truth).map(|(&a, &b)| (a - b).abs()).sum::<T>() / T::of_usize(row.len().max(1))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    pub t: usize,
    pub selected: usize,
    /// Weights used for the selection at `t`.
    pub weights: Vec<T>,
    /// Normalised losses observed at `t`.
    pub losses: Vec<T>,
    /// Raw city-mean absolute errors at `t`.
    pub errors: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combined<T> {
    /// `series[step][region]` of the selected experts.
    pub series: Vec<Vec<T>>,
    pub trace: Vec<TraceRow<T>>,
    pub final_state: HedgeState<T>,
}

impl<T: Scalar> Combined<T> {
    /// Sum over steps of the selected expert's raw error.
    pub fn cumulative_error(&self) -> T {
        self.trace.iter().map(|r| r.errors[r.selected]).sum()
    }
}

/// Run dHEDGE over the pool against the realised series `truth[step][region]`.
pub fn combine_forecasts<T: Scalar>(pool: &ExpertPool<T>, state: HedgeState<T>, truth: &[Vec<T>]) -> Result<Combined<T>> {
    if state.weights.len() != pool.ids.len() {
        return Err(Error::invalid("hedge state and pool disagree on expert count"));
    }
    if truth.len() != pool.horizon() || truth.iter().any(|row| row.len() != pool.regions()) {
        return Err(Error::invalid("truth is not aligned with expert forecasts"));
    }
    let mut state = state;
    let mut series = Vec::with_capacity(truth.len());
    let mut trace = Vec::with_capacity(truth.len());
    for (t, actual) in truth.iter().enumerate() {
        let selected = state.leader();
        series.push(pool.forecasts[selected][t].clone());
        let errors = pool.step_errors(t, actual);
        let losses = normalized_losses(&errors);
        trace.push(TraceRow {
            t,
            selected,
            weights: state.weights.clone(),
            losses: losses.clone(),
            errors,
        });
        state = hedge_step(&state, &losses)?;
    }
    Ok(Combined {
        series,
        trace,
        final_state: state,
    })
}

/// Grid search over `(γ, β)` minimising the cumulative error on a validation horizon.
/// Ties keep the earlier grid point.
pub fn tune<T: Scalar>(
    pool: &ExpertPool<T>,
    initial: &[T],
    truth: &[Vec<T>],
    gammas: &[T],
    betas: &[T],
) -> Result<(T, T)> {
    let mut best: Option<(T, T, T)> = None;
    for &g in gammas {
        for &b in betas {
            let state = HedgeState::new(initial.to_vec(), g, b, pool.ids.clone())?;
            let err = combine_forecasts(pool, state, truth)?.cumulative_error();
            if best.map_or(true, |(_, _, e)| err < e) {
                best = Some((g, b, err));
            }
        }
    }
    best.map(|(g, b, _)| (g, b)).ok_or_else(|| Error::invalid("empty tuning grid"))
}

pub fn default_gamma_grid<T: Scalar>() -> Vec<T> {
    GAMMA_GRID.iter().map(|&g| T::of(g)).collect()
}

pub fn default_beta_grid<T: Scalar>() -> Vec<T> {
    BETA_GRID.iter().map(|&b| T::of(b)).collect()
}
