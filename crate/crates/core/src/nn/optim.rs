use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::param::Tensor;

pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPSILON: f64 = 1e-8;
/// Floating-point operations per updated entry: g², two scalings and an add
/// for the running mean; sqrt, +ε, lr·g, a divide and a subtract for the step.
pub const UPDATE_FLOPS_PER_ENTRY: u64 = 9;

/// Running mean of squared gradients, one vector per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T> {
    pub rho: T,
    pub epsilon: T,
    pub mean_square: Vec<Vec<T>>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new<'a>(tensors: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        Self {
            rho: T::of(RMSPROP_RHO),
            epsilon: T::of(RMSPROP_EPSILON),
            mean_square: tensors.into_iter().map(|t| vec![T::zero(); t.len()]).collect(),
        }
    }
}

/// `s ← ρs + (1−ρ)g²; θ ← θ − lr·g/(√s + ε)` on every on-support entry.
/// Masked entries are never touched, so they stay exactly zero.
/// Returns the floating-point operations spent.
pub fn rmsprop_update<'a, T: Scalar>(
    tensors: impl IntoIterator<Item = &'a mut Tensor<T>>,
    grads: &[Vec<T>],
    state: &mut RmsPropState<T>,
    lr: T,
) -> u64 {
    let one = T::one();
    let mut flops = 0;
    for ((tensor, g), s) in tensors.into_iter().zip(grads).zip(&mut state.mean_square) {
        for k in 0..tensor.data.len() {
            if !tensor.on_support(k) {
                continue;
            }
            let gk = g[k];
            s[k] = state.rho * s[k] + (one - state.rho) * gk * gk;
            tensor.data[k] = tensor.data[k] - lr * gk / (s[k].sqrt() + state.epsilon);
            flops += UPDATE_FLOPS_PER_ENTRY;
        }
    }
    flops
}

/// Logged operation counts of a training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub forward_flops: u64,
    pub backward_flops: u64,
    pub update_flops: u64,
    pub optimizer_steps: u64,
    pub samples: u64,
}

impl OpCounter {
    pub fn total(&self) -> u64 {
        self.forward_flops + self.backward_flops + self.update_flops
    }

    pub fn add(&mut self, other: &OpCounter) {
        self.forward_flops += other.forward_flops;
        self.backward_flops += other.backward_flops;
        self.update_flops += other.update_flops;
        self.optimizer_steps += other.optimizer_steps;
        self.samples += other.samples;
    }
}
