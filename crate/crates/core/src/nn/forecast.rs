use rayon::prelude::*;

use crate::data::ScalerParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::dataset::{InputLayout, Sample};
use super::network::Network;

/// A trained network with everything needed to forecast raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster<T> {
    pub network: Network<T>,
    pub scaler: ScalerParams,
    pub layout: InputLayout,
    pub lookback: usize,
}

/// Scaled one-step prediction for every region at step `scaled[..].len()`.
pub fn predict_next<T: Scalar>(
    network: &Network<T>,
    layout: &InputLayout,
    lookback: usize,
    scaled: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let t = scaled.first().map_or(0, Vec::len);
    if t < lookback {
        return Err(Error::invalid(format!(
            "history of {t} steps is shorter than the lookback {lookback}"
        )));
    }
    match layout {
        InputLayout::Graph { .. } => {
            let w: Vec<T> = layout.window(scaled, &Sample { region: None, t }, lookback);
            Ok(network.predict(&w)?.iter().map(|v| v.as_f64()).collect())
        }
        InputLayout::Regional { slots } => (0..slots.len())
            .into_par_iter()
            .map(|r| {
                let w: Vec<T> = layout.window(scaled, &Sample { region: Some(r), t }, lookback);
                Ok(network.predict(&w)?[0].as_f64())
            })
            .collect(),
    }
}

/// Recursive `h`-step forecast in scaled space from the last `lookback`
/// columns of `scaled`.
pub fn rollout<T: Scalar>(
    network: &Network<T>,
    layout: &InputLayout,
    lookback: usize,
    scaled: &[Vec<f64>],
    h: usize,
) -> Result<Vec<Vec<f64>>> {
    let t = scaled.first().map_or(0, Vec::len);
    let keep = t.saturating_sub(lookback);
    let mut window: Vec<Vec<f64>> = scaled.iter().map(|r| r[keep..].to_vec()).collect();
    let mut out = vec![Vec::with_capacity(h); scaled.len()];
    for _ in 0..h {
        let next = predict_next(network, layout, lookback, &window)?;
        for (r, v) in next.into_iter().enumerate() {
            window[r].push(v);
            out[r].push(v);
        }
    }
    Ok(out)
}

impl<T: Scalar> Forecaster<T> {
    pub fn step(&self, scaled: &[Vec<f64>]) -> Result<Vec<f64>> {
        predict_next(&self.network, &self.layout, self.lookback, scaled)
    }

    /// Recursive `h`-step forecast from raw `history` (`N × t`): each
    /// prediction is appended to the scaled window before the next step.
    /// Returns raw counts (`N × h`), clamped at zero.
    pub fn predict_horizon(&self, history: &[Vec<f64>], h: usize) -> Result<Vec<Vec<f64>>> {
        if h == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if history.len() != self.layout.regions() {
            return Err(Error::invalid(format!(
                "history has {} regions, model expects {}",
                history.len(),
                self.layout.regions()
            )));
        }
        let t = history.first().map_or(0, Vec::len);
        let keep = t.saturating_sub(self.lookback);
        let tail: Vec<Vec<f64>> = history.iter().map(|r| r[keep..].to_vec()).collect();
        let scaled = rollout(&self.network, &self.layout, self.lookback, &self.scaler.apply(&tail)?, h)?;
        Ok(scaled
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().map(|&v| self.scaler.invert_value(r, v).max(0.0)).collect())
            .collect())
    }
}
