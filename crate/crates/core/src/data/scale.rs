use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-region MinMax parameters and the span they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fit_span: Range<usize>,
}

/// Fit per-region min and max on `values[..][span]` only.
pub fn fit_minmax(values: &[Vec<f64>], span: Range<usize>) -> Result<ScalerParams> {
    if span.is_empty() {
        return Err(Error::invalid("scaler fit span is empty"));
    }
    let mut min = Vec::with_capacity(values.len());
    let mut max = Vec::with_capacity(values.len());
    for row in values {
        let part = row
            .get(span.clone())
            .ok_or_else(|| Error::invalid(format!("fit span {span:?} exceeds series length {}", row.len())))?;
        min.push(part.iter().copied().fold(f64::INFINITY, f64::min));
        max.push(part.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(ScalerParams { min, max, fit_span: span })
}

impl ScalerParams {
    pub fn regions(&self) -> usize {
        self.min.len()
    }

    /// `(v − min)/(max − min)`; a constant region maps to 0.
    pub fn apply_value(&self, region: usize, v: f64) -> f64 {
        let range = self.max[region] - self.min[region];
        if range > 0.0 {
            (v - self.min[region]) / range
        } else {
            0.0
        }
    }

    pub fn invert_value(&self, region: usize, v: f64) -> f64 {
        self.min[region] + v * (self.max[region] - self.min[region])
    }

    pub fn apply(&self, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(values.len())?;
        Ok(values
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().map(|&v| self.apply_value(r, v)).collect())
            .collect())
    }

    pub fn invert(&self, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(values.len())?;
        Ok(values
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().map(|&v| self.invert_value(r, v)).collect())
            .collect())
    }

    fn check(&self, regions: usize) -> Result<()> {
        if regions != self.regions() {
            return Err(Error::invalid(format!(
                "scaler fitted for {} regions, got {regions}",
                self.regions()
            )));
        }
        Ok(())
    }
}
