use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_days: usize,
    pub test_days: usize,
    /// Share of the training days held out, as the final contiguous block.
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_days: 59,
            test_days: 1,
            validation_fraction: 0.10,
        }
    }
}

/// Contiguous, non-overlapping column ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// Training plus validation columns.
    pub fn history(&self) -> Range<usize> {
        self.train.start..self.validation.end
    }
}

/// Splits the first `train_days + test_days` days of a series.
pub fn split_series(steps: usize, steps_per_day: usize, spec: &SplitSpec) -> Result<Split> {
    if spec.train_days == 0 || spec.test_days == 0 || steps_per_day == 0 {
        return Err(Error::invalid("split needs positive day counts"));
    }
    if !(0.0..1.0).contains(&spec.validation_fraction) {
        return Err(Error::invalid(format!(
            "validation fraction {} outside [0, 1)",
            spec.validation_fraction
        )));
    }
    let fit = spec.train_days * steps_per_day;
    let need = fit + spec.test_days * steps_per_day;
    if steps < need {
        return Err(Error::invalid(format!(
            "{steps} steps cannot hold {} + {} days of {steps_per_day} steps",
            spec.train_days, spec.test_days
        )));
    }
    let val = (spec.validation_fraction * fit as f64).round() as usize;
    if val == 0 {
        log::warn!("empty validation split: early stopping is disabled");
    }
    if val >= fit {
        return Err(Error::invalid("validation block leaves no training data"));
    }
    Ok(Split {
        train: 0..fit - val,
        validation: fit - val..fit,
        test: fit..need,
    })
}
