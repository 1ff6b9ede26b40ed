//! Forecast error metrics: SMAPE, MASE and RMSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Default seasonal period for MASE: one day of hourly bins.
pub const DEFAULT_SEASONAL_PERIOD: usize = 24;

fn check_pair<T>(y: &[T], y_hat: &[T]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} observations vs {} forecasts",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("metrics need at least one observation"));
    }
    Ok(())
}

/// `(100/h) Σ |y − ŷ| / (ŷ + y + 1)`. The `+1` keeps zero-demand steps finite.
pub fn smape<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check_pair(y, y_hat)?;
    let total: T = y
        .iter()
        .zip(y_hat)
        .map(|(&a, &f)| (a - f).abs() / (f + a + T::one()))
        .sum();
    Ok(T::of(100.0) * total / T::of_usize(y.len()))
}

/// In-sample mean absolute error of the seasonal-naive forecast `y_t = y_{t−m}`.
pub fn seasonal_naive_scale<T: Scalar>(y_train: &[T], m: usize) -> Result<T> {
    if m == 0 {
        return Err(Error::invalid("seasonal period must be at least 1"));
    }
    let n = y_train.len();
    if n <= m {
        return Err(Error::invalid(format!("training length {n} must exceed period {m}")));
    }
    let total: T = (m..n).map(|t| (y_train[t] - y_train[t - m]).abs()).sum();
    Ok(total / T::of_usize(n - m))
}

/// Mean absolute test error over the seasonal-naive in-sample error.
pub fn mase<T: Scalar>(y_test: &[T], y_hat: &[T], y_train: &[T], m: usize) -> Result<T> {
    check_pair(y_test, y_hat)?;
    let scale = seasonal_naive_scale(y_train, m)?;
    if !(scale > T::zero()) {
        return Err(Error::UndefinedMetric(format!(
            "seasonal-naive error is zero for period {m}"
        )));
    }
    let mae: T = y_test.iter().zip(y_hat).map(|(&a, &f)| (a - f).abs()).sum::<T>() / T::of_usize(y_test.len());
    Ok(mae / scale)
}

pub fn rmse<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check_pair(y, y_hat)?;
    let sse: T = y.iter().zip(y_hat).map(|(&a, &f)| (a - f) * (a - f)).sum();
    Ok((sse / T::of_usize(y.len())).sqrt())
}

pub fn mae<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(&a, &f)| (a - f).abs()).sum::<T>() / T::of_usize(y.len()))
}

/// All three metrics for one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastEvaluation<T> {
    pub smape: T,
    pub mase: T,
    pub rmse: T,
    pub h: usize,
    pub m: usize,
    pub n: usize,
}

pub fn evaluate<T: Scalar>(y_test: &[T], y_hat: &[T], y_train: &[T], m: usize) -> Result<ForecastEvaluation<T>> {
    Ok(ForecastEvaluation {
        smape: smape(y_test, y_hat)?,
        mase: mase(y_test, y_hat, y_train, m)?,
        rmse: rmse(y_test, y_hat)?,
        h: y_test.len(),
        m,
        n: y_train.len(),
    })
}

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd<T> {
    pub mean: T,
    pub std: T,
    pub count: usize,
}

pub fn mean_std<T: Scalar>(values: &[T]) -> MeanStd<T> {
    MeanStd {
        mean: scalar::mean(values),
        std: scalar::std_dev(values),
        count: values.len(),
    }
}
