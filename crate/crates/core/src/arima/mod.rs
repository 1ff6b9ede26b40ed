//! ARIMA and ARIMAX baselines fitted by conditional sum of squares (CSS).
//!
//! For a working (differenced) series `w` the model is
//! `w_t = c + Σ φ_i w_{t−i} + Σ β·z + Σ θ_j ε_{t−j} + ε_t`, with residuals
//! before the first usable index set to zero. For fixed MA coefficients the
//! residuals are linear in `(c, φ, β)`, so those are solved exactly by least
//! squares and only `θ` is searched by Nelder–Mead.

mod nelder_mead;
mod roots;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use nelder_mead::{minimize, Minimum, NelderMeadOptions};
pub use roots::polynomial_roots;

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::linalg::least_squares;
use crate::scalar::{pearson, Scalar};

pub const MAX_PQ: usize = 5;
pub const MAX_D: usize = 2;
/// Covariate lags used by ARIMAX.
pub const COVARIATE_LAGS: [usize; 2] = [0, 1];
pub const RIDGE_LAMBDA: f64 = 1e-6;
/// Roots must lie outside the unit circle by this factor.
pub const ROOT_MARGIN: f64 = 1.001;
/// MA roots explored by the optimizer stay this far outside the unit circle.
/// Conditional sums of squares reward near-unit MA roots on finite samples.
pub const MA_SEARCH_MARGIN: f64 = 1.05;
/// Relative distance below which an AR and an MA root count as cancelling.
pub const COMMON_ROOT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p > MAX_PQ || q > MAX_PQ || d > MAX_D {
            return Err(Error::invalid(format!(
                "order ({p},{d},{q}) outside p,q <= {MAX_PQ}, d <= {MAX_D}"
            )));
        }
        Ok(Self { p, d, q })
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

pub fn difference<T: Scalar>(series: &[T], d: usize) -> Result<Vec<T>> {
    if series.len() <= d {
        return Err(Error::invalid(format!(
            "series of length {} too short for {d}-fold differencing",
            series.len()
        )));
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Inverse of one first difference given the value preceding it.
pub fn undifference<T: Scalar>(diffs: &[T], first: T) -> Vec<T> {
    let mut out = Vec::with_capacity(diffs.len() + 1);
    out.push(first);
    let mut acc = first;
    for &v in diffs {
        acc = acc + v;
        out.push(acc);
    }
    out
}

/// Last value of the series after 0, 1, …, d−1 differences.
fn level_tails<T: Scalar>(series: &[T], d: usize) -> Vec<T> {
    let mut tails = Vec::with_capacity(d);
    let mut cur = series.to_vec();
    for _ in 0..d {
        tails.push(*cur.last().expect("series longer than d"));
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    tails
}

/// Integrate forecasts made on the `d`-times differenced scale.
fn integrate<T: Scalar>(diffs: &[T], tails: &[T]) -> Vec<T> {
    let mut cur = diffs.to_vec();
    for &last in tails.iter().rev() {
        let mut acc = last;
        cur = cur
            .iter()
            .map(|&v| {
                acc = acc + v;
                acc
            })
            .collect();
    }
    cur
}

pub fn lag1_autocorrelation<T: Scalar>(series: &[T]) -> T {
    let n = series.len();
    if n < 2 {
        return T::zero();
    }
    let mean = series.iter().copied().sum::<T>() / T::of_usize(n);
    let denom: T = series.iter().map(|&v| (v - mean) * (v - mean)).sum();
    if !(denom > T::zero()) {
        return T::zero();
    }
    let num: T = series.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / denom
}

/// Smallest `d ≤ 2` whose differenced series has lag-1 autocorrelation below 0.95.
pub fn select_difference_order<T: Scalar>(series: &[T]) -> Result<usize> {
    if series.len() < 20 {
        return Err(Error::invalid("difference-order selection needs at least 20 points"));
    }
    for d in 0..MAX_D {
        if lag1_autocorrelation(&difference(series, d)?) < T::of(0.95) {
            return Ok(d);
        }
    }
    Ok(MAX_D)
}

/// Values a model needs to continue one particular series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastState<T> {
    /// Last `p` values of the differenced series, oldest first.
    pub w_tail: Vec<T>,
    /// Last `q` residuals, oldest first.
    pub eps_tail: Vec<T>,
    /// Last value at each differencing level `0..d`.
    pub level_tails: Vec<T>,
    /// Last `d + 1` raw values of every covariate.
    pub covariate_tails: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel<T> {
    pub order: ArimaOrder,
    pub intercept: T,
    pub ar: Vec<T>,
    pub ma: Vec<T>,
    /// Number of covariate series (0 for plain ARIMA).
    pub n_covariates: usize,
    /// `beta[k * lags + l]` multiplies covariate `k` at lag `COVARIATE_LAGS[l]`.
    pub beta: Vec<T>,
    pub sigma2: T,
    pub css: T,
    pub aic: T,
    pub n_obs: usize,
    pub ridge: bool,
    /// AR and MA roots nearly cancel; such orders are skipped by [`select_order`].
    #[serde(default)]
    pub redundant: bool,
    pub warnings: Vec<String>,
    pub state: Option<ForecastState<T>>,
}

/// One contiguous series (and its aligned covariates) entering a fit.
#[derive(Debug, Clone)]
pub struct Segment<'a, T> {
    pub y: &'a [T],
    pub covariates: Vec<&'a [T]>,
}

impl<'a, T> Segment<'a, T> {
    pub fn new(y: &'a [T]) -> Self {
        Self { y, covariates: Vec::new() }
    }

    pub fn with_covariates(y: &'a [T], covariates: Vec<&'a [T]>) -> Self {
        Self { y, covariates }
    }
}

struct Prepared<T> {
    target: Vec<T>,
    /// regressor rows per usable index
    design: Vec<Vec<T>>,
    /// start offset in `target` of each segment
    bounds: Vec<usize>,
}

fn regressor_count(p: usize, n_cov: usize) -> usize {
    1 + p + n_cov * COVARIATE_LAGS.len()
}

fn first_usable(p: usize, n_cov: usize) -> usize {
    let max_lag = if n_cov > 0 { *COVARIATE_LAGS.iter().max().unwrap() } else { 0 };
    p.max(max_lag)
}

fn prepare<T: Scalar>(
    segments: &[Segment<'_, T>],
    order: ArimaOrder,
    n_cov: usize,
    min_start: usize,
) -> Result<Prepared<T>> {
    let mut target = Vec::new();
    let mut design = Vec::new();
    let mut bounds = Vec::new();
    let start = first_usable(order.p, n_cov).max(min_start);
    for seg in segments {
        if seg.covariates.len() != n_cov {
            return Err(Error::invalid("segments disagree on covariate count"));
        }
        if seg.covariates.iter().any(|z| z.len() != seg.y.len()) {
            return Err(Error::invalid("covariate series not aligned with the target"));
        }
        let w = difference(seg.y, order.d)?;
        let zs = seg
            .covariates
            .iter()
            .map(|z| difference(z, order.d))
            .collect::<Result<Vec<_>>>()?;
        bounds.push(target.len());
        for t in start..w.len() {
            let mut row = Vec::with_capacity(regressor_count(order.p, n_cov));
            row.push(T::one());
            for i in 1..=order.p {
                row.push(w[t - i]);
            }
            for z in &zs {
                for &lag in &COVARIATE_LAGS {
                    row.push(z[t - lag]);
                }
            }
            target.push(w[t]);
            design.push(row);
        }
    }
    Ok(Prepared { target, design, bounds })
}

/// `out_t = v_t − Σ θ_j out_{t−j}`, restarted at every segment boundary.
fn ma_filter<T: Scalar>(v: &[T], theta: &[T], bounds: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    for (s, &lo) in bounds.iter().enumerate() {
        let hi = bounds.get(s + 1).copied().unwrap_or(v.len());
        for t in lo..hi {
            let mut acc = v[t];
            for (j, &th) in theta.iter().enumerate() {
                let back = j + 1;
                if t >= lo + back {
                    acc = acc - th * out[t - back];
                }
            }
            out[t] = acc;
        }
    }
    out
}

struct Concentrated<T> {
    coef: Vec<T>,
    css: T,
    ridge: bool,
}

fn concentrated<T: Scalar>(prep: &Prepared<T>, theta: &[T]) -> Option<Concentrated<T>> {
    let k = prep.design.first().map_or(0, Vec::len);
    let y = ma_filter(&prep.target, theta, &prep.bounds);
    let mut cols = Vec::with_capacity(k);
    for c in 0..k {
        let col: Vec<T> = prep.design.iter().map(|r| r[c]).collect();
        cols.push(ma_filter(&col, theta, &prep.bounds));
    }
    let rows: Vec<Vec<T>> = (0..y.len()).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
    let ls = least_squares(&rows, &y, T::of(RIDGE_LAMBDA))?;
    let css = rows
        .iter()
        .zip(&y)
        .map(|(r, &yt)| {
            let e = yt - r.iter().zip(&ls.coef).fold(T::zero(), |a, (&x, &b)| a + x * b);
            e * e
        })
        .sum();
    Some(Concentrated {
        coef: ls.coef,
        css,
        ridge: ls.ridge,
    })
}

/// Roots of `1 − Σ a_i z^i` (sign = −1) or `1 + Σ a_i z^i` (sign = +1) all lie
/// outside the unit circle by [`ROOT_MARGIN`].
fn roots_outside<T: Scalar>(coefs: &[T], sign: f64) -> bool {
    roots_outside_by(coefs, sign, ROOT_MARGIN)
}

fn lag_polynomial_roots<T: Scalar>(coefs: &[T], sign: f64) -> Vec<num_complex::Complex64> {
    let mut poly = vec![1.0];
    poly.extend(coefs.iter().map(|c| sign * c.as_f64()));
    while poly.len() > 1 && *poly.last().unwrap() == 0.0 {
        poly.pop();
    }
    polynomial_roots(&poly)
}

fn roots_outside_by<T: Scalar>(coefs: &[T], sign: f64, margin: f64) -> bool {
    lag_polynomial_roots(coefs, sign).iter().all(|r| r.norm() > margin)
}

/// An AR root and an MA root nearly coincide, so the pair cancels and the
/// model is not identified.
fn has_common_roots<T: Scalar>(ar: &[T], ma: &[T]) -> bool {
    let ar_roots = lag_polynomial_roots(ar, -1.0);
    let ma_roots = lag_polynomial_roots(ma, 1.0);
    ar_roots
        .iter()
        .any(|a| ma_roots.iter().any(|m| (a - m).norm() < COMMON_ROOT_TOLERANCE * a.norm().max(m.norm())))
}

pub fn fit_arima<T: Scalar>(series: &[T], order: ArimaOrder) -> Result<ArimaModel<T>> {
    let model = fit_segments(&[Segment::new(series)], order)?;
    model.condition_on(series, &[])
}

pub fn fit_arimax<T: Scalar>(series: &[T], covariates: &[&[T]], order: ArimaOrder) -> Result<ArimaModel<T>> {
    let model = fit_segments(&[Segment::with_covariates(series, covariates.to_vec())], order)?;
    model.condition_on(series, covariates)
}

/// CSS fit over one or more segments sharing the same coefficients. The
/// returned model carries no forecast state; see [`ArimaModel::condition_on`].
pub fn fit_segments<T: Scalar>(segments: &[Segment<'_, T>], order: ArimaOrder) -> Result<ArimaModel<T>> {
    fit_segments_with(segments, order, &NelderMeadOptions::default())
}

pub fn fit_segments_with<T: Scalar>(
    segments: &[Segment<'_, T>],
    order: ArimaOrder,
    opts: &NelderMeadOptions,
) -> Result<ArimaModel<T>> {
    fit_conditioned(segments, order, opts, 0)
}

/// Fit with the first `min_start` differenced values of every segment used
/// only as lags, so that models of different order share one sample.
fn fit_conditioned<T: Scalar>(
    segments: &[Segment<'_, T>],
    order: ArimaOrder,
    opts: &NelderMeadOptions,
    min_start: usize,
) -> Result<ArimaModel<T>> {
    if segments.is_empty() {
        return Err(Error::invalid("no series to fit"));
    }
    let n_cov = segments[0].covariates.len();
    let total: usize = segments.iter().map(|s| s.y.len()).sum();
    let need = 10 * (order.p + order.q + 1);
    if total < need {
        return Err(Error::invalid(format!(
            "order {order} needs at least {need} observations, got {total}"
        )));
    }
    if segments.iter().flat_map(|s| s.y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let prep = prepare(segments, order, n_cov, min_start)?;
    let n_obs = prep.target.len();
    if n_obs <= regressor_count(order.p, n_cov) + order.q {
        return Err(Error::invalid(format!("too few usable observations ({n_obs}) for order {order}")));
    }

    let seed = concentrated(&prep, &vec![T::zero(); order.q])
        .ok_or_else(|| Error::Fit("least-squares seed is singular".into()))?;
    let (theta, sol) = if order.q == 0 {
        (Vec::new(), seed)
    } else {
        // restrict the search to invertible MA polynomials; outside that region
        // the residual recursion explodes and CSS loses its meaning
        let objective = |th: &[T]| {
            if !roots_outside_by(th, 1.0, MA_SEARCH_MARGIN) {
                return T::infinity();
            }
            concentrated(&prep, th).map_or(T::infinity(), |c| c.css)
        };
        let min = minimize(objective, &vec![T::zero(); order.q], opts);
        if !min.converged {
            return Err(Error::Fit(format!(
                "Nelder-Mead did not converge for order {order} within {} iterations",
                opts.max_iter
            )));
        }
        let sol = concentrated(&prep, &min.x).ok_or_else(|| Error::Fit("singular design at optimum".into()))?;
        // the start point is a simplex vertex, so this never exceeds the seed
        debug_assert!(sol.css <= seed.css + seed.css * T::of(1e-12));
        (min.x, sol)
    };

    let intercept = sol.coef[0];
    let ar = sol.coef[1..1 + order.p].to_vec();
    let beta = sol.coef[1 + order.p..].to_vec();
    let css = sol.css;
    let n = T::of_usize(n_obs);
    let k = T::of_usize(order.p + order.q + 1);
    let floor = T::min_positive_value();
    let aic = n * (css / n).max(floor).ln() + T::of(2.0) * k;
    let mut warnings = Vec::new();
    if sol.ridge {
        warnings.push(format!("collinear regressors: ridge fallback (lambda = {RIDGE_LAMBDA:e})"));
    }
    if !roots_outside(&ar, -1.0) {
        warnings.push("AR polynomial is not stationary within the root margin".into());
    }
    if !roots_outside(&theta, 1.0) {
        warnings.push("MA polynomial is not invertible within the root margin".into());
    }
    let redundant = has_common_roots(&ar, &theta);
    if redundant {
        warnings.push("AR and MA polynomials share a near-common root".into());
    }
    for w in &warnings {
        log::warn!("ARIMA{order}: {w}");
    }
    Ok(ArimaModel {
        order,
        intercept,
        ar,
        ma: theta,
        n_covariates: n_cov,
        beta,
        sigma2: css / n,
        css,
        aic,
        n_obs,
        ridge: sol.ridge,
        redundant,
        warnings,
        state: None,
    })
}

impl<T: Scalar> ArimaModel<T> {
    /// A model with given coefficients and no covariates, e.g. for scenario analysis.
    pub fn from_coefficients(order: ArimaOrder, intercept: T, ar: Vec<T>, ma: Vec<T>) -> Result<Self> {
        if ar.len() != order.p || ma.len() != order.q {
            return Err(Error::invalid("coefficient counts do not match the order"));
        }
        Ok(Self {
            order,
            intercept,
            ar,
            ma,
            n_covariates: 0,
            beta: Vec::new(),
            sigma2: T::zero(),
            css: T::zero(),
            aic: T::zero(),
            n_obs: 0,
            ridge: false,
            redundant: false,
            warnings: Vec::new(),
            state: None,
        })
    }

    /// In-sample residuals of `series`, recursion seeded at zero.
    pub fn residuals(&self, series: &[T], covariates: &[&[T]]) -> Result<Vec<T>> {
        if covariates.len() != self.n_covariates {
            return Err(Error::invalid(format!(
                "model expects {} covariates, got {}",
                self.n_covariates,
                covariates.len()
            )));
        }
        let seg = Segment::with_covariates(series, covariates.to_vec());
        let prep = prepare(&[seg], self.order, self.n_covariates, 0)?;
        let coef: Vec<T> = std::iter::once(self.intercept)
            .chain(self.ar.iter().copied())
            .chain(self.beta.iter().copied())
            .collect();
        let u: Vec<T> = prep
            .design
            .iter()
            .zip(&prep.target)
            .map(|(row, &y)| y - row.iter().zip(&coef).fold(T::zero(), |a, (&x, &b)| a + x * b))
            .collect();
        Ok(ma_filter(&u, &self.ma, &prep.bounds))
    }

    /// Attach the forecast state of a particular series.
    pub fn condition_on(&self, series: &[T], covariates: &[&[T]]) -> Result<Self> {
        let order = self.order;
        let eps = self.residuals(series, covariates)?;
        let w = difference(series, order.d)?;
        if w.len() < order.p {
            return Err(Error::invalid("history shorter than the AR order"));
        }
        let mut eps_tail = vec![T::zero(); order.q.saturating_sub(eps.len())];
        eps_tail.extend_from_slice(&eps[eps.len().saturating_sub(order.q)..]);
        let covariate_tails = covariates
            .iter()
            .map(|z| {
                if z.len() < order.d + 1 {
                    Err(Error::invalid("covariate history too short"))
                } else {
                    Ok(z[z.len() - order.d - 1..].to_vec())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        out.state = Some(ForecastState {
            w_tail: w[w.len() - order.p..].to_vec(),
            eps_tail,
            level_tails: level_tails(series, order.d),
            covariate_tails,
        });
        Ok(out)
    }

    /// Iterated-expectation forecast: future shocks are zero, differencing is
    /// inverted and the result is clamped at zero. ARIMAX models need the
    /// covariates' future values (`h` each).
    pub fn forecast(&self, h: usize, future_covariates: &[&[T]]) -> Result<Vec<T>> {
        if h == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::invalid("model has no forecast state; call condition_on first"))?;
        if future_covariates.len() != self.n_covariates || future_covariates.iter().any(|z| z.len() < h) {
            return Err(Error::invalid(format!(
                "forecast needs {} covariate futures of length {h}",
                self.n_covariates
            )));
        }
        // differenced covariates: index 0 is the last in-sample value
        let zs: Vec<Vec<T>> = state
            .covariate_tails
            .iter()
            .zip(future_covariates)
            .map(|(tail, fut)| {
                let mut raw = tail.clone();
                raw.extend_from_slice(&fut[..h]);
                difference(&raw, self.order.d)
            })
            .collect::<Result<_>>()?;
        let mut w = state.w_tail.clone();
        let mut eps = state.eps_tail.clone();
        let lags = COVARIATE_LAGS.len();
        let mut out = Vec::with_capacity(h);
        for step in 0..h {
            let mut v = self.intercept;
            for (i, &phi) in self.ar.iter().enumerate() {
                v = v + phi * w[w.len() - 1 - i];
            }
            for (j, &theta) in self.ma.iter().enumerate() {
                v = v + theta * eps[eps.len() - 1 - j];
            }
            for (k, z) in zs.iter().enumerate() {
                for (l, &lag) in COVARIATE_LAGS.iter().enumerate() {
                    v = v + self.beta[k * lags + l] * z[step + 1 - lag];
                }
            }
            out.push(v);
            w.push(v);
            eps.push(T::zero());
        }
        Ok(integrate(&out, &state.level_tails)
            .into_iter()
            .map(|v| v.max(T::zero()))
            .collect())
    }
}

/// Result of the AIC grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSearch<T> {
    pub best: ArimaOrder,
    /// Every candidate with its AIC, `None` where the fit failed or its AR and
    /// MA roots cancel.
    pub candidates: Vec<(ArimaOrder, Option<T>)>,
}

/// Grid over `p, q ∈ [0, 5]` minimising AIC; ties prefer smaller `p + q`, then smaller `p`.
/// Every candidate is scored on the same observations (the first `MAX_PQ`
/// differenced values of each segment only serve as lags), otherwise dropping
/// a large early residual would masquerade as a better fit.
pub fn select_order<T: Scalar>(segments: &[Segment<'_, T>], d: usize) -> Result<OrderSearch<T>> {
    let grid: Vec<ArimaOrder> = (0..=MAX_PQ)
        .flat_map(|p| (0..=MAX_PQ).map(move |q| ArimaOrder { p, d, q }))
        .collect();
    let candidates: Vec<(ArimaOrder, Option<T>)> = grid
        .par_iter()
        .map(|&o| {
            let fit = fit_conditioned(segments, o, &NelderMeadOptions::default(), MAX_PQ);
            (o, fit.ok().filter(|m| !m.redundant).map(|m| m.aic))
        })
        .collect();
    let best = candidates
        .iter()
        .filter_map(|(o, aic)| aic.map(|a| (*o, a)))
        .min_by(|(oa, a), (ob, b)| {
            a.partial_cmp(b)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((oa.p + oa.q).cmp(&(ob.p + ob.q)))
                .then(oa.p.cmp(&ob.p))
        })
        .map(|(o, _)| o)
        .ok_or_else(|| Error::Fit("every candidate order failed to fit".into()))?;
    Ok(OrderSearch { best, candidates })
}

/// Positively correlated first-order neighbors of a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    pub region: usize,
    pub neighbors: Vec<usize>,
    pub correlations: Vec<f64>,
    pub notes: Vec<String>,
}

/// Neighbors with Pearson `r > 0` over `series[..][..train_len]`, strongest first, at most `cap`.
pub fn select_covariates<T: Scalar>(
    region: usize,
    adjacency: &AdjacencyMatrix,
    series: &[Vec<T>],
    train_len: usize,
    cap: usize,
) -> Result<CovariateSet> {
    if region >= adjacency.n() || series.len() != adjacency.n() {
        return Err(Error::invalid(format!("region {region} not in a {}-node graph", adjacency.n())));
    }
    let own = &series[region][..train_len.min(series[region].len())];
    let mut ranked = Vec::new();
    let mut notes = Vec::new();
    for j in adjacency.neighbors(region) {
        let other = &series[j][..train_len.min(series[j].len())];
        match pearson(own, other) {
            Some(r) if r > T::zero() => ranked.push((j, r.as_f64())),
            Some(_) => {}
            None => notes.push(format!("neighbor {j} excluded: zero variance on the training span")),
        }
    }
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked.truncate(cap);
    Ok(CovariateSet {
        region,
        neighbors: ranked.iter().map(|r| r.0).collect(),
        correlations: ranked.iter().map(|r| r.1).collect(),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let e = noise(seed, n + 100);
        let mut y = vec![0.0; n + 100];
        for t in 1..y.len() {
            y[t] = phi * y[t - 1] + e[t];
        }
        y.split_off(100)
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[1.0, 5.0, 2.0], 0).unwrap(), vec![1.0, 5.0, 2.0]);
        assert_eq!(difference(&[1.0, 2.0, 3.0, 4.0], 1).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(difference(&[1.0, 2.0], 2).is_err());
        let s = [3.0, -1.0, 4.0, 1.5, 9.25];
        assert_eq!(undifference(&difference(&s, 1).unwrap(), s[0]), s.to_vec());
    }

    #[test]
    fn integrate_inverts_second_differences() {
        let s: Vec<f64> = (0..12).map(|t| (t as f64).powi(2) * 0.5 - t as f64).collect();
        let (head, tail) = s.split_at(8);
        let d2 = difference(&s, 2).unwrap();
        let fut = &d2[d2.len() - tail.len()..];
        let back = integrate(fut, &level_tails(head, 2));
        for (a, b) in back.iter().zip(tail) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn difference_order_examples() {
        assert_eq!(select_difference_order(&noise(1, 500)).unwrap(), 0);
        let walk: Vec<f64> = noise(2, 1000)
            .iter()
            .scan(0.0, |acc, &e| {
                *acc += e;
                Some(*acc)
            })
            .collect();
        assert_eq!(select_difference_order(&walk).unwrap(), 1);
        assert_eq!(select_difference_order(&vec![4.0; 30]).unwrap(), 0);
        assert!(select_difference_order(&[1.0; 5]).is_err());
    }

    #[test]
    fn white_noise_constant_model_is_closed_form() {
        let y: Vec<f64> = noise(3, 400).iter().map(|v| v + 10.0).collect();
        let m = fit_arima(&y, ArimaOrder::new(0, 0, 0).unwrap()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-9);
        assert!((m.sigma2 - var).abs() < 1e-9);
        let f = m.forecast(3, &[]).unwrap();
        assert!(f.iter().all(|v| (v - mean).abs() < 1e-9));
    }

    #[test]
    fn ar1_forecast_halves() {
        let m = ArimaModel::from_coefficients(ArimaOrder::new(1, 0, 0).unwrap(), 0.0, vec![0.5], vec![]).unwrap();
        let m = m.condition_on(&[3.0, 8.0], &[]).unwrap();
        assert_eq!(m.forecast(3, &[]).unwrap(), vec![4.0, 2.0, 1.0]);
    }

    #[test]
    fn random_walk_forecast_is_flat() {
        let m = ArimaModel::from_coefficients(ArimaOrder::new(0, 1, 0).unwrap(), 0.0, vec![], vec![]).unwrap();
        let m = m.condition_on(&[1.0, 4.0, 2.0, 7.0], &[]).unwrap();
        assert_eq!(m.forecast(4, &[]).unwrap(), vec![7.0; 4]);
    }

    #[test]
    fn forecasts_are_clamped_at_zero() {
        let m = ArimaModel::from_coefficients(ArimaOrder::new(0, 0, 0).unwrap(), -3.0, vec![], vec![]).unwrap();
        let m = m.condition_on(&[1.0, 2.0], &[]).unwrap();
        assert_eq!(m.forecast(2, &[]).unwrap(), vec![0.0, 0.0]);
        assert!(m.forecast(0, &[]).is_err());
    }

    #[test]
    fn ar1_is_recovered() {
        let y = ar1(0.7, 1000, 42);
        let m = fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!((m.ar[0] - 0.7).abs() < 0.1, "{:?}", m.ar);
    }

    #[test]
    fn ma1_is_recovered_and_improves_on_seed() {
        let e = noise(9, 1001);
        let y: Vec<f64> = (1..e.len()).map(|t| e[t] + 0.5 * e[t - 1]).collect();
        let order = ArimaOrder::new(0, 0, 1).unwrap();
        let m = fit_arima(&y, order).unwrap();
        assert!((m.ma[0] - 0.5).abs() < 0.15, "{:?}", m.ma);
        let prep = prepare(&[Segment::new(&y)], order, 0, 0).unwrap();
        let seed = concentrated(&prep, &[0.0]).unwrap();
        assert!(m.css <= seed.css);
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(fit_arima(&[1.0; 15], ArimaOrder::new(1, 0, 0).unwrap()).is_err());
        assert!(ArimaOrder::new(6, 0, 0).is_err());
        assert!(ArimaOrder::new(0, 3, 0).is_err());
    }

    #[test]
    fn grid_has_36_candidates_and_skips_failures() {
        let y = ar1(0.6, 120, 5);
        let search = select_order(&[Segment::new(&y)], 0).unwrap();
        assert_eq!(search.candidates.len(), 36);
        // 120 points cannot support p + q + 1 > 12
        assert!(search.candidates.iter().any(|(_, a)| a.is_none()));
        let best = search.best;
        assert!(search.candidates.iter().any(|(o, a)| *o == best && a.is_some()));
    }

    #[test]
    fn ar2_selects_some_autoregression() {
        let e = noise(17, 900);
        let mut y = vec![0.0; 900];
        for t in 2..900 {
            y[t] = 0.5 * y[t - 1] + 0.3 * y[t - 2] + e[t];
        }
        let search = select_order(&[Segment::new(&y)], 0).unwrap();
        assert!(search.best.p >= 1, "{:?}", search.best);
    }

    #[test]
    fn white_noise_mostly_selects_constant_model() {
        // AIC over 36 candidates overfits a fair share of pure-noise samples;
        // the constant model must still be the clear mode
        let mut counts = std::collections::HashMap::new();
        for seed in 0..20 {
            let y = noise(100 + seed, 400);
            *counts.entry(select_order(&[Segment::new(&y)], 0).unwrap().best).or_insert(0) += 1;
        }
        let constant = counts.get(&ArimaOrder { p: 0, d: 0, q: 0 }).copied().unwrap_or(0);
        let runner_up = counts
            .iter()
            .filter(|(o, _)| o.p + o.q > 0)
            .map(|(_, &c)| c)
            .max()
            .unwrap_or(0);
        assert!(constant >= 8 && constant > 2 * runner_up, "{counts:?}");
    }

    #[test]
    fn cancelling_roots_are_flagged() {
        assert!(has_common_roots(&[0.5], &[-0.48]));
        assert!(!has_common_roots(&[0.5], &[0.5]));
        assert!(!has_common_roots::<f64>(&[], &[0.3]));
    }

    #[test]
    fn null_covariates_match_plain_arima() {
        let y = ar1(0.5, 600, 8);
        let zeros = vec![0.0; y.len()];
        let order = ArimaOrder::new(1, 0, 1).unwrap();
        let a = fit_arima(&y, order).unwrap();
        let b = fit_arimax(&y, &[&zeros], order).unwrap();
        assert!(b.ridge);
        assert!((a.ar[0] - b.ar[0]).abs() < 1e-6 && (a.ma[0] - b.ma[0]).abs() < 1e-6);
    }

    #[test]
    fn covariate_coefficient_is_recovered() {
        let z: Vec<f64> = noise(21, 800).iter().map(|v| 5.0 + 2.0 * v).collect();
        let e = noise(22, 800);
        let y: Vec<f64> = z.iter().zip(&e).map(|(zi, ei)| 0.5 * zi + 0.3 * ei).collect();
        let m = fit_arimax(&y, &[&z], ArimaOrder::new(0, 0, 0).unwrap()).unwrap();
        assert!((m.beta[0] - 0.5).abs() < 0.1, "{:?}", m.beta);
    }

    #[test]
    fn duplicated_covariate_takes_ridge_and_keeps_forecast() {
        let z: Vec<f64> = noise(31, 500).iter().map(|v| 10.0 + v).collect();
        let e = noise(32, 500);
        let y: Vec<f64> = z.iter().zip(&e).map(|(zi, ei)| 0.8 * zi + 0.5 * ei + 2.0).collect();
        let (train, fut) = (&y[..480], &z[480..]);
        let ztrain = &z[..480];
        let order = ArimaOrder::new(1, 0, 0).unwrap();
        let single = fit_arimax(train, &[ztrain], order).unwrap();
        let double = fit_arimax(train, &[ztrain, ztrain], order).unwrap();
        assert!(double.ridge && !single.ridge);
        let f1 = single.forecast(20, &[fut]).unwrap();
        let f2 = double.forecast(20, &[fut, fut]).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        assert!(double.forecast(20, &[fut]).is_err());
    }

    #[test]
    fn covariate_selection_rules() {
        let adj = AdjacencyMatrix::from_edges(4, &[(0, 1), (0, 2)]).unwrap();
        let base: Vec<f64> = (0..50).map(|t| (t as f64 * 0.3).sin()).collect();
        let series = vec![
            base.clone(),
            base.iter().map(|v| -v).collect(),
            base.clone(),
            base.clone(),
        ];
        let cs = select_covariates(0, &adj, &series, 40, 8).unwrap();
        assert_eq!(cs.neighbors, vec![2]);
        assert!((cs.correlations[0] - 1.0).abs() < 1e-12);
        assert!(select_covariates(3, &adj, &series, 40, 8).unwrap().neighbors.is_empty());
        let flat = vec![base.clone(), vec![1.0; 50], base.clone(), base];
        let cs = select_covariates(0, &adj, &flat, 40, 8).unwrap();
        assert_eq!(cs.neighbors, vec![2]);
        assert_eq!(cs.notes.len(), 1);
    }

    #[test]
    fn pooled_fit_resets_at_segment_boundaries() {
        let a = ar1(0.6, 400, 50);
        let b: Vec<f64> = ar1(0.6, 400, 51).iter().map(|v| v + 100.0).collect();
        let order = ArimaOrder::new(1, 1, 0).unwrap();
        let pooled = fit_segments(&[Segment::new(&a), Segment::new(&b)], order).unwrap();
        // two segments of 399 differences each, minus one AR lag per segment
        assert_eq!(pooled.n_obs, 2 * 398);
    }

    #[test]
    fn explosive_fit_is_flagged_not_rejected() {
        let y: Vec<f64> = (0..200).map(|t| 1.02f64.powi(t)).collect();
        let m = fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!(m.warnings.iter().any(|w| w.contains("stationary")));
    }

    #[test]
    fn works_in_single_precision() {
        let y: Vec<f32> = ar1(0.7, 500, 77).iter().map(|&v| v as f32).collect();
        let m = fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!((m.ar[0] - 0.7).abs() < 0.1);
    }
}
