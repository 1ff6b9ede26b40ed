use std::f64::consts::PI;

use chrono::{NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{geohash, GeoPoint};
use crate::provenance::Provenance;

use super::series::SeriesMatrix;

/// Geohash level of the synthetic region block.
pub const SYNTH_LEVEL: usize = 6;
const ORIGIN: GeoPoint = GeoPoint { lat: 40.70, lon: -74.02 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    /// Period in time steps.
    pub period: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub regions: usize,
    pub days: usize,
    pub bin_minutes: u32,
    pub periods: Vec<Periodicity>,
    pub base: f64,
    /// Gaussian jitter added to the Poisson mean.
    pub noise_std: f64,
    /// Zipf exponent of the per-region volume weights; 0 gives equal regions.
    pub skew: f64,
    /// Phase offset, in radians, between opposite corners of the region block.
    pub phase_spread: f64,
    pub seed: u64,
    pub start: NaiveDateTime,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            regions: 25,
            days: 60,
            bin_minutes: 60,
            periods: vec![
                Periodicity { period: 12.0, amplitude: 3.0 },
                Periodicity { period: 24.0, amplitude: 8.0 },
                Periodicity { period: 168.0, amplitude: 4.0 },
            ],
            base: 20.0,
            noise_std: 1.0,
            skew: 0.0,
            phase_spread: 1.0,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2019, 1, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regions == 0 || self.days == 0 {
            return Err(Error::invalid("synthetic data needs regions and days"));
        }
        if self.bin_minutes == 0 || 1440 % self.bin_minutes != 0 {
            return Err(Error::invalid(format!("{}-minute bins do not tile a day", self.bin_minutes)));
        }
        if self.periods.iter().any(|p| !(p.period > 0.0) || !p.amplitude.is_finite()) {
            return Err(Error::invalid("periods must be positive with finite amplitudes"));
        }
        if !(self.base.is_finite() && self.noise_std >= 0.0 && self.skew >= 0.0 && self.phase_spread.is_finite()) {
            return Err(Error::invalid("base, noise and skew must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.days * (1440 / self.bin_minutes as usize)
    }

    /// Near-square block shape holding `regions` cells.
    pub fn block(&self) -> (usize, usize) {
        let rows = ((self.regions as f64).sqrt().floor() as usize).max(1);
        (rows, self.regions.div_ceil(rows))
    }
}

/// Centers of the first `regions` cells (row-major, north first) of a
/// level-6 geohash block.
pub fn synthetic_sites(cfg: &SyntheticConfig) -> Result<Vec<GeoPoint>> {
    let (_, cols) = cfg.block();
    let anchor = geohash::encode(&ORIGIN, SYNTH_LEVEL)?;
    let (dlat, dlon) = (anchor.bbox.lat_span(), anchor.bbox.lon_span());
    let c = anchor.center();
    (0..cfg.regions)
        .map(|i| GeoPoint::new(c.lat - (i / cols) as f64 * dlat, c.lon + (i % cols) as f64 * dlon))
        .collect()
}

/// Volume weights summing to the region count.
pub fn region_weights(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..cfg.regions).collect();
    ranks.shuffle(rng);
    let raw: Vec<f64> = ranks.iter().map(|&r| ((r + 1) as f64).powf(-cfg.skew)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w * cfg.regions as f64 / total).collect()
}

/// Poisson means per region and step, and the sampled counts.
pub fn synthesize_means(cfg: &SyntheticConfig) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = region_weights(cfg, &mut rng);
    let (rows, cols) = cfg.block();
    let steps = cfg.steps();
    let jitter = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut means = Vec::with_capacity(cfg.regions);
    let mut counts = Vec::with_capacity(cfg.regions);
    for (i, w) in weights.iter().enumerate() {
        let (r, c) = ((i / cols) as f64, (i % cols) as f64);
        let across = r / rows.max(2).saturating_sub(1) as f64 + c / cols.max(2).saturating_sub(1) as f64;
        let phase = 0.5 * cfg.phase_spread * across;
        let mut mean_row = Vec::with_capacity(steps);
        let mut count_row = Vec::with_capacity(steps);
        for t in 0..steps {
            let seasonal: f64 = cfg
                .periods
                .iter()
                .map(|p| p.amplitude * (2.0 * PI * t as f64 / p.period + phase).sin())
                .sum();
            let noise = if cfg.noise_std > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
            let mean = (w * (cfg.base + seasonal) + noise).max(0.0);
            let count = if mean > 0.0 {
                Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng)
            } else {
                0.0
            };
            mean_row.push(mean);
            count_row.push(count);
        }
        means.push(mean_row);
        counts.push(count_row);
    }
    Ok((means, counts))
}

/// Poisson count matrix whose regions are the synthetic geohash sites.
pub fn synthesize_series(cfg: &SyntheticConfig) -> Result<SeriesMatrix> {
    let (_, counts) = synthesize_means(cfg)?;
    let sites = synthetic_sites(cfg)?;
    let ids = sites
        .iter()
        .map(|p| geohash::encode(p, SYNTH_LEVEL).map(|c| c.code))
        .collect::<Result<Vec<_>>>()?;
    let mut m = SeriesMatrix::new(ids, cfg.start, cfg.bin_minutes, counts)?;
    m.sites = Some(sites);
    m.provenance = Some(Provenance::new(cfg.seed, cfg));
    Ok(m)
}
