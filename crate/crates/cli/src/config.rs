use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tessera::hedge::{DEFAULT_BETA, DEFAULT_GAMMA};
use tessera::metrics::DEFAULT_SEASONAL_PERIOD;
use tessera::{ModelKind, Provenance, Scheme, SplitSpec, SyntheticConfig, TrainConfig};

use crate::Failure;

pub const SEED_ENV: &str = "TESSERA_SEED";

/// Input locations that may come from the config file instead of flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub trips: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub tessellation: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub forecasts: Vec<PathBuf>,
}

/// One JSON document shared by every subcommand; flags override its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub scheme: Scheme,
    pub level: usize,
    /// Voronoi region count; defaults to the number of series sites.
    pub regions: Option<usize>,
    pub bin_minutes: u32,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub synth: SyntheticConfig,
    pub horizon: usize,
    pub seasonal_period: usize,
    pub gamma: f64,
    pub beta: f64,
    pub budget: usize,
    /// Overrides every nested seed when set.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            scheme: Scheme::Voronoi,
            level: 6,
            regions: None,
            bin_minutes: 60,
            model: ModelKind::GraphLstm,
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            synth: SyntheticConfig::default(),
            horizon: 24,
            seasonal_period: DEFAULT_SEASONAL_PERIOD,
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            budget: 8,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {path:?}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {path:?}: {e}")))
    }

    /// Seed precedence: flag, then config file, then `TESSERA_SEED`, then 0.
    /// The result is written into every nested seed.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, Failure> {
        let seed = match flag.or(self.seed) {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => 0,
            },
        };
        self.seed = Some(seed);
        self.train.seed = seed;
        self.synth.seed = seed;
        Ok(seed)
    }

    /// Provenance of an artifact: the seed plus a hash of the effective
    /// settings (paths excluded) and of the inputs' own fingerprints.
    pub fn provenance(&self, command: &str, inputs: &[Option<&Provenance>]) -> Provenance {
        let mut settings = self.clone();
        settings.paths = Paths::default();
        let upstream: Vec<Option<&str>> = inputs.iter().map(|p| p.map(|p| p.config_hash.as_str())).collect();
        Provenance::new(settings.seed.unwrap_or(0), &(command, &settings, upstream))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"train": {"epochs": 3}, "scheme": "geohash"}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.scheme, Scheme::Geohash);
        assert_eq!(c.horizon, 24);
    }

    #[test]
    fn paths_do_not_change_the_fingerprint() {
        let mut a = RunConfig::default();
        a.resolve_seed(Some(4)).unwrap();
        let mut b = a.clone();
        b.paths.series = Some("elsewhere.csv".into());
        assert_eq!(a.provenance("train", &[]), b.provenance("train", &[]));
        b.train.epochs = 1;
        assert_ne!(a.provenance("train", &[]), b.provenance("train", &[]));
        assert_eq!(a.train.seed, 4);
    }
}
