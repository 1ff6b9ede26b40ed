//! Spatio-temporal taxi demand and supply forecasting over geohash and
//! Voronoi tessellations.

pub mod arima;
pub mod data;
pub mod error;
pub mod geo;
pub mod graph;
pub mod hedge;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod provenance;
pub mod report;
pub mod scalar;

pub use data::{SeriesMatrix, SplitSpec, SyntheticConfig};
pub use error::{Error, Result};
pub use geo::{GeoPoint, Scheme, Tessellation};
pub use graph::{AdjacencyMatrix, AugmentedAdjacency};
pub use nn::{Checkpoint, ModelKind, ModelSpec, TrainConfig};
pub use provenance::Provenance;
pub use scalar::Scalar;

/// Double-precision instantiations used by the pipeline.
pub type Network = nn::Network<f64>;
pub type Cell = nn::Cell<f64>;
pub type Forecaster = nn::Forecaster<f64>;
pub type TrainOutcome = nn::TrainOutcome<f64>;
pub type HedgeState = hedge::HedgeState<f64>;
pub type ExpertPool = hedge::ExpertPool<f64>;
pub type ForecastEvaluation = metrics::ForecastEvaluation<f64>;
