//! Trip ingestion, aggregation, scaling, splitting, neighbor features and
//! synthetic series.

pub mod features;
pub mod scale;
pub mod series;
pub mod split;
pub mod synth;
pub mod trips;

pub use features::{
    channel_series, frame_slots, frame_tensor, neighbor_channels, neighbor_features, NeighborChannels, Slot,
    DEFAULT_NEIGHBOR_CAP, SENTINEL,
};
pub use scale::{fit_minmax, ScalerParams};
pub use series::SeriesMatrix;
pub use split::{split_series, Split, SplitSpec};
pub use synth::{synthesize_series, synthetic_sites, Periodicity, SyntheticConfig};
pub use trips::{aggregate_series, aggregate_window, ingest_trips, Aggregation, Ingested, TripKind, TripRecord, TripSchema};
