use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Scheme, Tessellation};
use crate::scalar::pearson;

/// Value of a missing-neighbor channel in scaled space, outside `[0, 1]`.
pub const SENTINEL: f64 = -1.0;
pub const DEFAULT_NEIGHBOR_CAP: usize = 8;

/// Source of one input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Region(usize),
    /// Constant [`SENTINEL`]: no neighbor to fill this channel.
    Sentinel,
    /// Constant zero: lattice position off the study grid.
    Zero,
}

impl Slot {
    pub fn value(&self, values: &[Vec<f64>], t: usize) -> f64 {
        match *self {
            Slot::Region(r) => values[r][t],
            Slot::Sentinel => SENTINEL,
            Slot::Zero => 0.0,
        }
    }
}

/// Channel sources for one region; channel 0 is always the region itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborChannels {
    pub slots: Vec<Slot>,
    /// Train-span correlation of each real neighbor channel (Voronoi only).
    pub correlations: Vec<f64>,
}

/// Voronoi: the region plus up to `cap` positively correlated first-order
/// neighbors, strongest first, padded with sentinels to `1 + cap` channels.
/// Geohash: the region plus its 8 lattice neighbors in (N, NE, …, NW) order.
pub fn neighbor_channels(
    values: &[Vec<f64>],
    tess: &Tessellation,
    region: usize,
    train_span: Range<usize>,
    cap: usize,
) -> Result<NeighborChannels> {
    if region >= tess.len() || values.len() != tess.len() {
        return Err(Error::invalid(format!(
            "region {region} with {} series over {} regions",
            values.len(),
            tess.len()
        )));
    }
    let mut slots = vec![Slot::Region(region)];
    let mut correlations = Vec::new();
    match tess.scheme {
        Scheme::Geohash => {
            for n in tess.lattice_neighbors(region)? {
                slots.push(n.map_or(Slot::Zero, Slot::Region));
            }
        }
        Scheme::Voronoi => {
            let own = values[region]
                .get(train_span.clone())
                .ok_or_else(|| Error::invalid("train span exceeds the series"))?;
            let mut ranked: Vec<(usize, f64)> = tess
                .adjacency
                .neighbors(region)
                .filter_map(|j| pearson(own, &values[j][train_span.clone()]).map(|r| (j, r)))
                .filter(|&(_, r)| r > 0.0)
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(cap);
            for &(j, r) in &ranked {
                slots.push(Slot::Region(j));
                correlations.push(r);
            }
            slots.resize(1 + cap, Slot::Sentinel);
        }
    }
    Ok(NeighborChannels { slots, correlations })
}

/// Materialize channels: `S × T`.
pub fn channel_series(values: &[Vec<f64>], slots: &[Slot]) -> Vec<Vec<f64>> {
    let steps = values.first().map_or(0, Vec::len);
    slots
        .iter()
        .map(|s| (0..steps).map(|t| s.value(values, t)).collect())
        .collect()
}

/// Neighbor channel series of one region (`S × T`).
pub fn neighbor_features(
    values: &[Vec<f64>],
    tess: &Tessellation,
    region: usize,
    train_span: Range<usize>,
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let ch = neighbor_channels(values, tess, region, train_span, cap)?;
    Ok(channel_series(values, &ch.slots))
}

/// Pixel sources of a region's 3×3 frame in row-major order
/// `[NW, N, NE, W, C, E, SW, S, SE]`.
pub fn frame_slots(tess: &Tessellation, region: usize) -> Result<Vec<Slot>> {
    if tess.scheme != Scheme::Geohash {
        return Err(Error::invalid("frames need a geohash tessellation"));
    }
    let n = tess.lattice_neighbors(region)?;
    let slot = |k: usize| n[k].map_or(Slot::Zero, Slot::Region);
    Ok(vec![
        slot(7),
        slot(0),
        slot(1),
        slot(6),
        Slot::Region(region),
        slot(2),
        slot(5),
        slot(4),
        slot(3),
    ])
}

/// `T` frames of 9 pixels (single channel).
pub fn frame_tensor(values: &[Vec<f64>], tess: &Tessellation, region: usize) -> Result<Vec<[f64; 9]>> {
    let slots = frame_slots(tess, region)?;
    let steps = values.first().map_or(0, Vec::len);
    Ok((0..steps)
        .map(|t| std::array::from_fn(|p| slots[p].value(values, t)))
        .collect())
}
