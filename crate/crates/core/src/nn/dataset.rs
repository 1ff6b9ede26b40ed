use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{fit_minmax, frame_slots, neighbor_channels, ScalerParams, SeriesMatrix, Slot, Split, DEFAULT_NEIGHBOR_CAP};
use crate::error::{Error, Result};
use crate::geo::Tessellation;
use crate::scalar::Scalar;

use super::network::ModelKind;

/// How a step's input vector is read off the scaled series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLayout {
    /// Whole-graph signal; one sample covers every region.
    Graph { regions: usize },
    /// One sample per region; `slots[region]` lists the region's channels
    /// (neighbor features or frame pixels).
    Regional { slots: Vec<Vec<Slot>> },
}

impl InputLayout {
    /// Neighbor channels (LSTM), 3×3 frames (ConvLSTM) or the full graph.
    pub fn for_model(kind: ModelKind, tess: &Tessellation, values: &[Vec<f64>], train: Range<usize>) -> Result<Self> {
        match kind {
            ModelKind::GraphLstm => Ok(InputLayout::Graph { regions: tess.len() }),
            ModelKind::Lstm => Ok(InputLayout::Regional {
                slots: (0..tess.len())
                    .map(|r| neighbor_channels(values, tess, r, train.clone(), DEFAULT_NEIGHBOR_CAP).map(|c| c.slots))
                    .collect::<Result<_>>()?,
            }),
            ModelKind::ConvLstm => Ok(InputLayout::Regional {
                slots: (0..tess.len()).map(|r| frame_slots(tess, r)).collect::<Result<_>>()?,
            }),
        }
    }

    pub fn regions(&self) -> usize {
        match self {
            InputLayout::Graph { regions } => *regions,
            InputLayout::Regional { slots } => slots.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            InputLayout::Graph { regions } => *regions,
            InputLayout::Regional { slots } => slots.first().map_or(0, Vec::len),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            InputLayout::Graph { regions } => *regions,
            InputLayout::Regional { .. } => 1,
        }
    }

    /// Samples whose target step lies in `targets`, skipping steps without a
    /// full lookback window.
    pub fn samples(&self, targets: Range<usize>, lookback: usize) -> Vec<Sample> {
        let steps = targets.start.max(lookback)..targets.end;
        match self {
            InputLayout::Graph { .. } => steps.map(|t| Sample { region: None, t }).collect(),
            InputLayout::Regional { slots } => steps
                .flat_map(|t| (0..slots.len()).map(move |r| Sample { region: Some(r), t }))
                .collect(),
        }
    }

    /// Input window `t − L .. t`, row per step.
    pub fn window<T: Scalar>(&self, values: &[Vec<f64>], s: &Sample, lookback: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(lookback * self.input_dim());
        for t in s.t - lookback..s.t {
            match (self, s.region) {
                (InputLayout::Graph { .. }, _) => out.extend(values.iter().map(|row| T::of(row[t]))),
                (InputLayout::Regional { slots }, Some(r)) => {
                    out.extend(slots[r].iter().map(|slot| T::of(slot.value(values, t))))
                }
                (InputLayout::Regional { .. }, None) => unreachable!("regional samples carry a region"),
            }
        }
        out
    }

    pub fn target<T: Scalar>(&self, values: &[Vec<f64>], s: &Sample) -> Vec<T> {
        match s.region {
            None => values.iter().map(|row| T::of(row[s.t])).collect(),
            Some(r) => vec![T::of(values[r][s.t])],
        }
    }
}

/// A training example: predict step `t` (of `region`, or of all regions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub region: Option<usize>,
    pub t: usize,
}

/// Scaled history with train and validation samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub layout: InputLayout,
    pub scaler: ScalerParams,
    /// MinMax-scaled series, truncated at the end of the validation block.
    pub scaled: Vec<Vec<f64>>,
    pub lookback: usize,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

impl TrainData {
    /// Fits the scaler on the training block, then builds the model's
    /// input layout and its samples. Validation windows may reach back into
    /// training steps; test steps are never read.
    pub fn prepare(series: &SeriesMatrix, tess: &Tessellation, kind: ModelKind, split: &Split, lookback: usize) -> Result<Self> {
        if series.regions() != tess.len() {
            return Err(Error::invalid(format!(
                "{} series for {} tessellation regions",
                series.regions(),
                tess.len()
            )));
        }
        if lookback == 0 || split.train.len() <= lookback {
            return Err(Error::invalid(format!(
                "lookback {lookback} needs a longer training block than {}",
                split.train.len()
            )));
        }
        let history: Vec<Vec<f64>> = series.values.iter().map(|r| r[..split.validation.end].to_vec()).collect();
        let scaler = fit_minmax(&history, split.train.clone())?;
        let scaled = scaler.apply(&history)?;
        let layout = InputLayout::for_model(kind, tess, &history, split.train.clone())?;
        Ok(Self {
            train: layout.samples(split.train.clone(), lookback),
            validation: layout.samples(split.validation.clone(), lookback),
            layout,
            scaler,
            scaled,
            lookback,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_series, SplitSpec};
    use crate::geo::GeoPoint;
    use chrono::NaiveDate;

    fn fixture() -> (SeriesMatrix, Tessellation) {
        let pts = [GeoPoint { lat: 0.001, lon: 0.001 }, GeoPoint { lat: 0.0065, lon: 0.012 }];
        let tess = Tessellation::geohash_grid(&pts, 6).unwrap();
        let n = tess.len();
        let values = (0..n)
            .map(|r| (0..24 * 5).map(|t| ((t * (r + 1)) % 13) as f64).collect())
            .collect();
        let t0 = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        (SeriesMatrix::new(tess.region_ids.clone(), t0, 60, values).unwrap(), tess)
    }

    #[test]
    fn graph_samples_cover_all_regions() {
        let (s, tess) = fixture();
        let split = split_series(s.steps(), 24, &SplitSpec { train_days: 4, test_days: 1, validation_fraction: 0.25 }).unwrap();
        let d = TrainData::prepare(&s, &tess, ModelKind::GraphLstm, &split, 6).unwrap();
        assert_eq!(d.train.len(), 72 - 6);
        assert_eq!(d.validation.len(), 24);
        assert_eq!(d.scaled[0].len(), 96);
        let w: Vec<f64> = d.layout.window(&d.scaled, &d.validation[0], 6);
        assert_eq!(w.len(), 6 * tess.len());
        assert_eq!(w[5 * tess.len() + 1], d.scaled[1][71]);
        assert_eq!(d.layout.target::<f64>(&d.scaled, &d.validation[0]).len(), tess.len());
    }

    #[test]
    fn regional_samples_follow_their_slots() {
        let (s, tess) = fixture();
        let split = split_series(s.steps(), 24, &SplitSpec { train_days: 4, test_days: 1, validation_fraction: 0.25 }).unwrap();
        for kind in [ModelKind::Lstm, ModelKind::ConvLstm] {
            let d = TrainData::prepare(&s, &tess, kind, &split, 4).unwrap();
            assert_eq!(d.train.len(), (72 - 4) * tess.len());
            assert_eq!(d.input_dim(), 9);
            let smp = Sample { region: Some(2), t: 10 };
            let w: Vec<f64> = d.layout.window(&d.scaled, &smp, 4);
            let centre = if kind == ModelKind::Lstm { 0 } else { 4 };
            assert_eq!(w[3 * 9 + centre], d.scaled[2][9]);
            assert_eq!(d.layout.target::<f64>(&d.scaled, &smp), vec![d.scaled[2][10]]);
        }
    }

    #[test]
    fn scaler_sees_only_the_training_block() {
        let (mut s, tess) = fixture();
        let split = split_series(s.steps(), 24, &SplitSpec { train_days: 4, test_days: 1, validation_fraction: 0.25 }).unwrap();
        let a = TrainData::prepare(&s, &tess, ModelKind::GraphLstm, &split, 6).unwrap();
        for row in &mut s.values {
            for v in &mut row[72..] {
                *v = 1000.0;
            }
        }
        let b = TrainData::prepare(&s, &tess, ModelKind::GraphLstm, &split, 6).unwrap();
        assert_eq!(a.scaler, b.scaler);
        assert_eq!(a.scaler.fit_span, 0..72);
    }
}
