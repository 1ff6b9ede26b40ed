use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::data::ScalerParams;
use crate::error::{Error, Result};
use crate::provenance::Provenance;
use crate::scalar::Scalar;

use super::dataset::{InputLayout, TrainData};
use super::forecast::Forecaster;
use super::network::{ModelKind, ModelSpec, Network};
use super::optim::OpCounter;
use super::param::Tensor;
use super::train::{TrainConfig, TrainOutcome, TrainRun};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameter tensor as little-endian `f64` bytes, base64-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
    /// Support mask, one byte per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

impl TensorRecord {
    fn encode<T: Scalar>(t: &Tensor<T>) -> Self {
        let bytes: Vec<u8> = t.data.iter().flat_map(|v| v.as_f64().to_le_bytes()).collect();
        Self {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: STANDARD.encode(bytes),
            mask: t
                .mask
                .as_ref()
                .map(|m| STANDARD.encode(m.iter().map(|&b| b as u8).collect::<Vec<u8>>())),
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Format(format!("tensor {}: {e}", self.name)))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("tensor {} has a partial value", self.name)));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn mask_values(&self) -> Result<Option<Vec<bool>>> {
        self.mask
            .as_ref()
            .map(|m| {
                STANDARD
                    .decode(m)
                    .map(|b| b.into_iter().map(|x| x != 0).collect())
                    .map_err(|e| Error::Format(format!("mask of {}: {e}", self.name)))
            })
            .transpose()
    }
}

/// Summary of one training repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatLog {
    pub seed: u64,
    pub best_epoch: usize,
    /// Absent when there was no validation block.
    pub best_validation: Option<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub train_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
    pub ops: OpCounter,
}

impl<T> From<&TrainRun<T>> for RepeatLog {
    fn from(r: &TrainRun<T>) -> Self {
        Self {
            seed: r.seed,
            best_epoch: r.best_epoch,
            best_validation: r.best_validation.is_finite().then_some(r.best_validation),
            epochs_run: r.epochs_run,
            stopped_early: r.stopped_early,
            train_curve: r.train_curve.clone(),
            validation_curve: r.validation_curve.clone(),
            ops: r.ops,
        }
    }
}

/// Versioned, self-contained model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub scaler: ScalerParams,
    pub layout: InputLayout,
    pub lookback: usize,
    pub region_ids: Vec<String>,
    /// First step after the training history (start of the test block).
    pub history_end: usize,
    pub tensors: Vec<TensorRecord>,
    /// Repeat whose weights are stored.
    pub repeat: usize,
    pub repeats: Vec<RepeatLog>,
    pub ops: OpCounter,
    pub provenance: Provenance,
}

impl Checkpoint {
    /// Stores repeat `repeat` of `outcome` with the data context needed to forecast.
    pub fn from_run<T: Scalar>(
        outcome: &TrainOutcome<T>,
        repeat: usize,
        data: &TrainData,
        config: &TrainConfig,
        region_ids: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        let run = outcome
            .runs
            .get(repeat)
            .ok_or_else(|| Error::invalid(format!("no repeat {repeat}")))?;
        let net = &run.network;
        Ok(Self {
            version: CHECKPOINT_VERSION,
            kind: net.spec.kind,
            spec: net.spec.clone(),
            config: config.clone(),
            scaler: data.scaler.clone(),
            layout: data.layout.clone(),
            lookback: data.lookback,
            region_ids,
            history_end: data.scaled.first().map_or(0, Vec::len),
            tensors: net.tensors().into_iter().map(TensorRecord::encode).collect(),
            repeat,
            repeats: outcome.runs.iter().map(RepeatLog::from).collect(),
            ops: outcome.total_ops(),
            provenance,
        })
    }

    pub fn network<T: Scalar>(&self) -> Result<Network<T>> {
        let mut net = Network::<T>::zeros(self.spec.clone())?;
        let names = net.tensor_names();
        let slots = net.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model needs {}",
                self.tensors.len(),
                slots.len()
            )));
        }
        for ((slot, rec), name) in slots.into_iter().zip(&self.tensors).zip(&names) {
            if rec.name != slot.name || rec.shape != slot.shape {
                return Err(Error::Format(format!(
                    "tensor {} {:?} does not match {name} {:?}",
                    rec.name, rec.shape, slot.shape
                )));
            }
            let values = rec.values()?;
            if values.len() != slot.len() {
                return Err(Error::Format(format!("tensor {name} has {} values", values.len())));
            }
            if rec.mask_values()? != slot.mask {
                return Err(Error::Format(format!("tensor {name} has a foreign support mask")));
            }
            for (i, (d, v)) in slot.data.iter_mut().zip(values).enumerate() {
                if !slot.mask.as_ref().map_or(true, |m| m[i]) && v != 0.0 {
                    return Err(Error::Invariant(format!("{name}[{i}] is off-support but non-zero")));
                }
                *d = T::of(v);
            }
        }
        Ok(net)
    }

    pub fn forecaster<T: Scalar>(&self) -> Result<Forecaster<T>> {
        Ok(Forecaster {
            network: self.network()?,
            scaler: self.scaler.clone(),
            layout: self.layout.clone(),
            lookback: self.lookback,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
