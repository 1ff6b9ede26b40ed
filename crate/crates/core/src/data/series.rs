use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, Tessellation};
use crate::provenance::Provenance;

/// Region × time count matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    pub region_ids: Vec<String>,
    /// Start of the first bin, wall-clock.
    pub t0: NaiveDateTime,
    pub bin_minutes: u32,
    /// `values[region][t]`, non-negative.
    pub values: Vec<Vec<f64>>,
    /// Representative location per region, when known.
    pub sites: Option<Vec<GeoPoint>>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeriesMeta {
    region_ids: Vec<String>,
    t0: NaiveDateTime,
    bin_minutes: u32,
    regions: usize,
    steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sites: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl SeriesMatrix {
    pub fn new(region_ids: Vec<String>, t0: NaiveDateTime, bin_minutes: u32, values: Vec<Vec<f64>>) -> Result<Self> {
        if region_ids.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} region ids for {} series",
                region_ids.len(),
                values.len()
            )));
        }
        if bin_minutes == 0 {
            return Err(Error::invalid("bin width must be positive"));
        }
        let steps = values.first().map_or(0, Vec::len);
        if values.iter().any(|r| r.len() != steps) {
            return Err(Error::invalid("series have different lengths"));
        }
        if values.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("counts must be finite and non-negative"));
        }
        Ok(Self {
            region_ids,
            t0,
            bin_minutes,
            values,
            sites: None,
            provenance: None,
        })
    }

    pub fn regions(&self) -> usize {
        self.values.len()
    }

    pub fn steps(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Bins per day.
    pub fn steps_per_day(&self) -> Result<usize> {
        if (24 * 60) % self.bin_minutes != 0 {
            return Err(Error::invalid(format!("{}-minute bins do not tile a day", self.bin_minutes)));
        }
        Ok((24 * 60 / self.bin_minutes) as usize)
    }

    pub fn time_of(&self, t: usize) -> NaiveDateTime {
        self.t0 + Duration::minutes(self.bin_minutes as i64 * t as i64)
    }

    /// Column `t` across all regions.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[t]).collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    /// Reorder rows to the region order of `tess`, placing each series by
    /// its site. Regions without a site get zero rows.
    pub fn align_to(&self, tess: &Tessellation) -> Result<SeriesMatrix> {
        let sites = self
            .sites
            .as_ref()
            .ok_or_else(|| Error::invalid("series carries no region sites to align by"))?;
        let located = tess.locate_all(sites);
        let mut values = vec![vec![0.0; self.steps()]; tess.len()];
        let mut taken = vec![false; tess.len()];
        let mut new_sites = tess.centroids.clone();
        for (row, loc) in located.iter().enumerate() {
            let r = loc.ok_or_else(|| Error::invalid(format!("site of {} lies outside the tessellation", self.region_ids[row])))?;
            if taken[r] {
                return Err(Error::invalid(format!(
                    "two series fall into region {}",
                    tess.region_ids[r]
                )));
            }
            taken[r] = true;
            values[r].clone_from(&self.values[row]);
            new_sites[r] = sites[row];
        }
        Ok(SeriesMatrix {
            region_ids: tess.region_ids.clone(),
            t0: self.t0,
            bin_minutes: self.bin_minutes,
            values,
            sites: Some(new_sites),
            provenance: self.provenance.clone(),
        })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("meta.json")
    }

    /// CSV with one row per region (`region_id,0,1,…`) plus a JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["region_id".to_string()];
        header.extend((0..self.steps()).map(|t| t.to_string()));
        w.write_record(&header)?;
        for (id, row) in self.region_ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta = SeriesMeta {
            region_ids: self.region_ids.clone(),
            t0: self.t0,
            bin_minutes: self.bin_minutes,
            regions: self.regions(),
            steps: self.steps(),
            sites: self.sites.as_ref().map(|s| s.iter().map(|p| [p.lat, p.lon]).collect()),
            provenance: self.provenance.clone(),
        };
        let side = Self::sidecar_path(path);
        fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = Self::sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: SeriesMeta = serde_json::from_str(&text)?;
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{other:?}")),
        })?;
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut fields = rec.iter();
            let id = fields.next().ok_or_else(|| Error::Format("empty series row".into()))?;
            let row = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad count {f:?} for region {id}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            ids.push(id.to_string());
            values.push(row);
        }
        if ids != meta.region_ids {
            return Err(Error::Format("series rows disagree with the sidecar region ids".into()));
        }
        let mut m = SeriesMatrix::new(ids, meta.t0, meta.bin_minutes, values)?;
        if m.steps() != meta.steps {
            return Err(Error::Format(format!(
                "sidecar declares {} steps, file has {}",
                meta.steps,
                m.steps()
            )));
        }
        m.sites = meta
            .sites
            .map(|s| s.iter().map(|&[lat, lon]| GeoPoint::new(lat, lon)).collect::<Result<Vec<_>>>())
            .transpose()?;
        m.provenance = meta.provenance;
        Ok(m)
    }
}
