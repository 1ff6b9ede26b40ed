//! Forecast tables and evaluation reports as CSV.
//!
//! Both formats start with a `# seed=… config_hash=…` comment line so every
//! file carries its provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SeriesMatrix;
use crate::error::{Error, Result};
use crate::metrics;
use crate::provenance::Provenance;

/// Scope label of the city-aggregate report rows.
pub const CITY: &str = "city";

fn provenance_line(p: &Provenance) -> String {
    format!("# seed={} config_hash={}\n", p.seed, p.config_hash)
}

/// Splits off and parses the leading provenance comment.
fn split_provenance(text: &str) -> Result<(Provenance, &str)> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let mut seed = None;
    let mut hash = None;
    for field in first.strip_prefix('#').unwrap_or("").split_whitespace() {
        match field.split_once('=') {
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            _ => {}
        }
    }
    match (seed, hash) {
        (Some(seed), Some(config_hash)) => Ok((Provenance { seed, config_hash }, rest)),
        _ => Err(Error::Format("missing provenance line".into())),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    f.parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad {what} {f:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub region_id: String,
    /// Absolute step index in the series.
    pub t: usize,
    pub y_true: Option<f64>,
    pub y_pred: f64,
}

/// Long-format forecasts: one row per region and step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTable {
    pub provenance: Provenance,
    pub rows: Vec<ForecastRow>,
}

impl ForecastTable {
    /// `predictions[region][k]` is the forecast for step `origin + k`. Truth is
    /// filled in where `truth` covers that step.
    pub fn new(
        region_ids: &[String],
        origin: usize,
        predictions: &[Vec<f64>],
        truth: Option<&SeriesMatrix>,
        provenance: Provenance,
    ) -> Result<Self> {
        if region_ids.len() != predictions.len() {
            return Err(Error::invalid("one prediction row per region"));
        }
        if let Some(s) = truth {
            if s.region_ids != region_ids {
                return Err(Error::invalid("truth series regions differ from the forecast regions"));
            }
        }
        let mut rows = Vec::new();
        for (r, (id, preds)) in region_ids.iter().zip(predictions).enumerate() {
            for (k, &y_pred) in preds.iter().enumerate() {
                let t = origin + k;
                rows.push(ForecastRow {
                    region_id: id.clone(),
                    t,
                    y_true: truth.and_then(|s| s.values[r].get(t).copied()),
                    y_pred,
                });
            }
        }
        Ok(Self { provenance, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = provenance_line(&self.provenance);
        out.push_str("region_id,t,y_true,y_pred\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.region_id,
                row.t,
                fmt_opt(row.y_true),
                row.y_pred
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (provenance, body) = split_provenance(text)?;
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Format(format!("forecast row has {} fields", rec.len())));
            }
            let t = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad step {:?}", &rec[1])))?;
            rows.push(ForecastRow {
                region_id: rec[0].to_string(),
                t,
                y_true: parse_opt(&rec[2], "observation")?,
                y_pred: parse_opt(&rec[3], "forecast")?.ok_or_else(|| Error::Format("empty forecast".into()))?,
            });
        }
        Ok(Self { provenance, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&read_text(path)?)
    }

    /// Forecasts per region as contiguous step ranges: `(origin, values)`.
    pub fn by_region(&self) -> Result<BTreeMap<String, (usize, Vec<f64>)>> {
        let mut out: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
        for row in &self.rows {
            let entry = out.entry(row.region_id.clone()).or_insert((row.t, Vec::new()));
            if row.t != entry.0 + entry.1.len() {
                return Err(Error::Format(format!(
                    "forecast steps of region {} are not contiguous at t = {}",
                    row.region_id, row.t
                )));
            }
            entry.1.push(row.y_pred);
        }
        Ok(out)
    }

    /// Forecast matrix `[region][k]` in the order of `region_ids`, with the
    /// common origin.
    pub fn matrix(&self, region_ids: &[String]) -> Result<(usize, Vec<Vec<f64>>)> {
        let mut by = self.by_region()?;
        let mut origin = None;
        let mut rows = Vec::with_capacity(region_ids.len());
        for id in region_ids {
            let (o, v) = by
                .remove(id)
                .ok_or_else(|| Error::Format(format!("no forecast for region {id}")))?;
            if *origin.get_or_insert(o) != o || rows.first().is_some_and(|f: &Vec<f64>| f.len() != v.len()) {
                return Err(Error::Format(format!("region {id} is not aligned with the other forecasts")));
            }
            rows.push(v);
        }
        if let Some(extra) = by.keys().next() {
            return Err(Error::Format(format!("forecast for unknown region {extra}")));
        }
        Ok((origin.unwrap_or(0), rows))
    }
}

/// Mean ± std of one metric over runs, for one region or the city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scope: String,
    pub metric: String,
    /// `None` when the metric is undefined in every run.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Runs in which the metric was defined.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub provenance: Provenance,
    pub rows: Vec<ReportRow>,
}

pub const METRICS: [&str; 3] = ["smape", "mase", "rmse"];

fn summarize(scope: &str, metric: &str, values: &[f64]) -> ReportRow {
    let (mean, std) = if values.is_empty() {
        (None, None)
    } else {
        let s = metrics::mean_std(values);
        (Some(s.mean), Some(s.std))
    };
    ReportRow {
        scope: scope.to_string(),
        metric: metric.to_string(),
        mean,
        std,
        runs: values.len(),
    }
}

/// Scores every run against `series`. Each region's MASE scale uses its
/// series before the forecast origin. Regions where MASE is undefined (flat
/// history) are left out of that metric. City rows average regions within a
/// run, then summarise over runs.
pub fn evaluate_runs(series: &SeriesMatrix, runs: &[ForecastTable], m: usize, provenance: Provenance) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let n = series.regions();
    // per_region[metric][region] -> values over runs
    let mut per_region = vec![vec![Vec::new(); n]; METRICS.len()];
    let mut city = vec![Vec::new(); METRICS.len()];
    for run in runs {
        let (origin, preds) = run.matrix(&series.region_ids)?;
        let h = preds.first().map_or(0, Vec::len);
        if origin + h > series.steps() {
            return Err(Error::invalid(format!(
                "forecast reaches step {} beyond the series end {}",
                origin + h,
                series.steps()
            )));
        }
        let mut sums = vec![(0.0, 0usize); METRICS.len()];
        for (r, pred) in preds.iter().enumerate() {
            let y = &series.values[r][origin..origin + h];
            let train = &series.values[r][..origin];
            let scores = [
                Some(metrics::smape(y, pred)?),
                match metrics::mase(y, pred, train, m) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedMetric(_)) => None,
                    Err(e) => return Err(e),
                },
                Some(metrics::rmse(y, pred)?),
            ];
            for (k, s) in scores.into_iter().enumerate() {
                if let Some(v) = s {
                    per_region[k][r].push(v);
                    sums[k].0 += v;
                    sums[k].1 += 1;
                }
            }
        }
        for (k, (total, count)) in sums.into_iter().enumerate() {
            if count > 0 {
                city[k].push(total / count as f64);
            }
        }
    }
    let mut rows = Vec::new();
    for (r, id) in series.region_ids.iter().enumerate() {
        for (k, name) in METRICS.iter().enumerate() {
            rows.push(summarize(id, name, &per_region[k][r]));
        }
    }
    for (k, name) in METRICS.iter().enumerate() {
        rows.push(summarize(CITY, name, &city[k]));
    }
    Ok(Report { provenance, rows })
}

impl Report {
    pub fn city(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scope == CITY && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = provenance_line(&self.provenance);
        out.push_str("scope,metric,mean,std,runs\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scope,
                r.metric,
                fmt_opt(r.mean),
                fmt_opt(r.std),
                r.runs
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (provenance, body) = split_provenance(text)?;
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Format(format!("report row has {} fields", rec.len())));
            }
            rows.push(ReportRow {
                scope: rec[0].to_string(),
                metric: rec[1].to_string(),
                mean: parse_opt(&rec[2], "mean")?,
                std: parse_opt(&rec[3], "std")?,
                runs: rec[4]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad run count {:?}", &rec[4])))?,
            });
        }
        Ok(Self { provenance, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&read_text(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn series() -> SeriesMatrix {
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let a: Vec<f64> = (0..72).map(|t| (t % 24) as f64).collect();
        let b = vec![5.0; 72];
        SeriesMatrix::new(vec!["a".into(), "b".into()], t0, 60, vec![a, b]).unwrap()
    }

    fn prov() -> Provenance {
        Provenance::new(3, &"test")
    }

    #[test]
    fn forecast_csv_round_trips() {
        let s = series();
        let preds = vec![vec![1.5, 2.0], vec![5.0, 4.25]];
        let f = ForecastTable::new(&s.region_ids, 71, &preds, Some(&s), prov()).unwrap();
        assert_eq!(f.rows[0].y_true, Some(23.0));
        assert_eq!(f.rows[1].y_true, None);
        let text = f.to_csv();
        assert!(text.starts_with("# seed=3 config_hash="));
        let back = ForecastTable::from_csv(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.matrix(&s.region_ids).unwrap(), (71, preds));
        assert!(back.matrix(&["a".to_string()]).is_err());
    }

    #[test]
    fn seasonal_naive_forecast_scores_mase_one_on_periodic_region() {
        let s = series();
        let naive: Vec<Vec<f64>> = s.values.iter().map(|r| r[24..48].to_vec()).collect();
        let f = ForecastTable::new(&s.region_ids, 48, &naive, Some(&s), prov()).unwrap();
        let rep = evaluate_runs(&s, &[f.clone(), f], 24, prov()).unwrap();
        let get = |scope: &str, metric: &str| rep.rows.iter().find(|r| r.scope == scope && r.metric == metric).unwrap();
        // region a is exactly periodic, so both the forecast and the in-sample naive errors are zero
        assert_eq!(get("a", "smape").mean, Some(0.0));
        assert_eq!(get("a", "mase").mean, None);
        assert_eq!(get("b", "rmse").mean, Some(0.0));
        assert_eq!(get(CITY, "smape").runs, 2);
        assert_eq!(get(CITY, "smape").std, Some(0.0));
        assert_eq!(rep.rows.len(), 9);
        assert_eq!(Report::from_csv(&rep.to_csv()).unwrap(), rep);
    }

    #[test]
    fn city_row_averages_regions_then_runs() {
        let s = series();
        let run = |da: f64, db: f64| {
            let p = vec![s.values[0][48..50].iter().map(|v| v + da).collect(), vec![5.0 + db; 2]];
            ForecastTable::new(&s.region_ids, 48, &p, None, prov()).unwrap()
        };
        let rep = evaluate_runs(&s, &[run(1.0, 3.0), run(3.0, 5.0)], 24, prov()).unwrap();
        let rmse = rep.city("rmse").unwrap();
        // run means: (1 + 3)/2 = 2 and (3 + 5)/2 = 4
        assert!((rmse.mean.unwrap() - 3.0).abs() < 1e-12);
        assert!((rmse.std.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_provenance_is_rejected() {
        assert!(ForecastTable::from_csv("region_id,t,y_true,y_pred\n").is_err());
        let s = series();
        let f = ForecastTable::new(&s.region_ids, 70, &[vec![0.0; 3], vec![0.0; 3]], None, prov()).unwrap();
        assert!(evaluate_runs(&s, &[f], 24, prov()).is_err());
    }
}
