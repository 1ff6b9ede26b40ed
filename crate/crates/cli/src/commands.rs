use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tessera::data::{
    aggregate_series, ingest_trips, split_series, synthesize_series, Ingested, TripKind, TripSchema,
};
use tessera::geo::point::EARTH_RADIUS_KM;
use tessera::geo::{tessellation::write_heatmap, Projection};
use tessera::hedge::{self, combine_forecasts, default_beta_grid, default_gamma_grid, tune, HedgeState};
use tessera::nn::{search_hyperparameters, train_model, Checkpoint, SearchSpace, TrainData, Trial};
use tessera::report::{evaluate_runs, ForecastTable};
use tessera::{ModelKind, Provenance, Scheme, SeriesMatrix, Tessellation};

use crate::config::RunConfig;
use crate::{
    AggregateArgs, Common, EvaluateArgs, Failure, ForecastArgs, HedgeArgs, ModelArgs, SearchArgs, SynthArgs,
    TessellateArgs, TrainArgs,
};

type Outcome = Result<String, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Flag value, else the config path; the file must exist.
fn input(flag: Option<PathBuf>, configured: Option<&PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    let path = flag
        .or_else(|| configured.cloned())
        .ok_or_else(|| usage(format!("missing --{what}")))?;
    existing(path)
}

fn existing(path: PathBuf) -> Result<PathBuf, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(usage(format!("input {path:?} does not exist")))
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    if let Some(p) = &common.config {
        existing(p.clone())?;
    }
    RunConfig::load(common.config.as_deref())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn schema(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<TripSchema, Failure> {
    match flag.or_else(|| cfg.paths.schema.clone()) {
        None => Ok(TripSchema::default()),
        Some(p) => {
            let p = existing(p)?;
            let text = fs::read_to_string(&p).map_err(|e| usage(format!("cannot read {p:?}: {e}")))?;
            TripSchema::from_json(&text).map_err(|e| usage(format!("bad schema {p:?}: {e}")))
        }
    }
}

fn ingest(path: &Path, schema: &TripSchema) -> Result<Ingested, Failure> {
    let ing = ingest_trips(path, schema)?;
    for (line, reason) in &ing.report {
        log::warn!("skipped line {line}: {reason}");
    }
    Ok(ing)
}

/// Reorders `series` onto the regions `ids`, through the tessellation when
/// the ids differ.
fn align(series: SeriesMatrix, ids: &[String], tess: Option<&Tessellation>) -> Result<SeriesMatrix, Failure> {
    if series.region_ids == ids {
        return Ok(series);
    }
    let t = tess.ok_or_else(|| usage("series regions differ from the model regions; pass --tessellation"))?;
    if t.region_ids != ids {
        return Err(usage("the tessellation does not match the model regions"));
    }
    Ok(series.align_to(t)?)
}

fn mean_degree(t: &Tessellation) -> f64 {
    let d = t.adjacency.degrees();
    d.iter().sum::<usize>() as f64 / d.len().max(1) as f64
}

pub fn tessellate(a: TessellateArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    set(&mut cfg.scheme, a.scheme);
    set(&mut cfg.level, a.level);
    if a.regions.is_some() {
        cfg.regions = a.regions;
    }
    let seed = cfg.resolve_seed(a.common.seed)?;
    let from_trips = match (&a.trips, &a.series) {
        (Some(_), _) => true,
        (None, Some(_)) => false,
        (None, None) => cfg.paths.trips.is_some(),
    };
    let (tess, counts) = if from_trips {
        let path = input(a.trips, cfg.paths.trips.as_ref(), "trips")?;
        let ing = ingest(&path, &schema(a.schema, &cfg)?)?;
        let all: Vec<_> = ing.records.iter().map(|r| r.point).collect();
        let demand: Vec<_> = ing
            .records
            .iter()
            .filter(|r| r.kind == TripKind::Demand)
            .map(|r| r.point)
            .collect();
        let tess = match cfg.scheme {
            Scheme::Geohash => Tessellation::geohash_grid(&all, cfg.level)?,
            Scheme::Voronoi => {
                let k = cfg.regions.ok_or_else(|| usage("voronoi from trips needs --regions"))?;
                let sites = if demand.is_empty() { &all } else { &demand };
                Tessellation::voronoi(sites, k, seed)?.0
            }
        };
        let mut counts = vec![0.0; tess.len()];
        for r in tess.locate_all(&all).into_iter().flatten() {
            counts[r] += 1.0;
        }
        (tess, Some(counts))
    } else {
        let path = input(a.series, cfg.paths.series.as_ref(), "series")?;
        let series = SeriesMatrix::load(&path)?;
        let sites = series
            .sites
            .clone()
            .ok_or_else(|| usage(format!("{path:?} has no region sites; tessellate from trips instead")))?;
        let tess = match cfg.scheme {
            Scheme::Geohash => Tessellation::geohash_grid(&sites, cfg.level)?,
            Scheme::Voronoi => match cfg.regions {
                Some(k) if k != sites.len() => Tessellation::voronoi(&sites, k, seed)?.0,
                _ => Tessellation::voronoi_from_centroids(sites.clone(), Projection::about_centroid(&sites)?)?,
            },
        };
        (tess, None)
    };
    if a.heatmap.is_some() && counts.is_none() {
        return Err(usage("--heatmap needs --trips"));
    }
    let tess = tess.with_provenance(cfg.provenance("tessellate", &[]));
    tess.save(&a.output)?;
    if let (Some(p), Some(c)) = (&a.heatmap, &counts) {
        write_heatmap(p, &tess, c)?;
    }
    let mut summary = format!(
        "tessellate: {} {} regions, mean degree {:.2} -> {}",
        tess.scheme,
        tess.len(),
        mean_degree(&tess),
        a.output.display()
    );
    if tess.scheme == Scheme::Geohash {
        let cell = tess.cell(0)?;
        let km_per_deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let c = cell.center();
        summary += &format!(
            " (level {} cells {:.2} km × {:.2} km)",
            cfg.level,
            cell.bbox.lon_span() * km_per_deg * c.lat.to_radians().cos(),
            cell.bbox.lat_span() * km_per_deg
        );
    }
    Ok(summary)
}

pub fn aggregate(a: AggregateArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    set(&mut cfg.bin_minutes, a.bin_minutes);
    cfg.resolve_seed(a.common.seed)?;
    let tess_path = input(a.tessellation, cfg.paths.tessellation.as_ref(), "tessellation")?;
    let trips_path = input(a.trips, cfg.paths.trips.as_ref(), "trips")?;
    let tess = Tessellation::load(&tess_path)?;
    let ing = ingest(&trips_path, &schema(a.schema, &cfg)?)?;
    let records: Vec<_> = ing.records.into_iter().filter(|r| r.kind == a.kind).collect();
    let agg = aggregate_series(&records, &tess, cfg.bin_minutes)?;
    let mut matrix = agg.matrix;
    matrix.provenance = Some(cfg.provenance(&format!("aggregate {}", a.kind), &[tess.provenance.as_ref()]));
    matrix.save(&a.output)?;
    Ok(format!(
        "aggregate: {} {} trips into {} regions × {} steps ({} malformed rows skipped, {} outside the study area) -> {}",
        records.len(),
        a.kind,
        matrix.regions(),
        matrix.steps(),
        ing.skipped,
        agg.dropped,
        a.output.display()
    ))
}

pub fn synth(a: SynthArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    let s = &mut cfg.synth;
    set(&mut s.regions, a.regions);
    set(&mut s.days, a.days);
    set(&mut s.bin_minutes, a.bin_minutes);
    set(&mut s.base, a.base);
    set(&mut s.noise_std, a.noise_std);
    set(&mut s.skew, a.skew);
    cfg.resolve_seed(a.common.seed)?;
    cfg.synth.validate().map_err(|e| usage(e.to_string()))?;
    let mut series = synthesize_series(&cfg.synth)?;
    series.provenance = Some(cfg.provenance("synth", &[]));
    series.save(&a.output)?;
    Ok(format!(
        "synth: {} regions × {} steps, total {} -> {}",
        series.regions(),
        series.steps(),
        series.total(),
        a.output.display()
    ))
}

fn apply_model_args(cfg: &mut RunConfig, m: &ModelArgs) {
    set(&mut cfg.model, m.model);
    let t = &mut cfg.train;
    set(&mut t.layers, m.layers);
    set(&mut t.neurons, m.neurons);
    set(&mut t.filters, m.filters);
    set(&mut t.dropout, m.dropout);
    set(&mut t.learning_rate, m.learning_rate);
    set(&mut t.batch_size, m.batch_size);
    set(&mut t.epochs, m.epochs);
    set(&mut t.repeats, m.repeats);
    set(&mut t.lookback, m.lookback);
    set(&mut t.patience, m.patience);
    if m.validation_horizon.is_some() {
        t.validation_horizon = m.validation_horizon;
    }
    if m.max_steps.is_some() {
        t.max_steps = m.max_steps;
    }
}

struct Prepared {
    tess: Tessellation,
    data: TrainData,
    inputs: Vec<Option<Provenance>>,
}

fn prepare(cfg: &RunConfig, m: &ModelArgs) -> Result<Prepared, Failure> {
    cfg.train.validate(cfg.model).map_err(|e| usage(e.to_string()))?;
    let series_path = input(m.series.clone(), cfg.paths.series.as_ref(), "series")?;
    let tess_path = input(m.tessellation.clone(), cfg.paths.tessellation.as_ref(), "tessellation")?;
    let tess = Tessellation::load(&tess_path)?;
    if cfg.model == ModelKind::ConvLstm && tess.scheme != Scheme::Geohash {
        return Err(usage("convlstm needs a geohash tessellation"));
    }
    let raw = SeriesMatrix::load(&series_path)?;
    let inputs = vec![raw.provenance.clone(), tess.provenance.clone()];
    let series = align(raw, &tess.region_ids.clone(), Some(&tess))?;
    let split = split_series(series.steps(), series.steps_per_day()?, &cfg.split)?;
    let data = TrainData::prepare(&series, &tess, cfg.model, &split, cfg.train.lookback)?;
    Ok(Prepared { tess, data, inputs })
}

fn repeat_path(output: &Path, k: usize) -> PathBuf {
    let stem = output.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.r{k}.json"))
}

pub fn train(a: TrainArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    apply_model_args(&mut cfg, &a.model);
    cfg.resolve_seed(a.common.seed)?;
    let p = prepare(&cfg, &a.model)?;
    let outcome = train_model::<f64>(cfg.model, &p.tess.adjacency, &p.data, &cfg.train)?;
    let inputs: Vec<_> = p.inputs.iter().map(Option::as_ref).collect();
    let prov = cfg.provenance("train", &inputs);
    let ids = p.tess.region_ids.clone();
    let ck = Checkpoint::from_run(&outcome, outcome.best, &p.data, &cfg.train, ids.clone(), prov.clone())?;
    ck.save(&a.output)?;
    if a.save_repeats {
        for k in 0..outcome.runs.len() {
            Checkpoint::from_run(&outcome, k, &p.data, &cfg.train, ids.clone(), prov.clone())?.save(&repeat_path(&a.output, k))?;
        }
    }
    let best = outcome.best_run();
    Ok(format!(
        "train: {} on {} regions, best repeat {} of {} (epoch {}, validation {:.6}), {} update flops -> {}",
        cfg.model,
        ids.len(),
        outcome.best,
        outcome.runs.len(),
        best.best_epoch,
        best.best_validation,
        ck.ops.update_flops,
        a.output.display()
    ))
}

#[derive(Serialize)]
struct SearchDoc<'a> {
    provenance: Provenance,
    /// Effective settings with the best training configuration, so the
    /// document can be passed back as `--config`.
    #[serde(flatten)]
    config: RunConfig,
    best_validation: f64,
    trials: &'a [Trial],
}

pub fn search(a: SearchArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    apply_model_args(&mut cfg, &a.model);
    set(&mut cfg.budget, a.budget);
    let seed = cfg.resolve_seed(a.common.seed)?;
    let p = prepare(&cfg, &a.model)?;
    let out = search_hyperparameters(
        cfg.model,
        &p.tess.adjacency,
        &p.data,
        &cfg.train,
        &SearchSpace::default(),
        cfg.budget,
        seed,
    )?;
    let inputs: Vec<_> = p.inputs.iter().map(Option::as_ref).collect();
    let provenance = cfg.provenance("search", &inputs);
    let mut config = cfg.clone();
    config.paths = Default::default();
    config.train = out.best.clone();
    let doc = SearchDoc {
        provenance,
        config,
        best_validation: out.best_validation,
        trials: &out.trials,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(tessera::Error::from)? + "\n";
    fs::write(&a.output, text).map_err(|e| Failure::Data(tessera::Error::Io { path: a.output.clone(), source: e }))?;
    Ok(format!(
        "search: {} trials, best validation {:.6} -> {}",
        out.trials.len(),
        out.best_validation,
        a.output.display()
    ))
}

fn optional_tessellation(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<Option<Tessellation>, Failure> {
    flag.or_else(|| cfg.paths.tessellation.clone())
        .map(|p| Ok(Tessellation::load(&existing(p)?)?))
        .transpose()
}

/// Config seed handling for commands that consume seeded artifacts: an
/// explicit seed wins, otherwise the upstream artifact's seed is kept.
fn inherit_seed(cfg: &mut RunConfig, flag: Option<u64>, upstream: Option<&Provenance>) -> Result<u64, Failure> {
    let seed = flag.or(cfg.seed).or(upstream.map(|p| p.seed));
    cfg.resolve_seed(seed)
}

pub fn forecast(a: ForecastArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    set(&mut cfg.horizon, a.horizon);
    let ck_path = input(a.checkpoint, cfg.paths.checkpoints.first(), "checkpoint")?;
    let series_path = input(a.series, cfg.paths.series.as_ref(), "series")?;
    let ck = Checkpoint::load(&ck_path)?;
    inherit_seed(&mut cfg, a.common.seed, Some(&ck.provenance))?;
    let tess = optional_tessellation(a.tessellation, &cfg)?;
    let raw = SeriesMatrix::load(&series_path)?;
    let series_prov = raw.provenance.clone();
    let series = align(raw, &ck.region_ids, tess.as_ref())?;
    let origin = a.origin.unwrap_or(ck.history_end);
    if origin > series.steps() {
        return Err(usage(format!("origin {origin} is past the series end {}", series.steps())));
    }
    let history: Vec<Vec<f64>> = series.values.iter().map(|r| r[..origin].to_vec()).collect();
    let preds = ck.forecaster::<f64>()?.predict_horizon(&history, cfg.horizon)?;
    let prov = cfg.provenance(
        &format!("forecast {origin}"),
        &[Some(&ck.provenance), series_prov.as_ref()],
    );
    let table = ForecastTable::new(&ck.region_ids, origin, &preds, Some(&series), prov)?;
    table.save(&a.output)?;
    Ok(format!(
        "forecast: {} regions × {} steps from t = {origin} -> {}",
        preds.len(),
        cfg.horizon,
        a.output.display()
    ))
}

pub fn evaluate(a: EvaluateArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    set(&mut cfg.seasonal_period, a.seasonal_period);
    let paths = if a.forecasts.is_empty() { cfg.paths.forecasts.clone() } else { a.forecasts };
    if paths.is_empty() {
        return Err(usage("missing --forecasts"));
    }
    let tables = paths
        .into_iter()
        .map(|p| Ok(ForecastTable::load(&existing(p)?)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    inherit_seed(&mut cfg, a.common.seed, Some(&tables[0].provenance))?;
    let series_path = input(a.series, cfg.paths.series.as_ref(), "series")?;
    let tess = optional_tessellation(a.tessellation, &cfg)?;
    let raw = SeriesMatrix::load(&series_path)?;
    let ids = tess.as_ref().map_or_else(|| raw.region_ids.clone(), |t| t.region_ids.clone());
    let series = align(raw, &ids, tess.as_ref())?;
    let upstream: Vec<_> = tables.iter().map(|t| Some(&t.provenance)).collect();
    let report = evaluate_runs(&series, &tables, cfg.seasonal_period, cfg.provenance("evaluate", &upstream))?;
    report.save(&a.output)?;
    let show = |m: &str| {
        report.city(m).and_then(|r| r.mean.zip(r.std)).map_or_else(
            || format!("{m} n/a"),
            |(mean, std)| format!("{m} {mean:.3} ± {std:.3}"),
        )
    };
    Ok(format!(
        "evaluate: {} runs, city {}, {}, {} -> {}",
        tables.len(),
        show("smape"),
        show("mase"),
        show("rmse"),
        a.output.display()
    ))
}

fn expert_ids(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let name = p.file_name().map_or_else(|| format!("e{k}"), |s| s.to_string_lossy().into_owned());
            let name = name.strip_suffix(".json").unwrap_or(&name).to_string();
            if seen.insert(name.clone()) {
                name
            } else {
                format!("{name}#{k}")
            }
        })
        .collect()
}

/// `forecasts[expert][step][region]` from every checkpoint at `origin`.
fn pool_forecasts(
    cks: &[Checkpoint],
    series: &SeriesMatrix,
    origin: usize,
    h: usize,
) -> Result<Vec<Vec<Vec<f64>>>, Failure> {
    let history: Vec<Vec<f64>> = series.values.iter().map(|r| r[..origin].to_vec()).collect();
    cks.iter()
        .map(|ck| {
            let by_region = ck.forecaster::<f64>()?.predict_horizon(&history, h)?;
            Ok((0..h).map(|k| by_region.iter().map(|r| r[k]).collect()).collect())
        })
        .collect()
}

fn truth(series: &SeriesMatrix, origin: usize, h: usize) -> Vec<Vec<f64>> {
    (origin..origin + h).map(|t| series.column(t)).collect()
}

pub fn hedge(a: HedgeArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    set(&mut cfg.horizon, a.horizon);
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.beta, a.beta);
    let paths = if a.experts.is_empty() { cfg.paths.checkpoints.clone() } else { a.experts };
    if paths.is_empty() {
        return Err(usage("missing --experts"));
    }
    let cks = paths
        .iter()
        .map(|p| Ok(Checkpoint::load(&existing(p.clone())?)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    let ids = expert_ids(&paths);
    let regions = cks[0].region_ids.clone();
    if cks.iter().any(|c| c.region_ids != regions) {
        return Err(usage("experts were trained on different regions"));
    }
    inherit_seed(&mut cfg, a.common.seed, Some(&cks[0].provenance))?;
    let origin = a.origin.unwrap_or(cks[0].history_end);
    if a.origin.is_none() && cks.iter().any(|c| c.history_end != origin) {
        return Err(usage("experts end their training history at different steps; pass --origin"));
    }
    let series_path = input(a.series, cfg.paths.series.as_ref(), "series")?;
    let tess = optional_tessellation(a.tessellation, &cfg)?;
    let raw = SeriesMatrix::load(&series_path)?;
    let series_prov = raw.provenance.clone();
    let series = align(raw, &regions, tess.as_ref())?;
    let h = cfg.horizon;
    if h == 0 || origin + h > series.steps() {
        return Err(usage(format!(
            "horizon {h} from t = {origin} needs observations up to {} (series has {})",
            origin + h,
            series.steps()
        )));
    }
    let uniform = hedge::init_weights::<f64>(None, cks.len(), 1.0)?;
    if a.tune {
        let lookback = cks.iter().map(|c| c.lookback).max().unwrap_or(0);
        let val = origin
            .checked_sub(h)
            .filter(|&v| v >= lookback)
            .ok_or_else(|| usage(format!("--tune needs {h} observed steps before t = {origin} beyond the lookback")))?;
        let pool = tessera::ExpertPool::new(ids.clone(), pool_forecasts(&cks, &series, val, h)?)?;
        let (g, b) = tune(&pool, &uniform, &truth(&series, val, h), &default_gamma_grid(), &default_beta_grid())?;
        cfg.gamma = g;
        cfg.beta = b;
    }
    let pool = tessera::ExpertPool::new(ids.clone(), pool_forecasts(&cks, &series, origin, h)?)?;
    let actual = truth(&series, origin, h);
    let state = HedgeState::new(uniform, cfg.gamma, cfg.beta, ids.clone())?;
    let combined = combine_forecasts(&pool, state, &actual)?;

    let mut upstream: Vec<Option<&Provenance>> = cks.iter().map(|c| Some(&c.provenance)).collect();
    upstream.push(series_prov.as_ref());
    let prov = cfg.provenance(&format!("hedge {origin}"), &upstream);
    let mut text = format!("# seed={} config_hash={}\n", prov.seed, prov.config_hash);
    let mut header = vec!["t".to_string(), "selected".to_string()];
    for kind in ["weight", "loss", "error"] {
        header.extend(ids.iter().map(|id| format!("{kind}_{id}")));
    }
    text += &(header.join(",") + "\n");
    for row in &combined.trace {
        let mut fields = vec![(origin + row.t).to_string(), ids[row.selected].clone()];
        for v in [&row.weights, &row.losses, &row.errors] {
            fields.extend(v.iter().map(|x| x.to_string()));
        }
        text += &(fields.join(",") + "\n");
    }
    fs::write(&a.output, text).map_err(|e| Failure::Data(tessera::Error::Io { path: a.output.clone(), source: e }))?;
    if let Some(path) = &a.combined {
        let by_region: Vec<Vec<f64>> = (0..regions.len()).map(|r| combined.series.iter().map(|s| s[r]).collect()).collect();
        ForecastTable::new(&regions, origin, &by_region, Some(&series), prov.clone())?.save(path)?;
    }
    let singles: Vec<f64> = (0..ids.len())
        .map(|e| combined.trace.iter().map(|r| r.errors[e]).sum())
        .collect();
    let best = singles.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "hedge: {} experts over {h} steps (γ = {}, β = {}), cumulative error {:.3} vs best single {:.3} -> {}",
        ids.len(),
        cfg.gamma,
        cfg.beta,
        combined.cumulative_error(),
        best,
        a.output.display()
    ))
}
