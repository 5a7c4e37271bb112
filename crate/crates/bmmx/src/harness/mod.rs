//! Monte Carlo accuracy experiments.
//!
//! An experiment fixes the per-site data, then repeats the whole
//! pipeline over many trials: draw each site's sample, push it through
//! the wire encode/decode, and combine the received payloads with both
//! estimators. Per-key squared errors and signed errors accumulate
//! across trials, yielding the empirical mean MSE, worst-key MSE, and
//! mean absolute bias that the sweep reports per estimator.
//!
//! Determinism is load-bearing: data depends only on `(seed, site)`,
//! draws only on `(seed, site, trial)`, and trials are accumulated in
//! fixed-size chunks that are reduced in index order, so results are
//! byte-identical for any worker thread count. The `BMMX_THREADS`
//! environment variable caps the worker pool. Reported wall times are
//! kept on the in-memory rows; the CSV writes a constant 0 in the
//! `wall_ms` column so the artifact itself stays reproducible.

pub mod input;
pub mod zipf;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::aggregate::{
    compute_site_summary, estimate_aggregate_mse, EstimatorMode, MseForecast, SiteSummary,
};
use crate::error::{Error, Result};
use crate::sampling::{
    inclusion_probability, minmax_point_estimate, plan_for_vector, poisson_sample, SamplingPlan,
};
use crate::vector::SiteVector;
use crate::wire::{decode_payload, encode_payload, SitePayload};

use zipf::{gen_zipf, ZipfTable};

/// Where experiment data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Zipf draws on `{1..support}` with mass proportional to
    /// `j^(-exponent)`, independent per site.
    Zipf { exponent: f64, support: u64 },
    /// A flat weight file split into equal contiguous chunks, one per
    /// site.
    File { path: PathBuf },
}

/// The estimators a run can report on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    MinMax,
    BMinMax,
    Adaptive,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::MinMax => "minmax",
            Estimator::BMinMax => "bminmax",
            Estimator::Adaptive => "adaptive",
        }
    }

    pub const ALL: [Estimator; 3] = [Estimator::MinMax, Estimator::BMinMax, Estimator::Adaptive];
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Estimator::MinMax),
            "bminmax" => Ok(Estimator::BMinMax),
            "adaptive" => Ok(Estimator::Adaptive),
            other => Err(Error::InvalidConfig(format!(
                "unknown estimator {other:?}, expected minmax, bminmax, or adaptive"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Number of sites `k`.
    pub sites: usize,
    /// Per-site vector length `d`. Ignored for file sources, where the
    /// chunk size takes over.
    pub dim: usize,
    /// Oversampling ratio `r = d / n`; each site keeps `d / r` entries
    /// in expectation.
    pub ratio: f64,
    /// Monte Carlo trials `T`.
    pub trials: usize,
    /// Fraction of the key universe shared by every site; remaining
    /// keys are private per site.
    pub key_overlap: f64,
    pub source: DataSource,
    pub estimators: Vec<Estimator>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            sites: 4,
            dim: 10_000,
            ratio: 4.0,
            trials: 1000,
            key_overlap: 1.0,
            source: DataSource::Zipf {
                exponent: 1.0,
                support: 1_000_000,
            },
            estimators: Estimator::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::InvalidConfig("site count must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig(
                "vector dimension must be positive".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trial count must be positive".into()));
        }
        if !self.ratio.is_finite() || self.ratio <= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "oversampling ratio must exceed 1, got {}",
                self.ratio
            )));
        }
        if !self.key_overlap.is_finite() || !(0.0..=1.0).contains(&self.key_overlap) {
            return Err(Error::InvalidConfig(format!(
                "key overlap must lie in [0, 1], got {}",
                self.key_overlap
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one estimator must be requested".into(),
            ));
        }
        if let DataSource::Zipf { exponent, support } = self.source {
            if !exponent.is_finite() || exponent <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "Zipf exponent must be positive and finite, got {exponent}"
                )));
            }
            if support == 0 {
                return Err(Error::InvalidConfig(
                    "Zipf support must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone)]
pub enum SweepAxis {
    Sites(Vec<usize>),
    Ratio(Vec<f64>),
}

/// One line of experiment output.
#[derive(Debug, Clone)]
pub struct ResultRow {
    /// The swept parameter value; the site count for single runs.
    pub axis: f64,
    pub estimator: Estimator,
    /// Mean over the key universe of per-key empirical MSE.
    pub mean_mse: f64,
    /// Worst per-key empirical MSE.
    pub max_mse: f64,
    /// Mean over keys of the absolute empirical bias.
    pub mean_abs_bias: f64,
    /// Fraction of trials aggregated with the biased estimator.
    pub adaptive_bminmax_fraction: f64,
    /// Measured wall time of the point, in milliseconds. Written as 0
    /// in CSV output to keep artifacts byte-stable.
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str =
    "axis,estimator,mean_mse,max_mse,mean_abs_bias,adaptive_bminmax_fraction,wall_ms";

/// Renders rows to the experiment CSV schema.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},0\n",
            r.axis,
            r.estimator.name(),
            r.mean_mse,
            r.max_mse,
            r.mean_abs_bias,
            r.adaptive_bminmax_fraction,
        ));
    }
    out
}

/// Renders rows as gnuplot blocks, one block per estimator, separated
/// by blank lines for use with `index`.
pub fn render_dat(rows: &[ResultRow]) -> String {
    let mut out = String::from("# accuracy sweep\n# columns: axis mean_mse max_mse mean_abs_bias\n");
    let mut first = true;
    for estimator in Estimator::ALL {
        let block: Vec<&ResultRow> = rows.iter().filter(|r| r.estimator == estimator).collect();
        if block.is_empty() {
            continue;
        }
        if !first {
            out.push('\n');
        }
        first = false;
        out.push_str(&format!("# {}\n", estimator.name()));
        for r in block {
            out.push_str(&format!(
                "{} {} {} {}\n",
                r.axis, r.mean_mse, r.max_mse, r.mean_abs_bias
            ));
        }
    }
    out
}

/// Runs one experiment point and reports one row per requested
/// estimator, with the site count on the axis column.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let source = LoadedSource::load(&cfg.source)?;
    let pool = build_pool()?;
    pool.install(|| run_point(cfg, &source, cfg.sites as f64))
}

/// Runs an experiment per sweep point, tagging rows with the swept
/// value.
pub fn sweep(cfg: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    match axis {
        SweepAxis::Sites(points) if points.is_empty() => {
            return Err(Error::InvalidConfig("empty sweep".into()))
        }
        SweepAxis::Ratio(points) if points.is_empty() => {
            return Err(Error::InvalidConfig("empty sweep".into()))
        }
        _ => {}
    }
    let source = LoadedSource::load(&cfg.source)?;
    let pool = build_pool()?;
    pool.install(|| {
        let mut rows = Vec::new();
        match axis {
            SweepAxis::Sites(points) => {
                for &k in points {
                    let mut point_cfg = cfg.clone();
                    point_cfg.sites = k;
                    point_cfg.validate()?;
                    rows.extend(run_point(&point_cfg, &source, k as f64)?);
                }
            }
            SweepAxis::Ratio(points) => {
                for &r in points {
                    let mut point_cfg = cfg.clone();
                    point_cfg.ratio = r;
                    point_cfg.validate()?;
                    rows.extend(run_point(&point_cfg, &source, r)?);
                }
            }
        }
        Ok(rows)
    })
}

fn parse_thread_cap(raw: Option<&str>) -> Result<Option<usize>> {
    match raw {
        None => Ok(None),
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::InvalidConfig(format!(
                "BMMX_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}

fn build_pool() -> Result<rayon::ThreadPool> {
    let cap = parse_thread_cap(std::env::var("BMMX_THREADS").ok().as_deref())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cap {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))
}

enum LoadedSource {
    Zipf(ZipfTable),
    File(Vec<f64>),
}

impl LoadedSource {
    fn load(source: &DataSource) -> Result<Self> {
        match source {
            DataSource::Zipf { exponent, support } => {
                Ok(LoadedSource::Zipf(ZipfTable::new(*exponent, *support)?))
            }
            DataSource::File { path } => Ok(LoadedSource::File(input::load_vector(path)?)),
        }
    }
}

/// Key layout of one experiment point: the first `shared` keys of the
/// universe appear in every site, and each site gets `private`
/// additional keys of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    shared: usize,
    private: usize,
    sites: usize,
}

impl Layout {
    fn new(dim: usize, overlap: f64, sites: usize) -> Layout {
        let shared = (overlap * dim as f64).round() as usize;
        let shared = shared.min(dim);
        Layout {
            shared,
            private: dim - shared,
            sites,
        }
    }

    fn universe(&self) -> usize {
        self.shared + self.sites * self.private
    }

    fn key(&self, site: usize, index: usize) -> u64 {
        if index < self.shared {
            index as u64
        } else {
            (self.shared + site * self.private + (index - self.shared)) as u64
        }
    }
}

struct SiteData {
    vector: SiteVector,
    plan: SamplingPlan,
    summary: SiteSummary,
}

struct PointData {
    universe: usize,
    truth: Vec<f64>,
    sites: Vec<SiteData>,
    forecast: MseForecast,
    adaptive_mode: EstimatorMode,
}

fn build_point(cfg: &ExperimentConfig, source: &LoadedSource) -> Result<PointData> {
    let site_values: Vec<Vec<f64>> = match source {
        LoadedSource::Zipf(table) => (0..cfg.sites)
            .map(|site| gen_zipf(table, cfg.seed, site as u32, cfg.dim))
            .collect(),
        LoadedSource::File(values) => input::split_sites(values, cfg.sites)?
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect(),
    };
    let dim = site_values[0].len();
    let layout = Layout::new(dim, cfg.key_overlap, cfg.sites);
    let universe = layout.universe();

    let mut truth = vec![0.0; universe];
    let mut sites = Vec::with_capacity(cfg.sites);
    let target = dim as f64 / cfg.ratio;
    for (site, values) in site_values.iter().enumerate() {
        let entries: Vec<(u64, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (layout.key(site, i), v))
            .collect();
        for &(key, v) in &entries {
            truth[key as usize] += v;
        }
        let vector = SiteVector::sparse(site as u32, universe as u64, entries)?;
        let plan = plan_for_vector(&vector, target)?;
        let summary = compute_site_summary(&vector, &plan)?;
        sites.push(SiteData {
            vector,
            plan,
            summary,
        });
    }

    let summaries: Vec<SiteSummary> = sites.iter().map(|s| s.summary).collect();
    let forecast = estimate_aggregate_mse(&summaries)?;
    Ok(PointData {
        universe,
        truth,
        sites,
        forecast,
        adaptive_mode: forecast.preferred_mode(),
    })
}

/// Trials per parallel work unit. Chunks are reduced in index order,
/// so the chunk size only affects scheduling, never results.
const TRIAL_CHUNK: usize = 16;

struct Accum {
    sq_bm: Vec<f64>,
    er_bm: Vec<f64>,
    sq_mm: Vec<f64>,
    er_mm: Vec<f64>,
}

impl Accum {
    fn zero(universe: usize) -> Accum {
        Accum {
            sq_bm: vec![0.0; universe],
            er_bm: vec![0.0; universe],
            sq_mm: vec![0.0; universe],
            er_mm: vec![0.0; universe],
        }
    }

    fn add(&mut self, other: &Accum) {
        for (a, b) in self.sq_bm.iter_mut().zip(&other.sq_bm) {
            *a += b;
        }
        for (a, b) in self.er_bm.iter_mut().zip(&other.er_bm) {
            *a += b;
        }
        for (a, b) in self.sq_mm.iter_mut().zip(&other.sq_mm) {
            *a += b;
        }
        for (a, b) in self.er_mm.iter_mut().zip(&other.er_mm) {
            *a += b;
        }
    }
}

fn run_chunk(cfg: &ExperimentConfig, data: &PointData, trials: std::ops::Range<usize>) -> Result<Accum> {
    let mut accum = Accum::zero(data.universe);
    let mut est_bm = vec![0.0; data.universe];
    let mut est_mm = vec![0.0; data.universe];
    for trial in trials {
        let trial = trial as u64;
        est_bm.fill(0.0);
        est_mm.fill(0.0);
        for site in &data.sites {
            run_site_trial(cfg.seed, trial, site, data, &mut est_bm, &mut est_mm)
                .map_err(|e| Error::Trial {
                    trial,
                    source: Box::new(e),
                })?;
        }
        for g in 0..data.universe {
            let db = est_bm[g] - data.truth[g];
            accum.sq_bm[g] += db * db;
            accum.er_bm[g] += db;
            let dm = est_mm[g] - data.truth[g];
            accum.sq_mm[g] += dm * dm;
            accum.er_mm[g] += dm;
        }
    }
    Ok(accum)
}

fn run_site_trial(
    seed: u64,
    trial: u64,
    site: &SiteData,
    data: &PointData,
    est_bm: &mut [f64],
    est_mm: &mut [f64],
) -> Result<()> {
    let draw = poisson_sample(&site.vector, &site.plan, seed, trial)?;
    let payload = SitePayload::new(
        draw.site_id,
        data.universe as u64,
        site.plan.threshold(),
        site.summary,
        draw.included,
    )?;
    let received = decode_payload(&encode_payload(&payload)?)?;
    let threshold = received.threshold();
    for &(key, v) in received.entries() {
        let g = key as usize;
        est_bm[g] += v;
        let p = inclusion_probability(v, threshold);
        est_mm[g] += minmax_point_estimate(v, p)?;
    }
    Ok(())
}

fn run_point(cfg: &ExperimentConfig, source: &LoadedSource, axis: f64) -> Result<Vec<ResultRow>> {
    let started = Instant::now();
    let data = build_point(cfg, source)?;
    let trials = cfg.trials;
    let chunk_count = trials.div_ceil(TRIAL_CHUNK);
    let partials: Vec<Result<Accum>> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let lo = c * TRIAL_CHUNK;
            let hi = (lo + TRIAL_CHUNK).min(trials);
            run_chunk(cfg, &data, lo..hi)
        })
        .collect();
    let mut total = Accum::zero(data.universe);
    for partial in partials {
        total.add(&partial?);
    }
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let t = trials as f64;
    let stats = |sq: &[f64], er: &[f64]| -> (f64, f64, f64) {
        let universe = sq.len() as f64;
        let mut mean = 0.0;
        let mut max = 0.0f64;
        let mut bias = 0.0;
        for (&s, &e) in sq.iter().zip(er) {
            let key_mse = s / t;
            mean += key_mse;
            max = max.max(key_mse);
            bias += (e / t).abs();
        }
        (mean / universe, max, bias / universe)
    };
    let bm = stats(&total.sq_bm, &total.er_bm);
    let mm = stats(&total.sq_mm, &total.er_mm);

    let mut rows = Vec::with_capacity(cfg.estimators.len());
    for &estimator in &cfg.estimators {
        let (chosen, fraction) = match estimator {
            Estimator::MinMax => (mm, 0.0),
            Estimator::BMinMax => (bm, 1.0),
            Estimator::Adaptive => match data.adaptive_mode {
                EstimatorMode::BMinMax => (bm, 1.0),
                EstimatorMode::MinMax => (mm, 0.0),
            },
        };
        rows.push(ResultRow {
            axis,
            estimator,
            mean_mse: chosen.0,
            max_mse: chosen.1,
            mean_abs_bias: chosen.2,
            adaptive_bminmax_fraction: fraction,
            wall_ms,
        });
    }
    Ok(rows)
}

/// The forecast and chosen mode for a configuration's fixed data,
/// without running trials.
pub fn point_forecast(cfg: &ExperimentConfig) -> Result<(MseForecast, EstimatorMode)> {
    cfg.validate()?;
    let source = LoadedSource::load(&cfg.source)?;
    let data = build_point(cfg, &source)?;
    Ok((data.forecast, data.adaptive_mode))
}
