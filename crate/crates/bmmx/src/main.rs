//! Command-line front end: generate data, sample a site, combine
//! payloads, and run Monte Carlo experiments.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including
//! argument parsing), 3 for data errors such as unreadable inputs or
//! corrupt payloads.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bmmx::harness::input::{load_vector, save_raw, save_text};
use bmmx::harness::zipf::{gen_zipf, ZipfTable};
use bmmx::harness::{
    render_csv, render_dat, run_experiment, sweep, DataSource, Estimator, ExperimentConfig,
    ResultRow, SweepAxis,
};
use bmmx::{
    adaptive_aggregate, aggregate_fixed, compute_site_summary, effective_compression,
    encoded_len, estimate_aggregate_mse, plan_for_vector, poisson_sample, read_payload_file,
    write_payload_file, Error, EstimatorMode, Result, SitePayload, SiteVector,
};

#[derive(Parser)]
#[command(
    name = "bmmx",
    version,
    about = "Threshold Poisson sampling with biased and unbiased estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Zipf weight vector file.
    Gen(GenArgs),
    /// Sample one site's vector into a payload file.
    Sample(SampleArgs),
    /// Combine payload files into per-key estimates.
    Aggregate(AggregateArgs),
    /// Run a Monte Carlo accuracy experiment, optionally sweeping one
    /// parameter.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output file; .txt and .csv write text, anything else a raw
    /// little-endian f64 dump.
    #[arg(long)]
    out: PathBuf,
    /// Number of values to draw.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.0)]
    exponent: f64,
    /// Zipf support size.
    #[arg(long, default_value_t = 1_000_000)]
    support: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Site lane the draws are keyed by.
    #[arg(long, default_value_t = 0)]
    site: u32,
}

#[derive(Args)]
struct SampleArgs {
    /// Weight vector to sample (.txt/.csv text, otherwise raw f64).
    #[arg(long)]
    input: PathBuf,
    /// Payload output path.
    #[arg(long)]
    out: PathBuf,
    /// Oversampling ratio; the expected sample size is d / ratio.
    /// 1 keeps everything (exact mode), values below 1 are rejected.
    #[arg(long, default_value_t = 4.0)]
    ratio: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Trial index of the draw, for replaying a specific realization.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Site id stamped into the payload and the draw stream.
    #[arg(long, default_value_t = 0)]
    site: u32,
    /// Report the unbiased estimator's forecast instead of the biased
    /// one. The payload bytes are identical either way.
    #[arg(long)]
    unbiased: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// Payload files to combine. Missing files are skipped with a
    /// warning; corrupt ones abort.
    #[arg(required = true)]
    payloads: Vec<PathBuf>,
    /// Aggregation mode: adaptive, minmax, or bminmax.
    #[arg(long, default_value = "adaptive")]
    mode: String,
    /// Write the key,estimate CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 4)]
    sites: usize,
    /// Per-site vector length; ignored when --source is a file.
    #[arg(long, default_value_t = 10_000)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    ratio: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of the key universe shared by all sites.
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    /// "zipf" or a weight file path.
    #[arg(long, default_value = "zipf")]
    source: String,
    /// Zipf exponent (zipf source only).
    #[arg(long, default_value_t = 1.0)]
    exponent: f64,
    /// Zipf support size (zipf source only).
    #[arg(long, default_value_t = 1_000_000)]
    support: u64,
    /// Comma-separated subset of minmax,bminmax,adaptive.
    #[arg(long, default_value = "minmax,bminmax,adaptive")]
    estimators: String,
    /// Sweep axis: sites or ratio. Requires --points.
    #[arg(long)]
    sweep: Option<String>,
    /// Sweep points: an inclusive range "1..50" or a comma list
    /// "2,4,6,8,10".
    #[arg(long)]
    points: Option<String>,
    /// Write the results CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write a gnuplot-ready .dat file.
    #[arg(long)]
    dat: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Sample(args) => run_sample(args),
        Command::Aggregate(args) => run_aggregate(args),
        Command::Experiment(args) => run_experiment_cmd(args),
    }
}

fn is_text_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("txt") | Some("csv")
    )
}

fn run_gen(args: GenArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::InvalidConfig("count must be positive".into()));
    }
    let table = ZipfTable::new(args.exponent, args.support)?;
    let values = gen_zipf(&table, args.seed, args.site, args.count);
    if is_text_path(&args.out) {
        save_text(&args.out, &values)?;
    } else {
        save_raw(&args.out, &values)?;
    }
    eprintln!(
        "wrote {} Zipf(s={}, N={}) draws for site {} to {}",
        args.count,
        args.exponent,
        args.support,
        args.site,
        args.out.display()
    );
    Ok(())
}

fn run_sample(args: SampleArgs) -> Result<()> {
    if !args.ratio.is_finite() || args.ratio < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "oversampling ratio must be at least 1, got {}",
            args.ratio
        )));
    }
    let values = load_vector(&args.input)?;
    let vector = SiteVector::dense(args.site, &values)?;
    let target = vector.len() as f64 / args.ratio;
    let plan = plan_for_vector(&vector, target)?;
    let summary = compute_site_summary(&vector, &plan)?;
    let draw = poisson_sample(&vector, &plan, args.seed, args.trial)?;
    let kept = draw.included.len();
    let payload = SitePayload::from_draw(&draw, &plan, summary, vector.dim())?;
    write_payload_file(&args.out, &payload)?;

    let bytes = encoded_len(kept);
    eprintln!(
        "site {}: {} values, threshold {} (exact mode: {}), kept {} (expected {:.1}), clamped {}",
        args.site,
        vector.len(),
        plan.threshold(),
        plan.exact_mode(),
        kept,
        target,
        plan.clamped()
    );
    eprintln!(
        "payload: {} bytes to {}, effective compression {:.3}x",
        bytes,
        args.out.display(),
        effective_compression(vector.dim(), kept)
    );
    let forecast = estimate_aggregate_mse(&[summary])?;
    if args.unbiased {
        eprintln!(
            "unbiased estimator: forecast mean MSE {} per key",
            forecast.unbiased
        );
    } else {
        eprintln!(
            "biased estimator: forecast mean MSE {} per key (mean |bias| {})",
            forecast.biased, summary.mean_abs_bias
        );
    }
    Ok(())
}

fn run_aggregate(args: AggregateArgs) -> Result<()> {
    let mut payloads = Vec::new();
    for path in &args.payloads {
        match read_payload_file(path) {
            Ok(p) => payloads.push(p),
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
                eprintln!("warning: skipping missing payload {}", path.display());
            }
            Err(e) => return Err(e),
        }
    }
    if payloads.is_empty() {
        return Err(Error::Data("no payload files could be loaded".into()));
    }

    let values = match args.mode.as_str() {
        "adaptive" => {
            let estimate = adaptive_aggregate(&payloads)?;
            eprintln!(
                "forecast MSE per key: biased {}, unbiased {}; aggregating with {}",
                estimate.forecast.biased,
                estimate.forecast.unbiased,
                estimate.mode.name()
            );
            estimate.values
        }
        "minmax" => aggregate_fixed(&payloads, EstimatorMode::MinMax)?,
        "bminmax" => aggregate_fixed(&payloads, EstimatorMode::BMinMax)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown mode {other:?}, expected adaptive, minmax, or bminmax"
            )))
        }
    };
    eprintln!(
        "aggregated {} site payloads into {} keys",
        payloads.len(),
        values.len()
    );

    let mut out = String::from("key,estimate\n");
    for (key, value) in &values {
        out.push_str(&format!("{key},{value}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn parse_usize_points(spec: &str) -> Result<Vec<usize>> {
    let bad = |s: &str| Error::InvalidConfig(format!("cannot parse sweep points {s:?}"));
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad(spec))?;
        let hi: usize = hi.trim().parse().map_err(|_| bad(spec))?;
        if lo > hi {
            return Err(bad(spec));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad(spec)))
        .collect()
}

fn parse_f64_points(spec: &str) -> Result<Vec<f64>> {
    if spec.contains("..") {
        return Ok(parse_usize_points(spec)?
            .into_iter()
            .map(|v| v as f64)
            .collect());
    }
    spec.split(',')
        .map(|t| {
            t.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("cannot parse sweep points {spec:?}"))
            })
        })
        .collect()
}

fn parse_estimators(spec: &str) -> Result<Vec<Estimator>> {
    let mut estimators = Vec::new();
    for token in spec.split(',') {
        let e: Estimator = token.trim().parse()?;
        if !estimators.contains(&e) {
            estimators.push(e);
        }
    }
    Ok(estimators)
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<()> {
    let source = if args.source == "zipf" {
        DataSource::Zipf {
            exponent: args.exponent,
            support: args.support,
        }
    } else {
        DataSource::File {
            path: PathBuf::from(&args.source),
        }
    };
    let cfg = ExperimentConfig {
        seed: args.seed,
        sites: args.sites,
        dim: args.dim,
        ratio: args.ratio,
        trials: args.trials,
        key_overlap: args.overlap,
        source,
        estimators: parse_estimators(&args.estimators)?,
    };

    let rows = match (&args.sweep, &args.points) {
        (None, None) => run_experiment(&cfg)?,
        (Some(axis), Some(points)) => {
            let axis = match axis.as_str() {
                "sites" => SweepAxis::Sites(parse_usize_points(points)?),
                "ratio" => SweepAxis::Ratio(parse_f64_points(points)?),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown sweep axis {other:?}, expected sites or ratio"
                    )))
                }
            };
            sweep(&cfg, &axis)?
        }
        _ => {
            return Err(Error::InvalidConfig(
                "--sweep and --points must be given together".into(),
            ))
        }
    };

    report_rows(&rows);
    let csv = render_csv(&rows);
    match &args.csv {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.dat {
        std::fs::write(path, render_dat(&rows))?;
    }
    Ok(())
}

fn report_rows(rows: &[ResultRow]) {
    for r in rows {
        eprintln!(
            "axis {:>6} {:<8} mean_mse {:.6e} max_mse {:.6e} mean_|bias| {:.6e} bm_fraction {} wall {:.1} ms",
            r.axis,
            r.estimator.name(),
            r.mean_mse,
            r.max_mse,
            r.mean_abs_bias,
            r.adaptive_bminmax_fraction,
            r.wall_ms
        );
    }
}
