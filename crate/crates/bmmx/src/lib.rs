//! Threshold Poisson sampling for distributed vector aggregation.
//!
//! Sites hold large keyed vectors and can only afford to transmit a
//! fraction of their entries. Each site samples entries with
//! probability proportional to `x^2 / (x^2 + C)`, with the threshold
//! `C` solved so the expected sample size meets a budget, then ships
//! the kept raw values plus a tiny accuracy summary. The receiver
//! either rescales values by their inclusion probabilities (unbiased)
//! or sums them as-is (biased but lower error per site), and the
//! adaptive aggregator picks between the two by forecasting both
//! aggregate MSEs from the shipped summaries.
//!
//! Modules:
//!
//! * [`sampling`]: threshold solve, Poisson draws, per-element
//!   estimator analytics;
//! * [`aggregate`]: site summaries, MSE forecasts, fixed and adaptive
//!   aggregation;
//! * [`wire`]: the fixed-width payload format;
//! * [`harness`]: synthetic data, Monte Carlo experiments, and sweep
//!   output for plots;
//! * [`rng`]: counter-based deterministic randomness.

pub mod aggregate;
pub mod error;
pub mod harness;
pub mod rng;
pub mod sampling;
pub mod vector;
pub mod wire;

pub use aggregate::{
    adaptive_aggregate, aggregate_fixed, compute_site_summary, estimate_aggregate_mse,
    predicted_crossover, AggregateEstimate, EstimatorMode, MseForecast, SiteSummary,
};
pub use error::{Error, Result};
pub use harness::input::{load_vector, save_raw, save_text, split_sites};
pub use harness::zipf::{gen_zipf, ZipfTable};
pub use harness::{
    point_forecast, render_csv, render_dat, run_experiment, sweep, DataSource, Estimator,
    ExperimentConfig, ResultRow, SweepAxis, CSV_HEADER,
};
pub use sampling::{
    analytic_bminmax_moments, analytic_minmax_mse, assign_probabilities, inclusion_probability,
    minmax_point_estimate, mse_gap, plan_for_vector, poisson_sample, solve_threshold,
    BiasedMoments, SampleDraw, SamplingPlan,
};
pub use vector::SiteVector;
pub use wire::{
    decode_payload, effective_compression, encode_payload, encoded_len, read_payload_file,
    write_payload_file, SitePayload,
};
