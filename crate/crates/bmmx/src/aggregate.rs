//! Multi-site aggregation and the adaptive estimator switch.
//!
//! Each site ships a three-number accuracy summary next to its sample.
//! Summed across sites, the summaries forecast the aggregate MSE of
//! both estimators before any values are combined: biases add up
//! coherently in the worst case, so the biased forecast grows with the
//! square of the summed per-site bias, while the unbiased forecast
//! grows linearly. The adaptive aggregator computes both forecasts and
//! decodes with whichever estimator promises less error.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sampling::{
    analytic_bminmax_moments, analytic_minmax_mse, inclusion_probability, minmax_point_estimate,
    SamplingPlan,
};
use crate::vector::SiteVector;
use crate::wire::SitePayload;

/// Which estimator reads transmitted values back out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Unbiased reconstruction `x / p`.
    MinMax,
    /// Raw biased values.
    BMinMax,
}

impl EstimatorMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::MinMax => "minmax",
            EstimatorMode::BMinMax => "bminmax",
        }
    }
}

/// Per-site accuracy summary, averaged over the site's key universe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteSummary {
    /// Mean biased-estimator variance, `(1/d) sum (p - p^2) x^2`.
    pub mean_variance: f64,
    /// Mean absolute biased-estimator bias, `(1/d) sum |x (p - 1)|`.
    pub mean_abs_bias: f64,
    /// Mean unbiased-estimator MSE, `(1/d) sum x^2 (1 - p) / p`.
    pub mean_unbiased_mse: f64,
}

/// Computes the summary a site would ship for one plan.
pub fn compute_site_summary(vector: &SiteVector, plan: &SamplingPlan) -> Result<SiteSummary> {
    if vector.len() != plan.probs().len() {
        return Err(Error::PlanMismatch(format!(
            "plan covers {} entries, vector has {}",
            plan.probs().len(),
            vector.len()
        )));
    }
    let mut variance = 0.0;
    let mut abs_bias = 0.0;
    let mut unbiased_mse = 0.0;
    for (&(key, x), &(plan_key, p)) in vector.entries().iter().zip(plan.probs()) {
        if key != plan_key {
            return Err(Error::PlanMismatch(format!(
                "plan key {plan_key} does not match vector key {key}"
            )));
        }
        if x == 0.0 {
            continue;
        }
        let moments = analytic_bminmax_moments(x, p)?;
        variance += moments.variance;
        abs_bias += moments.bias.abs();
        unbiased_mse += analytic_minmax_mse(x, p)?;
    }
    let d = vector.dim() as f64;
    Ok(SiteSummary {
        mean_variance: variance / d,
        mean_abs_bias: abs_bias / d,
        mean_unbiased_mse: unbiased_mse / d,
    })
}

/// Forecast aggregate MSE per element for both estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseForecast {
    pub biased: f64,
    pub unbiased: f64,
}

impl MseForecast {
    /// The estimator promising less error; ties go to the biased one,
    /// which is also the cheaper path on the wire.
    pub fn preferred_mode(&self) -> EstimatorMode {
        if self.biased <= self.unbiased {
            EstimatorMode::BMinMax
        } else {
            EstimatorMode::MinMax
        }
    }
}

/// Merges site summaries into both MSE forecasts.
///
/// The biased forecast is `sum variance + (sum abs bias)^2`: per-site
/// variances add, and per-site biases are assumed to stack with a
/// common sign, which upper-bounds the realized squared bias. The
/// unbiased forecast is simply the summed unbiased MSE.
pub fn estimate_aggregate_mse(summaries: &[SiteSummary]) -> Result<MseForecast> {
    if summaries.is_empty() {
        return Err(Error::NoSummaries);
    }
    let mut variance = 0.0;
    let mut abs_bias = 0.0;
    let mut unbiased = 0.0;
    for s in summaries {
        variance += s.mean_variance;
        abs_bias += s.mean_abs_bias;
        unbiased += s.mean_unbiased_mse;
    }
    Ok(MseForecast {
        biased: variance + abs_bias * abs_bias,
        unbiased,
    })
}

/// Site count beyond which the unbiased estimator wins, assuming every
/// site ships this same summary.
///
/// With `k` identical sites the biased forecast is
/// `k v + (k b)^2` against the unbiased `k u`, so the curves cross at
/// `k = (u - v) / b^2`. Returns `None` when the summary has zero bias
/// and the biased side never loses.
pub fn predicted_crossover(summary: &SiteSummary) -> Option<f64> {
    if summary.mean_abs_bias == 0.0 {
        return None;
    }
    let k = (summary.mean_unbiased_mse - summary.mean_variance)
        / (summary.mean_abs_bias * summary.mean_abs_bias);
    Some(k.max(0.0))
}

/// An aggregation result: the chosen mode, the forecasts that chose
/// it, and the per-key combined estimates.
#[derive(Debug, Clone)]
pub struct AggregateEstimate {
    pub mode: EstimatorMode,
    pub forecast: MseForecast,
    pub values: BTreeMap<u64, f64>,
}

/// Sums per-site estimates over the union of keys with a fixed mode.
pub fn aggregate_fixed(
    payloads: &[SitePayload],
    mode: EstimatorMode,
) -> Result<BTreeMap<u64, f64>> {
    if payloads.is_empty() {
        return Err(Error::NoSummaries);
    }
    let mut values: BTreeMap<u64, f64> = BTreeMap::new();
    for payload in payloads {
        for &(key, v) in payload.entries() {
            let contribution = match mode {
                EstimatorMode::BMinMax => v,
                EstimatorMode::MinMax => {
                    let p = inclusion_probability(v, payload.threshold());
                    minmax_point_estimate(v, p)?
                }
            };
            *values.entry(key).or_insert(0.0) += contribution;
        }
    }
    Ok(values)
}

/// Forecasts both estimators from the shipped summaries and aggregates
/// with the better one.
pub fn adaptive_aggregate(payloads: &[SitePayload]) -> Result<AggregateEstimate> {
    let summaries: Vec<SiteSummary> = payloads.iter().map(|p| *p.summary()).collect();
    let forecast = estimate_aggregate_mse(&summaries)?;
    let mode = forecast.preferred_mode();
    let values = aggregate_fixed(payloads, mode)?;
    Ok(AggregateEstimate {
        mode,
        forecast,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::plan_for_vector;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    fn reference_summary() -> SiteSummary {
        let vector = SiteVector::dense(0, &[2.0]).unwrap();
        let plan = plan_for_vector(&vector, 2.0 / 3.0).unwrap();
        compute_site_summary(&vector, &plan).unwrap()
    }

    #[test]
    fn single_element_summary_matches_hand_computation() {
        let s = reference_summary();
        assert!(close(s.mean_variance, 8.0 / 9.0, 1e-8), "{s:?}");
        assert!(close(s.mean_abs_bias, 2.0 / 3.0, 1e-8), "{s:?}");
        assert!(close(s.mean_unbiased_mse, 2.0, 1e-8), "{s:?}");
    }

    #[test]
    fn summary_averages_over_the_key_universe() {
        let vector = SiteVector::sparse(0, 4, vec![(1, 2.0)]).unwrap();
        let plan = plan_for_vector(&vector, 2.0 / 3.0).unwrap();
        let s = compute_site_summary(&vector, &plan).unwrap();
        assert!(close(s.mean_variance, 2.0 / 9.0, 1e-8), "{s:?}");
        assert!(close(s.mean_abs_bias, 1.0 / 6.0, 1e-8), "{s:?}");
        assert!(close(s.mean_unbiased_mse, 0.5, 1e-8), "{s:?}");
    }

    #[test]
    fn zeros_do_not_contribute_to_the_summary() {
        let with_zeros = SiteVector::dense(0, &[2.0, 0.0, 0.0, 0.0]).unwrap();
        let plan = plan_for_vector(&with_zeros, 2.0 / 3.0).unwrap();
        let s = compute_site_summary(&with_zeros, &plan).unwrap();
        let reference = reference_summary();
        assert!(close(s.mean_variance, reference.mean_variance / 4.0, 1e-9));
        assert!(close(s.mean_abs_bias, reference.mean_abs_bias / 4.0, 1e-9));
    }

    #[test]
    fn one_site_forecast_prefers_the_biased_estimator() {
        let forecast = estimate_aggregate_mse(&[reference_summary()]).unwrap();
        assert!(close(forecast.biased, 4.0 / 3.0, 1e-8), "{forecast:?}");
        assert!(close(forecast.unbiased, 2.0, 1e-8), "{forecast:?}");
        assert_eq!(forecast.preferred_mode(), EstimatorMode::BMinMax);
    }

    #[test]
    fn three_identical_sites_flip_the_preference() {
        let s = reference_summary();
        let forecast = estimate_aggregate_mse(&[s, s, s]).unwrap();
        assert!(close(forecast.biased, 20.0 / 3.0, 1e-8), "{forecast:?}");
        assert!(close(forecast.unbiased, 6.0, 1e-8), "{forecast:?}");
        assert_eq!(forecast.preferred_mode(), EstimatorMode::MinMax);
    }

    #[test]
    fn crossover_site_count_matches_the_forecast_flip() {
        let s = reference_summary();
        let k = predicted_crossover(&s).unwrap();
        assert!(close(k, 2.5, 1e-8), "crossover = {k}");
        // Two sites still favour the biased side, three do not.
        let two = estimate_aggregate_mse(&[s, s]).unwrap();
        assert_eq!(two.preferred_mode(), EstimatorMode::BMinMax);
    }

    #[test]
    fn bias_free_summaries_never_cross() {
        let vector = SiteVector::dense(0, &[5.0, 0.0, 5.0]).unwrap();
        let plan = plan_for_vector(&vector, 2.0).unwrap();
        let s = compute_site_summary(&vector, &plan).unwrap();
        assert_eq!(s.mean_abs_bias, 0.0);
        assert_eq!(predicted_crossover(&s), None);
        let forecast = estimate_aggregate_mse(&[s, s]).unwrap();
        assert_eq!(forecast.preferred_mode(), EstimatorMode::BMinMax);
    }

    #[test]
    fn empty_summary_list_is_rejected() {
        assert!(matches!(
            estimate_aggregate_mse(&[]),
            Err(Error::NoSummaries)
        ));
        assert!(matches!(
            aggregate_fixed(&[], EstimatorMode::BMinMax),
            Err(Error::NoSummaries)
        ));
    }

    fn payload(site: u32, threshold: f64, entries: Vec<(u64, f64)>) -> SitePayload {
        let summary = SiteSummary {
            mean_variance: 0.1,
            mean_abs_bias: 0.2,
            mean_unbiased_mse: 0.3,
        };
        SitePayload::new(site, 10, threshold, summary, entries).unwrap()
    }

    #[test]
    fn biased_aggregation_sums_raw_values_over_the_key_union() {
        let a = payload(0, 2.0, vec![(1, 2.0), (3, -1.0)]);
        let b = payload(1, 2.0, vec![(3, 4.0), (7, 0.5)]);
        let got = aggregate_fixed(&[a, b], EstimatorMode::BMinMax).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got[&1], 2.0);
        assert_eq!(got[&3], 3.0);
        assert_eq!(got[&7], 0.5);
    }

    #[test]
    fn unbiased_aggregation_reconstructs_from_the_carried_threshold() {
        let a = payload(0, 2.0, vec![(1, 2.0)]);
        let got = aggregate_fixed(&[a], EstimatorMode::MinMax).unwrap();
        assert!(close(got[&1], 3.0, 1e-15), "got {}", got[&1]);
        // An exact-mode payload reconstructs values unchanged.
        let b = payload(0, 0.0, vec![(2, -7.5)]);
        let got = aggregate_fixed(&[b], EstimatorMode::MinMax).unwrap();
        assert_eq!(got[&2], -7.5);
    }

    #[test]
    fn adaptive_aggregation_follows_the_forecast() {
        let vector = SiteVector::dense(0, &[2.0]).unwrap();
        let plan = plan_for_vector(&vector, 2.0 / 3.0).unwrap();
        let summary = compute_site_summary(&vector, &plan).unwrap();
        let one = SitePayload::new(0, 1, plan.threshold(), summary, vec![(0, 2.0)]).unwrap();
        let single = adaptive_aggregate(&[one.clone()]).unwrap();
        assert_eq!(single.mode, EstimatorMode::BMinMax);
        assert_eq!(single.values[&0], 2.0);

        let trio = [one.clone(), one.clone(), one];
        let joint = adaptive_aggregate(&trio).unwrap();
        assert_eq!(joint.mode, EstimatorMode::MinMax);
        assert!(close(joint.values[&0], 9.0, 1e-8), "{:?}", joint.values);
    }
}
