//! Threshold Poisson sampling and its two per-element estimators.
//!
//! Each element of a vector is kept independently with probability
//! `p = x^2 / (x^2 + C)`, where the threshold `C >= 0` is solved so the
//! expected sample size hits a target `n`. Large values are kept almost
//! surely, small ones rarely, zeros never.
//!
//! Two estimators read a transmitted value back out:
//!
//! * the unbiased one divides by `p`, paying `x^2 (1 - p) / p = C` in
//!   per-element MSE, flat across the kept elements;
//! * the biased one uses the raw value, with bias `x (p - 1)`, variance
//!   `(p - p^2) x^2`, and the strictly smaller MSE `x^2 (1 - p)`.
//!
//! The single-site advantage of the biased estimator,
//! `x^2 (p - 1)^2 / p`, is computed in closed form because subtracting
//! the two MSEs cancels catastrophically as `p` approaches 1.

use crate::error::{Error, Result};
use crate::rng::{Stream, TAG_DRAW};
use crate::vector::SiteVector;

/// Relative tolerance on the expected sample size at which the
/// threshold bisection stops.
pub const SOLVE_TOLERANCE: f64 = 1e-9;

/// Hard cap on bisection iterations; at one halving per step this is
/// far below the tolerance for any representable bracket.
pub const SOLVE_MAX_ITERATIONS: u32 = 200;

/// Floor applied to nonzero inclusion probabilities so downstream
/// divisions stay finite.
pub const PROB_FLOOR: f64 = 1e-308;

/// Inclusion probability of a value under a fixed threshold.
///
/// Zero values are never included. A zero threshold keeps every
/// nonzero value with certainty. If `x^2` overflows, the monotone
/// limit 1 is returned.
#[inline]
pub fn inclusion_probability(x: f64, threshold: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if threshold == 0.0 {
        return 1.0;
    }
    let s = x * x;
    if !s.is_finite() {
        return 1.0;
    }
    s / (s + threshold)
}

/// Maps a whole slice through [`inclusion_probability`].
pub fn assign_probabilities(values: &[f64], threshold: f64) -> Vec<f64> {
    values
        .iter()
        .map(|&x| inclusion_probability(x, threshold))
        .collect()
}

/// Inclusion probabilities for one vector, plus the threshold that
/// produced them.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    threshold: f64,
    target_n: f64,
    exact_mode: bool,
    clamped: usize,
    probs: Vec<(u64, f64)>,
}

impl SamplingPlan {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The expected sample size the solve aimed for.
    pub fn target_n(&self) -> f64 {
        self.target_n
    }

    /// True when the target admits keeping every nonzero value, so the
    /// threshold collapses to zero and the sample is exact.
    pub fn exact_mode(&self) -> bool {
        self.exact_mode
    }

    /// How many probabilities were raised to [`PROB_FLOOR`].
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `(key, probability)` pairs aligned with the solved vector.
    pub fn probs(&self) -> &[(u64, f64)] {
        &self.probs
    }

    pub fn expected_sample_size(&self) -> f64 {
        self.probs.iter().map(|&(_, p)| p).sum()
    }
}

/// Solves for the threshold giving expected sample size `target_n`
/// over plain values keyed `0..len`.
pub fn solve_threshold(values: &[f64], target_n: f64) -> Result<SamplingPlan> {
    let keyed: Vec<(u64, f64)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u64, v))
        .collect();
    solve_threshold_keyed(&keyed, target_n)
}

/// [`solve_threshold`] for a keyed site vector.
pub fn plan_for_vector(vector: &SiteVector, target_n: f64) -> Result<SamplingPlan> {
    solve_threshold_keyed(vector.entries(), target_n)
}

fn solve_threshold_keyed(entries: &[(u64, f64)], target_n: f64) -> Result<SamplingPlan> {
    for (i, &(_, v)) in entries.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
    }
    let d = entries.len();
    let squares: Vec<f64> = entries
        .iter()
        .filter(|&&(_, v)| v != 0.0)
        .map(|&(_, v)| v * v)
        .collect();
    if squares.is_empty() {
        return Err(Error::NoMass);
    }
    if squares.iter().any(|s| !s.is_finite()) {
        return Err(Error::AssumptionViolated(
            "value magnitude overflows when squared".into(),
        ));
    }
    if squares.iter().all(|&s| s == 0.0) {
        return Err(Error::AssumptionViolated(
            "every nonzero value underflows when squared".into(),
        ));
    }
    if !(target_n > 0.0) || target_n > d as f64 {
        return Err(Error::InvalidSampleSize(format!(
            "expected sample size {target_n} outside (0, {d}]"
        )));
    }

    let nonzero = squares.len();
    let threshold = if target_n >= nonzero as f64 {
        0.0
    } else {
        bisect_threshold(&squares, target_n)
    };

    let mut clamped = 0;
    let probs = entries
        .iter()
        .map(|&(key, v)| {
            let mut p = inclusion_probability(v, threshold);
            if v != 0.0 && p < PROB_FLOOR {
                p = PROB_FLOOR;
                clamped += 1;
            }
            (key, p)
        })
        .collect();

    Ok(SamplingPlan {
        threshold,
        target_n,
        exact_mode: threshold == 0.0,
        clamped,
        probs,
    })
}

/// Expected sample size under threshold `c`, strictly decreasing in `c`.
fn expected_size(squares: &[f64], c: f64) -> f64 {
    squares.iter().map(|&s| s / (s + c)).sum()
}

fn bisect_threshold(squares: &[f64], target_n: f64) -> f64 {
    // At c = d * max(x^2) / n the expected size is at most n, and at
    // c = 0 it is the nonzero count, which exceeds n here; the root is
    // bracketed.
    let max_sq = squares.iter().cloned().fold(0.0, f64::max);
    let mut lo = 0.0;
    let mut hi = squares.len() as f64 * max_sq / target_n;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..SOLVE_MAX_ITERATIONS {
        mid = 0.5 * (lo + hi);
        let got = expected_size(squares, mid);
        if (got - target_n).abs() <= SOLVE_TOLERANCE * target_n {
            break;
        }
        if got > target_n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// One realized draw over a site vector.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub site_id: u32,
    pub trial: u64,
    /// Kept `(key, raw value)` pairs, in key order.
    pub included: Vec<(u64, f64)>,
}

/// Draws each element independently with its planned probability.
///
/// The draw for element `key` of site `s` in trial `t` is a pure
/// function of `(seed, s, t, key)`, so any trial replays exactly.
/// Elements with probability 0 are never kept and elements with
/// probability 1 always are.
pub fn poisson_sample(
    vector: &SiteVector,
    plan: &SamplingPlan,
    seed: u64,
    trial: u64,
) -> Result<SampleDraw> {
    if vector.len() != plan.probs().len() {
        return Err(Error::PlanMismatch(format!(
            "plan covers {} entries, vector has {}",
            plan.probs().len(),
            vector.len()
        )));
    }
    let stream = Stream::new(seed, TAG_DRAW, &[u64::from(vector.site_id()), trial]);
    let mut included = Vec::new();
    for (&(key, value), &(plan_key, p)) in vector.entries().iter().zip(plan.probs()) {
        if key != plan_key {
            return Err(Error::PlanMismatch(format!(
                "plan key {plan_key} does not match vector key {key}"
            )));
        }
        if stream.unit(key) < p {
            included.push((key, value));
        }
    }
    Ok(SampleDraw {
        site_id: vector.site_id(),
        trial,
        included,
    })
}

/// Unbiased reconstruction of a transmitted value: `x / p`.
pub fn minmax_point_estimate(x: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::AssumptionViolated(format!(
            "inclusion probability {p} outside (0, 1]"
        )));
    }
    Ok(x / p)
}

/// Per-element MSE of the unbiased estimator: `x^2 (1 - p) / p`.
pub fn analytic_minmax_mse(x: f64, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::UndefinedMse);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::AssumptionViolated(format!(
            "inclusion probability {p} outside (0, 1]"
        )));
    }
    let mse = x * x * (1.0 - p) / p;
    debug_assert!(
        {
            let alt = (x / p) * (x / p) * p * (1.0 - p);
            !mse.is_finite() || !alt.is_finite() || relative_gap(mse, alt) <= 1e-12
        },
        "the two MSE forms disagree at x = {x}, p = {p}"
    );
    Ok(mse)
}

/// Bias, variance, and MSE of the biased (raw-value) estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasedMoments {
    /// `x (p - 1)`; always pulls toward zero.
    pub bias: f64,
    /// `(p - p^2) x^2`.
    pub variance: f64,
    /// `x^2 (1 - p)`, equal to variance plus squared bias.
    pub mse: f64,
}

/// Moments of the biased estimator. Defined for all `p` in [0, 1];
/// at `p = 0` the estimate is identically zero and the MSE is `x^2`.
pub fn analytic_bminmax_moments(x: f64, p: f64) -> Result<BiasedMoments> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::AssumptionViolated(format!(
            "inclusion probability {p} outside [0, 1]"
        )));
    }
    // `p * (1.0 - p)` instead of `p - p * p`: near `p = 1` the
    // subtraction `1.0 - p` is exact while `p - p * p` loses eight
    // digits to cancellation.
    let moments = BiasedMoments {
        bias: x * (p - 1.0),
        variance: p * (1.0 - p) * x * x,
        mse: x * x * (1.0 - p),
    };
    debug_assert!(
        {
            let recomposed = moments.variance + moments.bias * moments.bias;
            !moments.mse.is_finite()
                || !recomposed.is_finite()
                || relative_gap(moments.mse, recomposed) <= 1e-12
        },
        "variance + bias^2 drifted from the MSE at x = {x}, p = {p}"
    );
    Ok(moments)
}

/// How much MSE the biased estimator saves on one element:
/// `x^2 (p - 1)^2 / p`, strictly positive for `p < 1` and zero at
/// `p = 1`.
pub fn mse_gap(x: f64, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::UndefinedMse);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::AssumptionViolated(format!(
            "inclusion probability {p} outside (0, 1]"
        )));
    }
    let shortfall = p - 1.0;
    Ok(x * x * shortfall * shortfall / p)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn two_element_solve_hits_known_threshold() {
        let plan = solve_threshold(&[1.0, 2.0], 1.0).unwrap();
        assert!(
            close(plan.threshold(), 2.0, 1e-8),
            "threshold = {}",
            plan.threshold()
        );
        let probs: Vec<f64> = plan.probs().iter().map(|&(_, p)| p).collect();
        assert!(close(probs[0], 1.0 / 3.0, 1e-8), "p0 = {}", probs[0]);
        assert!(close(probs[1], 2.0 / 3.0, 1e-8), "p1 = {}", probs[1]);
        assert!(!plan.exact_mode());
        assert_eq!(plan.clamped(), 0);
    }

    #[test]
    fn equal_values_share_probability() {
        let plan = solve_threshold(&[3.0, 3.0, 3.0, 3.0], 2.0).unwrap();
        assert!(close(plan.threshold(), 9.0, 1e-8));
        for &(_, p) in plan.probs() {
            assert!(close(p, 0.5, 1e-9), "p = {p}");
        }
    }

    #[test]
    fn generous_target_switches_to_exact_mode() {
        let plan = solve_threshold(&[5.0, 0.0, 5.0], 2.0).unwrap();
        assert!(plan.exact_mode());
        assert_eq!(plan.threshold(), 0.0);
        let probs: Vec<f64> = plan.probs().iter().map(|&(_, p)| p).collect();
        assert_eq!(probs, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_values_always_get_probability_zero() {
        let plan = solve_threshold(&[0.0, 4.0, 0.0, 1.0, 0.0], 1.0).unwrap();
        for &(key, p) in plan.probs() {
            if key != 1 && key != 3 {
                assert_eq!(p, 0.0);
            } else {
                assert!(p > 0.0);
            }
        }
    }

    #[test]
    fn all_zero_vector_is_rejected() {
        let err = solve_threshold(&[0.0, 0.0], 1.0).unwrap_err();
        assert!(err.to_string().contains("no mass to sample"));
        let err = solve_threshold(&[], 1.0).unwrap_err();
        assert!(err.to_string().contains("no mass to sample"));
    }

    #[test]
    fn out_of_range_targets_are_rejected() {
        for bad in [0.0, -1.0, 3.5, f64::NAN] {
            let err = solve_threshold(&[1.0, 2.0, 3.0], bad).unwrap_err();
            assert!(
                err.to_string().contains("invalid sample size"),
                "target {bad} gave: {err}"
            );
        }
    }

    #[test]
    fn solve_meets_tolerance_on_mixed_scales() {
        let stream = Stream::new(7, TAG_DRAW, &[100]);
        let mut values = Vec::new();
        for i in 0..500u64 {
            let u = stream.unit(i);
            let mag = 10f64.powf(u * 12.0 - 6.0);
            let sign = if stream.bits(i) & 1 == 0 { 1.0 } else { -1.0 };
            values.push(sign * mag);
        }
        for target in [1.0, 17.5, 100.0, 499.0] {
            let plan = solve_threshold(&values, target).unwrap();
            let got = plan.expected_sample_size();
            assert!(
                (got - target).abs() <= 1e-9 * target,
                "target {target}: expected size {got}"
            );
        }
    }

    #[test]
    fn tiny_values_hit_the_probability_floor() {
        let plan = solve_threshold(&[1e-160, 1e6, 1e6], 1.0).unwrap();
        let p_small = plan.probs()[0].1;
        assert_eq!(p_small, PROB_FLOOR);
        assert_eq!(plan.clamped(), 1);
    }

    #[test]
    fn squared_overflow_is_reported() {
        let err = solve_threshold(&[1e200, 1.0], 1.0).unwrap_err();
        assert!(err.to_string().contains("assumption violated"));
    }

    #[test]
    fn squared_underflow_of_all_mass_is_reported() {
        let err = solve_threshold(&[1e-200, 0.0], 0.5).unwrap_err();
        assert!(err.to_string().contains("assumption violated"));
        // Mixed case: tiny values are fine while real mass exists.
        assert!(solve_threshold(&[1e-200, 3.0], 0.5).is_ok());
    }

    #[test]
    fn probability_map_matches_direct_formula() {
        let values = [0.0, 1.0, -2.0, 10.0];
        let probs = assign_probabilities(&values, 4.0);
        assert_eq!(probs[0], 0.0);
        assert!(close(probs[1], 0.2, 1e-15));
        assert!(close(probs[2], 0.5, 1e-15));
        assert!(close(probs[3], 100.0 / 104.0, 1e-15));
        assert_eq!(inclusion_probability(-3.0, 0.0), 1.0);
        assert_eq!(inclusion_probability(0.0, 0.0), 0.0);
    }

    #[test]
    fn draws_respect_degenerate_probabilities() {
        let vector = SiteVector::dense(0, &[5.0, 0.0, 5.0]).unwrap();
        let plan = plan_for_vector(&vector, 2.0).unwrap();
        for trial in 0..200 {
            let draw = poisson_sample(&vector, &plan, 42, trial).unwrap();
            assert_eq!(draw.included, vec![(0, 5.0), (2, 5.0)]);
        }
    }

    #[test]
    fn draw_frequency_tracks_probability() {
        let vector = SiteVector::dense(0, &[1.0, 2.0]).unwrap();
        let plan = plan_for_vector(&vector, 1.0).unwrap();
        let trials = 100_000u64;
        let mut kept = [0u64; 2];
        for trial in 0..trials {
            for (key, _) in poisson_sample(&vector, &plan, 9, trial).unwrap().included {
                kept[key as usize] += 1;
            }
        }
        // 4-sigma bands around p = 1/3 and p = 2/3.
        for (i, p) in [(0usize, 1.0 / 3.0), (1usize, 2.0 / 3.0)] {
            let freq = kept[i] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (freq - p).abs() < 4.0 * sigma,
                "key {i}: frequency {freq} vs probability {p}"
            );
        }
    }

    #[test]
    fn replaying_a_trial_reproduces_the_draw() {
        let vector = SiteVector::dense(4, &[1.0, -2.0, 3.0, 0.5]).unwrap();
        let plan = plan_for_vector(&vector, 2.0).unwrap();
        let a = poisson_sample(&vector, &plan, 11, 77).unwrap();
        let b = poisson_sample(&vector, &plan, 11, 77).unwrap();
        assert_eq!(a.included, b.included);
    }

    #[test]
    fn mismatched_plan_is_rejected() {
        let vector = SiteVector::dense(0, &[1.0, 2.0, 3.0]).unwrap();
        let other = SiteVector::dense(0, &[1.0, 2.0]).unwrap();
        let plan = plan_for_vector(&other, 1.0).unwrap();
        let err = poisson_sample(&vector, &plan, 1, 0).unwrap_err();
        assert!(err.to_string().contains("does not match vector"));
    }

    #[test]
    fn estimator_values_at_the_reference_point() {
        let (x, p) = (2.0, 2.0 / 3.0);
        assert!(close(minmax_point_estimate(x, p).unwrap(), 3.0, 1e-15));
        assert!(close(analytic_minmax_mse(x, p).unwrap(), 2.0, 1e-12));
        let m = analytic_bminmax_moments(x, p).unwrap();
        assert!(close(m.bias, -2.0 / 3.0, 1e-12), "bias = {}", m.bias);
        assert!(close(m.variance, 8.0 / 9.0, 1e-12), "var = {}", m.variance);
        assert!(close(m.mse, 4.0 / 3.0, 1e-12), "mse = {}", m.mse);
        assert!(close(mse_gap(x, p).unwrap(), 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn unbiased_mse_equals_threshold_for_every_nonzero_value() {
        let values = [0.5, -3.0, 42.0, 1e-3];
        let plan = solve_threshold(&values, 2.0).unwrap();
        let c = plan.threshold();
        for (&x, &(_, p)) in values.iter().zip(plan.probs()) {
            let mse = analytic_minmax_mse(x, p).unwrap();
            assert!(
                close(mse, c, 1e-9),
                "x = {x}: mse {mse} should equal threshold {c}"
            );
        }
    }

    #[test]
    fn gap_is_positive_below_one_and_zero_at_one() {
        assert_eq!(mse_gap(3.0, 1.0).unwrap(), 0.0);
        let stream = Stream::new(5, TAG_DRAW, &[1]);
        for i in 0..1000 {
            let p = 1e-6 + stream.unit(2 * i) * (1.0 - 2e-6);
            let x = 10f64.powf(stream.unit(2 * i + 1) * 12.0 - 6.0);
            assert!(mse_gap(x, p).unwrap() > 0.0, "x = {x}, p = {p}");
        }
    }

    #[test]
    fn degenerate_probabilities_are_rejected() {
        assert!(minmax_point_estimate(1.0, 0.0).is_err());
        assert!(minmax_point_estimate(1.0, 1.5).is_err());
        assert!(matches!(
            analytic_minmax_mse(1.0, 0.0),
            Err(crate::error::Error::UndefinedMse)
        ));
        assert!(analytic_bminmax_moments(1.0, -0.1).is_err());
        assert!(analytic_bminmax_moments(1.0, f64::NAN).is_err());
        assert!(matches!(
            mse_gap(1.0, 0.0),
            Err(crate::error::Error::UndefinedMse)
        ));
    }

    #[test]
    fn biased_moments_are_defined_at_probability_zero() {
        let m = analytic_bminmax_moments(3.0, 0.0).unwrap();
        assert_eq!(m.bias, -3.0);
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.mse, 9.0);
    }
}
