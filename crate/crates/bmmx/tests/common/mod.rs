//! Shared test helpers: an exact enumeration oracle for small
//! aggregation instances, and tolerance assertions.

#![allow(dead_code)]

/// Exact mean and per-key MSE of an aggregate estimator, computed by
/// enumerating every inclusion pattern with its probability.
///
/// `sites` holds `(values, probabilities)` per site over a common key
/// range `0..d`. Only feasible for `sites * d` up to ~20 cells; the
/// point is an oracle that shares no code with the sampler.
pub struct ExactMoments {
    pub mean: Vec<f64>,
    pub mse: Vec<f64>,
}

pub fn enumerate_moments(sites: &[(Vec<f64>, Vec<f64>)], biased: bool) -> ExactMoments {
    let d = sites[0].0.len();
    for (values, probs) in sites {
        assert_eq!(values.len(), d);
        assert_eq!(probs.len(), d);
    }
    let cells: Vec<(usize, usize)> = (0..sites.len())
        .flat_map(|s| (0..d).map(move |i| (s, i)))
        .collect();
    assert!(cells.len() <= 20, "enumeration blows up past 2^20 patterns");
    let truth: Vec<f64> = (0..d)
        .map(|j| sites.iter().map(|(v, _)| v[j]).sum())
        .collect();

    let mut mean = vec![0.0; d];
    let mut mse = vec![0.0; d];
    for mask in 0u64..(1 << cells.len()) {
        let mut prob = 1.0;
        for (bit, &(s, i)) in cells.iter().enumerate() {
            let p = sites[s].1[i];
            prob *= if mask >> bit & 1 == 1 { p } else { 1.0 - p };
        }
        if prob == 0.0 {
            continue;
        }
        let mut est = vec![0.0; d];
        for (bit, &(s, i)) in cells.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                let x = sites[s].0[i];
                est[i] += if biased { x } else { x / sites[s].1[i] };
            }
        }
        for j in 0..d {
            mean[j] += prob * est[j];
            let e = est[j] - truth[j];
            mse[j] += prob * e * e;
        }
    }
    ExactMoments { mean, mse }
}

/// Asserts relative closeness with a readable failure message.
pub fn assert_close(label: &str, got: f64, want: f64, tol_rel: f64) {
    let tol = tol_rel * want.abs().max(1e-300);
    assert!(
        (got - want).abs() <= tol,
        "{label}: got {got}, want {want} (relative tolerance {tol_rel})"
    );
}

/// Asserts closeness within `sigmas` standard errors.
pub fn assert_within_se(label: &str, got: f64, want: f64, se: f64, sigmas: f64) {
    assert!(
        (got - want).abs() <= sigmas * se + 1e-12,
        "{label}: got {got}, want {want}, off by {} standard errors (se {se})",
        (got - want).abs() / se.max(1e-300)
    );
}
