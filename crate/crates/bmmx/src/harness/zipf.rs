//! Zipf-distributed synthetic data.
//!
//! Values are drawn from the Zipf law on `{1..support}` with mass
//! proportional to `j^(-s)` by inverting a precomputed cumulative
//! table. Generation is keyed by `(seed, site)`, so every site's
//! vector is reproducible in isolation and distinct sites get
//! independent draws.

use crate::error::{Error, Result};
use crate::rng::{Stream, TAG_DATA};

/// Guard against accidentally precomputing a multi-gigabyte table.
const MAX_SUPPORT: u64 = 100_000_000;

/// Inverse-CDF table for the Zipf law on `{1..support}`.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    exponent: f64,
    cdf: Vec<f64>,
}

impl ZipfTable {
    pub fn new(exponent: f64, support: u64) -> Result<Self> {
        if !exponent.is_finite() || exponent <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "Zipf exponent must be positive and finite, got {exponent}"
            )));
        }
        if support == 0 || support > MAX_SUPPORT {
            return Err(Error::InvalidConfig(format!(
                "Zipf support must be in 1..={MAX_SUPPORT}, got {support}"
            )));
        }
        let mut cdf = Vec::with_capacity(support as usize);
        let mut total = 0.0;
        for j in 1..=support {
            total += (j as f64).powf(-exponent);
            cdf.push(total);
        }
        for c in &mut cdf {
            *c /= total;
        }
        // Pin the final step so a uniform draw just below 1 always maps
        // inside the support.
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ZipfTable { exponent, cdf })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn support(&self) -> u64 {
        self.cdf.len() as u64
    }

    /// Probability of drawing exactly `value`.
    pub fn mass(&self, value: u64) -> f64 {
        let i = (value - 1) as usize;
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    /// Maps a uniform draw in [0, 1) to a value in `1..=support` by
    /// CDF inversion.
    pub fn draw(&self, u: f64) -> u64 {
        let i = self.cdf.partition_point(|&c| c <= u);
        (i.min(self.cdf.len() - 1) as u64) + 1
    }
}

/// Generates one site's vector of `count` Zipf draws, deterministic in
/// `(seed, site)`.
pub fn gen_zipf(table: &ZipfTable, seed: u64, site: u32, count: usize) -> Vec<f64> {
    let stream = Stream::new(seed, TAG_DATA, &[u64::from(site)]);
    (0..count)
        .map(|i| table.draw(stream.unit(i as u64)) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_law_gives_two_thirds_to_the_head() {
        let table = ZipfTable::new(1.0, 2).unwrap();
        assert!((table.mass(1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((table.mass(2) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(table.draw(0.0), 1);
        assert_eq!(table.draw(0.66), 1);
        assert_eq!(table.draw(0.67), 2);
        assert_eq!(table.draw(0.999_999), 2);
    }

    #[test]
    fn masses_sum_to_one_and_decrease() {
        let table = ZipfTable::new(1.2, 1000).unwrap();
        let mut total = 0.0;
        let mut prev = f64::INFINITY;
        for j in 1..=1000 {
            let m = table.mass(j);
            assert!(m <= prev + 1e-15, "mass must decay with rank");
            prev = m;
            total += m;
        }
        assert!((total - 1.0).abs() < 1e-9, "total mass {total}");
    }

    #[test]
    fn draw_inverts_the_cdf() {
        let table = ZipfTable::new(0.8, 100).unwrap();
        let stream = Stream::new(3, TAG_DATA, &[0]);
        for i in 0..10_000u64 {
            let u = stream.unit(i);
            let v = table.draw(u) as usize;
            assert!((1..=100).contains(&v));
            // u must land inside the chosen value's CDF step.
            assert!(u < table.cdf[v - 1]);
            if v > 1 {
                assert!(u >= table.cdf[v - 2]);
            }
        }
    }

    #[test]
    fn head_frequency_matches_mass() {
        let table = ZipfTable::new(1.0, 50).unwrap();
        let values = gen_zipf(&table, 42, 0, 100_000);
        let ones = values.iter().filter(|&&v| v == 1.0).count() as f64;
        let freq = ones / values.len() as f64;
        let p = table.mass(1);
        let sigma = (p * (1.0 - p) / values.len() as f64).sqrt();
        assert!(
            (freq - p).abs() < 4.0 * sigma,
            "head frequency {freq} vs mass {p}"
        );
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_site() {
        let table = ZipfTable::new(1.0, 100).unwrap();
        assert_eq!(gen_zipf(&table, 1, 2, 50), gen_zipf(&table, 1, 2, 50));
        assert_ne!(gen_zipf(&table, 1, 2, 50), gen_zipf(&table, 1, 3, 50));
        assert_ne!(gen_zipf(&table, 1, 2, 50), gen_zipf(&table, 2, 2, 50));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(ZipfTable::new(0.0, 10).is_err());
        assert!(ZipfTable::new(f64::NAN, 10).is_err());
        assert!(ZipfTable::new(1.0, 0).is_err());
        assert!(ZipfTable::new(1.0, MAX_SUPPORT + 1).is_err());
    }
}
