//! Keyed value vectors held by individual sites.
//!
//! A site vector pairs a dense key universe `0..dim` with the entries
//! the site actually stores. Dense vectors enumerate every key; sparse
//! vectors carry an explicit, strictly sorted key list. Zero values are
//! legal entries: they stay in the vector but are never sampled, since
//! a zero contributes neither mass nor error.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SiteVector {
    site_id: u32,
    dim: u64,
    entries: Vec<(u64, f64)>,
}

impl SiteVector {
    /// Builds a vector whose keys are `0..values.len()`.
    pub fn dense(site_id: u32, values: &[f64]) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        let entries = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u64, v))
            .collect();
        Ok(SiteVector {
            site_id,
            dim: values.len() as u64,
            entries,
        })
    }

    /// Builds a vector over an explicit key universe. Keys must be
    /// strictly increasing and below `dim`.
    pub fn sparse(site_id: u32, dim: u64, entries: Vec<(u64, f64)>) -> Result<Self> {
        let mut prev: Option<u64> = None;
        for (i, &(key, value)) in entries.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if key >= dim {
                return Err(Error::InvalidVector(format!(
                    "key {key} outside universe of size {dim}"
                )));
            }
            if let Some(p) = prev {
                if key <= p {
                    return Err(Error::InvalidVector(format!(
                        "keys must be strictly increasing, saw {p} then {key}"
                    )));
                }
            }
            prev = Some(key);
        }
        Ok(SiteVector {
            site_id,
            dim,
            entries,
        })
    }

    pub fn site_id(&self) -> u32 {
        self.site_id
    }

    /// Size of the key universe, not the number of stored entries.
    pub fn dim(&self) -> u64 {
        self.dim
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, v)| v)
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&(_, v)| v != 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_assigns_sequential_keys() {
        let v = SiteVector::dense(3, &[1.0, 0.0, -2.5]).unwrap();
        assert_eq!(v.site_id(), 3);
        assert_eq!(v.dim(), 3);
        assert_eq!(v.entries(), &[(0, 1.0), (1, 0.0), (2, -2.5)]);
        assert_eq!(v.nonzero_count(), 2);
    }

    #[test]
    fn dense_rejects_non_finite_values() {
        let err = SiteVector::dense(0, &[1.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("non-finite value at index 1"));
        let err = SiteVector::dense(0, &[f64::INFINITY]).unwrap_err();
        assert!(err.to_string().contains("index 0"));
    }

    #[test]
    fn sparse_accepts_sorted_keys_within_universe() {
        let v = SiteVector::sparse(1, 10, vec![(0, 1.0), (4, 2.0), (9, 3.0)]).unwrap();
        assert_eq!(v.dim(), 10);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn sparse_rejects_unsorted_and_out_of_range_keys() {
        let err = SiteVector::sparse(1, 10, vec![(4, 1.0), (4, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
        let err = SiteVector::sparse(1, 10, vec![(5, 1.0), (2, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
        let err = SiteVector::sparse(1, 10, vec![(10, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("outside universe"));
    }
}
