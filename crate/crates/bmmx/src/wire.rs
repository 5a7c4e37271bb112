//! Fixed-width little-endian payload format for shipping one site's
//! sample.
//!
//! Layout, all fields little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BMMX"
//! 4       4     format version (currently 1)
//! 8       4     site id (u32)
//! 12      4     zero padding
//! 16      8     key universe size d (u64)
//! 24      8     threshold C (f64)
//! 32      8     entry count m (u64)
//! 40      8     zero padding
//! 48      24    site summary: mean variance, mean |bias|,
//!               mean unbiased MSE (3 x f64)
//! 72      16*m  entries: key (u64) then raw value (f64)
//! ```
//!
//! An empty payload is exactly 72 bytes. Values travel raw; the
//! receiver recovers each inclusion probability from the carried
//! threshold, so the same payload serves both estimators. The decoder
//! is strict: bad magic or version, nonzero padding, unsorted keys,
//! zero or non-finite values, and trailing bytes are all rejected.

use std::path::Path;

use crate::aggregate::SiteSummary;
use crate::error::{Error, Result};
use crate::sampling::{SampleDraw, SamplingPlan};

pub const MAGIC: [u8; 4] = *b"BMMX";
pub const VERSION: u32 = 1;
/// Bytes before the entry array: preamble, header, and summary.
pub const FIXED_LEN: usize = 72;
/// Bytes per entry: a u64 key and an f64 value.
pub const ENTRY_LEN: usize = 16;

/// One site's transmission: identity, threshold, accuracy summary,
/// and the kept entries in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct SitePayload {
    site_id: u32,
    dim: u64,
    threshold: f64,
    summary: SiteSummary,
    entries: Vec<(u64, f64)>,
}

impl SitePayload {
    pub fn new(
        site_id: u32,
        dim: u64,
        threshold: f64,
        summary: SiteSummary,
        entries: Vec<(u64, f64)>,
    ) -> Result<Self> {
        let payload = SitePayload {
            site_id,
            dim,
            threshold,
            summary,
            entries,
        };
        payload.validate()?;
        Ok(payload)
    }

    /// Packages a realized draw for transmission.
    pub fn from_draw(
        draw: &SampleDraw,
        plan: &SamplingPlan,
        summary: SiteSummary,
        dim: u64,
    ) -> Result<Self> {
        SitePayload::new(
            draw.site_id,
            dim,
            plan.threshold(),
            summary,
            draw.included.clone(),
        )
    }

    pub fn site_id(&self) -> u32 {
        self.site_id
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn summary(&self) -> &SiteSummary {
        &self.summary
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() || self.threshold < 0.0 {
            return Err(Error::CorruptValue(format!(
                "threshold {} is not a finite non-negative number",
                self.threshold
            )));
        }
        for (name, v) in [
            ("mean variance", self.summary.mean_variance),
            ("mean abs bias", self.summary.mean_abs_bias),
            ("mean unbiased MSE", self.summary.mean_unbiased_mse),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::CorruptValue(format!(
                    "summary {name} {v} is not a finite non-negative number"
                )));
            }
        }
        let mut prev: Option<u64> = None;
        for &(key, value) in &self.entries {
            if key >= self.dim {
                return Err(Error::CorruptPayload(format!(
                    "key {key} outside universe of size {}",
                    self.dim
                )));
            }
            if let Some(p) = prev {
                if key <= p {
                    return Err(Error::CorruptPayload(format!(
                        "keys not strictly increasing: {p} then {key}"
                    )));
                }
            }
            prev = Some(key);
            if !value.is_finite() {
                return Err(Error::CorruptValue(format!(
                    "non-finite value at key {key}"
                )));
            }
            if value == 0.0 {
                return Err(Error::CorruptValue(format!(
                    "zero value at key {key}; zeros are never sampled"
                )));
            }
        }
        Ok(())
    }
}

/// Encoded size of a payload with `entry_count` entries.
pub fn encoded_len(entry_count: usize) -> usize {
    FIXED_LEN + ENTRY_LEN * entry_count
}

/// Ratio of a dense raw-f64 transmission of the whole universe to the
/// encoded payload size.
pub fn effective_compression(dim: u64, entry_count: usize) -> f64 {
    (8 * dim) as f64 / encoded_len(entry_count) as f64
}

pub fn encode_payload(payload: &SitePayload) -> Result<Vec<u8>> {
    payload.validate()?;
    let mut buf = Vec::with_capacity(encoded_len(payload.entries.len()));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&payload.site_id.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&payload.dim.to_le_bytes());
    buf.extend_from_slice(&payload.threshold.to_le_bytes());
    buf.extend_from_slice(&(payload.entries.len() as u64).to_le_bytes());
    buf.extend_from_slice(&0u64.to_le_bytes());
    buf.extend_from_slice(&payload.summary.mean_variance.to_le_bytes());
    buf.extend_from_slice(&payload.summary.mean_abs_bias.to_le_bytes());
    buf.extend_from_slice(&payload.summary.mean_unbiased_mse.to_le_bytes());
    for &(key, value) in &payload.entries {
        buf.extend_from_slice(&key.to_le_bytes());
        buf.extend_from_slice(&value.to_le_bytes());
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::TruncatedPayload {
                expected: self.pos + n,
                actual: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

pub fn decode_payload(bytes: &[u8]) -> Result<SitePayload> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "bad magic {magic:02x?}"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "version {version}, this decoder reads version {VERSION}"
        )));
    }
    let site_id = r.u32()?;
    let pad32 = r.u32()?;
    let dim = r.u64()?;
    let threshold = r.f64()?;
    let count = r.u64()?;
    let pad64 = r.u64()?;
    if pad32 != 0 || pad64 != 0 {
        return Err(Error::CorruptPayload("nonzero padding".into()));
    }
    let summary = SiteSummary {
        mean_variance: r.f64()?,
        mean_abs_bias: r.f64()?,
        mean_unbiased_mse: r.f64()?,
    };
    let count: usize = count
        .try_into()
        .ok()
        .filter(|&c: &usize| c <= (usize::MAX - FIXED_LEN) / ENTRY_LEN)
        .ok_or_else(|| Error::CorruptPayload(format!("entry count {count} is implausible")))?;
    let expected = encoded_len(count);
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::CorruptPayload(format!(
            "{} trailing bytes after {count} entries",
            bytes.len() - expected
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let key = r.u64()?;
        let value = r.f64()?;
        entries.push((key, value));
    }
    SitePayload::new(site_id, dim, threshold, summary, entries)
}

pub fn write_payload_file(path: &Path, payload: &SitePayload) -> Result<()> {
    Ok(std::fs::write(path, encode_payload(payload)?)?)
}

pub fn read_payload_file(path: &Path) -> Result<SitePayload> {
    decode_payload(&std::fs::read(path)?)
}
