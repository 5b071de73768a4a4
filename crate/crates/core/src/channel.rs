//! Adaptive MCS downlink model.
//!
//! A user can decode rate index `m` iff its received SNR is at least the
//! threshold of that index. Because thresholds increase with the rate, the
//! decodable indices of any user always form a prefix `0..=k`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bits per byte. Grid volumes are specified in bytes (1 KB = 1000 bytes).
pub const BITS_PER_BYTE: f64 = 8.0;

/// Default rate/threshold pairs: spectral efficiency (bits/s/Hz) and the
/// minimum SNR (dB) needed to decode it.
pub const DEFAULT_MCS: [(f64, f64); 14] = [
    (0.31, -4.0),
    (0.49, -1.0),
    (0.74, 2.5),
    (1.03, 5.5),
    (1.33, 8.5),
    (1.48, 10.5),
    (1.91, 13.0),
    (2.41, 16.0),
    (2.57, 18.0),
    (3.03, 20.5),
    (3.61, 24.0),
    (4.21, 27.0),
    (4.82, 30.0),
    (5.33, 33.0),
];

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("MCS table must contain at least one entry")]
    EmptyTable,
    #[error("MCS entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("MCS rates must be positive and strictly increasing (entry {index})")]
    RatesNotIncreasing { index: usize },
    #[error("SNR thresholds must be strictly increasing (entry {index})")]
    ThresholdsNotIncreasing { index: usize },
}

/// One modulation and coding option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    /// Spectral efficiency in bits/s/Hz.
    pub rate: f64,
    /// Lowest SNR (dB) at which this rate decodes.
    pub threshold_db: f64,
}

/// Ordered set of rate options with their SNR thresholds.
///
/// Serialized as a JSON array of `{rate, threshold_db}` objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<McsEntry>", into = "Vec<McsEntry>")]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self, ChannelError> {
        if entries.is_empty() {
            return Err(ChannelError::EmptyTable);
        }
        for (index, e) in entries.iter().enumerate() {
            if !e.rate.is_finite() || !e.threshold_db.is_finite() {
                return Err(ChannelError::NonFinite { index });
            }
            if e.rate <= 0.0 {
                return Err(ChannelError::RatesNotIncreasing { index });
            }
            if index > 0 {
                let prev = &entries[index - 1];
                if e.rate <= prev.rate {
                    return Err(ChannelError::RatesNotIncreasing { index });
                }
                if e.threshold_db <= prev.threshold_db {
                    return Err(ChannelError::ThresholdsNotIncreasing { index });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, ChannelError> {
        Self::new(
            pairs
                .iter()
                .map(|&(rate, threshold_db)| McsEntry { rate, threshold_db })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    /// Spectral efficiency of `index`. Panics on an out-of-range index.
    pub fn rate(&self, index: usize) -> f64 {
        self.entries[index].rate
    }

    pub fn threshold_db(&self, index: usize) -> f64 {
        self.entries[index].threshold_db
    }

    /// Indices decodable at `snr_db`; always a prefix `0..k`.
    pub fn decodable_set(&self, snr_db: f64) -> Range<usize> {
        // thresholds ascending: count of thresholds <= snr is the prefix length
        let k = self
            .entries
            .partition_point(|e| snr_db >= e.threshold_db);
        0..k
    }

    /// Highest decodable index, or `None` when even the lowest rate fails.
    pub fn max_rate_index(&self, snr_db: f64) -> Option<usize> {
        self.decodable_set(snr_db).end.checked_sub(1)
    }

    /// `B * r_max` in bits/s.
    pub fn max_data_rate(&self, snr_db: f64, bandwidth_hz: f64) -> Option<f64> {
        self.max_rate_index(snr_db)
            .map(|m| bandwidth_hz * self.rate(m))
    }

    /// Seconds needed to send one grid of `grid_bytes` at rate `index`.
    pub fn item_cost(&self, index: usize, bandwidth_hz: f64, grid_bytes: f64) -> f64 {
        transmission_time(grid_bytes, bandwidth_hz * self.rate(index))
    }

    /// Decodability vector of length M (prefix of ones).
    pub fn alpha(&self, snr_db: f64) -> Vec<bool> {
        let k = self.decodable_set(snr_db).end;
        (0..self.len()).map(|m| m < k).collect()
    }
}

impl Default for McsTable {
    fn default() -> Self {
        Self::from_pairs(&DEFAULT_MCS).expect("default MCS table is valid")
    }
}

impl TryFrom<Vec<McsEntry>> for McsTable {
    type Error = ChannelError;

    fn try_from(entries: Vec<McsEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<McsTable> for Vec<McsEntry> {
    fn from(t: McsTable) -> Self {
        t.entries
    }
}

/// Time to push `grid_bytes` through a link of `rate_bps`.
///
/// Every latency in the crate goes through this expression so that costs
/// derived from a rate index and from a group rate agree bit for bit.
#[inline]
pub fn transmission_time(grid_bytes: f64, rate_bps: f64) -> f64 {
    BITS_PER_BYTE * grid_bytes / rate_bps
}

/// Per-user channel summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    pub snr_db: f64,
    pub alpha: Vec<bool>,
    pub max_rate_index: Option<usize>,
}

impl UserChannel {
    pub fn new(snr_db: f64, table: &McsTable) -> Self {
        Self {
            snr_db,
            alpha: table.alpha(snr_db),
            max_rate_index: table.max_rate_index(snr_db),
        }
    }
}
