//! Arrival-time bookkeeping and detrending.
//!
//! Raw receiver timestamps are never comparable across clocks, but the series
//! of offsets from each clock's own baseline sample is. Subtracting the
//! sender's emission offset from that series yields a detrended series that
//! differs from the true one-way delays only by a per-receiver constant, so
//! every covariance computed downstream is unaffected by clock offsets.
//!
//! All timestamps are integer nanoseconds on an arbitrary per-clock epoch;
//! the whole pipeline up to the covariance stage is exact integer arithmetic.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::PairId;

/// Nanoseconds since an arbitrary per-clock epoch.
///
/// Timestamps from different clocks (different receivers, or receiver vs.
/// sender) must never be subtracted from each other directly; all cross-clock
/// comparisons go through baseline-relative offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn nanos(&self) -> i64 {
        self.0
    }
}

impl Sub for Timestamp {
    type Output = i64;

    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;

    fn add(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("series needs at least two samples (baseline plus one), got {0}")]
    EmptySeries(usize),
    #[error("inter-emission interval must be positive, got {0} ns")]
    NonPositiveInterval(i64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least two post-baseline samples, got {0}")]
    TooFewSamples(usize),
    #[error("sender offsets must start at zero and be non-decreasing")]
    InvalidSenderOffsets,
}

/// How the sender-side trend was removed from an arrival series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetrendMode {
    /// Emissions were spaced by a known constant interval.
    Constant,
    /// Emissions followed an arbitrary schedule carried as per-packet stamps.
    Schedule,
}

/// Sender emission offsets relative to the baseline emission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderOffsets {
    values: Vec<i64>,
}

impl SenderOffsets {
    /// `values[0]` must be zero and the sequence non-decreasing.
    pub fn new(values: Vec<i64>) -> Result<Self, TimingError> {
        if values.len() < 2 {
            return Err(TimingError::EmptySeries(values.len()));
        }
        if values[0] != 0 || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(TimingError::InvalidSenderOffsets);
        }
        Ok(Self { values })
    }

    /// Offsets from a series of sender timestamps on one clock.
    pub fn from_timestamps(sender_ts: &[Timestamp]) -> Result<Self, TimingError> {
        let deltas = delta_series(sender_ts)?;
        Self::new(deltas)
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

/// One measurement pair's raw material: aligned sender and arrival timestamps.
///
/// Index 0 is the baseline sample; index `k` in all three sequences refers to
/// the same emission. `delta_const` is present exactly when the sender used a
/// constant inter-emission interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingRecord {
    pub pair_id: PairId,
    pub sender_ts: Vec<Timestamp>,
    pub arrivals_a: Vec<Timestamp>,
    pub arrivals_b: Vec<Timestamp>,
    pub delta_const: Option<i64>,
}

/// A single aligned sample used when assembling a record from arrivals.
#[derive(Debug, Clone, Copy)]
pub struct SampleRow {
    /// Emission index assigned by the driver; gaps indicate lost samples.
    pub k: u64,
    pub sender_ts: Timestamp,
    pub arrival_a: Timestamp,
    pub arrival_b: Timestamp,
}

impl TimingRecord {
    pub fn new(
        pair_id: PairId,
        sender_ts: Vec<Timestamp>,
        arrivals_a: Vec<Timestamp>,
        arrivals_b: Vec<Timestamp>,
        delta_const: Option<i64>,
    ) -> Result<Self, TimingError> {
        if arrivals_a.len() != sender_ts.len() {
            return Err(TimingError::LengthMismatch {
                left: arrivals_a.len(),
                right: sender_ts.len(),
            });
        }
        if arrivals_b.len() != sender_ts.len() {
            return Err(TimingError::LengthMismatch {
                left: arrivals_b.len(),
                right: sender_ts.len(),
            });
        }
        if sender_ts.len() < 2 {
            return Err(TimingError::EmptySeries(sender_ts.len()));
        }
        if sender_ts.windows(2).any(|w| w[1] < w[0]) {
            return Err(TimingError::InvalidSenderOffsets);
        }
        if let Some(delta) = delta_const {
            if delta <= 0 {
                return Err(TimingError::NonPositiveInterval(delta));
            }
        }
        Ok(Self {
            pair_id,
            sender_ts,
            arrivals_a,
            arrivals_b,
            delta_const,
        })
    }

    /// Assemble a record from already-paired samples (both arrivals present).
    ///
    /// Samples lost at either receiver must be dropped before this point so
    /// the rows stay index-aligned. The constant-interval hint is honoured
    /// only when the surviving sender stamps still form an exact arithmetic
    /// progression with that step; otherwise the record falls back to
    /// schedule mode, which is always valid.
    pub fn from_samples(
        pair_id: PairId,
        rows: &[SampleRow],
        delta_hint: Option<i64>,
    ) -> Result<Self, TimingError> {
        if rows.len() < 2 {
            return Err(TimingError::EmptySeries(rows.len()));
        }
        let mut rows = rows.to_vec();
        rows.sort_by_key(|r| r.k);
        let sender_ts: Vec<Timestamp> = rows.iter().map(|r| r.sender_ts).collect();
        let delta_const = delta_hint.filter(|&delta| {
            delta > 0 && sender_ts.windows(2).all(|w| w[1] - w[0] == delta)
        });
        Self::new(
            pair_id,
            sender_ts,
            rows.iter().map(|r| r.arrival_a).collect(),
            rows.iter().map(|r| r.arrival_b).collect(),
            delta_const,
        )
    }

    /// Number of post-baseline samples.
    pub fn sample_count(&self) -> usize {
        self.sender_ts.len() - 1
    }

    pub fn mode(&self) -> DetrendMode {
        if self.delta_const.is_some() {
            DetrendMode::Constant
        } else {
            DetrendMode::Schedule
        }
    }
}

/// The detrended series for one receiver pair, indices k = 1..n.
///
/// The baseline index is dropped: its value is identically zero by
/// construction and would only bias the sample means downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelativeSeries {
    pub pair_id: PairId,
    pub values_a: Vec<i64>,
    pub values_b: Vec<i64>,
}

impl RelativeSeries {
    pub fn new(pair_id: PairId, values_a: Vec<i64>, values_b: Vec<i64>) -> Result<Self, TimingError> {
        if values_a.len() != values_b.len() {
            return Err(TimingError::LengthMismatch {
                left: values_a.len(),
                right: values_b.len(),
            });
        }
        if values_a.len() < 2 {
            return Err(TimingError::TooFewSamples(values_a.len()));
        }
        Ok(Self {
            pair_id,
            values_a,
            values_b,
        })
    }

    pub fn len(&self) -> usize {
        self.values_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_a.is_empty()
    }
}

/// Offsets of each arrival from the series' own baseline arrival.
///
/// The result lives entirely on the receiver's clock, so any constant clock
/// offset cancels; `result[0]` is always zero.
pub fn delta_series(arrivals: &[Timestamp]) -> Result<Vec<i64>, TimingError> {
    if arrivals.len() < 2 {
        return Err(TimingError::EmptySeries(arrivals.len()));
    }
    let baseline = arrivals[0];
    Ok(arrivals.iter().map(|&t| t - baseline).collect())
}

/// Remove the constant-interval emission trend: `deltas[k] - k * delta`.
///
/// The baseline index 0 is dropped from the output.
pub fn detrend_constant(deltas: &[i64], delta: i64) -> Result<Vec<i64>, TimingError> {
    if delta <= 0 {
        return Err(TimingError::NonPositiveInterval(delta));
    }
    debug_assert!(deltas.first().is_none_or(|&d| d == 0));
    Ok(deltas
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &d)| d - (k as i64) * delta)
        .collect())
}

/// Remove an arbitrary emission schedule: `deltas[k] - offsets[k]`.
///
/// Coincides with [`detrend_constant`] whenever the offsets form the
/// arithmetic progression `k * delta`.
pub fn detrend_schedule(deltas: &[i64], offsets: &SenderOffsets) -> Result<Vec<i64>, TimingError> {
    let offs = offsets.values();
    if deltas.len() != offs.len() {
        return Err(TimingError::LengthMismatch {
            left: deltas.len(),
            right: offs.len(),
        });
    }
    Ok(deltas
        .iter()
        .zip(offs)
        .skip(1)
        .map(|(&d, &o)| d - o)
        .collect())
}

/// Detrend both receivers of a record, picking the mode from `delta_const`.
///
/// For data generated as `t(k) = t_f(k) + d(k)`, each output value equals
/// `d(k) - d(0)` exactly, in integer arithmetic.
pub fn build_relative_series(record: &TimingRecord) -> Result<RelativeSeries, TimingError> {
    if record.sample_count() < 2 {
        return Err(TimingError::TooFewSamples(record.sample_count()));
    }
    let deltas_a = delta_series(&record.arrivals_a)?;
    let deltas_b = delta_series(&record.arrivals_b)?;
    let (values_a, values_b) = match record.delta_const {
        Some(delta) => (
            detrend_constant(&deltas_a, delta)?,
            detrend_constant(&deltas_b, delta)?,
        ),
        None => {
            let offsets = SenderOffsets::from_timestamps(&record.sender_ts)?;
            (
                detrend_schedule(&deltas_a, &offsets)?,
                detrend_schedule(&deltas_b, &offsets)?,
            )
        }
    };
    RelativeSeries::new(record.pair_id, values_a, values_b)
}
