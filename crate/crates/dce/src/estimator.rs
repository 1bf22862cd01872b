//! Covariance and correlation estimation over detrended arrival series.
//!
//! The unbiased sample covariance of the two detrended halves estimates the
//! delay covariance on the path segment the two receivers share. Covariance
//! and the Pearson form are both exposed; the headline estimate is the
//! covariance because that is the quantity comparable, in ns², against the
//! directly measured shared-path variance.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::id::PairId;
use crate::timing::{self, DetrendMode, RelativeSeries, TimingRecord};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("series is constant, correlation undefined")]
    DegenerateVariance,
    #[error("outlier multiplier must exceed 1, got {0}")]
    InvalidMultiplier(f64),
    #[error(transparent)]
    Timing(#[from] timing::TimingError),
}

/// Covariance of the detrended halves of one receiver pair, in ns².
///
/// May legitimately be negative on finite samples; it is reported as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub pair_id: PairId,
    pub value: f64,
    pub n_used: usize,
    pub mode: DetrendMode,
}

/// Pearson correlation of the detrended halves, clamped to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub pair_id: PairId,
    pub value: f64,
    pub n_used: usize,
}

/// Which per-path delay the outlier rule was evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBasis {
    /// True one-way delays supplied by the caller (simulator context).
    TrueDelays,
    /// Pseudo-delays reconstructed by shifting each detrended half to zero.
    PseudoDelays,
}

/// What the outlier filter removed and the thresholds it used, in ns.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    /// 1-based sample indices removed from both halves.
    pub removed_indices: BTreeSet<usize>,
    pub threshold_a: f64,
    pub threshold_b: f64,
    pub multiplier: f64,
    pub basis: FilterBasis,
}

/// Unbiased two-pass sample covariance: sums first, then centered products.
///
/// Centering is computed as `(n * x_i - sum_x) / n` rather than
/// `x_i - sum_x / n`: the numerator is invariant under a constant shift of
/// the inputs before any rounding happens, so on integer-valued data
/// (nanosecond quantities in range) shift invariance holds bit-exactly, not
/// just to rounding error.
pub fn sample_covariance(x: &[f64], y: &[f64]) -> Result<f64, EstimatorError> {
    if x.len() != y.len() {
        return Err(EstimatorError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let len = x.len();
    if len < 2 {
        return Err(EstimatorError::TooFewSamples(len));
    }
    let n = len as f64;
    let sum_x: f64 = x.iter().sum();
    let sum_y: f64 = y.iter().sum();
    let acc: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| ((n * xi - sum_x) / n) * ((n * yi - sum_y) / n))
        .sum();
    Ok(acc / (n - 1.0))
}

/// Sample Pearson correlation, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EstimatorError> {
    let cov = sample_covariance(x, y)?;
    let var_x = sample_covariance(x, x)?;
    let var_y = sample_covariance(y, y)?;
    if var_x == 0.0 || var_y == 0.0 {
        return Err(EstimatorError::DegenerateVariance);
    }
    Ok((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Drop samples whose per-path delay exceeds `multiplier` times the path mean.
///
/// When the caller knows the true one-way delays (simulator context) the rule
/// runs on those. Otherwise each detrended half is shifted by its minimum to
/// obtain a non-negative pseudo-delay and the same rule runs on that; the
/// report records which basis fired. A sample flagged on either path is
/// removed from both halves to keep the indices aligned.
pub fn filter_outliers(
    series: &RelativeSeries,
    true_delays: Option<(&[i64], &[i64])>,
    multiplier: f64,
) -> Result<(RelativeSeries, FilterReport), EstimatorError> {
    if multiplier <= 1.0 {
        return Err(EstimatorError::InvalidMultiplier(multiplier));
    }
    let n = series.len();
    let (delays_a, delays_b, basis) = match true_delays {
        Some((d_a, d_b)) => {
            if d_a.len() != n {
                return Err(EstimatorError::LengthMismatch {
                    left: d_a.len(),
                    right: n,
                });
            }
            if d_b.len() != n {
                return Err(EstimatorError::LengthMismatch {
                    left: d_b.len(),
                    right: n,
                });
            }
            (
                d_a.iter().map(|&d| d as f64).collect::<Vec<_>>(),
                d_b.iter().map(|&d| d as f64).collect::<Vec<_>>(),
                FilterBasis::TrueDelays,
            )
        }
        None => {
            let pseudo = |values: &[i64]| {
                let min = *values.iter().min().expect("series is non-empty");
                values.iter().map(|&v| (v - min) as f64).collect::<Vec<_>>()
            };
            (
                pseudo(&series.values_a),
                pseudo(&series.values_b),
                FilterBasis::PseudoDelays,
            )
        }
    };

    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let threshold_a = multiplier * mean(&delays_a);
    let threshold_b = multiplier * mean(&delays_b);

    let mut removed = BTreeSet::new();
    let mut kept_a = Vec::with_capacity(n);
    let mut kept_b = Vec::with_capacity(n);
    for i in 0..n {
        if delays_a[i] > threshold_a || delays_b[i] > threshold_b {
            removed.insert(i + 1);
        } else {
            kept_a.push(series.values_a[i]);
            kept_b.push(series.values_b[i]);
        }
    }
    if kept_a.len() < 2 {
        return Err(EstimatorError::TooFewSamples(kept_a.len()));
    }
    let filtered = RelativeSeries::new(series.pair_id, kept_a, kept_b)?;
    Ok((
        filtered,
        FilterReport {
            removed_indices: removed,
            threshold_a,
            threshold_b,
            multiplier,
            basis,
        },
    ))
}

fn covariance_of(series: &RelativeSeries) -> Result<f64, EstimatorError> {
    let x: Vec<f64> = series.values_a.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = series.values_b.iter().map(|&v| v as f64).collect();
    sample_covariance(&x, &y)
}

/// The full estimation pipeline over one record: detrend, optionally filter
/// outliers (pseudo-delay rule, since a record carries no true delays), then
/// take the sample covariance of the two halves.
pub fn dce_estimate(
    record: &TimingRecord,
    filter_multiplier: Option<f64>,
) -> Result<CovarianceEstimate, EstimatorError> {
    let series = timing::build_relative_series(record)?;
    let series = match filter_multiplier {
        Some(m) => filter_outliers(&series, None, m)?.0,
        None => series,
    };
    Ok(CovarianceEstimate {
        pair_id: record.pair_id,
        value: covariance_of(&series)?,
        n_used: series.len(),
        mode: record.mode(),
    })
}

/// Pearson form of the same pipeline.
pub fn dce_pearson(
    record: &TimingRecord,
    filter_multiplier: Option<f64>,
) -> Result<CorrelationEstimate, EstimatorError> {
    let series = timing::build_relative_series(record)?;
    let series = match filter_multiplier {
        Some(m) => filter_outliers(&series, None, m)?.0,
        None => series,
    };
    let x: Vec<f64> = series.values_a.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = series.values_b.iter().map(|&v| v as f64).collect();
    Ok(CorrelationEstimate {
        pair_id: record.pair_id,
        value: pearson(&x, &y)?,
        n_used: series.len(),
    })
}

/// Sample covariance of true one-way delays, for ground-truth comparisons
/// where the simulator exposes them.
pub fn direct_covariance(d_a: &[i64], d_b: &[i64]) -> Result<f64, EstimatorError> {
    let x: Vec<f64> = d_a.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = d_b.iter().map(|&v| v as f64).collect();
    sample_covariance(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::id::NodeId;
    use crate::timing::Timestamp;

    fn pair() -> PairId {
        PairId::new(NodeId(0), NodeId(1)).unwrap()
    }

    #[test]
    fn covariance_hand_value() {
        let cov = sample_covariance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(cov, 2.0);
    }

    #[test]
    fn covariance_with_constant_series_is_zero() {
        let cov = sample_covariance(&[4.0, -1.0, 7.5, 2.0], &[3.0, 3.0, 3.0, 3.0]).unwrap();
        assert_eq!(cov, 0.0);
    }

    #[test]
    fn covariance_with_self_is_variance() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(sample_covariance(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn covariance_errors() {
        assert!(matches!(
            sample_covariance(&[1.0], &[1.0, 2.0]).unwrap_err(),
            EstimatorError::LengthMismatch { .. }
        ));
        assert_eq!(
            sample_covariance(&[1.0], &[1.0]).unwrap_err(),
            EstimatorError::TooFewSamples(1)
        );
    }

    #[test]
    fn covariance_is_symmetric() {
        let x = [3.0, -1.0, 4.5, 0.25];
        let y = [9.0, 2.0, -3.5, 1.0];
        assert_eq!(
            sample_covariance(&x, &y).unwrap(),
            sample_covariance(&y, &x).unwrap()
        );
    }

    #[test]
    fn pearson_perfect_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let pos: Vec<f64> = x.iter().map(|&v| 3.0 * v + 7.0).collect();
        let neg: Vec<f64> = x.iter().map(|&v| -v).collect();
        assert_eq!(pearson(&x, &pos).unwrap(), 1.0);
        assert_eq!(pearson(&x, &neg).unwrap(), -1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
    }

    #[test]
    fn pearson_degenerate_variance() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[5.0, 5.0]).unwrap_err(),
            EstimatorError::DegenerateVariance
        );
    }

    fn series(values_a: Vec<i64>, values_b: Vec<i64>) -> RelativeSeries {
        RelativeSeries::new(pair(), values_a, values_b).unwrap()
    }

    #[test]
    fn filter_keeps_everything_when_delays_equal() {
        let s = series(vec![1, 2, 3], vec![4, 5, 6]);
        let delays = [700_000i64, 700_000, 700_000];
        let (kept, report) = filter_outliers(&s, Some((&delays, &delays)), 2.0).unwrap();
        assert_eq!(kept, s);
        assert!(report.removed_indices.is_empty());
        assert_eq!(report.basis, FilterBasis::TrueDelays);
    }

    #[test]
    fn filter_removes_spike_beyond_twice_mean() {
        // Delays in ms: [1, 1, 1, 1, 10]; mean 2.8, threshold 5.6, so only
        // the 10 ms sample at index 5 goes.
        let ms = 1_000_000i64;
        let d_a = [ms, ms, ms, ms, 10 * ms];
        let d_b = [ms; 5];
        let s = series(vec![0, 0, 0, 0, 9 * ms], vec![0; 5]);
        let (kept, report) = filter_outliers(&s, Some((&d_a, &d_b)), 2.0).unwrap();
        assert_eq!(report.removed_indices, BTreeSet::from([5]));
        assert_eq!(kept.len(), 4);
        assert_eq!(report.threshold_a, 2.0 * 2.8 * ms as f64);
    }

    #[test]
    fn filter_deletion_is_paired() {
        // Outlier only on path b still removes the sample from both halves.
        let d_a = [100i64, 100, 100, 100];
        let d_b = [100i64, 100, 900, 100];
        let s = series(vec![1, 2, 3, 4], vec![5, 6, 7, 8]);
        let (kept, report) = filter_outliers(&s, Some((&d_a, &d_b)), 2.0).unwrap();
        assert_eq!(report.removed_indices, BTreeSet::from([3]));
        assert_eq!(kept.values_a, vec![1, 2, 4]);
        assert_eq!(kept.values_b, vec![5, 6, 8]);
    }

    #[test]
    fn filter_pseudo_basis_without_truth() {
        let s = series(vec![0, 10, 0, 0, 2_000], vec![0, 0, 0, 0, 0]);
        let (kept, report) = filter_outliers(&s, None, 2.0).unwrap();
        assert_eq!(report.basis, FilterBasis::PseudoDelays);
        assert_eq!(report.removed_indices, BTreeSet::from([5]));
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn filter_rejects_multiplier_at_or_below_one() {
        let s = series(vec![1, 2], vec![3, 4]);
        assert!(matches!(
            filter_outliers(&s, None, 1.0).unwrap_err(),
            EstimatorError::InvalidMultiplier(_)
        ));
    }

    fn record_from_delays(d_a: &[i64], d_b: &[i64], delta: i64) -> TimingRecord {
        let sender: Vec<Timestamp> = (0..d_a.len()).map(|k| Timestamp(k as i64 * delta)).collect();
        let arrivals_a: Vec<Timestamp> = sender.iter().zip(d_a).map(|(&t, &d)| t + d).collect();
        let arrivals_b: Vec<Timestamp> = sender.iter().zip(d_b).map(|(&t, &d)| t + d).collect();
        TimingRecord::new(pair(), sender, arrivals_a, arrivals_b, Some(delta)).unwrap()
    }

    #[test]
    fn estimate_zero_on_jitterless_network() {
        let record = record_from_delays(&[500; 6], &[900; 6], 1_000);
        let est = dce_estimate(&record, None).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.n_used, 5);
        assert_eq!(est.mode, DetrendMode::Constant);
    }

    /// Five-row hand table: the estimate must equal the covariance of the
    /// baseline-relative delay columns computed by a straight transcription
    /// of the defining formula.
    #[test]
    fn estimate_matches_bruteforce_table() {
        let d_a = [400i64, 900, 250, 1_100, 400, 700];
        let d_b = [300i64, 300, 800, 150, 900, 350];
        let record = record_from_delays(&d_a, &d_b, 10_000);
        let est = dce_estimate(&record, None).unwrap();

        // Independent oracle over the d(k) - d(0) columns, k = 1..n.
        let col_a: Vec<f64> = d_a[1..].iter().map(|&d| (d - d_a[0]) as f64).collect();
        let col_b: Vec<f64> = d_b[1..].iter().map(|&d| (d - d_b[0]) as f64).collect();
        let n = col_a.len() as f64;
        let ma = col_a.iter().sum::<f64>() / n;
        let mb = col_b.iter().sum::<f64>() / n;
        let mut acc = 0.0;
        for i in 0..col_a.len() {
            acc += (col_a[i] - ma) * (col_b[i] - mb);
        }
        let oracle = acc / (n - 1.0);
        assert!((est.value - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
    }

    #[test]
    fn estimate_equals_direct_covariance_unfiltered() {
        let d_a = [520i64, 780, 410, 660, 905];
        let d_b = [130i64, 355, 240, 510, 95];
        let record = record_from_delays(&d_a, &d_b, 5_000);
        let est = dce_estimate(&record, None).unwrap();
        let direct = direct_covariance(&d_a[1..], &d_b[1..]).unwrap();
        assert!((est.value - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn direct_covariance_constant_input() {
        assert_eq!(direct_covariance(&[1, 5, 9], &[4, 4, 4]).unwrap(), 0.0);
    }

    #[test]
    fn estimate_too_few_after_filter() {
        // One dominant spike in a 3-sample series leaves 2 samples, still
        // fine; a 2-sample series losing one must fail.
        let record = record_from_delays(&[100, 100, 5_000], &[100, 100, 100], 1_000);
        assert!(matches!(
            dce_estimate(&record, Some(1.5)),
            Err(EstimatorError::TooFewSamples(_))
        ));
    }

    #[test]
    fn pearson_estimate_clamped() {
        let d_a = [400i64, 900, 250, 1_100, 400, 700];
        let d_b = [300i64, 300, 800, 150, 900, 350];
        let record = record_from_delays(&d_a, &d_b, 10_000);
        let est = dce_pearson(&record, None).unwrap();
        assert!(est.value.abs() <= 1.0);
    }
}
