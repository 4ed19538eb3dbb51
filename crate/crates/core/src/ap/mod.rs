//! Average precision over ranked bins of detections.
//!
//! Detections are grouped into bins of (true, false) counts. A ranking of the
//! bins induces a precision/recall curve whose area, taken as a Riemann sum
//! with one rectangle per bin, is the AP. When all bins hold the same number
//! of true detections the sum reduces to the mean precision over equally
//! spaced recall levels.

mod bins;
mod exact;
mod oracle;

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

pub use bins::{
    build_bins, build_bins_from, discretize_confidence, Bin, BinGrid, ConfidenceBinning,
    ContextMode, ContextSlot, Interval, ScoredOutcome,
};
pub use exact::exact_ap;
pub use oracle::{permutation_oracle, OracleOutcome, MAX_ORACLE_BINS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApError {
    #[error("category has no matched detections")]
    NoMatchedDetections,
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("bins hold unequal true counts; use the general Riemann-sum AP")]
    UnequalTrueCounts,
    #[error("context value of detection {index} is not binary")]
    NonBinaryContext { index: usize },
    #[error("context value of detection {index} is not finite")]
    NonFiniteContext { index: usize },
    #[error("{total} true detections exceed {pos} positives")]
    TooManyTrue { total: u64, pos: u64 },
    #[error("oracle limited to {limit} bins (got {bins})")]
    TooManyBins { bins: usize, limit: usize },
}

/// True and false detection counts of one bin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BinCounts {
    pub t: u64,
    pub f: u64,
}

impl BinCounts {
    pub const fn new(t: u64, f: u64) -> Self {
        Self { t, f }
    }

    /// Re-scoring value `t / f`; infinite when the bin holds no false detection.
    pub fn score(&self) -> f64 {
        if self.f == 0 {
            f64::INFINITY
        } else {
            self.t as f64 / self.f as f64
        }
    }
}

/// AP as a percentage in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ApValue(f64);

impl ApValue {
    pub fn from_fraction(x: f64) -> Self {
        Self((x * 100.0).clamp(0.0, 100.0))
    }

    pub fn from_percent(p: f64) -> Self {
        Self(p.clamp(0.0, 100.0))
    }

    pub fn percent(self) -> f64 {
        self.0
    }
}

impl fmt::Display for ApValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.0)
    }
}

impl Serialize for ApValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

/// Orders bins by decreasing `t / f` without floating point division.
/// Bins with `f = 0` come first, by decreasing `t`; remaining ties keep the
/// lower position first.
pub fn heuristic_order(counts: &[BinCounts]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (counts[a], counts[b]);
        let by_score = match (ca.f == 0, cb.f == 0) {
            (true, true) => cb.t.cmp(&ca.t),
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            // t_a / f_a > t_b / f_b  <=>  t_a f_b > t_b f_a
            (false, false) => {
                (u128::from(cb.t) * u128::from(ca.f)).cmp(&(u128::from(ca.t) * u128::from(cb.f)))
            }
        };
        by_score.then(a.cmp(&b))
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub recall: f64,
    pub precision: f64,
    pub delta_recall: f64,
}

/// A ranking of the bins of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedBinSequence {
    /// Bin positions in rank order.
    pub ordering: Vec<usize>,
    /// `t / f` per bin, in grid order.
    pub scores: Vec<f64>,
}

impl RankedBinSequence {
    pub fn with_ordering(grid: &BinGrid, ordering: Vec<usize>) -> Self {
        Self {
            ordering,
            scores: grid.bins.iter().map(|b| b.counts().score()).collect(),
        }
    }

    pub fn ranked_counts(&self, grid: &BinGrid) -> Vec<BinCounts> {
        self.ordering
            .iter()
            .map(|&i| grid.bins[i].counts())
            .collect()
    }

    pub fn curve(&self, grid: &BinGrid) -> Vec<CurvePoint> {
        curve(&self.ranked_counts(grid), grid.pos)
    }

    pub fn ap(&self, grid: &BinGrid) -> ApValue {
        ap_general(&self.ranked_counts(grid), grid.pos)
    }
}

/// Ranks bins by decreasing `t / f`.
pub fn heuristic_rank(grid: &BinGrid) -> RankedBinSequence {
    RankedBinSequence::with_ordering(grid, heuristic_order(&grid.counts()))
}

pub fn curve(ranked: &[BinCounts], pos: u64) -> Vec<CurvePoint> {
    let mut tp = 0u64;
    let mut fp = 0u64;
    ranked
        .iter()
        .map(|c| {
            tp += c.t;
            fp += c.f;
            CurvePoint {
                recall: tp as f64 / pos as f64,
                precision: if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                },
                delta_recall: c.t as f64 / pos as f64,
            }
        })
        .collect()
}

/// AP as a fraction in `[0, 1]` for bins given in rank order.
pub fn ap_fraction(ranked: &[BinCounts], pos: u64) -> f64 {
    if pos == 0 {
        return 0.0;
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut sum = 0.0;
    for c in ranked {
        tp += c.t;
        fp += c.f;
        if c.t > 0 {
            sum += c.t as f64 * tp as f64 / (tp + fp) as f64;
        }
    }
    sum / pos as f64
}

/// Riemann sum `sum_i p_i * dr_i` over bins in rank order.
pub fn ap_general(ranked: &[BinCounts], pos: u64) -> ApValue {
    ApValue::from_fraction(ap_fraction(ranked, pos))
}

/// Mean precision over `m = POS / t` equally spaced recall levels, for bins
/// that all hold the same `t`. Levels beyond the last bin count as zero.
pub fn ap_equal_bins(ranked: &[BinCounts], pos: u64) -> Result<ApValue, ApError> {
    let Some(first) = ranked.first() else {
        return Ok(ApValue::default());
    };
    let t = first.t;
    if t == 0 || ranked.iter().any(|c| c.t != t) {
        return Err(ApError::UnequalTrueCounts);
    }
    let m = pos as f64 / t as f64;
    let mut false_so_far = 0u64;
    let mut sum = 0.0;
    for (i, c) in ranked.iter().enumerate() {
        false_so_far += c.f;
        let it = (i as u64 + 1) * t;
        sum += it as f64 / (it + false_so_far) as f64;
    }
    Ok(ApValue::from_fraction(sum / m))
}

/// Per-detection AP: detections sorted by decreasing confidence (ties keep
/// input order), one recall step per true detection.
pub fn ap_naive(items: &[ScoredOutcome], pos: u64) -> ApValue {
    if pos == 0 {
        return ApValue::default();
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].confidence.total_cmp(&items[a].confidence));
    let mut tp = 0u64;
    let mut seen = 0u64;
    let mut sum = 0.0;
    for i in order {
        seen += 1;
        if items[i].is_true {
            tp += 1;
            sum += tp as f64 / seen as f64;
        }
    }
    ApValue::from_fraction(sum / pos as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(t: &[u64], f: &[u64]) -> Vec<BinCounts> {
        t.iter()
            .zip(f)
            .map(|(&t, &f)| BinCounts::new(t, f))
            .collect()
    }

    /// Expands unit-`t` bins into a detection list with each bin's false
    /// detections ranked just above its true one.
    fn expand_unit_bins(ranked: &[BinCounts]) -> Vec<ScoredOutcome> {
        let mut out = Vec::new();
        let mut score = 1.0;
        for c in ranked {
            assert_eq!(c.t, 1);
            for _ in 0..c.f {
                out.push(ScoredOutcome::new(score, false));
                score -= 1e-3;
            }
            out.push(ScoredOutcome::new(score, true));
            score -= 1e-3;
        }
        out
    }

    #[test]
    fn counterexample_scores_and_orders() {
        let c = counts(&[277, 371, 69], &[16, 955, 178]);
        let order = heuristic_order(&c);
        assert_eq!(order, vec![0, 1, 2]);
        let ranked: Vec<_> = order.iter().map(|&i| c[i]).collect();
        assert!((ap_general(&ranked, 717).percent() - 60.93141469906689).abs() < 1e-9);
        let swapped = vec![c[0], c[2], c[1]];
        assert!((ap_general(&swapped, 717).percent() - 62.57175643334046).abs() < 1e-9);
    }

    #[test]
    fn unit_bins_agree_with_detection_walk() {
        for f in [[0u64, 1], [2, 0], [3, 5]] {
            let c = counts(&[1, 1], &f);
            let naive = ap_naive(&expand_unit_bins(&c), 2);
            assert!((ap_equal_bins(&c, 2).unwrap().percent() - naive.percent()).abs() < 1e-9);
        }
    }

    #[test]
    fn heuristic_order_puts_false_free_bins_first() {
        let c = counts(&[1, 1, 1], &[2, 0, 1]);
        assert_eq!(heuristic_order(&c), vec![1, 2, 0]);
        assert_eq!(heuristic_order(&counts(&[3], &[4])), vec![0]);
        let c = counts(&[1, 5, 2], &[0, 0, 0]);
        assert_eq!(heuristic_order(&c), vec![1, 2, 0]);
    }

    #[test]
    fn equal_bin_values() {
        // (1/2)(1/1 + 2/3)
        let ap = ap_equal_bins(&counts(&[1, 1], &[0, 1]), 2).unwrap();
        assert!((ap.percent() - 250.0 / 3.0).abs() < 1e-9);
        // (1/3)(2/2 + 4/6 + 6/14)
        let ap = ap_equal_bins(&counts(&[2, 2, 2], &[0, 2, 6]), 6).unwrap();
        assert!((ap.percent() - 100.0 * (1.0 + 4.0 / 6.0 + 6.0 / 14.0) / 3.0).abs() < 1e-9);
        assert!((ap.percent() - 69.84126984126983).abs() < 1e-9);
        let perfect = ap_equal_bins(&counts(&[3, 3], &[0, 0]), 6).unwrap();
        assert_eq!(perfect.percent(), 100.0);
        assert_eq!(
            ap_equal_bins(&counts(&[2, 1], &[0, 0]), 3),
            Err(ApError::UnequalTrueCounts)
        );
    }

    #[test]
    fn missed_objects_cap_equal_bin_ap() {
        // two of four recall levels reachable
        let ap = ap_equal_bins(&counts(&[1, 1], &[0, 0]), 4).unwrap();
        assert!((ap.percent() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn riemann_matches_equal_bins() {
        let c = counts(&[2, 2, 2], &[0, 2, 6]);
        assert_eq!(ap_general(&c, 6), ap_equal_bins(&c, 6).unwrap());
        assert_eq!(ap_general(&counts(&[5], &[0]), 5).percent(), 100.0);
    }

    #[test]
    fn naive_examples() {
        let tf = [
            ScoredOutcome::new(0.9, true),
            ScoredOutcome::new(0.5, false),
        ];
        assert_eq!(ap_naive(&tf, 1).percent(), 100.0);
        let ft = [
            ScoredOutcome::new(0.9, false),
            ScoredOutcome::new(0.5, true),
        ];
        assert_eq!(ap_naive(&ft, 1).percent(), 50.0);
        let ttft = [
            ScoredOutcome::new(0.9, true),
            ScoredOutcome::new(0.8, true),
            ScoredOutcome::new(0.7, false),
            ScoredOutcome::new(0.6, true),
        ];
        assert!((ap_naive(&ttft, 3).percent() - 100.0 * 2.75 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_true_bins_only_inflate_denominators() {
        let with_empty = counts(&[0, 2], &[3, 0]);
        // 2/2 recall at precision 2/5
        assert!((ap_general(&with_empty, 2).percent() - 40.0).abs() < 1e-12);
        let pts = curve(&with_empty, 2);
        assert_eq!(pts[0].delta_recall, 0.0);
        assert_eq!(pts[0].precision, 0.0);
    }

    #[test]
    fn display_rounds_to_one_decimal() {
        assert_eq!(ApValue::from_percent(60.93141).to_string(), "60.9");
    }
}
