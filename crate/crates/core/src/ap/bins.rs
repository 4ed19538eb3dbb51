//! Equal-positive discretization of the confidence and context axes.

use std::cmp::Ordering;

use super::{ApError, BinCounts};
use crate::relation::ContextValue;

/// Confidence and truth of one detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub confidence: f64,
    pub is_true: bool,
}

impl ScoredOutcome {
    pub const fn new(confidence: f64, is_true: bool) -> Self {
        Self {
            confidence,
            is_true,
        }
    }
}

/// Half-open value interval `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub const FULL: Interval = Interval {
        low: f64::NEG_INFINITY,
        high: f64::INFINITY,
    };

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x < self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContextSlot {
    /// Bin built without any context split.
    Unsplit,
    Binary(bool),
    Range(Interval),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContextMode {
    Binary,
    /// `m2` equal-positive context bins per confidence bin.
    Real {
        m2: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub t: u64,
    pub f: u64,
    pub confidence_range: Interval,
    pub context_slot: ContextSlot,
    pub index: usize,
}

impl Bin {
    pub fn counts(&self) -> BinCounts {
        BinCounts::new(self.t, self.f)
    }
}

/// Discretized confidence x context space of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    /// Lowest confidence of each confidence bin, strictly decreasing.
    pub confidence_thresholds: Vec<f64>,
    pub mode: ContextMode,
    pub bins: Vec<Bin>,
    /// Ground-truth objects of the category.
    pub pos: u64,
    pub requested_m1: usize,
    /// Fewer bins than requested on some axis because of ties or few positives.
    pub degraded: bool,
    /// False detections below the lowest confident true detection; they can
    /// only ever rank last and are left out of the grid.
    pub below_range: u64,
}

impl BinGrid {
    /// Grid from raw per-bin counts, as used by fixtures. Empty bins are dropped.
    pub fn from_counts(counts: &[BinCounts], pos: u64) -> Result<Self, ApError> {
        let total: u64 = counts.iter().map(|c| c.t).sum();
        if total > pos {
            return Err(ApError::TooManyTrue { total, pos });
        }
        let bins = counts
            .iter()
            .filter(|c| c.t + c.f > 0)
            .enumerate()
            .map(|(index, c)| Bin {
                t: c.t,
                f: c.f,
                confidence_range: Interval::FULL,
                context_slot: ContextSlot::Unsplit,
                index,
            })
            .collect::<Vec<_>>();
        Ok(Self {
            confidence_thresholds: Vec::new(),
            mode: ContextMode::Binary,
            requested_m1: bins.len(),
            bins,
            pos,
            degraded: false,
            below_range: 0,
        })
    }

    pub fn counts(&self) -> Vec<BinCounts> {
        self.bins.iter().map(Bin::counts).collect()
    }

    pub fn total_true(&self) -> u64 {
        self.bins.iter().map(|b| b.t).sum()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Result of splitting the confidence axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBinning {
    pub thresholds: Vec<f64>,
    /// Confidence bin of each input item; `None` below the lowest threshold.
    pub assignment: Vec<Option<usize>>,
    pub true_counts: Vec<u64>,
    pub requested: usize,
}

impl ConfidenceBinning {
    pub fn bin_count(&self) -> usize {
        self.thresholds.len()
    }

    pub fn degraded(&self) -> bool {
        self.bin_count() < self.requested
    }

    pub fn range(&self, bin: usize) -> Interval {
        Interval {
            low: self.thresholds[bin],
            high: if bin == 0 {
                f64::INFINITY
            } else {
                self.thresholds[bin - 1]
            },
        }
    }
}

struct Split {
    groups: Vec<Vec<usize>>,
    thresholds: Vec<f64>,
    true_counts: Vec<u64>,
    tail: Vec<usize>,
}

/// Splits `members` (indices into `values`/`truth`) by decreasing value into
/// at most `m` groups of balanced true counts. Extra positives go to the
/// highest-valued groups; equal values never straddle a boundary.
fn split_equal_positives(values: &[f64], truth: &[bool], members: &[usize], m: usize) -> Split {
    let mut sorted = members.to_vec();
    sorted.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal));

    let total = sorted.iter().filter(|&&i| truth[i]).count() as u64;
    let m64 = m as u64;
    let (base, rem) = (total / m64, total % m64);
    let boundaries: Vec<u64> = (0..m64)
        .scan(0u64, |acc, k| {
            *acc += base + u64::from(k < rem);
            Some(*acc)
        })
        .collect();

    let mut split = Split {
        groups: Vec::new(),
        thresholds: Vec::new(),
        true_counts: Vec::new(),
        tail: Vec::new(),
    };
    let mut k = 0;
    let mut cum = 0u64;
    let mut current: Vec<usize> = Vec::new();
    let mut current_true = 0u64;
    let mut pos = 0;
    while pos < sorted.len() {
        let v = values[sorted[pos]];
        let mut end = pos;
        while end < sorted.len() && values[sorted[end]] == v {
            end += 1;
        }
        let group = &sorted[pos..end];
        pos = end;
        if k == m {
            split.tail.extend_from_slice(group);
            continue;
        }
        let t = group.iter().filter(|&&i| truth[i]).count() as u64;
        current.extend_from_slice(group);
        current_true += t;
        cum += t;
        if t > 0 && cum >= boundaries[k] {
            split.groups.push(std::mem::take(&mut current));
            split.thresholds.push(v);
            split.true_counts.push(current_true);
            current_true = 0;
            while k < m && boundaries[k] <= cum {
                k += 1;
            }
        }
    }
    split.tail.extend(current);
    split
}

/// Confidence thresholds holding equal numbers of true detections per bin.
pub fn discretize_confidence(
    items: &[ScoredOutcome],
    m1: usize,
) -> Result<ConfidenceBinning, ApError> {
    if m1 == 0 {
        return Err(ApError::ZeroBins);
    }
    if !items.iter().any(|i| i.is_true) {
        return Err(ApError::NoMatchedDetections);
    }
    let values: Vec<f64> = items.iter().map(|i| i.confidence).collect();
    let truth: Vec<bool> = items.iter().map(|i| i.is_true).collect();
    let members: Vec<usize> = (0..items.len()).collect();
    let split = split_equal_positives(&values, &truth, &members, m1);

    let mut assignment = vec![None; items.len()];
    for (b, group) in split.groups.iter().enumerate() {
        for &i in group {
            assignment[i] = Some(b);
        }
    }
    Ok(ConfidenceBinning {
        thresholds: split.thresholds,
        assignment,
        true_counts: split.true_counts,
        requested: m1,
    })
}

/// Discretizes confidence into `m1` bins and context within each.
pub fn build_bins(
    items: &[ScoredOutcome],
    contexts: &[ContextValue],
    m1: usize,
    mode: ContextMode,
    pos: u64,
) -> Result<BinGrid, ApError> {
    let binning = discretize_confidence(items, m1)?;
    build_bins_from(&binning, items, contexts, mode, pos)
}

/// Context split over an existing confidence binning.
pub fn build_bins_from(
    binning: &ConfidenceBinning,
    items: &[ScoredOutcome],
    contexts: &[ContextValue],
    mode: ContextMode,
    pos: u64,
) -> Result<BinGrid, ApError> {
    assert_eq!(
        items.len(),
        contexts.len(),
        "one context value per detection"
    );
    let total: u64 = binning.true_counts.iter().sum();
    if total > pos {
        return Err(ApError::TooManyTrue { total, pos });
    }
    let below_range = binning.assignment.iter().filter(|a| a.is_none()).count() as u64;
    let nbins = binning.bin_count();
    let mut bins = Vec::new();
    let mut degraded = binning.degraded();

    match mode {
        ContextMode::Binary => {
            let mut counts = vec![[BinCounts::default(); 2]; nbins];
            for (i, (item, ctx)) in items.iter().zip(contexts).enumerate() {
                let Some(b) = binning.assignment[i] else {
                    continue;
                };
                let slot = ctx
                    .as_bool()
                    .ok_or(ApError::NonBinaryContext { index: i })?;
                let c = &mut counts[b][usize::from(slot)];
                if item.is_true {
                    c.t += 1;
                } else {
                    c.f += 1;
                }
            }
            for (b, pair) in counts.iter().enumerate() {
                for (slot, c) in pair.iter().enumerate() {
                    if c.t + c.f == 0 {
                        continue;
                    }
                    bins.push(Bin {
                        t: c.t,
                        f: c.f,
                        confidence_range: binning.range(b),
                        context_slot: ContextSlot::Binary(slot == 1),
                        index: bins.len(),
                    });
                }
            }
        }
        ContextMode::Real { m2 } => {
            if m2 == 0 {
                return Err(ApError::ZeroBins);
            }
            let values: Vec<f64> = contexts.iter().map(|c| c.as_f64()).collect();
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(ApError::NonFiniteContext { index });
            }
            let truth: Vec<bool> = items.iter().map(|i| i.is_true).collect();
            for b in 0..nbins {
                let members: Vec<usize> = (0..items.len())
                    .filter(|&i| binning.assignment[i] == Some(b))
                    .collect();
                let mut split = split_equal_positives(&values, &truth, &members, m2);
                degraded |= split.groups.len() < m2;
                if let Some(last) = split.groups.last_mut() {
                    last.append(&mut split.tail);
                }
                let n = split.groups.len();
                for (j, group) in split.groups.iter().enumerate() {
                    let t = group.iter().filter(|&&i| truth[i]).count() as u64;
                    let f = group.len() as u64 - t;
                    let range = Interval {
                        low: if j + 1 == n {
                            f64::NEG_INFINITY
                        } else {
                            split.thresholds[j]
                        },
                        high: if j == 0 {
                            f64::INFINITY
                        } else {
                            split.thresholds[j - 1]
                        },
                    };
                    bins.push(Bin {
                        t,
                        f,
                        confidence_range: binning.range(b),
                        context_slot: ContextSlot::Range(range),
                        index: bins.len(),
                    });
                }
            }
        }
    }

    Ok(BinGrid {
        confidence_thresholds: binning.thresholds.clone(),
        mode,
        bins,
        pos,
        requested_m1: binning.requested,
        degraded,
        below_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(spec: &[(f64, bool)]) -> Vec<ScoredOutcome> {
        spec.iter()
            .map(|&(c, t)| ScoredOutcome::new(c, t))
            .collect()
    }

    #[test]
    fn equal_bins_of_two() {
        let items: Vec<_> = (0..10)
            .map(|i| ScoredOutcome::new(1.0 - i as f64 * 0.05, true))
            .collect();
        let b = discretize_confidence(&items, 5).unwrap();
        assert_eq!(b.true_counts, vec![2; 5]);
        assert!(!b.degraded());
    }

    #[test]
    fn remainder_goes_to_top_bins() {
        let items: Vec<_> = (0..11)
            .map(|i| ScoredOutcome::new(1.0 - i as f64 * 0.05, true))
            .collect();
        let b = discretize_confidence(&items, 5).unwrap();
        assert_eq!(b.true_counts, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn tied_positives_degrade() {
        let items = outcomes(&[(0.7, true), (0.7, true), (0.7, true), (0.2, false)]);
        let b = discretize_confidence(&items, 2).unwrap();
        assert_eq!(b.bin_count(), 1);
        assert!(b.degraded());
        assert_eq!(b.assignment, vec![Some(0), Some(0), Some(0), None]);
    }

    #[test]
    fn no_true_detections_is_an_error() {
        let items = outcomes(&[(0.7, false)]);
        let err = discretize_confidence(&items, 2).unwrap_err();
        assert_eq!(err, ApError::NoMatchedDetections);
        assert!(err.to_string().contains("no matched detections"));
    }

    #[test]
    fn false_detections_join_the_next_lower_bin() {
        // T F T F F with m1 = 2 -> [T], [F T], tail [F F]
        let items = outcomes(&[
            (0.9, true),
            (0.8, false),
            (0.7, true),
            (0.6, false),
            (0.5, false),
        ]);
        let b = discretize_confidence(&items, 2).unwrap();
        assert_eq!(b.assignment, vec![Some(0), Some(1), Some(1), None, None]);
        assert_eq!(b.thresholds, vec![0.9, 0.7]);
        assert!(b.range(1).contains(0.8));
        assert!(!b.range(1).contains(0.9));
    }

    #[test]
    fn binary_split() {
        let items = outcomes(&[(0.9, true), (0.8, false), (0.7, true), (0.6, false)]);
        let ctx: Vec<ContextValue> = [true, false, true, true].map(ContextValue::Binary).to_vec();
        let g = build_bins(&items, &ctx, 2, ContextMode::Binary, 2).unwrap();
        let counts: Vec<_> = g.bins.iter().map(|b| (b.t, b.f, b.context_slot)).collect();
        assert_eq!(
            counts,
            vec![
                (1, 0, ContextSlot::Binary(true)),
                (0, 1, ContextSlot::Binary(false)),
                (1, 0, ContextSlot::Binary(true)),
            ]
        );
        assert_eq!(g.below_range, 1);

        let zero = vec![ContextValue::Binary(false); 4];
        let g0 = build_bins(&items, &zero, 2, ContextMode::Binary, 2).unwrap();
        assert_eq!(
            g0.counts(),
            vec![BinCounts::new(1, 0), BinCounts::new(1, 1)]
        );
    }

    #[test]
    fn real_context_split() {
        // 8 positives with distinct confidences and contexts
        let items: Vec<_> = (0..8)
            .map(|i| ScoredOutcome::new(1.0 - i as f64 * 0.1, true))
            .collect();
        let ctx: Vec<_> = (0..8)
            .map(|i| ContextValue::Real((i * 37 % 11) as f64))
            .collect();
        let g = build_bins(&items, &ctx, 2, ContextMode::Real { m2: 2 }, 8).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.bins.iter().all(|b| b.t == 2));
        assert!(!g.degraded);
    }

    #[test]
    fn rejects_non_binary_context_in_binary_mode() {
        let items = outcomes(&[(0.9, true)]);
        let err = build_bins(
            &items,
            &[ContextValue::Real(0.5)],
            1,
            ContextMode::Binary,
            1,
        )
        .unwrap_err();
        assert_eq!(err, ApError::NonBinaryContext { index: 0 });
    }
}
