//! Exhaustive search over bin orderings.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{exact_ap, ApError, ApValue, BinCounts};

pub const MAX_ORACLE_BINS: usize = 10;

/// Float gap below which two orderings are compared exactly.
const EXACT_TIE_BAND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Bin positions in rank order.
    pub ordering: Vec<usize>,
    pub ap: ApValue,
    /// Orderings examined.
    pub evaluated: u64,
}

struct Best {
    ordering: Vec<usize>,
    value: f64,
    evaluated: u64,
}

/// `Greater` when `a` is a strictly better AP than `b`.
fn compare(counts: &[BinCounts], pos: u64, a: (&[usize], f64), b: (&[usize], f64)) -> Ordering {
    if (a.1 - b.1).abs() > EXACT_TIE_BAND {
        return a.1.total_cmp(&b.1);
    }
    let ranked = |o: &[usize]| o.iter().map(|&i| counts[i]).collect::<Vec<_>>();
    exact_ap(&ranked(a.0), pos).cmp(&exact_ap(&ranked(b.0), pos))
}

#[allow(clippy::too_many_arguments)]
fn descend(
    counts: &[BinCounts],
    pos: u64,
    prefix: &mut Vec<usize>,
    used: &mut [bool],
    tp: u64,
    fp: u64,
    acc: f64,
    best: &mut Best,
) {
    if prefix.len() == counts.len() {
        best.evaluated += 1;
        let value = acc / pos as f64;
        let better = best.ordering.is_empty()
            || compare(counts, pos, (prefix, value), (&best.ordering, best.value))
                == Ordering::Greater;
        if better {
            best.ordering.clone_from(prefix);
            best.value = value;
        }
        return;
    }
    for i in 0..counts.len() {
        if used[i] {
            continue;
        }
        let c = counts[i];
        let (tp2, fp2) = (tp + c.t, fp + c.f);
        let add = if c.t > 0 {
            c.t as f64 * tp2 as f64 / (tp2 + fp2) as f64
        } else {
            0.0
        };
        used[i] = true;
        prefix.push(i);
        descend(counts, pos, prefix, used, tp2, fp2, acc + add, best);
        prefix.pop();
        used[i] = false;
    }
}

/// Maximizes the Riemann-sum AP over every ordering of at most
/// [`MAX_ORACLE_BINS`] bins. Among maximal orderings the lexicographically
/// smallest is returned, independently of how the search is partitioned.
pub fn permutation_oracle(counts: &[BinCounts], pos: u64) -> Result<OracleOutcome, ApError> {
    let n = counts.len();
    if n > MAX_ORACLE_BINS {
        return Err(ApError::TooManyBins {
            bins: n,
            limit: MAX_ORACLE_BINS,
        });
    }
    if n == 0 {
        return Ok(OracleOutcome {
            ordering: Vec::new(),
            ap: ApValue::default(),
            evaluated: 1,
        });
    }

    // One partition per leading bin; each yields its lexicographically
    // smallest maximum, and partitions are reduced in leading-bin order.
    let partials: Vec<Best> = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut used = vec![false; n];
            used[first] = true;
            let c = counts[first];
            let acc = if c.t > 0 {
                c.t as f64 * c.t as f64 / (c.t + c.f) as f64
            } else {
                0.0
            };
            let mut best = Best {
                ordering: Vec::new(),
                value: f64::NEG_INFINITY,
                evaluated: 0,
            };
            let mut prefix = vec![first];
            descend(
                counts,
                pos,
                &mut prefix,
                &mut used,
                c.t,
                c.f,
                acc,
                &mut best,
            );
            best
        })
        .collect();

    let evaluated = partials.iter().map(|b| b.evaluated).sum();
    let best = partials
        .into_iter()
        .reduce(|acc, next| {
            if compare(
                counts,
                pos,
                (&next.ordering, next.value),
                (&acc.ordering, acc.value),
            ) == Ordering::Greater
            {
                next
            } else {
                acc
            }
        })
        .expect("at least one partition");

    Ok(OracleOutcome {
        ordering: best.ordering,
        ap: ApValue::from_fraction(best.value),
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ap::{ap_general, heuristic_order};

    #[test]
    fn counterexample_optimum() {
        let c = [
            BinCounts::new(277, 16),
            BinCounts::new(371, 955),
            BinCounts::new(69, 178),
        ];
        let out = permutation_oracle(&c, 717).unwrap();
        assert_eq!(out.ordering, vec![0, 2, 1]);
        assert!((out.ap.percent() - 62.57175643334046).abs() < 1e-9);
        assert_eq!(out.evaluated, 6);
    }

    #[test]
    fn equal_t_bins_match_heuristic() {
        let c = [
            BinCounts::new(1, 3),
            BinCounts::new(1, 0),
            BinCounts::new(1, 1),
        ];
        let out = permutation_oracle(&c, 3).unwrap();
        assert_eq!(out.ordering, vec![1, 2, 0]);
        assert_eq!(out.ordering, heuristic_order(&c));
    }

    #[test]
    fn single_bin_and_limits() {
        let c = [BinCounts::new(4, 2)];
        let out = permutation_oracle(&c, 5).unwrap();
        assert_eq!(out.ordering, vec![0]);
        assert_eq!(out.ap, ap_general(&c, 5));
        let many = vec![BinCounts::new(1, 1); 11];
        let err = permutation_oracle(&many, 11).unwrap_err();
        assert!(err.to_string().contains("oracle limited to 10 bins"));
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        // identical bins: every ordering ties
        let c = [BinCounts::new(2, 1); 4];
        assert_eq!(
            permutation_oracle(&c, 8).unwrap().ordering,
            vec![0, 1, 2, 3]
        );
        // false-free bins tie among themselves
        let c = [
            BinCounts::new(1, 5),
            BinCounts::new(2, 0),
            BinCounts::new(2, 0),
        ];
        assert_eq!(permutation_oracle(&c, 5).unwrap().ordering, vec![1, 2, 0]);
    }
}
