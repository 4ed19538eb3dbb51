use ctxbound::ap::{
    ap_equal_bins, ap_general, ap_naive, build_bins, exact_ap, heuristic_order, permutation_oracle,
    ContextMode, ScoredOutcome,
};
use ctxbound::{BinCounts, ContextValue};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn bins(max_bins: usize) -> impl Strategy<Value = Vec<BinCounts>> {
    prop::collection::vec((0u64..6, 0u64..8), 1..=max_bins)
        .prop_map(|v| v.into_iter().map(|(t, f)| BinCounts::new(t, f)).collect())
}

/// Expands ranked bins into single detections: each bin's false detections
/// first, then its true ones. A bin's AP term only counts precision after
/// the whole bin, which this order reproduces for the naive per-detection
/// sum exactly when every bin holds at most one true detection.
fn expand(ranked: &[BinCounts]) -> Vec<ScoredOutcome> {
    let mut out = Vec::new();
    let mut conf = 1.0e6;
    for b in ranked {
        for is_true in
            std::iter::repeat_n(false, b.f as usize).chain(std::iter::repeat_n(true, b.t as usize))
        {
            out.push(ScoredOutcome {
                confidence: conf,
                is_true,
            });
            conf -= 1.0;
        }
    }
    out
}

/// Independent rational evaluation of the area under the step curve.
fn area(ranked: &[BinCounts], pos: u64) -> BigRational {
    let r = |n: u64| BigRational::from_integer(n.into());
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut acc = BigRational::zero();
    for b in ranked {
        tp += b.t;
        fp += b.f;
        if b.t > 0 {
            acc += r(b.t) * r(tp) / r(tp + fp) / r(pos);
        }
    }
    acc
}

proptest! {
    #[test]
    fn ap_stays_in_unit_range(ranked in bins(8), extra in 0u64..5) {
        let pos = ranked.iter().map(|b| b.t).sum::<u64>() + extra;
        prop_assume!(pos > 0);
        let ap = ap_general(&ranked, pos).percent();
        prop_assert!((0.0..=100.0).contains(&ap));
        let exact = exact_ap(&ranked, pos);
        prop_assert!(exact >= BigRational::zero() && exact <= BigRational::one());
    }

    #[test]
    fn general_ap_matches_rational_area(ranked in bins(8), extra in 0u64..5) {
        let pos = ranked.iter().map(|b| b.t).sum::<u64>() + extra;
        prop_assume!(pos > 0);
        prop_assert_eq!(exact_ap(&ranked, pos), area(&ranked, pos));
    }

    #[test]
    fn unit_bins_agree_with_naive_ap(
        ranked in prop::collection::vec((0u64..=1, 0u64..5), 1..12),
        extra in 0u64..3,
    ) {
        let ranked: Vec<BinCounts> = ranked.into_iter().map(|(t, f)| BinCounts::new(t, f)).collect();
        let pos = ranked.iter().map(|b| b.t).sum::<u64>() + extra;
        prop_assume!(pos > 0);
        let general = ap_general(&ranked, pos).percent();
        let naive = ap_naive(&expand(&ranked), pos).percent();
        prop_assert!((general - naive).abs() < 1e-9, "{} vs {}", general, naive);
    }

    #[test]
    fn equal_true_bins_use_the_mean_precision_form(
        t in 1u64..6,
        fs in prop::collection::vec(0u64..10, 1..7),
    ) {
        let ranked: Vec<BinCounts> = fs.iter().map(|&f| BinCounts::new(t, f)).collect();
        let pos = t * ranked.len() as u64;
        let a = ap_equal_bins(&ranked, pos).unwrap().percent();
        let b = ap_general(&ranked, pos).percent();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn oracle_dominates_heuristic_and_every_order(counts in bins(6)) {
        let pos = counts.iter().map(|b| b.t).sum::<u64>().max(1);
        let oracle = permutation_oracle(&counts, pos).unwrap();
        let order = heuristic_order(&counts);
        let ranked: Vec<BinCounts> = order.iter().map(|&i| counts[i]).collect();
        let heuristic = exact_ap(&ranked, pos);
        let best: Vec<BinCounts> = oracle.ordering.iter().map(|&i| counts[i]).collect();
        let best = exact_ap(&best, pos);
        prop_assert!(best >= heuristic);
        // The reported ordering is no worse than any rotation of the input.
        for k in 0..counts.len() {
            let mut rot = counts.clone();
            rot.rotate_left(k);
            prop_assert!(best >= exact_ap(&rot, pos));
        }
    }

    #[test]
    fn oracle_ignores_input_order(counts in bins(6), k in 0usize..6) {
        let pos = counts.iter().map(|b| b.t).sum::<u64>().max(1);
        let mut rot = counts.clone();
        rot.rotate_left(k % counts.len());
        let a = permutation_oracle(&counts, pos).unwrap().ap.percent();
        let b = permutation_oracle(&rot, pos).unwrap().ap.percent();
        prop_assert!((a - b).abs() < 1e-9);
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_context_never_lowers_the_optimal_bound(
        items in prop::collection::vec((0u32..1000, any::<bool>(), any::<bool>()), 1..40),
        m1 in 1usize..=5,
    ) {
        prop_assume!(items.iter().any(|i| i.1));
        let outcomes: Vec<ScoredOutcome> = items
            .iter()
            .map(|&(c, t, _)| ScoredOutcome { confidence: c as f64, is_true: t })
            .collect();
        let pos = outcomes.iter().filter(|o| o.is_true).count() as u64;
        let flat = vec![ContextValue::Binary(false); items.len()];
        let ctx: Vec<ContextValue> = items.iter().map(|&(_, _, c)| ContextValue::Binary(c)).collect();
        let best = |grid: ctxbound::BinGrid| {
            let counts = grid.counts();
            let o = permutation_oracle(&counts, pos).unwrap();
            let ranked: Vec<BinCounts> = o.ordering.iter().map(|&i| counts[i]).collect();
            exact_ap(&ranked, pos)
        };
        let base = best(build_bins(&outcomes, &flat, m1, ContextMode::Binary, pos).unwrap());
        let split = best(build_bins(&outcomes, &ctx, m1, ContextMode::Binary, pos).unwrap());
        prop_assert!(split >= base);
    }
}
