//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use ctxbound::ap::{
    ap_equal_bins, ap_naive, build_bins, exact_ap, heuristic_rank, permutation_oracle, ContextMode,
    ScoredOutcome,
};
use ctxbound::bounds::{
    analyze_category, candidate_relations, compare_with_oracle, PreparedBundle,
};
use ctxbound::capacity::{capacity, max_capacity, select_balanced};
use ctxbound::synth::{generate, SynthConfig};
use ctxbound::{
    BinCounts, BinGrid, CategoryId, ContextValue, DatasetBundle, ErrorType, Relation, SearchConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {} ({}): {}", v.id, v.title, v.detail);
}

fn counts(pairs: &[(u64, u64)]) -> Vec<BinCounts> {
    pairs.iter().map(|&(t, f)| BinCounts::new(t, f)).collect()
}

fn ordered(counts: &[BinCounts], order: &[usize]) -> Vec<BinCounts> {
    order.iter().map(|&i| counts[i]).collect()
}

const COUNTEREXAMPLE: [(u64, u64); 3] = [(277, 16), (371, 955), (69, 178)];
const COUNTEREXAMPLE_POS: u64 = 717;

fn counterexample() -> Verdict {
    let start = Instant::now();
    let bins = counts(&COUNTEREXAMPLE);
    let grid = BinGrid::from_counts(&bins, COUNTEREXAMPLE_POS).unwrap();
    let scores: Vec<f64> = bins.iter().map(BinCounts::score).collect();
    let expected = [17.3, 0.3884, 0.3876];
    let scores_ok: Vec<bool> = scores
        .iter()
        .zip(expected)
        .map(|(s, e)| (s - e).abs() <= 1e-4)
        .collect();
    let heuristic = heuristic_rank(&grid).ap(&grid).percent();
    let oracle = permutation_oracle(&bins, COUNTEREXAMPLE_POS).unwrap();
    let order_1based: Vec<usize> = oracle.ordering.iter().map(|i| i + 1).collect();
    let elapsed = start.elapsed();

    let pass = scores_ok.iter().all(|&b| b)
        && (heuristic - 60.9).abs() <= 0.05
        && (oracle.ap.percent() - 62.6).abs() <= 0.05
        && order_1based == [1, 3, 2]
        && elapsed < Duration::from_secs(1);
    Verdict {
        id: 1,
        title: "counterexample reproduction",
        pass,
        detail: format!(
            "scores {scores:?} vs {expected:?} within 1e-4: {scores_ok:?}; heuristic AP {heuristic:.4} (60.9 +/- 0.05); \
             oracle AP {:.4} (62.6 +/- 0.05) order {order_1based:?}; {elapsed:?}",
            oracle.ap.percent()
        ),
    }
}

fn equal_t_optimality() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let grids = 1000;
    for _ in 0..grids {
        let n = rng.random_range(2..=7);
        let t = rng.random_range(1..=20u64);
        let bins: Vec<BinCounts> = (0..n)
            .map(|_| BinCounts::new(t, rng.random_range(0..=40)))
            .collect();
        let pos = t * n as u64 + rng.random_range(0..=5);
        let grid = BinGrid::from_counts(&bins, pos).unwrap();
        let heuristic = exact_ap(&ordered(&bins, &heuristic_rank(&grid).ordering), pos);
        let oracle = permutation_oracle(&bins, pos).unwrap();
        let best = exact_ap(&ordered(&bins, &oracle.ordering), pos);
        if heuristic != best {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Verdict {
        id: 2,
        title: "equal-t optimality",
        pass: mismatches == 0 && elapsed < Duration::from_secs(30),
        detail: format!("{grids} grids of 2-7 bins, {mismatches} differ from the exhaustive maximum; {elapsed:?}"),
    }
}

/// Gaps (oracle minus heuristic, AP points) on random unequal grids plus the
/// counterexample. Returns (grids, violations, strict, gaps).
fn unequal_suite() -> (usize, usize, usize, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut suite: Vec<(Vec<BinCounts>, u64)> = vec![(counts(&COUNTEREXAMPLE), COUNTEREXAMPLE_POS)];
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let bins: Vec<BinCounts> = (0..n)
            .map(|_| BinCounts::new(rng.random_range(0..=30), rng.random_range(0..=60)))
            .collect();
        let total: u64 = bins.iter().map(|b| b.t).sum();
        if total == 0 {
            continue;
        }
        suite.push((bins, total + rng.random_range(0..=10)));
    }
    let (mut violations, mut strict) = (0, 0);
    let mut gaps = Vec::new();
    for (bins, pos) in &suite {
        let grid = BinGrid::from_counts(bins, *pos).unwrap();
        let counts = grid.counts();
        let heuristic = exact_ap(&ordered(&counts, &heuristic_rank(&grid).ordering), *pos);
        let oracle = permutation_oracle(&counts, *pos).unwrap();
        let best = exact_ap(&ordered(&counts, &oracle.ordering), *pos);
        if best < heuristic {
            violations += 1;
        }
        if best > heuristic {
            strict += 1;
        }
        let cmp = compare_with_oracle(&grid).unwrap();
        gaps.push(cmp.gap());
    }
    (suite.len(), violations, strict, gaps)
}

fn oracle_dominance(suite: &(usize, usize, usize, Vec<f64>)) -> Verdict {
    let (grids, violations, strict, _) = suite;
    Verdict {
        id: 3,
        title: "oracle dominance",
        pass: *grids >= 1000 && *violations == 0 && *strict >= 1,
        detail: format!("{grids} grids of at most 8 bins, {violations} below the heuristic, {strict} strictly above"),
    }
}

fn naive_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let sets = 200;
    let mut ran = 0;
    for _ in 0..sets {
        let n = rng.random_range(2..=80);
        let mut confidences: Vec<u32> = (0..n as u32).collect();
        confidences.shuffle(&mut rng);
        let items: Vec<ScoredOutcome> = confidences
            .iter()
            .map(|&c| ScoredOutcome {
                confidence: c as f64 / n as f64,
                is_true: rng.random_bool(0.4),
            })
            .collect();
        let trues = items.iter().filter(|i| i.is_true).count() as u64;
        if trues == 0 {
            continue;
        }
        let pos = trues + rng.random_range(0..=3);
        let context = vec![ContextValue::Binary(false); items.len()];
        let grid = build_bins(&items, &context, pos as usize, ContextMode::Binary, pos).unwrap();
        let equal = ap_equal_bins(&grid.counts(), pos).unwrap().percent();
        let naive = ap_naive(&items, pos).percent();
        worst = worst.max((equal - naive).abs());
        ran += 1;
    }
    Verdict {
        id: 4,
        title: "naive-AP equivalence",
        pass: ran >= 100 && worst <= 1e-9,
        detail: format!("{ran} tie-free detection sets, largest difference {worst:e}"),
    }
}

fn config(name: &str) -> SynthConfig {
    SynthConfig::load(&common::configs().join(name)).unwrap()
}

fn category_bounds(
    bundle: &DatasetBundle,
    category: u64,
    iou: f64,
) -> ctxbound::bounds::CategoryBounds {
    let cfg = SearchConfig {
        iou_threshold: iou,
        ..SearchConfig::default()
    };
    let prepared = PreparedBundle::new(bundle, cfg.match_config().unwrap());
    let cat = prepared.category(CategoryId(category), cfg.frame);
    analyze_category(&cat, &cfg).unwrap()
}

fn planted_signal() -> Verdict {
    let ball = CategoryId(3);
    let strong = config("planted.conf");
    let bundle = generate(&strong).unwrap();
    let b = category_bounds(&bundle, 1, 0.5);
    let best = b.best();
    let found = best.relation.mentions_cooccurrence(ball);
    let margin = best.improvement - b.random.mean;

    let mut weak = strong.clone();
    weak.plants[0].rho = 0.5;
    let null = category_bounds(&generate(&weak).unwrap(), 1, 0.5);
    let z = (null.best().improvement - null.random.mean) / null.random.std_dev;

    // Same check over further seeds, reported for context only.
    let mut within = 0;
    let seeds = 2..=11u64;
    for seed in seeds.clone() {
        let mut c = weak.clone();
        c.seed = seed;
        let r = category_bounds(&generate(&c).unwrap(), 1, 0.5);
        if (r.best().improvement - r.random.mean).abs() <= 3.0 * r.random.std_dev {
            within += 1;
        }
    }

    Verdict {
        id: 5,
        title: "planted-signal detection",
        pass: found && margin >= 5.0 && z.abs() <= 3.0,
        detail: format!(
            "rho=1: best {} improvement {:.2} vs random mean {:.2} (margin {margin:.2}); \
             rho=0.5: best {} improvement {:.2}, random {:.2} +/- {:.2} (z = {z:.2}); \
             rho=0.5 within 3 sd for {within}/{} further seeds",
            best.relation_name,
            best.improvement,
            b.random.mean,
            null.best().relation_name,
            null.best().improvement,
            null.random.mean,
            null.random.std_dev,
            seeds.count(),
        ),
    }
}

fn localization_blindness() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 1..=5 {
        let mut cfg = config("localization.conf");
        cfg.seed = seed;
        let bundle = generate(&cfg).unwrap();
        let search = SearchConfig::default();
        let prepared = PreparedBundle::new(&bundle, search.match_config().unwrap());
        let cat = prepared.category(CategoryId(1), search.frame);
        let pool = candidate_relations(&cat, &search).unwrap();
        let cap = max_capacity(&cat, &pool, ErrorType::Localization).unwrap();
        let at50 = category_bounds(&bundle, 1, 0.5).best().improvement;
        let at75 = category_bounds(&bundle, 1, 0.75).best().improvement;
        pass &= cap.accuracy <= 0.55 && at75 <= at50;
        parts.push(format!(
            "seed {seed}: capacity {:.4} (n={}), improvement {at50:.2} @0.5 vs {at75:.2} @0.75",
            cap.accuracy, cap.n
        ));
    }
    Verdict {
        id: 6,
        title: "localization blindness",
        pass,
        detail: parts.join("; "),
    }
}

fn capacity_floor() -> Verdict {
    let mut checked = 0usize;
    let mut out_of_range = 0usize;
    let mut constant_off = 0usize;
    for name in ["mixed.conf", "planted.conf", "localization.conf"] {
        let bundle = generate(&config(name)).unwrap();
        let search = SearchConfig {
            top_k: 20,
            ..SearchConfig::default()
        };
        let prepared = PreparedBundle::new(&bundle, search.match_config().unwrap());
        for c in &bundle.categories {
            let cat = prepared.category(c.id, search.frame);
            let Ok(mut pool) = candidate_relations(&cat, &search) else {
                continue;
            };
            pool.push(Relation::Constant(true));
            pool.push(Relation::Random(1));
            for error_type in ErrorType::ALL {
                let Ok(balanced) = select_balanced(&cat.detections, error_type) else {
                    continue;
                };
                for rel in &pool {
                    let acc = capacity(rel, &balanced, &bundle, &prepared.index, &search.frame);
                    checked += 1;
                    if !(0.5..=1.0).contains(&acc) {
                        out_of_range += 1;
                    }
                    if matches!(rel, Relation::Constant(_)) && acc != 0.5 {
                        constant_off += 1;
                    }
                }
            }
        }
    }
    Verdict {
        id: 7,
        title: "capacity floor",
        pass: checked > 0 && out_of_range == 0 && constant_off == 0,
        detail: format!(
            "{checked} (relation, category, error type) evaluations, {out_of_range} outside [0.5, 1], \
             {constant_off} constant relations off 0.5"
        ),
    }
}

fn gap_distribution(suite: &(usize, usize, usize, Vec<f64>)) -> Verdict {
    let mut gaps = suite.3.clone();
    // Best relations of synthetic datasets at 5 confidence bins.
    for name in ["mixed.conf", "planted.conf", "localization.conf"] {
        let bundle = generate(&config(name)).unwrap();
        let search = SearchConfig {
            m1: 5,
            ..SearchConfig::default()
        };
        let prepared = PreparedBundle::new(&bundle, search.match_config().unwrap());
        for c in &bundle.categories {
            let cat = prepared.category(c.id, search.frame);
            if let Ok((_, cmp)) = ctxbound::bounds::oracle_for_best(&cat, &search) {
                gaps.push(cmp.gap());
            }
        }
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    let zero = gaps.iter().filter(|g| g.abs() < 1e-9).count();
    let mean = gaps.iter().sum::<f64>() / n as f64;
    let q = |p: f64| gaps[((n - 1) as f64 * p).round() as usize];
    Verdict {
        id: 8,
        title: "heuristic-vs-oracle gap distribution",
        pass: gaps[0] >= -1e-9,
        detail: format!(
            "{n} grids: min {:.4}, median {:.4}, p90 {:.4}, p99 {:.4}, max {:.4}, mean {mean:.4}, \
             {zero} with zero gap; dataset-level reproduction needs the original detector outputs",
            gaps[0],
            q(0.5),
            q(0.9),
            q(0.99),
            gaps[n - 1]
        ),
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (gt, det) = common::synth(&common::configs().join("mixed.conf"), dir.path(), &[]);
    let mut bodies = Vec::new();
    for run in ["a", "b"] {
        let path = dir.path().join(format!("{run}.csv"));
        let out = common::ctxbound(&[
            "bounds",
            "--gt",
            &gt,
            "--det",
            &det,
            "--iou",
            "0.5,0.75",
            "--seed",
            "3",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        let text = std::fs::read_to_string(&path).unwrap();
        let plot = std::fs::read_to_string(dir.path().join(format!("{run}.plot.csv"))).unwrap();
        bodies.push((
            ctxbound_cli::report::strip_manifest(&text),
            ctxbound_cli::report::strip_manifest(&plot),
        ));
    }
    let same = bodies[0] == bodies[1];
    Verdict {
        id: 9,
        title: "determinism",
        pass: same && !bodies[0].0.is_empty(),
        detail: format!(
            "two bounds runs: report bodies identical = {}, plot bodies identical = {}",
            bodies[0].0 == bodies[1].0,
            bodies[0].1 == bodies[1].1
        ),
    }
}

#[test]
fn acceptance() {
    let suite = unequal_suite();
    let verdicts = [
        counterexample(),
        equal_t_optimality(),
        oracle_dominance(&suite),
        naive_equivalence(),
        planted_signal(),
        localization_blindness(),
        capacity_floor(),
        gap_distribution(&suite),
        determinism(),
    ];
    for v in &verdicts {
        report(v);
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
