use std::path::Path;

use anyhow::{anyhow, Context};
use ctxbound::bounds::{
    candidate_relations, compare_with_oracle, iou_sweep, oracle_for_best, PreparedBundle,
};
use ctxbound::capacity::max_capacity;
use ctxbound::dataset::{
    load_detections, load_ground_truth, validate_bundle, write_detections, write_ground_truth,
};
use ctxbound::matching::{count_by_category, evaluate_bundle, EvaluatedRecord, MatchConfig};
use ctxbound::relation::enumerate_atomic_relations;
use ctxbound::synth::{generate, SynthConfig};
use ctxbound::{
    BinCounts, BinGrid, DatasetBundle, ErrorType, Relation, SearchConfig, SpatialFrameConfig,
};
use serde::Serialize;

use crate::manifest::{digest_file, InputDigest, RunManifest};
use crate::report::{self, emit, fixed, fixed1, opt, Table};
use crate::{
    BoundsArgs, CapacityArgs, Cli, Command, Failure, Frame, Inputs, MatchArgs, OracleArgs, Output,
    Pool, Search, SynthArgs,
};

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Capacity(a) => cmd_capacity(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn load_bundle(gt: &Path, det: &Path) -> Result<(DatasetBundle, Vec<InputDigest>), Failure> {
    let digests = vec![
        digest_file("gt", gt).map_err(Failure::input)?,
        digest_file("det", det).map_err(Failure::input)?,
    ];
    let truth = load_ground_truth(gt).map_err(Failure::input)?;
    let dets = load_detections(det).map_err(Failure::input)?;
    let bundle = DatasetBundle::new(truth, dets);
    let issues = validate_bundle(&bundle);
    if let Some(first) = issues.first() {
        return Err(Failure::input(anyhow!(
            "{} problem(s) in the input files; first: {first}",
            issues.len()
        )));
    }
    Ok((bundle, digests))
}

fn thresholds(iou: &[f64]) -> Result<Vec<f64>, Failure> {
    for &t in iou {
        MatchConfig::new(t).map_err(Failure::input)?;
    }
    Ok(iou.to_vec())
}

fn spatial_frame(frame: &Frame) -> Result<SpatialFrameConfig, Failure> {
    SpatialFrameConfig::new(frame.height_factor, frame.grid).map_err(Failure::input)
}

fn search_config(
    search: &Search,
    frame: SpatialFrameConfig,
    thr: f64,
) -> Result<SearchConfig, Failure> {
    let cfg = SearchConfig {
        m1: search.bins,
        iou_threshold: thr,
        top_k: search.top_k,
        random_trials: search.trials,
        seed: search.seed,
        frame,
    };
    cfg.validate().map_err(Failure::input)?;
    Ok(cfg)
}

fn list(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn search_echo(inputs: &Inputs, search: &Search, frame: &Frame) -> Vec<(String, String)> {
    vec![
        kv("iou", list(&inputs.iou)),
        kv("bins", search.bins),
        kv("grid", frame.grid),
        kv("height_factor", frame.height_factor),
        kv("top_k", search.top_k),
        kv("trials", search.trials),
        kv("seed", search.seed),
    ]
}

fn finish<R: Serialize>(
    output: &Output,
    manifest: &RunManifest,
    table: &Table,
    rows: &R,
) -> Result<(), Failure> {
    emit(output, manifest, table, rows).map_err(Failure::internal)
}

#[derive(Serialize)]
struct MatchRow {
    iou_threshold: f64,
    category_id: u64,
    category: String,
    objects: u64,
    detections: u64,
    true_positives: u64,
    localization: u64,
    class_confusion: u64,
    background: u64,
}

#[derive(Serialize)]
struct DumpRecord {
    iou_threshold: f64,
    #[serde(flatten)]
    record: EvaluatedRecord,
}

fn cmd_match(args: MatchArgs) -> Result<(), Failure> {
    let thresholds = thresholds(&args.inputs.iou)?;
    let (bundle, digests) = load_bundle(&args.inputs.gt, &args.inputs.det)?;
    let names = bundle.category_names();

    let mut rows = Vec::new();
    let mut dump = Vec::new();
    for &thr in &thresholds {
        let cfg = MatchConfig::new(thr).map_err(Failure::input)?;
        let evaluated = evaluate_bundle(&bundle, &cfg);
        for (cat, c) in count_by_category(&bundle, &evaluated) {
            rows.push(MatchRow {
                iou_threshold: thr,
                category_id: cat.0,
                category: names.name(cat),
                objects: c.objects,
                detections: c.detections,
                true_positives: c.true_positives,
                localization: c.localization,
                class_confusion: c.class_confusion,
                background: c.background,
            });
        }
        if args.dump.is_some() {
            dump.extend(evaluated.iter().map(|e| DumpRecord {
                iou_threshold: thr,
                record: e.into(),
            }));
        }
    }

    if let Some(path) = &args.dump {
        let mut text = serde_json::to_string_pretty(&dump).map_err(Failure::internal)?;
        text.push('\n');
        report::write_text(path, &text).map_err(Failure::internal)?;
    }

    let mut table = Table::new(&[
        "iou",
        "category_id",
        "category",
        "objects",
        "detections",
        "true_positives",
        "localization",
        "class_confusion",
        "background",
    ]);
    for r in &rows {
        table.push(vec![
            r.iou_threshold.to_string(),
            r.category_id.to_string(),
            r.category.clone(),
            r.objects.to_string(),
            r.detections.to_string(),
            r.true_positives.to_string(),
            r.localization.to_string(),
            r.class_confusion.to_string(),
            r.background.to_string(),
        ]);
    }
    let manifest = RunManifest::new("match", vec![kv("iou", list(&thresholds))], digests);
    finish(&args.output, &manifest, &table, &rows)
}

#[derive(Debug, Clone, Serialize)]
struct BoundsRow {
    iou_threshold: f64,
    category_id: u64,
    category: String,
    relation: Option<String>,
    ap_bound: Option<f64>,
    baseline_bound: Option<f64>,
    improvement: Option<f64>,
    random_mean: Option<f64>,
    random_sd: Option<f64>,
    degraded: Option<bool>,
    note: Option<String>,
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), Failure> {
    let thresholds = thresholds(&args.inputs.iou)?;
    let frame = spatial_frame(&args.frame)?;
    let cfg = search_config(&args.search, frame, thresholds[0])?;
    let (bundle, digests) = load_bundle(&args.inputs.gt, &args.inputs.det)?;

    let sweep = iou_sweep(&bundle, &cfg, &thresholds).map_err(Failure::input)?;
    let mut rows = Vec::new();
    for entry in &sweep {
        for (cat, name, result) in &entry.categories {
            let mut row = BoundsRow {
                iou_threshold: entry.iou_threshold,
                category_id: cat.0,
                category: name.clone(),
                relation: None,
                ap_bound: None,
                baseline_bound: None,
                improvement: None,
                random_mean: None,
                random_sd: None,
                degraded: None,
                note: None,
            };
            match result {
                Ok(b) => {
                    let best = b.best();
                    row.relation = Some(best.relation_name.clone());
                    row.ap_bound = Some(best.ap_bound.percent());
                    row.baseline_bound = Some(best.baseline_bound.percent());
                    row.improvement = Some(best.improvement);
                    row.random_mean = Some(b.random.mean);
                    row.random_sd = Some(b.random.std_dev);
                    row.degraded = Some(best.degraded_bins);
                }
                Err(e) => row.note = Some(e.to_string()),
            }
            rows.push(row);
        }
    }

    let mut table = Table::new(&[
        "iou",
        "category_id",
        "category",
        "relation",
        "ap_bound",
        "baseline_bound",
        "improvement",
        "random_mean",
        "random_sd",
        "degraded",
        "note",
    ]);
    for r in &rows {
        table.push(vec![
            r.iou_threshold.to_string(),
            r.category_id.to_string(),
            r.category.clone(),
            opt(r.relation.clone()),
            fixed1(r.ap_bound),
            fixed1(r.baseline_bound),
            fixed1(r.improvement),
            fixed1(r.random_mean),
            fixed1(r.random_sd),
            opt(r.degraded),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    let manifest = RunManifest::new(
        "bounds",
        search_echo(&args.inputs, &args.search, &args.frame),
        digests,
    );
    finish(&args.output, &manifest, &table, &rows)?;

    let plot_path = args.plot.clone().or_else(|| {
        args.output
            .out
            .as_ref()
            .map(|p| report::sibling(p, "plot.csv"))
    });
    if let Some(path) = plot_path {
        let text = report::render_csv(&manifest, &plot_table(&thresholds, &rows))
            .map_err(Failure::internal)?;
        report::write_text(&path, &text).map_err(Failure::internal)?;
    }

    if rows.iter().all(|r| r.improvement.is_none()) {
        return Err(Failure::nothing("no category could be analyzed"));
    }
    Ok(())
}

/// Categories sorted by improvement at the first threshold, one improvement
/// series per threshold plus the random-context mean.
fn plot_table(thresholds: &[f64], rows: &[BoundsRow]) -> Table {
    let first = thresholds[0];
    let mut lead: Vec<&BoundsRow> = rows.iter().filter(|r| r.iou_threshold == first).collect();
    // Analyzable categories first, by decreasing improvement; stable otherwise.
    lead.sort_by(|a, b| match (a.improvement, b.improvement) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.category.cmp(&b.category)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    let mut headers = vec!["rank".to_string(), "category_id".into(), "category".into()];
    headers.extend(thresholds.iter().map(|t| format!("improvement_iou_{t}")));
    headers.push("random_mean".into());
    let mut table = Table {
        headers,
        rows: Vec::new(),
    };
    for (rank, r) in lead.iter().enumerate() {
        let mut row = vec![
            (rank + 1).to_string(),
            r.category_id.to_string(),
            r.category.clone(),
        ];
        for &t in thresholds {
            let value = rows
                .iter()
                .find(|x| x.iou_threshold == t && x.category_id == r.category_id)
                .and_then(|x| x.improvement);
            row.push(fixed(value, 4));
        }
        row.push(fixed(r.random_mean, 4));
        table.push(row);
    }
    table
}

#[derive(Debug, Clone, Serialize)]
struct CapacityRow {
    iou_threshold: f64,
    category_id: u64,
    category: String,
    error_type: ErrorType,
    relation: Option<String>,
    n: Option<usize>,
    accuracy: Option<f64>,
    note: Option<String>,
}

fn cmd_capacity(args: CapacityArgs) -> Result<(), Failure> {
    let thresholds = thresholds(&args.inputs.iou)?;
    let frame = spatial_frame(&args.frame)?;
    search_config(&args.search, frame, thresholds[0])?;
    let (bundle, digests) = load_bundle(&args.inputs.gt, &args.inputs.det)?;

    let mut rows = Vec::new();
    for &thr in &thresholds {
        let cfg = search_config(&args.search, frame, thr)?;
        let prepared = PreparedBundle::new(&bundle, cfg.match_config().map_err(Failure::input)?);
        for c in &bundle.categories {
            let cat = prepared.category(c.id, frame);
            let pool = match args.pool {
                Pool::Full => candidate_relations(&cat, &cfg).map_err(|e| e.to_string()),
                Pool::Atoms => Ok(enumerate_atomic_relations(&bundle.category_ids(), &frame)),
                Pool::Constant => Ok(vec![Relation::Constant(false)]),
            };
            for error_type in ErrorType::ALL {
                let mut row = CapacityRow {
                    iou_threshold: thr,
                    category_id: c.id.0,
                    category: c.name.clone(),
                    error_type,
                    relation: None,
                    n: None,
                    accuracy: None,
                    note: None,
                };
                match pool
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|p| max_capacity(&cat, p, error_type).map_err(|e| e.to_string()))
                {
                    Ok(r) => {
                        row.relation = Some(r.relation_name);
                        row.n = Some(r.n);
                        row.accuracy = Some(r.accuracy);
                    }
                    Err(e) => row.note = Some(e),
                }
                rows.push(row);
            }
        }
    }

    let mut table = Table::new(&[
        "iou",
        "category_id",
        "category",
        "error_type",
        "relation",
        "n",
        "accuracy",
        "note",
    ]);
    for r in &rows {
        table.push(vec![
            r.iou_threshold.to_string(),
            r.category_id.to_string(),
            r.category.clone(),
            r.error_type.as_str().to_string(),
            opt(r.relation.clone()),
            opt(r.n),
            fixed(r.accuracy, 4),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    let mut echo = search_echo(&args.inputs, &args.search, &args.frame);
    echo.push(kv(
        "pool",
        match args.pool {
            Pool::Full => "full",
            Pool::Atoms => "atoms",
            Pool::Constant => "constant",
        },
    ));
    let manifest = RunManifest::new("capacity", echo, digests);
    finish(&args.output, &manifest, &table, &rows)?;
    if rows.iter().all(|r| r.accuracy.is_none()) {
        return Err(Failure::nothing(
            "no category has both true and false detections",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct OracleRow {
    iou_threshold: Option<f64>,
    category_id: Option<u64>,
    category: String,
    relation: Option<String>,
    bins: Option<usize>,
    heuristic_ap: Option<f64>,
    oracle_ap: Option<f64>,
    gap: Option<f64>,
    /// 1-based bin numbers in rank order.
    heuristic_order: Vec<usize>,
    oracle_order: Vec<usize>,
    note: Option<String>,
}

fn order_text(v: &[usize]) -> String {
    if v.is_empty() {
        return report::NOT_AVAILABLE.to_string();
    }
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Reads `t,f` rows; a non-numeric first row is taken as a header.
pub fn read_fixture(path: &Path) -> anyhow::Result<Vec<BinCounts>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<u64>, _> = rec.iter().map(str::parse::<u64>).collect();
        match parsed {
            Ok(v) if v.len() == 2 => out.push(BinCounts::new(v[0], v[1])),
            _ if i == 0 => continue,
            _ => {
                return Err(anyhow!(
                    "row {} of {}: expected `t,f` counts",
                    i + 1,
                    path.display()
                ))
            }
        }
    }
    if out.is_empty() {
        return Err(anyhow!("{} holds no bins", path.display()));
    }
    Ok(out)
}

fn oracle_row_from(
    cmp: &ctxbound::bounds::OracleComparison,
    renumber: impl Fn(usize) -> usize,
) -> Result<OracleRow, Failure> {
    let gap = cmp.gap();
    if gap < -1e-9 {
        return Err(Failure::internal(anyhow!(
            "oracle AP {} below heuristic AP {}",
            cmp.oracle.percent(),
            cmp.heuristic.percent()
        )));
    }
    Ok(OracleRow {
        iou_threshold: None,
        category_id: None,
        category: String::new(),
        relation: None,
        bins: Some(cmp.bins),
        heuristic_ap: Some(cmp.heuristic.percent()),
        oracle_ap: Some(cmp.oracle.percent()),
        gap: Some(gap),
        heuristic_order: cmp
            .heuristic_ordering
            .iter()
            .map(|&i| renumber(i))
            .collect(),
        oracle_order: cmp.oracle_ordering.iter().map(|&i| renumber(i)).collect(),
        note: None,
    })
}

fn cmd_oracle(args: OracleArgs) -> Result<(), Failure> {
    let max_bins = ctxbound::ap::MAX_ORACLE_BINS;
    let mut rows = Vec::new();
    let echo;
    let digests;

    if let Some(path) = &args.fixture {
        digests = vec![digest_file("fixture", path).map_err(Failure::input)?];
        let counts = read_fixture(path).map_err(Failure::input)?;
        if counts.len() > max_bins {
            return Err(Failure::input(anyhow!(
                "{} bins exceed the oracle limit of {max_bins}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().map(|c| c.t).sum();
        let pos = args.pos.unwrap_or(total);
        echo = vec![kv("pos", pos)];
        // Empty bins are dropped by the grid; map positions back to rows.
        let kept: Vec<usize> = (0..counts.len())
            .filter(|&i| counts[i].t + counts[i].f > 0)
            .collect();
        let grid = BinGrid::from_counts(&counts, pos).map_err(Failure::input)?;
        let cmp = compare_with_oracle(&grid).map_err(Failure::input)?;
        let mut row = oracle_row_from(&cmp, |i| kept[i] + 1)?;
        row.category = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        rows.push(row);
    } else {
        let (Some(gt), Some(det)) = (&args.gt, &args.det) else {
            return Err(Failure::input(anyhow!(
                "--gt and --det are required without --fixture"
            )));
        };
        if 2 * args.bins > max_bins {
            return Err(Failure::input(anyhow!(
                "{} confidence bins with binary context give up to {} bins; the oracle handles at most {max_bins}",
                args.bins,
                2 * args.bins
            )));
        }
        let thresholds = thresholds(&args.iou)?;
        let frame = spatial_frame(&args.frame)?;
        let (bundle, d) = load_bundle(gt, det)?;
        digests = d;
        echo = vec![
            kv("iou", list(&thresholds)),
            kv("bins", args.bins),
            kv("grid", args.frame.grid),
            kv("height_factor", args.frame.height_factor),
            kv("top_k", args.top_k),
        ];
        for &thr in &thresholds {
            let cfg = SearchConfig {
                m1: args.bins,
                iou_threshold: thr,
                top_k: args.top_k,
                frame,
                ..SearchConfig::default()
            };
            cfg.validate().map_err(Failure::input)?;
            let prepared =
                PreparedBundle::new(&bundle, cfg.match_config().map_err(Failure::input)?);
            for c in &bundle.categories {
                let cat = prepared.category(c.id, frame);
                let mut row = match oracle_for_best(&cat, &cfg) {
                    Ok((best, cmp)) => {
                        let mut row = oracle_row_from(&cmp, |i| i + 1)?;
                        row.relation = Some(best.relation_name);
                        row
                    }
                    Err(e) => OracleRow {
                        iou_threshold: None,
                        category_id: None,
                        category: String::new(),
                        relation: None,
                        bins: None,
                        heuristic_ap: None,
                        oracle_ap: None,
                        gap: None,
                        heuristic_order: Vec::new(),
                        oracle_order: Vec::new(),
                        note: Some(e.to_string()),
                    },
                };
                row.iou_threshold = Some(thr);
                row.category_id = Some(c.id.0);
                row.category = c.name.clone();
                rows.push(row);
            }
        }
    }

    let mut table = Table::new(&[
        "iou",
        "category_id",
        "category",
        "relation",
        "bins",
        "heuristic_ap",
        "oracle_ap",
        "gap",
        "heuristic_order",
        "oracle_order",
        "note",
    ]);
    for r in &rows {
        table.push(vec![
            opt(r.iou_threshold),
            opt(r.category_id),
            r.category.clone(),
            opt(r.relation.clone()),
            opt(r.bins),
            fixed1(r.heuristic_ap),
            fixed1(r.oracle_ap),
            fixed(r.gap, 2),
            order_text(&r.heuristic_order),
            order_text(&r.oracle_order),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    let manifest = RunManifest::new("oracle", echo, digests);
    finish(&args.output, &manifest, &table, &rows)?;
    if rows.iter().all(|r| r.gap.is_none()) {
        return Err(Failure::nothing("no category could be analyzed"));
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let mut cfg = SynthConfig::load(&args.config).map_err(Failure::input)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let bundle = generate(&cfg).map_err(Failure::input)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .map_err(Failure::input)?;
    let gt = args.out.join("ground_truth.json");
    let det = args.out.join("detections.json");
    write_ground_truth(&gt, &bundle.ground_truth()).map_err(Failure::internal)?;
    write_detections(&det, &bundle.detections).map_err(Failure::internal)?;
    eprintln!(
        "wrote {} images, {} objects and {} detections to {}",
        bundle.images.len(),
        bundle.objects.len(),
        bundle.detections.len(),
        args.out.display()
    );
    Ok(())
}
