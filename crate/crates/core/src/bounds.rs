//! Per-category search for the relation with the highest AP upper bound.
//!
//! The bound of a relation is the AP obtained when detections are binned by
//! confidence (equal true counts per bin) and by the relation's value, and the
//! bins are ranked by `t / f`. The improvement of a category is the best
//! bound minus the bound of the constant-zero relation, which re-ranks the
//! confidence bins alone.

use rayon::prelude::*;
use serde::Serialize;

use crate::ap::{
    ap_general, build_bins, build_bins_from, discretize_confidence, heuristic_order,
    heuristic_rank, ApError, ApValue, BinCounts, BinGrid, ConfidenceBinning, ContextMode,
    ScoredOutcome,
};
use crate::dataset::{BundleIndex, CategoryId, CategoryNames, DatasetBundle};
use crate::matching::{evaluate_with_index, EvaluatedDetection, MatchConfig};
use crate::relation::{
    annotate_context, compose_pairs, enumerate_atomic_relations, ContextProfile, ContextValue,
    Relation, SpatialFrameConfig,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("category {category} has no ground-truth objects")]
    NoGroundTruth { category: String },
    #[error("category {category}: {source}")]
    Ap {
        category: String,
        #[source]
        source: ApError,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Confidence bins.
    pub m1: usize,
    pub iou_threshold: f64,
    /// Atoms combined into and/or pairs.
    pub top_k: usize,
    pub random_trials: usize,
    /// Offset added to the random-baseline seeds.
    pub seed: u64,
    pub frame: SpatialFrameConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            m1: 10,
            iou_threshold: 0.5,
            top_k: 50,
            random_trials: 10,
            seed: 0,
            frame: SpatialFrameConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.m1 < 1 {
            return Err(AnalysisError::InvalidConfig("m1 must be at least 1".into()));
        }
        if self.random_trials < 1 {
            return Err(AnalysisError::InvalidConfig(
                "random_trials must be at least 1".into(),
            ));
        }
        MatchConfig::new(self.iou_threshold)
            .map_err(|e| AnalysisError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn match_config(&self) -> Result<MatchConfig, AnalysisError> {
        MatchConfig::new(self.iou_threshold)
            .map_err(|e| AnalysisError::InvalidConfig(e.to_string()))
    }
}

/// A bundle matched at one IoU threshold.
pub struct PreparedBundle<'a> {
    pub bundle: &'a DatasetBundle,
    pub index: BundleIndex,
    pub evaluated: Vec<EvaluatedDetection>,
    pub names: CategoryNames,
    pub match_config: MatchConfig,
}

impl<'a> PreparedBundle<'a> {
    pub fn new(bundle: &'a DatasetBundle, match_config: MatchConfig) -> Self {
        let index = bundle.index();
        let evaluated = evaluate_with_index(bundle, &index, &match_config);
        Self {
            bundle,
            index,
            evaluated,
            names: bundle.category_names(),
            match_config,
        }
    }

    pub fn category(
        &self,
        category: CategoryId,
        frame: SpatialFrameConfig,
    ) -> CategoryAnalysis<'_> {
        let detections: Vec<EvaluatedDetection> = self
            .evaluated
            .iter()
            .filter(|e| e.detection.category == category)
            .cloned()
            .collect();
        let profiles = detections
            .iter()
            .map(|d| {
                let objs = self.index.objects_in(self.bundle, d.detection.image_id);
                ContextProfile::new(d, &objs, &frame)
            })
            .collect();
        let pos = self
            .bundle
            .objects
            .iter()
            .filter(|o| o.category == category)
            .count() as u64;
        CategoryAnalysis {
            prepared: self,
            category,
            name: self.names.name(category),
            detections,
            pos,
            frame,
            profiles,
        }
    }
}

/// Evaluated detections of one category plus what is needed to evaluate
/// relations on them.
pub struct CategoryAnalysis<'p> {
    prepared: &'p PreparedBundle<'p>,
    pub category: CategoryId,
    pub name: String,
    pub detections: Vec<EvaluatedDetection>,
    pub pos: u64,
    pub frame: SpatialFrameConfig,
    profiles: Vec<ContextProfile>,
}

impl<'p> CategoryAnalysis<'p> {
    pub fn names(&self) -> &CategoryNames {
        &self.prepared.names
    }

    pub fn bundle(&self) -> &DatasetBundle {
        self.prepared.bundle
    }

    pub fn index(&self) -> &BundleIndex {
        &self.prepared.index
    }

    pub fn outcomes(&self) -> Vec<ScoredOutcome> {
        self.detections
            .iter()
            .map(|d| ScoredOutcome::new(d.confidence(), d.is_true()))
            .collect()
    }

    /// Relation values per detection from precomputed profiles.
    pub fn context_values(&self, rel: &Relation) -> Vec<bool> {
        self.profiles.iter().map(|p| p.eval(rel)).collect()
    }

    fn ap_error(&self, source: ApError) -> AnalysisError {
        AnalysisError::Ap {
            category: self.name.clone(),
            source,
        }
    }

    fn check_positives(&self) -> Result<(), AnalysisError> {
        if self.pos == 0 {
            return Err(AnalysisError::NoGroundTruth {
                category: self.name.clone(),
            });
        }
        Ok(())
    }

    /// Bound grid of `rel` built directly from relation evaluation.
    pub fn grid(&self, rel: &Relation, m1: usize) -> Result<BinGrid, AnalysisError> {
        self.check_positives()?;
        let annotated = annotate_context(
            &self.detections,
            rel,
            self.prepared.bundle,
            &self.prepared.index,
            &self.frame,
        );
        let contexts: Vec<ContextValue> = annotated.iter().map(|(_, c)| *c).collect();
        build_bins(
            &self.outcomes(),
            &contexts,
            m1,
            ContextMode::Binary,
            self.pos,
        )
        .map_err(|e| self.ap_error(e))
    }

    fn scorer(&self, m1: usize) -> Result<Scorer<'_, 'p>, AnalysisError> {
        self.check_positives()?;
        let outcomes = self.outcomes();
        let binning = discretize_confidence(&outcomes, m1).map_err(|e| self.ap_error(e))?;
        Ok(Scorer {
            cat: self,
            outcomes,
            binning,
        })
    }
}

/// AP bound of one relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub ap: ApValue,
    pub degraded: bool,
}

/// Bound computation with the confidence binning shared across relations.
struct Scorer<'c, 'p> {
    cat: &'c CategoryAnalysis<'p>,
    outcomes: Vec<ScoredOutcome>,
    binning: ConfidenceBinning,
}

impl Scorer<'_, '_> {
    fn bound(&self, rel: &Relation) -> Bound {
        let nbins = self.binning.bin_count();
        let mut counts = vec![[BinCounts::default(); 2]; nbins];
        for ((item, bin), profile) in self
            .outcomes
            .iter()
            .zip(&self.binning.assignment)
            .zip(&self.cat.profiles)
        {
            let Some(b) = bin else { continue };
            let c = &mut counts[*b][usize::from(profile.eval(rel))];
            if item.is_true {
                c.t += 1;
            } else {
                c.f += 1;
            }
        }
        let bins: Vec<BinCounts> = counts
            .into_iter()
            .flatten()
            .filter(|c| c.t + c.f > 0)
            .collect();
        let ranked: Vec<BinCounts> = heuristic_order(&bins)
            .into_iter()
            .map(|i| bins[i])
            .collect();
        Bound {
            ap: ap_general(&ranked, self.cat.pos),
            degraded: self.binning.degraded(),
        }
    }

    fn grid(&self, rel: &Relation) -> BinGrid {
        let contexts: Vec<ContextValue> = self
            .cat
            .context_values(rel)
            .into_iter()
            .map(ContextValue::Binary)
            .collect();
        build_bins_from(
            &self.binning,
            &self.outcomes,
            &contexts,
            ContextMode::Binary,
            self.cat.pos,
        )
        .expect("binary contexts over a valid binning")
    }
}

/// Annotate, bin by confidence and context, rank by `t / f`, take the AP.
pub fn bound_for_relation(
    cat: &CategoryAnalysis<'_>,
    rel: &Relation,
    cfg: &SearchConfig,
) -> Result<Bound, AnalysisError> {
    let grid = cat.grid(rel, cfg.m1)?;
    Ok(Bound {
        ap: heuristic_rank(&grid).ap(&grid),
        degraded: grid.degraded,
    })
}

/// Bound with constant-zero context.
pub fn baseline_bound(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
) -> Result<Bound, AnalysisError> {
    bound_for_relation(cat, &Relation::Constant(false), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub category: CategoryId,
    pub category_name: String,
    #[serde(skip)]
    pub relation: Relation,
    #[serde(rename = "relation")]
    pub relation_name: String,
    pub ap_bound: ApValue,
    pub baseline_bound: ApValue,
    pub improvement: f64,
    pub degraded_bins: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Every evaluated relation, best first.
    pub results: Vec<BoundResult>,
    pub atoms_evaluated: usize,
    pub composites_evaluated: usize,
    /// Atoms that were paired into composites, in bound order.
    pub composed_atoms: Vec<Relation>,
}

impl SearchOutcome {
    pub fn best(&self) -> &BoundResult {
        &self.results[0]
    }
}

fn rank_results(results: &mut [BoundResult]) {
    results.sort_by(|a, b| {
        b.ap_bound
            .percent()
            .total_cmp(&a.ap_bound.percent())
            .then_with(|| a.relation_name.cmp(&b.relation_name))
    });
}

fn evaluate_all(
    scorer: &Scorer<'_, '_>,
    relations: Vec<Relation>,
    baseline: ApValue,
) -> Vec<BoundResult> {
    let cat = scorer.cat;
    relations
        .into_par_iter()
        .map(|relation| {
            let b = scorer.bound(&relation);
            BoundResult {
                category: cat.category,
                category_name: cat.name.clone(),
                relation_name: relation.canonical(cat.names()),
                relation,
                ap_bound: b.ap,
                baseline_bound: baseline,
                improvement: b.ap.percent() - baseline.percent(),
                degraded_bins: b.degraded,
            }
        })
        .collect()
}

/// Atoms ranked by bound, then and/or pairs of the `top_k` best atoms.
pub fn best_relation_search(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, AnalysisError> {
    let scorer = cat.scorer(cfg.m1)?;
    let baseline = scorer.bound(&Relation::Constant(false)).ap;

    let atoms = enumerate_atomic_relations(&cat.bundle().category_ids(), &cat.frame);
    let atoms_evaluated = atoms.len();
    let mut atom_results = evaluate_all(&scorer, atoms, baseline);
    rank_results(&mut atom_results);

    let ranked_atoms: Vec<Relation> = atom_results.iter().map(|r| r.relation.clone()).collect();
    let composites = compose_pairs(&ranked_atoms, cfg.top_k);
    let composed_atoms: Vec<Relation> = ranked_atoms
        .into_iter()
        .filter(Relation::is_composable)
        .take(cfg.top_k)
        .collect();
    let composites_evaluated = composites.len();

    let mut results = atom_results;
    results.extend(evaluate_all(&scorer, composites, baseline));
    rank_results(&mut results);
    Ok(SearchOutcome {
        results,
        atoms_evaluated,
        composites_evaluated,
        composed_atoms,
    })
}

/// Atoms plus composites of the `top_k` atoms: the relation pool of a search.
pub fn candidate_relations(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
) -> Result<Vec<Relation>, AnalysisError> {
    let outcome = best_relation_search(cat, cfg)?;
    let mut atoms = enumerate_atomic_relations(&cat.bundle().category_ids(), &cat.frame);
    atoms.extend(compose_pairs(&outcome.composed_atoms, cfg.top_k));
    Ok(atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomBaseline {
    /// Improvement of each trial over the constant-zero bound.
    pub trials: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std_dev: f64,
}

impl RandomBaseline {
    fn from_trials(trials: Vec<f64>) -> Self {
        let n = trials.len() as f64;
        let mean = trials.iter().sum::<f64>() / n;
        let std_dev = if trials.len() > 1 {
            (trials.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            trials,
            mean,
            std_dev,
        }
    }
}

/// Improvement of relations produced by `relation_for_seed` for seeds
/// `1..=random_trials`.
pub fn baseline_trials(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
    relation_for_seed: impl Fn(u64) -> Relation + Sync,
) -> Result<RandomBaseline, AnalysisError> {
    if cfg.random_trials < 1 {
        return Err(AnalysisError::InvalidConfig(
            "random_trials must be at least 1".into(),
        ));
    }
    let scorer = cat.scorer(cfg.m1)?;
    let baseline = scorer.bound(&Relation::Constant(false)).ap.percent();
    let trials = (1..=cfg.random_trials as u64)
        .into_par_iter()
        .map(|seed| scorer.bound(&relation_for_seed(seed)).ap.percent() - baseline)
        .collect();
    Ok(RandomBaseline::from_trials(trials))
}

/// Mean improvement of seeded random binary context, seeds
/// `seed + 1 ..= seed + random_trials`.
pub fn random_baseline(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
) -> Result<RandomBaseline, AnalysisError> {
    baseline_trials(cat, cfg, |s| Relation::Random(cfg.seed.wrapping_add(s)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryBounds {
    pub search: SearchOutcome,
    pub random: RandomBaseline,
}

impl CategoryBounds {
    pub fn best(&self) -> &BoundResult {
        self.search.best()
    }
}

pub fn analyze_category(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
) -> Result<CategoryBounds, AnalysisError> {
    Ok(CategoryBounds {
        search: best_relation_search(cat, cfg)?,
        random: random_baseline(cat, cfg)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub iou_threshold: f64,
    /// Every declared category, in declaration order.
    pub categories: Vec<(CategoryId, String, Result<CategoryBounds, AnalysisError>)>,
}

/// Full pipeline, re-matching included, once per IoU threshold.
pub fn iou_sweep(
    bundle: &DatasetBundle,
    cfg: &SearchConfig,
    thresholds: &[f64],
) -> Result<Vec<SweepEntry>, AnalysisError> {
    cfg.validate()?;
    thresholds
        .iter()
        .map(|&thr| {
            let run_cfg = SearchConfig {
                iou_threshold: thr,
                ..*cfg
            };
            let prepared = PreparedBundle::new(bundle, run_cfg.match_config()?);
            let categories = bundle
                .categories
                .par_iter()
                .map(|c| {
                    let cat = prepared.category(c.id, cfg.frame);
                    (c.id, cat.name.clone(), analyze_category(&cat, &run_cfg))
                })
                .collect();
            Ok(SweepEntry {
                iou_threshold: thr,
                categories,
            })
        })
        .collect()
}

/// Heuristic vs exhaustive ranking for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub heuristic: ApValue,
    pub oracle: ApValue,
    pub heuristic_ordering: Vec<usize>,
    pub oracle_ordering: Vec<usize>,
    pub bins: usize,
}

impl OracleComparison {
    pub fn gap(&self) -> f64 {
        self.oracle.percent() - self.heuristic.percent()
    }
}

pub fn compare_with_oracle(grid: &BinGrid) -> Result<OracleComparison, ApError> {
    let ranked = heuristic_rank(grid);
    let oracle = crate::ap::permutation_oracle(&grid.counts(), grid.pos)?;
    Ok(OracleComparison {
        heuristic: ranked.ap(grid),
        oracle: oracle.ap,
        heuristic_ordering: ranked.ordering,
        oracle_ordering: oracle.ordering,
        bins: grid.len(),
    })
}

/// Oracle check on the best relation of a category.
pub fn oracle_for_best(
    cat: &CategoryAnalysis<'_>,
    cfg: &SearchConfig,
) -> Result<(BoundResult, OracleComparison), AnalysisError> {
    let outcome = best_relation_search(cat, cfg)?;
    let best = outcome.best().clone();
    let scorer = cat.scorer(cfg.m1)?;
    let grid = scorer.grid(&best.relation);
    let cmp = compare_with_oracle(&grid).map_err(|e| cat.ap_error(e))?;
    Ok((best, cmp))
}
