//! Classification capacity of a relation.
//!
//! Take the `n` most confident true detections and the `n` most confident
//! false detections of one error type. A relation splits them into groups by
//! its value; each group is labeled with its majority truth status and the
//! accuracy of those labels is the capacity. Balanced sets make 0.5 the floor.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::CategoryAnalysis;
use crate::dataset::{BundleIndex, CategoryId, DatasetBundle};
use crate::matching::{ErrorType, EvaluatedDetection, TruthStatus};
use crate::relation::{eval_relation, ContextValue, Relation, SpatialFrameConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CapacityError {
    #[error("insufficient samples for error type {error_type}: {trues} true, {falses} false")]
    InsufficientSamples {
        error_type: ErrorType,
        trues: usize,
        falses: usize,
    },
    #[error("empty relation list")]
    NoRelations,
}

/// `n` true and `n` false detections, most confident first on each side.
#[derive(Debug, Clone)]
pub struct BalancedSet<'d> {
    pub error_type: ErrorType,
    pub trues: Vec<&'d EvaluatedDetection>,
    pub falses: Vec<&'d EvaluatedDetection>,
}

impl BalancedSet<'_> {
    pub fn n(&self) -> usize {
        self.trues.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EvaluatedDetection> {
        self.trues.iter().chain(&self.falses).copied()
    }
}

fn most_confident(
    dets: &[EvaluatedDetection],
    keep: impl Fn(&EvaluatedDetection) -> bool,
) -> Vec<&EvaluatedDetection> {
    let mut v: Vec<&EvaluatedDetection> = dets.iter().filter(|d| keep(d)).collect();
    v.sort_by(|a, b| b.confidence().total_cmp(&a.confidence()));
    v
}

pub fn select_balanced(
    dets: &[EvaluatedDetection],
    error_type: ErrorType,
) -> Result<BalancedSet<'_>, CapacityError> {
    let mut trues = most_confident(dets, |d| d.is_true());
    let mut falses = most_confident(dets, |d| d.status == TruthStatus::False(error_type));
    if trues.is_empty() || falses.is_empty() {
        return Err(CapacityError::InsufficientSamples {
            error_type,
            trues: trues.len(),
            falses: falses.len(),
        });
    }
    let n = trues.len().min(falses.len());
    trues.truncate(n);
    falses.truncate(n);
    Ok(BalancedSet {
        error_type,
        trues,
        falses,
    })
}

/// Majority-label accuracy of grouping `(context, is_true)` pairs by context.
/// Tied groups predict "true"; the accuracy does not depend on that choice.
pub fn majority_accuracy(samples: impl IntoIterator<Item = (ContextValue, bool)>) -> f64 {
    let mut groups: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    let mut total = 0u64;
    for (ctx, is_true) in samples {
        let key = ctx.as_f64().to_bits();
        let g = groups.entry(key).or_default();
        if is_true {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
        total += 1;
    }
    if total == 0 {
        return 0.5;
    }
    let correct: u64 = groups.values().map(|&(t, f)| t.max(f)).sum();
    correct as f64 / total as f64
}

pub fn capacity(
    rel: &Relation,
    balanced: &BalancedSet<'_>,
    bundle: &DatasetBundle,
    index: &BundleIndex,
    cfg: &SpatialFrameConfig,
) -> f64 {
    majority_accuracy(balanced.iter().map(|d| {
        let objs = index.objects_in(bundle, d.detection.image_id);
        (eval_relation(rel, d, &objs, cfg), d.is_true())
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub category: CategoryId,
    pub category_name: String,
    #[serde(skip)]
    pub relation: Relation,
    #[serde(rename = "relation")]
    pub relation_name: String,
    pub error_type: ErrorType,
    pub n: usize,
    pub accuracy: f64,
}

/// Highest capacity over `relations`; ties go to the smallest relation string.
pub fn max_capacity(
    cat: &CategoryAnalysis<'_>,
    relations: &[Relation],
    error_type: ErrorType,
) -> Result<CapacityResult, CapacityError> {
    if relations.is_empty() {
        return Err(CapacityError::NoRelations);
    }
    let balanced = select_balanced(&cat.detections, error_type)?;
    let positions: BTreeMap<usize, usize> = cat
        .detections
        .iter()
        .enumerate()
        .map(|(pos, d)| (d.index, pos))
        .collect();
    let members: Vec<(usize, bool)> = balanced
        .iter()
        .map(|d| (positions[&d.index], d.is_true()))
        .collect();

    let scored: Vec<(f64, String, &Relation)> = relations
        .par_iter()
        .map(|rel| {
            let values = cat.context_values(rel);
            let acc = majority_accuracy(
                members
                    .iter()
                    .map(|&(pos, is_true)| (ContextValue::Binary(values[pos]), is_true)),
            );
            (acc, rel.canonical(cat.names()), rel)
        })
        .collect();
    let (accuracy, relation_name, relation) = scored
        .into_iter()
        .min_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)))
        .expect("non-empty relation list");

    Ok(CapacityResult {
        category: cat.category,
        category_name: cat.name.clone(),
        relation: relation.clone(),
        relation_name,
        error_type,
        n: balanced.n(),
        accuracy,
    })
}
