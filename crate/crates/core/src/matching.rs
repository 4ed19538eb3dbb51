//! Box overlap, greedy detection-to-object matching and error typing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::dataset::{
    BoundingBox, BundleIndex, CategoryId, DatasetBundle, Detection, GroundTruthObject, ImageId,
    ObjectId,
};

/// Overlap below which a false detection is blamed on the background.
pub const ERROR_OVERLAP_FLOOR: f64 = 0.1;

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("IoU threshold must lie in (0, 1], got {0}")]
pub struct InvalidThreshold(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    iou_threshold: f64,
}

impl MatchConfig {
    pub fn new(iou_threshold: f64) -> Result<Self, InvalidThreshold> {
        if iou_threshold > 0.0 && iou_threshold <= 1.0 {
            Ok(Self { iou_threshold })
        } else {
            Err(InvalidThreshold(iou_threshold))
        }
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }

    pub fn error_overlap_floor(&self) -> f64 {
        ERROR_OVERLAP_FLOOR
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Localization,
    ClassConfusion,
    Background,
}

impl ErrorType {
    pub const ALL: [ErrorType; 3] = [
        ErrorType::Background,
        ErrorType::ClassConfusion,
        ErrorType::Localization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::Localization => "localization",
            ErrorType::ClassConfusion => "class_confusion",
            ErrorType::Background => "background",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthStatus {
    True,
    False(ErrorType),
}

impl TruthStatus {
    pub fn is_true(self) -> bool {
        matches!(self, TruthStatus::True)
    }

    pub fn error_type(self) -> Option<ErrorType> {
        match self {
            TruthStatus::True => None,
            TruthStatus::False(e) => Some(e),
        }
    }
}

/// A detection after matching.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedDetection {
    /// Position of the detection in the bundle's detection list.
    pub index: usize,
    pub detection: Detection,
    pub status: TruthStatus,
    pub matched_object: Option<ObjectId>,
    /// IoU with the most-overlapping ground-truth object of any category.
    pub max_overlap: f64,
    pub max_overlap_object: Option<ObjectId>,
}

impl EvaluatedDetection {
    pub fn is_true(&self) -> bool {
        self.status.is_true()
    }

    pub fn confidence(&self) -> f64 {
        self.detection.confidence
    }
}

/// Greedy matching within one category.
///
/// Detections are visited by decreasing confidence (ties keep input order);
/// each takes the not-yet-matched object of its image with the highest IoU
/// (ties to the lower object id) when that IoU reaches the threshold.
/// Returns the matched object id per detection, in input order.
pub fn match_detections(
    detections: &[&Detection],
    objects: &[&GroundTruthObject],
    cfg: &MatchConfig,
) -> Vec<Option<ObjectId>> {
    let mut by_image: HashMap<ImageId, Vec<usize>> = HashMap::new();
    for (i, o) in objects.iter().enumerate() {
        by_image.entry(o.image_id).or_default().push(i);
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
    });

    let mut taken = vec![false; objects.len()];
    let mut result = vec![None; detections.len()];
    for di in order {
        let det = detections[di];
        let Some(candidates) = by_image.get(&det.image_id) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &oi in candidates {
            if taken[oi] {
                continue;
            }
            let ov = iou(&det.bbox, &objects[oi].bbox);
            let better = match best {
                None => true,
                Some((bi, bv)) => ov > bv || (ov == bv && objects[oi].id < objects[bi].id),
            };
            if better {
                best = Some((oi, ov));
            }
        }
        if let Some((oi, ov)) = best {
            if ov >= cfg.iou_threshold {
                taken[oi] = true;
                result[di] = Some(objects[oi].id);
            }
        }
    }
    result
}

/// Most-overlapping object of any category, ties to the lower object id.
pub fn most_overlapping<'a>(
    bbox: &BoundingBox,
    image_objects: &[&'a GroundTruthObject],
) -> Option<(&'a GroundTruthObject, f64)> {
    let mut best: Option<(&GroundTruthObject, f64)> = None;
    for &o in image_objects {
        let ov = iou(bbox, &o.bbox);
        best = match best {
            Some((b, bv)) if bv > ov || (bv == ov && b.id < o.id) => Some((b, bv)),
            _ => Some((o, ov)),
        };
    }
    best
}

/// Error type of a false detection given every ground-truth object in its image.
pub fn classify_error(det: &Detection, image_objects: &[&GroundTruthObject]) -> ErrorType {
    match most_overlapping(&det.bbox, image_objects) {
        Some((o, ov)) if ov > ERROR_OVERLAP_FLOOR => {
            if o.category == det.category {
                ErrorType::Localization
            } else {
                ErrorType::ClassConfusion
            }
        }
        _ => ErrorType::Background,
    }
}

/// Matches every detection of the bundle; output follows the bundle's detection order.
pub fn evaluate_bundle(bundle: &DatasetBundle, cfg: &MatchConfig) -> Vec<EvaluatedDetection> {
    let index = bundle.index();
    evaluate_with_index(bundle, &index, cfg)
}

pub fn evaluate_with_index(
    bundle: &DatasetBundle,
    index: &BundleIndex,
    cfg: &MatchConfig,
) -> Vec<EvaluatedDetection> {
    let mut dets_by_cat: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
    for (i, d) in bundle.detections.iter().enumerate() {
        dets_by_cat.entry(d.category).or_default().push(i);
    }
    let mut objs_by_cat: BTreeMap<CategoryId, Vec<&GroundTruthObject>> = BTreeMap::new();
    for o in &bundle.objects {
        objs_by_cat.entry(o.category).or_default().push(o);
    }

    let mut matched: Vec<Option<ObjectId>> = vec![None; bundle.detections.len()];
    for (cat, det_idx) in &dets_by_cat {
        let dets: Vec<&Detection> = det_idx.iter().map(|&i| &bundle.detections[i]).collect();
        let objs = objs_by_cat.get(cat).map(Vec::as_slice).unwrap_or(&[]);
        for (m, &i) in match_detections(&dets, objs, cfg).into_iter().zip(det_idx) {
            matched[i] = m;
        }
    }

    bundle
        .detections
        .iter()
        .enumerate()
        .map(|(i, det)| {
            let image_objects = index.objects_in(bundle, det.image_id);
            let top = most_overlapping(&det.bbox, &image_objects);
            let status = match matched[i] {
                Some(_) => TruthStatus::True,
                None => TruthStatus::False(classify_error(det, &image_objects)),
            };
            EvaluatedDetection {
                index: i,
                detection: det.clone(),
                status,
                matched_object: matched[i],
                max_overlap: top.map_or(0.0, |(_, v)| v),
                max_overlap_object: top.map(|(o, _)| o.id),
            }
        })
        .collect()
}

/// Audit record for the evaluated-detection dump.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluatedRecord {
    pub image_id: ImageId,
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_type: Option<ErrorType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_gt: Option<ObjectId>,
}

impl From<&EvaluatedDetection> for EvaluatedRecord {
    fn from(e: &EvaluatedDetection) -> Self {
        Self {
            image_id: e.detection.image_id,
            category_id: e.detection.category.0,
            bbox: e.detection.bbox.to_xywh(),
            score: e.detection.confidence,
            status: if e.is_true() { "true" } else { "false" },
            error_type: e.status.error_type(),
            matched_gt: e.matched_object,
        }
    }
}

/// Per-category outcome counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub objects: u64,
    pub detections: u64,
    pub true_positives: u64,
    pub localization: u64,
    pub class_confusion: u64,
    pub background: u64,
}

pub fn count_by_category(
    bundle: &DatasetBundle,
    evaluated: &[EvaluatedDetection],
) -> BTreeMap<CategoryId, MatchCounts> {
    let mut out: BTreeMap<CategoryId, MatchCounts> = bundle
        .categories
        .iter()
        .map(|c| (c.id, MatchCounts::default()))
        .collect();
    for o in &bundle.objects {
        out.entry(o.category).or_default().objects += 1;
    }
    for e in evaluated {
        let c = out.entry(e.detection.category).or_default();
        c.detections += 1;
        match e.status {
            TruthStatus::True => c.true_positives += 1,
            TruthStatus::False(ErrorType::Localization) => c.localization += 1,
            TruthStatus::False(ErrorType::ClassConfusion) => c.class_confusion += 1,
            TruthStatus::False(ErrorType::Background) => c.background += 1,
        }
    }
    out
}
