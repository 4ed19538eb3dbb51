//! Loading, validation and serialization of ground truth and detections.
//!
//! The on-disk layout is a subset of the COCO annotation format: boxes are
//! `[x, y, w, h]` in pixels, ground truth lives in a single document with
//! `images`, `annotations` and `categories`, and detections are a flat array
//! of `{image_id, category_id, bbox, score}` records.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type ImageId = u64;
pub type ObjectId = u64;

/// Category identifier as it appears in the annotation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u64);

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unknown category {category} referenced by {record}")]
    UnknownCategory { category: u64, record: String },
    #[error("degenerate box in {record}: w={w}, h={h}")]
    DegenerateBox { record: String, w: f64, h: f64 },
    #[error("non-finite box coordinates in {record}")]
    NonFiniteBox { record: String },
    #[error("non-finite confidence in detection {index}")]
    NonFiniteConfidence { index: usize },
    #[error("unsupported score value in detection {index}: {value}")]
    BadScore { index: usize, value: String },
    #[error("crowd/ignore regions are not supported (annotation {id} sets `{flag}`)")]
    CrowdUnsupported { id: u64, flag: &'static str },
}

/// Axis-aligned box in pixel coordinates, `(x, y)` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_xywh(xywh: [f64; 4]) -> Self {
        Self::new(xywh[0], xywh[1], xywh[2], xywh[3])
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Finite coordinates and strictly positive extent.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.w > 0.0 && self.h > 0.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Scale about the point `(px, py)` by factor `s`.
    pub fn scaled_about(&self, px: f64, py: f64, s: f64) -> Self {
        Self::new(
            px + (self.x - px) * s,
            py + (self.y - py) * s,
            self.w * s,
            self.h * s,
        )
    }

    fn check(&self, record: impl FnOnce() -> String) -> Result<(), DatasetError> {
        if !self.is_finite() {
            return Err(DatasetError::NonFiniteBox { record: record() });
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(DatasetError::DegenerateBox {
                record: record(),
                w: self.w,
                h: self.h,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub id: ObjectId,
    pub image_id: ImageId,
    pub category: CategoryId,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: ImageId,
    pub category: CategoryId,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Contents of an annotation file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub images: Vec<ImageInfo>,
    pub objects: Vec<GroundTruthObject>,
    pub categories: Vec<Category>,
}

/// Ground truth plus the detections under analysis. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetBundle {
    pub images: Vec<ImageInfo>,
    pub objects: Vec<GroundTruthObject>,
    pub categories: Vec<Category>,
    pub detections: Vec<Detection>,
}

impl DatasetBundle {
    pub fn new(ground_truth: GroundTruth, detections: Vec<Detection>) -> Self {
        Self {
            images: ground_truth.images,
            objects: ground_truth.objects,
            categories: ground_truth.categories,
            detections,
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            images: self.images.clone(),
            objects: self.objects.clone(),
            categories: self.categories.clone(),
        }
    }

    pub fn category_ids(&self) -> Vec<CategoryId> {
        self.categories.iter().map(|c| c.id).collect()
    }

    pub fn category_names(&self) -> CategoryNames {
        CategoryNames::from_categories(&self.categories)
    }

    /// Number of ground-truth objects per category (zero for empty categories).
    pub fn positives(&self) -> BTreeMap<CategoryId, u64> {
        let mut counts: BTreeMap<CategoryId, u64> =
            self.categories.iter().map(|c| (c.id, 0)).collect();
        for obj in &self.objects {
            *counts.entry(obj.category).or_default() += 1;
        }
        counts
    }

    /// Declared categories without a single ground-truth instance. These are
    /// kept in the bundle but cannot be analyzed.
    pub fn empty_categories(&self) -> Vec<CategoryId> {
        self.positives()
            .into_iter()
            .filter(|&(_, n)| n == 0)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn index(&self) -> BundleIndex {
        BundleIndex::new(self)
    }
}

/// Lookup from category id to display name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryNames(BTreeMap<CategoryId, String>);

impl CategoryNames {
    pub fn from_categories(categories: &[Category]) -> Self {
        Self(categories.iter().map(|c| (c.id, c.name.clone())).collect())
    }

    /// Falls back to the numeric id for undeclared categories.
    pub fn name(&self, id: CategoryId) -> String {
        self.0.get(&id).cloned().unwrap_or_else(|| id.0.to_string())
    }
}

/// Per-image object lists, built once per bundle.
#[derive(Debug, Clone, Default)]
pub struct BundleIndex {
    objects_by_image: HashMap<ImageId, Vec<usize>>,
}

impl BundleIndex {
    pub fn new(bundle: &DatasetBundle) -> Self {
        let mut objects_by_image: HashMap<ImageId, Vec<usize>> = HashMap::new();
        for (i, obj) in bundle.objects.iter().enumerate() {
            objects_by_image.entry(obj.image_id).or_default().push(i);
        }
        Self { objects_by_image }
    }

    /// Indices into `bundle.objects` of every object in `image`.
    pub fn object_indices(&self, image: ImageId) -> &[usize] {
        self.objects_by_image
            .get(&image)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn objects_in<'b>(
        &self,
        bundle: &'b DatasetBundle,
        image: ImageId,
    ) -> Vec<&'b GroundTruthObject> {
        self.object_indices(image)
            .iter()
            .map(|&i| &bundle.objects[i])
            .collect()
    }
}

// --- wire format -----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawImage {
    id: u64,
    width: f64,
    height: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing)]
    iscrowd: Option<Value>,
    #[serde(default, skip_serializing)]
    ignore: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotationFile {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    categories: Vec<RawCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDetection {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    score: Value,
}

fn flag_set(v: &Option<Value>) -> bool {
    match v {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::Number(n)) => n.as_f64().is_some_and(|x| x != 0.0),
        Some(_) => true,
    }
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth, DatasetError> {
    parse_ground_truth(&read(path.as_ref())?)
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, DatasetError> {
    let raw: RawAnnotationFile = serde_json::from_str(text)?;
    let categories: Vec<Category> = raw
        .categories
        .into_iter()
        .map(|c| Category {
            id: CategoryId(c.id),
            name: c.name,
        })
        .collect();
    let known: BTreeSet<u64> = categories.iter().map(|c| c.id.0).collect();

    let mut objects = Vec::with_capacity(raw.annotations.len());
    for a in raw.annotations {
        if flag_set(&a.iscrowd) {
            return Err(DatasetError::CrowdUnsupported {
                id: a.id,
                flag: "iscrowd",
            });
        }
        if flag_set(&a.ignore) {
            return Err(DatasetError::CrowdUnsupported {
                id: a.id,
                flag: "ignore",
            });
        }
        if !known.contains(&a.category_id) {
            return Err(DatasetError::UnknownCategory {
                category: a.category_id,
                record: format!("annotation {}", a.id),
            });
        }
        let bbox = BoundingBox::from_xywh(a.bbox);
        bbox.check(|| format!("annotation {}", a.id))?;
        objects.push(GroundTruthObject {
            id: a.id,
            image_id: a.image_id,
            category: CategoryId(a.category_id),
            bbox,
        });
    }

    let images = raw
        .images
        .into_iter()
        .map(|i| ImageInfo {
            id: i.id,
            width: i.width,
            height: i.height,
        })
        .collect();
    Ok(GroundTruth {
        images,
        objects,
        categories,
    })
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>, DatasetError> {
    parse_detections(&read(path.as_ref())?)
}

/// Detections are returned in document order. Scores may be JSON numbers or
/// numeric strings; anything non-finite is rejected.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>, DatasetError> {
    let raw: Vec<RawDetection> = serde_json::from_str(text)?;
    raw.into_iter()
        .enumerate()
        .map(|(index, d)| {
            let confidence = match &d.score {
                Value::Number(n) => n.as_f64().ok_or_else(|| DatasetError::BadScore {
                    index,
                    value: n.to_string(),
                })?,
                Value::String(s) => {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| DatasetError::BadScore {
                            index,
                            value: s.clone(),
                        })?
                }
                other => {
                    return Err(DatasetError::BadScore {
                        index,
                        value: other.to_string(),
                    })
                }
            };
            if !confidence.is_finite() {
                return Err(DatasetError::NonFiniteConfidence { index });
            }
            let bbox = BoundingBox::from_xywh(d.bbox);
            bbox.check(|| format!("detection {index}"))?;
            Ok(Detection {
                image_id: d.image_id,
                category: CategoryId(d.category_id),
                bbox,
                confidence,
            })
        })
        .collect()
}

pub fn ground_truth_to_json(gt: &GroundTruth) -> String {
    let raw = RawAnnotationFile {
        images: gt
            .images
            .iter()
            .map(|i| RawImage {
                id: i.id,
                width: i.width,
                height: i.height,
            })
            .collect(),
        annotations: gt
            .objects
            .iter()
            .map(|o| RawAnnotation {
                id: o.id,
                image_id: o.image_id,
                category_id: o.category.0,
                bbox: o.bbox.to_xywh(),
                iscrowd: None,
                ignore: None,
            })
            .collect(),
        categories: gt
            .categories
            .iter()
            .map(|c| RawCategory {
                id: c.id.0,
                name: c.name.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("annotation document serializes")
}

pub fn detections_to_json(dets: &[Detection]) -> String {
    let raw: Vec<RawDetection> = dets
        .iter()
        .map(|d| RawDetection {
            image_id: d.image_id,
            category_id: d.category.0,
            bbox: d.bbox.to_xywh(),
            score: Value::from(d.confidence),
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("detection document serializes")
}

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<(), DatasetError> {
    write(path.as_ref(), ground_truth_to_json(gt))
}

pub fn write_detections(path: impl AsRef<Path>, dets: &[Detection]) -> Result<(), DatasetError> {
    write(path.as_ref(), detections_to_json(dets))
}

fn write(path: &Path, body: String) -> Result<(), DatasetError> {
    fs::write(path, body + "\n").map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// --- validation ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    DuplicateImageId {
        image_id: ImageId,
    },
    DuplicateCategoryId {
        category: CategoryId,
    },
    DuplicateObjectId {
        object_id: ObjectId,
    },
    ObjectOnUndeclaredImage {
        object_id: ObjectId,
        image_id: ImageId,
    },
    ObjectUnknownCategory {
        object_id: ObjectId,
        category: CategoryId,
    },
    ObjectDegenerateBox {
        object_id: ObjectId,
    },
    DetectionOnUndeclaredImage {
        index: usize,
        image_id: ImageId,
    },
    DetectionUnknownCategory {
        index: usize,
        category: CategoryId,
    },
    DetectionDegenerateBox {
        index: usize,
    },
    DetectionNonFiniteConfidence {
        index: usize,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            DuplicateImageId { image_id } => write!(f, "duplicate image id {image_id}"),
            DuplicateCategoryId { category } => write!(f, "duplicate category id {category}"),
            DuplicateObjectId { object_id } => write!(f, "duplicate object id {object_id}"),
            ObjectOnUndeclaredImage {
                object_id,
                image_id,
            } => write!(
                f,
                "object {object_id} references undeclared image {image_id}"
            ),
            ObjectUnknownCategory {
                object_id,
                category,
            } => write!(
                f,
                "object {object_id} references unknown category {category}"
            ),
            ObjectDegenerateBox { object_id } => {
                write!(f, "object {object_id} has a degenerate box")
            }
            DetectionOnUndeclaredImage { index, image_id } => {
                write!(
                    f,
                    "detection {index} references undeclared image {image_id}"
                )
            }
            DetectionUnknownCategory { index, category } => {
                write!(
                    f,
                    "detection {index} references unknown category {category}"
                )
            }
            DetectionDegenerateBox { index } => write!(f, "detection {index} has a degenerate box"),
            DetectionNonFiniteConfidence { index } => {
                write!(f, "detection {index} has a non-finite confidence")
            }
        }
    }
}

/// Checks every bundle invariant. An empty report means the bundle is consistent.
pub fn validate_bundle(bundle: &DatasetBundle) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();

    let mut images = BTreeSet::new();
    for img in &bundle.images {
        if !images.insert(img.id) {
            issues.push(ValidationIssue::DuplicateImageId { image_id: img.id });
        }
    }
    let mut categories = BTreeSet::new();
    for c in &bundle.categories {
        if !categories.insert(c.id) {
            issues.push(ValidationIssue::DuplicateCategoryId { category: c.id });
        }
    }

    let mut object_ids = BTreeSet::new();
    for obj in &bundle.objects {
        if !object_ids.insert(obj.id) {
            issues.push(ValidationIssue::DuplicateObjectId { object_id: obj.id });
        }
        if !images.contains(&obj.image_id) {
            issues.push(ValidationIssue::ObjectOnUndeclaredImage {
                object_id: obj.id,
                image_id: obj.image_id,
            });
        }
        if !categories.contains(&obj.category) {
            issues.push(ValidationIssue::ObjectUnknownCategory {
                object_id: obj.id,
                category: obj.category,
            });
        }
        if !obj.bbox.is_valid() {
            issues.push(ValidationIssue::ObjectDegenerateBox { object_id: obj.id });
        }
    }

    for (index, det) in bundle.detections.iter().enumerate() {
        if !images.contains(&det.image_id) {
            issues.push(ValidationIssue::DetectionOnUndeclaredImage {
                index,
                image_id: det.image_id,
            });
        }
        if !categories.contains(&det.category) {
            issues.push(ValidationIssue::DetectionUnknownCategory {
                index,
                category: det.category,
            });
        }
        if !det.bbox.is_valid() {
            issues.push(ValidationIssue::DetectionDegenerateBox { index });
        }
        if !det.confidence.is_finite() {
            issues.push(ValidationIssue::DetectionNonFiniteConfidence { index });
        }
    }
    issues
}
