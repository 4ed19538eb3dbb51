//! Contextual relations evaluated against ground truth.
//!
//! A relation is a binary predicate over a detection and the ground-truth
//! objects of its image. Atoms test for co-occurrence of a category
//! (ignoring objects that overlap the detection itself) or for the presence
//! of a category's object center in one cell of a grid anchored on the
//! detection. Atoms combine into `and`/`or` pairs.
//!
//! Spatial cells are square with side `height_factor * det.h`. Cell `[0,0]`
//! holds the detection center; the first index grows downwards, the second
//! to the right.

use std::fmt;

use crate::dataset::{
    BoundingBox, BundleIndex, CategoryId, CategoryNames, DatasetBundle, GroundTruthObject,
};
use crate::matching::{iou, EvaluatedDetection, ERROR_OVERLAP_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    /// Vertical offset, positive downwards.
    pub v: i32,
    /// Horizontal offset, positive to the right.
    pub h: i32,
}

impl Cell {
    pub const fn new(v: i32, h: i32) -> Self {
        Self { v, h }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelationError {
    #[error("height factor must be positive, got {0}")]
    HeightFactor(f64),
    #[error("grid extent must be at least 1")]
    GridExtent,
    #[error("composites combine two atomic relations only")]
    NestedComposite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialFrameConfig {
    height_factor: f64,
    grid_extent: u32,
}

impl SpatialFrameConfig {
    pub fn new(height_factor: f64, grid_extent: u32) -> Result<Self, RelationError> {
        if !(height_factor > 0.0 && height_factor.is_finite()) {
            return Err(RelationError::HeightFactor(height_factor));
        }
        if grid_extent < 1 {
            return Err(RelationError::GridExtent);
        }
        Ok(Self {
            height_factor,
            grid_extent,
        })
    }

    pub fn height_factor(&self) -> f64 {
        self.height_factor
    }

    pub fn grid_extent(&self) -> u32 {
        self.grid_extent
    }

    /// All cells `[v,h]` with `v, h` in `[-G, G]`, row-major.
    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        let g = self.grid_extent as i32;
        (-g..=g).flat_map(move |v| (-g..=g).map(move |h| Cell::new(v, h)))
    }
}

impl Default for SpatialFrameConfig {
    fn default() -> Self {
        Self {
            height_factor: 1.0,
            grid_extent: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Relation {
    Constant(bool),
    Random(u64),
    CoOccurrence(CategoryId),
    Spatial(CategoryId, Cell),
    And(Box<Relation>, Box<Relation>),
    Or(Box<Relation>, Box<Relation>),
}

impl Relation {
    pub fn and(a: Relation, b: Relation) -> Result<Relation, RelationError> {
        if !a.is_atomic() || !b.is_atomic() {
            return Err(RelationError::NestedComposite);
        }
        Ok(Relation::And(Box::new(a), Box::new(b)))
    }

    pub fn or(a: Relation, b: Relation) -> Result<Relation, RelationError> {
        if !a.is_atomic() || !b.is_atomic() {
            return Err(RelationError::NestedComposite);
        }
        Ok(Relation::Or(Box::new(a), Box::new(b)))
    }

    pub fn is_atomic(&self) -> bool {
        !matches!(self, Relation::And(..) | Relation::Or(..))
    }

    /// Whether the relation may take part in an and/or pair.
    pub fn is_composable(&self) -> bool {
        matches!(self, Relation::CoOccurrence(_) | Relation::Spatial(..))
    }

    /// Whether any atom of the relation is a co-occurrence test on `category`.
    pub fn mentions_cooccurrence(&self, category: CategoryId) -> bool {
        match self {
            Relation::CoOccurrence(c) => *c == category,
            Relation::And(a, b) | Relation::Or(a, b) => {
                a.mentions_cooccurrence(category) || b.mentions_cooccurrence(category)
            }
            _ => false,
        }
    }

    /// Canonical report string, e.g. `or(spatial(zebra,[0,-1]),cooccur(bowl))`.
    pub fn display<'a>(&'a self, names: &'a CategoryNames) -> RelationDisplay<'a> {
        RelationDisplay {
            relation: self,
            names,
        }
    }

    pub fn canonical(&self, names: &CategoryNames) -> String {
        self.display(names).to_string()
    }
}

pub struct RelationDisplay<'a> {
    relation: &'a Relation,
    names: &'a CategoryNames,
}

impl fmt::Display for RelationDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names;
        match self.relation {
            Relation::Constant(v) => write!(f, "const({})", u8::from(*v)),
            Relation::Random(seed) => write!(f, "random({seed})"),
            Relation::CoOccurrence(c) => write!(f, "cooccur({})", names.name(*c)),
            Relation::Spatial(c, cell) => {
                write!(f, "spatial({},[{},{}])", names.name(*c), cell.v, cell.h)
            }
            Relation::And(a, b) => write!(f, "and({},{})", a.display(names), b.display(names)),
            Relation::Or(a, b) => write!(f, "or({},{})", a.display(names), b.display(names)),
        }
    }
}

/// Context attached to a detection. Built-in relations are always binary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContextValue {
    Binary(bool),
    Real(f64),
}

impl ContextValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ContextValue::Binary(b) => f64::from(u8::from(b)),
            ContextValue::Real(x) => x,
        }
    }

    /// `Some` for binary values and for reals that are exactly 0 or 1.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            ContextValue::Binary(b) => Some(b),
            ContextValue::Real(0.0) => Some(false),
            ContextValue::Real(1.0) => Some(true),
            ContextValue::Real(_) => None,
        }
    }
}

impl From<bool> for ContextValue {
    fn from(b: bool) -> Self {
        ContextValue::Binary(b)
    }
}

/// Cell of `point` in the frame anchored on `det_box`.
pub fn spatial_cell(det_box: &BoundingBox, point: (f64, f64), cfg: &SpatialFrameConfig) -> Cell {
    let (cx, cy) = det_box.center();
    let side = cfg.height_factor * det_box.h;
    let v = ((point.1 - cy) / side + 0.5).floor();
    let h = ((point.0 - cx) / side + 0.5).floor();
    Cell::new(saturate(v), saturate(h))
}

fn saturate(x: f64) -> i32 {
    x.clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded coin for the random-context baseline; depends on `(seed, index)` only.
pub fn random_bit(seed: u64, detection_index: usize) -> bool {
    splitmix64(splitmix64(seed) ^ detection_index as u64) & 1 == 1
}

fn excluded(det_box: &BoundingBox, obj: &GroundTruthObject) -> bool {
    iou(det_box, &obj.bbox) > ERROR_OVERLAP_FLOOR
}

/// Evaluates `rel` for one detection against the objects of its image.
pub fn eval_relation(
    rel: &Relation,
    det: &EvaluatedDetection,
    image_objects: &[&GroundTruthObject],
    cfg: &SpatialFrameConfig,
) -> ContextValue {
    ContextValue::Binary(eval_bool(rel, det, image_objects, cfg))
}

fn eval_bool(
    rel: &Relation,
    det: &EvaluatedDetection,
    image_objects: &[&GroundTruthObject],
    cfg: &SpatialFrameConfig,
) -> bool {
    let det_box = &det.detection.bbox;
    match rel {
        Relation::Constant(v) => *v,
        Relation::Random(seed) => random_bit(*seed, det.index),
        Relation::CoOccurrence(c) => image_objects
            .iter()
            .any(|o| o.category == *c && !excluded(det_box, o)),
        Relation::Spatial(c, cell) => image_objects.iter().any(|o| {
            o.category == *c
                && !excluded(det_box, o)
                && spatial_cell(det_box, o.bbox.center(), cfg) == *cell
        }),
        Relation::And(a, b) => {
            eval_bool(a, det, image_objects, cfg) && eval_bool(b, det, image_objects, cfg)
        }
        Relation::Or(a, b) => {
            eval_bool(a, det, image_objects, cfg) || eval_bool(b, det, image_objects, cfg)
        }
    }
}

/// `const(0)` followed, per category, by its co-occurrence atom and one
/// spatial atom per grid cell.
pub fn enumerate_atomic_relations(
    categories: &[CategoryId],
    cfg: &SpatialFrameConfig,
) -> Vec<Relation> {
    let mut out = vec![Relation::Constant(false)];
    for &c in categories {
        out.push(Relation::CoOccurrence(c));
        out.extend(cfg.cells().map(|cell| Relation::Spatial(c, cell)));
    }
    out
}

/// All and/or pairs over the first `k` composable relations of `top_relations`.
///
/// Constant and random relations are skipped before taking the first `k`.
pub fn compose_pairs(top_relations: &[Relation], k: usize) -> Vec<Relation> {
    let atoms: Vec<&Relation> = top_relations
        .iter()
        .filter(|r| r.is_composable())
        .take(k)
        .collect();
    let mut out = Vec::with_capacity(atoms.len() * atoms.len().saturating_sub(1));
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            out.push(Relation::And(
                Box::new(atoms[i].clone()),
                Box::new(atoms[j].clone()),
            ));
            out.push(Relation::Or(
                Box::new(atoms[i].clone()),
                Box::new(atoms[j].clone()),
            ));
        }
    }
    out
}

/// Evaluates `rel` on every detection, keeping order.
pub fn annotate_context<'d>(
    dets: &'d [EvaluatedDetection],
    rel: &Relation,
    bundle: &DatasetBundle,
    index: &BundleIndex,
    cfg: &SpatialFrameConfig,
) -> Vec<(&'d EvaluatedDetection, ContextValue)> {
    dets.iter()
        .map(|d| {
            let objs = index.objects_in(bundle, d.detection.image_id);
            (d, eval_relation(rel, d, &objs, cfg))
        })
        .collect()
}

/// Precomputed view of one detection's surroundings, for evaluating many
/// relations on the same detection. Agrees with [`eval_relation`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextProfile {
    detection_index: usize,
    cooccurring: Vec<CategoryId>,
    cells: Vec<(CategoryId, Cell)>,
}

impl ContextProfile {
    pub fn new(
        det: &EvaluatedDetection,
        image_objects: &[&GroundTruthObject],
        cfg: &SpatialFrameConfig,
    ) -> Self {
        let det_box = &det.detection.bbox;
        let mut cooccurring = Vec::new();
        let mut cells = Vec::new();
        for o in image_objects {
            if excluded(det_box, o) {
                continue;
            }
            cooccurring.push(o.category);
            cells.push((o.category, spatial_cell(det_box, o.bbox.center(), cfg)));
        }
        cooccurring.sort_unstable();
        cooccurring.dedup();
        cells.sort_unstable();
        cells.dedup();
        Self {
            detection_index: det.index,
            cooccurring,
            cells,
        }
    }

    pub fn eval(&self, rel: &Relation) -> bool {
        match rel {
            Relation::Constant(v) => *v,
            Relation::Random(seed) => random_bit(*seed, self.detection_index),
            Relation::CoOccurrence(c) => self.cooccurring.binary_search(c).is_ok(),
            Relation::Spatial(c, cell) => self.cells.binary_search(&(*c, *cell)).is_ok(),
            Relation::And(a, b) => self.eval(a) && self.eval(b),
            Relation::Or(a, b) => self.eval(a) || self.eval(b),
        }
    }
}
