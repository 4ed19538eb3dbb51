//! Synthetic ground truth and detections with a planted contextual signal.
//!
//! Scenes hold non-overlapping boxes. Every generated false detection is
//! built so that the matcher assigns it the intended error type, and context
//! objects are co-inserted with a configurable dependence on whether the
//! image holds a true positive of the planted target.
//!
//! The config is a flat `key = value` text file; see [`SynthConfig::parse`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{
    BoundingBox, Category, CategoryId, DatasetBundle, Detection, GroundTruthObject, ImageInfo,
};
use crate::matching::{iou, ErrorType, ERROR_OVERLAP_FLOOR};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("infeasible placement: {0}")]
    Infeasible(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

/// Normal score model; confidences are left unclamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreModel {
    pub mean: f64,
    pub spread: f64,
}

impl fmt::Display for ScoreModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}", self.mean, self.spread)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMix {
    pub localization: f64,
    pub class_confusion: f64,
    pub background: f64,
}

impl ErrorMix {
    pub fn weight(&self, e: ErrorType) -> f64 {
        match e {
            ErrorType::Localization => self.localization,
            ErrorType::ClassConfusion => self.class_confusion,
            ErrorType::Background => self.background,
        }
    }
}

/// How localization errors are shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalizationMode {
    /// Random jitter of the ground-truth box.
    Jitter,
    /// Widen a true detection about its center. Center and height are kept,
    /// so the error sees the same spatial context as its true partner. Each
    /// true detection receives at most one such error until all have one.
    Stretch,
}

impl LocalizationMode {
    fn as_str(self) -> &'static str {
        match self {
            LocalizationMode::Jitter => "jitter",
            LocalizationMode::Stretch => "stretch",
        }
    }
}

/// Context objects of `context` appear with probability `rho` in images
/// holding a true positive of `target`, and `1 - rho` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub target: String,
    pub context: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_images: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub categories: Vec<String>,
    /// Inclusive per-image object count range by category name.
    pub objects: BTreeMap<String, (u32, u32)>,
    /// Categories that receive detections. Empty means every category that
    /// is not a planted context.
    pub detect: Vec<String>,
    pub box_size: Range,
    pub min_gap: f64,
    pub detect_rate: f64,
    pub true_iou: Range,
    pub true_jitter: f64,
    pub localization_iou: Range,
    pub localization_jitter: f64,
    pub localization_mode: LocalizationMode,
    pub errors: ErrorMix,
    pub false_per_image: f64,
    pub true_score: ScoreModel,
    pub false_score: ScoreModel,
    pub plants: Vec<Plant>,
    pub match_iou: f64,
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            num_images: 100,
            image_width: 640.0,
            image_height: 480.0,
            categories: vec!["object".into()],
            objects: BTreeMap::new(),
            detect: Vec::new(),
            box_size: Range::new(40.0, 120.0),
            min_gap: 4.0,
            detect_rate: 1.0,
            true_iou: Range::new(0.5, 1.0),
            true_jitter: 0.15,
            localization_iou: Range::new(0.1, 0.5),
            localization_jitter: 0.5,
            localization_mode: LocalizationMode::Jitter,
            errors: ErrorMix {
                localization: 1.0 / 3.0,
                class_confusion: 1.0 / 3.0,
                background: 1.0 / 3.0,
            },
            false_per_image: 1.0,
            true_score: ScoreModel {
                mean: 0.7,
                spread: 0.15,
            },
            false_score: ScoreModel {
                mean: 0.4,
                spread: 0.15,
            },
            plants: Vec::new(),
            match_iou: 0.5,
            max_attempts: 2000,
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got `{}`", s.trim()))
}

fn parse_range(s: &str) -> Result<Range, String> {
    match s.split_once("..") {
        Some((a, b)) => Ok(Range::new(parse_f64(a)?, parse_f64(b)?)),
        None => {
            let v = parse_f64(s)?;
            Ok(Range::new(v, v))
        }
    }
}

fn parse_count_range(s: &str) -> Result<(u32, u32), String> {
    let int = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| format!("expected a count, got `{}`", t.trim()))
    };
    match s.split_once("..") {
        Some((a, b)) => Ok((int(a)?, int(b)?)),
        None => {
            let v = int(s)?;
            Ok((v, v))
        }
    }
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(parse_f64).collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers"));
    }
    Ok(v)
}

fn parse_plant(s: &str) -> Result<Plant, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [target, context, rho] => Ok(Plant {
            target: target.to_string(),
            context: context.to_string(),
            rho: parse_f64(rho)?,
        }),
        _ => Err("plant expects `target:context:rho`".into()),
    }
}

impl SynthConfig {
    /// Parse the flat text format. Blank lines and `#` comments are ignored;
    /// unspecified keys keep their defaults. `plant` may repeat.
    pub fn parse(text: &str) -> Result<SynthConfig, SynthError> {
        let mut cfg = SynthConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SynthError::Parse {
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<SynthConfig, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        SynthConfig::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if let Some(name) = key.strip_prefix("objects.") {
            self.objects
                .insert(name.trim().to_string(), parse_count_range(value)?);
            return Ok(());
        }
        match key {
            "seed" => self.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
            "num_images" => {
                self.num_images = value
                    .parse()
                    .map_err(|_| format!("bad image count `{value}`"))?
            }
            "image_width" => self.image_width = parse_f64(value)?,
            "image_height" => self.image_height = parse_f64(value)?,
            "categories" => self.categories = parse_list(value),
            "detect" => self.detect = parse_list(value),
            "box_size" => self.box_size = parse_range(value)?,
            "min_gap" => self.min_gap = parse_f64(value)?,
            "detect_rate" => self.detect_rate = parse_f64(value)?,
            "true_iou" => self.true_iou = parse_range(value)?,
            "true_jitter" => self.true_jitter = parse_f64(value)?,
            "localization_iou" => self.localization_iou = parse_range(value)?,
            "localization_jitter" => self.localization_jitter = parse_f64(value)?,
            "localization_mode" => {
                self.localization_mode = match value {
                    "jitter" => LocalizationMode::Jitter,
                    "stretch" => LocalizationMode::Stretch,
                    _ => return Err(format!("unknown localization mode `{value}`")),
                }
            }
            "errors" => {
                let w = parse_numbers(value, 3)?;
                self.errors = ErrorMix {
                    localization: w[0],
                    class_confusion: w[1],
                    background: w[2],
                };
            }
            "false_per_image" => self.false_per_image = parse_f64(value)?,
            "true_score" => {
                let v = parse_numbers(value, 2)?;
                self.true_score = ScoreModel {
                    mean: v[0],
                    spread: v[1],
                };
            }
            "false_score" => {
                let v = parse_numbers(value, 2)?;
                self.false_score = ScoreModel {
                    mean: v[0],
                    spread: v[1],
                };
            }
            "plant" => self.plants.push(parse_plant(value)?),
            "match_iou" => self.match_iou = parse_f64(value)?,
            "max_attempts" => {
                self.max_attempts = value
                    .parse()
                    .map_err(|_| format!("bad attempt count `{value}`"))?
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.categories.is_empty() {
            return bad("no categories".into());
        }
        let known: BTreeSet<&str> = self.categories.iter().map(String::as_str).collect();
        if known.len() != self.categories.len() {
            return bad("duplicate category name".into());
        }
        let check_name = |name: &str| -> Result<(), SynthError> {
            if known.contains(name) {
                Ok(())
            } else {
                Err(SynthError::Invalid(format!("unknown category `{name}`")))
            }
        };
        for (name, &(lo, hi)) in &self.objects {
            check_name(name)?;
            if lo > hi {
                return bad(format!("object range for `{name}` is reversed"));
            }
        }
        for name in &self.detect {
            check_name(name)?;
        }
        for p in &self.plants {
            check_name(&p.target)?;
            check_name(&p.context)?;
            if p.target == p.context {
                return bad(format!("plant `{}` targets itself", p.target));
            }
            if !(0.0..=1.0).contains(&p.rho) {
                return bad(format!("rho {} outside [0, 1]", p.rho));
            }
        }
        let w = &self.errors;
        let weights = [w.localization, w.class_confusion, w.background];
        if weights.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("error weights must be non-negative".into());
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("error weights must sum to 1".into());
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image size must be positive".into());
        }
        if !(self.box_size.min > 0.0 && self.box_size.min <= self.box_size.max) {
            return bad("box size range must be positive and ordered".into());
        }
        if !(self.match_iou > ERROR_OVERLAP_FLOOR && self.match_iou <= 1.0) {
            return bad("match IoU must lie in (0.1, 1]".into());
        }
        if !(self.true_iou.min >= self.match_iou && self.true_iou.min <= self.true_iou.max) {
            return bad("true IoU range must start at or above the match IoU".into());
        }
        let li = self.localization_iou;
        if !(li.min >= ERROR_OVERLAP_FLOOR && li.max <= self.match_iou && li.min < li.max) {
            return bad("localization IoU range must lie within [0.1, match IoU]".into());
        }
        if !(0.0..=1.0).contains(&self.detect_rate) {
            return bad("detect rate outside [0, 1]".into());
        }
        if !(self.false_per_image >= 0.0 && self.false_per_image.is_finite()) {
            return bad("false_per_image must be non-negative".into());
        }
        for s in [self.true_score, self.false_score] {
            if !(s.mean.is_finite() && s.spread.is_finite() && s.spread >= 0.0) {
                return bad("score model needs a finite mean and non-negative spread".into());
            }
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        Ok(())
    }

    fn context_names(&self) -> BTreeSet<&str> {
        self.plants.iter().map(|p| p.context.as_str()).collect()
    }

    fn detect_names(&self) -> Vec<&str> {
        if self.detect.is_empty() {
            let ctx = self.context_names();
            self.categories
                .iter()
                .map(String::as_str)
                .filter(|c| !ctx.contains(c))
                .collect()
        } else {
            self.detect.iter().map(String::as_str).collect()
        }
    }
}

impl fmt::Display for SynthConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "num_images = {}", self.num_images)?;
        writeln!(f, "image_width = {}", self.image_width)?;
        writeln!(f, "image_height = {}", self.image_height)?;
        writeln!(f, "categories = {}", self.categories.join(", "))?;
        for (name, (lo, hi)) in &self.objects {
            writeln!(f, "objects.{name} = {lo}..{hi}")?;
        }
        if !self.detect.is_empty() {
            writeln!(f, "detect = {}", self.detect.join(", "))?;
        }
        writeln!(f, "box_size = {}", self.box_size)?;
        writeln!(f, "min_gap = {}", self.min_gap)?;
        writeln!(f, "detect_rate = {}", self.detect_rate)?;
        writeln!(f, "true_iou = {}", self.true_iou)?;
        writeln!(f, "true_jitter = {}", self.true_jitter)?;
        writeln!(f, "localization_iou = {}", self.localization_iou)?;
        writeln!(f, "localization_jitter = {}", self.localization_jitter)?;
        writeln!(f, "localization_mode = {}", self.localization_mode.as_str())?;
        let e = &self.errors;
        writeln!(
            f,
            "errors = {}, {}, {}",
            e.localization, e.class_confusion, e.background
        )?;
        writeln!(f, "false_per_image = {}", self.false_per_image)?;
        writeln!(f, "true_score = {}", self.true_score)?;
        writeln!(f, "false_score = {}", self.false_score)?;
        for p in &self.plants {
            writeln!(f, "plant = {}:{}:{}", p.target, p.context, p.rho)?;
        }
        writeln!(f, "match_iou = {}", self.match_iou)?;
        writeln!(f, "max_attempts = {}", self.max_attempts)
    }
}

/// A generated bundle plus the intended status of each detection:
/// `None` for true detections, the error type otherwise.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub bundle: DatasetBundle,
    pub intended: Vec<Option<ErrorType>>,
}

struct Scene {
    objects: Vec<(CategoryId, BoundingBox)>,
    dets: Vec<BoundingBox>,
    /// Categories with a true positive in this image.
    positives: BTreeSet<CategoryId>,
}

struct Generator<'c> {
    cfg: &'c SynthConfig,
    rng: ChaCha8Rng,
    ids: BTreeMap<&'c str, CategoryId>,
    true_score: Normal<f64>,
    false_score: Normal<f64>,
}

fn score_dist(m: ScoreModel) -> Normal<f64> {
    Normal::new(m.mean, m.spread).expect("validated score model")
}

fn separated(a: &BoundingBox, b: &BoundingBox, gap: f64) -> bool {
    a.right() + gap <= b.x
        || b.right() + gap <= a.x
        || a.bottom() + gap <= b.y
        || b.bottom() + gap <= a.y
}

fn max_iou_with<'a>(b: &BoundingBox, others: impl IntoIterator<Item = &'a BoundingBox>) -> f64 {
    others.into_iter().map(|o| iou(b, o)).fold(0.0, f64::max)
}

impl<'c> Generator<'c> {
    fn new(cfg: &'c SynthConfig) -> Self {
        Generator {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            ids: cfg
                .categories
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), CategoryId(i as u64 + 1)))
                .collect(),
            true_score: score_dist(cfg.true_score),
            false_score: score_dist(cfg.false_score),
        }
    }

    fn random_box(&mut self) -> BoundingBox {
        let w = self.cfg.box_size.sample(&mut self.rng);
        let h = self.cfg.box_size.sample(&mut self.rng);
        let x = self
            .rng
            .random_range(0.0..=(self.cfg.image_width - w).max(0.0));
        let y = self
            .rng
            .random_range(0.0..=(self.cfg.image_height - h).max(0.0));
        BoundingBox::new(x, y, w, h)
    }

    /// A box inside the image, separated from every object by the gap and
    /// overlapping no detection by more than the error floor.
    fn place_object(&mut self, scene: &Scene, image: usize) -> Result<BoundingBox, SynthError> {
        if self.cfg.box_size.min > self.cfg.image_width
            || self.cfg.box_size.min > self.cfg.image_height
        {
            return Err(SynthError::Infeasible(format!(
                "boxes of at least {} do not fit a {}x{} image",
                self.cfg.box_size.min, self.cfg.image_width, self.cfg.image_height
            )));
        }
        for _ in 0..self.cfg.max_attempts {
            let b = self.random_box();
            if b.w > self.cfg.image_width || b.h > self.cfg.image_height {
                continue;
            }
            let clear = scene
                .objects
                .iter()
                .all(|(_, o)| separated(&b, o, self.cfg.min_gap));
            if clear && max_iou_with(&b, &scene.dets) <= ERROR_OVERLAP_FLOOR {
                return Ok(b);
            }
        }
        Err(SynthError::Infeasible(format!(
            "no room for another object in image {image}"
        )))
    }

    fn jitter(&mut self, b: &BoundingBox, amount: f64) -> BoundingBox {
        let a = amount.max(1e-6);
        let dx = self.rng.random_range(-a..a) * b.w;
        let dy = self.rng.random_range(-a..a) * b.h;
        let sw = self.rng.random_range(-a..a).exp();
        let sh = self.rng.random_range(-a..a).exp();
        let (cx, cy) = b.center();
        let (w, h) = (b.w * sw, b.h * sh);
        BoundingBox::new(cx + dx - w / 2.0, cy + dy - h / 2.0, w, h)
    }

    /// Jittered copy of object `k` whose IoU with it lies in `range` and whose
    /// overlap with every other object stays at or below the error floor.
    fn jitter_into(
        &mut self,
        scene: &Scene,
        k: usize,
        range: Range,
        amount: f64,
        half_open: bool,
    ) -> Option<BoundingBox> {
        let target = scene.objects[k].1;
        for _ in 0..self.cfg.max_attempts {
            let b = self.jitter(&target, amount);
            let o = iou(&b, &target);
            let inside = if half_open {
                o > range.min && o < range.max
            } else {
                o >= range.min && o <= range.max
            };
            if inside && self.others_clear(scene, k, &b) {
                return Some(b);
            }
        }
        None
    }

    fn others_clear(&self, scene: &Scene, k: usize, b: &BoundingBox) -> bool {
        scene
            .objects
            .iter()
            .enumerate()
            .all(|(j, (_, o))| j == k || iou(b, o) <= ERROR_OVERLAP_FLOOR)
    }

    fn generate(mut self) -> Result<SynthOutput, SynthError> {
        let cfg = self.cfg;
        let contexts = cfg.context_names();
        let detect: BTreeSet<CategoryId> = cfg.detect_names().iter().map(|n| self.ids[n]).collect();

        // Layout: non-context objects first.
        let mut scenes: Vec<Scene> = Vec::with_capacity(cfg.num_images);
        for image in 0..cfg.num_images {
            let mut scene = Scene {
                objects: Vec::new(),
                dets: Vec::new(),
                positives: BTreeSet::new(),
            };
            for name in &cfg.categories {
                if contexts.contains(name.as_str()) {
                    continue;
                }
                let (lo, hi) = cfg.objects.get(name).copied().unwrap_or((0, 0));
                let count = self.rng.random_range(lo..=hi);
                for _ in 0..count {
                    let b = self.place_object(&scene, image + 1)?;
                    scene.objects.push((self.ids[name.as_str()], b));
                }
            }
            scenes.push(scene);
        }

        // True detections.
        let mut detections: Vec<(usize, Detection, Option<ErrorType>)> = Vec::new();
        let mut true_dets: Vec<(usize, usize, BoundingBox)> = Vec::new();
        for (image, scene) in scenes.iter_mut().enumerate() {
            for k in 0..scene.objects.len() {
                let cat = scene.objects[k].0;
                if !detect.contains(&cat) || !self.rng.random_bool(cfg.detect_rate) {
                    continue;
                }
                let b = self
                    .jitter_into(scene, k, cfg.true_iou, cfg.true_jitter, false)
                    .ok_or_else(|| {
                        SynthError::Infeasible(format!(
                            "cannot jitter a true detection into IoU {}",
                            cfg.true_iou
                        ))
                    })?;
                scene.dets.push(b);
                scene.positives.insert(cat);
                true_dets.push((image, k, b));
                let conf = self.true_score.sample(&mut self.rng);
                detections.push((image, self.detection(image, cat, b, conf), None));
            }
        }

        // False detections.
        let total_false = (cfg.false_per_image * cfg.num_images as f64).round() as usize;
        let detect_list: Vec<CategoryId> = detect.iter().copied().collect();
        let planted: BTreeSet<CategoryId> = cfg
            .plants
            .iter()
            .map(|p| self.ids[p.target.as_str()])
            .collect();
        let mut stretch_queue: Vec<usize> = Vec::new();
        for _ in 0..total_false {
            let kind = self.error_kind();
            let made = match kind {
                ErrorType::Localization => match cfg.localization_mode {
                    LocalizationMode::Jitter => self.localization_jitter(&scenes, &detect),
                    LocalizationMode::Stretch => {
                        if stretch_queue.is_empty() {
                            stretch_queue = (0..true_dets.len()).collect();
                            stretch_queue.shuffle(&mut self.rng);
                        }
                        let mut made = None;
                        while let Some(i) = stretch_queue.pop() {
                            made = self.localization_stretch(&scenes, true_dets[i]);
                            if made.is_some() {
                                break;
                            }
                        }
                        made
                    }
                },
                ErrorType::ClassConfusion => self.class_confusion(&scenes, &detect_list, &planted),
                ErrorType::Background => self.background(&scenes, &detect_list, &planted),
            };
            let (image, cat, b) = made.ok_or_else(|| {
                SynthError::Infeasible(format!("cannot place a {} error", kind.as_str()))
            })?;
            scenes[image].dets.push(b);
            let conf = self.false_score.sample(&mut self.rng);
            detections.push((image, self.detection(image, cat, b, conf), Some(kind)));
        }

        // Context objects.
        for plant in &cfg.plants {
            let target = self.ids[plant.target.as_str()];
            let context = self.ids[plant.context.as_str()];
            for (image, scene) in scenes.iter_mut().enumerate() {
                let p = if scene.positives.contains(&target) {
                    plant.rho
                } else {
                    1.0 - plant.rho
                };
                if self.rng.random_bool(p) {
                    let b = self.place_object(scene, image + 1)?;
                    scene.objects.push((context, b));
                }
            }
        }

        detections.sort_by_key(|d| d.0);
        let (dets, intended): (Vec<Detection>, Vec<Option<ErrorType>>) =
            detections.into_iter().map(|(_, d, e)| (d, e)).unzip();

        let mut objects = Vec::new();
        for (image, scene) in scenes.iter().enumerate() {
            for &(category, bbox) in &scene.objects {
                objects.push(GroundTruthObject {
                    id: objects.len() as u64 + 1,
                    image_id: image as u64 + 1,
                    category,
                    bbox,
                });
            }
        }
        let images = (0..cfg.num_images)
            .map(|i| ImageInfo {
                id: i as u64 + 1,
                width: cfg.image_width,
                height: cfg.image_height,
            })
            .collect();
        let categories = cfg
            .categories
            .iter()
            .map(|n| Category {
                id: self.ids[n.as_str()],
                name: n.clone(),
            })
            .collect();
        Ok(SynthOutput {
            bundle: DatasetBundle {
                images,
                objects,
                categories,
                detections: dets,
            },
            intended,
        })
    }

    fn detection(
        &self,
        image: usize,
        category: CategoryId,
        bbox: BoundingBox,
        confidence: f64,
    ) -> Detection {
        Detection {
            image_id: image as u64 + 1,
            category,
            bbox,
            confidence,
        }
    }

    fn error_kind(&mut self) -> ErrorType {
        let w = self.cfg.errors;
        let u: f64 = self.rng.random();
        if u < w.localization {
            ErrorType::Localization
        } else if u < w.localization + w.class_confusion {
            ErrorType::ClassConfusion
        } else {
            ErrorType::Background
        }
    }

    fn pick_image(
        &mut self,
        scenes: &[Scene],
        label: CategoryId,
        planted: &BTreeSet<CategoryId>,
        need_objects: bool,
    ) -> Option<usize> {
        let usable = |s: &Scene| !need_objects || !s.objects.is_empty();
        let mut pool: Vec<usize> = (0..scenes.len()).filter(|&i| usable(&scenes[i])).collect();
        if planted.contains(&label) {
            let away: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&i| !scenes[i].positives.contains(&label))
                .collect();
            if !away.is_empty() {
                pool = away;
            }
        }
        pool.choose(&mut self.rng).copied()
    }

    fn localization_jitter(
        &mut self,
        scenes: &[Scene],
        detect: &BTreeSet<CategoryId>,
    ) -> Option<(usize, CategoryId, BoundingBox)> {
        let hosts: Vec<(usize, usize)> = scenes
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                s.objects
                    .iter()
                    .enumerate()
                    .filter(|(_, (c, _))| detect.contains(c))
                    .map(move |(k, _)| (i, k))
            })
            .collect();
        for _ in 0..16 {
            let &(image, k) = hosts.choose(&mut self.rng)?;
            let range = self.cfg.localization_iou;
            let amount = self.cfg.localization_jitter;
            if let Some(b) = self.jitter_into(&scenes[image], k, range, amount, true) {
                return Some((image, scenes[image].objects[k].0, b));
            }
        }
        None
    }

    fn localization_stretch(
        &mut self,
        scenes: &[Scene],
        (image, k, det): (usize, usize, BoundingBox),
    ) -> Option<(usize, CategoryId, BoundingBox)> {
        let scene = &scenes[image];
        let target = scene.objects[k].1;
        let range = self.cfg.localization_iou;
        for _ in 0..self.cfg.max_attempts {
            let u = range.sample(&mut self.rng);
            if u <= 0.0 {
                continue;
            }
            let (cx, _) = det.center();
            let w = det.w / u;
            let b = BoundingBox::new(cx - w / 2.0, det.y, w, det.h);
            let o = iou(&b, &target);
            if o > range.min && o < range.max && self.others_clear(scene, k, &b) {
                return Some((image, scene.objects[k].0, b));
            }
        }
        None
    }

    fn class_confusion(
        &mut self,
        scenes: &[Scene],
        detect: &[CategoryId],
        planted: &BTreeSet<CategoryId>,
    ) -> Option<(usize, CategoryId, BoundingBox)> {
        let labels: Vec<CategoryId> = detect
            .iter()
            .copied()
            .filter(|&l| {
                scenes
                    .iter()
                    .any(|s| s.objects.iter().any(|(c, _)| *c != l))
            })
            .collect();
        let label = *labels.choose(&mut self.rng)?;
        let mut pool: Vec<(usize, usize)> = Vec::new();
        let mut away: Vec<(usize, usize)> = Vec::new();
        for (i, s) in scenes.iter().enumerate() {
            for (k, (c, _)) in s.objects.iter().enumerate() {
                if *c != label {
                    pool.push((i, k));
                    if !s.positives.contains(&label) {
                        away.push((i, k));
                    }
                }
            }
        }
        if planted.contains(&label) && !away.is_empty() {
            pool = away;
        }
        let &(image, k) = pool.choose(&mut self.rng)?;
        Some((image, label, scenes[image].objects[k].1))
    }

    fn background(
        &mut self,
        scenes: &[Scene],
        detect: &[CategoryId],
        planted: &BTreeSet<CategoryId>,
    ) -> Option<(usize, CategoryId, BoundingBox)> {
        let label = *detect.choose(&mut self.rng)?;
        for _ in 0..16 {
            let image = self.pick_image(scenes, label, planted, false)?;
            for _ in 0..self.cfg.max_attempts / 16 + 1 {
                let b = self.random_box();
                let objs = scenes[image].objects.iter().map(|(_, o)| o);
                if max_iou_with(&b, objs) <= ERROR_OVERLAP_FLOOR {
                    return Some((image, label, b));
                }
            }
        }
        None
    }
}

/// Generate a bundle. The same config always yields the same bundle.
pub fn generate(cfg: &SynthConfig) -> Result<DatasetBundle, SynthError> {
    generate_labeled(cfg).map(|o| o.bundle)
}

pub fn generate_labeled(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    Generator::new(cfg).generate()
}
