//! Upper bounds on the average-precision gain obtainable by re-scoring
//! object detections with contextual information.
//!
//! The pipeline ingests ground truth and detections ([`dataset`]), matches
//! them ([`matching`]), evaluates contextual relations against ground truth
//! ([`relation`]), bins the confidence x context space and ranks the bins
//! ([`ap`]), and searches relations for the best attainable AP per category
//! ([`bounds`]). [`capacity`] measures how well a relation separates
//! confident true detections from one type of false detection, and
//! [`synth`] generates datasets with planted context for testing.

pub mod ap;
pub mod bounds;
pub mod capacity;
pub mod dataset;
pub mod matching;
pub mod relation;
pub mod synth;

pub use ap::{ApError, ApValue, BinCounts, BinGrid, RankedBinSequence};
pub use bounds::{AnalysisError, BoundResult, CategoryAnalysis, SearchConfig};
pub use capacity::CapacityResult;
pub use dataset::{
    BoundingBox, CategoryId, DatasetBundle, DatasetError, Detection, GroundTruth, GroundTruthObject,
};
pub use matching::{ErrorType, EvaluatedDetection, MatchConfig, TruthStatus};
pub use relation::{Cell, ContextValue, Relation, SpatialFrameConfig};
pub use synth::{SynthConfig, SynthError};
