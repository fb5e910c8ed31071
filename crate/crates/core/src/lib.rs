//! Tag-based hybrid recommender for an academic library and its institutional
//! repository.
//!
//! Loan history is turned into weighted user tag profiles, items are matched
//! against threshold groups of those profiles, users with near-identical
//! profiles share their borrowed books, and explicit 0-3 feedback reshapes the
//! profiles between cycles.

pub mod engine;
pub mod evaluate;
pub mod events;
pub mod ingest;
pub mod preprocess;
pub mod profile;
pub mod recommend;
pub mod similarity;
pub mod store;
pub mod synth;

pub use engine::{CycleOutput, CycleSettings, ItemIndex};
pub use evaluate::{ConfusionCounts, FeedbackRating, MetricsReport};
pub use ingest::{BookRecord, Corpus, DocumentRecord, Enrollment, LoanEvent, StopwordList};
pub use preprocess::{NormalizerConfig, Tag};
pub use profile::{
    CorpusStats, IdfMode, IrrelevantTagList, ItemKind, ItemRef, ItemTagSet, UserProfile,
    WeightedTagList, WeightingConfig,
};
pub use recommend::{GroupingConfig, RecommendationItem, RecommendationList};
pub use similarity::{CfConfig, SimilarityMatrix};
