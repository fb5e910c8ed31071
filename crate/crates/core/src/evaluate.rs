//! Offline evaluation: loan-history confusion counts, feedback-based counts,
//! precision / recall / F-score and CSV reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ItemKind, ItemRef};
use crate::recommend::{GroupingConfig, RecommendationList};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("rating score {0} is outside 0..=3")]
    Score(u8),
    #[error("no ratings to evaluate")]
    NoRatings,
    #[error("empty configuration grid")]
    EmptyGrid,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Recommended-and-relevant, recommended-but-irrelevant and
/// relevant-but-not-recommended counts. The fourth cell is never populated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub nrr: u64,
    pub nir: u64,
    pub nrn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: ConfusionCounts) {
        self.nrr += other.nrr;
        self.nir += other.nir;
        self.nrn += other.nrn;
    }
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.nrr + c.nir;
    if denom == 0 {
        0.0
    } else {
        c.nrr as f64 / denom as f64
    }
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    let denom = c.nrr + c.nrn;
    if denom == 0 {
        0.0
    } else {
        c.nrr as f64 / denom as f64
    }
}

pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    History,
    Feedback,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::History => "history",
            Stage::Feedback => "feedback",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub config: Option<GroupingConfig>,
    pub stage: Stage,
}

impl MetricsReport {
    pub fn from_counts(c: &ConfusionCounts, stage: Stage, config: Option<GroupingConfig>) -> Self {
        let p = precision(c);
        let r = recall(c);
        MetricsReport {
            precision: p,
            recall: r,
            f_score: f_score(p, r),
            config,
            stage,
        }
    }
}

/// An explicit 0-3 rating. 0 means no interest, 3 much interest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRating {
    pub user_id: String,
    pub item_id: String,
    pub item_kind: ItemKind,
    pub score: u8,
    pub rated_at: DateTime<Utc>,
}

impl FeedbackRating {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.score > 3 {
            Err(EvalError::Score(self.score))
        } else {
            Ok(())
        }
    }

    pub fn item_ref(&self) -> ItemRef {
        ItemRef {
            item_id: self.item_id.clone(),
            item_kind: self.item_kind,
        }
    }
}

/// Latest rating per (user, item); later entries overwrite earlier ones.
pub fn latest_ratings<'a>(
    ratings: impl IntoIterator<Item = &'a FeedbackRating>,
) -> BTreeMap<(String, ItemRef), &'a FeedbackRating> {
    let mut out = BTreeMap::new();
    for r in ratings {
        out.insert((r.user_id.clone(), r.item_ref()), r);
    }
    out
}

/// Per-user confusion counts over books only.
pub fn user_history_counts(
    list: Option<&RecommendationList>,
    borrowed: &BTreeSet<String>,
) -> ConfusionCounts {
    let recommended: BTreeSet<&str> = list
        .map(|l| {
            l.items
                .iter()
                .filter(|i| i.item_kind == ItemKind::Book)
                .map(|i| i.item_id.as_str())
                .collect()
        })
        .unwrap_or_default();
    let hits = recommended
        .iter()
        .filter(|id| borrowed.contains(**id))
        .count() as u64;
    ConfusionCounts {
        nrr: hits,
        nir: recommended.len() as u64 - hits,
        nrn: borrowed.len() as u64 - hits,
    }
}

/// Compares lists with borrowed books: a recommended book the user borrowed
/// is a hit, a recommended book they did not borrow a false positive, and a
/// borrowed book missing from the list a miss. Users with loans but no list
/// contribute misses only.
pub fn evaluate_history(
    lists: &BTreeMap<String, RecommendationList>,
    borrowed: &BTreeMap<String, BTreeSet<String>>,
    config: Option<GroupingConfig>,
) -> (ConfusionCounts, MetricsReport) {
    let empty = BTreeSet::new();
    let users: BTreeSet<&String> = lists.keys().chain(borrowed.keys()).collect();
    let mut total = ConfusionCounts::default();
    for user in users {
        total.add(user_history_counts(
            lists.get(user),
            borrowed.get(user).unwrap_or(&empty),
        ));
    }
    let report = MetricsReport::from_counts(&total, Stage::History, config);
    (total, report)
}

/// Relevance (from the score) crossed with whether the rated book was
/// borrowed by the rater.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackTable {
    pub relevant_borrowed: u64,
    pub relevant_not_borrowed: u64,
    pub irrelevant_borrowed: u64,
    pub irrelevant_not_borrowed: u64,
}

impl FeedbackTable {
    /// Hits are relevant borrowed items, false positives irrelevant borrowed
    /// ones and misses relevant items that were not borrowed.
    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            nrr: self.relevant_borrowed,
            nir: self.irrelevant_borrowed,
            nrn: self.relevant_not_borrowed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub table: FeedbackTable,
    pub counts: ConfusionCounts,
    pub metrics: MetricsReport,
    /// Number of ratings per score 0..=3.
    pub histogram: [u64; 4],
    /// `[not borrowed, borrowed]` x score.
    pub borrowed_by_score: [[u64; 4]; 2],
}

/// `relevance_cut` is the lowest score counted as relevant (1 by default).
pub fn evaluate_feedback(
    ratings: &[FeedbackRating],
    borrowed: &BTreeMap<String, BTreeSet<String>>,
    relevance_cut: u8,
) -> Result<FeedbackReport, EvalError> {
    let latest = latest_ratings(ratings);
    if latest.is_empty() {
        return Err(EvalError::NoRatings);
    }
    let mut table = FeedbackTable::default();
    let mut histogram = [0u64; 4];
    let mut by_score = [[0u64; 4]; 2];
    for ((user, item), r) in &latest {
        r.validate()?;
        let was_borrowed = item.item_kind == ItemKind::Book
            && borrowed
                .get(user)
                .is_some_and(|b| b.contains(&item.item_id));
        let relevant = r.score >= relevance_cut;
        match (relevant, was_borrowed) {
            (true, true) => table.relevant_borrowed += 1,
            (true, false) => table.relevant_not_borrowed += 1,
            (false, true) => table.irrelevant_borrowed += 1,
            (false, false) => table.irrelevant_not_borrowed += 1,
        }
        histogram[usize::from(r.score)] += 1;
        by_score[usize::from(was_borrowed)][usize::from(r.score)] += 1;
    }
    let counts = table.counts();
    Ok(FeedbackReport {
        table,
        counts,
        metrics: MetricsReport::from_counts(&counts, Stage::Feedback, None),
        histogram,
        borrowed_by_score: by_score,
    })
}

/// `stage,nrr,nir,nrn,nin,precision,recall,f_score`; the fourth cell is
/// written as `n/a`.
pub fn write_confusion_csv<W: Write>(
    out: W,
    counts: &ConfusionCounts,
    report: &MetricsReport,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "stage",
        "nrr",
        "nir",
        "nrn",
        "nin",
        "precision",
        "recall",
        "f_score",
    ])?;
    w.write_record([
        report.stage.to_string(),
        counts.nrr.to_string(),
        counts.nir.to_string(),
        counts.nrn.to_string(),
        "n/a".to_string(),
        format!("{:.4}", report.precision),
        format!("{:.4}", report.recall),
        format!("{:.4}", report.f_score),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(out: W, report: &FeedbackReport) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["score", "count"])?;
    for (score, n) in report.histogram.iter().enumerate() {
        w.write_record([score.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_borrowed_by_score_csv<W: Write>(
    out: W,
    report: &FeedbackReport,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["borrowed", "score_0", "score_1", "score_2", "score_3"])?;
    for (label, row) in ["false", "true"]
        .iter()
        .zip(report.borrowed_by_score.iter())
    {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: GroupingConfig,
    pub counts: ConfusionCounts,
    pub report: MetricsReport,
}

/// Drops repeated grid points, keeping the first. Returns the number dropped.
pub fn dedup_grid(configs: &mut Vec<GroupingConfig>) -> usize {
    let before = configs.len();
    let mut seen = BTreeSet::new();
    configs.retain(|c| seen.insert(c.grid_key()));
    before - configs.len()
}

/// The 25-point grid: five threshold pairs crossed with five min-match
/// triples.
pub fn standard_grid() -> Vec<GroupingConfig> {
    let thresholds = [
        (90.0, 60.0),
        (85.0, 55.0),
        (80.0, 60.0),
        (80.0, 50.0),
        (70.0, 40.0),
    ];
    let matches = [[1, 2, 3], [2, 3, 4], [3, 4, 4], [4, 5, 5], [2, 4, 6]];
    thresholds
        .iter()
        .flat_map(|(p1, p2)| {
            matches
                .iter()
                .map(move |m| GroupingConfig::new(*p1, *p2, *m))
        })
        .collect()
}

/// `p1,p2,m1,m2,m3,precision,recall,f_score`, one row per grid point in input
/// order.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "p1",
        "p2",
        "m1",
        "m2",
        "m3",
        "precision",
        "recall",
        "f_score",
    ])?;
    for row in rows {
        let c = &row.config;
        w.write_record([
            c.p1.to_string(),
            c.p2.to_string(),
            c.m1.to_string(),
            c.m2.to_string(),
            c.m3.to_string(),
            format!("{:.4}", row.report.precision),
            format!("{:.4}", row.report.recall),
            format!("{:.4}", row.report.f_score),
        ])?;
    }
    w.flush()?;
    Ok(())
}
