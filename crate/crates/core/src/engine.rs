//! One recommendation cycle end to end, and the mutable feedback state that
//! sits between cycles.
//!
//! A cycle tags the catalog, builds library statistics over the window,
//! weighs every user's loans into a profile, seeds empty profiles from their
//! area, builds the similarity matrix and generates every list. Everything is
//! derived from the corpus, the accumulated feedback and the settings, and the
//! timestamps come from the window end, so two runs over the same inputs
//! produce identical output.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{
    evaluate_history, ConfusionCounts, EvalError, FeedbackRating, MetricsReport, SweepRow,
};
use crate::events::Event;
use crate::ingest::{Corpus, LoanEvent};
use crate::preprocess::{extract_tags, NormalizerConfig, StemLanguage, Tag, TagSet};
use crate::profile::{
    active_enrollment, build_area_profiles, compute_tfidf, library_stats, loan_area, weigh_terms,
    AreaKey, BookTags, CorpusStats, Direction, IrrelevantTagList, ItemKind, ItemRef, ItemTagSet,
    ProfileError, ProfileOwner, UserProfile, WeightedTagList, WeightingConfig, Window,
};
use crate::recommend::{
    generate, GroupingConfig, RecommendContext, RecommendError, RecommendationList,
};
use crate::similarity::{build_matrix, CfConfig, SimilarityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid settings: {0}")]
    Config(String),
    #[error("corpus has no loans and no as_of date was given")]
    NoLoans,
    #[error("no cycle has run yet")]
    NoCycle,
    #[error("user `{0}` has no profile")]
    UnknownUser(String),
    #[error("{item_kind} `{item_id}` is not in the user's list")]
    NotInList {
        item_id: String,
        item_kind: ItemKind,
    },
    #[error("rating score {0} is outside 0..=3")]
    Score(u8),
    #[error("tag `{0}` is in neither tag list")]
    TagNotFound(Tag),
}

/// How item metadata becomes tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextSettings {
    pub min_token_length: usize,
    pub preserved_characters: String,
    pub stemming_enabled: bool,
    pub stem_language: StemLanguage,
    /// Also take tags from titles. Off by default: the keyword field already
    /// carries author, area and subject terms.
    pub include_titles: bool,
}

impl Default for TextSettings {
    fn default() -> Self {
        let n = NormalizerConfig::default();
        TextSettings {
            min_token_length: n.min_token_length,
            preserved_characters: n.preserved_characters,
            stemming_enabled: n.stemming_enabled,
            stem_language: n.stem_language,
            include_titles: false,
        }
    }
}

impl TextSettings {
    pub fn normalizer(&self, corpus: &Corpus) -> NormalizerConfig {
        NormalizerConfig {
            stopwords: corpus.stopwords.clone(),
            min_token_length: self.min_token_length,
            preserved_characters: self.preserved_characters.clone(),
            stemming_enabled: self.stemming_enabled,
            stem_language: self.stem_language,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleSettings {
    #[serde(default)]
    pub text: TextSettings,
    #[serde(default)]
    pub weighting: WeightingConfig,
    #[serde(default)]
    pub grouping: GroupingConfig,
    #[serde(default)]
    pub cf: CfConfig,
    /// Last day of the profile window; the latest loan date when unset.
    #[serde(default)]
    pub as_of: Option<NaiveDate>,
}

impl CycleSettings {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.grouping
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        self.cf
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        if self.weighting.window_days == 0 {
            return Err(EngineError::Config("window_days must be at least 1".into()));
        }
        let n = NormalizerConfig {
            min_token_length: self.text.min_token_length,
            preserved_characters: self.text.preserved_characters.clone(),
            ..Default::default()
        };
        n.validate().map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn window(&self, corpus: &Corpus) -> Result<Window, EngineError> {
        let end = self
            .as_of
            .or_else(|| corpus.last_loan_date())
            .ok_or(EngineError::NoLoans)?;
        Ok(Window::ending_at(end, self.weighting.window_days))
    }
}

/// Logical clock of a cycle: midnight UTC of the window end.
pub fn logical_time(window: &Window) -> DateTime<Utc> {
    window.end.and_time(chrono::NaiveTime::MIN).and_utc()
}

/// Tag sets of every book and document.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemIndex {
    pub books: BookTags,
    pub documents: BTreeMap<String, ItemTagSet>,
    catalog: Vec<ItemTagSet>,
}

impl ItemIndex {
    pub fn build(corpus: &Corpus, text: &TextSettings) -> ItemIndex {
        let normalizer = text.normalizer(corpus);
        let blob = |parts: &[&str]| parts.join(" ");
        let books: BookTags = corpus
            .books
            .par_iter()
            .map(|(code, b)| {
                let raw = if text.include_titles {
                    blob(&[&b.title, &b.keywords_raw])
                } else {
                    b.keywords_raw.clone()
                };
                (
                    code.clone(),
                    ItemTagSet::new(ItemRef::book(code.clone()), extract_tags(&raw, &normalizer)),
                )
            })
            .collect();
        let documents: BTreeMap<String, ItemTagSet> = corpus
            .documents
            .par_iter()
            .map(|(id, d)| {
                let raw = if text.include_titles {
                    blob(&[&d.title, &d.keywords_raw, &d.abstract_raw])
                } else {
                    blob(&[&d.keywords_raw, &d.abstract_raw])
                };
                (
                    id.clone(),
                    ItemTagSet::new(
                        ItemRef::document(id.clone()),
                        extract_tags(&raw, &normalizer),
                    ),
                )
            })
            .collect();
        let catalog = books.values().chain(documents.values()).cloned().collect();
        ItemIndex {
            books,
            documents,
            catalog,
        }
    }

    pub fn get(&self, item: &ItemRef) -> Option<&ItemTagSet> {
        match item.item_kind {
            ItemKind::Book => self.books.get(&item.item_id),
            ItemKind::Document => self.documents.get(&item.item_id),
        }
    }

    /// Books then documents, each in id order.
    pub fn catalog(&self) -> &[ItemTagSet] {
        &self.catalog
    }
}

/// What a user's feedback has done to their profile so far. Survives cycles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserFeedback {
    pub irrelevant: TagSet,
    /// Tags moved back to the relevant list by hand; they stay relevant even
    /// when no in-window loan carries them.
    pub promoted: TagSet,
    /// One row per rated item, overwritten on re-rating.
    pub ratings: Vec<FeedbackRating>,
}

impl UserFeedback {
    pub fn rated(&self) -> BTreeSet<ItemRef> {
        self.ratings.iter().map(FeedbackRating::item_ref).collect()
    }

    fn record(&mut self, rating: FeedbackRating) {
        match self
            .ratings
            .iter_mut()
            .find(|r| r.item_id == rating.item_id && r.item_kind == rating.item_kind)
        {
            Some(slot) => *slot = rating,
            None => self.ratings.push(rating),
        }
    }
}

pub type FeedbackState = BTreeMap<String, UserFeedback>;

/// Everything a cycle computes before lists are generated. Independent of the
/// grouping configuration, so a sweep shares one.
#[derive(Debug, Clone)]
pub struct Profiles {
    pub window: Window,
    pub generated_at: DateTime<Utc>,
    pub library: CorpusStats,
    pub owner_stats: BTreeMap<String, CorpusStats>,
    pub areas: BTreeMap<AreaKey, WeightedTagList>,
    pub profiles: BTreeMap<String, UserProfile>,
    /// Users whose profile was copied from this area.
    pub seeded: BTreeMap<String, AreaKey>,
    pub matrix: SimilarityMatrix,
    /// Distinct in-window borrowed books per user.
    pub borrowed: BTreeMap<String, BTreeSet<String>>,
}

/// Area a user without loans falls back to: their enrollment at the window
/// end, else the area of their latest loan up to it.
pub fn cold_start_area(user: &str, corpus: &Corpus, window: &Window) -> Option<AreaKey> {
    if let Some(e) = active_enrollment(user, window.end, &corpus.enrollments) {
        return Some(AreaKey {
            course_id: e.course_id.clone(),
            period_index: e.period_index,
        });
    }
    corpus
        .loans
        .iter()
        .filter(|l| l.user_id == user && l.loan_date <= window.end)
        .max_by_key(|l| l.loan_date)
        .map(|l| loan_area(l, &corpus.enrollments))
}

pub fn known_users(corpus: &Corpus, feedback: &FeedbackState) -> BTreeSet<String> {
    corpus
        .loans
        .iter()
        .map(|l| l.user_id.clone())
        .chain(corpus.enrollments.iter().map(|e| e.user_id.clone()))
        .chain(feedback.keys().cloned())
        .collect()
}

pub fn borrowed_in(
    loans: &[LoanEvent],
    keep: impl Fn(&LoanEvent) -> bool,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for l in loans.iter().filter(|l| keep(l)) {
        out.entry(l.user_id.clone())
            .or_default()
            .insert(l.collection_code.clone());
    }
    out
}

/// Id, TF statistics, profile, seeding area and similarity vector.
type BuiltUser = (
    String,
    CorpusStats,
    UserProfile,
    Option<AreaKey>,
    BTreeMap<Tag, f64>,
);

pub fn build_profiles(
    corpus: &Corpus,
    index: &ItemIndex,
    feedback: &FeedbackState,
    settings: &CycleSettings,
) -> Result<Profiles, EngineError> {
    settings.validate()?;
    let window = settings.window(corpus)?;
    let cfg = &settings.weighting;
    let library = library_stats(&corpus.loans, &index.books, &window);

    let mut occurrences: BTreeMap<&str, Vec<&ItemTagSet>> = BTreeMap::new();
    for loan in corpus.loans.iter().filter(|l| window.contains(l.loan_date)) {
        if let Some(item) = index.books.get(&loan.collection_code) {
            occurrences.entry(&loan.user_id).or_default().push(item);
        }
    }
    let areas = build_area_profiles(
        &corpus.loans,
        &corpus.enrollments,
        &index.books,
        &library,
        window,
        cfg,
    );

    let users = known_users(corpus, feedback);
    let empty = UserFeedback::default();
    let built: Vec<BuiltUser> = users
        .par_iter()
        .map(|user| {
            let fb = feedback.get(user).unwrap_or(&empty);
            let stats = CorpusStats::from_occurrences(
                occurrences
                    .get(user.as_str())
                    .into_iter()
                    .flatten()
                    .copied(),
            );
            let mut entries = weigh_terms(&stats, &library, cfg);
            entries.retain(|t, _| !fb.irrelevant.contains(t));
            let mut seeded_from = None;
            let mut vector = entries.clone();
            if entries.is_empty() {
                vector.clear();
                if let Some(area) = cold_start_area(user, corpus, &window) {
                    if let Some(list) = areas.get(&area).filter(|l| !l.is_empty()) {
                        entries = list.entries.clone();
                        entries.retain(|t, _| !fb.irrelevant.contains(t));
                        if !entries.is_empty() {
                            seeded_from = Some(area);
                        }
                    }
                }
            }
            for tag in &fb.promoted {
                if fb.irrelevant.contains(tag) || entries.contains_key(tag) {
                    continue;
                }
                let w = match &seeded_from {
                    Some(area) => areas[area].weight(tag).unwrap_or(0.0),
                    None => compute_tfidf(tag, &stats, &library, cfg).unwrap_or(0.0),
                };
                entries.insert(tag.clone(), w);
                if seeded_from.is_none() {
                    vector.insert(tag.clone(), w);
                }
            }
            let profile = UserProfile {
                relevant: WeightedTagList {
                    owner: ProfileOwner::User {
                        user_id: user.clone(),
                    },
                    entries,
                    window,
                },
                irrelevant: IrrelevantTagList {
                    owner: user.clone(),
                    tags: fb.irrelevant.clone(),
                },
            };
            (user.clone(), stats, profile, seeded_from, vector)
        })
        .collect();

    let generated_at = logical_time(&window);
    let mut owner_stats = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    let mut seeded = BTreeMap::new();
    let mut vectors = BTreeMap::new();
    for (user, stats, profile, area, vector) in built {
        owner_stats.insert(user.clone(), stats);
        profiles.insert(user.clone(), profile);
        if let Some(a) = area {
            seeded.insert(user.clone(), a);
        }
        vectors.insert(user, vector);
    }
    let matrix = build_matrix(&vectors, generated_at);
    let borrowed = borrowed_in(&corpus.loans, |l| window.contains(l.loan_date));
    Ok(Profiles {
        window,
        generated_at,
        library,
        owner_stats,
        areas,
        profiles,
        seeded,
        matrix,
        borrowed,
    })
}

/// Lists for every user that has a (possibly seeded) profile. Users with
/// neither loans nor a usable area are returned separately.
pub fn generate_lists(
    index: &ItemIndex,
    profiles: &Profiles,
    feedback: &FeedbackState,
    grouping: &GroupingConfig,
    cf: &CfConfig,
) -> (BTreeMap<String, RecommendationList>, BTreeSet<String>) {
    let ctx = RecommendContext {
        catalog: index.catalog(),
        book_tags: &index.books,
        borrowed: &profiles.borrowed,
        matrix: &profiles.matrix,
        grouping,
        cf,
        generated_at: profiles.generated_at,
    };
    let results: Vec<(String, Result<RecommendationList, RecommendError>)> = profiles
        .profiles
        .par_iter()
        .map(|(user, profile)| {
            let rated = feedback
                .get(user)
                .map(UserFeedback::rated)
                .unwrap_or_default();
            (user.clone(), generate(&ctx, profile, &rated))
        })
        .collect();
    let mut lists = BTreeMap::new();
    let mut unresolved = BTreeSet::new();
    for (user, r) in results {
        match r {
            Ok(list) => {
                lists.insert(user, list);
            }
            Err(_) => {
                unresolved.insert(user);
            }
        }
    }
    (lists, unresolved)
}

#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub settings: CycleSettings,
    pub profiles: Profiles,
    pub lists: BTreeMap<String, RecommendationList>,
    /// Users that got no list: no profile and no area to seed from.
    pub unresolved: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub users: usize,
    pub lists: usize,
    pub seeded: usize,
    pub unresolved: usize,
    pub mean_list_length: f64,
}

impl CycleOutput {
    pub fn summary(&self) -> CycleSummary {
        let total: usize = self.lists.values().map(|l| l.items.len()).sum();
        CycleSummary {
            users: self.profiles.profiles.len(),
            lists: self.lists.len(),
            seeded: self.profiles.seeded.len(),
            unresolved: self.unresolved.len(),
            mean_list_length: if self.lists.is_empty() {
                0.0
            } else {
                total as f64 / self.lists.len() as f64
            },
        }
    }

    /// All lists as pretty JSON, keyed by user.
    pub fn lists_json(&self) -> String {
        serde_json::to_string_pretty(&self.lists).expect("lists serialize")
    }
}

pub fn run_cycle(
    corpus: &Corpus,
    index: &ItemIndex,
    feedback: &FeedbackState,
    settings: &CycleSettings,
) -> Result<CycleOutput, EngineError> {
    let profiles = build_profiles(corpus, index, feedback, settings)?;
    let (lists, unresolved) =
        generate_lists(index, &profiles, feedback, &settings.grouping, &settings.cf);
    Ok(CycleOutput {
        settings: settings.clone(),
        profiles,
        lists,
        unresolved,
    })
}

/// Which loans the history stage scores lists against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryMode {
    /// The loans that built the profiles.
    #[default]
    SameWindow,
    /// Profiles end the day before `split`; lists are scored against loans
    /// from `split` up to the configured window end.
    HeldOut { split: NaiveDate },
}

/// Settings for the profile side and the borrowed books to score against.
pub fn history_split(
    corpus: &Corpus,
    settings: &CycleSettings,
    mode: HistoryMode,
) -> Result<(CycleSettings, BTreeMap<String, BTreeSet<String>>), EngineError> {
    let window = settings.window(corpus)?;
    match mode {
        HistoryMode::SameWindow => Ok((
            settings.clone(),
            borrowed_in(&corpus.loans, |l| window.contains(l.loan_date)),
        )),
        HistoryMode::HeldOut { split } => {
            if split <= window.start || split > window.end {
                return Err(EngineError::Config(format!(
                    "split {split} must fall inside ({}, {}]",
                    window.start, window.end
                )));
            }
            let mut profile_side = settings.clone();
            profile_side.as_of = Some(split - Duration::days(1));
            let truth = borrowed_in(&corpus.loans, |l| {
                l.loan_date >= split && l.loan_date <= window.end
            });
            Ok((profile_side, truth))
        }
    }
}

pub fn evaluate_history_run(
    corpus: &Corpus,
    index: &ItemIndex,
    feedback: &FeedbackState,
    settings: &CycleSettings,
    mode: HistoryMode,
) -> Result<(ConfusionCounts, MetricsReport), EngineError> {
    let (profile_side, truth) = history_split(corpus, settings, mode)?;
    let out = run_cycle(corpus, index, feedback, &profile_side)?;
    Ok(evaluate_history(
        &out.lists,
        &truth,
        Some(settings.grouping),
    ))
}

/// History-stage metrics for each grid point, in grid order. Profiles and
/// the matrix are built once; rows run in parallel.
pub fn sweep(
    corpus: &Corpus,
    index: &ItemIndex,
    feedback: &FeedbackState,
    settings: &CycleSettings,
    grid: &[GroupingConfig],
    mode: HistoryMode,
) -> Result<Vec<SweepRow>, EngineError> {
    if grid.is_empty() {
        return Err(EngineError::Config(EvalError::EmptyGrid.to_string()));
    }
    for g in grid {
        g.validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
    }
    let (profile_side, truth) = history_split(corpus, settings, mode)?;
    let profiles = build_profiles(corpus, index, feedback, &profile_side)?;
    Ok(grid
        .par_iter()
        .map(|g| {
            let (lists, _) = generate_lists(index, &profiles, feedback, g, &settings.cf);
            let (counts, report) = evaluate_history(&lists, &truth, Some(*g));
            SweepRow {
                config: *g,
                counts,
                report,
            }
        })
        .collect())
}

/// Corpus plus everything feedback has changed, with the latest cycle.
/// Applying the same events in the same order always yields the same state.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub corpus: Corpus,
    pub feedback: FeedbackState,
    pub current: Option<CycleOutput>,
    index: Option<(TextSettings, ItemIndex)>,
}

impl EngineState {
    pub fn new(corpus: Corpus) -> Self {
        EngineState {
            corpus,
            feedback: FeedbackState::new(),
            current: None,
            index: None,
        }
    }

    pub fn index(&mut self, text: &TextSettings) -> &ItemIndex {
        if self.index.as_ref().is_none_or(|(t, _)| t != text) {
            self.index = Some((text.clone(), ItemIndex::build(&self.corpus, text)));
        }
        &self.index.as_ref().expect("index just built").1
    }

    /// Index of the latest cycle, if any.
    pub fn current_index(&self) -> Option<&ItemIndex> {
        self.index.as_ref().map(|(_, i)| i)
    }

    pub fn run_cycle(&mut self, settings: &CycleSettings) -> Result<&CycleOutput, EngineError> {
        settings.validate()?;
        self.index(&settings.text);
        let index = &self.index.as_ref().expect("index built").1;
        let out = run_cycle(&self.corpus, index, &self.feedback, settings)?;
        Ok(self.current.insert(out))
    }

    pub fn list(&self, user: &str) -> Option<&RecommendationList> {
        self.current.as_ref()?.lists.get(user)
    }

    pub fn profile(&self, user: &str) -> Option<&UserProfile> {
        self.current.as_ref()?.profiles.profiles.get(user)
    }

    /// Records a 0-3 rating of an item in the user's current list. A 0 moves
    /// the item's tags to the irrelevant list at once.
    pub fn rate(
        &mut self,
        user: &str,
        item: &ItemRef,
        score: u8,
        at: DateTime<Utc>,
    ) -> Result<(), EngineError> {
        if score > 3 {
            return Err(EngineError::Score(score));
        }
        let current = self.current.as_mut().ok_or(EngineError::NoCycle)?;
        if !current.lists.get(user).is_some_and(|l| l.contains(item)) {
            return Err(EngineError::NotInList {
                item_id: item.item_id.clone(),
                item_kind: item.item_kind,
            });
        }
        let fb = self.feedback.entry(user.to_string()).or_default();
        fb.record(FeedbackRating {
            user_id: user.to_string(),
            item_id: item.item_id.clone(),
            item_kind: item.item_kind,
            score,
            rated_at: at,
        });
        if score == 0 {
            let tags = self
                .index
                .as_ref()
                .and_then(|(_, i)| i.get(item))
                .cloned()
                .unwrap_or_else(|| ItemTagSet::new(item.clone(), TagSet::new()));
            for t in tags.tags() {
                fb.promoted.remove(t);
                fb.irrelevant.insert(t.clone());
            }
            if let Some(p) = current.profiles.profiles.get_mut(user) {
                p.apply_irrelevant(&tags);
            }
        }
        Ok(())
    }

    /// Moves a tag between the user's lists. Moving a tag that already sits
    /// in the target list is a no-op, so retries converge.
    pub fn reallocate(
        &mut self,
        user: &str,
        tag: &Tag,
        direction: Direction,
    ) -> Result<(), EngineError> {
        let current = self.current.as_mut().ok_or(EngineError::NoCycle)?;
        let profiles = &mut current.profiles;
        let profile = profiles
            .profiles
            .get_mut(user)
            .ok_or_else(|| EngineError::UnknownUser(user.to_string()))?;
        let already = match direction {
            Direction::ToIrrelevant => profile.irrelevant.tags.contains(tag),
            Direction::ToRelevant => profile.relevant.entries.contains_key(tag),
        };
        if already {
            return Ok(());
        }
        let empty = CorpusStats::default();
        let owner = profiles.owner_stats.get(user).unwrap_or(&empty);
        profile
            .reallocate(
                tag,
                direction,
                owner,
                &profiles.library,
                &current.settings.weighting,
            )
            .map_err(|e| match e {
                ProfileError::NotFound(t) => EngineError::TagNotFound(t),
                other => EngineError::Config(other.to_string()),
            })?;
        if direction == Direction::ToRelevant {
            if let Some(area) = profiles.seeded.get(user) {
                let w = profiles.areas[area].weight(tag).unwrap_or(0.0);
                profile.relevant.entries.insert(tag.clone(), w);
            }
        }
        let fb = self.feedback.entry(user.to_string()).or_default();
        match direction {
            Direction::ToIrrelevant => {
                fb.promoted.remove(tag);
                fb.irrelevant.insert(tag.clone());
            }
            Direction::ToRelevant => {
                fb.irrelevant.remove(tag);
                fb.promoted.insert(tag.clone());
            }
        }
        Ok(())
    }

    /// Replays one logged event. Session events carry no engine state.
    pub fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        match event {
            Event::Rated {
                user_id,
                item_id,
                item_kind,
                score,
                at,
            } => self.rate(
                user_id,
                &ItemRef {
                    item_id: item_id.clone(),
                    item_kind: *item_kind,
                },
                *score,
                *at,
            ),
            Event::Reallocated {
                user_id,
                tag,
                direction,
                ..
            } => self.reallocate(user_id, tag, *direction),
            Event::CycleCompleted { settings, .. } => self.run_cycle(settings).map(|_| ()),
            Event::SessionMinted { .. } => Ok(()),
        }
    }

    /// Every rating across users, in user order.
    pub fn ratings(&self) -> Vec<FeedbackRating> {
        self.feedback
            .values()
            .flat_map(|f| f.ratings.iter().cloned())
            .collect()
    }
}
