//! Item tag sets, weighted user and area tag lists, irrelevant tag lists and
//! the TF-IDF weighting that connects them.
//!
//! Term frequency is taken over the owner's own loans inside the window: every
//! loan contributes the borrowed book's tag set once, so `f_t` counts loan
//! occurrences containing `t` and `Σf` is the total number of tags over those
//! occurrences. Inverse document frequency is taken over the whole library
//! window: `N` distinct books loaned by anyone in the window, `n_t` of them
//! containing `t`. When the owner's loans are the whole library (a single
//! borrower) the two statistics coincide.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Enrollment, LoanEvent};
use crate::preprocess::{Tag, TagSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Book,
    Document,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::Book => "book",
            ItemKind::Document => "document",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemRef {
    pub item_id: String,
    pub item_kind: ItemKind,
}

impl ItemRef {
    pub fn book(id: impl Into<String>) -> Self {
        ItemRef {
            item_id: id.into(),
            item_kind: ItemKind::Book,
        }
    }

    pub fn document(id: impl Into<String>) -> Self {
        ItemRef {
            item_id: id.into(),
            item_kind: ItemKind::Document,
        }
    }
}

/// Binary tag membership of one book or document. Immutable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemTagSet {
    item: ItemRef,
    tags: TagSet,
}

impl ItemTagSet {
    pub fn new(item: ItemRef, tags: TagSet) -> Self {
        ItemTagSet { item, tags }
    }

    pub fn item(&self) -> &ItemRef {
        &self.item
    }

    pub fn tags(&self) -> &TagSet {
        &self.tags
    }

    pub fn contains(&self, tag: &Tag) -> bool {
        self.tags.contains(tag)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("no tagged loans in the window")]
    EmptyWindow,
    #[error("term `{0}` occurs in no book of the window")]
    UnknownTerm(Tag),
    #[error("tag `{0}` is not in the source list")]
    NotFound(Tag),
}

/// Counts over a multiset of loaned items (one entry per loan occurrence).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_books: usize,
    pub books_containing: BTreeMap<Tag, usize>,
    pub term_occurrences: BTreeMap<Tag, usize>,
    pub total_term_occurrences: usize,
}

impl CorpusStats {
    pub fn from_occurrences<'a, I>(occurrences: I) -> Self
    where
        I: IntoIterator<Item = &'a ItemTagSet>,
    {
        let mut stats = CorpusStats::default();
        let mut distinct: BTreeMap<&ItemRef, &ItemTagSet> = BTreeMap::new();
        for item in occurrences {
            for tag in item.tags() {
                *stats.term_occurrences.entry(tag.clone()).or_insert(0) += 1;
            }
            stats.total_term_occurrences += item.tags().len();
            distinct.insert(item.item(), item);
        }
        stats.total_books = distinct.len();
        for item in distinct.values() {
            for tag in item.tags() {
                *stats.books_containing.entry(tag.clone()).or_insert(0) += 1;
            }
        }
        stats
    }

    pub fn occurrences(&self, term: &Tag) -> usize {
        self.term_occurrences.get(term).copied().unwrap_or(0)
    }

    pub fn books_with(&self, term: &Tag) -> usize {
        self.books_containing.get(term).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = &Tag> {
        self.term_occurrences.keys()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfMode {
    /// `ln(N / n_t)`.
    #[default]
    NaturalLog,
    /// The bare ratio `N / n_t`, which is what the worked example's printed
    /// arithmetic (`log(3/2) = 1.5`) evaluates to.
    PaperExample,
}

impl std::str::FromStr for IdfMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural_log" => Ok(IdfMode::NaturalLog),
            "paper_example" => Ok(IdfMode::PaperExample),
            other => Err(format!(
                "unknown idf mode `{other}` (expected natural_log or paper_example)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub idf_mode: IdfMode,
    pub window_days: u32,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig {
            idf_mode: IdfMode::NaturalLog,
            window_days: 518,
        }
    }
}

/// Inclusive date range over which loans contribute to profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    /// The `days`-day window whose last day is `end`.
    pub fn ending_at(end: NaiveDate, days: u32) -> Window {
        let span = i64::from(days.max(1)) - 1;
        Window {
            start: end - Duration::days(span),
            end,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

pub fn compute_tf(term: &Tag, owner: &CorpusStats) -> Result<f64, ProfileError> {
    if owner.total_term_occurrences == 0 {
        return Err(ProfileError::EmptyWindow);
    }
    Ok(owner.occurrences(term) as f64 / owner.total_term_occurrences as f64)
}

pub fn compute_idf(
    term: &Tag,
    library: &CorpusStats,
    config: &WeightingConfig,
) -> Result<f64, ProfileError> {
    let n = library.books_with(term);
    if n == 0 {
        return Err(ProfileError::UnknownTerm(term.clone()));
    }
    let ratio = library.total_books as f64 / n as f64;
    Ok(match config.idf_mode {
        IdfMode::NaturalLog => ratio.ln(),
        IdfMode::PaperExample => ratio,
    })
}

/// TF over the owner's loans times IDF over the library window. A term the
/// owner never borrowed weighs 0 without consulting the library.
pub fn compute_tfidf(
    term: &Tag,
    owner: &CorpusStats,
    library: &CorpusStats,
    config: &WeightingConfig,
) -> Result<f64, ProfileError> {
    let tf = compute_tf(term, owner)?;
    if tf == 0.0 {
        return Ok(0.0);
    }
    Ok(tf * compute_idf(term, library, config)?)
}

/// Weighs every term the owner borrowed.
pub fn weigh_terms(
    owner: &CorpusStats,
    library: &CorpusStats,
    config: &WeightingConfig,
) -> BTreeMap<Tag, f64> {
    owner
        .terms()
        .filter_map(|t| {
            compute_tfidf(t, owner, library, config)
                .ok()
                .map(|w| (t.clone(), w))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AreaKey {
    pub course_id: String,
    pub period_index: u32,
}

impl fmt::Display for AreaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.course_id, self.period_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileOwner {
    User { user_id: String },
    Area(AreaKey),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTagList {
    pub owner: ProfileOwner,
    pub entries: BTreeMap<Tag, f64>,
    pub window: Window,
}

impl WeightedTagList {
    pub fn empty(owner: ProfileOwner, window: Window) -> Self {
        WeightedTagList {
            owner,
            entries: BTreeMap::new(),
            window,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn weight(&self, tag: &Tag) -> Option<f64> {
        self.entries.get(tag).copied()
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.entries.values().copied().reduce(f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|w| *w == 0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrelevantTagList {
    pub owner: String,
    pub tags: TagSet,
}

impl IrrelevantTagList {
    pub fn new(owner: impl Into<String>) -> Self {
        IrrelevantTagList {
            owner: owner.into(),
            tags: BTreeSet::new(),
        }
    }
}

/// Item tag sets of books, keyed by collection code.
pub type BookTags = BTreeMap<String, ItemTagSet>;

fn in_window_occurrences<'a>(
    loans: impl Iterator<Item = &'a LoanEvent>,
    books: &'a BookTags,
    window: &'a Window,
) -> impl Iterator<Item = &'a ItemTagSet> {
    loans
        .filter(move |l| window.contains(l.loan_date))
        .filter_map(move |l| books.get(&l.collection_code))
}

/// IDF statistics: every loan made inside the window, by anyone.
pub fn library_stats(loans: &[LoanEvent], books: &BookTags, window: &Window) -> CorpusStats {
    CorpusStats::from_occurrences(in_window_occurrences(loans.iter(), books, window))
}

/// TF statistics of one user.
pub fn user_stats(
    user: &str,
    loans: &[LoanEvent],
    books: &BookTags,
    window: &Window,
) -> CorpusStats {
    CorpusStats::from_occurrences(in_window_occurrences(
        loans.iter().filter(|l| l.user_id == user),
        books,
        window,
    ))
}

pub fn build_user_profile(
    user: &str,
    loans: &[LoanEvent],
    books: &BookTags,
    library: &CorpusStats,
    irrelevant: &IrrelevantTagList,
    window: Window,
    config: &WeightingConfig,
) -> WeightedTagList {
    let owner = user_stats(user, loans, books, &window);
    let mut entries = weigh_terms(&owner, library, config);
    entries.retain(|t, _| !irrelevant.tags.contains(t));
    WeightedTagList {
        owner: ProfileOwner::User {
            user_id: user.to_string(),
        },
        entries,
        window,
    }
}

/// Enrollment in force for `user` on `date`: the latest `as_of_date` not after
/// `date`, the earliest-listed on ties.
pub fn active_enrollment<'a>(
    user: &str,
    date: NaiveDate,
    enrollments: &'a [Enrollment],
) -> Option<&'a Enrollment> {
    let mut best: Option<&Enrollment> = None;
    for e in enrollments
        .iter()
        .filter(|e| e.user_id == user && e.as_of_date <= date)
    {
        if best.is_none_or(|b| e.as_of_date > b.as_of_date) {
            best = Some(e);
        }
    }
    best
}

/// The (course, period) a loan counts toward: the borrower's active
/// enrollment at the loan date, else what the loan record itself says.
pub fn loan_area(loan: &LoanEvent, enrollments: &[Enrollment]) -> AreaKey {
    match active_enrollment(&loan.user_id, loan.loan_date, enrollments) {
        Some(e) => AreaKey {
            course_id: e.course_id.clone(),
            period_index: e.period_index,
        },
        None => AreaKey {
            course_id: loan.course_id.clone(),
            period_index: loan.period_index,
        },
    }
}

fn area_list(
    key: AreaKey,
    occurrences: Vec<&ItemTagSet>,
    library: &CorpusStats,
    window: Window,
    config: &WeightingConfig,
) -> WeightedTagList {
    let owner = CorpusStats::from_occurrences(occurrences);
    WeightedTagList {
        owner: ProfileOwner::Area(key),
        entries: weigh_terms(&owner, library, config),
        window,
    }
}

pub fn build_area_profile(
    area: &AreaKey,
    loans: &[LoanEvent],
    enrollments: &[Enrollment],
    books: &BookTags,
    library: &CorpusStats,
    window: Window,
    config: &WeightingConfig,
) -> WeightedTagList {
    let occurrences = loans
        .iter()
        .filter(|l| window.contains(l.loan_date) && loan_area(l, enrollments) == *area)
        .filter_map(|l| books.get(&l.collection_code))
        .collect();
    area_list(area.clone(), occurrences, library, window, config)
}

/// Every area that has at least one in-window loan.
pub fn build_area_profiles(
    loans: &[LoanEvent],
    enrollments: &[Enrollment],
    books: &BookTags,
    library: &CorpusStats,
    window: Window,
    config: &WeightingConfig,
) -> BTreeMap<AreaKey, WeightedTagList> {
    let mut by_user: BTreeMap<&str, Vec<Enrollment>> = BTreeMap::new();
    for e in enrollments {
        by_user
            .entry(e.user_id.as_str())
            .or_default()
            .push(e.clone());
    }
    let mut grouped: BTreeMap<AreaKey, Vec<&ItemTagSet>> = BTreeMap::new();
    for loan in loans.iter().filter(|l| window.contains(l.loan_date)) {
        let own = by_user
            .get(loan.user_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let key = loan_area(loan, own);
        let slot = grouped.entry(key).or_default();
        if let Some(item) = books.get(&loan.collection_code) {
            slot.push(item);
        }
    }
    grouped
        .into_iter()
        .map(|(key, occ)| (key.clone(), area_list(key, occ, library, window, config)))
        .collect()
}

/// Copies the area list into an empty user profile. Returns whether the
/// profile was seeded.
pub fn seed_from_area(profile: &mut WeightedTagList, area: &WeightedTagList) -> bool {
    if !profile.is_empty() || area.is_empty() {
        return false;
    }
    profile.entries = area.entries.clone();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToIrrelevant,
    ToRelevant,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "to_irrelevant" => Ok(Direction::ToIrrelevant),
            "to_relevant" => Ok(Direction::ToRelevant),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// A user's relevant (weighted) and irrelevant tag lists. The two are kept
/// disjoint by every mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub relevant: WeightedTagList,
    pub irrelevant: IrrelevantTagList,
}

impl UserProfile {
    pub fn user_id(&self) -> &str {
        &self.irrelevant.owner
    }

    /// Rating 0 on `item`: all its tags become irrelevant and leave the
    /// relevant list.
    pub fn apply_irrelevant(&mut self, item: &ItemTagSet) {
        for tag in item.tags() {
            self.relevant.entries.remove(tag);
            self.irrelevant.tags.insert(tag.clone());
        }
    }

    /// Moves one tag between the lists. A tag returning to the relevant list
    /// is weighed from the current statistics.
    pub fn reallocate(
        &mut self,
        tag: &Tag,
        direction: Direction,
        owner: &CorpusStats,
        library: &CorpusStats,
        config: &WeightingConfig,
    ) -> Result<(), ProfileError> {
        match direction {
            Direction::ToIrrelevant => {
                if self.relevant.entries.remove(tag).is_none() {
                    return Err(ProfileError::NotFound(tag.clone()));
                }
                self.irrelevant.tags.insert(tag.clone());
            }
            Direction::ToRelevant => {
                if !self.irrelevant.tags.remove(tag) {
                    return Err(ProfileError::NotFound(tag.clone()));
                }
                let weight = compute_tfidf(tag, owner, library, config).unwrap_or(0.0);
                self.relevant.entries.insert(tag.clone(), weight);
            }
        }
        Ok(())
    }

    pub fn is_disjoint(&self) -> bool {
        self.relevant
            .entries
            .keys()
            .all(|t| !self.irrelevant.tags.contains(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tag(s: &str) -> Tag {
        Tag::from_normalized(s).unwrap()
    }

    fn book(id: &str, tags: &[&str]) -> ItemTagSet {
        ItemTagSet::new(ItemRef::book(id), tags.iter().map(|t| tag(t)).collect())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn miguel() -> Vec<ItemTagSet> {
        vec![
            book("java", &["programming", "oriented", "objects"]),
            book("cpp", &["programming", "objects", "c++"]),
            book("net", &["tcpip", "layers", "security"]),
        ]
    }

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn loan(user: &str, code: &str, d: &str, course: &str, period: u32) -> LoanEvent {
        LoanEvent {
            user_id: user.into(),
            collection_code: code.into(),
            loan_date: date(d),
            department_code: "d".into(),
            course_id: course.into(),
            period_index: period,
        }
    }

    #[test]
    fn objects_worked_example() {
        let items = miguel();
        let stats = CorpusStats::from_occurrences(&items);
        let ratio_cfg = WeightingConfig {
            idf_mode: IdfMode::PaperExample,
            ..Default::default()
        };
        let objects = tag("objects");
        assert!(close(
            compute_tf(&objects, &stats).unwrap(),
            2.0 / 9.0,
            1e-12
        ));
        assert!(close(
            compute_idf(&objects, &stats, &ratio_cfg).unwrap(),
            1.5,
            1e-12
        ));
        let w = compute_tfidf(&objects, &stats, &stats, &ratio_cfg).unwrap();
        assert!(close(w, 0.3333, 0.0005));
    }

    #[test]
    fn natural_log_idf() {
        let stats = CorpusStats::from_occurrences(&miguel());
        let cfg = WeightingConfig::default();
        // ln(1.5) = 0.405465...
        assert!(close(
            compute_idf(&tag("objects"), &stats, &cfg).unwrap(),
            0.4055,
            0.00005
        ));
        let all = CorpusStats::from_occurrences(&[book("a", &["x"]), book("b", &["x", "y"])]);
        assert_eq!(compute_idf(&tag("x"), &all, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn tf_edge_cases() {
        let stats = CorpusStats::from_occurrences(&miguel());
        assert_eq!(compute_tf(&tag("absent"), &stats).unwrap(), 0.0);
        let single = CorpusStats::from_occurrences(&[book("a", &["solo"])]);
        assert_eq!(compute_tf(&tag("solo"), &single).unwrap(), 1.0);
        let empty = CorpusStats::default();
        assert_eq!(
            compute_tf(&tag("solo"), &empty),
            Err(ProfileError::EmptyWindow)
        );
        assert_eq!(
            compute_idf(&tag("absent"), &stats, &WeightingConfig::default()),
            Err(ProfileError::UnknownTerm(tag("absent")))
        );
        assert_eq!(
            compute_tfidf(&tag("absent"), &stats, &stats, &WeightingConfig::default()),
            Ok(0.0)
        );
    }

    #[test]
    fn repeated_loans_raise_tf_not_n() {
        let a = book("a", &["x", "y"]);
        let b = book("b", &["y"]);
        let stats = CorpusStats::from_occurrences([&a, &a, &b]);
        assert_eq!(stats.total_books, 2);
        assert_eq!(stats.occurrences(&tag("x")), 2);
        assert_eq!(stats.books_with(&tag("x")), 1);
        assert_eq!(stats.total_term_occurrences, 5);
    }

    fn books(items: &[ItemTagSet]) -> BookTags {
        items
            .iter()
            .map(|i| (i.item().item_id.clone(), i.clone()))
            .collect()
    }

    #[test]
    fn user_profile_respects_window_and_irrelevant() {
        let bt = books(&miguel());
        let loans = vec![
            loan("miguel", "java", "2014-02-01", "cs", 1),
            loan("miguel", "cpp", "2014-02-02", "cs", 1),
            loan("miguel", "net", "2014-02-03", "cs", 1),
            loan("miguel", "net", "2010-01-01", "cs", 1),
        ];
        let window = Window::ending_at(date("2014-12-31"), 365);
        let cfg = WeightingConfig {
            idf_mode: IdfMode::PaperExample,
            ..Default::default()
        };
        let lib = library_stats(&loans, &bt, &window);
        assert_eq!(lib.total_books, 3);
        let mut irr = IrrelevantTagList::new("miguel");
        let p = build_user_profile("miguel", &loans, &bt, &lib, &irr, window, &cfg);
        assert_eq!(p.len(), 7);
        assert!(close(p.weight(&tag("objects")).unwrap(), 1.0 / 3.0, 1e-12));
        irr.tags.insert(tag("objects"));
        let p = build_user_profile("miguel", &loans, &bt, &lib, &irr, window, &cfg);
        assert!(p.weight(&tag("objects")).is_none());
    }

    #[test]
    fn zero_loans_and_all_irrelevant() {
        let bt = books(&miguel());
        let window = Window::ending_at(date("2014-12-31"), 365);
        let cfg = WeightingConfig::default();
        let loans = vec![loan("ana", "net", "2014-05-01", "cs", 1)];
        let lib = library_stats(&loans, &bt, &window);
        let empty = build_user_profile(
            "bob",
            &loans,
            &bt,
            &lib,
            &IrrelevantTagList::new("bob"),
            window,
            &cfg,
        );
        assert!(empty.is_empty());
        let mut irr = IrrelevantTagList::new("ana");
        irr.tags.extend(["tcpip", "layers", "security"].map(tag));
        let p = build_user_profile("ana", &loans, &bt, &lib, &irr, window, &cfg);
        assert!(p.is_empty());
    }

    #[test]
    fn area_profile_set_semantics_per_item() {
        // One book {a, b, c}: TF = f/Σf = 1/3 for each tag whether it was
        // borrowed once or twice, and N = n = 1, so the ratio IDF is 1 and
        // the log IDF is 0.
        let bt = books(&[book("only", &["alpha", "beta", "gamma"])]);
        let window = Window::ending_at(date("2014-12-31"), 365);
        let key = AreaKey {
            course_id: "cs".into(),
            period_index: 3,
        };
        let one = vec![loan("u1", "only", "2014-03-01", "cs", 3)];
        let two = vec![
            loan("u1", "only", "2014-03-01", "cs", 3),
            loan("u2", "only", "2014-03-02", "cs", 3),
        ];
        for (mode, expected) in [
            (IdfMode::PaperExample, 1.0 / 3.0),
            (IdfMode::NaturalLog, 0.0),
        ] {
            let cfg = WeightingConfig {
                idf_mode: mode,
                ..Default::default()
            };
            let a = build_area_profile(
                &key,
                &one,
                &[],
                &bt,
                &library_stats(&one, &bt, &window),
                window,
                &cfg,
            );
            let b = build_area_profile(
                &key,
                &two,
                &[],
                &bt,
                &library_stats(&two, &bt, &window),
                window,
                &cfg,
            );
            assert_eq!(a.entries, b.entries);
            assert!(a.entries.values().all(|w| close(*w, expected, 1e-12)));
        }
        let empty_key = AreaKey {
            course_id: "cs".into(),
            period_index: 4,
        };
        let lib = library_stats(&one, &bt, &window);
        assert!(build_area_profile(
            &empty_key,
            &one,
            &[],
            &bt,
            &lib,
            window,
            &WeightingConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn area_membership_follows_enrollment_at_loan_date() {
        let enrollments = vec![
            Enrollment {
                user_id: "u1".into(),
                course_id: "adm".into(),
                period_index: 2,
                as_of_date: date("2014-01-01"),
            },
            Enrollment {
                user_id: "u1".into(),
                course_id: "adm".into(),
                period_index: 3,
                as_of_date: date("2014-07-01"),
            },
        ];
        let early = loan("u1", "x", "2014-03-01", "ignored", 9);
        let late = loan("u1", "x", "2014-08-01", "ignored", 9);
        let before = loan("u1", "x", "2013-08-01", "vet", 1);
        assert_eq!(loan_area(&early, &enrollments).period_index, 2);
        assert_eq!(loan_area(&late, &enrollments).period_index, 3);
        assert_eq!(loan_area(&before, &enrollments).course_id, "vet");
    }

    #[test]
    fn seeding_only_fills_empty_profiles() {
        let window = Window::ending_at(date("2014-12-31"), 30);
        let area = WeightedTagList {
            owner: ProfileOwner::Area(AreaKey {
                course_id: "adm".into(),
                period_index: 3,
            }),
            entries: [(tag("management"), 0.2), (tag("marketing"), 0.1)].into(),
            window,
        };
        let mut marcos = WeightedTagList::empty(
            ProfileOwner::User {
                user_id: "marcos".into(),
            },
            window,
        );
        assert!(seed_from_area(&mut marcos, &area));
        assert_eq!(marcos.entries, area.entries);

        let mut busy = WeightedTagList::empty(
            ProfileOwner::User {
                user_id: "b".into(),
            },
            window,
        );
        busy.entries.insert(tag("own"), 0.5);
        assert!(!seed_from_area(&mut busy, &area));
        assert_eq!(busy.len(), 1);

        let mut lonely = WeightedTagList::empty(
            ProfileOwner::User {
                user_id: "l".into(),
            },
            window,
        );
        let empty_area = WeightedTagList::empty(area.owner.clone(), window);
        assert!(!seed_from_area(&mut lonely, &empty_area));
        assert!(lonely.is_empty());
    }

    fn profile_with(entries: &[(&str, f64)]) -> UserProfile {
        let window = Window::ending_at(date("2014-12-31"), 30);
        UserProfile {
            relevant: WeightedTagList {
                owner: ProfileOwner::User {
                    user_id: "u".into(),
                },
                entries: entries.iter().map(|(t, w)| (tag(t), *w)).collect(),
                window,
            },
            irrelevant: IrrelevantTagList::new("u"),
        }
    }

    #[test]
    fn irrelevant_rating_moves_all_item_tags() {
        let mut p = profile_with(&[("veterinary", 0.05), ("linear", 0.08)]);
        let rated = book(
            "vet",
            &["editing", "anatomy", "arts", "domestic", "veterinary"],
        );
        p.apply_irrelevant(&rated);
        assert_eq!(p.irrelevant.tags.len(), 5);
        assert!(p.relevant.weight(&tag("veterinary")).is_none());
        assert!(p.relevant.weight(&tag("linear")).is_some());
        assert!(p.is_disjoint());
        let snapshot = p.clone();
        p.apply_irrelevant(&rated);
        assert_eq!(p, snapshot);

        let mut q = profile_with(&[("linear", 0.08)]);
        q.apply_irrelevant(&book("other", &["poetry"]));
        assert_eq!(q.relevant.len(), 1);
        assert_eq!(q.irrelevant.tags.len(), 1);
    }

    #[test]
    fn reallocation_recomputes_weight() {
        let items = vec![
            book("b1", &["veterinary", "anatomy"]),
            book("b2", &["veterinary", "linear"]),
            book("b3", &["linear", "algebra"]),
        ];
        let owner = CorpusStats::from_occurrences([&items[0], &items[1]]);
        let library = CorpusStats::from_occurrences(&items);
        let cfg = WeightingConfig::default();
        let mut p = profile_with(&[("veterinary", 0.999), ("linear", 0.1)]);
        p.apply_irrelevant(&book("x", &["veterinary"]));
        p.reallocate(
            &tag("veterinary"),
            Direction::ToRelevant,
            &owner,
            &library,
            &cfg,
        )
        .unwrap();
        // f = 2 of 4 owner tag occurrences, 2 of 3 library books: 0.5 * ln(3/2).
        let expected = 2.0 / 4.0 * (3.0f64 / 2.0).ln();
        assert!(close(
            p.relevant.weight(&tag("veterinary")).unwrap(),
            expected,
            1e-12
        ));
        assert!(p.is_disjoint());
    }

    #[test]
    fn reallocation_round_trip_and_errors() {
        let items = vec![book("b1", &["linear", "algebra"])];
        let stats = CorpusStats::from_occurrences(&items);
        let cfg = WeightingConfig::default();
        let mut p = profile_with(&[("linear", 0.0), ("algebra", 0.0)]);
        let original = p.clone();
        assert_eq!(
            p.reallocate(&tag("linear"), Direction::ToRelevant, &stats, &stats, &cfg),
            Err(ProfileError::NotFound(tag("linear")))
        );
        p.reallocate(
            &tag("linear"),
            Direction::ToIrrelevant,
            &stats,
            &stats,
            &cfg,
        )
        .unwrap();
        assert!(p.irrelevant.tags.contains(&tag("linear")));
        p.reallocate(&tag("linear"), Direction::ToRelevant, &stats, &stats, &cfg)
            .unwrap();
        assert_eq!(p, original);
    }

    fn arb_items() -> impl Strategy<Value = Vec<ItemTagSet>> {
        prop::collection::vec(
            (0usize..12, prop::collection::btree_set(0usize..15, 0..6)),
            1..25,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .map(|(id, tags)| {
                    ItemTagSet::new(
                        ItemRef::book(format!("b{id}")),
                        tags.into_iter().map(|t| tag(&format!("t{t}"))).collect(),
                    )
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn stats_invariants(occ in arb_items()) {
            // A book id must always map to one tag set.
            let mut canon: BTreeMap<String, ItemTagSet> = BTreeMap::new();
            for i in &occ {
                canon.entry(i.item().item_id.clone()).or_insert_with(|| i.clone());
            }
            let occ: Vec<ItemTagSet> = occ.iter().map(|i| canon[&i.item().item_id].clone()).collect();
            let stats = CorpusStats::from_occurrences(&occ);
            for t in stats.terms() {
                prop_assert!(stats.books_with(t) <= stats.total_books);
                prop_assert!(stats.occurrences(t) >= stats.books_with(t));
            }
            if stats.total_term_occurrences > 0 {
                let tf_sum: f64 = stats.terms().map(|t| compute_tf(t, &stats).unwrap()).sum();
                prop_assert!(tf_sum <= 1.0 + 1e-12);
                let cfg = WeightingConfig::default();
                let max_w = (stats.total_books as f64).ln();
                for (t, w) in weigh_terms(&stats, &stats, &cfg) {
                    prop_assert!(w >= 0.0);
                    prop_assert!(w <= max_w + 1e-12);
                    let idf = compute_idf(&t, &stats, &cfg).unwrap();
                    prop_assert_eq!(idf == 0.0, stats.books_with(&t) == stats.total_books);
                }
                let ratio_cfg = WeightingConfig { idf_mode: IdfMode::PaperExample, ..cfg };
                for t in stats.terms() {
                    let w = compute_tfidf(t, &stats, &stats, &ratio_cfg).unwrap();
                    let expected = compute_tf(t, &stats).unwrap()
                        * (stats.total_books as f64 / stats.books_with(t) as f64);
                    prop_assert_eq!(w, expected);
                }
            }
        }
    }
}
