//! Recommendation list generation.
//!
//! A user's tags are split into three groups by weight relative to the
//! heaviest tag. An item is a content match when it shares at least `m_g`
//! non-irrelevant tags with group `g`, trying groups 1, 2, 3 in order. Books
//! borrowed by collaborative partners are merged into the same pool, which is
//! ranked and cut to `list_size`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{Tag, TagSet};
use crate::profile::{BookTags, ItemKind, ItemRef, ItemTagSet, UserProfile, WeightedTagList};
use crate::similarity::{CfConfig, SimilarityMatrix};

/// Rank bonus per group step. Tag weight sums stay far below it, so a
/// group-1 match always outranks a group-2 match.
pub const GROUP_BONUS: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecommendError {
    #[error("profile is empty")]
    EmptyProfile,
    #[error("user `{0}` has no profile and no area profile to seed from")]
    ColdStartUnresolvable(String),
    #[error("invalid grouping config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    /// Lower bound of group 1, percent of the maximum weight.
    pub p1: f64,
    /// Lower bound of group 2.
    pub p2: f64,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    #[serde(default = "default_list_size")]
    pub list_size: usize,
}

fn default_list_size() -> usize {
    30
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            p1: 70.0,
            p2: 40.0,
            m1: 4,
            m2: 5,
            m3: 5,
            list_size: 30,
        }
    }
}

impl fmt::Display for GroupingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p1={} p2={} m={},{},{}",
            self.p1, self.p2, self.m1, self.m2, self.m3
        )
    }
}

impl GroupingConfig {
    pub fn new(p1: f64, p2: f64, m: [usize; 3]) -> Self {
        GroupingConfig {
            p1,
            p2,
            m1: m[0],
            m2: m[1],
            m3: m[2],
            list_size: 30,
        }
    }

    pub fn validate(&self) -> Result<(), RecommendError> {
        if !(0.0 < self.p2 && self.p2 < self.p1 && self.p1 <= 100.0) {
            return Err(RecommendError::Config(format!(
                "need 0 < p2 < p1 <= 100, got p1={} p2={}",
                self.p1, self.p2
            )));
        }
        if self.m1 == 0 || self.m2 == 0 || self.m3 == 0 {
            return Err(RecommendError::Config("min matches must be >= 1".into()));
        }
        if self.list_size == 0 {
            return Err(RecommendError::Config("list_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn min_matches(&self, group: u8) -> usize {
        match group {
            1 => self.m1,
            2 => self.m2,
            _ => self.m3,
        }
    }

    /// Identity of the grid point, ignoring list size.
    pub fn grid_key(&self) -> (u64, u64, usize, usize, usize) {
        (
            self.p1.to_bits(),
            self.p2.to_bits(),
            self.m1,
            self.m2,
            self.m3,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagGroupAssignment {
    pub groups: BTreeMap<Tag, u8>,
}

impl TagGroupAssignment {
    pub fn group_of(&self, tag: &Tag) -> Option<u8> {
        self.groups.get(tag).copied()
    }

    pub fn tags_in(&self, group: u8) -> impl Iterator<Item = &Tag> {
        self.groups
            .iter()
            .filter(move |(_, g)| **g == group)
            .map(|(t, _)| t)
    }
}

/// Group 1 holds tags at or above `p1` percent of the maximum weight, group 2
/// those in `[p2, p1)`, group 3 the rest. When every weight is 0 all tags sit
/// at 100% of the maximum.
pub fn assign_groups(
    profile: &WeightedTagList,
    config: &GroupingConfig,
) -> Result<TagGroupAssignment, RecommendError> {
    let max = profile.max_weight().ok_or(RecommendError::EmptyProfile)?;
    let groups = profile
        .entries
        .iter()
        .map(|(t, w)| {
            let scaled = w * 100.0;
            let g = if scaled >= config.p1 * max {
                1
            } else if scaled >= config.p2 * max {
                2
            } else {
                3
            };
            (t.clone(), g)
        })
        .collect();
    Ok(TagGroupAssignment { groups })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemMatch {
    pub group: u8,
    pub tags: TagSet,
}

pub fn match_item(
    item: &ItemTagSet,
    assignment: &TagGroupAssignment,
    irrelevant: &TagSet,
    config: &GroupingConfig,
) -> Option<ItemMatch> {
    let mut shared: [Vec<&Tag>; 3] = Default::default();
    for tag in item.tags() {
        if irrelevant.contains(tag) {
            continue;
        }
        if let Some(g) = assignment.group_of(tag) {
            shared[usize::from(g - 1)].push(tag);
        }
    }
    (1u8..=3).find_map(|g| {
        let tags = &shared[usize::from(g - 1)];
        (tags.len() >= config.min_matches(g)).then(|| ItemMatch {
            group: g,
            tags: tags.iter().map(|t| (*t).clone()).collect(),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ContentMatch,
    CfPartner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationItem {
    pub item_id: String,
    pub item_kind: ItemKind,
    pub source: Source,
    pub matched_group: Option<u8>,
    pub matched_tags: TagSet,
    pub score: f64,
}

impl RecommendationItem {
    pub fn item_ref(&self) -> ItemRef {
        ItemRef {
            item_id: self.item_id.clone(),
            item_kind: self.item_kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user_id: String,
    pub generated_at: DateTime<Utc>,
    pub items: Vec<RecommendationItem>,
}

impl RecommendationList {
    pub fn contains(&self, item: &ItemRef) -> bool {
        self.items
            .iter()
            .any(|i| i.item_id == item.item_id && i.item_kind == item.item_kind)
    }
}

/// Sum of the user's weights on the matched tags plus the group bonus.
pub fn score_content(matched: &ItemMatch, profile: &WeightedTagList) -> f64 {
    let weights: f64 = matched.tags.iter().filter_map(|t| profile.weight(t)).sum();
    f64::from(3 - matched.group) * GROUP_BONUS + weights
}

pub fn score_cf(similarity: f64) -> f64 {
    similarity * GROUP_BONUS
}

/// Score descending, then item id, then kind.
pub fn rank(items: &mut [RecommendationItem]) {
    items.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.item_id.cmp(&b.item_id))
            .then_with(|| a.item_kind.cmp(&b.item_kind))
    });
}

/// Read-only inputs shared by every user's list in one cycle.
pub struct RecommendContext<'a> {
    /// Candidate books and documents.
    pub catalog: &'a [ItemTagSet],
    pub book_tags: &'a BookTags,
    /// Distinct in-window borrowed books per user.
    pub borrowed: &'a BTreeMap<String, BTreeSet<String>>,
    pub matrix: &'a SimilarityMatrix,
    pub grouping: &'a GroupingConfig,
    pub cf: &'a CfConfig,
    pub generated_at: DateTime<Utc>,
}

/// Builds one user's list from an already seeded profile. Items in `rated`
/// never appear.
pub fn generate(
    ctx: &RecommendContext<'_>,
    profile: &UserProfile,
    rated: &BTreeSet<ItemRef>,
) -> Result<RecommendationList, RecommendError> {
    let user = profile.user_id();
    if profile.relevant.is_empty() {
        return Err(RecommendError::ColdStartUnresolvable(user.to_string()));
    }
    let assignment = assign_groups(&profile.relevant, ctx.grouping)?;
    let irrelevant = &profile.irrelevant.tags;

    let mut pool: BTreeMap<ItemRef, RecommendationItem> = BTreeMap::new();
    for item in ctx.catalog {
        if rated.contains(item.item()) {
            continue;
        }
        if let Some(m) = match_item(item, &assignment, irrelevant, ctx.grouping) {
            let score = score_content(&m, &profile.relevant);
            pool.insert(
                item.item().clone(),
                RecommendationItem {
                    item_id: item.item().item_id.clone(),
                    item_kind: item.item().item_kind,
                    source: Source::ContentMatch,
                    matched_group: Some(m.group),
                    matched_tags: m.tags,
                    score,
                },
            );
        }
    }

    let partners = ctx.matrix.cf_partners(user, ctx.cf).unwrap_or_default();
    for (partner, sim) in partners {
        let Some(books) = ctx.borrowed.get(&partner) else {
            continue;
        };
        for code in books {
            let Some(item) = ctx.book_tags.get(code) else {
                continue;
            };
            if rated.contains(item.item()) {
                continue;
            }
            if !item.tags().is_empty() && item.tags().iter().all(|t| irrelevant.contains(t)) {
                continue;
            }
            let score = score_cf(sim);
            if pool
                .get(item.item())
                .is_some_and(|existing| existing.score >= score)
            {
                continue;
            }
            let matched_tags = item
                .tags()
                .iter()
                .filter(|t| profile.relevant.entries.contains_key(*t))
                .cloned()
                .collect();
            pool.insert(
                item.item().clone(),
                RecommendationItem {
                    item_id: code.clone(),
                    item_kind: ItemKind::Book,
                    source: Source::CfPartner,
                    matched_group: None,
                    matched_tags,
                    score,
                },
            );
        }
    }

    let mut items: Vec<RecommendationItem> = pool.into_values().collect();
    rank(&mut items);
    items.truncate(ctx.grouping.list_size);
    Ok(RecommendationList {
        user_id: user.to_string(),
        generated_at: ctx.generated_at,
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{IrrelevantTagList, ProfileOwner, Window};
    use crate::similarity::build_matrix;
    use chrono::NaiveDate;

    fn tag(s: &str) -> Tag {
        Tag::from_normalized(s).unwrap()
    }

    fn window() -> Window {
        Window::ending_at(NaiveDate::from_ymd_opt(2015, 6, 1).unwrap(), 518)
    }

    fn list(entries: &[(&str, f64)]) -> WeightedTagList {
        WeightedTagList {
            owner: ProfileOwner::User {
                user_id: "u".into(),
            },
            entries: entries.iter().map(|(t, w)| (tag(t), *w)).collect(),
            window: window(),
        }
    }

    // Weights of the sixteen tags of a student's loan-history profile.
    fn student() -> WeightedTagList {
        list(&[
            ("logic", 0.0662),
            ("languages", 0.0191),
            ("electronic", 0.0514),
            ("computers", 0.0410),
            ("teoria", 0.0164),
            ("logica", 0.0637),
            ("computadores", 0.0398),
            ("machine", 0.0140),
            ("data", 0.0498),
            ("matematica", 0.0634),
            ("processing", 0.0494),
            ("linear", 0.0846),
            ("models", 0.0524),
            ("algebra", 0.0613),
            ("complexity", 0.0098),
            ("computational", 0.0098),
        ])
    }

    fn item(id: &str, tags: &[&str]) -> ItemTagSet {
        ItemTagSet::new(ItemRef::book(id), tags.iter().map(|t| tag(t)).collect())
    }

    #[test]
    fn student_profile_groups() {
        let p = student();
        let cfg = GroupingConfig::default();
        let a = assign_groups(&p, &cfg).unwrap();
        assert_eq!(p.max_weight(), Some(0.0846));
        assert_eq!(a.group_of(&tag("linear")), Some(1));
        // 0.0098 / 0.0846 = 11.6% of the maximum.
        assert_eq!(a.group_of(&tag("computational")), Some(3));
        // 0.0662 / 0.0846 = 78.3%: group 1 at p1 = 70, group 2 at p1 = 80.
        assert_eq!(a.group_of(&tag("logic")), Some(1));
        let strict = GroupingConfig::new(80.0, 50.0, [2, 3, 4]);
        assert_eq!(
            assign_groups(&p, &strict).unwrap().group_of(&tag("logic")),
            Some(2)
        );
        assert_eq!(a.groups.len(), p.len());
    }

    #[test]
    fn single_tag_and_empty_profiles() {
        let cfg = GroupingConfig::default();
        let a = assign_groups(&list(&[("solo", 0.01)]), &cfg).unwrap();
        assert_eq!(a.group_of(&tag("solo")), Some(1));
        let z = assign_groups(&list(&[("a", 0.0), ("b", 0.0)]), &cfg).unwrap();
        assert!(z.groups.values().all(|g| *g == 1));
        assert_eq!(
            assign_groups(&list(&[]), &cfg),
            Err(RecommendError::EmptyProfile)
        );
    }

    fn grouped() -> TagGroupAssignment {
        let mut groups = BTreeMap::new();
        for t in ["g1a", "g1b", "g1c", "g1d"] {
            groups.insert(tag(t), 1);
        }
        for t in ["g2a", "g2b", "g2c", "g2d", "g2e"] {
            groups.insert(tag(t), 2);
        }
        for t in ["g3a", "g3b", "g3c", "g3d", "g3e"] {
            groups.insert(tag(t), 3);
        }
        TagGroupAssignment { groups }
    }

    #[test]
    fn matching_rules() {
        let a = grouped();
        let cfg = GroupingConfig::default();
        let none = TagSet::new();
        let four = item("i1", &["g1a", "g1b", "g1c", "g1d", "other"]);
        let m = match_item(&four, &a, &none, &cfg).unwrap();
        assert_eq!(m.group, 1);
        assert_eq!(m.tags.len(), 4);

        let fall = item(
            "i2",
            &["g1a", "g1b", "g1c", "g2a", "g2b", "g2c", "g2d", "g2e"],
        );
        assert_eq!(match_item(&fall, &a, &none, &cfg).unwrap().group, 2);

        let weak = item("i3", &["g1a", "g2a", "g3a", "g3b"]);
        assert!(match_item(&weak, &a, &none, &cfg).is_none());

        let irrelevant: TagSet = ["g1a", "g1b", "g1c", "g1d"].map(tag).into();
        assert!(match_item(&four, &a, &irrelevant, &cfg).is_none());
    }

    #[test]
    fn scoring() {
        let p = student();
        let m = ItemMatch {
            group: 1,
            tags: [tag("linear"), tag("logica")].into(),
        };
        assert!((score_content(&m, &p) - 2000.1483).abs() < 1e-9);
        let g2 = ItemMatch {
            group: 2,
            tags: p.entries.keys().cloned().collect(),
        };
        let g1 = ItemMatch {
            group: 1,
            tags: TagSet::new(),
        };
        assert!(score_content(&g1, &p) > score_content(&g2, &p));

        let mk = |id: &str, score: f64| RecommendationItem {
            item_id: id.into(),
            item_kind: ItemKind::Book,
            source: Source::ContentMatch,
            matched_group: Some(1),
            matched_tags: TagSet::new(),
            score,
        };
        let mut items = vec![mk("b", 1.0), mk("a", 1.0), mk("c", 2.0)];
        rank(&mut items);
        assert_eq!(
            items.iter().map(|i| i.item_id.as_str()).collect::<Vec<_>>(),
            vec!["c", "a", "b"]
        );
    }

    fn user(id: &str, entries: &[(&str, f64)]) -> UserProfile {
        let mut relevant = list(entries);
        relevant.owner = ProfileOwner::User { user_id: id.into() };
        UserProfile {
            relevant,
            irrelevant: IrrelevantTagList::new(id),
        }
    }

    fn epoch() -> DateTime<Utc> {
        DateTime::<Utc>::from_timestamp(0, 0).unwrap()
    }

    #[test]
    fn originating_item_is_matched() {
        let x = item("x", &["alpha", "beta", "gamma", "delta"]);
        let catalog = vec![x.clone()];
        let book_tags: BookTags = [("x".to_string(), x)].into();
        let borrowed = [("u".to_string(), BTreeSet::from(["x".to_string()]))].into();
        let profile = user(
            "u",
            &[
                ("alpha", 0.0),
                ("beta", 0.0),
                ("gamma", 0.0),
                ("delta", 0.0),
            ],
        );
        let matrix = build_matrix(
            &[("u".to_string(), profile.relevant.entries.clone())].into(),
            epoch(),
        );
        let cfg = GroupingConfig::default();
        let ctx = RecommendContext {
            catalog: &catalog,
            book_tags: &book_tags,
            borrowed: &borrowed,
            matrix: &matrix,
            grouping: &cfg,
            cf: &CfConfig::default(),
            generated_at: epoch(),
        };
        let l = generate(&ctx, &profile, &BTreeSet::new()).unwrap();
        assert_eq!(l.items.len(), 1);
        assert_eq!(l.items[0].source, Source::ContentMatch);

        let rated = BTreeSet::from([ItemRef::book("x")]);
        assert!(generate(&ctx, &profile, &rated).unwrap().items.is_empty());

        let empty = user("u", &[]);
        assert_eq!(
            generate(&ctx, &empty, &BTreeSet::new()),
            Err(RecommendError::ColdStartUnresolvable("u".into()))
        );
    }

    #[test]
    fn twins_share_borrowed_books() {
        let a = item("a", &["t1", "t2"]);
        let b = item("b", &["t1", "t2"]);
        let catalog = vec![a.clone(), b.clone()];
        let book_tags: BookTags = [("a".to_string(), a), ("b".to_string(), b)].into();
        let borrowed = [
            ("u1".to_string(), BTreeSet::from(["a".to_string()])),
            ("u2".to_string(), BTreeSet::from(["b".to_string()])),
        ]
        .into();
        let p1 = user("u1", &[("t1", 0.5), ("t2", 0.5)]);
        let p2 = user("u2", &[("t1", 0.5), ("t2", 0.5)]);
        let matrix = build_matrix(
            &[
                ("u1".to_string(), p1.relevant.entries.clone()),
                ("u2".to_string(), p2.relevant.entries.clone()),
            ]
            .into(),
            epoch(),
        );
        // Min matches of 4 rule out content matches on two-tag items.
        let cfg = GroupingConfig::default();
        let ctx = RecommendContext {
            catalog: &catalog,
            book_tags: &book_tags,
            borrowed: &borrowed,
            matrix: &matrix,
            grouping: &cfg,
            cf: &CfConfig::default(),
            generated_at: epoch(),
        };
        let l1 = generate(&ctx, &p1, &BTreeSet::new()).unwrap();
        assert_eq!(l1.items.len(), 1);
        assert_eq!(l1.items[0].item_id, "b");
        assert_eq!(l1.items[0].source, Source::CfPartner);
        assert_eq!(l1.items[0].matched_group, None);
        assert_eq!(l1.items[0].score, GROUP_BONUS);
        let l2 = generate(&ctx, &p2, &BTreeSet::new()).unwrap();
        assert_eq!(l2.items[0].item_id, "a");
    }

    #[test]
    fn list_is_capped() {
        let catalog: Vec<ItemTagSet> = (0..50).map(|i| item(&format!("i{i:02}"), &["t"])).collect();
        let profile = user("u", &[("t", 1.0)]);
        let matrix = build_matrix(&BTreeMap::new(), epoch());
        let cfg = GroupingConfig {
            m1: 1,
            ..Default::default()
        };
        let ctx = RecommendContext {
            catalog: &catalog,
            book_tags: &BookTags::new(),
            borrowed: &BTreeMap::new(),
            matrix: &matrix,
            grouping: &cfg,
            cf: &CfConfig::default(),
            generated_at: epoch(),
        };
        let l = generate(&ctx, &profile, &BTreeSet::new()).unwrap();
        assert_eq!(l.items.len(), 30);
        assert_eq!(l.items[0].item_id, "i00");
    }

    #[test]
    fn config_validation() {
        assert!(GroupingConfig::default().validate().is_ok());
        assert!(GroupingConfig::new(40.0, 70.0, [4, 5, 5])
            .validate()
            .is_err());
        assert!(GroupingConfig::new(70.0, 40.0, [0, 5, 5])
            .validate()
            .is_err());
        assert!(GroupingConfig::new(101.0, 40.0, [1, 1, 1])
            .validate()
            .is_err());
    }

    #[test]
    fn json_shape() {
        let l = RecommendationList {
            user_id: "u".into(),
            generated_at: epoch(),
            items: vec![RecommendationItem {
                item_id: "7".into(),
                item_kind: ItemKind::Document,
                source: Source::CfPartner,
                matched_group: None,
                matched_tags: [tag("x")].into(),
                score: 950.0,
            }],
        };
        let v = serde_json::to_value(&l).unwrap();
        assert_eq!(v["items"][0]["item_kind"], "document");
        assert_eq!(v["items"][0]["source"], "cf_partner");
        assert!(v["items"][0]["matched_group"].is_null());
        assert_eq!(v["items"][0]["matched_tags"][0], "x");
    }
}
