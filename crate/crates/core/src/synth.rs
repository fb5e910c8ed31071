//! Seeded generator of a corpus with planted structure, for sweeps and
//! acceptance runs where the right answer must be known.
//!
//! Each user has a private vocabulary split into four bands and borrows four
//! books, one per band, with loan counts 20, 15, 9 and 4. Every tag sits in a
//! single book, so the bands land at 100%, 75%, 45% and 20% of the heaviest
//! weight. Four unborrowed distractor books per user each fall one tag short
//! of matching under the planted grouping (70, 40, 4/5/5) but match under
//! looser settings; the borrowed books all match. Under the planted grouping
//! every user's list is exactly their four borrowed books plus documents, so
//! history precision and recall are both 1 there and lower elsewhere on the
//! standard grid.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    BookRecord, Corpus, DocumentRecord, Enrollment, IngestPaths, LoanEvent, StopwordList,
};
use crate::recommend::GroupingConfig;

/// Planted loan counts per band.
pub const BAND_LOANS: [usize; 4] = [20, 15, 9, 4];
/// Tags per band.
pub const BAND_TAGS: [usize; 4] = [4, 4, 5, 5];
const COURSES: [&str; 4] = ["cs", "vet", "law", "bio"];
const STOPWORDS: [&str; 8] = ["the", "of", "and", "to", "de", "da", "para", "em"];
const PER_USER_ITEMS: usize = 9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one user")]
    NoUsers,
    #[error("{users} users need at least {needed} items, got {items}")]
    TooFewItems {
        users: usize,
        items: usize,
        needed: usize,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    /// Books plus documents in the catalog.
    pub items: usize,
    pub seed: u64,
    /// Users with an enrollment and no loans, sharing the first user's area.
    pub cold_start_users: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 12,
            items: 200,
            seed: 42,
            cold_start_users: 0,
        }
    }
}

/// Ground truth recorded next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub config: SynthConfig,
    pub planted_grouping: GroupingConfig,
    /// The books each user borrowed, which the planted grouping recovers.
    pub borrowed: BTreeMap<String, BTreeSet<String>>,
    /// Unborrowed books built to match only under looser groupings.
    pub distractors: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub corpus: Corpus,
    pub truth: PlantedTruth,
}

impl Planted {
    /// CSV inputs for `ingest` plus `planted.json`.
    pub fn write(&self, dir: &Path) -> Result<IngestPaths, SynthError> {
        let paths = self.corpus.export_csv(dir)?;
        let json = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        std::fs::write(dir.join("planted.json"), json + "\n")?;
        Ok(paths)
    }
}

struct Words {
    rng: ChaCha20Rng,
    used: BTreeSet<String>,
}

impl Words {
    fn fresh(&mut self) -> String {
        const CONS: &[u8] = b"bcdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        loop {
            let syllables = self.rng.gen_range(3..=4);
            let w: String = (0..syllables)
                .flat_map(|_| {
                    [
                        CONS[self.rng.gen_range(0..CONS.len())] as char,
                        VOWELS[self.rng.gen_range(0..VOWELS.len())] as char,
                    ]
                })
                .collect();
            if !STOPWORDS.contains(&w.as_str()) && self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

/// Keyword text with a stopword sprinkled in and the first tag capitalized,
/// so normalization has something to do.
fn keywords(rng: &mut ChaCha20Rng, tags: &[String]) -> String {
    let mut parts: Vec<String> = tags.to_vec();
    parts.shuffle(rng);
    if let Some(first) = parts.first_mut() {
        let mut c = first.chars();
        if let Some(h) = c.next() {
            *first = h.to_uppercase().chain(c).collect();
        }
    }
    let at = rng.gen_range(0..=parts.len());
    parts.insert(at, STOPWORDS[rng.gen_range(0..STOPWORDS.len())].to_string());
    parts.join(" ")
}

pub fn generate(config: &SynthConfig) -> Result<Planted, SynthError> {
    if config.users == 0 {
        return Err(SynthError::NoUsers);
    }
    let needed = config.users * PER_USER_ITEMS;
    if config.items < needed {
        return Err(SynthError::TooFewItems {
            users: config.users,
            items: config.items,
            needed,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut words = Words {
        rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x5eed),
        used: BTreeSet::new(),
    };
    let noise = words.many(60);
    let start = NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date");
    let span_days = 517;

    let mut books = BTreeMap::new();
    let mut documents = BTreeMap::new();
    let mut loans = Vec::new();
    let mut enrollments = Vec::new();
    let mut borrowed = BTreeMap::new();
    let mut distractors = BTreeMap::new();
    let mut next_book = 0usize;
    let mut next_doc = 0usize;

    let mut add_book =
        |rng: &mut ChaCha20Rng, tags: &[String], books: &mut BTreeMap<String, BookRecord>| {
            next_book += 1;
            let code = format!("B{next_book:05}");
            books.insert(
                code.clone(),
                BookRecord {
                    collection_code: code.clone(),
                    title: format!("Volume {next_book}"),
                    keywords_raw: keywords(rng, tags),
                    classification: format!("{}.{}", rng.gen_range(0..1000), rng.gen_range(0..100)),
                },
            );
            code
        };
    let mut add_doc = |rng: &mut ChaCha20Rng,
                       kw: &[String],
                       abs: &[String],
                       docs: &mut BTreeMap<String, DocumentRecord>| {
        next_doc += 1;
        let id = format!("D{next_doc:05}");
        docs.insert(
            id.clone(),
            DocumentRecord {
                document_id: id.clone(),
                title: format!("Report {next_doc}"),
                keywords_raw: keywords(rng, kw),
                abstract_raw: format!("the {}", abs.join(" of ")),
                authors_raw: "Doe, J.".into(),
                detail_url: format!("https://repository.example.org/handle/{next_doc}"),
            },
        );
        id
    };

    for u in 0..config.users {
        let user = format!("u{u:03}");
        let course = COURSES[u % COURSES.len()];
        let period = 1 + (u / COURSES.len()) as u32 % 8;
        enrollments.push(Enrollment {
            user_id: user.clone(),
            course_id: course.into(),
            period_index: period,
            as_of_date: start,
        });
        let bands: Vec<Vec<String>> = BAND_TAGS.iter().map(|n| words.many(*n)).collect();
        let mut mine = BTreeSet::new();
        for (band, count) in bands.iter().zip(BAND_LOANS) {
            let code = add_book(&mut rng, band, &mut books);
            for _ in 0..count {
                loans.push(LoanEvent {
                    user_id: user.clone(),
                    collection_code: code.clone(),
                    loan_date: start + Duration::days(rng.gen_range(0..=span_days)),
                    department_code: format!("d-{course}"),
                    course_id: course.into(),
                    period_index: period,
                });
            }
            mine.insert(code);
        }
        borrowed.insert(user.clone(), mine);

        let pick = |rng: &mut ChaCha20Rng, n: usize| -> Vec<String> {
            noise.choose_multiple(rng, n).cloned().collect()
        };
        let (a, b, c, d) = (&bands[0], &bands[1], &bands[2], &bands[3]);
        let shapes: [Vec<String>; 4] = [
            // Three of four top-band tags: matches only when m1 <= 3.
            [&a[..3], &pick(&mut rng, 2)[..]].concat(),
            // Two top plus one second band: both in group 1 once p1 <= 75.
            [&a[..2], &b[..1], &pick(&mut rng, 2)[..]].concat(),
            // Four third-band tags: group 2 at p2 <= 45, group 3 above.
            [&c[..4], &pick(&mut rng, 1)[..]].concat(),
            // Four bottom-band tags: always group 3.
            [&d[..4], &pick(&mut rng, 1)[..]].concat(),
        ];
        let decoys = shapes
            .iter()
            .map(|tags| add_book(&mut rng, tags, &mut books))
            .collect();
        distractors.insert(user.clone(), decoys);
        let abs = pick(&mut rng, 3);
        add_doc(&mut rng, a, &abs, &mut documents);
    }

    for c in 0..config.cold_start_users {
        enrollments.push(Enrollment {
            user_id: format!("c{c:03}"),
            course_id: COURSES[0].into(),
            period_index: 1,
            as_of_date: start,
        });
    }

    let remaining = config.items - needed;
    for i in 0..remaining {
        let n = rng.gen_range(3..=5);
        let tags: Vec<String> = noise.choose_multiple(&mut rng, n).cloned().collect();
        if i % 2 == 0 {
            add_book(&mut rng, &tags, &mut books);
        } else {
            let abs: Vec<String> = noise.choose_multiple(&mut rng, 2).cloned().collect();
            add_doc(&mut rng, &tags, &abs, &mut documents);
        }
    }

    loans.sort_by_key(|l| l.loan_date);
    Ok(Planted {
        corpus: Corpus {
            books,
            documents,
            loans,
            enrollments,
            stopwords: StopwordList::new(STOPWORDS),
        },
        truth: PlantedTruth {
            config: *config,
            planted_grouping: GroupingConfig::new(70.0, 40.0, [4, 5, 5]),
            borrowed,
            distractors,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig::default();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(generate(&cfg).unwrap().corpus, other.corpus);
    }

    #[test]
    fn sizes() {
        let cfg = SynthConfig {
            users: 5,
            items: 60,
            seed: 1,
            cold_start_users: 2,
        };
        let p = generate(&cfg).unwrap();
        assert_eq!(p.corpus.books.len() + p.corpus.documents.len(), 60);
        assert_eq!(p.corpus.loans.len(), 5 * BAND_LOANS.iter().sum::<usize>());
        assert_eq!(p.corpus.enrollments.len(), 7);
        assert_eq!(p.truth.borrowed.len(), 5);
        assert!(matches!(
            generate(&SynthConfig { items: 10, ..cfg }),
            Err(SynthError::TooFewItems { .. })
        ));
        assert!(matches!(
            generate(&SynthConfig { users: 0, ..cfg }),
            Err(SynthError::NoUsers)
        ));
    }

    #[test]
    fn dates_fit_default_window() {
        let p = generate(&SynthConfig::default()).unwrap();
        let first = p.corpus.loans.first().unwrap().loan_date;
        let last = p.corpus.loans.last().unwrap().loan_date;
        assert!((last - first).num_days() < 518);
    }

    #[test]
    fn csv_round_trip() {
        let p = generate(&SynthConfig {
            users: 3,
            items: 40,
            seed: 5,
            cold_start_users: 1,
        })
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let paths = p.write(tmp.path()).unwrap();
        let (back, report) = Corpus::ingest(&paths).unwrap();
        assert_eq!(back, p.corpus);
        assert!(report.rejects_text().is_empty());
        assert!(tmp.path().join("planted.json").exists());
    }
}
