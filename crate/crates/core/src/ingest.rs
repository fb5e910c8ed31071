//! File ingestion for the four datasets (books, repository documents, loans,
//! enrollments) and the stopword list.
//!
//! Every loader reads either RFC-4180 CSV with a fixed lowercase header or
//! JSON-lines objects keyed by the same column names. Bad rows never abort a
//! load: they are collected into a rejects report with their row number.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::fold_text;

pub const BOOK_COLUMNS: [&str; 4] = ["collection_code", "title", "keywords", "classification"];
pub const DOCUMENT_COLUMNS: [&str; 6] = [
    "document_id",
    "title",
    "keywords",
    "abstract",
    "authors",
    "detail_url",
];
pub const LOAN_COLUMNS: [&str; 6] = [
    "user_id",
    "collection_code",
    "loan_date",
    "department_code",
    "course_id",
    "period_index",
];
pub const ENROLLMENT_COLUMNS: [&str; 4] = ["user_id", "course_id", "period_index", "as_of_date"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {dataset} file: expected `{expected}`, found `{found}`")]
    Header {
        dataset: Dataset,
        expected: String,
        found: String,
    },
    #[error("csv error in {dataset} file: {source}")]
    Csv {
        dataset: Dataset,
        #[source]
        source: csv::Error,
    },
    #[error("unknown input format `{0}` (expected csv or jsonl)")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(InputFormat::Jsonl),
            other => Err(IngestError::Format(other.to_string())),
        }
    }
}

impl InputFormat {
    /// Guess from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => InputFormat::Jsonl,
            _ => InputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Books,
    Documents,
    Loans,
    Enrollments,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Books => "books",
            Dataset::Documents => "documents",
            Dataset::Loans => "loans",
            Dataset::Enrollments => "enrollments",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookRecord {
    pub collection_code: String,
    pub title: String,
    /// Author, area and keywords concatenated.
    #[serde(rename = "keywords")]
    pub keywords_raw: String,
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub document_id: String,
    pub title: String,
    #[serde(rename = "keywords")]
    pub keywords_raw: String,
    #[serde(rename = "abstract")]
    pub abstract_raw: String,
    #[serde(rename = "authors")]
    pub authors_raw: String,
    /// Empty when the repository has no landing page for the document.
    pub detail_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanEvent {
    pub user_id: String,
    pub collection_code: String,
    pub loan_date: NaiveDate,
    pub department_code: String,
    pub course_id: String,
    pub period_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrollment {
    pub user_id: String,
    pub course_id: String,
    pub period_index: u32,
    pub as_of_date: NaiveDate,
}

/// Lowercase, accent-folded stopwords.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StopwordList {
    words: BTreeSet<String>,
}

impl StopwordList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| fold_text(w.as_ref().trim()))
            .filter(|w| !w.is_empty())
            .collect();
        StopwordList { words }
    }

    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        StopwordList::new(text.lines().map(|line| match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }))
    }

    pub fn contains(&self, folded: &str) -> bool {
        self.words.contains(folded)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub row: usize,
    pub reason: String,
}

/// Outcome of one loader. `input_rows == accepted + rejects.len()`; duplicate
/// ids are accepted rows that overwrote an earlier one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport<T> {
    pub dataset: Dataset,
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
    pub duplicates: usize,
    pub input_rows: usize,
}

impl<T> LoadReport<T> {
    pub fn accepted(&self) -> usize {
        self.input_rows - self.rejects.len()
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: rows={} accepted={} rejected={} duplicates={}",
            self.dataset,
            self.input_rows,
            self.accepted(),
            self.rejects.len(),
            self.duplicates
        )
    }

    pub fn render_rejects(&self) -> String {
        let mut out = String::new();
        for r in &self.rejects {
            out.push_str(&format!("{} row {}: {}\n", self.dataset, r.row, r.reason));
        }
        out
    }
}

/// A row with values aligned to the dataset's columns. `None` means the
/// field was absent (JSON) or the row was short (CSV).
struct RawRow {
    row: usize,
    fields: Vec<Option<String>>,
}

impl RawRow {
    fn get(&self, i: usize) -> &str {
        self.fields[i].as_deref().unwrap_or("")
    }

    fn required(&self, i: usize, name: &str) -> Result<String, String> {
        let v = self.get(i).trim();
        if v.is_empty() {
            Err(format!("missing {name}"))
        } else {
            Ok(v.to_string())
        }
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads raw rows; per-row structural problems become rejects.
fn read_rows<R: Read>(
    reader: R,
    format: InputFormat,
    dataset: Dataset,
    columns: &[&str],
) -> Result<(Vec<RawRow>, Vec<Reject>, usize), IngestError> {
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0;
    match format {
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(reader);
            let header = rdr
                .headers()
                .map_err(|source| IngestError::Csv { dataset, source })?
                .clone();
            let found: Vec<&str> = header.iter().map(str::trim).collect();
            if found != columns {
                return Err(IngestError::Header {
                    dataset,
                    expected: columns.join(","),
                    found: found.join(","),
                });
            }
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                total += 1;
                match rec {
                    Ok(rec) if rec.len() == columns.len() => rows.push(RawRow {
                        row,
                        fields: rec.iter().map(|s| Some(s.to_string())).collect(),
                    }),
                    Ok(rec) => rejects.push(Reject {
                        row,
                        reason: format!("expected {} fields, found {}", columns.len(), rec.len()),
                    }),
                    Err(e) => rejects.push(Reject {
                        row,
                        reason: format!("unparseable row: {e}"),
                    }),
                }
            }
        }
        InputFormat::Jsonl => {
            let reader = BufReader::new(reader);
            let mut row = 0;
            for line in reader.lines() {
                let line = line.map_err(|source| IngestError::Io {
                    path: PathBuf::from(dataset.to_string()),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                row += 1;
                total += 1;
                match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&line) {
                    Ok(obj) => rows.push(RawRow {
                        row,
                        fields: columns
                            .iter()
                            .map(|c| match obj.get(*c) {
                                None | Some(serde_json::Value::Null) => None,
                                Some(serde_json::Value::String(s)) => Some(s.clone()),
                                Some(other) => Some(other.to_string()),
                            })
                            .collect(),
                    }),
                    Err(e) => rejects.push(Reject {
                        row,
                        reason: format!("invalid json object: {e}"),
                    }),
                }
            }
        }
    }
    Ok((rows, rejects, total))
}

fn parse_date(raw: &str, name: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|_| format!("{name} `{}` is not an ISO-8601 date", raw.trim()))
}

fn parse_period(raw: &str) -> Result<u32, String> {
    match raw.trim().parse::<u32>() {
        Ok(p) if p >= 1 => Ok(p),
        _ => Err(format!(
            "period_index `{}` is not a positive integer",
            raw.trim()
        )),
    }
}

fn validate_url(raw: &str) -> Result<(), String> {
    match url::Url::parse(raw) {
        Ok(u) if (u.scheme() == "http" || u.scheme() == "https") && u.host().is_some() => Ok(()),
        _ => Err(format!(
            "detail_url `{raw}` is not a well-formed http(s) url"
        )),
    }
}

/// Keyed records with last-write-wins on duplicate ids.
fn collect_keyed<T>(
    dataset: Dataset,
    rows: Vec<RawRow>,
    mut rejects: Vec<Reject>,
    total: usize,
    parse: impl Fn(&RawRow) -> Result<(String, T), String>,
) -> LoadReport<T> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, T> = BTreeMap::new();
    let mut duplicates = 0;
    for raw in &rows {
        match parse(raw) {
            Ok((id, rec)) => {
                if by_id.insert(id.clone(), rec).is_some() {
                    duplicates += 1;
                } else {
                    order.push(id);
                }
            }
            Err(reason) => rejects.push(Reject {
                row: raw.row,
                reason,
            }),
        }
    }
    rejects.sort_by_key(|r| r.row);
    let records = order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("id recorded on insert"))
        .collect();
    LoadReport {
        dataset,
        records,
        rejects,
        duplicates,
        input_rows: total,
    }
}

pub fn read_books<R: Read>(
    reader: R,
    format: InputFormat,
) -> Result<LoadReport<BookRecord>, IngestError> {
    let (rows, rejects, total) = read_rows(reader, format, Dataset::Books, &BOOK_COLUMNS)?;
    Ok(collect_keyed(Dataset::Books, rows, rejects, total, |r| {
        let code = r.required(0, "collection_code")?;
        let title = r.required(1, "title")?;
        Ok((
            code.clone(),
            BookRecord {
                collection_code: code,
                title,
                keywords_raw: r.get(2).to_string(),
                classification: r.get(3).trim().to_string(),
            },
        ))
    }))
}

pub fn load_books(path: &Path, format: InputFormat) -> Result<LoadReport<BookRecord>, IngestError> {
    read_books(open(path)?, format)
}

pub fn read_documents<R: Read>(
    reader: R,
    format: InputFormat,
) -> Result<LoadReport<DocumentRecord>, IngestError> {
    let (rows, rejects, total) = read_rows(reader, format, Dataset::Documents, &DOCUMENT_COLUMNS)?;
    Ok(collect_keyed(
        Dataset::Documents,
        rows,
        rejects,
        total,
        |r| {
            let id = r.required(0, "document_id")?;
            let title = r.required(1, "title")?;
            let detail_url = r.get(5).trim().to_string();
            if !detail_url.is_empty() {
                validate_url(&detail_url)?;
            }
            Ok((
                id.clone(),
                DocumentRecord {
                    document_id: id,
                    title,
                    keywords_raw: r.get(2).to_string(),
                    abstract_raw: r.get(3).to_string(),
                    authors_raw: r.get(4).to_string(),
                    detail_url,
                },
            ))
        },
    ))
}

pub fn load_documents(
    path: &Path,
    format: InputFormat,
) -> Result<LoadReport<DocumentRecord>, IngestError> {
    read_documents(open(path)?, format)
}

/// Loans must reference a known book. Accepted events come back sorted by
/// `loan_date`, file order among equal dates.
pub fn read_loans<R: Read>(
    reader: R,
    format: InputFormat,
    books: &BTreeMap<String, BookRecord>,
) -> Result<LoadReport<LoanEvent>, IngestError> {
    let (rows, mut rejects, total) = read_rows(reader, format, Dataset::Loans, &LOAN_COLUMNS)?;
    let mut records = Vec::new();
    for r in &rows {
        let parsed = (|| -> Result<LoanEvent, String> {
            let user_id = r.required(0, "user_id")?;
            let code = r.required(1, "collection_code")?;
            if !books.contains_key(&code) {
                return Err(format!(
                    "collection_code `{code}` does not resolve to a book"
                ));
            }
            Ok(LoanEvent {
                user_id,
                collection_code: code,
                loan_date: parse_date(r.get(2), "loan_date")?,
                department_code: r.get(3).trim().to_string(),
                course_id: r.get(4).trim().to_string(),
                period_index: parse_period(r.get(5))?,
            })
        })();
        match parsed {
            Ok(ev) => records.push(ev),
            Err(reason) => rejects.push(Reject { row: r.row, reason }),
        }
    }
    records.sort_by_key(|e: &LoanEvent| e.loan_date);
    rejects.sort_by_key(|r| r.row);
    Ok(LoadReport {
        dataset: Dataset::Loans,
        records,
        rejects,
        duplicates: 0,
        input_rows: total,
    })
}

pub fn load_loans(
    path: &Path,
    format: InputFormat,
    books: &BTreeMap<String, BookRecord>,
) -> Result<LoadReport<LoanEvent>, IngestError> {
    read_loans(open(path)?, format, books)
}

/// A second enrollment for the same (user, as_of_date) is rejected; the first
/// one in file order stays active.
pub fn read_enrollments<R: Read>(
    reader: R,
    format: InputFormat,
) -> Result<LoadReport<Enrollment>, IngestError> {
    let (rows, mut rejects, total) =
        read_rows(reader, format, Dataset::Enrollments, &ENROLLMENT_COLUMNS)?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for r in &rows {
        let parsed = (|| -> Result<Enrollment, String> {
            Ok(Enrollment {
                user_id: r.required(0, "user_id")?,
                course_id: r.required(1, "course_id")?,
                period_index: parse_period(r.get(2))?,
                as_of_date: parse_date(r.get(3), "as_of_date")?,
            })
        })();
        match parsed {
            Ok(en) => {
                if seen.insert((en.user_id.clone(), en.as_of_date)) {
                    records.push(en);
                } else {
                    rejects.push(Reject {
                        row: r.row,
                        reason: format!(
                            "user `{}` already has an enrollment as of {}",
                            en.user_id, en.as_of_date
                        ),
                    });
                }
            }
            Err(reason) => rejects.push(Reject { row: r.row, reason }),
        }
    }
    rejects.sort_by_key(|r| r.row);
    Ok(LoadReport {
        dataset: Dataset::Enrollments,
        records,
        rejects,
        duplicates: 0,
        input_rows: total,
    })
}

pub fn load_enrollments(
    path: &Path,
    format: InputFormat,
) -> Result<LoadReport<Enrollment>, IngestError> {
    read_enrollments(open(path)?, format)
}

pub fn load_stopwords(path: &Path) -> Result<StopwordList, IngestError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(StopwordList::parse(&text))
}

#[derive(Debug, Clone)]
pub struct IngestPaths {
    pub books: PathBuf,
    pub documents: PathBuf,
    pub loans: PathBuf,
    pub enrollments: PathBuf,
    pub stopwords: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub books: LoadReport<BookRecord>,
    pub documents: LoadReport<DocumentRecord>,
    pub loans: LoadReport<LoanEvent>,
    pub enrollments: LoadReport<Enrollment>,
}

impl IngestReport {
    pub fn summary(&self) -> String {
        [
            self.books.summary_line(),
            self.documents.summary_line(),
            self.loans.summary_line(),
            self.enrollments.summary_line(),
        ]
        .join("\n")
    }

    pub fn rejects_text(&self) -> String {
        let mut out = self.books.render_rejects();
        out.push_str(&self.documents.render_rejects());
        out.push_str(&self.loans.render_rejects());
        out.push_str(&self.enrollments.render_rejects());
        out
    }
}

/// The canonical in-memory corpus. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub books: BTreeMap<String, BookRecord>,
    pub documents: BTreeMap<String, DocumentRecord>,
    /// Sorted by loan date.
    pub loans: Vec<LoanEvent>,
    pub enrollments: Vec<Enrollment>,
    pub stopwords: StopwordList,
}

impl Corpus {
    /// Loads all datasets; each file's format is taken from its extension.
    pub fn ingest(paths: &IngestPaths) -> Result<(Corpus, IngestReport), IngestError> {
        let books = load_books(&paths.books, InputFormat::from_path(&paths.books))?;
        let documents = load_documents(&paths.documents, InputFormat::from_path(&paths.documents))?;
        let book_map: BTreeMap<String, BookRecord> = books
            .records
            .iter()
            .map(|b| (b.collection_code.clone(), b.clone()))
            .collect();
        let loans = load_loans(
            &paths.loans,
            InputFormat::from_path(&paths.loans),
            &book_map,
        )?;
        let enrollments = load_enrollments(
            &paths.enrollments,
            InputFormat::from_path(&paths.enrollments),
        )?;
        let stopwords = load_stopwords(&paths.stopwords)?;
        let corpus = Corpus {
            books: book_map,
            documents: documents
                .records
                .iter()
                .map(|d| (d.document_id.clone(), d.clone()))
                .collect(),
            loans: loans.records.clone(),
            enrollments: enrollments.records.clone(),
            stopwords,
        };
        Ok((
            corpus,
            IngestReport {
                books,
                documents,
                loans,
                enrollments,
            },
        ))
    }

    /// Latest loan date, used as the default end of the profile window.
    pub fn last_loan_date(&self) -> Option<NaiveDate> {
        self.loans.iter().map(|l| l.loan_date).max()
    }

    /// Writes the corpus back out as CSV files that [`Corpus::ingest`] reads.
    pub fn export_csv(&self, dir: &Path) -> std::io::Result<IngestPaths> {
        std::fs::create_dir_all(dir)?;
        let paths = IngestPaths {
            books: dir.join("books.csv"),
            documents: dir.join("documents.csv"),
            loans: dir.join("loans.csv"),
            enrollments: dir.join("enrollments.csv"),
            stopwords: dir.join("stopwords.txt"),
        };
        write_csv(
            &paths.books,
            &BOOK_COLUMNS,
            self.books.values().map(|b| {
                vec![
                    b.collection_code.clone(),
                    b.title.clone(),
                    b.keywords_raw.clone(),
                    b.classification.clone(),
                ]
            }),
        )?;
        write_csv(
            &paths.documents,
            &DOCUMENT_COLUMNS,
            self.documents.values().map(|d| {
                vec![
                    d.document_id.clone(),
                    d.title.clone(),
                    d.keywords_raw.clone(),
                    d.abstract_raw.clone(),
                    d.authors_raw.clone(),
                    d.detail_url.clone(),
                ]
            }),
        )?;
        write_csv(
            &paths.loans,
            &LOAN_COLUMNS,
            self.loans.iter().map(|l| {
                vec![
                    l.user_id.clone(),
                    l.collection_code.clone(),
                    l.loan_date.to_string(),
                    l.department_code.clone(),
                    l.course_id.clone(),
                    l.period_index.to_string(),
                ]
            }),
        )?;
        write_csv(
            &paths.enrollments,
            &ENROLLMENT_COLUMNS,
            self.enrollments.iter().map(|e| {
                vec![
                    e.user_id.clone(),
                    e.course_id.clone(),
                    e.period_index.to_string(),
                    e.as_of_date.to_string(),
                ]
            }),
        )?;
        let mut f = File::create(&paths.stopwords)?;
        for w in self.stopwords.iter() {
            writeln!(f, "{w}")?;
        }
        Ok(paths)
    }
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}
