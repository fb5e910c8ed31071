//! On-disk layout of a data directory and the append-only event journal.
//!
//! ```text
//! corpus.json     ingested corpus
//! events.jsonl    one event per line, append-only
//! snapshot.json   derived state at some sequence number, checked on replay
//! lists.json      lists of the latest cycle
//! matrix.csv      similarity matrix of the latest cycle
//! outbox.txt      one feedback link per user per cycle
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{CycleSettings, CycleSummary, EngineError, EngineState, FeedbackState};
use crate::events::{Event, LogEntry};
use crate::ingest::Corpus;
use crate::recommend::RecommendationList;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("no corpus in {0}; run ingest first")]
    MissingCorpus(PathBuf),
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("event {seq} no longer applies: {source}")]
    Replay { seq: u64, source: EngineError },
    #[error("snapshot at event {0} differs from the replayed state")]
    SnapshotMismatch(u64),
    #[error("snapshot is at event {snapshot} but the log ends at {log}")]
    SnapshotAhead { snapshot: u64, log: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    pub created_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

impl Session {
    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        now >= self.expires_at
    }
}

/// State derived from the log, written out now and then and compared against
/// a fresh replay on startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    pub settings: Option<CycleSettings>,
    pub feedback: FeedbackState,
    pub lists: BTreeMap<String, RecommendationList>,
    pub sessions: BTreeMap<String, Session>,
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.root.join("corpus.json")
    }

    pub fn events_path(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.root.join("snapshot.json")
    }

    pub fn lists_path(&self) -> PathBuf {
        self.root.join("lists.json")
    }

    pub fn matrix_path(&self) -> PathBuf {
        self.root.join("matrix.csv")
    }

    pub fn outbox_path(&self) -> PathBuf {
        self.root.join("outbox.txt")
    }

    pub fn create(&self) -> Result<(), StoreError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))
    }

    pub fn has_corpus(&self) -> bool {
        self.corpus_path().exists()
    }

    pub fn save_corpus(&self, corpus: &Corpus) -> Result<(), StoreError> {
        self.create()?;
        write_json(&self.corpus_path(), corpus)
    }

    pub fn load_corpus(&self) -> Result<Corpus, StoreError> {
        let path = self.corpus_path();
        if !path.exists() {
            return Err(StoreError::MissingCorpus(self.root.clone()));
        }
        read_json(&path)
    }

    /// Reads the log. A final line cut short by a crash mid-write is
    /// ignored; any other unreadable line is an error.
    pub fn read_log(&self) -> Result<Vec<LogEntry>, StoreError> {
        Ok(self.scan_log()?.0)
    }

    /// Entries plus the byte length of the well-formed prefix.
    fn scan_log(&self) -> Result<(Vec<LogEntry>, u64), StoreError> {
        let path = self.events_path();
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut reader = BufReader::new(file);
        let mut entries = Vec::new();
        let mut valid = 0u64;
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io_err(&path))?;
            if n == 0 {
                break;
            }
            if !line.trim().is_empty() {
                match serde_json::from_str::<LogEntry>(line.trim_end()) {
                    Ok(e) => entries.push(e),
                    Err(_) if !line.ends_with('\n') => {
                        log::warn!("ignoring truncated last line of {}", path.display());
                        break;
                    }
                    Err(source) => return Err(StoreError::Json { path, source }),
                }
            }
            valid += n as u64;
        }
        Ok((entries, valid))
    }

    /// Cuts a torn final line off the log so later appends start clean.
    fn repair_log(&self, valid: u64) -> Result<(), StoreError> {
        let path = self.events_path();
        match fs::metadata(&path) {
            Ok(m) if m.len() > valid => {
                let f = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(io_err(&path))?;
                f.set_len(valid).map_err(io_err(&path))?;
                f.sync_data().map_err(io_err(&path))
            }
            _ => Ok(()),
        }
    }

    /// Appends and syncs, so an acknowledged event survives a crash.
    pub fn append(&self, entries: &[LogEntry]) -> Result<(), StoreError> {
        let path = self.events_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&serde_json::to_string(e).expect("events serialize"));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))
    }

    pub fn read_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        let path = self.snapshot_path();
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn write_snapshot(&self, snapshot: &Snapshot) -> Result<(), StoreError> {
        write_json(&self.snapshot_path(), snapshot)
    }

    /// Drops the log and everything derived from it.
    pub fn reset_events(&self) -> Result<(), StoreError> {
        for p in [
            self.events_path(),
            self.snapshot_path(),
            self.lists_path(),
            self.matrix_path(),
        ] {
            if p.exists() {
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
        Ok(())
    }
}

/// Writes via a temporary file and a rename so readers never see half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Engine state plus sessions, kept in step with the event log.
pub struct Journal {
    pub dir: DataDir,
    pub state: EngineState,
    pub sessions: BTreeMap<String, Session>,
    settings: Option<CycleSettings>,
    last_seq: u64,
    rng: ChaCha20Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub summary: CycleSummary,
    pub sessions: Vec<Session>,
}

impl Journal {
    /// Loads the corpus and replays the whole log. When a snapshot exists the
    /// replayed state at its sequence number must equal it.
    pub fn open(dir: DataDir, seed: Option<u64>) -> Result<Journal, StoreError> {
        let corpus = dir.load_corpus()?;
        let (entries, valid) = dir.scan_log()?;
        dir.repair_log(valid)?;
        let snapshot = dir.read_snapshot()?;
        let rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        let mut journal = Journal {
            dir,
            state: EngineState::new(corpus),
            sessions: BTreeMap::new(),
            settings: None,
            last_seq: 0,
            rng,
        };
        let log_end = entries.last().map_or(0, |e| e.seq);
        if let Some(s) = &snapshot {
            if s.seq > log_end {
                return Err(StoreError::SnapshotAhead {
                    snapshot: s.seq,
                    log: log_end,
                });
            }
        }
        for entry in &entries {
            journal
                .apply(&entry.event)
                .map_err(|source| StoreError::Replay {
                    seq: entry.seq,
                    source,
                })?;
            journal.last_seq = entry.seq;
            if let Some(s) = &snapshot {
                if s.seq == entry.seq && journal.snapshot() != *s {
                    return Err(StoreError::SnapshotMismatch(s.seq));
                }
            }
        }
        Ok(journal)
    }

    fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        match event {
            Event::SessionMinted {
                token,
                user_id,
                created_at,
                expires_at,
            } => {
                self.sessions.insert(
                    token.clone(),
                    Session {
                        token: token.clone(),
                        user_id: user_id.clone(),
                        created_at: *created_at,
                        expires_at: *expires_at,
                    },
                );
                Ok(())
            }
            Event::CycleCompleted { settings, .. } => {
                self.state.apply(event)?;
                self.settings = Some(settings.clone());
                Ok(())
            }
            other => self.state.apply(other),
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn settings(&self) -> Option<&CycleSettings> {
        self.settings.as_ref()
    }

    /// Applies the events and, only if all of them apply, appends them to
    /// the log. On failure the in-memory state is rolled back.
    pub fn record(&mut self, events: Vec<Event>) -> Result<u64, StoreError> {
        let saved = (
            self.state.feedback.clone(),
            self.state.current.clone(),
            self.sessions.clone(),
            self.settings.clone(),
        );
        let mut entries = Vec::with_capacity(events.len());
        for event in events {
            if let Err(e) = self.apply(&event) {
                self.state.feedback = saved.0;
                self.state.current = saved.1;
                self.sessions = saved.2;
                self.settings = saved.3;
                return Err(e.into());
            }
            entries.push(LogEntry {
                seq: self.last_seq + entries.len() as u64 + 1,
                event,
            });
        }
        self.dir.append(&entries)?;
        self.last_seq += entries.len() as u64;
        Ok(self.last_seq)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            seq: self.last_seq,
            settings: self.settings.clone(),
            feedback: self.state.feedback.clone(),
            lists: self
                .state
                .current
                .as_ref()
                .map(|c| c.lists.clone())
                .unwrap_or_default(),
            sessions: self.sessions.clone(),
        }
    }

    pub fn checkpoint(&self) -> Result<(), StoreError> {
        self.dir.write_snapshot(&self.snapshot())
    }

    pub fn new_token(&mut self) -> String {
        let mut bytes = [0u8; 16];
        self.rng.fill_bytes(&mut bytes);
        hex::encode(bytes)
    }

    /// Runs a cycle, mints one session per user with a list, and writes the
    /// lists, the matrix and the outbox links.
    pub fn cycle(
        &mut self,
        settings: CycleSettings,
        now: DateTime<Utc>,
        ttl: Duration,
        link_base: &str,
    ) -> Result<CycleReport, StoreError> {
        settings.validate()?;
        self.record(vec![Event::CycleCompleted { settings, at: now }])?;
        let users: Vec<String> = self
            .state
            .current
            .as_ref()
            .map(|c| c.lists.keys().cloned().collect())
            .unwrap_or_default();
        let mut minted = Vec::with_capacity(users.len());
        for user in users {
            minted.push(Session {
                token: self.new_token(),
                user_id: user,
                created_at: now,
                expires_at: now + ttl,
            });
        }
        self.record(
            minted
                .iter()
                .map(|s| Event::SessionMinted {
                    token: s.token.clone(),
                    user_id: s.user_id.clone(),
                    created_at: s.created_at,
                    expires_at: s.expires_at,
                })
                .collect(),
        )?;
        let out = self.state.current.as_ref().expect("cycle just ran");
        write_atomic(&self.dir.lists_path(), out.lists_json().as_bytes())?;
        write_atomic(
            &self.dir.matrix_path(),
            out.profiles.matrix.to_csv_string().as_bytes(),
        )?;
        let outbox = self.dir.outbox_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&outbox)
            .map_err(io_err(&outbox))?;
        let base = link_base.trim_end_matches('/');
        for s in &minted {
            writeln!(
                f,
                "{}\t{base}/api/v1/recommendations/{}",
                s.user_id, s.token
            )
            .map_err(io_err(&outbox))?;
        }
        let summary = out.summary();
        self.checkpoint()?;
        Ok(CycleReport {
            summary,
            sessions: minted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn ts(secs: i64) -> DateTime<Utc> {
        DateTime::<Utc>::from_timestamp(secs, 0).unwrap()
    }

    fn fresh() -> (tempfile::TempDir, DataDir) {
        let tmp = tempfile::tempdir().unwrap();
        let dir = DataDir::new(tmp.path().join("data"));
        let planted = generate(&SynthConfig {
            users: 4,
            items: 60,
            seed: 7,
            cold_start_users: 1,
        })
        .unwrap();
        dir.save_corpus(&planted.corpus).unwrap();
        (tmp, dir)
    }

    #[test]
    fn replay_reproduces_state() {
        let (_tmp, dir) = fresh();
        let mut j = Journal::open(dir.clone(), Some(1)).unwrap();
        let report = j
            .cycle(
                CycleSettings::default(),
                ts(100),
                Duration::days(30),
                "http://h",
            )
            .unwrap();
        assert_eq!(report.sessions.len(), report.summary.lists);
        let user = report.sessions[0].user_id.clone();
        let item = j.state.list(&user).unwrap().items[0].item_ref();
        j.record(vec![Event::Rated {
            user_id: user.clone(),
            item_id: item.item_id.clone(),
            item_kind: item.item_kind,
            score: 0,
            at: ts(200),
        }])
        .unwrap();
        let before = j.snapshot();
        let profile = j.state.profile(&user).unwrap().clone();
        drop(j);

        let j = Journal::open(dir.clone(), None).unwrap();
        assert_eq!(j.snapshot(), before);
        assert_eq!(j.state.profile(&user).unwrap(), &profile);
        let outbox = fs::read_to_string(dir.outbox_path()).unwrap();
        assert_eq!(outbox.lines().count(), report.sessions.len());
        assert!(outbox.contains("http://h/api/v1/recommendations/"));
    }

    #[test]
    fn failed_events_are_not_logged() {
        let (_tmp, dir) = fresh();
        let mut j = Journal::open(dir.clone(), Some(1)).unwrap();
        let err = j.record(vec![Event::Rated {
            user_id: "nobody".into(),
            item_id: "x".into(),
            item_kind: crate::profile::ItemKind::Book,
            score: 1,
            at: ts(0),
        }]);
        assert!(matches!(err, Err(StoreError::Engine(EngineError::NoCycle))));
        assert!(dir.read_log().unwrap().is_empty());
    }

    #[test]
    fn truncated_tail_and_snapshot_checks() {
        let (_tmp, dir) = fresh();
        let mut j = Journal::open(dir.clone(), Some(1)).unwrap();
        j.cycle(
            CycleSettings::default(),
            ts(100),
            Duration::days(30),
            "http://h",
        )
        .unwrap();
        let seq = j.last_seq();
        drop(j);
        let mut f = OpenOptions::new()
            .append(true)
            .open(dir.events_path())
            .unwrap();
        f.write_all(b"{\"seq\":99,\"type\":\"rat").unwrap();
        drop(f);
        let mut j = Journal::open(dir.clone(), None).unwrap();
        assert_eq!(j.last_seq(), seq);
        j.record(vec![Event::SessionMinted {
            token: "t".into(),
            user_id: "u".into(),
            created_at: ts(0),
            expires_at: ts(1),
        }])
        .unwrap();
        assert_eq!(dir.read_log().unwrap().len() as u64, seq + 1);

        let mut bad = j.snapshot();
        bad.feedback.insert("ghost".into(), Default::default());
        dir.write_snapshot(&bad).unwrap();
        assert!(matches!(
            Journal::open(dir.clone(), None),
            Err(StoreError::SnapshotMismatch(_))
        ));
        bad.seq = seq + 10;
        dir.write_snapshot(&bad).unwrap();
        assert!(matches!(
            Journal::open(dir, None),
            Err(StoreError::SnapshotAhead { .. })
        ));
    }

    #[test]
    fn seeded_tokens_repeat() {
        let (_tmp, dir) = fresh();
        let mut a = Journal::open(dir.clone(), Some(9)).unwrap();
        let mut b = Journal::open(dir, Some(9)).unwrap();
        let ta = a.new_token();
        assert_eq!(ta, b.new_token());
        assert_eq!(ta.len(), 32);
    }
}
