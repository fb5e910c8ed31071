//! JSON API behind the feedback page.
//!
//! Every mutation is applied to the in-memory journal and appended to the
//! event log before the response goes out. Requests are serialized through
//! one lock, which keeps the log order equal to the order state changed in,
//! so replaying the log reproduces every response.

pub mod config;

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use tagrec_core::engine::{CycleSummary, EngineError};
use tagrec_core::profile::{Direction, ItemKind, ItemRef};
use tagrec_core::recommend::Source;
use tagrec_core::store::{DataDir, Journal, Session, StoreError};
use tagrec_core::{CycleSettings, Tag};
use thiserror::Error;

pub use config::ServiceConfig;

pub const ADMIN_HEADER: &str = "x-admin-secret";

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

struct Inner {
    journal: Mutex<Journal>,
    config: ServiceConfig,
    clock: Clock,
}

#[derive(Clone)]
pub struct App(Arc<Inner>);

impl App {
    /// Replays the data directory's log into memory.
    pub fn open(config: ServiceConfig) -> Result<App, StoreError> {
        Self::open_with_clock(config, Arc::new(Utc::now))
    }

    pub fn open_with_clock(config: ServiceConfig, clock: Clock) -> Result<App, StoreError> {
        let journal = Journal::open(DataDir::new(config.data_dir.clone()), config.seed)?;
        Ok(App(Arc::new(Inner {
            journal: Mutex::new(journal),
            config,
            clock,
        })))
    }

    fn journal(&self) -> MutexGuard<'_, Journal> {
        self.0.journal.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn now(&self) -> DateTime<Utc> {
        (self.0.clock)()
    }

    /// Writes a snapshot of the current state.
    pub fn checkpoint(&self) -> Result<(), StoreError> {
        self.journal().checkpoint()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/api/v1/recommendations/{token}", get(get_list))
            .route("/api/v1/recommendations/{token}/ratings", post(post_rating))
            .route(
                "/api/v1/recommendations/{token}/tags/reallocate",
                post(post_reallocate),
            )
            .route("/api/v1/admin/cycle", post(post_cycle))
            .with_state(self.clone())
    }
}

/// Serves until ctrl-c, then writes a final snapshot.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let app = App::open(config.clone())?;
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    app.checkpoint()?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Engine(e) => e.into(),
            other => {
                log::error!("{other}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string())
            }
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::NotInList { .. }
            | EngineError::TagNotFound(_)
            | EngineError::UnknownUser(_) => StatusCode::NOT_FOUND,
            EngineError::NoCycle => StatusCode::CONFLICT,
            EngineError::Score(_) | EngineError::Config(_) | EngineError::NoLoans => {
                StatusCode::BAD_REQUEST
            }
        };
        ApiError::new(status, e.to_string())
    }
}

/// Resolves a token. `expired` is the status for a token past its expiry:
/// 410 on reads, 409 on writes.
fn session(
    journal: &Journal,
    token: &str,
    now: DateTime<Utc>,
    expired: StatusCode,
) -> Result<Session, ApiError> {
    let s = journal
        .sessions
        .get(token)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown token"))?;
    if s.is_expired(now) {
        return Err(ApiError::new(expired, "session expired"));
    }
    Ok(s.clone())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad request body: {e}")))
}

#[derive(Debug, Serialize)]
struct TagWeight {
    tag: Tag,
    weight: f64,
}

/// Both chip rows: relevant heaviest first, irrelevant alphabetical.
#[derive(Debug, Serialize)]
struct TagLists {
    relevant: Vec<TagWeight>,
    irrelevant: Vec<Tag>,
}

fn tag_lists(journal: &Journal, user: &str) -> TagLists {
    let Some(p) = journal.state.profile(user) else {
        return TagLists {
            relevant: Vec::new(),
            irrelevant: Vec::new(),
        };
    };
    let mut relevant: Vec<TagWeight> = p
        .relevant
        .entries
        .iter()
        .map(|(t, w)| TagWeight {
            tag: t.clone(),
            weight: *w,
        })
        .collect();
    relevant.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| a.tag.cmp(&b.tag))
    });
    TagLists {
        relevant,
        irrelevant: p.irrelevant.tags.iter().cloned().collect(),
    }
}

#[derive(Debug, Serialize)]
struct ItemView {
    item_id: String,
    item_kind: ItemKind,
    title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail_url: Option<String>,
    source: Source,
    matched_group: Option<u8>,
    matched_tags: Vec<Tag>,
    score: f64,
    rating: Option<u8>,
}

#[derive(Debug, Serialize)]
struct ListView {
    user_id: String,
    generated_at: Option<DateTime<Utc>>,
    expires_at: DateTime<Utc>,
    items: Vec<ItemView>,
    tags: TagLists,
}

async fn get_list(
    State(app): State<App>,
    Path(token): Path<String>,
) -> Result<Json<ListView>, ApiError> {
    let now = app.now();
    let journal = app.journal();
    let s = session(&journal, &token, now, StatusCode::GONE)?;
    let corpus = &journal.state.corpus;
    let ratings = journal.state.feedback.get(&s.user_id);
    let list = journal.state.list(&s.user_id);
    let items = list
        .map(|l| l.items.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|i| {
            let (title, detail_url) = match i.item_kind {
                ItemKind::Book => (corpus.books.get(&i.item_id).map(|b| b.title.clone()), None),
                ItemKind::Document => match corpus.documents.get(&i.item_id) {
                    Some(d) => (
                        Some(d.title.clone()),
                        Some(d.detail_url.clone()).filter(|u| !u.is_empty()),
                    ),
                    None => (None, None),
                },
            };
            ItemView {
                item_id: i.item_id.clone(),
                item_kind: i.item_kind,
                title: title.unwrap_or_default(),
                detail_url,
                source: i.source,
                matched_group: i.matched_group,
                matched_tags: i.matched_tags.iter().cloned().collect(),
                score: i.score,
                rating: ratings.and_then(|f| {
                    f.ratings
                        .iter()
                        .find(|r| r.item_id == i.item_id && r.item_kind == i.item_kind)
                        .map(|r| r.score)
                }),
            }
        })
        .collect();
    Ok(Json(ListView {
        user_id: s.user_id.clone(),
        generated_at: list.map(|l| l.generated_at),
        expires_at: s.expires_at,
        items,
        tags: tag_lists(&journal, &s.user_id),
    }))
}

#[derive(Debug, Deserialize)]
struct RatingBody {
    item_id: String,
    item_kind: ItemKind,
    score: i64,
}

#[derive(Debug, Serialize)]
struct RatingView {
    item_id: String,
    item_kind: ItemKind,
    score: u8,
    tags: TagLists,
}

async fn post_rating(
    State(app): State<App>,
    Path(token): Path<String>,
    body: Bytes,
) -> Result<Json<RatingView>, ApiError> {
    let now = app.now();
    let mut journal = app.journal();
    let s = session(&journal, &token, now, StatusCode::CONFLICT)?;
    let body: RatingBody = parse_body(&body)?;
    let score = u8::try_from(body.score)
        .ok()
        .filter(|s| *s <= 3)
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("score {} is outside 0..=3", body.score),
            )
        })?;
    let item = ItemRef {
        item_id: body.item_id,
        item_kind: body.item_kind,
    };
    journal.record(vec![tagrec_core::events::Event::Rated {
        user_id: s.user_id.clone(),
        item_id: item.item_id.clone(),
        item_kind: item.item_kind,
        score,
        at: now,
    }])?;
    Ok(Json(RatingView {
        item_id: item.item_id,
        item_kind: item.item_kind,
        score,
        tags: tag_lists(&journal, &s.user_id),
    }))
}

#[derive(Debug, Deserialize)]
struct ReallocateBody {
    tag: String,
    direction: String,
}

async fn post_reallocate(
    State(app): State<App>,
    Path(token): Path<String>,
    body: Bytes,
) -> Result<Json<TagLists>, ApiError> {
    let now = app.now();
    let mut journal = app.journal();
    let s = session(&journal, &token, now, StatusCode::CONFLICT)?;
    let body: ReallocateBody = parse_body(&body)?;
    let direction: Direction = body
        .direction
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let tag = Tag::from_normalized(&body.tag).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("tag `{}` is in neither tag list", body.tag),
        )
    })?;
    journal.record(vec![tagrec_core::events::Event::Reallocated {
        user_id: s.user_id.clone(),
        tag,
        direction,
        at: now,
    }])?;
    Ok(Json(tag_lists(&journal, &s.user_id)))
}

#[derive(Debug, Serialize)]
struct MintedLink {
    user_id: String,
    token: String,
    expires_at: DateTime<Utc>,
}

#[derive(Debug, Serialize)]
struct CycleView {
    summary: CycleSummary,
    outbox: PathBuf,
    sessions: Vec<MintedLink>,
}

/// Runs a cycle. The body, if any, is a settings object; otherwise the
/// previous cycle's settings (or the defaults) are reused.
async fn post_cycle(
    State(app): State<App>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<CycleView>, ApiError> {
    let expected = app.0.config.admin_secret.as_deref();
    let given = headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok());
    if expected.is_none() || given != expected {
        return Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "admin secret required",
        ));
    }
    let now = app.now();
    let mut journal = app.journal();
    let settings: CycleSettings = if body.iter().all(u8::is_ascii_whitespace) {
        journal.settings().cloned().unwrap_or_default()
    } else {
        parse_body(&body)?
    };
    let ttl = Duration::days(app.0.config.session_ttl_days);
    let report = journal.cycle(settings, now, ttl, &app.0.config.link_base)?;
    Ok(Json(CycleView {
        summary: report.summary,
        outbox: journal.dir.outbox_path(),
        sessions: report
            .sessions
            .into_iter()
            .map(|s| MintedLink {
                user_id: s.user_id,
                token: s.token,
                expires_at: s.expires_at,
            })
            .collect(),
    }))
}
