//! The persisted event log. Server state is a fold over these entries on top
//! of the ingested corpus.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::CycleSettings;
use crate::preprocess::Tag;
use crate::profile::{Direction, ItemKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Rated {
        user_id: String,
        item_id: String,
        item_kind: ItemKind,
        score: u8,
        at: DateTime<Utc>,
    },
    Reallocated {
        user_id: String,
        tag: Tag,
        direction: Direction,
        at: DateTime<Utc>,
    },
    SessionMinted {
        token: String,
        user_id: String,
        created_at: DateTime<Utc>,
        expires_at: DateTime<Utc>,
    },
    CycleCompleted {
        settings: CycleSettings,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}
