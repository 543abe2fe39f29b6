use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::SessionConfig;
use crate::prob_ir::RelevanceLevel;
use crate::{Error, Result};

/// Workflow stage a judgment was made in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Enrichment,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Enrichment => "enrichment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        session_id: String,
        task_narrative: String,
        request_narrative: String,
        config: SessionConfig,
    },
    Search {
        iteration: u32,
        terms: String,
        term_count: usize,
        k: usize,
    },
    Judgment {
        sentence_id: String,
        level: RelevanceLevel,
        iteration: u32,
        stage: Stage,
        token_len: usize,
    },
    Enrichment {
        iteration: u32,
        k: usize,
    },
    Exported,
}

/// One line of a session log: `{"type", "payload", "timestamp"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub timestamp: DateTime<Utc>,
}

impl Event {
    pub fn now(kind: EventKind) -> Self {
        Event {
            kind,
            timestamp: Utc::now(),
        }
    }
}

/// Appends one event and syncs it to disk before returning.
pub fn append_event(path: &Path, event: &Event) -> Result<()> {
    let mut line = serde_json::to_string(event)?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(line.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    file.sync_data().map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::malformed(path, n + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_line_shape() {
        let e = Event::now(EventKind::Enrichment {
            iteration: 2,
            k: 10,
        });
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["type"], "enrichment");
        assert_eq!(v["payload"]["k"], 10);
        assert!(v["timestamp"].is_string());
        let back: Event = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);

        let x = Event::now(EventKind::Exported);
        let back: Event = serde_json::from_str(&serde_json::to_string(&x).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let events = [
            Event::now(EventKind::Search {
                iteration: 1,
                terms: "flint water".into(),
                term_count: 2,
                k: 10,
            }),
            Event::now(EventKind::Judgment {
                sentence_id: "d:0".into(),
                level: RelevanceLevel::RelevantToTask,
                iteration: 1,
                stage: Stage::Initial,
                token_len: 7,
            }),
        ];
        for e in &events {
            append_event(&path, e).unwrap();
        }
        assert_eq!(read_events(&path).unwrap(), events);
    }
}
