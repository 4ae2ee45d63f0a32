use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_newtype!(ItemId);
id_newtype!(QueryId);
id_newtype!(SessionId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Query,
    Presentation,
    Click,
    View,
    Purchase,
}

/// One line of the canonical JSONL event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_hash: Option<String>,
    /// Grouping key for events without a `user_hash`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_key: Option<String>,
    pub timestamp: i64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<QueryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<ItemId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shown_items: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_queryless: bool,
}

impl Event {
    pub fn new(kind: EventKind, timestamp: i64) -> Self {
        Self {
            user_hash: None,
            session_key: None,
            timestamp,
            kind,
            query_id: None,
            item_id: None,
            shown_items: Vec::new(),
            is_queryless: false,
        }
    }

    pub fn query(user: Option<&str>, timestamp: i64, query: QueryId, queryless: bool) -> Self {
        Self {
            user_hash: user.map(str::to_owned),
            query_id: Some(query),
            is_queryless: queryless,
            ..Self::new(EventKind::Query, timestamp)
        }
    }

    pub fn presentation(user: Option<&str>, timestamp: i64, query: QueryId, shown: Vec<ItemId>) -> Self {
        Self {
            user_hash: user.map(str::to_owned),
            query_id: Some(query),
            shown_items: shown,
            ..Self::new(EventKind::Presentation, timestamp)
        }
    }

    pub fn action(user: Option<&str>, kind: EventKind, timestamp: i64, item: ItemId, query: Option<QueryId>) -> Self {
        Self {
            user_hash: user.map(str::to_owned),
            item_id: Some(item),
            query_id: query,
            ..Self::new(kind, timestamp)
        }
    }

    /// Key that groups events of one visitor for sessionization.
    pub fn group_key(&self) -> String {
        match (&self.user_hash, &self.session_key) {
            (Some(u), _) => format!("u:{u}"),
            (None, Some(k)) => format!("k:{k}"),
            (None, None) => "anonymous".to_owned(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self.kind {
            EventKind::Query if self.query_id.is_none() => Err("query event without query_id".into()),
            EventKind::Presentation if self.query_id.is_none() => Err("presentation without query_id".into()),
            EventKind::Presentation if self.shown_items.is_empty() => Err("presentation with no shown_items".into()),
            EventKind::Click | EventKind::View | EventKind::Purchase if self.item_id.is_none() => {
                Err(format!("{:?} event without item_id", self.kind))
            }
            _ => Ok(()),
        }
    }

    /// Total order used before sessionization so results do not depend on input order.
    pub(crate) fn sort_key(&self) -> (String, i64, EventKind, Option<QueryId>, Option<ItemId>, &[ItemId]) {
        (
            self.group_key(),
            self.timestamp,
            self.kind,
            self.query_id,
            self.item_id,
            &self.shown_items,
        )
    }
}

/// Parsed event log plus the number of skipped lines.
#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<Event>,
    pub lines: usize,
    pub malformed: usize,
}

/// Largest tolerated share of malformed lines.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// Reads JSONL events, skipping (and counting) malformed lines.
///
/// Output is sorted by visitor key then timestamp.
pub fn parse_events<R: BufRead>(reader: R) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let parsed = serde_json::from_str::<Event>(&line)
            .map_err(|e| e.to_string())
            .and_then(|ev| ev.validate().map(|_| ev));
        match parsed {
            Ok(ev) => out.events.push(ev),
            Err(e) => {
                out.malformed += 1;
                log::warn!("skipping malformed event on line {}: {e}", lineno + 1);
            }
        }
    }
    if out.lines > 0 && out.malformed as f64 > MAX_MALFORMED_FRACTION * out.lines as f64 {
        return Err(Error::Data(format!(
            "{} of {} event lines are malformed (limit {:.0}%)",
            out.malformed,
            out.lines,
            MAX_MALFORMED_FRACTION * 100.0
        )));
    }
    out.events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(out)
}

/// Encodes events as JSONL, one per line.
pub fn write_events<W: std::io::Write>(events: &[Event], mut w: W) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
