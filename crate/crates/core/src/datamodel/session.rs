use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::event::{Event, EventKind, ItemId, QueryId, SessionId};

/// One hour of inactivity, in milliseconds.
pub const DEFAULT_GAP_MS: i64 = 3_600_000;

/// Graded relevance: 0 presented, 1 clicked, 2 purchased.
pub type Grade = u8;

/// A presentation of shown items, its labels, and the session history before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBlock {
    pub session_id: SessionId,
    pub query_id: QueryId,
    pub user_hash: Option<String>,
    pub timestamp: i64,
    pub is_queryless: bool,
    pub shown_items: Vec<ItemId>,
    pub labels: Vec<Grade>,
    pub preceding_clicks: Vec<ItemId>,
    pub preceding_views: Vec<ItemId>,
    pub preceding_purchases: Vec<ItemId>,
}

impl QueryBlock {
    pub fn has_positive(&self) -> bool {
        self.labels.iter().any(|&l| l > 0)
    }
}

/// A click, view or purchase attributed to the presentation that showed the item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub timestamp: i64,
    pub kind: EventKind,
    pub item: ItemId,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub group_key: String,
    pub events: Vec<Event>,
    pub queries: Vec<QueryBlock>,
    pub actions: Vec<Action>,
    /// Actions whose item was never presented earlier in the session.
    pub dropped_actions: usize,
}

impl Session {
    pub fn count(&self, kind: EventKind) -> usize {
        self.actions.iter().filter(|a| a.kind == kind).count()
    }
}

/// 64-bit FNV-1a, stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn session_id_for(first: &Event) -> SessionId {
    let key = format!("{}|{}|{:?}", first.group_key(), first.timestamp, first.kind);
    SessionId(fnv1a(key.as_bytes()))
}

/// Splits events into sessions: a new session begins whenever the gap to the
/// previous event of the same visitor is at least `gap_ms`.
pub fn sessionize(events: &[Event], gap_ms: i64) -> Vec<Session> {
    let mut sorted: Vec<&Event> = events.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut sessions = Vec::new();
    let mut current: Vec<Event> = Vec::new();
    for ev in sorted {
        if let Some(prev) = current.last() {
            let same_visitor = prev.group_key() == ev.group_key();
            if !same_visitor || ev.timestamp - prev.timestamp >= gap_ms {
                sessions.push(build_session(std::mem::take(&mut current)));
            }
        }
        current.push(ev.clone());
    }
    if !current.is_empty() {
        sessions.push(build_session(current));
    }
    let dropped: usize = sessions.iter().map(|s| s.dropped_actions).sum();
    if dropped > 0 {
        log::warn!("dropped {dropped} click/view/purchase events on items never presented in their session");
    }
    sessions
}

fn build_session(events: Vec<Event>) -> Session {
    let session_id = session_id_for(&events[0]);
    let group_key = events[0].group_key();

    let mut queryless: HashMap<QueryId, bool> = HashMap::new();
    for ev in events.iter().filter(|e| e.kind == EventKind::Query) {
        if let Some(q) = ev.query_id {
            *queryless.entry(q).or_insert(false) |= ev.is_queryless;
        }
    }

    let mut blocks: Vec<QueryBlock> = Vec::new();
    let mut by_query: HashMap<QueryId, usize> = HashMap::new();
    let mut actions = Vec::new();
    let mut dropped = 0;
    for ev in &events {
        match ev.kind {
            EventKind::Query => {}
            EventKind::Presentation => {
                let q = ev.query_id.expect("validated presentation");
                if by_query.contains_key(&q) {
                    log::warn!("ignoring repeated presentation of query {q}");
                    continue;
                }
                by_query.insert(q, blocks.len());
                blocks.push(QueryBlock {
                    session_id,
                    query_id: q,
                    user_hash: ev.user_hash.clone(),
                    timestamp: ev.timestamp,
                    is_queryless: queryless.get(&q).copied().unwrap_or(false),
                    shown_items: ev.shown_items.clone(),
                    labels: vec![0; ev.shown_items.len()],
                    preceding_clicks: Vec::new(),
                    preceding_views: Vec::new(),
                    preceding_purchases: Vec::new(),
                });
            }
            EventKind::Click | EventKind::View | EventKind::Purchase => {
                let item = ev.item_id.expect("validated action");
                let shows = |b: &QueryBlock| b.shown_items.contains(&item);
                let target = ev
                    .query_id
                    .and_then(|q| by_query.get(&q).copied())
                    .filter(|&b| shows(&blocks[b]))
                    .or_else(|| blocks.iter().rposition(shows));
                match target {
                    Some(block) => actions.push(Action {
                        timestamp: ev.timestamp,
                        kind: ev.kind,
                        item,
                        block,
                    }),
                    None => dropped += 1,
                }
            }
        }
    }

    for a in &actions {
        let b = &mut blocks[a.block];
        let pos = b.shown_items.iter().position(|&i| i == a.item).expect("attributed item is shown");
        let grade = match a.kind {
            EventKind::Purchase => 2,
            EventKind::Click => 1,
            _ => 0,
        };
        b.labels[pos] = b.labels[pos].max(grade);
    }
    for b in blocks.iter_mut() {
        for a in actions.iter().filter(|a| a.timestamp < b.timestamp) {
            match a.kind {
                EventKind::Click => b.preceding_clicks.push(a.item),
                EventKind::View => b.preceding_views.push(a.item),
                EventKind::Purchase => b.preceding_purchases.push(a.item),
                _ => {}
            }
        }
    }

    Session {
        session_id,
        group_key,
        events,
        queries: blocks,
        actions,
        dropped_actions: dropped,
    }
}
