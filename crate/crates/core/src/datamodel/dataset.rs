use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::event::{EventKind, ItemId};
use super::session::{QueryBlock, Session};
use crate::error::{Error, Result};

/// Dense row assignment for ids; ids are kept sorted so rows are deterministic.
/// Unknown ids resolve to row `len()`, the OOV row of an embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<K>", into = "Vec<K>")]
pub struct Vocab<K: Eq + Hash + Clone> {
    ids: Vec<K>,
    index: HashMap<K, usize>,
}

impl<K: Ord + Eq + Hash + Clone> Vocab<K> {
    pub fn new(ids: impl IntoIterator<Item = K>) -> Self {
        let set: BTreeSet<K> = ids.into_iter().collect();
        Vec::from_iter(set).into()
    }
}

impl<K: Eq + Hash + Clone> Vocab<K> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn oov_row(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, id: &K) -> usize {
        self.index.get(id).copied().unwrap_or(self.ids.len())
    }

    pub fn contains(&self, id: &K) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> &[K] {
        &self.ids
    }
}

impl<K: Eq + Hash + Clone> From<Vec<K>> for Vocab<K> {
    fn from(ids: Vec<K>) -> Self {
        let index = ids.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Self { ids, index }
    }
}

impl<K: Eq + Hash + Clone> From<Vocab<K>> for Vec<K> {
    fn from(v: Vocab<K>) -> Self {
        v.ids
    }
}

pub type ItemVocab = Vocab<ItemId>;
pub type UserVocab = Vocab<String>;

/// Corpus summary with one row per line of the dataset statistics table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub sessions: usize,
    pub queryless_queries: usize,
    pub presented_products: usize,
    pub click_logs: usize,
    pub view_logs: usize,
    pub purchase_records: usize,
    pub avg_shown_items_per_query: f64,
}

impl DatasetStats {
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("#users", self.users.to_string()),
            ("#sessions", self.sessions.to_string()),
            ("#query-less queries", self.queryless_queries.to_string()),
            ("#presented products", self.presented_products.to_string()),
            ("#click logs", self.click_logs.to_string()),
            ("#view logs", self.view_logs.to_string()),
            ("#purchase records", self.purchase_records.to_string()),
            ("#avg.(show items) per query", format!("{:.1}", self.avg_shown_items_per_query)),
        ]
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max("Statistics".len());
        let vw = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max("Value".len());
        writeln!(f, "{:<w$} | {:>vw$}", "Statistics", "Value")?;
        writeln!(f, "{}-+-{}", "-".repeat(w), "-".repeat(vw))?;
        for (k, v) in rows {
            writeln!(f, "{k:<w$} | {v:>vw$}")?;
        }
        Ok(())
    }
}

/// Counts explaining which sessions `prepare_dataset` kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub sessions_in: usize,
    pub dropped_not_queryless: usize,
    pub dropped_too_few_queries: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<QueryBlock>,
    pub test: Vec<QueryBlock>,
    pub item_vocab: ItemVocab,
    pub user_vocab: UserVocab,
    pub stats: DatasetStats,
    pub report: PrepareReport,
}

/// Minimum number of query-less queries for a session to be retained.
pub const MIN_QUERIES: usize = 2;

/// Keeps sessions made only of query-less queries with at least two of them;
/// the last query of each retained session becomes a test block.
pub fn prepare_dataset(sessions: &[Session]) -> Result<Dataset> {
    let mut report = PrepareReport {
        sessions_in: sessions.len(),
        ..Default::default()
    };
    let mut retained: Vec<&Session> = Vec::new();
    for s in sessions {
        if s.queries.iter().any(|q| !q.is_queryless) {
            report.dropped_not_queryless += 1;
        } else if s.queries.len() < MIN_QUERIES {
            report.dropped_too_few_queries += 1;
        } else {
            retained.push(s);
        }
    }
    report.retained = retained.len();
    if retained.is_empty() {
        return Err(Error::Data(format!(
            "no session survived preparation: {} in, {} with non-query-less queries, {} with fewer than {MIN_QUERIES} queries",
            report.sessions_in, report.dropped_not_queryless, report.dropped_too_few_queries
        )));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in &retained {
        let mut blocks = s.queries.clone();
        blocks.sort_by_key(|b| b.timestamp);
        test.push(blocks.pop().expect("at least two queries"));
        train.extend(blocks);
    }

    let all = || train.iter().chain(test.iter());
    let item_vocab = Vocab::new(all().flat_map(|b| {
        b.shown_items
            .iter()
            .chain(&b.preceding_clicks)
            .chain(&b.preceding_views)
            .chain(&b.preceding_purchases)
            .copied()
    }));
    let user_vocab = Vocab::new(all().filter_map(|b| b.user_hash.clone()));

    let n_blocks = train.len() + test.len();
    let shown_total: usize = all().map(|b| b.shown_items.len()).sum();
    let stats = DatasetStats {
        users: retained.iter().map(|s| s.group_key.as_str()).collect::<BTreeSet<_>>().len(),
        sessions: retained.len(),
        queryless_queries: n_blocks,
        presented_products: all().flat_map(|b| b.shown_items.iter()).collect::<BTreeSet<_>>().len(),
        click_logs: retained.iter().map(|s| s.count(EventKind::Click)).sum(),
        view_logs: retained.iter().map(|s| s.count(EventKind::View)).sum(),
        purchase_records: retained.iter().map(|s| s.count(EventKind::Purchase)).sum(),
        avg_shown_items_per_query: shown_total as f64 / n_blocks as f64,
    };

    Ok(Dataset {
        train,
        test,
        item_vocab,
        user_vocab,
        stats,
        report,
    })
}

impl Dataset {
    /// Number of (block, item) pairs per grade over both splits.
    pub fn label_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for b in self.train.iter().chain(&self.test) {
            for &l in &b.labels {
                c[l as usize] += 1;
            }
        }
        c
    }
}
