//! Seeded generator of session logs with a known latent intent per session.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::event::{Event, EventKind, ItemId, QueryId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub sessions_per_user: usize,
    pub queries_per_session: usize,
    pub list_length: usize,
    /// Share of each shown list drawn from the session's intent category.
    pub intent_share: f64,
    pub intent_click_prob: f64,
    pub noise_click_prob: f64,
    pub purchase_prob: f64,
    /// Per click, probability of each of `views_per_click` neighbor views.
    pub view_prob: f64,
    pub views_per_click: usize,
    /// Probability that a view lands on a shown item of the clicked item's category.
    pub view_affinity: f64,
    /// Probability that a visitor carries no user hash.
    pub anonymous_prob: f64,
    /// Probability that a later query in a session moves to a new intent
    /// category; the shown list follows the current intent.
    pub intent_switch_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 250,
            n_items: 200,
            n_categories: 10,
            sessions_per_user: 4,
            queries_per_session: 3,
            list_length: 12,
            intent_share: 0.4,
            intent_click_prob: 0.9,
            noise_click_prob: 0.05,
            purchase_prob: 0.2,
            view_prob: 0.5,
            views_per_click: 2,
            view_affinity: 0.5,
            anonymous_prob: 0.0,
            intent_switch_prob: 0.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("intent_share", self.intent_share),
            ("intent_click_prob", self.intent_click_prob),
            ("noise_click_prob", self.noise_click_prob),
            ("purchase_prob", self.purchase_prob),
            ("view_prob", self.view_prob),
            ("view_affinity", self.view_affinity),
            ("anonymous_prob", self.anonymous_prob),
            ("intent_switch_prob", self.intent_switch_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        if self.queries_per_session < 2 {
            return Err(Error::InvalidArgument("queries_per_session must be at least 2".into()));
        }
        if self.n_categories < 2 || self.n_items < self.n_categories {
            return Err(Error::InvalidArgument(
                "need at least 2 categories and one item per category".into(),
            ));
        }
        if self.list_length == 0 || self.list_length > self.n_items {
            return Err(Error::InvalidArgument(format!(
                "list_length must be in 1..={}",
                self.n_items
            )));
        }
        Ok(())
    }
}

/// What the generator emitted, tallied while emitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCounts {
    pub users: usize,
    pub sessions: usize,
    pub queries: usize,
    pub impressions: usize,
    pub clicks: usize,
    pub views: usize,
    pub purchases: usize,
    /// (query, shown item) pairs per grade.
    pub label_counts: [usize; 3],
    pub intent_impressions: usize,
    pub intent_clicks: usize,
    pub noise_impressions: usize,
    pub noise_clicks: usize,
    pub intent_switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Category of item `i` at index `i`.
    pub item_category: Vec<usize>,
    pub query_intent: BTreeMap<QueryId, usize>,
    pub counts: GeneratorCounts,
}

impl GroundTruth {
    pub fn category(&self, item: ItemId) -> usize {
        self.item_category[item.0 as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub events: Vec<Event>,
    pub truth: GroundTruth,
}

const HOUR_MS: i64 = 3_600_000;
const T0: i64 = 1_460_000_000_000;

/// Generates a reproducible event stream.
///
/// Each session draws an intent category. Shown lists mix intent items with
/// items from other categories; intent items are clicked with
/// `intent_click_prob`, the rest with `noise_click_prob`. Purchases follow
/// clicks, and views land on shown neighbors of clicked items.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item_category: Vec<usize> = (0..config.n_items).map(|i| i % config.n_categories).collect();
    let mut by_category: Vec<Vec<ItemId>> = vec![Vec::new(); config.n_categories];
    for (i, &c) in item_category.iter().enumerate() {
        by_category[c].push(ItemId(i as u64));
    }

    let mut events = Vec::new();
    let mut counts = GeneratorCounts {
        users: config.n_users,
        ..Default::default()
    };
    let mut query_intent = BTreeMap::new();
    let mut next_query = 1u64;

    for user in 0..config.n_users {
        let anonymous = rng.gen_bool(config.anonymous_prob);
        let user_hash = format!("user{user:05}");
        let mut t = T0 + rng.gen_range(0..24 * HOUR_MS);
        for session in 0..config.sessions_per_user {
            counts.sessions += 1;
            let session_key = format!("{user_hash}-s{session}");
            let stamp = |mut e: Event| {
                if anonymous {
                    e.user_hash = None;
                    e.session_key = Some(session_key.clone());
                }
                e
            };
            let uh = Some(user_hash.as_str());
            let mut intent = rng.gen_range(0..config.n_categories);
            for qi in 0..config.queries_per_session {
                if qi > 0 && rng.gen_bool(config.intent_switch_prob) {
                    intent = (intent + rng.gen_range(1..config.n_categories)) % config.n_categories;
                    counts.intent_switches += 1;
                }
                let q = QueryId(next_query);
                next_query += 1;
                counts.queries += 1;
                query_intent.insert(q, intent);

                let shown = draw_list(config, &by_category, intent, &mut rng);
                events.push(stamp(Event::query(uh, t, q, true)));
                t += 1_000;
                events.push(stamp(Event::presentation(uh, t, q, shown.clone())));

                for &item in &shown {
                    counts.impressions += 1;
                    let is_intent = item_category[item.0 as usize] == intent;
                    let p = if is_intent {
                        counts.intent_impressions += 1;
                        config.intent_click_prob
                    } else {
                        counts.noise_impressions += 1;
                        config.noise_click_prob
                    };
                    if !rng.gen_bool(p) {
                        counts.label_counts[0] += 1;
                        continue;
                    }
                    if is_intent {
                        counts.intent_clicks += 1;
                    } else {
                        counts.noise_clicks += 1;
                    }
                    counts.clicks += 1;
                    t += rng.gen_range(2_000..60_000);
                    events.push(stamp(Event::action(uh, EventKind::Click, t, item, Some(q))));

                    for _ in 0..config.views_per_click {
                        if !rng.gen_bool(config.view_prob) {
                            continue;
                        }
                        if let Some(n) = neighbor(config, &shown, item, &item_category, &mut rng) {
                            counts.views += 1;
                            t += rng.gen_range(1_000..30_000);
                            events.push(stamp(Event::action(uh, EventKind::View, t, n, None)));
                        }
                    }
                    if rng.gen_bool(config.purchase_prob) {
                        counts.purchases += 1;
                        counts.label_counts[2] += 1;
                        t += rng.gen_range(5_000..120_000);
                        events.push(stamp(Event::action(uh, EventKind::Purchase, t, item, None)));
                    } else {
                        counts.label_counts[1] += 1;
                    }
                }
                t += rng.gen_range(30_000..600_000);
            }
            t += 2 * HOUR_MS + rng.gen_range(0..48 * HOUR_MS);
        }
    }

    Ok(SyntheticCorpus {
        events,
        truth: GroundTruth {
            item_category,
            query_intent,
            counts,
        },
    })
}

fn draw_list(
    config: &SyntheticConfig,
    by_category: &[Vec<ItemId>],
    intent: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<ItemId> {
    let n_intent = ((config.list_length as f64 * config.intent_share).round() as usize)
        .min(by_category[intent].len());
    let mut shown: Vec<ItemId> = by_category[intent]
        .choose_multiple(rng, n_intent)
        .copied()
        .collect();
    let others: Vec<ItemId> = by_category
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != intent)
        .flat_map(|(_, items)| items.iter().copied())
        .collect();
    let n_noise = (config.list_length - n_intent).min(others.len());
    shown.extend(others.choose_multiple(rng, n_noise).copied());
    shown.shuffle(rng);
    shown
}

fn neighbor(
    config: &SyntheticConfig,
    shown: &[ItemId],
    clicked: ItemId,
    item_category: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<ItemId> {
    let cat = item_category[clicked.0 as usize];
    let same: Vec<ItemId> = shown
        .iter()
        .copied()
        .filter(|&i| i != clicked && item_category[i.0 as usize] == cat)
        .collect();
    if !same.is_empty() && rng.gen_bool(config.view_affinity) {
        return same.choose(rng).copied();
    }
    let any: Vec<ItemId> = shown.iter().copied().filter(|&i| i != clicked).collect();
    any.choose(rng).copied()
}
