//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sessionrank::datamodel::{Event, EventKind, Grade, ItemId, QueryId, Session};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Visitor identity as the oracle sees it: user hash first, then the client key.
pub fn visitor(e: &Event) -> (Option<String>, Option<String>) {
    match &e.user_hash {
        Some(u) => (Some(u.clone()), None),
        None => (None, e.session_key.clone()),
    }
}

/// Shuffled stream of `n` events over a few dozen visitors. Gaps are drawn to
/// hit the boundary often: exactly `gap_ms`, one below, one above, zero, or random.
pub fn random_stream(seed: u64, n: usize, gap_ms: i64) -> Vec<Event> {
    let mut r = rng(seed);
    let visitors = 40;
    let mut clock: Vec<i64> = (0..visitors).map(|_| r.gen_range(0..10 * gap_ms)).collect();
    let mut next_query = 0u64;
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let v = r.gen_range(0..visitors);
        let gap = match r.gen_range(0..6) {
            0 => gap_ms,
            1 => gap_ms - 1,
            2 => gap_ms + 1,
            3 => 0,
            _ => r.gen_range(0..2 * gap_ms),
        };
        clock[v] += gap;
        let ts = clock[v];
        let user = (v % 3 != 0).then(|| format!("user{v}"));
        let mut e = match r.gen_range(0..5) {
            0 => {
                next_query += 1;
                Event::query(None, ts, QueryId(next_query), r.gen_bool(0.8))
            }
            1 => {
                next_query += 1;
                let shown = (0..r.gen_range(1..6)).map(|_| ItemId(r.gen_range(0..50))).collect();
                Event::presentation(None, ts, QueryId(next_query), shown)
            }
            k => {
                let kind = [EventKind::Click, EventKind::View, EventKind::Purchase][k - 2];
                Event::action(None, kind, ts, ItemId(r.gen_range(0..50)), None)
            }
        };
        e.user_hash = user;
        // Multiples of 12 have neither a user hash nor a client key and share one group.
        if e.user_hash.is_none() && v % 4 != 0 {
            e.session_key = Some(format!("client{v}"));
        }
        events.push(e);
    }
    events.shuffle(&mut r);
    events
}

/// Independent linear re-scan: bucket by visitor, sort timestamps, cut where
/// consecutive timestamps differ by at least `gap_ms`. Output is sorted.
pub fn rescan(events: &[Event], gap_ms: i64) -> Vec<((Option<String>, Option<String>), Vec<i64>)> {
    let mut by_visitor: BTreeMap<(Option<String>, Option<String>), Vec<i64>> = BTreeMap::new();
    for e in events {
        by_visitor.entry(visitor(e)).or_default().push(e.timestamp);
    }
    let mut out = Vec::new();
    for (key, mut ts) in by_visitor {
        ts.sort_unstable();
        let mut run = vec![ts[0]];
        for w in ts.windows(2) {
            if w[1] - w[0] >= gap_ms {
                out.push((key.clone(), std::mem::take(&mut run)));
            }
            run.push(w[1]);
        }
        out.push((key, run));
    }
    out.sort();
    out
}

/// The same shape as [`rescan`], read off the library's sessions.
pub fn session_shape(sessions: &[Session]) -> Vec<((Option<String>, Option<String>), Vec<i64>)> {
    let mut out: Vec<_> = sessions
        .iter()
        .map(|s| (visitor(&s.events[0]), s.events.iter().map(|e| e.timestamp).collect::<Vec<_>>()))
        .collect();
    out.sort();
    out
}

/// All permutations of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Plackett-Luce probability of a full permutation, with plain exponentials.
pub fn permutation_probability(scores: &[f64], perm: &[usize]) -> f64 {
    let w: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let mut rest: f64 = w.iter().sum();
    let mut p = 1.0;
    for &j in perm {
        p *= w[j] / rest;
        rest -= w[j];
    }
    p
}

/// Top-k group probabilities obtained by summing full-permutation
/// probabilities over every permutation sharing the prefix.
pub fn marginal_topk(scores: &[f64], k: usize) -> HashMap<Vec<usize>, f64> {
    let mut out = HashMap::new();
    for perm in permutations(scores.len()) {
        *out.entry(perm[..k].to_vec()).or_insert(0.0) += permutation_probability(scores, &perm);
    }
    out
}

/// `-sum_g P_y(g) ln P_z(g)` over marginalized top-k distributions.
pub fn brute_listnet_loss(z: &[f64], y: &[f64], k: usize) -> f64 {
    let pz = marginal_topk(z, k);
    let py = marginal_topk(y, k);
    -py.iter().map(|(g, &p)| p * pz[g].ln()).sum::<f64>()
}

/// NDCG with linear gain written out directly.
pub fn hand_ndcg(ranked: &[Grade]) -> f64 {
    let dcg = |l: &[Grade]| -> f64 { l.iter().enumerate().map(|(i, &y)| y as f64 / (i as f64 + 2.0).log2()).sum() };
    let mut ideal = ranked.to_vec();
    ideal.sort_by(|a, b| b.cmp(a));
    dcg(ranked) / dcg(&ideal)
}
