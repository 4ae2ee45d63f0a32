//! Ranking evaluation: NDCG, the popularity baseline, per-method reports and
//! the behavior ablation grid.

mod ablation;
mod ndcg;

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablation::{ablation, AblationCell, AblationTable};
pub use ndcg::{dcg, ndcg, Gain};

use crate::datamodel::{Dataset, ItemId, QueryBlock, QueryId};
use crate::error::{Error, Result};
use crate::listnet::{rank_items, RankModel};
use crate::nn::Scalar;
use crate::sie::{sie_rank, SieModel};

pub const NDCG_CUTOFF: usize = 10;

/// Indices sorted by descending score; equal scores keep their original order.
pub fn order_by_score<T: PartialOrd>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

/// Something that orders the shown items of a block.
pub trait Ranker: Sync {
    /// Permutation of `0..block.shown_items.len()`, best first.
    fn rank(&self, block: &QueryBlock) -> Result<Vec<usize>>;
}

fn positions<S>(block: &QueryBlock, ranked: &[(ItemId, S)]) -> Vec<usize> {
    let mut used = vec![false; block.shown_items.len()];
    ranked
        .iter()
        .map(|(item, _)| {
            let p = block
                .shown_items
                .iter()
                .enumerate()
                .position(|(i, x)| x == item && !used[i])
                .expect("ranked item comes from the block");
            used[p] = true;
            p
        })
        .collect()
}

pub struct SieRanker<'a, T>(pub &'a SieModel<T>);

impl<T: Scalar> Ranker for SieRanker<'_, T> {
    fn rank(&self, block: &QueryBlock) -> Result<Vec<usize>> {
        Ok(positions(block, &sie_rank(block, self.0)?))
    }
}

pub struct ListRankRanker<'a, T> {
    pub sie: &'a SieModel<T>,
    pub rank: &'a RankModel<T>,
}

impl<T: Scalar> Ranker for ListRankRanker<'_, T> {
    fn rank(&self, block: &QueryBlock) -> Result<Vec<usize>> {
        Ok(positions(block, &rank_items(block, self.sie, self.rank)?))
    }
}

/// Global training click counts; descending count, ties by ascending item id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopularityRanker {
    counts: HashMap<ItemId, usize>,
}

impl PopularityRanker {
    pub fn count(&self, item: ItemId) -> usize {
        self.counts.get(&item).copied().unwrap_or(0)
    }
}

/// Click counts over the train split. Purchases count through their clicks;
/// a grade is a click whether or not it ended in a purchase.
pub fn popularity_baseline(train: &[QueryBlock]) -> PopularityRanker {
    let mut counts = HashMap::new();
    for b in train {
        for (&item, &l) in b.shown_items.iter().zip(&b.labels) {
            if l > 0 {
                *counts.entry(item).or_insert(0) += 1;
            }
        }
    }
    PopularityRanker { counts }
}

impl Ranker for PopularityRanker {
    fn rank(&self, block: &QueryBlock) -> Result<Vec<usize>> {
        let mut idx: Vec<usize> = (0..block.shown_items.len()).collect();
        idx.sort_by_key(|&i| {
            let item = block.shown_items[i];
            (std::cmp::Reverse(self.count(item)), item)
        });
        Ok(idx)
    }
}

/// Ranks by a per-item score closure; stable ties.
pub struct ScoreRanker<F>(pub F);

impl<F: Fn(&QueryBlock, usize) -> f64 + Sync> Ranker for ScoreRanker<F> {
    fn rank(&self, block: &QueryBlock) -> Result<Vec<usize>> {
        let scores: Vec<f64> = (0..block.shown_items.len()).map(|i| (self.0)(block, i)).collect();
        Ok(order_by_score(&scores))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: QueryId,
    pub ndcg_at_all: f64,
    pub ndcg_at_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub ndcg_at_all: f64,
    pub ndcg_at_10: f64,
    pub n_queries: usize,
    /// Queries without any positive label (or without items), left out of the averages.
    pub n_excluded: usize,
    pub per_query: Vec<QueryScore>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "method,ndcg_at_all,ndcg_at_10,n_queries,n_excluded";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{}",
            self.method, self.ndcg_at_all, self.ndcg_at_10, self.n_queries, self.n_excluded
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} NDCG@all {:.4}  NDCG@10 {:.4}  ({} queries, {} excluded)",
            self.method, self.ndcg_at_all, self.ndcg_at_10, self.n_queries, self.n_excluded
        )
    }
}

/// Ranks every block and averages NDCG@all and NDCG@10 over the blocks that
/// have at least one positive label.
pub fn evaluate(method: &str, ranker: &dyn Ranker, blocks: &[QueryBlock], gain: Gain) -> Result<EvalReport> {
    let scored: Vec<Option<QueryScore>> = blocks
        .par_iter()
        .map(|b| {
            let order = ranker.rank(b)?;
            let ranked: Vec<u8> = order.iter().map(|&i| b.labels[i]).collect();
            Ok(ndcg(&ranked, None, gain).map(|at_all| QueryScore {
                query_id: b.query_id,
                ndcg_at_all: at_all,
                ndcg_at_10: ndcg(&ranked, Some(NDCG_CUTOFF), gain).unwrap_or(0.0),
            }))
        })
        .collect::<Result<_>>()?;
    let n_excluded = scored.iter().filter(|s| s.is_none()).count();
    if n_excluded > 0 {
        log::warn!("{method}: {n_excluded} queries without positive labels excluded from NDCG");
    }
    let per_query: Vec<QueryScore> = scored.into_iter().flatten().collect();
    if per_query.is_empty() {
        return Err(Error::Data(format!("{method}: no test query has a positive label")));
    }
    let n = per_query.len() as f64;
    Ok(EvalReport {
        method: method.to_owned(),
        ndcg_at_all: per_query.iter().map(|q| q.ndcg_at_all).sum::<f64>() / n,
        ndcg_at_10: per_query.iter().map(|q| q.ndcg_at_10).sum::<f64>() / n,
        n_queries: per_query.len(),
        n_excluded,
        per_query,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Popularity,
    Sie,
    ListRank,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Popularity => "popularity",
            Method::Sie => "sie",
            Method::ListRank => "listrank",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "popularity" => Ok(Method::Popularity),
            "sie" => Ok(Method::Sie),
            "listrank" => Ok(Method::ListRank),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Evaluates `method` on the test split, requiring whichever models it needs.
pub fn evaluate_method<T: Scalar>(
    method: Method,
    dataset: &Dataset,
    sie: Option<&SieModel<T>>,
    rank: Option<&RankModel<T>>,
    gain: Gain,
) -> Result<EvalReport> {
    let need_sie = || sie.ok_or_else(|| Error::MissingModel(format!("{} needs a trained S-IE model", method.name())));
    match method {
        Method::Popularity => evaluate(method.name(), &popularity_baseline(&dataset.train), &dataset.test, gain),
        Method::Sie => evaluate(method.name(), &SieRanker(need_sie()?), &dataset.test, gain),
        Method::ListRank => {
            let rank = rank.ok_or_else(|| Error::MissingModel("listrank needs a trained ranking model".into()))?;
            evaluate(method.name(), &ListRankRanker { sie: need_sie()?, rank }, &dataset.test, gain)
        }
    }
}

/// One-sided sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut total = 0.0;
    let mut c = 1.0f64; // C(n, 0)
    for k in 0..=n {
        if k >= wins {
            total += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::SessionId;

    fn block(items: &[u64], labels: &[u8]) -> QueryBlock {
        QueryBlock {
            session_id: SessionId(1),
            query_id: QueryId(items[0]),
            user_hash: None,
            timestamp: 0,
            is_queryless: true,
            shown_items: items.iter().map(|&i| ItemId(i)).collect(),
            labels: labels.to_vec(),
            preceding_clicks: vec![],
            preceding_views: vec![],
            preceding_purchases: vec![],
        }
    }

    #[test]
    fn stable_score_order() {
        assert_eq!(order_by_score(&[1.0, 3.0, 1.0, 3.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn popularity_counts_and_ties() {
        let train = vec![block(&[1, 2, 3], &[1, 1, 0]), block(&[1, 2], &[2, 0])];
        let pop = popularity_baseline(&train);
        assert_eq!(pop.count(ItemId(1)), 2);
        assert_eq!(pop.count(ItemId(2)), 1);
        assert_eq!(pop.count(ItemId(9)), 0);
        let test = block(&[9, 2, 1, 4], &[0, 0, 1, 0]);
        assert_eq!(pop.rank(&test).unwrap(), vec![2, 1, 3, 0]);
    }

    #[test]
    fn oracle_ranker_is_perfect() {
        let blocks = vec![block(&[1, 2, 3], &[0, 2, 1]), block(&[4, 5], &[1, 0]), block(&[6], &[0])];
        let oracle = ScoreRanker(|b: &QueryBlock, i: usize| b.labels[i] as f64);
        let r = evaluate("oracle", &oracle, &blocks, Gain::Linear).unwrap();
        assert_eq!(r.ndcg_at_all, 1.0);
        assert_eq!(r.n_queries, 2);
        assert_eq!(r.n_excluded, 1);
    }

    #[test]
    fn missing_model_is_error() {
        let ds = Dataset {
            train: vec![],
            test: vec![block(&[1], &[1])],
            item_vocab: vec![].into(),
            user_vocab: vec![].into(),
            stats: Default::default(),
            report: Default::default(),
        };
        let r = evaluate_method::<f64>(Method::Sie, &ds, None, None, Gain::Linear);
        assert!(matches!(r, Err(Error::MissingModel(_))));
        assert!(evaluate_method::<f64>(Method::Popularity, &ds, None, None, Gain::Linear).is_ok());
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p(5, 0) - 1.0 / 32.0).abs() < 1e-15);
        assert!((sign_test_p(4, 1) - 6.0 / 32.0).abs() < 1e-15);
        assert_eq!(sign_test_p(0, 3), 1.0);
    }
}
