use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plackett_luce::ListLoss;
use crate::datamodel::{Dataset, ItemId, ItemVocab, QueryBlock};
use crate::error::{dim_err, Error, Result};
use crate::eval::order_by_score;
use crate::nn::{
    dot, prefixed, prefixed_mut, sgd_step, Activation, DenseLayer, DenseTrace, EmbeddingTable, Gradients,
    InitScheme, Matrix, Parameterized, Scalar,
};
use crate::sie::{SessionRepresentation, SieModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    /// Sigmoid projection widths; the last must equal the session representation size.
    pub proj_widths: Vec<usize>,
    pub loss: ListLoss,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            proj_widths: vec![100, 100],
            loss: ListLoss::default(),
        }
    }
}

/// Item embeddings plus a sigmoid projection into the session space; a
/// candidate's score is the dot product of the session vector with its projection.
#[derive(Debug, Clone, PartialEq)]
pub struct RankModel<T> {
    config: RankConfig,
    item_vocab: ItemVocab,
    item_embeddings: EmbeddingTable<T>,
    projection: Vec<DenseLayer<T>>,
}

struct ProjectionTrace<T> {
    row: usize,
    layers: Vec<DenseTrace<T>>,
}

impl<T> ProjectionTrace<T> {
    fn output(&self) -> &[T] {
        &self.layers.last().expect("nonempty projection").output
    }
}

impl<T: Scalar> RankModel<T> {
    pub fn new(config: RankConfig, item_vocab: ItemVocab, item_embeddings: EmbeddingTable<T>, seed: u64) -> Result<Self> {
        if config.proj_widths.is_empty() || config.proj_widths.contains(&0) {
            return Err(Error::Config("proj_widths must be a nonempty list of positive widths".into()));
        }
        if item_embeddings.vocab_size() != item_vocab.len() {
            return dim_err("item embedding table does not match its vocabulary");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = item_embeddings.dim();
        let mut projection = Vec::new();
        for &w in &config.proj_widths {
            projection.push(DenseLayer::init(width, w, Activation::Sigmoid, InitScheme::UniformScaled, &mut rng));
            width = w;
        }
        Ok(Self {
            config,
            item_vocab,
            item_embeddings,
            projection,
        })
    }

    /// Starts from the S-IE item embeddings, with a freshly initialized projection.
    pub fn from_sie(sie: &SieModel<T>, config: RankConfig, seed: u64) -> Result<Self> {
        let out = config.proj_widths.last().copied().unwrap_or(0);
        if out != sie.representation_dim() {
            return Err(Error::Config(format!(
                "projection output {out} must equal the session representation size {}",
                sie.representation_dim()
            )));
        }
        Self::new(config, sie.item_vocab().clone(), sie.item_embeddings().clone(), seed)
    }

    pub fn config(&self) -> &RankConfig {
        &self.config
    }

    pub fn item_vocab(&self) -> &ItemVocab {
        &self.item_vocab
    }

    pub fn output_dim(&self) -> usize {
        self.projection.last().expect("nonempty projection").out_dim()
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.projection
    }

    fn project_trace(&self, item: ItemId) -> Result<ProjectionTrace<T>> {
        let row = self.item_vocab.row(&item);
        let mut x = self.item_embeddings.lookup(row).to_vec();
        let mut layers = Vec::with_capacity(self.projection.len());
        for l in &self.projection {
            let t = l.forward(&x)?;
            x = t.output.clone();
            layers.push(t);
        }
        Ok(ProjectionTrace { row, layers })
    }

    /// The item's embedding mapped into the session space.
    pub fn project_item(&self, item: ItemId) -> Result<Vec<T>> {
        Ok(self.project_trace(item)?.output().to_vec())
    }

    pub fn score(&self, session: &[T], item: ItemId) -> Result<T> {
        if session.len() != self.output_dim() {
            return dim_err(format!(
                "session vector has {} entries, projection yields {}",
                session.len(),
                self.output_dim()
            ));
        }
        Ok(dot(session, &self.project_item(item)?))
    }

    pub fn scores(&self, session: &[T], items: &[ItemId]) -> Result<Vec<T>> {
        items.iter().map(|&i| self.score(session, i)).collect()
    }

    fn loss_for(&self, n: usize) -> ListLoss {
        ListLoss {
            k: self.config.loss.k.min(n),
            ..self.config.loss
        }
    }

    pub fn list_loss(&self, session: &[T], items: &[ItemId], labels: &[T]) -> Result<T> {
        let scores = self.scores(session, items)?;
        self.loss_for(items.len()).loss(&scores, labels)
    }

    /// Adds the list loss gradient for one session list to `grads`; returns the loss.
    pub fn accumulate_gradients(
        &self,
        session: &[T],
        items: &[ItemId],
        labels: &[T],
        grads: &mut Gradients<Self>,
    ) -> Result<T> {
        if session.len() != self.output_dim() {
            return dim_err("session vector does not match projection output");
        }
        let traces = items.iter().map(|&i| self.project_trace(i)).collect::<Result<Vec<_>>>()?;
        let scores: Vec<T> = traces.iter().map(|t| dot(session, t.output())).collect();
        let (loss, dscores) = self.loss_for(items.len()).loss_and_gradient(&scores, labels)?;
        let g = grads.get_mut();
        for (trace, &ds) in traces.iter().zip(&dscores) {
            let mut grad: Vec<T> = session.iter().map(|&s| s * ds).collect();
            for (i, layer) in self.projection.iter().enumerate().rev() {
                grad = layer.backward(&trace.layers[i], &grad, &mut g.projection[i])?;
            }
            for (e, d) in g.item_embeddings.lookup_mut(trace.row).iter_mut().zip(grad) {
                *e += d;
            }
        }
        Ok(loss)
    }
}

impl<T: Scalar> Parameterized<T> for RankModel<T> {
    fn params(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = prefixed("item_embeddings", self.item_embeddings.params()).collect();
        for (i, l) in self.projection.iter().enumerate() {
            out.extend(prefixed(&format!("projection.{i}"), l.params()));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out: Vec<(String, &mut Matrix<T>)> =
            prefixed_mut("item_embeddings", self.item_embeddings.params_mut()).collect();
        for (i, l) in self.projection.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("projection.{i}"), l.params_mut()));
        }
        out
    }
}

pub fn grades_as<T: Scalar>(labels: &[u8]) -> Vec<T> {
    labels.iter().map(|&l| T::from_u8(l).unwrap()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTrainParams {
    pub eta: f64,
    /// Passes over the training lists.
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RankTrainParams {
    fn default() -> Self {
        Self {
            eta: 0.001,
            epochs: 10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lists: usize,
}

pub fn rank_log_csv(log: &[RankEpochLog]) -> String {
    let mut s = String::from("epoch,mean_loss,lists\n");
    for e in log {
        s.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.lists));
    }
    s
}

#[derive(Debug, Clone)]
pub struct RankTraining<T> {
    pub model: RankModel<T>,
    pub log: Vec<RankEpochLog>,
}

/// Per-list SGD on the list-wise loss. The S-IE model stays frozen: its
/// session vectors are computed once; item embeddings and the projection
/// are updated. Lists without any click or purchase carry no ordering
/// signal and are skipped.
pub fn train_listrank<T: Scalar>(
    dataset: &Dataset,
    sie: &SieModel<T>,
    config: &RankConfig,
    params: &RankTrainParams,
) -> Result<RankTraining<T>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(params.seed);
    let mut model = RankModel::from_sie(sie, config.clone(), seeds.gen())?;
    let lists: Vec<(&QueryBlock, SessionRepresentation<T>, Vec<T>)> = dataset
        .train
        .iter()
        .filter(|b| b.has_positive() && !b.shown_items.is_empty())
        .map(|b| Ok((b, sie.session_representation(b)?, grades_as(&b.labels))))
        .collect::<Result<_>>()?;
    if lists.is_empty() {
        return Err(Error::Data("no training list has a click or purchase".into()));
    }
    let mut order: Vec<usize> = (0..lists.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds.gen());
    let eta = T::lit(params.eta);
    let mut grads = Gradients::zeros_like(&model);
    let mut log = Vec::with_capacity(params.epochs);
    for epoch in 1..=params.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for &i in &order {
            let (block, repr, labels) = &lists[i];
            grads.zero();
            let loss = model
                .accumulate_gradients(&repr.vector, &block.shown_items, labels, &mut grads)?
                .as_f64();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "list-wise training diverged in epoch {epoch} on session {} query {}",
                    block.session_id, block.query_id
                )));
            }
            total += loss;
            sgd_step(&mut model, &grads, eta)?;
        }
        let entry = RankEpochLog {
            epoch,
            mean_loss: total / lists.len() as f64,
            lists: lists.len(),
        };
        log::info!("listrank epoch {epoch}: mean loss {:.5}", entry.mean_loss);
        log.push(entry);
    }
    Ok(RankTraining { model, log })
}

/// Shown items ordered by `s . projection(item)`, ties in presentation order.
pub fn rank_items<T: Scalar>(block: &QueryBlock, sie: &SieModel<T>, rank: &RankModel<T>) -> Result<Vec<(ItemId, T)>> {
    let s = sie.session_representation(block)?;
    let scores = rank.scores(&s.vector, &block.shown_items)?;
    Ok(order_by_score(&scores)
        .into_iter()
        .map(|i| (block.shown_items[i], scores[i]))
        .collect())
}
