//! Session information embedding.
//!
//! Pools the embeddings of a session's earlier clicks and views, concatenates
//! them with a user and a candidate-item embedding, and feeds the result
//! through a relu MLP with a two-class softmax head. The last relu layer is
//! the session representation reused by the list-wise ranker.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, ItemId, ItemVocab, QueryBlock, QueryId, SessionId, UserVocab, Vocab};
use crate::error::{Error, Result};
use crate::eval::order_by_score;
use crate::nn::{
    cross_entropy, pool, pool_backward, prefixed, prefixed_mut, sgd_step, softmax, Activation, DenseLayer,
    DenseTrace, EmbeddingTable, Gradients, InitScheme, Matrix, Parameterized, PoolMode, Scalar,
};

/// Which behavior segments feed the model; disabled segments are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub clicks: bool,
    pub views: bool,
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self {
            clicks: true,
            views: true,
        }
    }
}

/// Cells of the behavior ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    ClickOnly,
    ViewOnly,
    Both,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::None, Ablation::ClickOnly, Ablation::ViewOnly, Ablation::Both];

    pub fn mask(self) -> FeatureMask {
        let (clicks, views) = match self {
            Ablation::None => (false, false),
            Ablation::ClickOnly => (true, false),
            Ablation::ViewOnly => (false, true),
            Ablation::Both => (true, true),
        };
        FeatureMask { clicks, views }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::ClickOnly => "click_only",
            Ablation::ViewOnly => "view_only",
            Ablation::Both => "both",
        }
    }
}

/// Item segment used when extracting the candidate-independent representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprItem {
    #[default]
    Zero,
    MeanOfShown,
}

impl std::str::FromStr for ReprItem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(ReprItem::Zero),
            "mean-of-shown" => Ok(ReprItem::MeanOfShown),
            other => Err(Error::Config(format!("unknown repr-item {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieConfig {
    pub embedding_dim: usize,
    pub mlp_widths: Vec<usize>,
    pub pooling: PoolMode,
    pub features: FeatureMask,
    pub separate_view_table: bool,
    pub purchases_as_clicks: bool,
    pub use_user_embedding: bool,
    pub repr_item: ReprItem,
}

impl Default for SieConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 200,
            mlp_widths: vec![800, 200, 100],
            pooling: PoolMode::Average,
            features: FeatureMask::default(),
            separate_view_table: false,
            purchases_as_clicks: false,
            use_user_embedding: false,
            repr_item: ReprItem::Zero,
        }
    }
}

impl SieConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.mlp_widths.is_empty() || self.mlp_widths.contains(&0) {
            return Err(Error::Config("mlp_widths must be a nonempty list of positive widths".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        4 * self.embedding_dim
    }

    pub fn representation_dim(&self) -> usize {
        *self.mlp_widths.last().expect("validated widths")
    }
}

/// Behavior history of a session before some presentation.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub clicks: &'a [ItemId],
    pub views: &'a [ItemId],
    pub purchases: &'a [ItemId],
    pub user: Option<&'a str>,
}

impl<'a> History<'a> {
    pub fn of_block(b: &'a QueryBlock) -> Self {
        Self {
            clicks: &b.preceding_clicks,
            views: &b.preceding_views,
            purchases: &b.preceding_purchases,
            user: b.user_hash.as_deref(),
        }
    }

    pub fn of_sample(s: &'a SieSample) -> Self {
        Self {
            clicks: &s.clicks_before,
            views: &s.views_before,
            purchases: &s.purchases_before,
            user: s.user.as_deref(),
        }
    }

    pub fn empty() -> Self {
        Self {
            clicks: &[],
            views: &[],
            purchases: &[],
            user: None,
        }
    }
}

/// Content of the candidate-item segment of the feature vector.
#[derive(Debug, Clone, Copy)]
pub enum ItemSegment<'a> {
    Item(ItemId),
    Zero,
    MeanOf(&'a [ItemId]),
}

/// One supervised example: a candidate item in the context of its session history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieSample {
    pub session_id: SessionId,
    pub query_id: QueryId,
    pub target_item: ItemId,
    pub clicks_before: Vec<ItemId>,
    pub views_before: Vec<ItemId>,
    pub purchases_before: Vec<ItemId>,
    pub user: Option<String>,
    pub positive: bool,
}

impl SieSample {
    pub fn class(&self) -> usize {
        usize::from(self.positive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRepresentation<T> {
    pub session_id: SessionId,
    pub query_id: QueryId,
    pub vector: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SieModel<T> {
    config: SieConfig,
    item_vocab: ItemVocab,
    user_vocab: UserVocab,
    item_embeddings: EmbeddingTable<T>,
    user_embeddings: EmbeddingTable<T>,
    view_embeddings: Option<EmbeddingTable<T>>,
    mlp: Vec<DenseLayer<T>>,
    head: DenseLayer<T>,
}

#[derive(Debug, Clone, Default)]
struct FeatureRows {
    clicks: Vec<usize>,
    views: Vec<usize>,
    user: usize,
    item: Vec<usize>,
}

/// Forward-pass record needed by backpropagation.
#[derive(Debug, Clone)]
pub struct SieTrace<T> {
    rows: FeatureRows,
    layers: Vec<DenseTrace<T>>,
    head: DenseTrace<T>,
    pub probs: Vec<T>,
}

impl<T> SieTrace<T> {
    pub fn representation(&self) -> &[T] {
        &self.layers.last().expect("at least one layer").output
    }

    /// Per-layer records of the relu MLP.
    pub fn layers(&self) -> &[DenseTrace<T>] {
        &self.layers
    }
}

impl<T: Scalar> SieModel<T> {
    /// Freshly initialized model. With `use_user_embedding` off, every user
    /// shares the single OOV user row.
    pub fn new(config: SieConfig, item_vocab: ItemVocab, user_vocab: UserVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let user_vocab = if config.use_user_embedding {
            user_vocab
        } else {
            Vocab::from(Vec::new())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embedding_dim;
        let scheme = InitScheme::UniformScaled;
        let item_embeddings = EmbeddingTable::init(item_vocab.len(), d, scheme, &mut rng);
        let user_embeddings = EmbeddingTable::init(user_vocab.len(), d, scheme, &mut rng);
        let view_embeddings = config
            .separate_view_table
            .then(|| EmbeddingTable::init(item_vocab.len(), d, scheme, &mut rng));
        let mut mlp = Vec::with_capacity(config.mlp_widths.len());
        let mut width = config.input_dim();
        for &w in &config.mlp_widths {
            mlp.push(DenseLayer::init(width, w, Activation::Relu, scheme, &mut rng));
            width = w;
        }
        let head = DenseLayer::init(width, 2, Activation::Identity, scheme, &mut rng);
        Ok(Self {
            config,
            item_vocab,
            user_vocab,
            item_embeddings,
            user_embeddings,
            view_embeddings,
            mlp,
            head,
        })
    }

    pub fn config(&self) -> &SieConfig {
        &self.config
    }

    pub fn item_vocab(&self) -> &ItemVocab {
        &self.item_vocab
    }

    pub fn user_vocab(&self) -> &UserVocab {
        &self.user_vocab
    }

    pub fn item_embeddings(&self) -> &EmbeddingTable<T> {
        &self.item_embeddings
    }

    pub fn user_embeddings_mut(&mut self) -> &mut EmbeddingTable<T> {
        &mut self.user_embeddings
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.mlp
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.mlp
    }

    pub fn head_mut(&mut self) -> &mut DenseLayer<T> {
        &mut self.head
    }

    pub fn representation_dim(&self) -> usize {
        self.config.representation_dim()
    }

    fn view_table(&self) -> &EmbeddingTable<T> {
        self.view_embeddings.as_ref().unwrap_or(&self.item_embeddings)
    }

    fn resolve(&self, history: &History<'_>, item: ItemSegment<'_>) -> FeatureRows {
        let rows = |ids: &[ItemId]| ids.iter().map(|i| self.item_vocab.row(i)).collect::<Vec<_>>();
        let mut clicks = Vec::new();
        if self.config.features.clicks {
            clicks = rows(history.clicks);
            if self.config.purchases_as_clicks {
                clicks.extend(rows(history.purchases));
            }
        }
        let views = if self.config.features.views {
            rows(history.views)
        } else {
            Vec::new()
        };
        let user = history
            .user
            .map_or(self.user_vocab.oov_row(), |u| self.user_vocab.row(&u.to_owned()));
        let item = match item {
            ItemSegment::Item(i) => vec![self.item_vocab.row(&i)],
            ItemSegment::Zero => Vec::new(),
            ItemSegment::MeanOf(ids) => rows(ids),
        };
        FeatureRows {
            clicks,
            views,
            user,
            item,
        }
    }

    fn features_from_rows(&self, rows: &FeatureRows) -> Result<Vec<T>> {
        let d = self.config.embedding_dim;
        let gather = |table: &EmbeddingTable<T>, r: &[usize]| -> Vec<Vec<T>> {
            r.iter().map(|&r| table.lookup(r).to_vec()).collect()
        };
        let mode = self.config.pooling;
        let clicks = gather(&self.item_embeddings, &rows.clicks);
        let views = gather(self.view_table(), &rows.views);
        let items = gather(&self.item_embeddings, &rows.item);
        let mut out = Vec::with_capacity(4 * d);
        out.extend(pool(&as_refs(&clicks), d, mode)?);
        out.extend(pool(&as_refs(&views), d, mode)?);
        out.extend_from_slice(self.user_embeddings.lookup(rows.user));
        out.extend(pool(&as_refs(&items), d, PoolMode::Average)?);
        Ok(out)
    }

    /// `concat[pool(clicks), pool(views), user, item]`, each `embedding_dim` long.
    pub fn build_session_feature(&self, history: &History<'_>, item: ItemSegment<'_>) -> Result<Vec<T>> {
        self.features_from_rows(&self.resolve(history, item))
    }

    pub fn forward_trace(&self, history: &History<'_>, item: ItemSegment<'_>) -> Result<SieTrace<T>> {
        let rows = self.resolve(history, item);
        let mut x = self.features_from_rows(&rows)?;
        let mut layers = Vec::with_capacity(self.mlp.len());
        for layer in &self.mlp {
            let t = layer.forward(&x)?;
            x = t.output.clone();
            layers.push(t);
        }
        let head = self.head.forward(&x)?;
        let probs = softmax(&head.output)?;
        Ok(SieTrace {
            rows,
            layers,
            head,
            probs,
        })
    }

    /// Class probabilities `(negative, positive)` and the last relu activation.
    pub fn sie_forward(&self, sample: &SieSample) -> Result<(Vec<T>, SessionRepresentation<T>)> {
        let trace = self.forward_trace(&History::of_sample(sample), ItemSegment::Item(sample.target_item))?;
        let repr = SessionRepresentation {
            session_id: sample.session_id,
            query_id: sample.query_id,
            vector: trace.representation().to_vec(),
        };
        Ok((trace.probs, repr))
    }

    pub fn positive_probability(&self, history: &History<'_>, item: ItemId) -> Result<T> {
        Ok(self.forward_trace(history, ItemSegment::Item(item))?.probs[1])
    }

    pub fn sample_loss(&self, sample: &SieSample) -> Result<T> {
        let (probs, _) = self.sie_forward(sample)?;
        cross_entropy(&one_hot(sample.class()), &probs)
    }

    /// Adds d loss / d params for one sample to `grads`; returns the loss and probabilities.
    pub fn accumulate_gradients(&self, sample: &SieSample, grads: &mut Gradients<Self>) -> Result<(T, Vec<T>)> {
        let trace = self.forward_trace(&History::of_sample(sample), ItemSegment::Item(sample.target_item))?;
        let target = one_hot::<T>(sample.class());
        let loss = cross_entropy(&target, &trace.probs)?;
        let dlogits: Vec<T> = trace.probs.iter().zip(&target).map(|(&p, &t)| p - t).collect();
        self.backward(&trace, &dlogits, grads.get_mut())?;
        Ok((loss, trace.probs))
    }

    fn backward(&self, trace: &SieTrace<T>, dlogits: &[T], g: &mut Self) -> Result<()> {
        let mut grad = self.head.backward(&trace.head, dlogits, &mut g.head)?;
        for (i, layer) in self.mlp.iter().enumerate().rev() {
            grad = layer.backward(&trace.layers[i], &grad, &mut g.mlp[i])?;
        }
        let d = self.config.embedding_dim;
        let mode = self.config.pooling;
        let (gc, rest) = grad.split_at(d);
        let (gv, rest) = rest.split_at(d);
        let (gu, gi) = rest.split_at(d);

        let rows = &trace.rows;
        scatter_pool(&self.item_embeddings, &mut g.item_embeddings, &rows.clicks, mode, gc);
        match (&self.view_embeddings, &mut g.view_embeddings) {
            (Some(t), Some(gt)) => scatter_pool(t, gt, &rows.views, mode, gv),
            _ => scatter_pool(&self.item_embeddings, &mut g.item_embeddings, &rows.views, mode, gv),
        }
        add_into(g.user_embeddings.lookup_mut(rows.user), gu);
        scatter_pool(&self.item_embeddings, &mut g.item_embeddings, &rows.item, PoolMode::Average, gi);
        Ok(())
    }

    /// Candidate-independent representation of a block's session history.
    pub fn session_representation(&self, block: &QueryBlock) -> Result<SessionRepresentation<T>> {
        let item = match self.config.repr_item {
            ReprItem::Zero => ItemSegment::Zero,
            ReprItem::MeanOfShown => ItemSegment::MeanOf(&block.shown_items),
        };
        let trace = self.forward_trace(&History::of_block(block), item)?;
        Ok(SessionRepresentation {
            session_id: block.session_id,
            query_id: block.query_id,
            vector: trace.representation().to_vec(),
        })
    }
}

fn as_refs<T>(v: &[Vec<T>]) -> Vec<&[T]> {
    v.iter().map(|x| x.as_slice()).collect()
}

fn one_hot<T: Scalar>(class: usize) -> Vec<T> {
    let mut t = vec![T::zero(); 2];
    t[class] = T::one();
    t
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn scatter_pool<T: Scalar>(
    table: &EmbeddingTable<T>,
    grads: &mut EmbeddingTable<T>,
    rows: &[usize],
    mode: PoolMode,
    grad_out: &[T],
) {
    if rows.is_empty() {
        return;
    }
    let vectors: Vec<&[T]> = rows.iter().map(|&r| table.lookup(r)).collect();
    for (&r, g) in rows.iter().zip(pool_backward(&vectors, mode, grad_out)) {
        add_into(grads.lookup_mut(r), &g);
    }
}

impl<T: Scalar> Parameterized<T> for SieModel<T> {
    fn params(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = Vec::new();
        out.extend(prefixed("item_embeddings", self.item_embeddings.params()));
        out.extend(prefixed("user_embeddings", self.user_embeddings.params()));
        if let Some(v) = &self.view_embeddings {
            out.extend(prefixed("view_embeddings", v.params()));
        }
        for (i, l) in self.mlp.iter().enumerate() {
            out.extend(prefixed(&format!("mlp.{i}"), l.params()));
        }
        out.extend(prefixed("head", self.head.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out: Vec<(String, &mut Matrix<T>)> = Vec::new();
        out.extend(prefixed_mut("item_embeddings", self.item_embeddings.params_mut()));
        out.extend(prefixed_mut("user_embeddings", self.user_embeddings.params_mut()));
        if let Some(v) = &mut self.view_embeddings {
            out.extend(prefixed_mut("view_embeddings", v.params_mut()));
        }
        for (i, l) in self.mlp.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("mlp.{i}"), l.params_mut()));
        }
        out.extend(prefixed_mut("head", self.head.params_mut()));
        out
    }
}

/// Positive copies per clicked item, and per purchased item, plus shown-but-
/// unclicked negatives sampled without replacement at `neg_ratio` per positive.
pub fn make_training_samples(
    blocks: &[QueryBlock],
    neg_ratio: usize,
    purchase_copies: usize,
    seed: u64,
) -> Vec<SieSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for b in blocks {
        if b.shown_items.is_empty() {
            log::warn!("skipping query {} with no shown items", b.query_id);
            continue;
        }
        let sample = |item: ItemId, positive: bool| SieSample {
            session_id: b.session_id,
            query_id: b.query_id,
            target_item: item,
            clicks_before: b.preceding_clicks.clone(),
            views_before: b.preceding_views.clone(),
            purchases_before: b.preceding_purchases.clone(),
            user: b.user_hash.clone(),
            positive,
        };
        let mut n_pos = 0;
        let mut unclicked = Vec::new();
        for (&item, &label) in b.shown_items.iter().zip(&b.labels) {
            let copies = match label {
                0 => {
                    unclicked.push(item);
                    0
                }
                1 => 1,
                _ => purchase_copies,
            };
            for _ in 0..copies {
                out.push(sample(item, true));
            }
            n_pos += copies;
        }
        let n_neg = (neg_ratio * n_pos).min(unclicked.len());
        for &item in unclicked.choose_multiple(&mut rng, n_neg) {
            out.push(sample(item, false));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieTrainParams {
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub neg_ratio: usize,
    pub purchase_copies: usize,
}

impl Default for SieTrainParams {
    fn default() -> Self {
        Self {
            eta: 0.001,
            epochs: 10,
            seed: 42,
            neg_ratio: 5,
            purchase_copies: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

pub fn epoch_log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,mean_loss,accuracy\n");
    for e in log {
        s.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.accuracy));
    }
    s
}

#[derive(Debug, Clone)]
pub struct SieTraining<T> {
    pub model: SieModel<T>,
    pub log: Vec<EpochLog>,
}

/// Plain per-sample SGD on the two-class cross-entropy over shuffled samples.
pub fn train_sie<T: Scalar>(dataset: &Dataset, config: &SieConfig, params: &SieTrainParams) -> Result<SieTraining<T>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(params.seed);
    let mut model = SieModel::<T>::new(
        config.clone(),
        dataset.item_vocab.clone(),
        dataset.user_vocab.clone(),
        seeds.gen(),
    )?;
    let mut samples = make_training_samples(&dataset.train, params.neg_ratio, params.purchase_copies, seeds.gen());
    if samples.is_empty() {
        return Err(Error::Data("no S-IE training samples (train split has no clicks)".into()));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds.gen());
    let eta = T::lit(params.eta);
    let mut grads = Gradients::zeros_like(&model);
    let mut log = Vec::with_capacity(params.epochs);
    for epoch in 1..=params.epochs {
        samples.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut correct = 0usize;
        for s in &samples {
            grads.zero();
            let (loss, probs) = model.accumulate_gradients(s, &mut grads)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("S-IE training diverged in epoch {epoch}")));
            }
            total += loss;
            correct += usize::from((probs[1] > probs[0]) == s.positive);
            sgd_step(&mut model, &grads, eta)?;
        }
        let entry = EpochLog {
            epoch,
            mean_loss: total / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
        };
        log::info!("sie epoch {epoch}: mean loss {:.5}, accuracy {:.4}", entry.mean_loss, entry.accuracy);
        log.push(entry);
    }
    Ok(SieTraining { model, log })
}

/// Fraction of samples whose predicted class matches the label.
pub fn sie_accuracy<T: Scalar>(model: &SieModel<T>, samples: &[SieSample]) -> Result<f64> {
    let mut correct = 0;
    for s in samples {
        let (p, _) = model.sie_forward(s)?;
        correct += usize::from((p[1] > p[0]) == s.positive);
    }
    Ok(correct as f64 / samples.len().max(1) as f64)
}

/// Shown items by descending positive-class probability, ties in presentation order.
pub fn sie_rank<T: Scalar>(block: &QueryBlock, model: &SieModel<T>) -> Result<Vec<(ItemId, T)>> {
    let history = History::of_block(block);
    let scores = block
        .shown_items
        .iter()
        .map(|&i| model.positive_probability(&history, i))
        .collect::<Result<Vec<T>>>()?;
    Ok(order_by_score(&scores)
        .into_iter()
        .map(|i| (block.shown_items[i], scores[i]))
        .collect())
}

pub fn extract_representations<T: Scalar>(
    blocks: &[QueryBlock],
    model: &SieModel<T>,
) -> Result<Vec<SessionRepresentation<T>>> {
    blocks.par_iter().map(|b| model.session_representation(b)).collect()
}
