//! Finite-difference checks of both models on small random instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datamodel::{ItemId, ItemVocab, SessionId, QueryId, UserVocab};
use crate::error::Result;
use crate::listnet::{grades_as, ListLoss, RankConfig, RankModel};
use crate::nn::{
    finite_difference_check, Activation, DenseLayer, EmbeddingTable, GradCheckReport, Gradients, InitScheme,
    Matrix, Parameterized, PoolMode,
};
use crate::sie::{History, ItemSegment, ReprItem, SieConfig, SieModel, SieSample};

/// Largest relative error accepted by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Step used by the suite. With the fourth-order stencil, smaller steps let
/// roundoff in the O(1) loss swamp gradient entries near 1e-7.
pub const GRADCHECK_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub model: String,
    pub seed: u64,
    pub max_relative_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

impl GradCheckCase {
    fn new(model: String, seed: u64, r: GradCheckReport) -> Self {
        Self {
            model,
            seed,
            max_relative_error: r.max_relative_error,
            worst_param: format!("{}[{}]", r.worst_param, r.worst_index),
            checked: r.checked,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

/// A one-layer linear regression, the sanity case for the checker itself.
#[derive(Clone)]
struct Linear(DenseLayer<f64>);

impl Parameterized<f64> for Linear {
    fn params(&self) -> Vec<(String, &Matrix<f64>)> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Matrix<f64>)> {
        self.0.params_mut()
    }
}

pub fn check_linear(seed: u64, epsilon: f64) -> Result<GradCheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Linear(DenseLayer::init(5, 3, Activation::Identity, InitScheme::UniformScaled, &mut rng));
    let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |m: &Linear| -> Result<f64> {
        let out = m.0.apply(&x)?;
        Ok(out.iter().zip(&y).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum())
    };
    let mut grads = Gradients::zeros_like(&model);
    let trace = model.0.forward(&x)?;
    let g_out: Vec<f64> = trace.output.iter().zip(&y).map(|(o, t)| o - t).collect();
    model.0.backward(&trace, &g_out, &mut grads.get_mut().0)?;
    let r = finite_difference_check(&model, &grads, loss, epsilon)?;
    Ok(GradCheckCase::new("linear".into(), seed, r))
}

fn ids(rng: &mut ChaCha8Rng, pool: u64, lo: usize, hi: usize) -> Vec<ItemId> {
    let n = rng.gen_range(lo..hi);
    (0..n).map(|_| ItemId(rng.gen_range(0..pool))).collect()
}

/// Smallest distance of any relu pre-activation from its kink.
fn relu_margin(model: &SieModel<f64>, sample: &SieSample) -> Result<f64> {
    let trace = model.forward_trace(&History::of_sample(sample), ItemSegment::Item(sample.target_item))?;
    Ok(trace
        .layers()
        .iter()
        .flat_map(|t| t.pre_activation.iter())
        .fold(f64::INFINITY, |m, z| m.min(z.abs())))
}

fn sie_instance(seed: u64, rng: &mut ChaCha8Rng) -> Result<(SieModel<f64>, SieSample)> {
    let pooling = if seed % 2 == 0 { PoolMode::Average } else { PoolMode::Max };
    let config = SieConfig {
        embedding_dim: 4,
        mlp_widths: vec![7, 5],
        pooling,
        separate_view_table: seed % 3 == 0,
        use_user_embedding: true,
        repr_item: ReprItem::Zero,
        ..SieConfig::default()
    };
    let items = ItemVocab::new((0..8).map(ItemId));
    let users = UserVocab::new(vec!["a".to_string(), "b".to_string()]);
    let mut model = SieModel::<f64>::new(config, items, users, rng.gen())?;
    // Fresh tables start with zero OOV rows; fill them so their gradients are exercised too.
    for row in model.user_embeddings_mut().params_mut() {
        for v in row.1.as_mut_slice() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
    }
    for layer in model.layers_mut() {
        for v in layer.bias_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    let sample = SieSample {
        session_id: SessionId(seed),
        query_id: QueryId(seed),
        target_item: ItemId(rng.gen_range(0..9)),
        clicks_before: ids(rng, 9, 1, 4),
        views_before: ids(rng, 9, 0, 4),
        purchases_before: ids(rng, 9, 0, 2),
        user: Some(if rng.gen() { "a" } else { "c" }.to_string()),
        positive: rng.gen(),
    };
    Ok((model, sample))
}

/// S-IE cross-entropy through the head, MLP, pooling and all embedding tables.
/// Instances with a relu input within reach of the perturbation are redrawn,
/// since the loss is not differentiable there.
pub fn check_sie(seed: u64, epsilon: f64) -> Result<GradCheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, sample) = loop {
        let (m, s) = sie_instance(seed, &mut rng)?;
        if relu_margin(&m, &s)? > 100.0 * epsilon {
            break (m, s);
        }
    };
    let mut grads = Gradients::zeros_like(&model);
    model.accumulate_gradients(&sample, &mut grads)?;
    let r = finite_difference_check(&model, &grads, |m: &SieModel<f64>| m.sample_loss(&sample), epsilon)?;
    let pooling = format!("{:?}", model.config().pooling).to_lowercase();
    Ok(GradCheckCase::new(format!("sie/{pooling}"), seed, r))
}

/// List-wise loss through the projection and item embeddings, for one `k`.
pub fn check_listnet(seed: u64, k: usize, epsilon: f64) -> Result<GradCheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(k as u64));
    let n = rng.gen_range(k.max(2)..=8);
    let mut pool: Vec<u64> = (0..10).collect();
    pool.shuffle(&mut rng);
    let list: Vec<ItemId> = pool[..n].iter().map(|&i| ItemId(i)).collect();
    let vocab = ItemVocab::new((0..10).map(ItemId));
    // Well-spread embeddings keep the projected items distinct, so no gradient
    // entry is a near-cancelling sum lost in finite-difference roundoff.
    let data: Vec<f64> = (0..11 * 4).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let table = EmbeddingTable::from_matrix(Matrix::from_vec(11, 4, data)?);
    let config = RankConfig {
        proj_widths: vec![5, 3],
        loss: ListLoss::with_k(k),
    };
    let model = RankModel::<f64>::new(config, vocab, table, rng.gen())?;
    let session: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0)).collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    labels[0] = labels[0].max(1);
    let labels = grades_as::<f64>(&labels);
    let mut grads = Gradients::zeros_like(&model);
    model.accumulate_gradients(&session, &list, &labels, &mut grads)?;
    let r = finite_difference_check(
        &model,
        &grads,
        |m: &RankModel<f64>| m.list_loss(&session, &list, &labels),
        epsilon,
    )?;
    Ok(GradCheckCase::new(format!("listnet/k={k}"), seed, r))
}

/// Linear sanity case, then S-IE and ListNet (k = 1, 2, 3) for every seed.
pub fn gradcheck_suite(seeds: &[u64], epsilon: f64) -> Result<Vec<GradCheckCase>> {
    let mut out = vec![check_linear(seeds.first().copied().unwrap_or(0), epsilon)?];
    for &seed in seeds {
        out.push(check_sie(seed, epsilon)?);
        for k in 1..=3 {
            out.push(check_listnet(seed, k, epsilon)?);
        }
    }
    Ok(out)
}
