//! End-to-end training and model persistence shared by the CLI and the experiments.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, ItemVocab, UserVocab};
use crate::error::{Error, Result};
use crate::listnet::{train_listrank, RankConfig, RankModel, RankTrainParams, RankTraining};
use crate::nn::{EmbeddingTable, InitScheme, ModelDocument, Scalar};
use crate::sie::{train_sie, SieConfig, SieModel, SieTrainParams, SieTraining};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub sie: SieConfig,
    pub sie_train: SieTrainParams,
    pub rank: RankConfig,
    pub rank_train: RankTrainParams,
}

#[derive(Debug, Clone)]
pub struct TrainedModels<T> {
    pub sie: SieTraining<T>,
    pub rank: RankTraining<T>,
}

/// S-IE pre-training followed by list-wise fine-tuning.
pub fn train_models<T: Scalar>(dataset: &Dataset, settings: &TrainSettings) -> Result<TrainedModels<T>> {
    let sie = train_sie::<T>(dataset, &settings.sie, &settings.sie_train)?;
    let rank = train_listrank(dataset, &sie.model, &settings.rank, &settings.rank_train)?;
    Ok(TrainedModels { sie, rank })
}

/// Id-to-row assignment saved next to the parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabFile {
    pub items: ItemVocab,
    pub users: UserVocab,
}

impl VocabFile {
    pub fn of_dataset(d: &Dataset) -> Self {
        Self {
            items: d.item_vocab.clone(),
            users: d.user_vocab.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Fails when a model trained on another corpus is applied to `d`.
    pub fn check_matches(&self, d: &Dataset) -> Result<()> {
        if self.items != d.item_vocab || self.users != d.user_vocab {
            return Err(Error::Data(
                "saved model vocabulary differs from the prepared dataset; retrain on these events".into(),
            ));
        }
        Ok(())
    }
}

pub fn save_model<T: Scalar, M: crate::nn::Parameterized<T>>(model: &M, path: &Path) -> Result<()> {
    ModelDocument::from_model(model).write(path)
}

fn read_model(path: &Path, what: &str) -> Result<ModelDocument> {
    if !path.exists() {
        return Err(Error::MissingModel(format!("{what} not found at {}", path.display())));
    }
    ModelDocument::read(path)
}

pub fn load_sie_model<T: Scalar>(path: &Path, config: &SieConfig, vocab: &VocabFile) -> Result<SieModel<T>> {
    let doc = read_model(path, "S-IE model")?;
    let mut model = SieModel::new(config.clone(), vocab.items.clone(), vocab.users.clone(), 0)?;
    doc.load_into(&mut model)?;
    Ok(model)
}

pub fn load_rank_model<T: Scalar>(
    path: &Path,
    config: &RankConfig,
    embedding_dim: usize,
    vocab: &VocabFile,
) -> Result<RankModel<T>> {
    let doc = read_model(path, "ranking model")?;
    let table = EmbeddingTable::init(
        vocab.items.len(),
        embedding_dim,
        InitScheme::Zeros,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let mut model = RankModel::new(config.clone(), vocab.items.clone(), table, 0)?;
    doc.load_into(&mut model)?;
    Ok(model)
}
