//! List-wise re-ranking on top of the session representation.

mod model;
mod plackett_luce;

pub use model::{
    grades_as, rank_items, rank_log_csv, train_listrank, RankConfig, RankEpochLog, RankModel, RankTrainParams,
    RankTraining,
};
pub use plackett_luce::{
    count_groups, enumerate_groups, listnet_backward, listnet_loss, topk_group_probability, ListLoss, TopKGroup,
    DEFAULT_ENUMERATION_CAP,
};
