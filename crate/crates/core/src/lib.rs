//! Session-aware product ranking.
//!
//! A supervised session embedding model ([`sie`]) learns a compact vector for
//! the in-session behavior of an anonymous visitor; a list-wise ranker
//! ([`listnet`]) projects item embeddings into the same space and re-ranks the
//! presented items by dot product. All numeric code is generic over
//! [`nn::Scalar`]; the aliases below fix it to `f64` or `f32`.

pub mod checks;
pub mod config;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod listnet;
pub mod nn;
pub mod pipeline;
pub mod sie;

pub use error::{Error, Result};

pub type Matrix = nn::Matrix<f64>;
pub type DenseLayer = nn::DenseLayer<f64>;
pub type EmbeddingTable = nn::EmbeddingTable<f64>;
pub type SieModel = sie::SieModel<f64>;
pub type RankModel = listnet::RankModel<f64>;
pub type SessionRepresentation = sie::SessionRepresentation<f64>;

pub type Matrix32 = nn::Matrix<f32>;
pub type SieModel32 = sie::SieModel<f32>;
pub type RankModel32 = listnet::RankModel<f32>;
