use serde::{Deserialize, Serialize};

use crate::datamodel::Grade;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `gain(y) = y`
    #[default]
    Linear,
    /// `gain(y) = 2^y - 1`
    Exponential,
}

impl Gain {
    pub fn of(self, grade: Grade) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => (1u32 << grade) as f64 - 1.0,
        }
    }
}

impl std::str::FromStr for Gain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "linear" => Ok(Gain::Linear),
            "exponential" => Ok(Gain::Exponential),
            other => Err(Error::Config(format!("unknown gain {other:?}"))),
        }
    }
}

/// `sum_{p=1..cutoff} gain(y_p) / log2(p + 1)`.
pub fn dcg(ranked: &[Grade], cutoff: Option<usize>, gain: Gain) -> f64 {
    let n = cutoff.map_or(ranked.len(), |c| c.min(ranked.len()));
    ranked[..n]
        .iter()
        .enumerate()
        .map(|(p, &y)| gain.of(y) / ((p + 2) as f64).log2())
        .sum()
}

/// DCG over the DCG of the label-sorted list; `None` when no label is positive
/// or the list is empty, in which case the query is left out of averages.
pub fn ndcg(ranked: &[Grade], cutoff: Option<usize>, gain: Gain) -> Option<f64> {
    let mut ideal = ranked.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, cutoff, gain);
    if idcg <= 0.0 {
        return None;
    }
    Some(dcg(ranked, cutoff, gain) / idcg)
}
