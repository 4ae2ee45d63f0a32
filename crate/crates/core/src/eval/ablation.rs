use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_method, Gain, Method};
use crate::datamodel::Dataset;
use crate::error::Result;
use crate::pipeline::{train_models, TrainSettings};
use crate::sie::Ablation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub ablation: Ablation,
    pub sie: f64,
    pub listrank: f64,
}

/// NDCG@all per behavior-feature setting, for the S-IE ranking and the list-wise ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

fn column_title(a: Ablation) -> &'static str {
    match a {
        Ablation::None => "no click & view",
        Ablation::ClickOnly => "only click",
        Ablation::ViewOnly => "only view",
        Ablation::Both => "both",
    }
}

impl AblationTable {
    pub fn get(&self, a: Ablation) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.ablation == a)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for c in &self.cells {
            s.push(',');
            s.push_str(c.ablation.name());
        }
        s.push('\n');
        for (name, pick) in [("SIE", 0), ("ListRank", 1)] {
            s.push_str(name);
            for c in &self.cells {
                let v = if pick == 0 { c.sie } else { c.listrank };
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<usize> = self.cells.iter().map(|c| column_title(c.ablation).len()).collect();
        write!(f, "| {:<8} |", "")?;
        for (c, w) in self.cells.iter().zip(&widths) {
            write!(f, " {:^w$} |", column_title(c.ablation))?;
        }
        writeln!(f)?;
        for (name, pick) in [("SIE", 0), ("ListRank", 1)] {
            write!(f, "| {name:<8} |")?;
            for (c, w) in self.cells.iter().zip(&widths) {
                let v = if pick == 0 { c.sie } else { c.listrank };
                write!(f, " {:^w$} |", format!("{v:.3}"))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Retrains both models once per grid cell with the matching behavior
/// segments zeroed, then evaluates both on the test split. Cells train in parallel.
pub fn ablation(dataset: &Dataset, settings: &TrainSettings, grid: &[Ablation], gain: Gain) -> Result<AblationTable> {
    let cells = grid
        .par_iter()
        .map(|&a| {
            let mut s = settings.clone();
            s.sie.features = a.mask();
            let models = train_models::<f64>(dataset, &s)?;
            let sie = evaluate_method(Method::Sie, dataset, Some(&models.sie.model), None, gain)?;
            let listrank = evaluate_method(
                Method::ListRank,
                dataset,
                Some(&models.sie.model),
                Some(&models.rank.model),
                gain,
            )?;
            Ok(AblationCell {
                ablation: a,
                sie: sie.ndcg_at_all,
                listrank: listrank.ndcg_at_all,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { cells })
}
