use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MatrixRecord, Parameterized, Scalar};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Versioned JSON document holding every named parameter table of a model.
///
/// Tables live in a `BTreeMap` so the encoded field order is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub tables: BTreeMap<String, MatrixRecord>,
}

impl ModelDocument {
    pub fn from_model<T: Scalar, M: Parameterized<T>>(model: &M) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tables: model
                .params()
                .into_iter()
                .map(|(n, m)| (n, MatrixRecord::from(m)))
                .collect(),
        }
    }

    /// Overwrites the parameters of `model`, whose shapes must already match.
    pub fn load_into<T: Scalar, M: Parameterized<T>>(&self, model: &mut M) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format_version {}",
                self.format_version
            )));
        }
        let params = model.params_mut();
        if params.len() != self.tables.len() {
            return Err(Error::Data(format!(
                "model document has {} tables, model expects {}",
                self.tables.len(),
                params.len()
            )));
        }
        for (name, m) in params {
            let rec = self
                .tables
                .get(&name)
                .ok_or_else(|| Error::Data(format!("model document lacks table {name}")))?;
            if (rec.rows, rec.cols) != m.shape() {
                return Err(Error::Data(format!(
                    "table {name} is {}x{}, model expects {:?}",
                    rec.rows,
                    rec.cols,
                    m.shape()
                )));
            }
            *m = rec.to_matrix()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
