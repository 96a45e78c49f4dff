use serde::{Deserialize, Serialize};

use super::emit::Table;
use super::tsne::{tsne, TsneConfig};
use crate::data::Label;
use crate::error::{CectError, Result};

/// Which held-out subset a feature row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Validation,
    Test,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Validation => "validation",
            Subset::Test => "test",
        }
    }
}

/// Penultimate features, one row per image.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    width: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
    subsets: Vec<Subset>,
}

impl EmbeddingSet {
    pub fn new(width: usize, features: Vec<f64>, labels: Vec<Label>, subsets: Vec<Subset>) -> Result<Self> {
        let n = labels.len();
        if width == 0 || features.len() != n * width || subsets.len() != n {
            return Err(CectError::dim(
                "embeddings",
                format!(
                    "{} values, {n} labels and {} subset tags for width {width}",
                    features.len(),
                    subsets.len()
                ),
            ));
        }
        if n < 2 {
            return Err(CectError::Validation("an embedding set needs at least two rows".into()));
        }
        Ok(EmbeddingSet {
            width,
            features,
            labels,
            subsets,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn subsets(&self) -> &[Subset] {
        &self.subsets
    }

    /// `f0..f{d-1},label` for the rows of one subset, label as its index.
    pub fn features_table(&self, subset: Subset) -> Table {
        let mut header: Vec<String> = (0..self.width).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        let rows = (0..self.len())
            .filter(|&i| self.subsets[i] == subset)
            .map(|i| {
                let mut row: Vec<String> = self.features[i * self.width..(i + 1) * self.width]
                    .iter()
                    .map(|v| v.to_string())
                    .collect();
                row.push(self.labels[i].index().to_string());
                row
            })
            .collect();
        Table { header, rows }
    }

    /// Two-dimensional projection of every row, as `x,y,subset,label`.
    pub fn project(&self, cfg: &TsneConfig) -> Result<(Table, super::tsne::TsneResult)> {
        let res = tsne(&self.features, self.len(), self.width, cfg)?;
        let rows = res
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                vec![
                    p[0].to_string(),
                    p[1].to_string(),
                    self.subsets[i].name().to_string(),
                    self.labels[i].index().to_string(),
                ]
            })
            .collect();
        let table = Table {
            header: ["x", "y", "subset", "label"].iter().map(|s| s.to_string()).collect(),
            rows,
        };
        Ok((table, res))
    }
}
