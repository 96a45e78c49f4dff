use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::image;
use super::manifest::{Label, Manifest};
use super::preprocess::{fit_square, Normalization};
use crate::error::{CectError, Result};
use crate::par;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A preprocessed image, `[3, R, R]` in `[0, 1]` (not yet normalized).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: Label,
    pub source_id: String,
}

/// Augmentation settings plus the stream they draw from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub config: AugmentConfig,
    pub seed: u64,
}

impl AugmentPlan {
    /// Stream for one sample in one epoch; independent of batch order and
    /// worker scheduling.
    pub fn rng(&self, epoch: usize, source_id: &str) -> Rng {
        Rng::new(self.seed)
            .fork("augment")
            .fork_index(epoch as u64)
            .fork(source_id)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    resolution: usize,
}

impl Dataset {
    /// Decodes and fits every record, in parallel.
    pub fn load(manifest: &Manifest, resolution: usize) -> Result<Self> {
        let recs = manifest.records();
        let samples = par::map_range(recs.len(), |i| -> Result<Sample> {
            let r = &recs[i];
            let img = image::read(&r.path)?;
            Ok(Sample {
                image: fit_square(&img, resolution),
                label: r.label,
                source_id: r.source_id.clone(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples, resolution })
    }

    pub fn from_samples(samples: Vec<Sample>, resolution: usize) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.image.shape() != [3, resolution, resolution]) {
            return Err(CectError::dim(
                "dataset",
                format!(
                    "sample {} has shape {:?}, expected [3, {resolution}, {resolution}]",
                    s.source_id,
                    s.image.shape()
                ),
            ));
        }
        Ok(Dataset { samples, resolution })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label.index()).collect()
    }

    /// Stacks the listed samples into a normalized `[B, 3, R, R]` batch,
    /// augmenting each one first when `augment` is given.
    pub fn batch(
        &self,
        indices: &[usize],
        norm: &Normalization,
        augment_with: Option<(&AugmentPlan, usize)>,
    ) -> (Tensor, Vec<usize>) {
        let r = self.resolution;
        let per = 3 * r * r;
        let images = par::map_range(indices.len(), |k| {
            let s = &self.samples[indices[k]];
            let mut img = match augment_with {
                Some((plan, epoch)) => augment(&s.image, &plan.config, &mut plan.rng(epoch, &s.source_id)),
                None => s.image.clone(),
            };
            norm.apply(img.data_mut(), r * r);
            img
        });
        let mut data = Vec::with_capacity(indices.len() * per);
        for img in &images {
            data.extend_from_slice(img.data());
        }
        let labels = indices.iter().map(|&i| self.samples[i].label.index()).collect();
        (
            Tensor::new(vec![indices.len(), 3, r, r], data).expect("batch size"),
            labels,
        )
    }

    /// Every sample in order, normalized, without augmentation.
    pub fn all(&self, norm: &Normalization) -> (Tensor, Vec<usize>) {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx, norm, None)
    }
}
