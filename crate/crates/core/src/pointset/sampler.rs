use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PointSet, Resampler};
use crate::error::{Error, Result};

/// Resolutions used for training and the extra ones used only at evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionSet {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ResolutionSet {
    pub fn new(train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("training resolutions are empty".into()));
        }
        if train.iter().chain(&test).any(|&r| r == 0) {
            return Err(Error::InvalidArgument("resolutions must be positive".into()));
        }
        let overlap: Vec<usize> = test.iter().copied().filter(|r| train.contains(r)).collect();
        if !overlap.is_empty() {
            log::warn!("test resolutions {overlap:?} are also training resolutions");
        }
        Ok(Self { train, test })
    }

    pub fn is_seen(&self, r: usize) -> bool {
        self.train.contains(&r)
    }

    /// Training resolutions followed by held-out ones, without repeats.
    pub fn all(&self) -> Vec<usize> {
        let mut out = self.train.clone();
        for &r in &self.test {
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }
}

/// A batch whose members share one resolution.
#[derive(Debug, Clone)]
pub struct Batch {
    pub resolution: usize,
    pub indices: Vec<usize>,
    pub samples: Vec<PointSet>,
}

/// Draws a resolution uniformly from the training set for every batch.
#[derive(Debug, Clone)]
pub struct ResolutionSampler<R> {
    r_train: Vec<usize>,
    rng: R,
}

impl<R: Rng> ResolutionSampler<R> {
    pub fn new(r_train: Vec<usize>, rng: R) -> Result<Self> {
        if r_train.is_empty() {
            return Err(Error::InvalidArgument("training resolutions are empty".into()));
        }
        Ok(Self { r_train, rng })
    }

    pub fn draw_resolution(&mut self) -> usize {
        self.r_train[self.rng.random_range(0..self.r_train.len())]
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    /// Resamples the given members at a freshly drawn resolution.
    pub fn batch(&mut self, source: &Resampler, indices: &[usize]) -> Result<Batch> {
        let resolution = self.draw_resolution();
        let samples = indices
            .iter()
            .map(|&n| source.resample(n, resolution))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            resolution,
            indices: indices.to_vec(),
            samples,
        })
    }
}

/// Draws `batch_size` distinct members and one resolution from `r_train`.
pub fn sample_resolution_batch<R: Rng>(
    source: &Resampler,
    r_train: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    if r_train.is_empty() {
        return Err(Error::InvalidArgument("training resolutions are empty".into()));
    }
    if batch_size == 0 || batch_size > source.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {batch_size} for {} samples",
            source.len()
        )));
    }
    let resolution = r_train[rng.random_range(0..r_train.len())];
    let indices = sample(rng, source.len(), batch_size).into_vec();
    let samples = indices
        .iter()
        .map(|&n| source.resample(n, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        resolution,
        indices,
        samples,
    })
}
