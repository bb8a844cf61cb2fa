//! Functions observed as unordered sets of coordinate/value pairs.
//!
//! Coordinates live in `[0, 1]^d`. Regular grids use the align-corners
//! convention: a side of `r > 1` points hits both ends of the unit interval,
//! and a single point sits at `0.5`.

mod io;
mod resample;
mod sampler;
mod synth;

use std::collections::BTreeSet;

pub use io::{
    mnist_dataset, read_idx_images, read_idx_labels, read_jsonl, write_jsonl, IdxImages,
};
pub use resample::{
    bilinear_resample, grid_coord, grid_to_pointset, linear_resample, Grid, Resampler,
};
pub use sampler::{sample_resolution_batch, Batch, ResolutionSampler, ResolutionSet};
pub use synth::{synth_sine_dataset, synth_texture_dataset, SineClass, SynthConfig};

use crate::error::{Error, Result};

/// One function's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub id: String,
    pub label: Option<u32>,
    d: usize,
    m: usize,
    coords: Vec<f32>,
    values: Vec<f32>,
}

impl PointSet {
    /// `coords` is `I x d` row-major, `values` is `I x m` row-major.
    pub fn new(
        id: impl Into<String>,
        label: Option<u32>,
        d: usize,
        m: usize,
        coords: Vec<f32>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let id = id.into();
        if d == 0 || m == 0 {
            return Err(Error::Dimension(format!("point set {id}: d={d}, m={m}")));
        }
        if !coords.len().is_multiple_of(d) || !values.len().is_multiple_of(m) {
            return Err(Error::Dimension(format!(
                "point set {id}: coordinate/value buffers are not multiples of d={d}, m={m}"
            )));
        }
        let n = coords.len() / d;
        if n == 0 {
            return Err(Error::EmptySet(format!("point set {id} has no points")));
        }
        if values.len() / m != n {
            return Err(Error::Dimension(format!(
                "point set {id}: {n} coordinates but {} values",
                values.len() / m
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidArgument(format!(
                "point set {id}: coordinate {bad} outside [0, 1]"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "point set {id}: non-finite value"
            )));
        }
        Ok(Self {
            id,
            label,
            d,
            m,
            coords,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coords(&self) -> &[f32] {
        &self.coords
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn coord(&self, i: usize) -> &[f32] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn value(&self, i: usize) -> &[f32] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    /// Reorders the points by `order` (a permutation of `0..len`, or any
    /// index list when building repeated sets).
    pub fn reindexed(&self, order: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(order.len() * self.d);
        let mut values = Vec::with_capacity(order.len() * self.m);
        for &i in order {
            coords.extend_from_slice(self.coord(i));
            values.extend_from_slice(self.value(i));
        }
        Self {
            coords,
            values,
            ..self.clone()
        }
    }

    /// The full point set repeated `times` times.
    pub fn repeated(&self, times: usize) -> Self {
        let order: Vec<usize> = (0..times).flat_map(|_| 0..self.len()).collect();
        self.reindexed(&order)
    }

    pub fn without_label(&self) -> Self {
        Self {
            label: None,
            ..self.clone()
        }
    }
}

/// A collection of point sets sharing `d` and `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<PointSet>,
    d: usize,
    m: usize,
}

impl Dataset {
    pub fn new(samples: Vec<PointSet>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::EmptySet("dataset has no samples".into()))?;
        let (d, m) = (first.d, first.m);
        for s in &samples {
            if s.d != d || s.m != m {
                return Err(Error::Dimension(format!(
                    "sample {} has (d, m) = ({}, {}), dataset has ({d}, {m})",
                    s.id, s.d, s.m
                )));
            }
        }
        Ok(Self { samples, d, m })
    }

    pub fn samples(&self) -> &[PointSet] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Ground-truth labels, if every sample carries one.
    pub fn labels(&self) -> Option<Vec<u32>> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Number of distinct labels, if labeled.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels()
            .map(|l| l.into_iter().collect::<BTreeSet<_>>().len())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// A view that hides labels; the training path only accepts this.
    pub fn unlabeled(&self) -> UnlabeledView<'_> {
        UnlabeledView { inner: self }
    }
}

/// Label-free access to a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct UnlabeledView<'a> {
    inner: &'a Dataset,
}

impl<'a> UnlabeledView<'a> {
    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }

    pub fn m(&self) -> usize {
        self.inner.m
    }

    /// The `n`-th sample with its label removed.
    pub fn sample(&self, n: usize) -> PointSet {
        self.inner.samples[n].without_label()
    }
}
