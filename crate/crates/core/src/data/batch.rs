use std::cell::Cell;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Batch composition: `n_pos` samples of the anchor class (the anchor
/// included) and `n_neg` samples of other seen classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub n_pos: usize,
    pub n_neg: usize,
}

impl BatchSpec {
    pub fn size(&self) -> usize {
        self.n_pos + self.n_neg
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub anchor_class: usize,
    /// Dataset indices: positives first, then negatives.
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub macro_labels: Option<Vec<usize>>,
}

/// Draws batches from the training split. The anchor class is uniform over
/// seen classes that have training samples.
pub struct BatchSampler<'a> {
    dataset: &'a Dataset,
    spec: BatchSpec,
    by_class: BTreeMap<usize, Vec<usize>>,
    classes: Vec<usize>,
    warned: Cell<bool>,
}

impl<'a> BatchSampler<'a> {
    pub fn new(dataset: &'a Dataset, spec: BatchSpec) -> Result<Self> {
        let train = &dataset.splits.train;
        if spec.n_pos == 0 {
            return Err(Error::Parameter("a batch needs at least one positive".into()));
        }
        if spec.size() > train.len() {
            return Err(Error::Parameter(format!(
                "batch of {} exceeds the {} training samples",
                spec.size(),
                train.len()
            )));
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in train {
            by_class.entry(dataset.labels[i]).or_default().push(i);
        }
        let classes = by_class.keys().copied().collect();
        Ok(BatchSampler {
            dataset,
            spec,
            by_class,
            classes,
            warned: Cell::new(false),
        })
    }

    pub fn spec(&self) -> BatchSpec {
        self.spec
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Batch> {
        let anchor_class = *self.classes.choose(rng).expect("training split is non-empty");
        let own = &self.by_class[&anchor_class];
        let mut indices = self.draw(own, self.spec.n_pos, rng, anchor_class);
        if self.spec.n_neg > 0 {
            let others: Vec<usize> = self
                .by_class
                .iter()
                .filter(|(&c, _)| c != anchor_class)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            if others.is_empty() {
                return Err(Error::Data(format!(
                    "no training samples outside class {anchor_class} to use as negatives"
                )));
            }
            indices.extend(self.draw(&others, self.spec.n_neg, rng, anchor_class));
        }
        let labels: Vec<usize> = indices.iter().map(|&i| self.dataset.labels[i]).collect();
        let macro_labels = self
            .dataset
            .hierarchy
            .as_ref()
            .map(|h| labels.iter().map(|&l| h.class_to_macro[l]).collect());
        Ok(Batch {
            anchor_class,
            indices,
            labels,
            macro_labels,
        })
    }

    /// `k` items of `pool`, without replacement when the pool is big enough.
    fn draw<R: Rng + ?Sized>(&self, pool: &[usize], k: usize, rng: &mut R, class: usize) -> Vec<usize> {
        if pool.len() >= k {
            return pool.choose_multiple(rng, k).copied().collect();
        }
        if !self.warned.replace(true) {
            log::warn!(
                "class {class} has only {} training samples for {k} draws; sampling with replacement",
                pool.len()
            );
        }
        (0..k).map(|_| *pool.choose(rng).expect("pool is non-empty")).collect()
    }
}

/// One batch from a fresh sampler.
pub fn sample_batch<R: Rng + ?Sized>(dataset: &Dataset, spec: BatchSpec, rng: &mut R) -> Result<Batch> {
    BatchSampler::new(dataset, spec)?.sample(rng)
}
