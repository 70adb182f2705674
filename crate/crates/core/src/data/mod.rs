//! Datasets, class hierarchies and training batches.

mod batch;
mod hierarchy;
mod io;
mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use batch::{sample_batch, Batch, BatchSampler, BatchSpec};
pub use hierarchy::{load_hierarchy, parse_hierarchy, Hierarchy};
pub use io::{load_dataset, save_dataset, Manifest};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::embedder::pool_grid;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `N x B_in`, or `N x h x w x B_in` for spatial grids.
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// `M x C`, one column per class.
    pub attributes: Tensor,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    pub splits: Splits,
    pub hierarchy: Option<Hierarchy>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        *self.features.shape().last().unwrap_or(&0)
    }

    /// Spatial extent `(h, w)` when features are grids.
    pub fn spatial(&self) -> Option<(usize, usize)> {
        match self.features.shape() {
            &[_, h, w, _] => Some((h, w)),
            _ => None,
        }
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.rows()
    }

    pub fn class_count(&self) -> usize {
        self.attributes.cols()
    }

    /// Features with grids mean-pooled, `N x B_in`.
    pub fn pooled_features(&self) -> Tensor {
        pool_grid(&self.features).expect("features validated on construction")
    }

    /// Macro label of every sample, when a hierarchy is attached.
    pub fn macro_labels(&self) -> Option<Vec<usize>> {
        self.hierarchy
            .as_ref()
            .map(|h| self.labels.iter().map(|&l| h.class_to_macro[l]).collect())
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        let shape = self.features.shape();
        let grid_ok = matches!(shape, [_, h, w, _] if *h > 0 && *w > 0);
        if !(shape.len() == 2 || grid_ok) || shape[0] != n {
            return Err(Error::Data(format!(
                "features have shape {shape:?} but there are {n} labels"
            )));
        }
        if self.attributes.rank() != 2 || self.attributes.cols() == 0 {
            return Err(Error::Data(format!(
                "attribute table has shape {:?}",
                self.attributes.shape()
            )));
        }
        if !self.features.is_finite() || !self.attributes.is_finite() {
            return Err(Error::Data("non-finite feature or attribute values".into()));
        }
        let c = self.class_count();
        if let Some((i, l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(Error::Data(format!(
                "label {l} of sample {i} out of range for {c} classes"
            )));
        }
        let seen: BTreeSet<usize> = self.seen.iter().copied().collect();
        let unseen: BTreeSet<usize> = self.unseen.iter().copied().collect();
        if seen.len() != self.seen.len() || unseen.len() != self.unseen.len() {
            return Err(Error::Data("repeated class id in the seen/unseen lists".into()));
        }
        if let Some(bad) = seen.iter().chain(&unseen).find(|&&k| k >= c) {
            return Err(Error::Data(format!(
                "class {bad} has no attribute column ({c} classes)"
            )));
        }
        if let Some(both) = seen.intersection(&unseen).next() {
            return Err(Error::Data(format!("class {both} is both seen and unseen")));
        }
        if let Some(l) = self.labels.iter().find(|l| !seen.contains(l) && !unseen.contains(l)) {
            return Err(Error::Data(format!("label {l} is neither seen nor unseen")));
        }
        let splits = [
            ("train", &self.splits.train),
            ("test_seen", &self.splits.test_seen),
            ("test_unseen", &self.splits.test_unseen),
        ];
        for (name, idx) in splits {
            if let Some(bad) = idx.iter().find(|&&i| i >= n) {
                return Err(Error::Data(format!("{name} index {bad} out of range for {n} samples")));
            }
        }
        if let Some(&i) = self.splits.train.iter().find(|&&i| !seen.contains(&self.labels[i])) {
            return Err(Error::Data(format!(
                "training sample {i} has label {}, which is not a seen class",
                self.labels[i]
            )));
        }
        if let Some(h) = &self.hierarchy {
            h.check_classes(c)?;
        }
        Ok(())
    }
}
