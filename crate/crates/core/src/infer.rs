//! Zero-shot and generalized zero-shot prediction, with calibrated
//! stacking, and the per-class accuracy metrics.
//!
//! Prediction uses the raw compatibility score `g(x)^T V a_c`; the softmax
//! over classes only matters for training.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::Dataset;
use crate::embedder::embed_batch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trainer::Model;

/// `V^T g(x)` for every row of `features` (`n x B_in`), as `n x M`.
pub fn embed_all(model: &Model, features: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut frozen = model.embedder.clone();
    frozen.train_hidden = false;
    frozen.train_projection = false;
    let vars = frozen.bind(&mut g);
    let x = g.constant(model.center(features));
    let h = embed_batch(&mut g, x, &vars)?;
    let e = g.matmul(h, vars.projection)?;
    Ok(g.value(e).clone())
}

fn score(embedding: &[f64], attributes: &Tensor, class: usize) -> f64 {
    embedding
        .iter()
        .enumerate()
        .map(|(r, &e)| e * attributes.at(r, class))
        .sum()
}

/// Highest-scoring candidate after subtracting `penalty(c)`; ties go to the
/// lowest class id.
fn argmax(
    embedding: &[f64],
    attributes: &Tensor,
    candidates: impl Iterator<Item = usize>,
    penalty: impl Fn(usize) -> f64,
) -> Result<usize> {
    if embedding.len() != attributes.rows() {
        return Err(Error::dim("predict", &[embedding.len()], attributes.shape()));
    }
    let mut ids: Vec<usize> = candidates.collect();
    ids.sort_unstable();
    ids.dedup();
    if let Some(&bad) = ids.iter().find(|&&c| c >= attributes.cols()) {
        return Err(Error::Data(format!("class {bad} has no attribute column")));
    }
    let mut best: Option<(usize, f64)> = None;
    for c in ids {
        let s = score(embedding, attributes, c) - penalty(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::Usage("no candidate classes to predict from".into()))
}

/// Best unseen class for an embedded sample.
pub fn predict_zsl(embedding: &[f64], attributes: &Tensor, unseen: &[usize]) -> Result<usize> {
    argmax(embedding, attributes, unseen.iter().copied(), |_| 0.0)
}

/// Best class over `seen ∪ unseen` after lowering seen-class scores by
/// `gamma`.
pub fn predict_gzsl(
    embedding: &[f64],
    attributes: &Tensor,
    seen: &[usize],
    unseen: &[usize],
    gamma: f64,
) -> Result<usize> {
    if !(gamma >= 0.0) {
        return Err(Error::Parameter(format!("gamma {gamma} must be >= 0")));
    }
    argmax(embedding, attributes, seen.iter().chain(unseen).copied(), |c| {
        if seen.contains(&c) {
            gamma
        } else {
            0.0
        }
    })
}

/// Mean over `classes` of per-class top-1 accuracy. Classes without
/// samples are left out of the mean (with a warning) and reported as
/// `None`.
pub fn per_class_accuracy(
    predictions: &[usize],
    labels: &[usize],
    classes: &[usize],
) -> (f64, BTreeMap<usize, Option<f64>>) {
    let mut hits: BTreeMap<usize, (usize, usize)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &l) in predictions.iter().zip(labels) {
        if let Some(h) = hits.get_mut(&l) {
            h.1 += 1;
            if p == l {
                h.0 += 1;
            }
        }
    }
    let mut table = BTreeMap::new();
    let (mut sum, mut n) = (0.0, 0);
    for (c, (ok, total)) in hits {
        if total == 0 {
            log::warn!("class {c} has no test samples; left out of the mean");
            table.insert(c, None);
        } else {
            let acc = ok as f64 / total as f64;
            sum += acc;
            n += 1;
            table.insert(c, Some(acc));
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, table)
}

pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s == 0.0 {
        0.0
    } else {
        2.0 * u * s / (u + s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GzslMetrics {
    pub u: f64,
    pub s: f64,
    pub h: f64,
    pub per_class: BTreeMap<usize, Option<f64>>,
}

/// Generalized zero-shot metrics of predictions over a mixed test set.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    seen: &[usize],
    unseen: &[usize],
) -> Result<GzslMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("compute_metrics", &[predictions.len()], &[labels.len()]));
    }
    let (u, mut per_class) = per_class_accuracy(predictions, labels, unseen);
    let (s, seen_table) = per_class_accuracy(predictions, labels, seen);
    per_class.extend(seen_table);
    Ok(GzslMetrics {
        u,
        s,
        h: harmonic_mean(u, s),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: usize,
    pub seen: bool,
    pub samples: usize,
    /// Unseen-only accuracy (unseen classes only).
    pub zsl: Option<f64>,
    pub gzsl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub t1: f64,
    pub u: f64,
    pub s: f64,
    pub h: f64,
    pub gamma: f64,
    pub per_class: Vec<ClassRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub u: f64,
    pub s: f64,
    pub h: f64,
    /// Set on the row with the highest `h` (the first, on ties).
    pub best: bool,
}

/// Embeddings of the test samples: unseen first, then seen.
struct TestSet {
    embeddings: Tensor,
    labels: Vec<usize>,
    n_unseen: usize,
}

impl TestSet {
    fn new(model: &Model, dataset: &Dataset) -> Result<Self> {
        let pooled = dataset.pooled_features();
        let idx: Vec<usize> = dataset
            .splits
            .test_unseen
            .iter()
            .chain(&dataset.splits.test_seen)
            .copied()
            .collect();
        if idx.is_empty() {
            return Err(Error::Data("dataset has no test samples".into()));
        }
        let rows: Vec<&[f64]> = idx.iter().map(|&i| pooled.row(i)).collect();
        let features = Tensor::from_rows(&rows)?;
        Ok(TestSet {
            embeddings: embed_all(model, &features)?,
            labels: idx.iter().map(|&i| dataset.labels[i]).collect(),
            n_unseen: dataset.splits.test_unseen.len(),
        })
    }

    fn gzsl(&self, dataset: &Dataset, gamma: f64) -> Result<Vec<usize>> {
        (0..self.labels.len())
            .map(|i| {
                predict_gzsl(
                    self.embeddings.row(i),
                    &dataset.attributes,
                    &dataset.seen,
                    &dataset.unseen,
                    gamma,
                )
            })
            .collect()
    }
}

/// T1 on the unseen test split; U, S and H on both test splits with
/// calibration `gamma`.
pub fn evaluate(model: &Model, dataset: &Dataset, gamma: f64) -> Result<EvalReport> {
    let test = TestSet::new(model, dataset)?;
    let unseen_labels = &test.labels[..test.n_unseen];
    let zsl: Vec<usize> = if dataset.unseen.is_empty() {
        Vec::new()
    } else {
        (0..test.n_unseen)
            .map(|i| predict_zsl(test.embeddings.row(i), &dataset.attributes, &dataset.unseen))
            .collect::<Result<_>>()?
    };
    let (t1, zsl_table) = per_class_accuracy(&zsl, unseen_labels, &dataset.unseen);
    let gzsl = test.gzsl(dataset, gamma)?;
    let m = compute_metrics(&gzsl, &test.labels, &dataset.seen, &dataset.unseen)?;

    let mut per_class = Vec::new();
    for &c in dataset.seen.iter().chain(&dataset.unseen) {
        per_class.push(ClassRow {
            class: c,
            seen: dataset.seen.contains(&c),
            samples: test.labels.iter().filter(|&&l| l == c).count(),
            zsl: zsl_table.get(&c).copied().flatten(),
            gzsl: m.per_class.get(&c).copied().flatten(),
        });
    }
    per_class.sort_by_key(|r| r.class);
    Ok(EvalReport {
        t1,
        u: m.u,
        s: m.s,
        h: m.h,
        gamma,
        per_class,
    })
}

/// U, S and H for each calibration value.
pub fn gamma_sweep(model: &Model, dataset: &Dataset, gammas: &[f64]) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() {
        return Err(Error::Parameter("gamma sweep needs at least one value".into()));
    }
    let test = TestSet::new(model, dataset)?;
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let preds = test.gzsl(dataset, gamma)?;
        let m = compute_metrics(&preds, &test.labels, &dataset.seen, &dataset.unseen)?;
        rows.push(SweepRow {
            gamma,
            u: m.u,
            s: m.s,
            h: m.h,
            best: false,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.h > rows[b].h { i } else { b });
    rows[best].best = true;
    Ok(rows)
}
