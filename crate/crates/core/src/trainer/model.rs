use crate::autodiff::{Graph, Var};
use crate::data::Dataset;
use crate::embedder::{init_params, init_params_hidden, EmbedderParams, EmbedderVars};
use crate::error::Result;
use crate::tensor::Tensor;

/// Everything training updates: the feature head and, with a hierarchy,
/// the macroclass attribute vectors (`M x Q`). `input_mean` is fixed at
/// initialisation and subtracted from every pooled input.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub embedder: EmbedderParams,
    pub macro_attrs: Option<Tensor>,
    pub input_mean: Option<Tensor>,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub embedder: EmbedderVars,
    pub macro_attrs: Option<Var>,
}

impl Model {
    /// Random head for `dataset`; macro attributes start at the mean
    /// attribute vector of their member classes.
    pub fn init(dataset: &Dataset, hidden_dim: Option<usize>, seed: u64) -> Result<Self> {
        let (b_in, m) = (dataset.input_dim(), dataset.attribute_dim());
        let embedder = match hidden_dim {
            Some(b) => init_params_hidden(b_in, b, m, seed)?,
            None => init_params(b_in, b_in, m, seed)?,
        };
        let macro_attrs = dataset.hierarchy.as_ref().map(|h| {
            let q = h.macro_count();
            let mut sums = vec![0.0; m * q];
            let mut counts = vec![0usize; q];
            for (c, &mq) in h.class_to_macro.iter().enumerate() {
                counts[mq] += 1;
                for r in 0..m {
                    sums[r * q + mq] += dataset.attributes.at(r, c);
                }
            }
            for (i, s) in sums.iter_mut().enumerate() {
                *s /= counts[i % q].max(1) as f64;
            }
            Tensor::new(vec![m, q], sums).expect("shape matches data")
        });
        Ok(Model {
            embedder,
            macro_attrs,
            input_mean: None,
        })
    }

    /// Sets `input_mean` to the mean pooled feature of the training split.
    pub fn center_on(&mut self, dataset: &Dataset) {
        let pooled = dataset.pooled_features();
        let b = pooled.cols();
        let train = &dataset.splits.train;
        let mut mean = vec![0.0; b];
        for &i in train {
            for (m, x) in mean.iter_mut().zip(pooled.row(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= train.len().max(1) as f64;
        }
        self.input_mean = Some(Tensor::vector(mean));
    }

    /// `features` (`n x B_in`) minus `input_mean`, if set.
    pub fn center(&self, features: &Tensor) -> Tensor {
        let mut out = features.clone();
        if let Some(mean) = &self.input_mean {
            let b = mean.len();
            for (i, x) in out.data_mut().iter_mut().enumerate() {
                *x -= mean.data()[i % b];
            }
        }
        out
    }

    /// Names and tensors in a fixed order; trainable ones first.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::new();
        if let Some(h) = &self.embedder.hidden {
            out.push(("hidden.weight", &h.weight));
            out.push(("hidden.bias", &h.bias));
        }
        out.push(("projection", &self.embedder.projection));
        if let Some(q) = &self.macro_attrs {
            out.push(("macro_attributes", q));
        }
        if let Some(m) = &self.input_mean {
            out.push(("input_mean", m));
        }
        out
    }

    /// Trainable tensors.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.embedder.tensors_mut();
        if let Some(q) = &mut self.macro_attrs {
            out.push(q);
        }
        out
    }

    pub fn bind(&self, g: &mut Graph) -> ModelVars {
        let embedder = self.embedder.bind(g);
        let macro_attrs = self.macro_attrs.as_ref().map(|t| g.param(t.clone()));
        ModelVars { embedder, macro_attrs }
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Every tensor rounded to `f32` precision.
    pub fn round_f32(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            *t = t.round_f32();
        }
        if let Some(m) = &mut out.input_mean {
            *m = m.round_f32();
        }
        out
    }
}

impl ModelVars {
    /// Graph leaves in the order of [`Model::tensors_mut`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.embedder.all();
        out.extend(self.macro_attrs);
        out
    }
}
