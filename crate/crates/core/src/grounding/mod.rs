//! Groundings of the four predicates and the environment that binds a batch
//! to the logic.
//!
//! Class membership is the softmax over seen classes of the bilinear score
//! `x^T V a_c`, read at the sample's label. Macroclass membership uses the
//! same score against a trainable macro attribute matrix, and the masked
//! variant zeroes a random subset of attribute rows first. Attribute
//! similarity is `sigmoid(alpha * cos(e1, e2))` between projected embeddings
//! (or an embedding and a class attribute vector).

mod eval;
mod mask;

use std::collections::BTreeMap;

pub use eval::{eval_formula, Status, Truth};
pub use mask::make_mask;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::fol::{Signature, Sort};
use crate::tensor::Tensor;

/// One predicate argument: the sort and the per-row values (sample indices
/// for images, ids for labels and attribute vectors).
#[derive(Debug, Clone, Copy)]
pub struct Arg<'a> {
    pub sort: Sort,
    pub values: &'a [usize],
}

/// A differentiable interpretation of a predicate symbol, evaluated on a
/// column of argument tuples.
pub trait Predicate {
    fn ground(&self, g: &mut Graph, env: &GroundingEnv, args: &[Arg]) -> Result<Var>;
}

/// `softmax_rows(x V attrs)`: class probabilities for each row of `x`.
pub fn class_scores(g: &mut Graph, x: Var, projection: Var, attrs: Var) -> Result<Var> {
    let e = g.matmul(x, projection)?;
    let s = g.matmul(e, attrs)?;
    g.softmax_rows(s)
}

/// `sigmoid(alpha * cos(e1, e2))` of two vectors; returns a scalar.
pub fn ground_has_same_attribute(g: &mut Graph, e1: Var, e2: Var, alpha: f64) -> Result<Var> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("similarity scale {alpha} must be positive")));
    }
    let c = g.cosine_similarity(e1, e2)?;
    let scaled = g.scale(c, alpha);
    Ok(g.sigmoid(scaled))
}

/// Everything a knowledge base needs to be evaluated on one batch.
pub struct GroundingEnv {
    features: Var,
    projection: Var,
    embeddings: Var,
    labels: Vec<usize>,
    macro_labels: Option<Vec<usize>>,
    attributes: Tensor,
    /// Transposed attributes, `C x M`, for similarity against class vectors.
    class_vectors: Var,
    seen: Vec<usize>,
    seen_column: BTreeMap<usize, usize>,
    seen_attrs: Var,
    macro_attrs: Option<Var>,
    masked_attrs: Option<Var>,
    mask: Option<Vec<f64>>,
    batch_classes: Vec<usize>,
    alpha: f64,
    signature: Signature,
    predicates: BTreeMap<String, Box<dyn Predicate>>,
}

impl GroundingEnv {
    /// Binds a batch of pooled features (`n x B`) with labels to the
    /// projection `V` (`B x M`) and the class attribute table (`M x C`).
    /// Softmaxes run over the `seen` classes in the given order.
    pub fn new(
        g: &mut Graph,
        features: Var,
        projection: Var,
        labels: Vec<usize>,
        attributes: &Tensor,
        seen: &[usize],
        alpha: f64,
    ) -> Result<Self> {
        let fshape = g.shape(features).to_vec();
        if fshape.len() != 2 || fshape[0] != labels.len() {
            return Err(Error::dim("grounding features", &fshape, &[labels.len()]));
        }
        if attributes.rank() != 2 || attributes.cols() == 0 {
            return Err(Error::dim("attribute table", attributes.shape(), &[]));
        }
        let (m, c) = (attributes.rows(), attributes.cols());
        if seen.is_empty() {
            return Err(Error::Config("no seen classes to score against".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::Parameter(format!("similarity scale {alpha} must be positive")));
        }
        if let Some(&bad) = labels.iter().chain(seen).find(|&&l| l >= c) {
            return Err(Error::Data(format!("class id {bad} out of range for {c} classes")));
        }
        let embeddings = g.matmul(features, projection)?;
        if g.shape(embeddings)[1] != m {
            return Err(Error::dim(
                "projection vs attributes",
                g.shape(projection),
                attributes.shape(),
            ));
        }
        let seen_column = seen.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let seen_table = select_columns(attributes, seen);
        let seen_attrs = g.constant(seen_table);
        let class_vectors = g.constant(attributes.transpose());
        let mut batch_classes = labels.clone();
        batch_classes.sort_unstable();
        batch_classes.dedup();

        let mut env = GroundingEnv {
            features,
            projection,
            embeddings,
            labels,
            macro_labels: None,
            attributes: attributes.clone(),
            class_vectors,
            seen: seen.to_vec(),
            seen_column,
            seen_attrs,
            macro_attrs: None,
            masked_attrs: None,
            mask: None,
            batch_classes,
            alpha,
            signature: Signature::standard(),
            predicates: BTreeMap::new(),
        };
        env.register("isOfClass", Box::new(IsOfClass));
        env.register("isOfMacro", Box::new(IsOfMacro));
        env.register("isOfClassMasked", Box::new(IsOfClassMasked));
        env.register("hasSameAttribute", Box::new(HasSameAttribute));
        Ok(env)
    }

    /// Adds the class hierarchy: per-sample macro labels and the trainable
    /// macro attribute matrix (`M x Q`).
    pub fn with_macros(mut self, g: &Graph, macro_labels: Vec<usize>, macro_attrs: Var) -> Result<Self> {
        let shape = g.shape(macro_attrs);
        if shape.len() != 2 || shape[0] != self.attributes.rows() || shape[1] == 0 {
            return Err(Error::dim("macro attributes", shape, self.attributes.shape()));
        }
        if macro_labels.len() != self.labels.len() {
            return Err(Error::dim("macro labels", &[macro_labels.len()], &[self.labels.len()]));
        }
        if let Some(&bad) = macro_labels.iter().find(|&&q| q >= shape[1]) {
            return Err(Error::Data(format!(
                "macro id {bad} out of range for {} macroclasses",
                shape[1]
            )));
        }
        self.macro_labels = Some(macro_labels);
        self.macro_attrs = Some(macro_attrs);
        Ok(self)
    }

    /// Sets the binary attribute mask used by `isOfClassMasked`.
    pub fn with_mask(mut self, g: &mut Graph, mask: Vec<f64>) -> Result<Self> {
        let m = self.attributes.rows();
        if mask.len() != m {
            return Err(Error::dim("attribute mask", &[mask.len()], &[m]));
        }
        let mut table = select_columns(&self.attributes, &self.seen);
        let s = table.cols();
        for (i, x) in table.data_mut().iter_mut().enumerate() {
            *x *= mask[i / s];
        }
        self.masked_attrs = Some(g.constant(table));
        self.mask = Some(mask);
        Ok(self)
    }

    /// Replaces the signature used to resolve variable sorts.
    pub fn set_signature(&mut self, signature: Signature) {
        self.signature = signature;
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn register(&mut self, name: &str, predicate: Box<dyn Predicate>) {
        self.predicates.insert(name.to_string(), predicate);
    }

    pub fn predicate(&self, name: &str) -> Option<&dyn Predicate> {
        self.predicates.get(name).map(|p| p.as_ref())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> Var {
        self.features
    }

    pub fn projection(&self) -> Var {
        self.projection
    }

    /// Projected embeddings `x V`, `n x M`.
    pub fn embeddings(&self) -> Var {
        self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn macro_labels(&self) -> Option<&[usize]> {
        self.macro_labels.as_deref()
    }

    pub fn attributes(&self) -> &Tensor {
        &self.attributes
    }

    pub fn seen(&self) -> &[usize] {
        &self.seen
    }

    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }

    pub fn macro_count(&self, g: &Graph) -> usize {
        self.macro_attrs.map_or(0, |v| g.shape(v)[1])
    }

    /// Distinct labels of the batch, ascending.
    pub fn batch_classes(&self) -> &[usize] {
        &self.batch_classes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn seen_columns(&self, classes: &[usize]) -> Result<Vec<usize>> {
        classes
            .iter()
            .map(|c| {
                self.seen_column
                    .get(c)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("class {c} is not among the scored classes")))
            })
            .collect()
    }
}

fn select_columns(t: &Tensor, cols: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..t.rows())
        .map(|r| cols.iter().map(|&c| t.at(r, c)).collect())
        .collect();
    Tensor::from_rows(&rows).expect("rows have equal length")
}

/// Picks `probs[samples[k], cols[k]]` for every row `k`.
fn pick(g: &mut Graph, probs: Var, samples: &[usize], cols: &[usize]) -> Result<Var> {
    let width = g.shape(probs)[1];
    let index = samples.iter().zip(cols).map(|(&i, &c)| i * width + c).collect();
    g.gather(probs, index)
}

fn expect_args(name: &str, args: &[Arg], sorts: &[&[Sort]]) -> Result<()> {
    if args.len() != sorts.len() {
        return Err(Error::Usage(format!("{name} takes {} arguments", sorts.len())));
    }
    for (a, allowed) in args.iter().zip(sorts) {
        if !allowed.contains(&a.sort) {
            return Err(Error::Usage(format!(
                "{name}: argument of sort {} not accepted",
                a.sort.name()
            )));
        }
    }
    Ok(())
}

fn check_samples(env: &GroundingEnv, samples: &[usize]) -> Result<()> {
    match samples.iter().find(|&&i| i >= env.len()) {
        Some(bad) => Err(Error::Data(format!(
            "sample {bad} out of range for a batch of {}",
            env.len()
        ))),
        None => Ok(()),
    }
}

/// Truth of `isOfClass(x_k, l_k)` for every row `k`.
pub fn ground_is_of_class(g: &mut Graph, env: &GroundingEnv, samples: &[usize], classes: &[usize]) -> Result<Var> {
    check_samples(env, samples)?;
    let cols = env.seen_columns(classes)?;
    let probs = class_scores(g, env.features, env.projection, env.seen_attrs)?;
    pick(g, probs, samples, &cols)
}

/// Truth of `isOfMacro(x_k, q_k)`: softmax over macroclasses.
pub fn ground_is_of_macro(g: &mut Graph, env: &GroundingEnv, samples: &[usize], macros: &[usize]) -> Result<Var> {
    check_samples(env, samples)?;
    let Some(macro_attrs) = env.macro_attrs else {
        return Err(Error::Config(
            "isOfMacro needs a class hierarchy; disable the macroclass axiom instead".into(),
        ));
    };
    let q = g.shape(macro_attrs)[1];
    if let Some(bad) = macros.iter().find(|&&m| m >= q) {
        return Err(Error::Data(format!("macro id {bad} out of range for {q} macroclasses")));
    }
    let probs = class_scores(g, env.features, env.projection, macro_attrs)?;
    pick(g, probs, samples, macros)
}

/// Truth of `isOfClassMasked(x_k, l_k)`: class membership with the masked
/// attribute rows set to zero.
pub fn ground_is_of_class_masked(
    g: &mut Graph,
    env: &GroundingEnv,
    samples: &[usize],
    classes: &[usize],
) -> Result<Var> {
    check_samples(env, samples)?;
    let Some(masked) = env.masked_attrs else {
        return Err(Error::Config("isOfClassMasked needs an attribute mask".into()));
    };
    let cols = env.seen_columns(classes)?;
    let probs = class_scores(g, env.features, env.projection, masked)?;
    pick(g, probs, samples, &cols)
}

fn vectors_for(g: &mut Graph, env: &GroundingEnv, arg: &Arg) -> Result<Var> {
    match arg.sort {
        Sort::Image => {
            check_samples(env, arg.values)?;
            g.gather_rows(env.embeddings, arg.values)
        }
        Sort::AttributeVector => {
            let c = env.attributes.cols();
            if let Some(bad) = arg.values.iter().find(|&&v| v >= c) {
                return Err(Error::Data(format!("class {bad} out of range for {c} classes")));
            }
            g.gather_rows(env.class_vectors, arg.values)
        }
        other => Err(Error::Usage(format!("no vector for sort {}", other.name()))),
    }
}

/// Truth of `hasSameAttribute(u_k, v_k)` for every row `k`.
pub fn ground_has_same_attribute_rows(g: &mut Graph, env: &GroundingEnv, u: &Arg, v: &Arg) -> Result<Var> {
    let a = vectors_for(g, env, u)?;
    let b = vectors_for(g, env, v)?;
    let c = g.cosine_rows(a, b)?;
    let scaled = g.scale(c, env.alpha);
    Ok(g.sigmoid(scaled))
}

struct IsOfClass;
struct IsOfMacro;
struct IsOfClassMasked;
struct HasSameAttribute;

const CLASS: &[Sort] = &[Sort::ClassLabel, Sort::SeenClassLabel];

impl Predicate for IsOfClass {
    fn ground(&self, g: &mut Graph, env: &GroundingEnv, args: &[Arg]) -> Result<Var> {
        expect_args("isOfClass", args, &[&[Sort::Image], CLASS])?;
        ground_is_of_class(g, env, args[0].values, args[1].values)
    }
}

impl Predicate for IsOfMacro {
    fn ground(&self, g: &mut Graph, env: &GroundingEnv, args: &[Arg]) -> Result<Var> {
        expect_args("isOfMacro", args, &[&[Sort::Image], &[Sort::MacroLabel]])?;
        ground_is_of_macro(g, env, args[0].values, args[1].values)
    }
}

impl Predicate for IsOfClassMasked {
    fn ground(&self, g: &mut Graph, env: &GroundingEnv, args: &[Arg]) -> Result<Var> {
        expect_args("isOfClassMasked", args, &[&[Sort::Image], CLASS])?;
        ground_is_of_class_masked(g, env, args[0].values, args[1].values)
    }
}

impl Predicate for HasSameAttribute {
    fn ground(&self, g: &mut Graph, env: &GroundingEnv, args: &[Arg]) -> Result<Var> {
        let vec_sorts: &[Sort] = &[Sort::Image, Sort::AttributeVector];
        expect_args("hasSameAttribute", args, &[vec_sorts, vec_sorts])?;
        ground_has_same_attribute_rows(g, env, &args[0], &args[1])
    }
}
