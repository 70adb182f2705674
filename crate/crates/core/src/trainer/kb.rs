use rand::Rng;

use super::config::TrainConfig;
use super::model::ModelVars;
use crate::autodiff::{Graph, Var};
use crate::embedder::embed_batch;
use crate::error::{Error, Result};
use crate::fol::Axiom;
use crate::fuzzy::{sat_aggregate, FuzzyConfig};
use crate::grounding::{eval_formula, make_mask, GroundingEnv, Status};
use crate::tensor::Tensor;

/// The samples of one batch together with the class tables they are
/// scored against.
#[derive(Debug, Clone)]
pub struct KbBatch<'a> {
    /// Pooled input features, `n x B_in`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub macro_labels: Option<Vec<usize>>,
    pub attributes: &'a Tensor,
    pub seen: &'a [usize],
}

impl<'a> KbBatch<'a> {
    /// Gathers `indices` of a dataset whose pooled features are `pooled`.
    pub fn gather(dataset: &'a crate::data::Dataset, pooled: &Tensor, indices: &[usize]) -> Self {
        let rows: Vec<&[f64]> = indices.iter().map(|&i| pooled.row(i)).collect();
        let labels: Vec<usize> = indices.iter().map(|&i| dataset.labels[i]).collect();
        let macro_labels = dataset
            .hierarchy
            .as_ref()
            .map(|h| labels.iter().map(|&l| h.class_to_macro[l]).collect());
        KbBatch {
            features: Tensor::from_rows(&rows).expect("rows share the feature width"),
            labels,
            macro_labels,
            attributes: &dataset.attributes,
            seen: &dataset.seen,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundedAxiom {
    pub name: String,
    /// Scalar truth on the graph.
    pub truth: Var,
}

/// The axioms grounded on one batch.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub axioms: Vec<GroundedAxiom>,
    /// Axioms whose quantifiers had nothing to range over in this batch.
    pub omitted: Vec<String>,
    pub fuzzy: FuzzyConfig,
    pub mask: Option<Vec<f64>>,
}

impl KnowledgeBase {
    pub fn truths(&self, g: &Graph) -> Vec<(String, f64)> {
        self.axioms
            .iter()
            .map(|a| (a.name.clone(), g.value(a.truth).item()))
            .collect()
    }
}

/// Grounds every enabled axiom on `batch`. A fresh attribute mask is drawn
/// whenever an axiom mentions the masked membership predicate.
pub fn build_kb<R: Rng + ?Sized>(
    g: &mut Graph,
    batch: &KbBatch,
    axioms: &[Axiom],
    vars: &ModelVars,
    config: &TrainConfig,
    fuzzy: &FuzzyConfig,
    rng: &mut R,
) -> Result<KnowledgeBase> {
    if batch.labels.is_empty() {
        return Err(Error::Usage("cannot build a knowledge base on an empty batch".into()));
    }
    let active: Vec<&Axiom> = axioms.iter().filter(|a| config.axiom_flags.enabled(&a.name)).collect();
    let uses = |pred: &str| active.iter().any(|a| a.formula.predicates().contains(&pred));

    let x = g.constant(batch.features.clone());
    let emb = embed_batch(g, x, &vars.embedder)?;
    let mut env = GroundingEnv::new(
        g,
        emb,
        vars.embedder.projection,
        batch.labels.clone(),
        batch.attributes,
        batch.seen,
        config.alpha,
    )?;
    if uses("isOfMacro") {
        match (&batch.macro_labels, vars.macro_attrs) {
            (Some(q), Some(attrs)) => env = env.with_macros(g, q.clone(), attrs)?,
            _ => {
                return Err(Error::Config(
                    "the macroclass axiom needs a class hierarchy; set axiom_flags.phi2 to false".into(),
                ))
            }
        }
    }
    let mask = if uses("isOfClassMasked") {
        let m = batch.attributes.rows();
        let mask = make_mask(m, config.k_mask, rng)?;
        env = env.with_mask(g, mask.clone())?;
        Some(mask)
    } else {
        None
    };

    let mut kb = KnowledgeBase {
        axioms: Vec::new(),
        omitted: Vec::new(),
        fuzzy: *fuzzy,
        mask,
    };
    for ax in active {
        let t = eval_formula(g, &ax.formula, &env, fuzzy)?;
        if t.status == Status::Normal {
            kb.axioms.push(GroundedAxiom {
                name: ax.name.clone(),
                truth: t.value,
            });
        } else {
            kb.omitted.push(ax.name.clone());
        }
    }
    Ok(kb)
}

/// `1 - sat`, with sat the universal aggregation of the axiom truths.
pub fn kb_loss(g: &mut Graph, kb: &KnowledgeBase) -> Result<Var> {
    if kb.axioms.is_empty() {
        return Err(Error::Config("knowledge base has no axioms to satisfy".into()));
    }
    let parts = kb
        .axioms
        .iter()
        .map(|a| g.reshape(a.truth, vec![1]))
        .collect::<Result<Vec<_>>>()?;
    let truths = g.concat(&parts);
    let sat = sat_aggregate(g, truths, kb.fuzzy.p_forall)?;
    Ok(g.one_minus(sat))
}
