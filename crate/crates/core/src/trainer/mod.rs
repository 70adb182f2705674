//! Knowledge-base construction, the satisfiability loss and the training
//! loop.

mod config;
mod kb;
mod model;
mod optim;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{lr_schedule, AxiomFlags, Phase, TrainConfig};
pub use kb::{build_kb, kb_loss, GroundedAxiom, KbBatch, KnowledgeBase};
pub use model::{Model, ModelVars};
pub use optim::{optimizer_step, AdamState, ADAM_EPS, BETA1, BETA2, CLIP_NORM};

use crate::autodiff::Graph;
use crate::checkpoint::Checkpoint;
use crate::data::{BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::fol::{validate_all, Axiom, Signature};
use crate::fuzzy::{schedule_p, FuzzyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    /// Mean batch satisfiability, `1 - loss`.
    pub sat: f64,
    /// Mean truth of each axiom over the batches where it was grounded.
    pub axioms: BTreeMap<String, f64>,
    pub p: f64,
    pub lr: f64,
    pub phase: Phase,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Why training stopped early, if it did.
    pub aborted: Option<String>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// The fuzzy semantics in force during `epoch`.
pub fn fuzzy_at(epoch: usize, config: &TrainConfig) -> FuzzyConfig {
    FuzzyConfig::with_p(schedule_p(epoch, &config.p_schedule))
}

fn uses(axioms: &[Axiom], config: &TrainConfig, pred: &str) -> bool {
    axioms
        .iter()
        .filter(|a| config.axiom_flags.enabled(&a.name))
        .any(|a| a.formula.predicates().contains(&pred))
}

/// Trains on the training split. Each step samples a batch, grounds the
/// knowledge base on it and takes one Adam step on `1 - sat`; an epoch is
/// `ceil(N_train / batch size)` steps. A non-finite loss stops training
/// and keeps the parameters from before that step.
pub fn train(dataset: &Dataset, axioms: &[Axiom], config: &TrainConfig) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    dataset.validate()?;
    validate_all(axioms, &Signature::standard())?;
    if config.k_mask > dataset.attribute_dim() {
        return Err(Error::Config(format!(
            "k_mask {} exceeds the {} attributes",
            config.k_mask,
            dataset.attribute_dim()
        )));
    }
    let mut model = Model::init(dataset, config.hidden_dim, config.seed)?;
    if config.center_inputs {
        model.center_on(dataset);
    }
    if !uses(axioms, config, "isOfMacro") {
        model.macro_attrs = None;
    } else if dataset.hierarchy.is_none() {
        return Err(Error::Config(
            "the macroclass axiom needs a class hierarchy; set axiom_flags.phi2 to false".into(),
        ));
    }

    let pooled = model.center(&dataset.pooled_features());
    let sampler = BatchSampler::new(dataset, config.batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let steps = dataset.splits.train.len().div_ceil(config.batch.size());
    let mut state = AdamState::new();
    let mut history = TrainHistory::default();
    let mut fuzzy = fuzzy_at(0, config);

    'epochs: for epoch in 0..config.epochs {
        fuzzy = fuzzy_at(epoch, config);
        let phase = config.phase(epoch);
        let lr = match phase {
            Phase::Pretrain => lr_schedule(epoch, phase, config),
            Phase::Finetune => lr_schedule(epoch - config.pretrain_epochs, phase, config),
        };
        model.embedder.train_hidden = phase == Phase::Finetune && model.embedder.hidden.is_some();

        let mut loss_sum = 0.0;
        let mut truth_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut skipped = 0;
        for _ in 0..steps {
            let batch = sampler.sample(&mut rng)?;
            let kb_batch = KbBatch::gather(dataset, &pooled, &batch.indices);
            let mut g = Graph::new();
            let vars = model.bind(&mut g);
            let kb = build_kb(&mut g, &kb_batch, axioms, &vars, config, &fuzzy, &mut rng)?;
            let loss = kb_loss(&mut g, &kb)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                history.aborted = Some(format!("non-finite loss at epoch {epoch}"));
                log::error!("non-finite loss at epoch {epoch}; stopping");
                break 'epochs;
            }
            loss_sum += value;
            for (name, t) in kb.truths(&g) {
                let e = truth_sums.entry(name).or_insert((0.0, 0));
                e.0 += t;
                e.1 += 1;
            }
            g.backward(loss)?;
            let leaves = vars.all();
            let grads: Vec<_> = leaves.iter().map(|&v| g.grad(v)).collect();
            let mut params = model.tensors_mut();
            if !optimizer_step(&mut params, &grads, &mut state, lr, config.weight_decay)? {
                skipped += 1;
            }
        }
        let loss = loss_sum / steps as f64;
        let record = EpochRecord {
            epoch,
            loss,
            sat: 1.0 - loss,
            axioms: truth_sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
            p: fuzzy.p_forall,
            lr,
            phase,
            skipped_steps: skipped,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} sat {:.5} p {} lr {:.3e}",
            record.loss,
            record.sat,
            record.p,
            record.lr
        );
        history.epochs.push(record);
    }
    let checkpoint = Checkpoint::new(&model, fuzzy, config.clone(), history.epochs.len());
    Ok((checkpoint, history))
}

/// Per-axiom truths and overall satisfiability of a knowledge base grounded
/// on one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatReport {
    pub axioms: Vec<(String, f64)>,
    pub omitted: Vec<String>,
    pub sat: f64,
}

/// Grounds the knowledge base once on the given samples, for inspection.
pub fn evaluate_sat(
    model: &Model,
    dataset: &Dataset,
    indices: &[usize],
    axioms: &[Axiom],
    config: &TrainConfig,
    fuzzy: &FuzzyConfig,
) -> Result<SatReport> {
    let pooled = model.center(&dataset.pooled_features());
    let batch = KbBatch::gather(dataset, &pooled, indices);
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let kb = build_kb(&mut g, &batch, axioms, &vars, config, fuzzy, &mut rng)?;
    let loss = kb_loss(&mut g, &kb)?;
    Ok(SatReport {
        axioms: kb.truths(&g),
        omitted: kb.omitted,
        sat: 1.0 - g.value(loss).item(),
    })
}
