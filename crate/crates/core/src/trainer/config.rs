use serde::{Deserialize, Serialize};

use crate::data::BatchSpec;
use crate::error::{Error, Result};
use crate::fuzzy::PSchedule;

/// Switches for the optional built-in axioms. `phi1` and any axiom not
/// named here are always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxiomFlags {
    pub phi2: bool,
    pub phi3: bool,
    pub phi4: bool,
    pub phi5: bool,
    pub phi6: bool,
}

impl Default for AxiomFlags {
    fn default() -> Self {
        AxiomFlags {
            phi2: true,
            phi3: true,
            phi4: true,
            phi5: true,
            phi6: true,
        }
    }
}

impl AxiomFlags {
    pub fn enabled(&self, name: &str) -> bool {
        match name {
            "phi2" => self.phi2,
            "phi3" => self.phi3,
            "phi4" => self.phi4,
            "phi5" => self.phi5,
            "phi6" => self.phi6,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Manifest of the training dataset (used by the command line).
    pub dataset: Option<String>,
    /// Axiom file; the built-in knowledge base when absent.
    pub axioms: Option<String>,
    /// Hierarchy file overriding the one named in the manifest.
    pub hierarchy: Option<String>,

    /// Scale of the cosine inside `hasSameAttribute`.
    pub alpha: f64,
    /// Attributes dropped for the masked membership predicate.
    pub k_mask: usize,
    pub batch: BatchSpec,
    pub epochs: usize,
    /// Leading epochs that train only the projection and macro attributes.
    pub pretrain_epochs: usize,
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    pub lr_decay_base: f64,
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    pub p_schedule: PSchedule,
    pub axiom_flags: AxiomFlags,
    /// Width of the hidden layer; features feed the projection directly
    /// when absent.
    pub hidden_dim: Option<usize>,
    /// Subtract the mean training feature from every input.
    pub center_inputs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: None,
            axioms: None,
            hierarchy: None,
            alpha: 5.0,
            k_mask: 15,
            batch: BatchSpec { n_pos: 12, n_neg: 12 },
            epochs: 50,
            pretrain_epochs: 0,
            lr_pretrain: 1e-3,
            lr_finetune: 1e-3,
            lr_decay_base: 0.8,
            lr_decay_every: 10,
            weight_decay: 5e-4,
            p_schedule: PSchedule::every_four(),
            axiom_flags: AxiomFlags::default(),
            hidden_dim: None,
            center_inputs: true,
            seed: 7,
        }
    }
}

/// Training phase: the hidden layer is frozen while pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl TrainConfig {
    /// Settings for the small synthetic task: a sharper `hasSameAttribute`,
    /// a mask that drops about a fifth of the attributes, a fixed exponent
    /// and a faster learning rate.
    pub fn synthetic() -> Self {
        TrainConfig {
            alpha: 15.0,
            k_mask: 3,
            lr_finetune: 1e-2,
            p_schedule: PSchedule::constant(2.0),
            ..TrainConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("alpha", self.alpha),
            ("lr_pretrain", self.lr_pretrain),
            ("lr_finetune", self.lr_finetune),
            ("lr_decay_base", self.lr_decay_base),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::Config("lr_decay_every must be >= 1".into()));
        }
        if self.batch.n_pos == 0 {
            return Err(Error::Config("batch.n_pos must be >= 1".into()));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        self.p_schedule.validate()
    }

    pub fn phase(&self, epoch: usize) -> Phase {
        if epoch < self.pretrain_epochs {
            Phase::Pretrain
        } else {
            Phase::Finetune
        }
    }
}

/// Learning rate for `epoch` of the given phase; finetuning epochs are
/// counted from the start of the finetuning phase.
pub fn lr_schedule(epoch: usize, phase: Phase, config: &TrainConfig) -> f64 {
    match phase {
        Phase::Pretrain => config.lr_pretrain,
        Phase::Finetune => {
            let decays = (epoch / config.lr_decay_every.max(1)) as i32;
            config.lr_finetune * config.lr_decay_base.powi(decays)
        }
    }
}
