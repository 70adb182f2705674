//! Real-valued semantics of the logical connectives and quantifiers.
//!
//! Negation is `1 - a`, implication is Reichenbach's `1 - a + ab`, the
//! existential quantifier is the generalized mean and the universal
//! quantifier is the generalized mean of the errors `1 - a`. Binary `and`
//! and `or` use the product t-norm and the probabilistic sum.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Slack allowed when checking that inputs lie in `[0, 1]`.
const RANGE_TOL: f64 = 1e-12;

/// Lower clamp on the mean inside the aggregator root. Inputs squashed into
/// `[clamp_eps, 1 - clamp_eps]` never reach it.
const ROOT_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyConfig {
    pub p_forall: f64,
    pub p_exists: f64,
    /// Truth values entering an aggregator are mapped affinely onto
    /// `[clamp_eps, 1 - clamp_eps]` (see [`squash`]).
    pub clamp_eps: f64,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig {
            p_forall: 2.0,
            p_exists: 2.0,
            clamp_eps: 1e-4,
        }
    }
}

impl FuzzyConfig {
    pub fn with_p(p: f64) -> Self {
        FuzzyConfig {
            p_forall: p,
            p_exists: p,
            ..FuzzyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_forall >= 1.0 && self.p_exists >= 1.0) {
            return Err(Error::Parameter(format!(
                "aggregator exponents must be >= 1 (forall {}, exists {})",
                self.p_forall, self.p_exists
            )));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Parameter(format!(
                "clamp_eps {} outside (0, 0.5)",
                self.clamp_eps
            )));
        }
        Ok(())
    }
}

fn check_truths(g: &Graph, op: &str, vars: &[Var]) -> Result<()> {
    for &v in vars {
        if let Some(bad) = g
            .value(v)
            .data()
            .iter()
            .find(|&&x| !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&x))
        {
            return Err(Error::Domain(format!("{op}: truth value {bad} outside [0, 1]")));
        }
    }
    Ok(())
}

pub fn fuzzy_not(g: &mut Graph, a: Var) -> Result<Var> {
    check_truths(g, "not", &[a])?;
    Ok(g.one_minus(a))
}

/// Reichenbach implication `1 - a + a*b`.
pub fn fuzzy_implies(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    check_truths(g, "implies", &[a, b])?;
    let ab = g.mul(a, b)?;
    let not_a = g.one_minus(a);
    g.add(not_a, ab)
}

/// Product t-norm.
pub fn fuzzy_and(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    check_truths(g, "and", &[a, b])?;
    g.mul(a, b)
}

/// Probabilistic sum, written as the De Morgan dual of the product.
pub fn fuzzy_or(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    check_truths(g, "or", &[a, b])?;
    let na = g.one_minus(a);
    let nb = g.one_minus(b);
    let both = g.mul(na, nb)?;
    Ok(g.one_minus(both))
}

/// `eps + (1 - 2 eps) a`: keeps truths inside `[eps, 1 - eps]` without
/// cutting the gradient of saturated values, as a hard clamp would.
pub fn squash(g: &mut Graph, a: Var, eps: f64) -> Var {
    g.affine(a, 1.0 - 2.0 * eps, eps)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("aggregator exponent {p} must be >= 1")))
    }
}

/// Generalized mean `((1/n) sum a_i^p)^(1/p)` of each index group of `values`.
pub fn agg_exists_segments(g: &mut Graph, values: Var, segments: Vec<Vec<usize>>, p: f64) -> Result<Var> {
    check_p(p)?;
    check_truths(g, "exists", &[values])?;
    let powered = g.pow_floor(values, p, 0.0);
    let mean = g.segment_mean(powered, segments)?;
    Ok(g.pow_floor(mean, 1.0 / p, ROOT_FLOOR))
}

/// Generalized mean of the errors, `1 - ((1/n) sum (1 - a_i)^p)^(1/p)`, of
/// each index group.
pub fn agg_forall_segments(g: &mut Graph, values: Var, segments: Vec<Vec<usize>>, p: f64) -> Result<Var> {
    check_truths(g, "forall", &[values])?;
    let errors = g.one_minus(values);
    let m = agg_exists_segments(g, errors, segments, p)?;
    Ok(g.one_minus(m))
}

fn whole(g: &Graph, values: Var, op: &str) -> Result<Vec<Vec<usize>>> {
    let n = g.value(values).len();
    if n == 0 {
        return Err(Error::Usage(format!("{op} over an empty set")));
    }
    Ok(vec![(0..n).collect()])
}

/// Existential aggregation of all entries; returns a scalar.
pub fn agg_exists(g: &mut Graph, values: Var, p: f64) -> Result<Var> {
    let seg = whole(g, values, "exists")?;
    let out = agg_exists_segments(g, values, seg, p)?;
    g.reshape(out, vec![])
}

/// Universal aggregation of all entries; returns a scalar.
pub fn agg_forall(g: &mut Graph, values: Var, p: f64) -> Result<Var> {
    let seg = whole(g, values, "forall")?;
    let out = agg_forall_segments(g, values, seg, p)?;
    g.reshape(out, vec![])
}

/// Satisfiability of a knowledge base: the universal aggregation of its
/// axiom truths.
pub fn sat_aggregate(g: &mut Graph, axiom_truths: Var, p: f64) -> Result<Var> {
    if g.value(axiom_truths).is_empty() {
        return Err(Error::Config("empty knowledge base".into()));
    }
    agg_forall(g, axiom_truths, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleMode {
    /// `step` is added every `k` epochs.
    EveryKEpochs { step: f64, k: usize },
    /// `step` is added at each listed epoch.
    AtEpochs { epochs: Vec<usize>, step: f64 },
}

/// Epoch-indexed schedule of the aggregator exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSchedule {
    pub initial_p: f64,
    #[serde(flatten)]
    pub mode: ScheduleMode,
    #[serde(default)]
    pub cap: Option<f64>,
}

impl PSchedule {
    pub fn constant(p: f64) -> Self {
        PSchedule {
            initial_p: p,
            mode: ScheduleMode::AtEpochs {
                epochs: vec![],
                step: 0.0,
            },
            cap: None,
        }
    }

    /// `p` starts at 2 and grows by 2 every 4 epochs.
    pub fn every_four() -> Self {
        PSchedule {
            initial_p: 2.0,
            mode: ScheduleMode::EveryKEpochs { step: 2.0, k: 4 },
            cap: None,
        }
    }

    /// `p` starts at 2 and grows by 1 at epochs 2, 4, 24 and 32, up to 6.
    pub fn milestones() -> Self {
        PSchedule {
            initial_p: 2.0,
            mode: ScheduleMode::AtEpochs {
                epochs: vec![2, 4, 24, 32],
                step: 1.0,
            },
            cap: Some(6.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let step = match &self.mode {
            ScheduleMode::EveryKEpochs { step, k } => {
                if *k == 0 {
                    return Err(Error::Config("p schedule period k must be >= 1".into()));
                }
                *step
            }
            ScheduleMode::AtEpochs { step, .. } => *step,
        };
        if !(self.initial_p >= 1.0) || !(step >= 0.0) {
            return Err(Error::Config(format!(
                "p schedule needs initial_p >= 1 and step >= 0 (got {}, {step})",
                self.initial_p
            )));
        }
        if let Some(cap) = self.cap {
            if !(cap >= 1.0) {
                return Err(Error::Config(format!("p schedule cap {cap} < 1")));
            }
        }
        Ok(())
    }
}

/// Aggregator exponent to use during `epoch` (0-based).
pub fn schedule_p(epoch: usize, schedule: &PSchedule) -> f64 {
    let raw = match &schedule.mode {
        ScheduleMode::EveryKEpochs { step, k } => schedule.initial_p + step * (epoch / (*k).max(1)) as f64,
        ScheduleMode::AtEpochs { epochs, step } => {
            let passed = epochs.iter().filter(|&&e| epoch >= e).count();
            schedule.initial_p + step * passed as f64
        }
    };
    match schedule.cap {
        Some(cap) => raw.min(cap),
        None => raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn run1(f: impl Fn(&mut Graph, Var) -> Result<Var>, a: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let va = g.constant(Tensor::vector(a.to_vec()));
        let out = f(&mut g, va).unwrap();
        g.value(out).data().to_vec()
    }

    fn run2(f: impl Fn(&mut Graph, Var, Var) -> Result<Var>, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let va = g.constant(Tensor::vector(a.to_vec()));
        let vb = g.constant(Tensor::vector(b.to_vec()));
        let out = f(&mut g, va, vb).unwrap();
        g.value(out).data().to_vec()
    }

    #[test]
    fn negation() {
        let out = run1(fuzzy_not, &[0.0, 1.0, 0.3]);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[1], 0.0);
        assert!((out[2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn implication() {
        let b = [0.0, 0.2, 0.9];
        assert_eq!(run2(fuzzy_implies, &[0.0; 3], &b), vec![1.0; 3]);
        assert_eq!(run2(fuzzy_implies, &[1.0; 3], &b), b.to_vec());
        assert_eq!(run2(fuzzy_implies, &[0.5], &[0.5]), vec![0.75]);
    }

    #[test]
    fn conjunction_disjunction() {
        let b = [0.0, 0.4, 1.0];
        assert_eq!(run2(fuzzy_and, &[1.0; 3], &b), b.to_vec());
        assert_eq!(run2(fuzzy_or, &[0.0; 3], &b), b.to_vec());
        assert_eq!(run2(fuzzy_and, &[0.5], &[0.5]), vec![0.25]);
        assert_eq!(run2(fuzzy_or, &[0.5], &[0.5]), vec![0.75]);
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        let mut g = Graph::new();
        let bad = g.constant(Tensor::vector(vec![1.5]));
        let ok = g.constant(Tensor::vector(vec![0.5]));
        assert!(matches!(fuzzy_not(&mut g, bad), Err(Error::Domain(_))));
        assert!(matches!(fuzzy_implies(&mut g, ok, bad), Err(Error::Domain(_))));
        assert!(matches!(fuzzy_and(&mut g, bad, ok), Err(Error::Domain(_))));
        assert!(matches!(fuzzy_or(&mut g, ok, bad), Err(Error::Domain(_))));
        let neg = g.constant(Tensor::vector(vec![-0.1, 0.5]));
        assert!(agg_exists(&mut g, neg, 2.0).is_err());
    }

    #[test]
    fn exists_examples() {
        let out = run1(|g, v| agg_exists(g, v, 3.0), &[0.37]);
        assert!((out[0] - 0.37).abs() < 1e-12);
        let out = run1(|g, v| agg_exists(g, v, 2.0), &[0.0, 1.0]);
        assert!((out[0] - 0.5f64.sqrt()).abs() < 1e-9);
        let out = run1(|g, v| agg_exists(g, v, 1.0), &[0.1, 0.4, 0.7]);
        assert!((out[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn forall_examples() {
        let out = run1(|g, v| agg_forall(g, v, 4.0), &[1.0, 1.0, 1.0]);
        assert!((out[0] - 1.0).abs() < 1e-9);
        let out = run1(|g, v| agg_forall(g, v, 2.0), &[0.0, 1.0]);
        assert!((out[0] - (1.0 - 0.5f64.sqrt())).abs() < 1e-9);
        let out = run1(|g, v| agg_forall(g, v, 6.0), &[0.42]);
        assert!((out[0] - 0.42).abs() < 1e-12);
    }

    #[test]
    fn empty_aggregation_is_rejected() {
        let mut g = Graph::new();
        let empty = g.constant(Tensor::vector(vec![]));
        assert!(agg_exists(&mut g, empty, 2.0).is_err());
        assert!(agg_forall(&mut g, empty, 2.0).is_err());
        assert!(matches!(sat_aggregate(&mut g, empty, 2.0), Err(Error::Config(_))));
        let v = g.constant(Tensor::vector(vec![0.5]));
        assert!(matches!(agg_exists(&mut g, v, 0.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn sat_examples() {
        let out = run1(|g, v| sat_aggregate(g, v, 2.0), &[1.0, 1.0]);
        assert!((1.0 - out[0]).abs() < 1e-9);
        let out = run1(|g, v| sat_aggregate(g, v, 2.0), &[0.63]);
        assert!((out[0] - 0.63).abs() < 1e-12);
        let out = run1(|g, v| sat_aggregate(g, v, 2.0), &[0.8, 0.6]);
        let expected = 1.0 - ((0.04f64 + 0.16) / 2.0).sqrt();
        assert!((out[0] - expected).abs() < 1e-12);
        assert!((out[0] - 0.68377).abs() < 1e-5);
    }

    #[test]
    fn schedules() {
        let every = PSchedule::every_four();
        for e in 0..4 {
            assert_eq!(schedule_p(e, &every), 2.0);
        }
        for e in 4..8 {
            assert_eq!(schedule_p(e, &every), 4.0);
        }
        assert_eq!(schedule_p(0, &PSchedule::milestones()), 2.0);
        assert_eq!(schedule_p(33, &PSchedule::milestones()), 6.0);
        assert_eq!(schedule_p(1000, &PSchedule::milestones()), 6.0);
        assert_eq!(schedule_p(7, &PSchedule::constant(3.0)), 3.0);
    }

    #[test]
    fn schedule_round_trips_through_json() {
        let s = PSchedule::milestones();
        let text = serde_json::to_string(&s).unwrap();
        let back: PSchedule = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
