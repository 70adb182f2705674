//! Finite-difference checks of every differentiable primitive, the fuzzy
//! operators and the full satisfiability loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{grad_check, GradCheck, Graph, Var};
use crate::data::{generate_synthetic, SyntheticSpec};
use crate::embedder::EmbedderVars;
use crate::error::Result;
use crate::fol::builtin_axioms;
use crate::fuzzy::{self, FuzzyConfig};
use crate::tensor::Tensor;
use crate::trainer::{build_kb, kb_loss, KbBatch, Model, ModelVars, TrainConfig};

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Largest acceptable relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub coordinates: usize,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

/// Fixed, position-dependent weights that turn a tensor into a scalar
/// without making its gradient trivially constant.
fn weigh(g: &mut Graph, out: Var) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect();
    let w = g.constant(Tensor::new(shape, w)?);
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("sizes match")
}

type Case = (
    &'static str,
    Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>,
    Vec<Tensor>,
);

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let m23 = |rng: &mut ChaCha8Rng| random(rng, &[2, 3], -1.0, 1.0);
    let truth = |rng: &mut ChaCha8Rng| random(rng, &[5], 0.05, 0.95);
    let mut cases: Vec<Case> = Vec::new();
    macro_rules! case {
        ($name:expr, $params:expr, |$g:ident, $v:ident| $body:expr) => {
            cases.push((
                $name,
                Box::new(move |$g: &mut Graph, $v: &[Var]| {
                    let out = $body;
                    weigh($g, out)
                }),
                $params,
            ));
        };
    }
    case!("matmul", vec![m23(rng), random(rng, &[3, 2], -1.0, 1.0)], |g, v| g
        .matmul(v[0], v[1])?);
    case!("transpose", vec![m23(rng)], |g, v| g.transpose(v[0])?);
    case!("add", vec![m23(rng), m23(rng)], |g, v| g.add(v[0], v[1])?);
    case!("sub", vec![m23(rng), m23(rng)], |g, v| g.sub(v[0], v[1])?);
    case!("mul", vec![m23(rng), m23(rng)], |g, v| g.mul(v[0], v[1])?);
    case!("affine", vec![m23(rng)], |g, v| g.affine(v[0], -0.7, 0.2));
    case!("scale", vec![m23(rng)], |g, v| g.scale(v[0], 2.5));
    case!("one_minus", vec![m23(rng)], |g, v| g.one_minus(v[0]));
    case!("add_row", vec![m23(rng), random(rng, &[3], -1.0, 1.0)], |g, v| g
        .add_row(v[0], v[1])?);
    case!("sigmoid", vec![m23(rng)], |g, v| g.sigmoid(v[0]));
    case!("tanh", vec![m23(rng)], |g, v| g.tanh(v[0]));
    case!("softmax_rows", vec![random(rng, &[2, 4], -2.0, 2.0)], |g, v| g
        .softmax_rows(v[0])?);
    case!("cosine_rows", vec![m23(rng), m23(rng)], |g, v| g
        .cosine_rows(v[0], v[1])?);
    case!(
        "cosine_similarity",
        vec![random(rng, &[4], -1.0, 1.0), random(rng, &[4], -1.0, 1.0)],
        |g, v| g.cosine_similarity(v[0], v[1])?
    );
    case!("mean_pool", vec![random(rng, &[2, 3, 2], -1.0, 1.0)], |g, v| g
        .mean_pool(v[0])?);
    case!("pow_clamped", vec![random(rng, &[5], 0.1, 1.0)], |g, v| g
        .pow_clamped(v[0], 3.0)?);
    case!("root_clamped", vec![random(rng, &[5], 0.1, 1.0)], |g, v| g
        .root_clamped(v[0], 4.0)?);
    case!("sum", vec![m23(rng)], |g, v| {
        let s = g.sum(v[0]);
        g.mul(s, s)?
    });
    case!("mean", vec![m23(rng)], |g, v| {
        let s = g.mean(v[0])?;
        g.mul(s, s)?
    });
    case!("gather", vec![m23(rng)], |g, v| g.gather(v[0], vec![5, 0, 0, 3])?);
    case!("gather_rows", vec![m23(rng)], |g, v| g.gather_rows(v[0], &[1, 1, 0])?);
    case!("segment_mean", vec![truth(rng)], |g, v| g
        .segment_mean(v[0], vec![vec![0, 1], vec![2, 3, 4], vec![1]])?);
    case!("clamp", vec![random(rng, &[5], 0.2, 0.8)], |g, v| g
        .clamp(v[0], 0.1, 0.9));
    case!("concat", vec![m23(rng), truth(rng)], |g, v| g.concat(&[v[0], v[1]]));
    case!("reshape", vec![m23(rng)], |g, v| g.reshape(v[0], vec![3, 2])?);
    case!("not", vec![truth(rng)], |g, v| fuzzy::fuzzy_not(g, v[0])?);
    case!("implies", vec![truth(rng), truth(rng)], |g, v| fuzzy::fuzzy_implies(
        g, v[0], v[1]
    )?);
    case!("and", vec![truth(rng), truth(rng)], |g, v| fuzzy::fuzzy_and(
        g, v[0], v[1]
    )?);
    case!("or", vec![truth(rng), truth(rng)], |g, v| fuzzy::fuzzy_or(
        g, v[0], v[1]
    )?);
    case!("squash", vec![truth(rng)], |g, v| fuzzy::squash(g, v[0], 1e-4));
    for (name, p) in [("exists_p1", 1.0), ("exists_p2", 2.0), ("exists_p6", 6.0)] {
        case!(name, vec![truth(rng)], |g, v| fuzzy::agg_exists(g, v[0], p)?);
    }
    for (name, p) in [("forall_p1", 1.0), ("forall_p2", 2.0), ("forall_p6", 6.0)] {
        case!(name, vec![truth(rng)], |g, v| fuzzy::agg_forall(g, v[0], p)?);
    }
    cases
}

/// The loss of every built-in axiom on four samples from two seen classes,
/// differentiated with respect to the projection and the macro attributes
/// (and the hidden layer when `hidden` is set).
fn loss_case(seed: u64, hidden: Option<usize>) -> Result<GradCheck> {
    let ds = generate_synthetic(&SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    })?;
    let mut model = Model::init(&ds, hidden, seed)?;
    model.center_on(&ds);
    let pooled = model.center(&ds.pooled_features());
    let mut indices = Vec::new();
    for &class in &ds.seen[..2] {
        indices.extend(
            ds.splits
                .train
                .iter()
                .copied()
                .filter(|&i| ds.labels[i] == class)
                .take(2),
        );
    }
    let batch = KbBatch::gather(&ds, &pooled, &indices);
    let config = TrainConfig {
        k_mask: 5,
        ..TrainConfig::synthetic()
    };
    let axioms = builtin_axioms();
    let fuzzy = FuzzyConfig::with_p(2.0);
    let with_hidden = model.embedder.hidden.is_some();

    let mut params: Vec<Tensor> = Vec::new();
    if let Some(h) = &model.embedder.hidden {
        params.push(h.weight.clone());
        params.push(h.bias.clone());
    }
    params.push(model.embedder.projection.clone());
    params.push(model.macro_attrs.clone().expect("synthetic data has a hierarchy"));

    let f = |g: &mut Graph, v: &[Var]| {
        let (hidden, rest) = if with_hidden {
            (Some((v[0], v[1])), &v[2..])
        } else {
            (None, v)
        };
        let vars = ModelVars {
            embedder: EmbedderVars {
                hidden,
                projection: rest[0],
            },
            macro_attrs: Some(rest[1]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = build_kb(g, &batch, &axioms, &vars, &config, &fuzzy, &mut rng)?;
        kb_loss(g, &kb)
    };
    grad_check(f, &params, STEP)
}

/// Runs every check; inputs are drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, f, params) in primitive_cases(&mut rng) {
        let r = grad_check(f, &params, STEP)?;
        out.push(SuiteEntry {
            name,
            max_rel_error: r.max_rel_error,
            coordinates: r.coordinates,
        });
    }
    for (name, hidden) in [("kb_loss", None), ("kb_loss_hidden", Some(8))] {
        let r = loss_case(seed, hidden)?;
        out.push(SuiteEntry {
            name,
            max_rel_error: r.max_rel_error,
            coordinates: r.coordinates,
        });
    }
    Ok(out)
}
