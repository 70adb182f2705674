//! Shared fixtures: a plain-loop reference evaluator for the axiom language
//! and a random formula generator to drive it.
#![allow(dead_code, clippy::needless_range_loop)]

use fuzzy_zsl::autodiff::{Graph, NORM_EPS};
use fuzzy_zsl::fol::{Formula, GuardOp, QuantKind};
use fuzzy_zsl::fuzzy::FuzzyConfig;
use fuzzy_zsl::grounding::{GroundingEnv, Status};
use fuzzy_zsl::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

/// A batch described with nested `Vec`s so that nothing below touches the
/// engine's tensor code.
#[derive(Debug, Clone)]
pub struct World {
    /// `n x B`.
    pub features: Vec<Vec<f64>>,
    /// `B x M`.
    pub projection: Vec<Vec<f64>>,
    /// `M x C`.
    pub attributes: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub macro_labels: Vec<usize>,
    /// `M x Q`.
    pub macro_attrs: Vec<Vec<f64>>,
    pub mask: Vec<f64>,
    pub seen: Vec<usize>,
    pub alpha: f64,
}

impl World {
    /// Every class is seen; class `c` belongs to macro `c % q`.
    pub fn random<R: Rng>(rng: &mut R, n: usize, classes: usize, q: usize, b: usize, m: usize) -> World {
        let mut mat = |r: usize, c: usize, lo: f64, hi: f64| -> Vec<Vec<f64>> {
            (0..r)
                .map(|_| (0..c).map(|_| rng.gen_range(lo..hi)).collect())
                .collect()
        };
        let features = mat(n, b, -1.0, 1.0);
        let projection = mat(b, m, -1.0, 1.0);
        let attributes = mat(m, classes, 0.05, 1.0);
        let macro_attrs = mat(m, q, 0.05, 1.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let macro_labels = labels.iter().map(|&c| c % q).collect();
        let mask = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        World {
            features,
            projection,
            attributes,
            labels,
            macro_labels,
            macro_attrs,
            mask,
            seen: (0..classes).collect(),
            alpha: rng.gen_range(0.5..4.0),
        }
    }

    pub fn env(&self, g: &mut Graph) -> GroundingEnv {
        let x = g.constant(Tensor::from_rows(&self.features).unwrap());
        let v = g.param(Tensor::from_rows(&self.projection).unwrap());
        let attrs = Tensor::from_rows(&self.attributes).unwrap();
        let macro_attrs = g.param(Tensor::from_rows(&self.macro_attrs).unwrap());
        GroundingEnv::new(g, x, v, self.labels.clone(), &attrs, &self.seen, self.alpha)
            .unwrap()
            .with_macros(g, self.macro_labels.clone(), macro_attrs)
            .unwrap()
            .with_mask(g, self.mask.clone())
            .unwrap()
    }

    fn embedding(&self, i: usize) -> Vec<f64> {
        let m = self.projection[0].len();
        (0..m)
            .map(|r| {
                (0..self.features[i].len())
                    .map(|k| self.features[i][k] * self.projection[k][r])
                    .sum()
            })
            .collect()
    }

    fn column(table: &[Vec<f64>], c: usize) -> Vec<f64> {
        table.iter().map(|row| row[c]).collect()
    }

    /// Softmax over `columns` of `e . table[:, col]`, read at `target`.
    fn membership(&self, i: usize, table: &[Vec<f64>], columns: &[usize], target: usize, mask: Option<&[f64]>) -> f64 {
        let e = self.embedding(i);
        let scores: Vec<f64> = columns
            .iter()
            .map(|&c| {
                (0..e.len())
                    .map(|r| e[r] * table[r][c] * mask.map_or(1.0, |mk| mk[r]))
                    .sum()
            })
            .collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - top).exp()).sum();
        let k = columns
            .iter()
            .position(|&c| c == target)
            .expect("target among the columns");
        (scores[k] - top).exp() / z
    }

    fn vector(&self, sort: OSort, value: usize) -> Vec<f64> {
        match sort {
            OSort::Image => self.embedding(value),
            OSort::Attr => World::column(&self.attributes, value),
            _ => panic!("no vector for {sort:?}"),
        }
    }

    fn predicate(&self, name: &str, args: &[(OSort, usize)]) -> f64 {
        match name {
            "isOfClass" => self.membership(args[0].1, &self.attributes, &self.seen, args[1].1, None),
            "isOfClassMasked" => self.membership(args[0].1, &self.attributes, &self.seen, args[1].1, Some(&self.mask)),
            "isOfMacro" => {
                let q: Vec<usize> = (0..self.macro_attrs[0].len()).collect();
                self.membership(args[0].1, &self.macro_attrs, &q, args[1].1, None)
            }
            "hasSameAttribute" => {
                let u = self.vector(args[0].0, args[0].1);
                let v = self.vector(args[1].0, args[1].1);
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                1.0 / (1.0 + (-self.alpha * dot / (nu * nv + NORM_EPS)).exp())
            }
            other => panic!("unknown predicate {other}"),
        }
    }

    fn batch_classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OSort {
    Image,
    Class,
    Seen,
    Macro,
    Attr,
}

pub fn sort_of(name: &str) -> OSort {
    if name.starts_with("lseen") {
        OSort::Seen
    } else if name.starts_with('x') {
        OSort::Image
    } else if name.starts_with('l') {
        OSort::Class
    } else if name.starts_with('q') {
        OSort::Macro
    } else if name.starts_with('a') {
        OSort::Attr
    } else {
        panic!("unsorted variable {name}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ODomain {
    Samples,
    Classes,
    Macros,
}

#[derive(Debug, Clone)]
struct Binding {
    name: String,
    sort: OSort,
    value: usize,
    domain: ODomain,
    position: usize,
}

/// Truth of a closed formula, evaluated one assignment at a time.
pub fn oracle(world: &World, f: &Formula, cfg: &FuzzyConfig) -> (f64, Status) {
    eval(world, f, cfg, &mut Vec::new())
}

fn eval(world: &World, f: &Formula, cfg: &FuzzyConfig, scope: &mut Vec<Binding>) -> (f64, Status) {
    let lookup = |scope: &[Binding], name: &str| -> Binding {
        scope
            .iter()
            .rev()
            .find(|b| b.name == name)
            .cloned()
            .expect("bound variable")
    };
    match f {
        Formula::Pred { name, args, .. } => {
            let args: Vec<(OSort, usize)> = args
                .iter()
                .map(|a| {
                    let b = lookup(scope, a);
                    (b.sort, b.value)
                })
                .collect();
            (world.predicate(name, &args), Status::Normal)
        }
        Formula::Not(a) => {
            let (v, s) = eval(world, a, cfg, scope);
            (1.0 - v, s)
        }
        Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
            let (x, sx) = eval(world, a, cfg, scope);
            let (y, sy) = eval(world, b, cfg, scope);
            let v = match f {
                Formula::Implies(..) => 1.0 - x + x * y,
                Formula::And(..) => x * y,
                _ => x + y - x * y,
            };
            let s = if sx == Status::Excluded || sy == Status::Excluded {
                Status::Excluded
            } else {
                Status::Normal
            };
            (v, s)
        }
        Formula::Quant {
            kind,
            binding,
            guard,
            body,
            ..
        } => {
            let sorts: Vec<OSort> = binding.vars.iter().map(|v| sort_of(v)).collect();
            let domain = if sorts.contains(&OSort::Image) {
                ODomain::Samples
            } else if sorts.iter().all(|&s| s == OSort::Macro) {
                ODomain::Macros
            } else {
                ODomain::Classes
            };
            let classes = world.batch_classes();
            let size = match domain {
                ODomain::Samples => world.labels.len(),
                ODomain::Classes => classes.len(),
                ODomain::Macros => world.macro_attrs[0].len(),
            };
            let mut truths = Vec::new();
            let mut statuses = Vec::new();
            for j in 0..size {
                if guard.is_some() && scope.iter().any(|b| b.domain == domain && b.position == j) {
                    continue;
                }
                let depth = scope.len();
                for (name, &sort) in binding.vars.iter().zip(&sorts) {
                    let value = match (domain, sort) {
                        (ODomain::Samples, OSort::Image) => j,
                        (ODomain::Samples, OSort::Class | OSort::Seen) => world.labels[j],
                        (ODomain::Samples, OSort::Macro) => world.macro_labels[j],
                        (ODomain::Classes, _) => classes[j],
                        (ODomain::Macros, _) => j,
                        _ => panic!("bad binding"),
                    };
                    scope.push(Binding {
                        name: name.clone(),
                        sort,
                        value,
                        domain,
                        position: j,
                    });
                }
                let keep = match guard {
                    Some(gd) => {
                        let same = lookup(scope, &gd.lhs).value == lookup(scope, &gd.rhs).value;
                        same == (gd.op == GuardOp::Eq)
                    }
                    None => true,
                };
                if keep {
                    let (v, s) = eval(world, body, cfg, scope);
                    if s != Status::Excluded {
                        truths.push(v);
                        statuses.push(s);
                    }
                }
                scope.truncate(depth);
            }
            if truths.is_empty() {
                return match kind {
                    QuantKind::Forall => (1.0, Status::Vacuous),
                    QuantKind::Exists => (1.0, Status::Excluded),
                };
            }
            if statuses.iter().all(|&s| s == Status::Vacuous) {
                return (1.0, Status::Vacuous);
            }
            let eps = cfg.clamp_eps;
            let squashed = truths.iter().map(|&t| eps + (1.0 - 2.0 * eps) * t);
            let n = truths.len() as f64;
            let v = match kind {
                QuantKind::Forall => {
                    let p = cfg.p_forall;
                    1.0 - (squashed.map(|t| (1.0 - t).powf(p)).sum::<f64>() / n).powf(1.0 / p)
                }
                QuantKind::Exists => {
                    let p = cfg.p_exists;
                    (squashed.map(|t| t.powf(p)).sum::<f64>() / n).powf(1.0 / p)
                }
            };
            (v, Status::Normal)
        }
    }
}

/// Source text of a random closed formula with at most `max_quants`
/// nested quantifiers.
pub fn random_formula<R: Rng>(rng: &mut R, max_quants: usize) -> String {
    let mut gen = Gen { next: 0 };
    gen.quant(rng, &mut Vec::new(), max_quants.max(1))
}

struct Gen {
    next: usize,
}

impl Gen {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn quant<R: Rng>(&mut self, rng: &mut R, scope: &mut Vec<String>, budget: usize) -> String {
        let kind = if rng.gen_bool(0.5) { "forall" } else { "exists" };
        let vars: Vec<String> = match rng.gen_range(0..6) {
            0 | 1 => vec![self.fresh("x"), self.fresh("l")],
            2 => vec![self.fresh("x"), self.fresh("l"), self.fresh("q")],
            3 => vec![self.fresh("a"), self.fresh("l")],
            4 => vec![self.fresh("lseen")],
            _ => vec![self.fresh("q")],
        };
        let binding = if vars.len() == 1 {
            vars[0].clone()
        } else {
            format!("diag({})", vars.join(", "))
        };
        let guard = {
            let new_label = vars
                .iter()
                .find(|v| matches!(sort_of(v), OSort::Class | OSort::Seen | OSort::Macro));
            let old: Vec<&String> = scope
                .iter()
                .filter(|v| {
                    new_label.is_some_and(|n| {
                        let (a, b) = (sort_of(v), sort_of(n));
                        (a == OSort::Macro) == (b == OSort::Macro) && a != OSort::Image && a != OSort::Attr
                    })
                })
                .collect();
            match (new_label, old.choose(rng)) {
                (Some(n), Some(o)) if rng.gen_bool(0.6) => {
                    let op = if rng.gen_bool(0.5) { "==" } else { "!=" };
                    format!(" where {o} {op} {n}")
                }
                _ => String::new(),
            }
        };
        let depth = scope.len();
        scope.extend(vars.iter().cloned());
        let body = self.body(rng, scope, budget - 1, 3);
        scope.truncate(depth);
        format!("{kind} {binding}{guard} . {body}")
    }

    fn body<R: Rng>(&mut self, rng: &mut R, scope: &mut Vec<String>, budget: usize, depth: usize) -> String {
        let preds = applicable(scope);
        let choice = rng.gen_range(0..10);
        if budget > 0 && (preds.is_empty() || choice < 3) {
            return format!("({})", self.quant(rng, scope, budget));
        }
        if preds.is_empty() {
            // Out of quantifiers with nothing to apply: close with a sample
            // quantifier regardless of the budget.
            return format!("({})", self.quant(rng, scope, 1));
        }
        match choice {
            3 if depth > 0 => format!("not {}", self.body(rng, scope, budget, depth - 1)),
            4 | 5 if depth > 0 => {
                let op = ["->", "and", "or"].choose(rng).unwrap();
                let a = self.body(rng, scope, budget / 2, depth - 1);
                let b = self.body(rng, scope, budget - budget / 2, depth - 1);
                format!("({a} {op} {b})")
            }
            _ => preds.choose(rng).unwrap().clone(),
        }
    }
}

fn applicable(scope: &[String]) -> Vec<String> {
    let of = |s: &[OSort]| {
        scope
            .iter()
            .filter(|v| s.contains(&sort_of(v)))
            .cloned()
            .collect::<Vec<_>>()
    };
    let images = of(&[OSort::Image]);
    let labels = of(&[OSort::Class, OSort::Seen]);
    let macros = of(&[OSort::Macro]);
    let vectors = of(&[OSort::Image, OSort::Attr]);
    let mut out = Vec::new();
    for x in &images {
        for l in &labels {
            out.push(format!("isOfClass({x}, {l})"));
            out.push(format!("isOfClassMasked({x}, {l})"));
        }
        for q in &macros {
            out.push(format!("isOfMacro({x}, {q})"));
        }
    }
    for u in &vectors {
        for v in &vectors {
            out.push(format!("hasSameAttribute({u}, {v})"));
        }
    }
    out
}
