//! Recursive evaluation of formulas over a batch.
//!
//! Evaluation walks a table of variable assignments. Each quantifier
//! extends every row of the table with the elements of its domain (all of
//! them for a diagonal binding, in lockstep), keeping only those that pass
//! the guard. The body is evaluated once over the extended table as a
//! vector and then aggregated back per parent row. A guarded quantifier
//! over a domain that an enclosing quantifier already walks skips the
//! element that the enclosing row is sitting on, so pair axioms range over
//! ordered pairs of distinct samples.
//!
//! A universal over an empty index set is vacuously true. An existential
//! over an empty set is excluded from whatever aggregates it.

use super::{Arg, GroundingEnv};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::fol::{Domain, Formula, GuardOp, QuantKind, Sort};
use crate::fuzzy::{self, FuzzyConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Normal,
    /// A universal over an empty set; the value is exactly 1.
    Vacuous,
    /// An existential over an empty set; the value is a placeholder.
    Excluded,
}

/// Scalar truth of a closed formula.
#[derive(Debug, Clone, Copy)]
pub struct Truth {
    pub value: Var,
    pub status: Status,
}

struct Frame {
    names: Vec<String>,
    sorts: Vec<Sort>,
    domains: Vec<Domain>,
    /// Per row: one value per column.
    values: Vec<Vec<usize>>,
    /// Per row: position along each enclosing quantifier's domain.
    positions: Vec<Vec<usize>>,
}

impl Frame {
    fn unit() -> Self {
        Frame {
            names: vec![],
            sorts: vec![],
            domains: vec![],
            values: vec![vec![]],
            positions: vec![vec![]],
        }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Usage(format!("unbound variable `{name}`")))
    }
}

struct Rows {
    value: Var,
    status: Vec<Status>,
}

/// Truth value of a closed formula on the batch bound in `env`.
pub fn eval_formula(g: &mut Graph, formula: &Formula, env: &GroundingEnv, cfg: &FuzzyConfig) -> Result<Truth> {
    cfg.validate()?;
    let rows = eval(g, env, cfg, formula, &Frame::unit())?;
    let value = g.reshape(rows.value, vec![])?;
    Ok(Truth {
        value,
        status: rows.status[0],
    })
}

fn eval(g: &mut Graph, env: &GroundingEnv, cfg: &FuzzyConfig, f: &Formula, frame: &Frame) -> Result<Rows> {
    match f {
        Formula::Pred { name, args, .. } => {
            let pred = env
                .predicate(name)
                .ok_or_else(|| Error::Config(format!("no grounding for predicate `{name}`")))?;
            let mut columns = Vec::with_capacity(args.len());
            for a in args {
                let c = frame.column(a)?;
                let values: Vec<usize> = frame.values.iter().map(|row| row[c]).collect();
                columns.push((frame.sorts[c], values));
            }
            let args: Vec<Arg> = columns
                .iter()
                .map(|(sort, values)| Arg { sort: *sort, values })
                .collect();
            let value = pred.ground(g, env, &args)?;
            if g.value(value).len() != frame.len() {
                return Err(Error::Usage(format!(
                    "grounding of `{name}` returned {} values for {} rows",
                    g.value(value).len(),
                    frame.len()
                )));
            }
            Ok(Rows {
                value,
                status: vec![Status::Normal; frame.len()],
            })
        }
        Formula::Not(a) => {
            let a = eval(g, env, cfg, a, frame)?;
            Ok(Rows {
                value: fuzzy::fuzzy_not(g, a.value)?,
                status: a.status,
            })
        }
        Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
            let a = eval(g, env, cfg, a, frame)?;
            let b = eval(g, env, cfg, b, frame)?;
            let value = match f {
                Formula::Implies(..) => fuzzy::fuzzy_implies(g, a.value, b.value)?,
                Formula::And(..) => fuzzy::fuzzy_and(g, a.value, b.value)?,
                _ => fuzzy::fuzzy_or(g, a.value, b.value)?,
            };
            let status = a
                .status
                .iter()
                .zip(&b.status)
                .map(|(&x, &y)| {
                    if x == Status::Excluded || y == Status::Excluded {
                        Status::Excluded
                    } else {
                        Status::Normal
                    }
                })
                .collect();
            Ok(Rows { value, status })
        }
        Formula::Quant {
            kind,
            binding,
            guard,
            body,
            ..
        } => {
            let domain = env.signature().binding_domain(binding).map_err(Error::Config)?;
            let size = match domain {
                Domain::Samples => env.len(),
                Domain::Classes => env.batch_classes().len(),
                Domain::Macros => env.macro_count(g),
            };
            let sorts: Vec<Sort> = binding
                .vars
                .iter()
                .map(|v| {
                    env.signature()
                        .sort_of(v)
                        .ok_or_else(|| Error::Config(format!("cannot determine the sort of `{v}`")))
                })
                .collect::<Result<_>>()?;

            let mut child = Frame {
                names: frame.names.iter().chain(&binding.vars).cloned().collect(),
                sorts: frame.sorts.iter().chain(&sorts).copied().collect(),
                domains: frame.domains.iter().copied().chain([domain]).collect(),
                values: Vec::new(),
                positions: Vec::new(),
            };
            let guard_cols = match guard {
                Some(gd) => Some((child.column(&gd.lhs)?, gd.op, child.column(&gd.rhs)?)),
                None => None,
            };
            let fresh: Vec<Vec<usize>> = (0..size)
                .map(|j| sorts.iter().map(|&s| element(env, domain, s, j)).collect())
                .collect::<Result<_>>()?;

            let mut segments = Vec::with_capacity(frame.len());
            for r in 0..frame.len() {
                let mut seg = Vec::new();
                for (j, new_vals) in fresh.iter().enumerate() {
                    if guard.is_some()
                        && frame
                            .domains
                            .iter()
                            .zip(&frame.positions[r])
                            .any(|(&d, &p)| d == domain && p == j)
                    {
                        continue;
                    }
                    let mut vals = frame.values[r].clone();
                    vals.extend_from_slice(new_vals);
                    if let Some((l, op, rr)) = guard_cols {
                        let same = vals[l] == vals[rr];
                        if same != (op == GuardOp::Eq) {
                            continue;
                        }
                    }
                    let mut pos = frame.positions[r].clone();
                    pos.push(j);
                    seg.push(child.values.len());
                    child.values.push(vals);
                    child.positions.push(pos);
                }
                segments.push(seg);
            }

            let inner = if child.len() > 0 {
                Some(eval(g, env, cfg, body, &child)?)
            } else {
                None
            };

            let mut status = Vec::with_capacity(frame.len());
            let mut kept_segments = Vec::new();
            let mut slot = Vec::with_capacity(frame.len());
            for seg in segments {
                let included: Vec<usize> = match &inner {
                    Some(rows) => seg
                        .into_iter()
                        .filter(|&i| rows.status[i] != Status::Excluded)
                        .collect(),
                    None => Vec::new(),
                };
                let all_vacuous = inner
                    .as_ref()
                    .is_some_and(|rows| included.iter().all(|&i| rows.status[i] == Status::Vacuous));
                if included.is_empty() {
                    status.push(match kind {
                        QuantKind::Forall => Status::Vacuous,
                        QuantKind::Exists => Status::Excluded,
                    });
                    slot.push(None);
                } else if all_vacuous {
                    status.push(Status::Vacuous);
                    slot.push(None);
                } else {
                    status.push(Status::Normal);
                    slot.push(Some(kept_segments.len()));
                    kept_segments.push(included);
                }
            }

            let value = match inner {
                Some(rows) if !kept_segments.is_empty() => {
                    let clamped = fuzzy::squash(g, rows.value, cfg.clamp_eps);
                    let kept = kept_segments.len();
                    let agg = match kind {
                        QuantKind::Forall => fuzzy::agg_forall_segments(g, clamped, kept_segments, cfg.p_forall)?,
                        QuantKind::Exists => fuzzy::agg_exists_segments(g, clamped, kept_segments, cfg.p_exists)?,
                    };
                    if slot.iter().all(Option::is_some) {
                        agg
                    } else {
                        let one = g.constant(Tensor::vector(vec![1.0]));
                        let joined = g.concat(&[agg, one]);
                        let index = slot.iter().map(|s| s.unwrap_or(kept)).collect();
                        g.gather(joined, index)?
                    }
                }
                _ => g.constant(Tensor::vector(vec![1.0; frame.len()])),
            };
            Ok(Rows { value, status })
        }
    }
}

/// Value of a variable of sort `sort` at position `j` of `domain`.
fn element(env: &GroundingEnv, domain: Domain, sort: Sort, j: usize) -> Result<usize> {
    let bad = || Error::Config(format!("a {} variable cannot range over {domain:?}", sort.name()));
    match domain {
        Domain::Samples => match sort {
            Sort::Image => Ok(j),
            Sort::ClassLabel | Sort::SeenClassLabel => Ok(env.labels()[j]),
            Sort::MacroLabel => env
                .macro_labels()
                .map(|q| q[j])
                .ok_or_else(|| Error::Config("macro labels requested without a class hierarchy".into())),
            Sort::AttributeVector => Err(bad()),
        },
        Domain::Classes => match sort {
            Sort::AttributeVector | Sort::ClassLabel | Sort::SeenClassLabel => Ok(env.batch_classes()[j]),
            _ => Err(bad()),
        },
        Domain::Macros => match sort {
            Sort::MacroLabel => Ok(j),
            _ => Err(bad()),
        },
    }
}
