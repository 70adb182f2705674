//! Predicate signatures, variable sorts and static checks.
//!
//! The language has no declarations: a variable's sort comes from its name
//! prefix (longest registered prefix wins). The standard signature uses
//! `x` image, `l` class label, `lseen` seen-class label, `q` macroclass
//! label and `a` attribute vector.

use std::collections::BTreeMap;
use std::fmt;

use super::{Axiom, Formula, Pos, VarBinding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Image,
    ClassLabel,
    MacroLabel,
    AttributeVector,
    SeenClassLabel,
}

impl Sort {
    pub fn is_label(self) -> bool {
        matches!(self, Sort::ClassLabel | Sort::MacroLabel | Sort::SeenClassLabel)
    }

    pub fn name(self) -> &'static str {
        match self {
            Sort::Image => "image",
            Sort::ClassLabel => "class_label",
            Sort::MacroLabel => "macro_label",
            Sort::AttributeVector => "attribute_vector",
            Sort::SeenClassLabel => "seen_class_label",
        }
    }
}

/// What one quantifier ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Samples of the batch; labels bound alongside an image are its labels.
    Samples,
    /// Classes present in the batch.
    Classes,
    /// Macroclasses of the hierarchy.
    Macros,
}

#[derive(Debug, Clone)]
pub struct Signature {
    predicates: BTreeMap<String, Vec<Vec<Sort>>>,
    prefixes: Vec<(String, Sort)>,
}

impl Signature {
    pub fn empty() -> Self {
        Signature {
            predicates: BTreeMap::new(),
            prefixes: Vec::new(),
        }
    }

    /// The four predicates of the zero-shot knowledge base.
    pub fn standard() -> Self {
        use Sort::*;
        let mut sig = Signature::empty();
        sig.declare("isOfClass", vec![vec![Image], vec![ClassLabel, SeenClassLabel]])
            .and_then(|s| s.declare("isOfMacro", vec![vec![Image], vec![MacroLabel]]))
            .and_then(|s| s.declare("isOfClassMasked", vec![vec![Image], vec![SeenClassLabel, ClassLabel]]))
            .and_then(|s| {
                s.declare(
                    "hasSameAttribute",
                    vec![vec![Image, AttributeVector], vec![Image, AttributeVector]],
                )
            })
            .expect("standard predicates are distinct");
        for (prefix, sort) in [
            ("x", Image),
            ("l", ClassLabel),
            ("lseen", SeenClassLabel),
            ("q", MacroLabel),
            ("a", AttributeVector),
        ] {
            sig.declare_prefix(prefix, sort);
        }
        sig
    }

    /// Adds a predicate; `args[i]` lists the sorts accepted at position `i`.
    pub fn declare(&mut self, name: &str, args: Vec<Vec<Sort>>) -> Result<&mut Self> {
        if self.predicates.contains_key(name) {
            return Err(Error::Config(format!("predicate `{name}` declared twice")));
        }
        self.predicates.insert(name.to_string(), args);
        Ok(self)
    }

    pub fn declare_prefix(&mut self, prefix: &str, sort: Sort) {
        self.prefixes.retain(|(p, _)| p != prefix);
        self.prefixes.push((prefix.to_string(), sort));
        self.prefixes
            .sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    }

    pub fn predicate(&self, name: &str) -> Option<&[Vec<Sort>]> {
        self.predicates.get(name).map(Vec::as_slice)
    }

    pub fn sort_of(&self, var: &str) -> Option<Sort> {
        self.prefixes
            .iter()
            .find(|(p, _)| var.starts_with(p.as_str()))
            .map(|&(_, s)| s)
    }

    /// Domain walked by a binding, or why the variables cannot share one.
    pub fn binding_domain(&self, binding: &VarBinding) -> std::result::Result<Domain, String> {
        let mut sorts = Vec::new();
        for v in &binding.vars {
            sorts.push(
                self.sort_of(v)
                    .ok_or_else(|| format!("cannot determine the sort of `{v}`"))?,
            );
        }
        let count = |s: Sort| sorts.iter().filter(|&&t| t == s).count();
        let only = |allowed: &[Sort]| sorts.iter().all(|s| allowed.contains(s));
        let (images, attrs) = (count(Sort::Image), count(Sort::AttributeVector));
        if images > 0 {
            if images == 1 && only(&[Sort::Image, Sort::ClassLabel, Sort::SeenClassLabel, Sort::MacroLabel]) {
                return Ok(Domain::Samples);
            }
        } else if attrs > 0 {
            if attrs == 1 && only(&[Sort::AttributeVector, Sort::ClassLabel, Sort::SeenClassLabel]) {
                return Ok(Domain::Classes);
            }
        } else if only(&[Sort::ClassLabel, Sort::SeenClassLabel]) {
            return Ok(Domain::Classes);
        } else if sorts.len() == 1 && sorts[0] == Sort::MacroLabel {
            return Ok(Domain::Macros);
        }
        let names: Vec<_> = sorts.iter().map(|s| s.name()).collect();
        Err(format!(
            "variables ({}) of sorts ({}) cannot be bound together",
            binding.vars.join(", "),
            names.join(", ")
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

/// Static checks of one formula; an empty list means it is well formed.
pub fn validate(formula: &Formula, sig: &Signature) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check(formula, sig, &mut Vec::new(), &mut out);
    out
}

fn push(out: &mut Vec<Diagnostic>, pos: Pos, message: String) {
    out.push(Diagnostic { pos, message });
}

fn check(f: &Formula, sig: &Signature, scope: &mut Vec<String>, out: &mut Vec<Diagnostic>) {
    match f {
        Formula::Pred { name, args, pos } => {
            let Some(expected) = sig.predicate(name) else {
                push(out, *pos, format!("unknown predicate `{name}`"));
                return;
            };
            if expected.len() != args.len() {
                push(
                    out,
                    *pos,
                    format!("`{name}` takes {} argument(s), got {}", expected.len(), args.len()),
                );
                return;
            }
            for (arg, allowed) in args.iter().zip(expected) {
                if !scope.contains(arg) {
                    push(out, *pos, format!("unbound variable `{arg}`"));
                    continue;
                }
                match sig.sort_of(arg) {
                    Some(s) if allowed.contains(&s) => {}
                    Some(s) => {
                        let names: Vec<_> = allowed.iter().map(|s| s.name()).collect();
                        push(
                            out,
                            *pos,
                            format!(
                                "`{arg}` has sort {} but `{name}` expects {}",
                                s.name(),
                                names.join(" or ")
                            ),
                        );
                    }
                    None => push(out, *pos, format!("cannot determine the sort of `{arg}`")),
                }
            }
        }
        Formula::Not(a) => check(a, sig, scope, out),
        Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
            check(a, sig, scope, out);
            check(b, sig, scope, out);
        }
        Formula::Quant {
            binding,
            guard,
            body,
            pos,
            ..
        } => {
            if binding.diag && binding.vars.len() < 2 {
                push(out, *pos, "diag binding needs at least two variables".into());
            }
            if !binding.diag && binding.vars.len() != 1 {
                push(out, *pos, "a plain binding introduces exactly one variable".into());
            }
            let outer = scope.len();
            for v in &binding.vars {
                if scope.contains(v) {
                    push(out, *pos, format!("variable `{v}` is already bound"));
                }
                scope.push(v.clone());
            }
            if let Err(msg) = sig.binding_domain(binding) {
                push(out, *pos, msg);
            }
            if let Some(g) = guard {
                for side in [&g.lhs, &g.rhs] {
                    if !scope.contains(side) {
                        push(out, g.pos, format!("unbound variable `{side}` in guard"));
                        continue;
                    }
                    match sig.sort_of(side) {
                        Some(s) if s.is_label() => {}
                        Some(s) => push(
                            out,
                            g.pos,
                            format!("guard compares `{side}` of non-label sort {}", s.name()),
                        ),
                        None => push(out, g.pos, format!("cannot determine the sort of `{side}`")),
                    }
                }
            }
            check(body, sig, scope, out);
            scope.truncate(outer);
        }
    }
}

/// Validates a whole knowledge base, collecting every diagnostic.
pub fn validate_all(axioms: &[Axiom], sig: &Signature) -> Result<()> {
    let mut lines = Vec::new();
    for ax in axioms {
        for d in validate(&ax.formula, sig) {
            lines.push(format!("{}: {d}", ax.name));
        }
    }
    if lines.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(lines))
    }
}
