//! The axiom language: abstract syntax, parser, printer and validation.
//!
//! ```text
//! axiom phi3: forall diag(x1, l1) . forall diag(x2, l2) where l1 == l2 . hasSameAttribute(x1, x2)
//! ```

mod builtin;
mod parser;
mod printer;
mod signature;

use std::fmt;

pub use builtin::{builtin_axioms, BUILTIN_AXIOMS};
pub use parser::{parse_axiom, parse_axioms};
pub use printer::{format_axiom, format_formula};
pub use signature::{validate, validate_all, Diagnostic, Domain, Signature, Sort};

/// Source position (1-based). Positions never take part in equality, so two
/// formulas are equal exactly when their structure is.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Pos) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantKind {
    Forall,
    Exists,
}

impl QuantKind {
    pub fn keyword(self) -> &'static str {
        match self {
            QuantKind::Forall => "forall",
            QuantKind::Exists => "exists",
        }
    }
}

/// Variables introduced by one quantifier. A diagonal binding walks its
/// variables in lockstep over one shared axis instead of their product.
#[derive(Debug, Clone, PartialEq)]
pub struct VarBinding {
    pub diag: bool,
    pub vars: Vec<String>,
}

impl VarBinding {
    pub fn single(var: impl Into<String>) -> Self {
        VarBinding {
            diag: false,
            vars: vec![var.into()],
        }
    }

    pub fn diag<S: Into<String>>(vars: impl IntoIterator<Item = S>) -> Self {
        VarBinding {
            diag: true,
            vars: vars.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardOp {
    Eq,
    Ne,
}

impl GuardOp {
    pub fn symbol(self) -> &'static str {
        match self {
            GuardOp::Eq => "==",
            GuardOp::Ne => "!=",
        }
    }
}

/// Label constraint restricting the index set of a quantifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub lhs: String,
    pub op: GuardOp,
    pub rhs: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Pred {
        name: String,
        args: Vec<String>,
        pos: Pos,
    },
    Not(Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Quant {
        kind: QuantKind,
        binding: VarBinding,
        guard: Option<Guard>,
        body: Box<Formula>,
        pos: Pos,
    },
}

impl Formula {
    pub fn pred<S: Into<String>>(name: &str, args: impl IntoIterator<Item = S>) -> Formula {
        Formula::Pred {
            name: name.to_string(),
            args: args.into_iter().map(Into::into).collect(),
            pos: Pos::default(),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn quant(kind: QuantKind, binding: VarBinding, guard: Option<Guard>, body: Formula) -> Formula {
        Formula::Quant {
            kind,
            binding,
            guard,
            body: Box::new(body),
            pos: Pos::default(),
        }
    }

    pub fn forall(binding: VarBinding, body: Formula) -> Formula {
        Formula::quant(QuantKind::Forall, binding, None, body)
    }

    pub fn exists(binding: VarBinding, body: Formula) -> Formula {
        Formula::quant(QuantKind::Exists, binding, None, body)
    }

    /// Nesting depth; atoms have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Pred { .. } => 1,
            Formula::Not(a) => 1 + a.depth(),
            Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => 1 + a.depth().max(b.depth()),
            Formula::Quant { body, .. } => 1 + body.depth(),
        }
    }

    /// Names of all predicates used, in order of appearance.
    pub fn predicates(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_preds(&mut |name, _| out.push(name));
        out
    }

    fn visit_preds<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a [String])) {
        match self {
            Formula::Pred { name, args, .. } => f(name, args),
            Formula::Not(a) => a.visit_preds(f),
            Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
                a.visit_preds(f);
                b.visit_preds(f);
            }
            Formula::Quant { body, .. } => body.visit_preds(f),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_formula(self))
    }
}

/// A named top-level formula.
#[derive(Debug, Clone, PartialEq)]
pub struct Axiom {
    pub name: String,
    pub formula: Formula,
    pub pos: Pos,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_axiom(self))
    }
}
