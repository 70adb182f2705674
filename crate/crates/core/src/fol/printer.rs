//! Canonical text with the fewest parentheses the grammar allows.

use super::{Axiom, Formula};

// Contexts, loosest first.
const ANY: u8 = 0;
const DISJ: u8 = 1;
const CONJ: u8 = 2;
const UNARY: u8 = 3;

fn level(f: &Formula) -> u8 {
    match f {
        Formula::Quant { .. } | Formula::Implies(..) => ANY,
        Formula::Or(..) => DISJ,
        Formula::And(..) => CONJ,
        Formula::Not(_) | Formula::Pred { .. } => UNARY,
    }
}

fn write(f: &Formula, ctx: u8, out: &mut String) {
    let paren = level(f) < ctx;
    if paren {
        out.push('(');
    }
    match f {
        Formula::Pred { name, args, .. } => {
            out.push_str(name);
            out.push('(');
            out.push_str(&args.join(", "));
            out.push(')');
        }
        Formula::Not(a) => {
            out.push_str("not ");
            write(a, UNARY, out);
        }
        Formula::Implies(a, b) => {
            write(a, DISJ, out);
            out.push_str(" -> ");
            write(b, ANY, out);
        }
        Formula::Or(a, b) => {
            write(a, DISJ, out);
            out.push_str(" or ");
            write(b, CONJ, out);
        }
        Formula::And(a, b) => {
            write(a, CONJ, out);
            out.push_str(" and ");
            write(b, UNARY, out);
        }
        Formula::Quant {
            kind,
            binding,
            guard,
            body,
            ..
        } => {
            out.push_str(kind.keyword());
            out.push(' ');
            if binding.diag {
                out.push_str("diag(");
                out.push_str(&binding.vars.join(", "));
                out.push(')');
            } else {
                out.push_str(&binding.vars.join(", "));
            }
            if let Some(g) = guard {
                out.push_str(&format!(" where {} {} {}", g.lhs, g.op.symbol(), g.rhs));
            }
            out.push_str(" . ");
            write(body, ANY, out);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn format_formula(f: &Formula) -> String {
    let mut out = String::new();
    write(f, ANY, &mut out);
    out
}

/// `axiom NAME: formula` on one line.
pub fn format_axiom(ax: &Axiom) -> String {
    format!("axiom {}: {}", ax.name, format_formula(&ax.formula))
}
