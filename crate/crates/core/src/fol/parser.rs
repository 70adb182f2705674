//! Hand-written lexer and recursive-descent parser.
//!
//! Precedence from loosest to tightest: quantifier body, `->` (right
//! associative), `or`, `and`, `not`. Variables must be bound by an enclosing
//! quantifier before use.

use super::{Axiom, Formula, Guard, GuardOp, Pos, QuantKind, VarBinding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Axiom,
    Forall,
    Exists,
    Diag,
    Where,
    Not,
    And,
    Or,
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Arrow,
    EqEq,
    NotEq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Eof => "end of input".to_string(),
            Tok::Axiom => "`axiom`".into(),
            Tok::Forall => "`forall`".into(),
            Tok::Exists => "`exists`".into(),
            Tok::Diag => "`diag`".into(),
            Tok::Where => "`where`".into(),
            Tok::Not => "`not`".into(),
            Tok::And => "`and`".into(),
            Tok::Or => "`or`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
        }
    }
}

fn syntax(pos: Pos, message: impl Into<String>) -> Error {
    Error::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1, 1);

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump(&mut chars);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    bump(&mut chars);
                } else {
                    break;
                }
            }
            let tok = match word.as_str() {
                "axiom" => Tok::Axiom,
                "forall" => Tok::Forall,
                "exists" => Tok::Exists,
                "diag" => Tok::Diag,
                "where" => Tok::Where,
                "not" => Tok::Not,
                "and" => Tok::And,
                "or" => Tok::Or,
                _ => Tok::Ident(word),
            };
            out.push((tok, pos));
            continue;
        }
        bump(&mut chars);
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '.' => Tok::Dot,
            '-' if chars.peek() == Some(&'>') => {
                bump(&mut chars);
                Tok::Arrow
            }
            '=' if chars.peek() == Some(&'=') => {
                bump(&mut chars);
                Tok::EqEq
            }
            '!' if chars.peek() == Some(&'=') => {
                bump(&mut chars);
                Tok::NotEq
            }
            other => return Err(syntax(pos, format!("unexpected character `{other}`"))),
        };
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, column }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    scope: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Pos> {
        let (tok, pos) = self.next();
        if tok == want {
            Ok(pos)
        } else {
            Err(syntax(
                pos,
                format!("expected {}, found {}", want.describe(), tok.describe()),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos)> {
        match self.next() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (tok, pos) => Err(syntax(pos, format!("expected {what}, found {}", tok.describe()))),
        }
    }

    fn bound_var(&mut self) -> Result<(String, Pos)> {
        let (name, pos) = self.ident("a variable")?;
        if !self.scope.contains(&name) {
            return Err(syntax(pos, format!("unbound variable `{name}`")));
        }
        Ok((name, pos))
    }

    fn axiom(&mut self) -> Result<Axiom> {
        let pos = self.expect(Tok::Axiom)?;
        let (name, _) = self.ident("an axiom name")?;
        self.expect(Tok::Colon)?;
        let formula = self.formula()?;
        Ok(Axiom { name, formula, pos })
    }

    fn formula(&mut self) -> Result<Formula> {
        match self.peek() {
            Tok::Forall | Tok::Exists => self.quantified(),
            _ => self.implication(),
        }
    }

    fn quantified(&mut self) -> Result<Formula> {
        let (tok, pos) = self.next();
        let kind = if tok == Tok::Forall {
            QuantKind::Forall
        } else {
            QuantKind::Exists
        };
        let (diag, binding) = self.binding()?;
        let outer = self.scope.len();
        for (var, var_pos) in &binding {
            if self.scope.contains(var) {
                return Err(syntax(*var_pos, format!("variable `{var}` is already bound")));
            }
            self.scope.push(var.clone());
        }
        let binding = VarBinding {
            diag,
            vars: binding.into_iter().map(|(v, _)| v).collect(),
        };
        let guard = if *self.peek() == Tok::Where {
            self.next();
            Some(self.guard()?)
        } else {
            None
        };
        self.expect(Tok::Dot)?;
        let body = self.formula()?;
        self.scope.truncate(outer);
        Ok(Formula::Quant {
            kind,
            binding,
            guard,
            body: Box::new(body),
            pos,
        })
    }

    fn binding(&mut self) -> Result<(bool, Vec<(String, Pos)>)> {
        if *self.peek() == Tok::Diag {
            let pos = self.pos();
            self.next();
            self.expect(Tok::LParen)?;
            let mut vars = vec![self.ident("a variable")?];
            while *self.peek() == Tok::Comma {
                self.next();
                vars.push(self.ident("a variable")?);
            }
            self.expect(Tok::RParen)?;
            if vars.len() < 2 {
                return Err(syntax(pos, "diag binding needs at least two variables"));
            }
            for (i, (v, p)) in vars.iter().enumerate() {
                if vars[..i].iter().any(|(w, _)| w == v) {
                    return Err(syntax(*p, format!("variable `{v}` listed twice")));
                }
            }
            Ok((true, vars))
        } else {
            Ok((false, vec![self.ident("a variable or diag(...)")?]))
        }
    }

    fn guard(&mut self) -> Result<Guard> {
        let (lhs, pos) = self.bound_var()?;
        let op = match self.next() {
            (Tok::EqEq, _) => GuardOp::Eq,
            (Tok::NotEq, _) => GuardOp::Ne,
            (tok, p) => return Err(syntax(p, format!("expected `==` or `!=`, found {}", tok.describe()))),
        };
        let (rhs, _) = self.bound_var()?;
        Ok(Guard { lhs, op, rhs, pos })
    }

    fn implication(&mut self) -> Result<Formula> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Arrow {
            self.next();
            let rhs = self.formula()?;
            return Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.next();
            let rhs = self.conjunction()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.next();
            let rhs = self.unary()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::Not => {
                self.next();
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Tok::LParen => {
                self.next();
                let inner = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let pos = self.pos();
                self.next();
                self.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    args.push(self.bound_var()?.0);
                    while *self.peek() == Tok::Comma {
                        self.next();
                        args.push(self.bound_var()?.0);
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(Formula::Pred { name, args, pos })
            }
            Tok::Forall | Tok::Exists => Err(syntax(
                self.pos(),
                "a quantifier used as an operand must be parenthesized",
            )),
            tok => Err(syntax(
                self.pos(),
                format!("expected a formula, found {}", tok.describe()),
            )),
        }
    }
}

/// Parses every axiom of a file.
pub fn parse_axioms(text: &str) -> Result<Vec<Axiom>> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        scope: Vec::new(),
    };
    let mut out: Vec<Axiom> = Vec::new();
    while *p.peek() != Tok::Eof {
        let ax = p.axiom()?;
        if out.iter().any(|a| a.name == ax.name) {
            return Err(syntax(ax.pos, format!("duplicate axiom name `{}`", ax.name)));
        }
        out.push(ax);
    }
    Ok(out)
}

/// Parses exactly one `axiom NAME : formula`.
pub fn parse_axiom(text: &str) -> Result<Axiom> {
    let mut all = parse_axioms(text)?;
    match all.len() {
        1 => Ok(all.remove(0)),
        0 => Err(syntax(
            Pos { line: 1, column: 1 },
            "expected `axiom`, found end of input",
        )),
        _ => Err(syntax(all[1].pos, "expected a single axiom")),
    }
}
