use super::ast::{Formula, Rel, Term};
use super::sexpr::{read_all, Pos, Sexp};
use crate::rational::parse_q;
use crate::registry::FuncRegistry;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownFunction(String),
    UnboundVariable(String),
    FunctionInBound,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownFunction(n) => write!(f, "unknown function symbol `{n}`"),
            ParseErrorKind::UnboundVariable(n) => {
                write!(f, "variable `{n}` in a quantifier bound is not in scope")
            }
            ParseErrorKind::FunctionInBound => {
                write!(f, "quantifier bounds must not contain function symbols")
            }
        }
    }
}

fn err(pos: Pos, kind: ParseErrorKind) -> ParseError {
    ParseError { line: pos.line, col: pos.col, kind }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    err(pos, ParseErrorKind::Syntax(msg.into()))
}

const RESERVED: &[&str] =
    &["and", "or", "not", "forall", "exists", "+", "-", "*", ">", ">=", "<", "<=", "=", "!="];

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '.')
        && !RESERVED.contains(&s)
}

fn looks_numeric(s: &str) -> bool {
    let body = s.strip_prefix('-').or_else(|| s.strip_prefix('+')).unwrap_or(s);
    body.starts_with(|c: char| c.is_ascii_digit() || c == '.')
}

/// Parses a term; `resolve_fn` maps a head symbol to a function handle.
pub(crate) fn term_from_sexp(
    e: &Sexp,
    resolve_fn: &dyn Fn(&str) -> Option<super::FuncId>,
) -> Result<Term, ParseError> {
    match e {
        Sexp::Atom(s, p) => {
            if looks_numeric(s) {
                parse_q(s).map(Term::Const).map_err(|_| {
                    syntax(*p, format!("malformed number `{s}` (use exact decimals or n/d)"))
                })
            } else if is_ident(s) {
                Ok(Term::Var(s.clone()))
            } else {
                Err(syntax(*p, format!("unexpected token `{s}` in term")))
            }
        }
        Sexp::List(xs, p) => {
            let head = xs.first().and_then(|h| h.as_atom()).ok_or_else(|| syntax(*p, "expected an operator"))?;
            let args = &xs[1..];
            let sub = |i: usize| term_from_sexp(&args[i], resolve_fn);
            match head {
                "+" | "*" => {
                    if args.len() < 2 {
                        return Err(syntax(*p, format!("`{head}` needs at least two arguments")));
                    }
                    let mut acc = sub(0)?;
                    for i in 1..args.len() {
                        let b = sub(i)?;
                        acc = if head == "+" { Term::add(acc, b) } else { Term::mul(acc, b) };
                    }
                    Ok(acc)
                }
                "-" => match args.len() {
                    1 => Ok(Term::neg_raw(sub(0)?)),
                    2 => Ok(Term::sub(sub(0)?, sub(1)?)),
                    _ => Err(syntax(*p, "`-` takes one or two arguments")),
                },
                name if is_ident(name) => {
                    let f = resolve_fn(name)
                        .ok_or_else(|| err(xs[0].pos(), ParseErrorKind::UnknownFunction(name.to_string())))?;
                    if args.len() != 1 {
                        return Err(syntax(*p, format!("function `{name}` takes one argument")));
                    }
                    Ok(Term::app(f, sub(0)?))
                }
                other => Err(syntax(xs[0].pos(), format!("unexpected `{other}` in term"))),
            }
        }
    }
}

/// `lhs - rhs`, leaving `lhs` alone when `rhs` is the literal zero.
fn diff(a: Term, b: Term) -> Term {
    if b.is_zero_const() {
        a
    } else {
        Term::sub(a, b)
    }
}

struct FormulaParser<'a> {
    reg: &'a FuncRegistry,
    all_binders: BTreeSet<String>,
}

impl FormulaParser<'_> {
    fn term(&self, e: &Sexp) -> Result<Term, ParseError> {
        term_from_sexp(e, &|n| self.reg.lookup(n))
    }

    fn formula(&self, e: &Sexp, scope: &mut Vec<String>) -> Result<Formula, ParseError> {
        let (xs, p) = match e {
            Sexp::List(xs, p) => (xs, *p),
            Sexp::Atom(s, p) => {
                return match s.as_str() {
                    "true" => Ok(Formula::And(vec![])),
                    "false" => Ok(Formula::Or(vec![])),
                    _ => Err(syntax(*p, format!("expected a formula, found `{s}`"))),
                }
            }
        };
        let head = xs.first().and_then(|h| h.as_atom()).ok_or_else(|| syntax(p, "expected a connective"))?;
        let args = &xs[1..];
        let two = |this: &Self| -> Result<(Term, Term), ParseError> {
            if args.len() != 2 {
                return Err(syntax(p, format!("`{head}` takes two arguments")));
            }
            Ok((this.term(&args[0])?, this.term(&args[1])?))
        };
        match head {
            ">" => two(self).map(|(a, b)| Formula::atom(diff(a, b), Rel::Gt)),
            ">=" => two(self).map(|(a, b)| Formula::atom(diff(a, b), Rel::Geq)),
            "<" => two(self).map(|(a, b)| Formula::atom(diff(b, a), Rel::Gt)),
            "<=" => two(self).map(|(a, b)| Formula::atom(diff(b, a), Rel::Geq)),
            "=" => two(self).map(|(a, b)| {
                Formula::And(vec![
                    Formula::geq(diff(a.clone(), b.clone())),
                    Formula::geq(diff(b, a)),
                ])
            }),
            "!=" => two(self).map(|(a, b)| {
                Formula::Or(vec![Formula::gt(diff(a.clone(), b.clone())), Formula::gt(diff(b, a))])
            }),
            "and" | "or" => {
                let fs = args.iter().map(|a| self.formula(a, scope)).collect::<Result<Vec<_>, _>>()?;
                Ok(if head == "and" { Formula::And(fs) } else { Formula::Or(fs) })
            }
            "not" => {
                if args.len() != 1 {
                    return Err(syntax(p, "`not` takes one argument"));
                }
                Ok(Formula::not(self.formula(&args[0], scope)?))
            }
            "forall" | "exists" => {
                if args.len() != 2 {
                    return Err(syntax(p, format!("`{head}` expects a binder and a body")));
                }
                let b = args[0]
                    .as_list()
                    .filter(|b| b.len() == 3)
                    .ok_or_else(|| syntax(args[0].pos(), "binder must look like (v lo hi)"))?;
                let v = b[0]
                    .as_atom()
                    .filter(|v| is_ident(v))
                    .ok_or_else(|| syntax(b[0].pos(), "binder variable must be an identifier"))?
                    .to_string();
                let lo = self.bound(&b[1], &v, scope)?;
                let hi = self.bound(&b[2], &v, scope)?;
                scope.push(v.clone());
                let body = self.formula(&args[1], scope);
                scope.pop();
                let body = body?;
                Ok(if head == "forall" {
                    Formula::forall(&v, lo, hi, body)
                } else {
                    Formula::exists(&v, lo, hi, body)
                })
            }
            other => Err(syntax(xs[0].pos(), format!("unknown connective `{other}`"))),
        }
    }

    fn bound(&self, e: &Sexp, own: &str, scope: &[String]) -> Result<Term, ParseError> {
        let t = self.term(e)?;
        if !t.is_function_free() {
            return Err(err(e.pos(), ParseErrorKind::FunctionInBound));
        }
        for v in t.vars() {
            let in_scope = scope.iter().any(|s| s == &v);
            if v == own || (!in_scope && self.all_binders.contains(&v)) {
                return Err(err(e.pos(), ParseErrorKind::UnboundVariable(v)));
            }
        }
        Ok(t)
    }
}

fn collect_binders(e: &Sexp, out: &mut BTreeSet<String>) {
    if let Sexp::List(xs, _) = e {
        if matches!(xs.first().and_then(|h| h.as_atom()), Some("forall" | "exists")) {
            if let Some(b) = xs.get(1).and_then(|b| b.as_list()) {
                if let Some(v) = b.first().and_then(|v| v.as_atom()) {
                    out.insert(v.to_string());
                }
            }
        }
        xs.iter().for_each(|x| collect_binders(x, out));
    }
}

fn single(text: &str) -> Result<Sexp, ParseError> {
    let mut es = read_all(text).map_err(|e| syntax(e.pos, e.msg))?;
    match es.len() {
        1 => Ok(es.pop().unwrap()),
        0 => Err(syntax(Pos { line: 1, col: 1 }, "empty input")),
        _ => Err(syntax(es[1].pos(), "trailing input after the formula")),
    }
}

/// Parses one formula in the s-expression grammar.  Sugar relations
/// (`<`, `<=`, `=`, `!=`) are rewritten into `t ≥ 0` / `t > 0` atoms.
pub fn parse_formula(text: &str, reg: &FuncRegistry) -> Result<Formula, ParseError> {
    let e = single(text)?;
    formula_from_sexp(&e, reg)
}

pub(crate) fn formula_from_sexp(e: &Sexp, reg: &FuncRegistry) -> Result<Formula, ParseError> {
    let mut all_binders = BTreeSet::new();
    collect_binders(e, &mut all_binders);
    let p = FormulaParser { reg, all_binders };
    p.formula(e, &mut Vec::new())
}

pub fn parse_term(text: &str, reg: &FuncRegistry) -> Result<Term, ParseError> {
    let e = single(text)?;
    term_from_sexp(&e, &|n| reg.lookup(n))
}
