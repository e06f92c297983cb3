use super::ast::{Formula, Rel, Term};
use crate::rational::fmt_q;
use num_traits::One;

fn is_minus_one(t: &Term) -> bool {
    matches!(t, Term::Const(c) if *c == -crate::rational::Q::one())
}

pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    write_term(t, &mut s);
    s
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Var(v) => out.push_str(v),
        Term::Const(c) => out.push_str(&fmt_q(c)),
        Term::Add(a, b) => {
            if let Term::Mul(m, rest) = &**b {
                if is_minus_one(m) {
                    out.push_str("(- ");
                    write_term(a, out);
                    out.push(' ');
                    write_term(rest, out);
                    out.push(')');
                    return;
                }
            }
            out.push_str("(+ ");
            write_term(a, out);
            out.push(' ');
            write_term(b, out);
            out.push(')');
        }
        Term::Mul(a, b) => {
            if is_minus_one(a) {
                out.push_str("(- ");
                write_term(b, out);
                out.push(')');
                return;
            }
            out.push_str("(* ");
            write_term(a, out);
            out.push(' ');
            write_term(b, out);
            out.push(')');
        }
        Term::App(f, a) => {
            out.push('(');
            out.push_str(f.name());
            out.push(' ');
            write_term(a, out);
            out.push(')');
        }
    }
}

pub fn print_formula(f: &Formula) -> String {
    let mut s = String::new();
    write_formula(f, &mut s);
    s
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::Atomic(a) => {
            out.push_str(match a.rel {
                Rel::Gt => "(> ",
                Rel::Geq => "(>= ",
            });
            write_term(&a.lhs, out);
            out.push_str(" 0)");
        }
        Formula::And(fs) | Formula::Or(fs) => {
            out.push_str(if matches!(f, Formula::And(_)) { "(and" } else { "(or" });
            for g in fs {
                out.push(' ');
                write_formula(g, out);
            }
            out.push(')');
        }
        Formula::Not(g) => {
            out.push_str("(not ");
            write_formula(g, out);
            out.push(')');
        }
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            out.push_str(if matches!(f, Formula::Forall(..)) { "(forall (" } else { "(exists (" });
            out.push_str(v);
            out.push(' ');
            write_term(lo, out);
            out.push(' ');
            write_term(hi, out);
            out.push_str(") ");
            write_formula(body, out);
            out.push(')');
        }
    }
}

/// Multi-line rendering: one quantifier per line, one clause per line.
pub fn pretty_formula(f: &Formula) -> String {
    let mut out = String::new();
    pretty(f, 0, &mut out);
    out
}

fn pretty(f: &Formula, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match f {
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            let kw = if matches!(f, Formula::Forall(..)) { "forall" } else { "exists" };
            out.push_str(&format!("{pad}({kw} ({v} {} {})\n", print_term(lo), print_term(hi)));
            pretty(body, indent + 2, out);
            out.push(')');
        }
        Formula::And(fs) | Formula::Or(fs) if !fs.is_empty() => {
            let kw = if matches!(f, Formula::And(_)) { "and" } else { "or" };
            out.push_str(&format!("{pad}({kw}"));
            for g in fs {
                out.push('\n');
                pretty(g, indent + 2, out);
            }
            out.push(')');
        }
        _ => {
            out.push_str(&pad);
            out.push_str(&print_formula(f));
        }
    }
}
