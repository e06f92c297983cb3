use crate::rational::{qi, Q};
use num_traits::{One, Zero};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Handle of a registered function symbol.  The name travels with the handle
/// so terms print without a registry at hand.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncId {
    name: Arc<str>,
    index: u32,
}

impl FuncId {
    pub(crate) fn new(name: &str, index: u32) -> Self {
        FuncId { name: Arc::from(name), index }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Q),
    Add(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    App(FuncId, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn cnst(c: Q) -> Term {
        Term::Const(c)
    }

    pub fn int(n: i64) -> Term {
        Term::Const(qi(n))
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Term, b: Term) -> Term {
        Term::Mul(Box::new(a), Box::new(b))
    }

    pub fn app(f: FuncId, arg: Term) -> Term {
        Term::App(f, Box::new(arg))
    }

    /// `a - b`, spelled as `a + (-1)·b`.
    pub fn sub(a: Term, b: Term) -> Term {
        Term::add(a, Term::neg_raw(b))
    }

    pub(crate) fn neg_raw(t: Term) -> Term {
        Term::mul(Term::Const(-Q::one()), t)
    }

    /// Negation that undoes itself: constants flip sign and `(-1)·t` unwraps.
    pub fn neg(t: Term) -> Term {
        match t {
            Term::Const(c) => Term::Const(-c),
            Term::Mul(a, b) if matches!(&*a, Term::Const(c) if *c == -Q::one()) => *b,
            other => Term::neg_raw(other),
        }
    }

    pub fn is_function_free(&self) -> bool {
        match self {
            Term::Var(_) | Term::Const(_) => true,
            Term::Add(a, b) | Term::Mul(a, b) => a.is_function_free() && b.is_function_free(),
            Term::App(..) => false,
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Const(_) => {}
            Term::Add(a, b) | Term::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::App(_, a) => a.collect_vars(out),
        }
    }

    pub fn mentions(&self, v: &str) -> bool {
        match self {
            Term::Var(x) => x == v,
            Term::Const(_) => false,
            Term::Add(a, b) | Term::Mul(a, b) => a.mentions(v) || b.mentions(v),
            Term::App(_, a) => a.mentions(v),
        }
    }

    /// Nesting depth of function applications.
    pub fn func_depth(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(_) => 0,
            Term::Add(a, b) | Term::Mul(a, b) => a.func_depth().max(b.func_depth()),
            Term::App(_, a) => 1 + a.func_depth(),
        }
    }

    /// Every subterm, children before parents.
    pub fn subterms_into(&self, out: &mut Vec<Term>) {
        match self {
            Term::Var(_) | Term::Const(_) => {}
            Term::Add(a, b) | Term::Mul(a, b) => {
                a.subterms_into(out);
                b.subterms_into(out);
            }
            Term::App(_, a) => a.subterms_into(out),
        }
        out.push(self.clone());
    }

    /// Replace every occurrence of the subterm `from` by `to`.
    pub fn replace(&self, from: &Term, to: &Term) -> Term {
        if self == from {
            return to.clone();
        }
        match self {
            Term::Var(_) | Term::Const(_) => self.clone(),
            Term::Add(a, b) => Term::add(a.replace(from, to), b.replace(from, to)),
            Term::Mul(a, b) => Term::mul(a.replace(from, to), b.replace(from, to)),
            Term::App(f, a) => Term::app(f.clone(), a.replace(from, to)),
        }
    }

    pub fn subst_var(&self, v: &str, to: &Term) -> Term {
        match self {
            Term::Var(x) if x == v => to.clone(),
            Term::Var(_) | Term::Const(_) => self.clone(),
            Term::Add(a, b) => Term::add(a.subst_var(v, to), b.subst_var(v, to)),
            Term::Mul(a, b) => Term::mul(a.subst_var(v, to), b.subst_var(v, to)),
            Term::App(f, a) => Term::app(f.clone(), a.subst_var(v, to)),
        }
    }

    /// Exact value when the term is closed and function-free.
    pub fn const_value(&self) -> Option<Q> {
        match self {
            Term::Const(c) => Some(c.clone()),
            Term::Var(_) | Term::App(..) => None,
            Term::Add(a, b) => Some(a.const_value()? + b.const_value()?),
            Term::Mul(a, b) => Some(a.const_value()? * b.const_value()?),
        }
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Term::Const(c) if c.is_zero())
    }

    /// `c0 + z·(c1 + z·(…))` with `z` the given argument.
    pub fn horner(coeffs: &[Q], z: &Term) -> Term {
        let mut acc: Option<Term> = None;
        for c in coeffs.iter().rev() {
            acc = Some(match acc {
                None => Term::Const(c.clone()),
                Some(inner) => {
                    let prod = Term::mul(z.clone(), inner);
                    if c.is_zero() {
                        prod
                    } else {
                        Term::add(Term::Const(c.clone()), prod)
                    }
                }
            });
        }
        acc.unwrap_or_else(|| Term::Const(Q::zero()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Geq,
    Gt,
}

impl Rel {
    pub fn flip(self) -> Rel {
        match self {
            Rel::Geq => Rel::Gt,
            Rel::Gt => Rel::Geq,
        }
    }
}

/// `lhs ⪰ 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub lhs: Term,
    pub rel: Rel,
}

impl Atom {
    pub fn new(lhs: Term, rel: Rel) -> Self {
        Atom { lhs, rel }
    }

    /// `¬(t ≥ 0) = -t > 0`, `¬(t > 0) = -t ≥ 0`.
    pub fn negate(&self) -> Atom {
        Atom { lhs: Term::neg(self.lhs.clone()), rel: self.rel.flip() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quant {
    Forall,
    Exists,
}

impl Quant {
    pub fn dual(self) -> Quant {
        match self {
            Quant::Forall => Quant::Exists,
            Quant::Exists => Quant::Forall,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atomic(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Forall(String, Term, Term, Box<Formula>),
    Exists(String, Term, Term, Box<Formula>),
}

impl Formula {
    pub fn atom(lhs: Term, rel: Rel) -> Formula {
        Formula::Atomic(Atom::new(lhs, rel))
    }

    pub fn gt(lhs: Term) -> Formula {
        Formula::atom(lhs, Rel::Gt)
    }

    pub fn geq(lhs: Term) -> Formula {
        Formula::atom(lhs, Rel::Geq)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn quant(q: Quant, v: &str, lo: Term, hi: Term, body: Formula) -> Formula {
        match q {
            Quant::Forall => Formula::Forall(v.to_string(), lo, hi, Box::new(body)),
            Quant::Exists => Formula::Exists(v.to_string(), lo, hi, Box::new(body)),
        }
    }

    pub fn forall(v: &str, lo: Term, hi: Term, body: Formula) -> Formula {
        Formula::quant(Quant::Forall, v, lo, hi, body)
    }

    pub fn exists(v: &str, lo: Term, hi: Term, body: Formula) -> Formula {
        Formula::quant(Quant::Exists, v, lo, hi, body)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        match self {
            Formula::Atomic(a) => a.lhs.vars(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().flat_map(|f| f.free_vars()).collect(),
            Formula::Not(f) => f.free_vars(),
            Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
                let mut out = body.free_vars();
                out.remove(v);
                lo.collect_vars(&mut out);
                hi.collect_vars(&mut out);
                out
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// All variable names, bound or free.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| t.collect_vars(&mut out));
        self.visit_binders(&mut |v| {
            out.insert(v.to_string());
        });
        out
    }

    pub fn visit_terms(&self, f: &mut dyn FnMut(&Term)) {
        match self {
            Formula::Atomic(a) => f(&a.lhs),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| g.visit_terms(f)),
            Formula::Not(g) => g.visit_terms(f),
            Formula::Forall(_, lo, hi, body) | Formula::Exists(_, lo, hi, body) => {
                f(lo);
                f(hi);
                body.visit_terms(f);
            }
        }
    }

    pub fn visit_binders(&self, f: &mut dyn FnMut(&str)) {
        match self {
            Formula::Atomic(_) => {}
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| g.visit_binders(f)),
            Formula::Not(g) => g.visit_binders(f),
            Formula::Forall(v, _, _, body) | Formula::Exists(v, _, _, body) => {
                f(v);
                body.visit_binders(f);
            }
        }
    }

    pub fn visit_atoms(&self, f: &mut dyn FnMut(&Atom)) {
        match self {
            Formula::Atomic(a) => f(a),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| g.visit_atoms(f)),
            Formula::Not(g) => g.visit_atoms(f),
            Formula::Forall(_, _, _, body) | Formula::Exists(_, _, _, body) => body.visit_atoms(f),
        }
    }

    pub fn is_function_free(&self) -> bool {
        let mut ok = true;
        self.visit_terms(&mut |t| ok &= t.is_function_free());
        ok
    }

    /// Apply `f` to every term (atom sides and quantifier bounds).
    pub fn map_terms(&self, f: &dyn Fn(&Term) -> Term) -> Formula {
        match self {
            Formula::Atomic(a) => Formula::Atomic(Atom::new(f(&a.lhs), a.rel)),
            Formula::And(fs) => Formula::And(fs.iter().map(|g| g.map_terms(f)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|g| g.map_terms(f)).collect()),
            Formula::Not(g) => Formula::not(g.map_terms(f)),
            Formula::Forall(v, lo, hi, body) => {
                Formula::Forall(v.clone(), f(lo), f(hi), Box::new(body.map_terms(f)))
            }
            Formula::Exists(v, lo, hi, body) => {
                Formula::Exists(v.clone(), f(lo), f(hi), Box::new(body.map_terms(f)))
            }
        }
    }

    /// Capture-naive substitution of a free variable; callers keep names apart.
    pub fn subst_var(&self, v: &str, to: &Term) -> Formula {
        match self {
            Formula::Atomic(a) => Formula::Atomic(Atom::new(a.lhs.subst_var(v, to), a.rel)),
            Formula::And(fs) => Formula::And(fs.iter().map(|g| g.subst_var(v, to)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|g| g.subst_var(v, to)).collect()),
            Formula::Not(g) => Formula::not(g.subst_var(v, to)),
            Formula::Forall(x, lo, hi, body) | Formula::Exists(x, lo, hi, body) => {
                let q = if matches!(self, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
                let body = if x == v { (**body).clone() } else { body.subst_var(v, to) };
                Formula::quant(q, x, lo.subst_var(v, to), hi.subst_var(v, to), body)
            }
        }
    }

    pub fn count_atoms(&self) -> usize {
        let mut n = 0;
        self.visit_atoms(&mut |_| n += 1);
        n
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print::print_term(self))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print::print_formula(self))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print::print_formula(&Formula::Atomic(self.clone())))
    }
}
