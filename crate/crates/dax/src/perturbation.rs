//! Admissible approximations of the function terms of a formula and the
//! universal and existential perturbations built from them.

use crate::enclosure::Enclosure;
use crate::formula::{
    assemble, cnf_to_formula, function_terms, normalize, split_prenex, Binder, Formula, FreshNames, Quant, Term,
};
use crate::interval::RatInterval;
use crate::ode::{approx_function, certify_candidate, CertifiedApprox, DivergenceError, Piece};
use crate::poly::{term_to_poly, UniPoly};
use crate::rational::{fmt_q, half, Q};
use crate::registry::FuncRegistry;
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerturbError {
    #[error("delta must satisfy 0 < delta < 1/2, got {}", fmt_q(.0))]
    InvalidDelta(Q),
    #[error("no approximant for function term `{0}`")]
    MissingApproximant(String),
    #[error("no enclosure interval for `{0}`")]
    MissingEnclosure(String),
    #[error("supplied approximant for `{func}` is not certified within {}", fmt_q(.eps))]
    Rejected { func: String, eps: Q },
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// User-chosen approximants by function name, as polynomials in `z`.
pub type ApproxPolicy = BTreeMap<String, UniPoly>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApproxEntry {
    pub term: Term,
    /// `I_e` for the argument `e` of `term`.
    pub window: RatInterval,
    pub approx: CertifiedApprox,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Approximation {
    pub entries: Vec<ApproxEntry>,
    pub norm_bound: Q,
}

impl Approximation {
    pub fn get(&self, t: &Term) -> Option<&ApproxEntry> {
        self.entries.iter().find(|e| &e.term == t)
    }
}

/// Largest per-term error bound; zero when there are no function terms.
pub fn approx_norm(a: &Approximation) -> Q {
    a.entries.iter().map(|e| e.approx.error_bound.clone()).max().unwrap_or_else(Q::zero)
}

fn check_delta(delta: &Q) -> Result<(), PerturbError> {
    if !delta.is_positive() || delta >= &half() {
        return Err(PerturbError::InvalidDelta(delta.clone()));
    }
    Ok(())
}

/// One certified approximant per function term of `f`, each on the argument
/// interval from `enc`.  Generated approximants target `delta/2`; supplied
/// ones only need to be certified below `delta`.
pub fn build_admissible_approx(
    f: &Formula,
    enc: &Enclosure,
    delta: &Q,
    reg: &FuncRegistry,
    policy: &ApproxPolicy,
) -> Result<Approximation, PerturbError> {
    check_delta(delta)?;
    let mut entries = Vec::new();
    for t in function_terms(f) {
        let Term::App(fid, e) = &t else { unreachable!() };
        let window = enc.get(e).cloned().ok_or_else(|| PerturbError::MissingEnclosure(e.to_string()))?;
        let def = reg.get(fid);
        let approx = match policy.get(fid.name()) {
            Some(p) => certify_candidate(def, vec![Piece::new(window.clone(), p.clone())], &window, delta)?
                .ok_or_else(|| PerturbError::Rejected { func: fid.name().to_string(), eps: delta.clone() })?,
            None => approx_function(def, &window, &(delta * half()))?,
        };
        entries.push(ApproxEntry { term: t.clone(), window, approx });
    }
    let mut a = Approximation { entries, norm_bound: Q::zero() };
    a.norm_bound = approx_norm(&a);
    Ok(a)
}

/// `A^∀(f, δ)`: every function term replaced by a universally quantified
/// variable ranging over the approximant value `± δ`.
pub fn perturb_forall(f: &Formula, approx: &Approximation, delta: &Q) -> Result<Formula, PerturbError> {
    perturb(f, approx, delta, Quant::Forall)
}

/// `A^∃(f, δ)`, the existential counterpart of [`perturb_forall`].
pub fn perturb_exists(f: &Formula, approx: &Approximation, delta: &Q) -> Result<Formula, PerturbError> {
    perturb(f, approx, delta, Quant::Exists)
}

fn perturb(f: &Formula, approx: &Approximation, delta: &Q, q: Quant) -> Result<Formula, PerturbError> {
    if !delta.is_positive() {
        return Err(PerturbError::InvalidDelta(delta.clone()));
    }
    let fts = function_terms(f);
    if fts.is_empty() {
        return Ok(f.clone());
    }
    let (mut prefix, cnf) = split_prenex(f);
    let mut fresh = FreshNames::avoiding(f.all_vars());
    // Function term -> its variable, innermost terms first.
    let mut subst: Vec<(Term, Term)> = Vec::new();
    let mut guards = Vec::new();
    for t in &fts {
        let Term::App(_, e) = t else { unreachable!() };
        let entry = approx.get(t).ok_or_else(|| PerturbError::MissingApproximant(t.to_string()))?;
        let arg = replace_all(e, &subst);
        let pieces = &entry.approx.pieces;
        let w = fresh.fresh();
        let center = if pieces.len() == 1 {
            Term::horner(pieces[0].poly.coeffs(), &arg)
        } else {
            let u = fresh.fresh();
            let (lo, hi) = value_hull(pieces);
            prefix.push(Binder { quant: q, var: u.clone(), lo: Term::Const(lo), hi: Term::Const(hi) });
            guards.push(graph(pieces, &arg, &Term::var(&u)));
            Term::var(&u)
        };
        prefix.push(Binder {
            quant: q,
            var: w.clone(),
            lo: Term::add(center.clone(), Term::Const(-delta.clone())),
            hi: Term::add(center, Term::Const(delta.clone())),
        });
        subst.push((t.clone(), Term::var(&w)));
    }
    let matrix = cnf_to_formula(&cnf).map_terms(&|t| replace_all(t, &subst));
    let body = match q {
        Quant::Forall => Formula::Or(guards.into_iter().map(Formula::not).chain([matrix]).collect()),
        Quant::Exists => Formula::And(guards.into_iter().chain([matrix]).collect()),
    };
    Ok(normalize(&assemble(&prefix, body)))
}

/// Replaces outermost matches first so nested applications are caught whole.
fn replace_all(t: &Term, subst: &[(Term, Term)]) -> Term {
    subst.iter().rev().fold(t.clone(), |acc, (from, to)| acc.replace(from, to))
}

fn value_hull(pieces: &[Piece]) -> (Q, Q) {
    let r = pieces
        .iter()
        .map(|p| p.poly.range_enclosure(&p.domain))
        .reduce(|a, b| a.hull(&b))
        .expect("at least one piece");
    (r.lo().clone(), r.hi().clone())
}

/// `⋁_k (e ∈ dom_k ∧ u = p_k(e))`.
fn graph(pieces: &[Piece], arg: &Term, u: &Term) -> Formula {
    Formula::Or(
        pieces
            .iter()
            .map(|p| {
                let val = Term::horner(p.poly.coeffs(), arg);
                Formula::And(vec![
                    Formula::geq(Term::sub(arg.clone(), Term::Const(p.domain.lo().clone()))),
                    Formula::geq(Term::sub(Term::Const(p.domain.hi().clone()), arg.clone())),
                    Formula::geq(Term::sub(u.clone(), val.clone())),
                    Formula::geq(Term::sub(val, u.clone())),
                ])
            })
            .collect(),
    )
}

/// Reads `(approx NAME POLY-IN-z)` forms.
pub fn parse_policy(text: &str, reg: &FuncRegistry) -> Result<ApproxPolicy, String> {
    use crate::formula::sexpr::read_all;
    use crate::formula::term_from_sexp;
    let forms = read_all(text).map_err(|e| format!("{}: {}", e.pos, e.msg))?;
    let mut out = ApproxPolicy::new();
    for f in &forms {
        let xs = f.as_list().ok_or_else(|| format!("{}: expected (approx name poly)", f.pos()))?;
        if xs.len() != 3 || xs[0].as_atom() != Some("approx") {
            return Err(format!("{}: expected (approx name poly)", f.pos()));
        }
        let name = xs[1].as_atom().ok_or_else(|| format!("{}: function name expected", xs[1].pos()))?;
        if reg.lookup(name).is_none() {
            return Err(format!("{}: unknown function `{name}`", xs[1].pos()));
        }
        let t = term_from_sexp(&xs[2], &|_| None).map_err(|e| e.to_string())?;
        let p = term_to_poly(&t, 1, &|v| (v == "z").then_some(0))
            .ok_or_else(|| format!("{}: approximant must be a polynomial in z", xs[2].pos()))?;
        out.insert(name.to_string(), p.to_uni(0).expect("univariate"));
    }
    Ok(out)
}

/// SMT-LIB2 script asserting `f` over the nonlinear reals; free variables are
/// declared as constants.
pub fn to_smt2(f: &Formula) -> String {
    let mut out = String::from("(set-logic NRA)\n");
    for v in f.free_vars() {
        out.push_str(&format!("(declare-fun {v} () Real)\n"));
    }
    out.push_str(&format!("(assert {})\n(check-sat)\n", smt_formula(f)));
    out
}

fn smt_q(c: &Q) -> String {
    let n = c.numer().abs();
    let body = if c.denom() == &1.into() { format!("{n}.0") } else { format!("(/ {n}.0 {}.0)", c.denom()) };
    if c.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

fn smt_term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.clone(),
        Term::Const(c) => smt_q(c),
        Term::Add(a, b) => format!("(+ {} {})", smt_term(a), smt_term(b)),
        Term::Mul(a, b) => format!("(* {} {})", smt_term(a), smt_term(b)),
        Term::App(f, a) => format!("({} {})", f.name(), smt_term(a)),
    }
}

fn smt_formula(f: &Formula) -> String {
    let join = |op: &str, fs: &[Formula], empty: &str| {
        if fs.is_empty() {
            empty.to_string()
        } else {
            format!("({op} {})", fs.iter().map(smt_formula).collect::<Vec<_>>().join(" "))
        }
    };
    match f {
        Formula::Atomic(a) => {
            let op = match a.rel {
                crate::formula::Rel::Geq => ">=",
                crate::formula::Rel::Gt => ">",
            };
            format!("({op} {} 0.0)", smt_term(&a.lhs))
        }
        Formula::And(fs) => join("and", fs, "true"),
        Formula::Or(fs) => join("or", fs, "false"),
        Formula::Not(g) => format!("(not {})", smt_formula(g)),
        Formula::Forall(v, lo, hi, body) => format!(
            "(forall (({v} Real)) (=> (and (<= {} {v}) (<= {v} {})) {}))",
            smt_term(lo),
            smt_term(hi),
            smt_formula(body)
        ),
        Formula::Exists(v, lo, hi, body) => format!(
            "(exists (({v} Real)) (and (<= {} {v}) (<= {v} {}) {}))",
            smt_term(lo),
            smt_term(hi),
            smt_formula(body)
        ),
    }
}
