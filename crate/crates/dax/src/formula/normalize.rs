use super::ast::{Atom, Formula, Quant, Rel, Term};
use std::collections::{BTreeMap, BTreeSet};

/// Deterministic supply of `w0, w1, …` avoiding a set of taken names.
#[derive(Clone, Debug, Default)]
pub struct FreshNames {
    taken: BTreeSet<String>,
    next: usize,
}

impl FreshNames {
    pub fn avoiding(taken: BTreeSet<String>) -> Self {
        FreshNames { taken, next: 0 }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let n = format!("w{}", self.next);
            self.next += 1;
            if self.taken.insert(n.clone()) {
                return n;
            }
        }
    }

    pub fn reserve(&mut self, name: &str) {
        self.taken.insert(name.to_string());
    }
}

/// One bounded quantifier of a prenex prefix.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Binder {
    pub quant: Quant,
    pub var: String,
    pub lo: Term,
    pub hi: Term,
}

/// Clause list of a CNF matrix.
pub type Cnf = Vec<Vec<Atom>>;

fn nnf(f: &Formula, neg: bool) -> Formula {
    match f {
        Formula::Atomic(a) => Formula::Atomic(if neg { a.negate() } else { a.clone() }),
        Formula::And(fs) | Formula::Or(fs) => {
            let gs = fs.iter().map(|g| nnf(g, neg)).collect();
            if matches!(f, Formula::And(_)) != neg {
                Formula::And(gs)
            } else {
                Formula::Or(gs)
            }
        }
        Formula::Not(g) => nnf(g, !neg),
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            let q = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            let q = if neg { q.dual() } else { q };
            Formula::quant(q, v, lo.clone(), hi.clone(), nnf(body, neg))
        }
    }
}

/// Renames binders so that every bound name is distinct and differs from
/// every free name.  Already-distinct names are kept.
fn rename_apart(f: &Formula) -> Formula {
    let free = f.free_vars();
    let mut names = FreshNames::avoiding(f.all_vars());
    let mut seen = BTreeSet::new();
    go_rename(f, &free, &mut seen, &mut names, &BTreeMap::new())
}

fn go_rename(
    f: &Formula,
    free: &BTreeSet<String>,
    seen: &mut BTreeSet<String>,
    names: &mut FreshNames,
    env: &BTreeMap<String, String>,
) -> Formula {
    let rn_simul = |t: &Term| -> Term { rename_term(t, env) };
    match f {
        Formula::Atomic(a) => Formula::Atomic(Atom::new(rn_simul(&a.lhs), a.rel)),
        Formula::And(fs) => Formula::And(fs.iter().map(|g| go_rename(g, free, seen, names, env)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|g| go_rename(g, free, seen, names, env)).collect()),
        Formula::Not(g) => Formula::not(go_rename(g, free, seen, names, env)),
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            let q = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            let lo = rn_simul(lo);
            let hi = rn_simul(hi);
            let nv = if seen.contains(v) || free.contains(v) { names.fresh() } else { v.clone() };
            seen.insert(nv.clone());
            let mut env2 = env.clone();
            if &nv != v {
                env2.insert(v.clone(), nv.clone());
            } else {
                env2.remove(v);
            }
            let body = go_rename(body, free, seen, names, &env2);
            Formula::quant(q, &nv, lo, hi, body)
        }
    }
}

fn rename_term(t: &Term, env: &BTreeMap<String, String>) -> Term {
    match t {
        Term::Var(v) => Term::Var(env.get(v).cloned().unwrap_or_else(|| v.clone())),
        Term::Const(_) => t.clone(),
        Term::Add(a, b) => Term::add(rename_term(a, env), rename_term(b, env)),
        Term::Mul(a, b) => Term::mul(rename_term(a, env), rename_term(b, env)),
        Term::App(g, a) => Term::app(g.clone(), rename_term(a, env)),
    }
}

fn prenex(f: &Formula, prefix: &mut Vec<Binder>) -> Formula {
    match f {
        Formula::Atomic(_) => f.clone(),
        Formula::And(fs) => Formula::And(fs.iter().map(|g| prenex(g, prefix)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|g| prenex(g, prefix)).collect()),
        Formula::Not(_) => unreachable!("negation normal form expected"),
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            let quant = if matches!(f, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
            prefix.push(Binder { quant, var: v.clone(), lo: lo.clone(), hi: hi.clone() });
            prenex(body, prefix)
        }
    }
}

/// CNF of a quantifier-free, negation-free formula; clauses and literals are
/// sorted and deduplicated and subsumed clauses dropped.
pub fn cnf(f: &Formula) -> Cnf {
    let raw = match f {
        Formula::Atomic(a) => vec![vec![a.clone()]],
        Formula::And(fs) => fs.iter().flat_map(cnf).collect(),
        Formula::Or(fs) => {
            let mut acc: Cnf = vec![vec![]];
            for g in fs {
                let cg = cnf(g);
                let mut next = Vec::with_capacity(acc.len() * cg.len());
                for c in &acc {
                    for d in &cg {
                        let mut e = c.clone();
                        e.extend(d.iter().cloned());
                        next.push(e);
                    }
                }
                acc = next;
            }
            acc
        }
        Formula::Not(_) | Formula::Forall(..) | Formula::Exists(..) => {
            unreachable!("quantifier-free negation normal form expected")
        }
    };
    canonical_cnf(raw)
}

pub fn canonical_cnf(raw: Cnf) -> Cnf {
    let mut out: Vec<Vec<Atom>> = raw
        .into_iter()
        .map(|mut c| {
            c.sort();
            c.dedup();
            c
        })
        .collect();
    if out.iter().any(|c| c.is_empty()) {
        return vec![vec![]];
    }
    out.sort();
    out.dedup();
    // Drop clauses subsumed by a shorter one.
    let mut by_len: Vec<&Vec<Atom>> = out.iter().collect();
    by_len.sort_by_key(|c| c.len());
    let mut kept: Vec<&Vec<Atom>> = Vec::new();
    for c in by_len {
        if !kept.iter().any(|k| k.len() < c.len() && k.iter().all(|a| c.binary_search(a).is_ok())) {
            kept.push(c);
        }
    }
    let mut kept: Vec<Vec<Atom>> = kept.into_iter().cloned().collect();
    kept.sort();
    kept
}

pub fn cnf_to_formula(c: &Cnf) -> Formula {
    let clause = |cl: &Vec<Atom>| -> Formula {
        if cl.len() == 1 {
            Formula::Atomic(cl[0].clone())
        } else {
            Formula::Or(cl.iter().cloned().map(Formula::Atomic).collect())
        }
    };
    if c.len() == 1 {
        clause(&c[0])
    } else {
        Formula::And(c.iter().map(clause).collect())
    }
}

pub fn assemble(prefix: &[Binder], matrix: Formula) -> Formula {
    prefix.iter().rev().fold(matrix, |body, b| Formula::quant(b.quant, &b.var, b.lo.clone(), b.hi.clone(), body))
}

/// Splits a normalized formula into its prefix and CNF matrix.
pub fn split_prenex(f: &Formula) -> (Vec<Binder>, Cnf) {
    let mut prefix = Vec::new();
    let mut cur = f;
    while let Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) = cur {
        let quant = if matches!(cur, Formula::Forall(..)) { Quant::Forall } else { Quant::Exists };
        prefix.push(Binder { quant, var: v.clone(), lo: lo.clone(), hi: hi.clone() });
        cur = body;
    }
    (prefix, cnf(&nnf(cur, false)))
}

/// Prenex form over a canonical CNF matrix with negations pushed into atoms.
///
/// Pulling a bounded quantifier across a sibling conjunct (for `∀`) or
/// disjunct (for `∃`) assumes its range is non-empty, which holds for every
/// range whose bounds are ordered.
pub fn normalize(f: &Formula) -> Formula {
    let g = rename_apart(&nnf(f, false));
    let mut prefix = Vec::new();
    let matrix = prenex(&g, &mut prefix);
    assemble(&prefix, cnf_to_formula(&cnf(&matrix)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purity {
    GeqPure,
    GtPure,
    Mixed,
}

/// Relation-symbol classification of a normalized formula.  A formula with no
/// atoms counts as `GtPure`.
pub fn purity(f: &Formula) -> Purity {
    let (mut gt, mut geq) = (false, false);
    f.visit_atoms(&mut |a| match a.rel {
        Rel::Gt => gt = true,
        Rel::Geq => geq = true,
    });
    match (gt, geq) {
        (true, true) => Purity::Mixed,
        (false, true) => Purity::GeqPure,
        _ => Purity::GtPure,
    }
}

/// Distinct function applications, innermost first; ties broken by the term
/// order so the listing does not depend on where terms occur.
pub fn function_terms(f: &Formula) -> Vec<Term> {
    let mut all = Vec::new();
    f.visit_terms(&mut |t| t.subterms_into(&mut all));
    let mut apps: Vec<Term> = all.into_iter().filter(|t| matches!(t, Term::App(..))).collect();
    apps.sort_by(|a, b| a.func_depth().cmp(&b.func_depth()).then_with(|| a.cmp(b)));
    apps.dedup();
    apps
}

pub fn free_vars(f: &Formula) -> BTreeSet<String> {
    f.free_vars()
}
