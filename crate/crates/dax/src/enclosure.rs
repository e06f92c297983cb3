//! Interval enclosures of every subterm of a formula, and the checker that
//! re-derives each closure condition from the stored intervals.

use crate::formula::{print_term, Formula, Term};
use crate::interval::{iadd, icontains, imul, RatInterval};
use crate::ode::{range_bound, DivergenceError};
use crate::rational::{qi, Q};
use crate::registry::FuncRegistry;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Intervals for the free variables of a formula.
pub type Domain = BTreeMap<String, RatInterval>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnclosureError {
    #[error("no domain interval for free variable `{0}`")]
    MissingDomain(String),
    #[error("enclosure radius must be positive")]
    BadEps,
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enclosure {
    pub eps: Q,
    map: BTreeMap<Term, RatInterval>,
}

impl Enclosure {
    pub fn new(eps: Q) -> Self {
        Enclosure { eps, map: BTreeMap::new() }
    }

    pub fn get(&self, t: &Term) -> Option<&RatInterval> {
        self.map.get(t)
    }

    pub fn insert(&mut self, t: Term, i: RatInterval) {
        self.map.insert(t, i);
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Term, &RatInterval)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Restriction to plain variables.
    pub fn var_intervals(&self) -> BTreeMap<String, RatInterval> {
        self.map
            .iter()
            .filter_map(|(t, i)| match t {
                Term::Var(v) => Some((v.clone(), i.clone())),
                _ => None,
            })
            .collect()
    }
}

/// Interval assignment to each subterm occurring in `f`, built bottom-up.
///
/// Free variables take their domain interval, a bound variable takes the hull
/// of its bound intervals, and `f(e)` takes a certified superset of the range
/// of `f` over `I_e` padded by `eps`.
pub fn build_enclosure(f: &Formula, d: &Domain, eps: &Q, reg: &FuncRegistry) -> Result<Enclosure, EnclosureError> {
    if !eps.is_positive() {
        return Err(EnclosureError::BadEps);
    }
    let mut enc = Enclosure::new(eps.clone());
    for v in f.free_vars() {
        let i = d.get(&v).ok_or_else(|| EnclosureError::MissingDomain(v.clone()))?;
        enc.insert(Term::Var(v), i.clone());
    }
    walk(f, &mut enc, reg)?;
    Ok(enc)
}

fn walk(f: &Formula, enc: &mut Enclosure, reg: &FuncRegistry) -> Result<(), EnclosureError> {
    match f {
        Formula::Atomic(a) => {
            term_interval(&a.lhs, enc, reg)?;
        }
        Formula::And(fs) | Formula::Or(fs) => {
            for g in fs {
                walk(g, enc, reg)?;
            }
        }
        Formula::Not(g) => walk(g, enc, reg)?,
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            let a = term_interval(lo, enc, reg)?;
            let b = term_interval(hi, enc, reg)?;
            let key = Term::Var(v.clone());
            let mut iv = a.hull(&b);
            if let Some(old) = enc.get(&key) {
                iv = iv.hull(old);
            }
            enc.insert(key, iv);
            walk(body, enc, reg)?;
        }
    }
    Ok(())
}

fn term_interval(t: &Term, enc: &mut Enclosure, reg: &FuncRegistry) -> Result<RatInterval, EnclosureError> {
    if let Some(i) = enc.get(t) {
        return Ok(i.clone());
    }
    let i = match t {
        Term::Var(v) => return Err(EnclosureError::MissingDomain(v.clone())),
        Term::Const(c) => RatInterval::point(c.clone()),
        Term::Add(a, b) => iadd(&term_interval(a, enc, reg)?, &term_interval(b, enc, reg)?),
        Term::Mul(a, b) => imul(&term_interval(a, enc, reg)?, &term_interval(b, enc, reg)?),
        Term::App(fid, e) => {
            let ie = term_interval(e, enc, reg)?;
            let r = range_bound(reg.get(fid), &ie, &(&enc.eps / qi(4)))?;
            r.pad(&enc.eps)
        }
    };
    enc.insert(t.clone(), i.clone());
    Ok(i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObligationKind {
    FreeVar,
    BoundVar,
    Constant,
    Sum,
    Product,
    Function,
}

/// One closure condition together with the intervals it was decided on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub kind: ObligationKind,
    pub term: String,
    pub holds: bool,
    /// Inputs followed by the enclosing interval; for function terms the
    /// certified range superset comes first.
    pub witness: Vec<RatInterval>,
}

/// Re-derives every closure condition of `enc` for `f`.  Function terms are
/// certified with half the radius: a range superset at tolerance `eps/8`,
/// padded by `eps/2`, must fit inside the stored interval.
pub fn check_enclosure(f: &Formula, enc: &Enclosure, reg: &FuncRegistry) -> Vec<Obligation> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let free = f.free_vars();
    for v in &free {
        let t = Term::Var(v.clone());
        let w: Vec<RatInterval> = enc.get(&t).cloned().into_iter().collect();
        out.push(Obligation { kind: ObligationKind::FreeVar, term: v.clone(), holds: !w.is_empty(), witness: w });
        seen.insert(t);
    }
    check_formula(f, enc, reg, &mut seen, &mut out);
    out
}

fn check_formula(
    f: &Formula,
    enc: &Enclosure,
    reg: &FuncRegistry,
    seen: &mut std::collections::BTreeSet<Term>,
    out: &mut Vec<Obligation>,
) {
    match f {
        Formula::Atomic(a) => check_term(&a.lhs, enc, reg, seen, out),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| check_formula(g, enc, reg, seen, out)),
        Formula::Not(g) => check_formula(g, enc, reg, seen, out),
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            check_term(lo, enc, reg, seen, out);
            check_term(hi, enc, reg, seen, out);
            let (ia, ib, ix) = (enc.get(lo), enc.get(hi), enc.get(&Term::Var(v.clone())));
            let (holds, witness) = match (ia, ib, ix) {
                (Some(a), Some(b), Some(x)) => {
                    (icontains(x, a) && icontains(x, b), vec![a.clone(), b.clone(), x.clone()])
                }
                _ => (false, Vec::new()),
            };
            out.push(Obligation { kind: ObligationKind::BoundVar, term: v.clone(), holds, witness });
            seen.insert(Term::Var(v.clone()));
            check_formula(body, enc, reg, seen, out);
        }
    }
}

fn check_term(
    t: &Term,
    enc: &Enclosure,
    reg: &FuncRegistry,
    seen: &mut std::collections::BTreeSet<Term>,
    out: &mut Vec<Obligation>,
) {
    if seen.contains(t) {
        return;
    }
    match t {
        Term::Var(v) => {
            // A variable neither free nor bound above this point.
            out.push(Obligation { kind: ObligationKind::FreeVar, term: v.clone(), holds: false, witness: vec![] });
            seen.insert(t.clone());
            return;
        }
        Term::Add(a, b) | Term::Mul(a, b) => {
            check_term(a, enc, reg, seen, out);
            check_term(b, enc, reg, seen, out);
        }
        Term::App(_, a) => check_term(a, enc, reg, seen, out),
        Term::Const(_) => {}
    }
    seen.insert(t.clone());
    let name = print_term(t);
    let Some(it) = enc.get(t) else {
        out.push(Obligation { kind: kind_of(t), term: name, holds: false, witness: vec![] });
        return;
    };
    let get = |s: &Term| enc.get(s).cloned();
    let (holds, witness) = match t {
        Term::Const(c) => (it.contains(c), vec![it.clone()]),
        Term::Add(a, b) | Term::Mul(a, b) => match (get(a), get(b)) {
            (Some(ia), Some(ib)) => {
                let r = if matches!(t, Term::Add(..)) { iadd(&ia, &ib) } else { imul(&ia, &ib) };
                (icontains(it, &r), vec![ia, ib, it.clone()])
            }
            _ => (false, vec![]),
        },
        Term::App(fid, e) => match get(e) {
            Some(ie) => match range_bound(reg.get(fid), &ie, &(&enc.eps / qi(8))) {
                Ok(r) => {
                    let need = r.pad(&(&enc.eps / qi(2)));
                    (icontains(it, &need), vec![ie, r, it.clone()])
                }
                Err(_) => (false, vec![ie]),
            },
            None => (false, vec![]),
        },
        Term::Var(_) => unreachable!(),
    };
    out.push(Obligation { kind: kind_of(t), term: name, holds, witness });
}

fn kind_of(t: &Term) -> ObligationKind {
    match t {
        Term::Var(_) => ObligationKind::FreeVar,
        Term::Const(_) => ObligationKind::Constant,
        Term::Add(..) => ObligationKind::Sum,
        Term::Mul(..) => ObligationKind::Product,
        Term::App(..) => ObligationKind::Function,
    }
}

pub fn all_hold(obs: &[Obligation]) -> bool {
    obs.iter().all(|o| o.holds)
}

/// Default enclosure radius.
pub fn default_eps() -> Q {
    Q::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{normalize, parse_formula};
    use crate::rational::q;
    use crate::registry::builtin_registry;

    fn iv(a: Q, b: Q) -> RatInterval {
        RatInterval::new(a, b).unwrap()
    }

    #[test]
    fn function_free_is_compositional() {
        let reg = builtin_registry();
        let f = normalize(&parse_formula("(> (+ (* x y) 1) 0)", &reg).unwrap());
        let mut d = Domain::new();
        d.insert("x".into(), iv(qi(-1), qi(2)));
        d.insert("y".into(), iv(qi(3), qi(4)));
        let enc = build_enclosure(&f, &d, &Q::one(), &reg).unwrap();
        assert_eq!(enc.var_intervals(), d);
        let xy = Term::mul(Term::var("x"), Term::var("y"));
        assert_eq!(enc.get(&xy), Some(&iv(qi(-4), qi(8))));
        assert!(all_hold(&check_enclosure(&f, &enc, &reg)));
    }

    #[test]
    fn exp_enclosure_padded() {
        let reg = builtin_registry();
        let f = normalize(&parse_formula("(forall (x 0 1) (> (- (exp x) 3) 0))", &reg).unwrap());
        let enc = build_enclosure(&f, &Domain::new(), &Q::one(), &reg).unwrap();
        let e = Term::app(reg.lookup("exp").unwrap(), Term::var("x"));
        let ie = enc.get(&e).unwrap();
        assert!(ie.lo() <= &qi(0) && ie.lo() > &q(-1, 100));
        assert!(ie.hi() >= &q(3718, 1000) && ie.hi() < &q(3720, 1000));
        let obs = check_enclosure(&f, &enc, &reg);
        assert!(all_hold(&obs));
        assert!(obs.iter().any(|o| o.kind == ObligationKind::Function));
    }

    #[test]
    fn tampering_is_caught() {
        let reg = builtin_registry();
        let f = normalize(&parse_formula("(forall (x 0 1) (> (+ (sin x) x) 0))", &reg).unwrap());
        let enc = build_enclosure(&f, &Domain::new(), &Q::one(), &reg).unwrap();
        let sin = Term::app(reg.lookup("sin").unwrap(), Term::var("x"));
        let sum = Term::add(sin.clone(), Term::var("x"));

        let mut small = enc.clone();
        small.insert(sum, iv(qi(0), qi(1)));
        let bad: Vec<_> = check_enclosure(&f, &small, &reg).into_iter().filter(|o| !o.holds).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].kind, ObligationKind::Sum);

        let mut unpadded = enc.clone();
        let ie = enc.get(&Term::var("x")).unwrap().clone();
        let r = range_bound(reg.get_by_name("sin").unwrap(), &ie, &q(1, 4)).unwrap();
        unpadded.insert(sin, r);
        let bad: Vec<_> = check_enclosure(&f, &unpadded, &reg).into_iter().filter(|o| !o.holds).collect();
        assert!(bad.iter().any(|o| o.kind == ObligationKind::Function));
    }

    #[test]
    fn missing_domain_reported() {
        let reg = builtin_registry();
        let f = normalize(&parse_formula("(> x 0)", &reg).unwrap());
        assert_eq!(
            build_enclosure(&f, &Domain::new(), &Q::one(), &reg),
            Err(EnclosureError::MissingDomain("x".into()))
        );
    }
}
