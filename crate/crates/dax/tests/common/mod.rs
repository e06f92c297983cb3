//! Random formula corpus shared by the integration suites.

#![allow(dead_code)]

use dax::enclosure::Domain;
use dax::formula::{Formula, FuncId, Term};
use dax::interval::RatInterval;
use dax::rational::{q, Q};
use dax::registry::FuncRegistry;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub use rand::SeedableRng;
pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform rational on the grid `k/den` inside `[lo, hi]`.
pub fn rq(r: &mut Rng8, lo: i64, hi: i64, den: i64) -> Q {
    q(r.gen_range(lo * den..=hi * den), den)
}

pub fn interval(r: &mut Rng8, lo: i64, hi: i64, den: i64) -> RatInterval {
    loop {
        let (a, b) = (rq(r, lo, hi, den), rq(r, lo, hi, den));
        if a != b {
            return RatInterval::spanning(a, b);
        }
    }
}

pub struct Gen<'a> {
    pub reg: &'a FuncRegistry,
    pub funcs: Vec<FuncId>,
    /// Probability that a summand is a function application.
    pub fn_rate: f64,
}

impl<'a> Gen<'a> {
    pub fn new(reg: &'a FuncRegistry) -> Self {
        let funcs = ["sin", "cos", "exp"].iter().map(|n| reg.lookup(n).unwrap()).collect();
        Gen { reg, funcs, fn_rate: 0.5 }
    }

    /// `k·v + c` with `|k| <= 1` so arguments stay inside `[-4, 4]` when the
    /// variables stay inside `[-2, 2]`.
    fn arg(&self, r: &mut Rng8, vars: &[String]) -> Term {
        let v = vars.choose(r).unwrap();
        let k = rq(r, -1, 1, 4);
        let c = rq(r, -1, 1, 4);
        Term::add(Term::mul(Term::Const(k), Term::var(v)), Term::Const(c))
    }

    pub fn summand(&self, r: &mut Rng8, vars: &[String], allow_fn: bool) -> Term {
        let c = rq(r, -2, 2, 4);
        if allow_fn && r.gen_bool(self.fn_rate) {
            let f = self.funcs.choose(r).unwrap().clone();
            return Term::mul(Term::Const(c), Term::app(f, self.arg(r, vars)));
        }
        let v = Term::var(vars.choose(r).unwrap());
        if r.gen_bool(0.3) {
            let w = Term::var(vars.choose(r).unwrap());
            Term::mul(Term::Const(c), Term::mul(v, w))
        } else {
            Term::mul(Term::Const(c), v)
        }
    }

    pub fn term(&self, r: &mut Rng8, vars: &[String], allow_fn: bool) -> Term {
        let n = r.gen_range(1..=3);
        let mut t = Term::Const(rq(r, -2, 2, 8));
        for _ in 0..n {
            t = Term::add(t, self.summand(r, vars, allow_fn));
        }
        t
    }

    pub fn atom(&self, r: &mut Rng8, vars: &[String], allow_fn: bool) -> Formula {
        let t = self.term(r, vars, allow_fn);
        if r.gen_bool(0.5) {
            Formula::gt(t)
        } else {
            Formula::geq(t)
        }
    }

    pub fn matrix(&self, r: &mut Rng8, vars: &[String], allow_fn: bool) -> Formula {
        let n = r.gen_range(1..=3);
        let atoms: Vec<Formula> = (0..n).map(|_| self.atom(r, vars, allow_fn)).collect();
        let f = if n == 1 {
            atoms.into_iter().next().unwrap()
        } else if r.gen_bool(0.5) {
            Formula::And(atoms)
        } else {
            Formula::Or(atoms)
        };
        if r.gen_bool(0.15) {
            Formula::not(f)
        } else {
            f
        }
    }

    /// A bounded formula over free variables `a`, `b` (as requested) with at
    /// most `max_quants` quantifiers, together with a domain inside `[-2, 2]`.
    pub fn formula(&self, r: &mut Rng8, nfree: usize, max_quants: usize) -> (Formula, Domain) {
        let free: Vec<String> = ["a", "b"].iter().take(nfree).map(|s| s.to_string()).collect();
        let mut dom = Domain::new();
        for v in &free {
            dom.insert(v.clone(), interval(r, -2, 2, 4));
        }
        let nq = r.gen_range(0..=max_quants);
        let bound: Vec<String> = ["x", "y"].iter().take(nq).map(|s| s.to_string()).collect();
        let mut scope = free.clone();
        scope.extend(bound.iter().cloned());
        if scope.is_empty() {
            scope.push("x".into());
        }
        let mut body = self.matrix(r, &scope, true);
        if function_count(&body) == 0 {
            let f = self.funcs.choose(r).unwrap().clone();
            let extra = Formula::gt(Term::add(self.term(r, &scope, false), Term::app(f, self.arg(r, &scope))));
            body = Formula::Or(vec![body, extra]);
        }
        for (i, v) in bound.iter().enumerate().rev() {
            let iv = interval(r, -2, 2, 4);
            let (lo, hi) = (Term::Const(iv.lo().clone()), Term::Const(iv.hi().clone()));
            // Occasionally let the upper bound depend on an outer variable.
            let outer: Vec<&String> = free.iter().chain(bound[..i].iter()).collect();
            let hi = if !outer.is_empty() && r.gen_bool(0.25) {
                let o = outer.choose(r).unwrap();
                let half = Term::mul(Term::Const(q(1, 2)), Term::var(o));
                Term::add(Term::Const(iv.hi() * q(1, 2)), half)
            } else {
                hi
            };
            body = if r.gen_bool(0.5) {
                Formula::forall(v, lo, hi, body)
            } else {
                Formula::exists(v, lo, hi, body)
            };
        }
        if nfree == 0 && body.free_vars().contains("x") {
            let iv = interval(r, -2, 2, 4);
            body = Formula::forall("x", Term::Const(iv.lo().clone()), Term::Const(iv.hi().clone()), body);
        }
        (body, dom)
    }
}

pub fn function_count(f: &Formula) -> usize {
    dax::formula::function_terms(f).len()
}

/// Uniform point of a domain on the `2^-10` grid.
pub fn sample_point(r: &mut Rng8, dom: &Domain) -> BTreeMap<String, Q> {
    dom.iter()
        .map(|(v, iv)| {
            let t = q(r.gen_range(0..=1024), 1024);
            (v.clone(), iv.lo() + iv.width() * t)
        })
        .collect()
}
