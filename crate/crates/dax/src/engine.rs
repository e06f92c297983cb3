//! Branch-and-prune decision of bounded function-free sentences with exact
//! rational boxes.
//!
//! Each prefix variable gets a box.  A binder whose range has constant width
//! is rewritten to range over a fixed interval; other binders range over the
//! hull of their bound ranges and the matrix is guarded by the bounds.  A
//! search verdict at some level holds uniformly for every point of the outer
//! box, so a `True` from an existential sub-box is a genuine witness region
//! and a `False` from a universal sub-box a genuine counterexample region.

use crate::formula::{split_prenex, Binder, Formula, Quant, Rel, Term};
use crate::interval::RatInterval;
use crate::poly::{term_to_poly, Poly};
use crate::rational::Q;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Longest chain of bisections along any search path.
    pub max_depth: u32,
    pub max_boxes: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_depth: 24, max_boxes: 1_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownReason {
    BudgetExhausted,
    EmptyRangeAmbiguous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    False,
    Unknown(UnknownReason),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Unknown(UnknownReason::BudgetExhausted) => "unknown(budget)",
            Verdict::Unknown(UnknownReason::EmptyRangeAmbiguous) => "unknown(empty-range)",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub boxes: u64,
    pub max_depth: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("formula contains the function application `{0}`")]
    NotFunctionFree(String),
    #[error("no value for free variable `{0}`")]
    MissingValue(String),
}

/// Decides a normalized function-free formula with its free variables fixed
/// by `env`.
pub fn eval_bounded_folr(f: &Formula, env: &BTreeMap<String, Q>, budget: &Budget) -> Result<Decision, EngineError> {
    let prob = Problem::build(f, env)?;
    let mut s = Search::new(*budget);
    let n = prob.nvars();
    let mut bx = vec![RatInterval::zero(); n];
    let verdict = s.eval(&prob, 0, &mut bx, 0);
    Ok(Decision { verdict, stats: s.stats })
}

#[derive(Clone, Debug)]
struct Lit {
    p: Poly,
    strict: bool,
    grad: Vec<Poly>,
}

impl Lit {
    fn new(p: Poly, strict: bool) -> Lit {
        let grad = (0..p.nvars()).map(|k| p.derivative(k)).collect();
        Lit { p, strict, grad }
    }

    /// Lower (or upper) bound over the box, first pinning every variable in
    /// which the polynomial is monotone to the minimizing (maximizing) face.
    fn face_bound(&self, bx: &[RatInterval], upper: bool) -> Q {
        let mut b = bx.to_vec();
        loop {
            let mut changed = false;
            for (k, g) in self.grad.iter().enumerate() {
                if b[k].is_point() || g.is_zero() {
                    continue;
                }
                let d = g.range(&b).0;
                let pin = if !d.lo().is_negative() {
                    Some(if upper { b[k].hi().clone() } else { b[k].lo().clone() })
                } else if !d.hi().is_positive() {
                    Some(if upper { b[k].lo().clone() } else { b[k].hi().clone() })
                } else {
                    None
                };
                if let Some(x) = pin {
                    b[k] = RatInterval::point(x);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let r = self.p.range(&b).0;
        if upper {
            r.hi().clone()
        } else {
            r.lo().clone()
        }
    }
}

#[derive(Clone, Debug)]
struct Level {
    quant: Quant,
    /// `None` for a range that is empty everywhere.
    range: Option<RatInterval>,
    /// Width of the original range when it depends on outer variables.
    width: Option<Poly>,
    /// Candidate witnesses in terms of outer variables.
    candidates: Vec<Poly>,
}

#[derive(Clone, Debug)]
struct Problem {
    id: usize,
    levels: Vec<Level>,
    clauses: Vec<Vec<Lit>>,
}

impl Problem {
    fn nvars(&self) -> usize {
        self.levels.len()
    }

    fn build(f: &Formula, env: &BTreeMap<String, Q>) -> Result<Problem, EngineError> {
        if !f.is_function_free() {
            let mut bad = String::new();
            f.visit_terms(&mut |t| {
                if bad.is_empty() && !t.is_function_free() {
                    bad = t.to_string();
                }
            });
            return Err(EngineError::NotFunctionFree(bad));
        }
        for v in f.free_vars() {
            if !env.contains_key(&v) {
                return Err(EngineError::MissingValue(v));
            }
        }
        let (prefix, cnf) = split_prenex(f);
        let n = prefix.len();
        let names: Vec<&str> = prefix.iter().map(|b| b.var.as_str()).collect();
        let index = |v: &str| names.iter().rposition(|x| *x == v);
        let fix_env = |t: &Term| -> Term {
            env.iter().fold(t.clone(), |acc, (v, c)| {
                if names.contains(&v.as_str()) {
                    acc
                } else {
                    acc.subst_var(v, &Term::Const(c.clone()))
                }
            })
        };
        // Original variable k as a polynomial in the search variables.
        let mut orig: Vec<Option<Poly>> = vec![None; n];
        let to_search = |t: &Term, orig: &[Option<Poly>]| -> Poly {
            let mut p = term_to_poly(&fix_env(t), n, &index).expect("function-free and closed");
            for (k, o) in orig.iter().enumerate() {
                if let Some(o) = o {
                    if p.mentions(k) {
                        p = p.subst(k, o);
                    }
                }
            }
            p
        };
        let mut levels = Vec::with_capacity(n);
        // Ranges of variable width become `lo + width·s` over `s ∈ [0, 1]`,
        // which is only faithful where `width ≥ 0`.
        let mut guards: Vec<(usize, Poly)> = Vec::new();
        for (i, Binder { quant, lo, hi, .. }) in prefix.iter().enumerate() {
            let lo = to_search(lo, &orig);
            let hi = to_search(hi, &orig);
            let width = hi.sub(&lo);
            let (range, wpoly) = match (lo.const_value(), width.const_value()) {
                (_, Some(w)) if w.is_negative() => (None, None),
                (Some(a), Some(w)) => (Some(RatInterval::new(a.clone(), a + w).expect("ordered")), None),
                (_, w) => {
                    orig[i] = Some(lo.add(&Poly::var(n, i).mul(&width)));
                    if w.is_none() {
                        guards.push((i, width.clone()));
                    }
                    (Some(RatInterval::unit()), w.is_none().then_some(width))
                }
            };
            levels.push(Level { quant: *quant, range, width: wpoly, candidates: Vec::new() });
        }
        let mut clauses: Vec<Vec<Lit>> = cnf
            .iter()
            .map(|c| c.iter().map(|a| Lit::new(to_search(&a.lhs, &orig), a.rel == Rel::Gt)).collect())
            .collect();
        for (i, w) in guards {
            if levels[i].quant == Quant::Forall {
                for c in clauses.iter_mut() {
                    c.push(Lit::new(w.neg(), true));
                }
            } else {
                clauses.push(vec![Lit::new(w, false)]);
            }
        }
        let mut prob = Problem { id: 0, levels, clauses };
        prob.find_candidates();
        Ok(prob)
    }

    /// Exact solutions of `p = 0` for linear `p` whose two inequalities
    /// `p ≥ 0` and `-p ≥ 0` both occur in the matrix.
    fn find_candidates(&mut self) {
        let n = self.nvars();
        let geq: Vec<&Poly> = self.clauses.iter().flatten().filter(|l| !l.strict).map(|l| &l.p).collect();
        for i in 0..n {
            if self.levels[i].quant != Quant::Exists {
                continue;
            }
            let mut cands: Vec<Poly> = Vec::new();
            for p in &geq {
                if p.degree_in(i) != 1 || (i + 1..n).any(|j| p.mentions(j)) {
                    continue;
                }
                let Some(beta) = p.derivative(i).const_value() else { continue };
                if !geq.iter().any(|o| o.add(p).is_zero()) {
                    continue;
                }
                let s = Poly::var(n, i).sub(&p.scale(&(Q::from_integer(1.into()) / beta)));
                if !cands.contains(&s) {
                    cands.push(s);
                }
            }
            self.levels[i].candidates = cands;
        }
    }

    /// The problem with variable `i` replaced by `s`, plus unit clauses
    /// keeping `s` inside the range of `i`.
    fn substitute(&self, i: usize, s: &Poly, id: usize) -> Problem {
        let sub = |p: &Poly| if p.mentions(i) { p.subst(i, s) } else { p.clone() };
        let mut levels: Vec<Level> = self
            .levels
            .iter()
            .map(|l| Level {
                quant: l.quant,
                range: l.range.clone(),
                width: l.width.as_ref().map(sub),
                candidates: l.candidates.iter().map(sub).collect(),
            })
            .collect();
        let mut clauses: Vec<Vec<Lit>> = self
            .clauses
            .iter()
            .map(|c| c.iter().map(|l| Lit::new(sub(&l.p), l.strict)).collect())
            .collect();
        let n = self.nvars();
        if let Some(iv) = &self.levels[i].range {
            clauses.push(vec![Lit::new(s.sub(&Poly::constant(n, iv.lo().clone())), false)]);
            clauses.push(vec![Lit::new(Poly::constant(n, iv.hi().clone()).sub(s), false)]);
        }
        levels[i].candidates.clear();
        Problem { id, levels, clauses }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tri {
    True,
    False,
    Unknown,
}

fn lit_status(l: &Lit, bx: &[RatInterval], share: &mut [Q]) -> Tri {
    let pos = |lo: &Q| if l.strict { lo.is_positive() } else { !lo.is_negative() };
    let neg = |hi: &Q| if l.strict { !hi.is_positive() } else { hi.is_negative() };
    let (r, sh) = l.p.range(bx);
    if pos(r.lo()) || pos(&l.face_bound(bx, false)) {
        Tri::True
    } else if neg(r.hi()) || neg(&l.face_bound(bx, true)) {
        Tri::False
    } else {
        for (a, b) in share.iter_mut().zip(sh) {
            *a += b;
        }
        Tri::Unknown
    }
}

fn matrix_status(clauses: &[Vec<Lit>], bx: &[RatInterval], share: &mut [Q]) -> Tri {
    let mut all = Tri::True;
    for c in clauses {
        let mut st = Tri::False;
        let mut local = vec![Q::zero(); share.len()];
        for l in c {
            match lit_status(l, bx, &mut local) {
                Tri::True => {
                    st = Tri::True;
                    break;
                }
                Tri::Unknown => st = Tri::Unknown,
                Tri::False => {}
            }
        }
        match st {
            Tri::False => return Tri::False,
            Tri::Unknown => {
                all = Tri::Unknown;
                for (a, b) in share.iter_mut().zip(local) {
                    *a += b;
                }
            }
            Tri::True => {}
        }
    }
    all
}

/// Splits allowed per variable below a level whose outer box is not a point.
const LOCAL_CAP: u32 = 6;
/// Same, for the witness search of an existential variable.
const WITNESS_CAP: u32 = 2;

struct Search {
    budget: Budget,
    stats: SearchStats,
    exhausted: bool,
    derived: HashMap<(usize, usize, usize), Rc<Problem>>,
}

enum Outcome {
    Verdict(Verdict),
    /// Unknown at the matrix, with per-variable width shares.
    Shares(Vec<Q>),
}

impl Search {
    fn new(budget: Budget) -> Self {
        Search { budget, stats: SearchStats::default(), exhausted: false, derived: HashMap::new() }
    }

    fn tick(&mut self, depth: u32) -> bool {
        self.stats.boxes += 1;
        self.stats.max_depth = self.stats.max_depth.max(depth);
        if self.stats.boxes > self.budget.max_boxes {
            self.exhausted = true;
        }
        !self.exhausted
    }

    fn eval(&mut self, prob: &Problem, level: usize, bx: &mut Vec<RatInterval>, depth: u32) -> Verdict {
        match self.eval_inner(prob, level, bx, depth) {
            Outcome::Verdict(v) => v,
            Outcome::Shares(_) => Verdict::Unknown(UnknownReason::BudgetExhausted),
        }
    }

    fn eval_inner(&mut self, prob: &Problem, level: usize, bx: &mut Vec<RatInterval>, depth: u32) -> Outcome {
        if level == prob.nvars() {
            let mut share = vec![Q::zero(); prob.nvars()];
            return match matrix_status(&prob.clauses, bx, &mut share) {
                Tri::True => Outcome::Verdict(Verdict::True),
                Tri::False => Outcome::Verdict(Verdict::False),
                Tri::Unknown => Outcome::Shares(share),
            };
        }
        if self.exhausted {
            return Outcome::Verdict(Verdict::Unknown(UnknownReason::BudgetExhausted));
        }
        match prob.levels[level].quant {
            Quant::Forall => Outcome::Verdict(self.forall_block(prob, level, bx, depth)),
            Quant::Exists => Outcome::Verdict(self.exists(prob, level, bx, depth)),
        }
    }

    /// Interval of the search variable, whether the original range may be
    /// empty somewhere on the outer box, or the vacuous verdict when it is
    /// empty everywhere.
    fn range_on(&self, lvl: &Level, bx: &[RatInterval]) -> Result<(RatInterval, bool), Verdict> {
        let vacuous = match lvl.quant {
            Quant::Forall => Verdict::True,
            Quant::Exists => Verdict::False,
        };
        let Some(iv) = &lvl.range else { return Err(vacuous) };
        let mut ambiguous = false;
        if let Some(w) = &lvl.width {
            let r = w.range(bx).0;
            if r.hi().is_negative() {
                return Err(vacuous);
            }
            ambiguous = r.lo().is_negative();
        }
        Ok((iv.clone(), ambiguous))
    }

    fn forall_block(&mut self, prob: &Problem, level: usize, bx: &mut Vec<RatInterval>, depth: u32) -> Verdict {
        let n = prob.nvars();
        let end = (level..n).find(|&k| prob.levels[k].quant != Quant::Forall).unwrap_or(n);
        let outer_point = bx[..level].iter().all(|b| b.is_point());
        let mut ambiguous = false;
        for k in level..end {
            match self.range_on(&prob.levels[k], bx) {
                Err(v) => return v,
                Ok((iv, amb)) => {
                    ambiguous |= amb;
                    bx[k] = iv;
                }
            }
        }
        let cap = if outer_point { u32::MAX } else { LOCAL_CAP * (end - level) as u32 };
        let init: Vec<RatInterval> = bx[level..end].to_vec();
        let mut stack = vec![(init, 0u32)];
        let mut unknown = false;
        while let Some((sub, local)) = stack.pop() {
            if !self.tick(depth + local) {
                return Verdict::Unknown(UnknownReason::BudgetExhausted);
            }
            bx[level..end].clone_from_slice(&sub);
            let split_var = match self.eval_inner(prob, end, bx, depth + local) {
                Outcome::Verdict(Verdict::True) => continue,
                Outcome::Verdict(Verdict::False) => return Verdict::False,
                Outcome::Verdict(Verdict::Unknown(_)) => widest(&sub),
                Outcome::Shares(sh) => {
                    let best = (level..end).max_by(|&a, &b| sh[a].cmp(&sh[b]).then(b.cmp(&a)));
                    match best {
                        Some(k) if sh[k].is_positive() => Some(k - level),
                        _ => None,
                    }
                }
            };
            let Some(k) = split_var else {
                unknown = true;
                continue;
            };
            // A single falsifying point settles the whole block.
            if !ambiguous {
                for (b, s) in bx[level..end].iter_mut().zip(&sub) {
                    *b = RatInterval::point(s.mid());
                }
                if self.eval(prob, end, bx, depth + local) == Verdict::False {
                    return Verdict::False;
                }
            }
            if depth + local >= self.budget.max_depth || local >= cap || self.exhausted {
                unknown = true;
                continue;
            }
            let (l, r) = sub[k].split();
            let mut right = sub.clone();
            right[k] = r;
            let mut left = sub;
            left[k] = l;
            stack.push((right, local + 1));
            stack.push((left, local + 1));
        }
        if unknown {
            Verdict::Unknown(reason(ambiguous, self.exhausted))
        } else {
            Verdict::True
        }
    }

    fn exists(&mut self, prob: &Problem, i: usize, bx: &mut Vec<RatInterval>, depth: u32) -> Verdict {
        let lvl = &prob.levels[i];
        let (range, ambiguous) = match self.range_on(lvl, bx) {
            Err(v) => return v,
            Ok(r) => r,
        };
        let outer_point = bx[..i].iter().all(|b| b.is_point());
        // Midpoint of the range, then the recorded exact candidates.
        let mut witnesses = vec![Poly::constant(prob.nvars(), range.mid())];
        witnesses.extend(lvl.candidates.iter().cloned());
        for (ci, w) in witnesses.iter().enumerate() {
            if !self.tick(depth) {
                return Verdict::Unknown(UnknownReason::BudgetExhausted);
            }
            let val = w.range(bx).0;
            let v = if val.is_point() {
                if !range.contains(val.lo()) {
                    continue;
                }
                bx[i] = val;
                self.eval(prob, i + 1, bx, depth)
            } else {
                let next_id = self.derived.len() + 1;
                let derived = self
                    .derived
                    .entry((prob.id, i, ci))
                    .or_insert_with(|| Rc::new(prob.substitute(i, w, next_id)))
                    .clone();
                bx[i] = RatInterval::zero();
                self.eval(&derived, i + 1, bx, depth)
            };
            if v == Verdict::True {
                return Verdict::True;
            }
        }
        let cap = if outer_point { u32::MAX } else { WITNESS_CAP };
        let mut stack = vec![(range, 0u32)];
        let mut unknown = false;
        while let Some((sub, local)) = stack.pop() {
            if !self.tick(depth + local) {
                return Verdict::Unknown(UnknownReason::BudgetExhausted);
            }
            bx[i] = sub.clone();
            match self.eval(prob, i + 1, bx, depth + local) {
                Verdict::True => return Verdict::True,
                Verdict::False => continue,
                Verdict::Unknown(_) => {}
            }
            if !sub.is_point() {
                bx[i] = RatInterval::point(sub.mid());
                if self.eval(prob, i + 1, bx, depth + local) == Verdict::True {
                    return Verdict::True;
                }
            }
            if sub.is_point() || depth + local >= self.budget.max_depth || local >= cap || self.exhausted {
                unknown = true;
                continue;
            }
            let (l, r) = sub.split();
            stack.push((r, local + 1));
            stack.push((l, local + 1));
        }
        if unknown {
            Verdict::Unknown(reason(ambiguous, self.exhausted))
        } else {
            Verdict::False
        }
    }
}

fn reason(ambiguous: bool, exhausted: bool) -> UnknownReason {
    if ambiguous && !exhausted {
        UnknownReason::EmptyRangeAmbiguous
    } else {
        UnknownReason::BudgetExhausted
    }
}

fn widest(sub: &[RatInterval]) -> Option<usize> {
    let k = (0..sub.len()).max_by(|&a, &b| sub[a].width().cmp(&sub[b].width()).then(b.cmp(&a)))?;
    sub[k].width().is_positive().then_some(k)
}
