//! Sparse multivariate and dense univariate polynomials over exact rationals.

use crate::interval::{iadd, imul, RatInterval};
use crate::rational::{qi, Q};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Polynomial in variables `0..nvars`, keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Q>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(e, Q::one());
        p
    }

    pub fn from_terms(nvars: usize, it: impl IntoIterator<Item = (Vec<u32>, Q)>) -> Self {
        let mut p = Poly::zero(nvars);
        for (e, c) in it {
            assert_eq!(e.len(), nvars);
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: Vec<u32>, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Q)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn const_value(&self) -> Option<Q> {
        match self.terms.len() {
            0 => Some(Q::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&k| k == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|e| e[i]).max().unwrap_or(0)
    }

    pub fn mentions(&self, i: usize) -> bool {
        self.terms.keys().any(|e| e[i] > 0)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(e.clone(), c.clone());
        }
        p
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Poly {
        self.scale(&-Q::one())
    }

    pub fn scale(&self, k: &Q) -> Poly {
        if k.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly { nvars: self.nvars, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * k)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut p = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                p.add_term(e, ca * cb);
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut acc = Poly::constant(self.nvars, Q::one());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Replace variable `i` by the polynomial `s`.
    pub fn subst(&self, i: usize, s: &Poly) -> Poly {
        let dmax = self.degree_in(i);
        let mut powers = vec![Poly::constant(self.nvars, Q::one())];
        for k in 1..=dmax as usize {
            let next = powers[k - 1].mul(s);
            powers.push(next);
        }
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e[i] as usize;
            let mut rest = e.clone();
            rest[i] = 0;
            let mono = Poly::from_terms(self.nvars, [(rest, c.clone())]);
            out = out.add(&mono.mul(&powers[k]));
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Poly {
        let mut p = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                p.add_term(f, c * qi(e[i] as i64));
            }
        }
        p
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        let mut s = Q::zero();
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    m *= num_traits::pow(xi.clone(), k as usize);
                }
            }
            s += m;
        }
        s
    }

    /// Monomial-wise interval evaluation with even-power tightening.
    pub fn eval_interval(&self, b: &[RatInterval]) -> RatInterval {
        let mut s = RatInterval::zero();
        for (e, c) in &self.terms {
            let mut m = RatInterval::point(c.clone());
            for (bi, &k) in b.iter().zip(e) {
                if k > 0 {
                    m = imul(&m, &bi.powi(k));
                }
            }
            s = iadd(&s, &m);
        }
        s
    }

    /// Coefficients of `p(m + d)` as a polynomial in `d`.
    pub fn shift(&self, m: &[Q]) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut partial: Vec<(Vec<u32>, Q)> = vec![(vec![0; self.nvars], c.clone())];
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if m[i].is_zero() {
                    for (pe, _) in partial.iter_mut() {
                        pe[i] = k;
                    }
                    continue;
                }
                let binom = binomials(k);
                let mut next = Vec::with_capacity(partial.len() * (k as usize + 1));
                for (pe, pc) in &partial {
                    let mut mp = Q::one();
                    let mut mpows = vec![Q::one()];
                    for _ in 0..k {
                        mp *= &m[i];
                        mpows.push(mp.clone());
                    }
                    for j in 0..=k {
                        let coef = pc * &binom[j as usize] * &mpows[(k - j) as usize];
                        if coef.is_zero() {
                            continue;
                        }
                        let mut ne = pe.clone();
                        ne[i] = j;
                        next.push((ne, coef));
                    }
                }
                partial = next;
            }
            for (pe, pc) in partial {
                out.add_term(pe, pc);
            }
        }
        out
    }

    /// Range enclosure over a box: centered (Taylor) form intersected with
    /// the monomial-wise form.  Also reports each variable's share of the
    /// centered-form width, used to pick split directions.
    pub fn range(&self, b: &[RatInterval]) -> (RatInterval, Vec<Q>) {
        let m: Vec<Q> = b.iter().map(|x| x.mid()).collect();
        let r: Vec<Q> = b.iter().map(|x| x.rad()).collect();
        let shifted = self.shift(&m);
        let mut lo = Q::zero();
        let mut hi = Q::zero();
        let mut share = vec![Q::zero(); self.nvars];
        for (e, c) in &shifted.terms {
            if e.iter().all(|&k| k == 0) {
                lo += c;
                hi += c;
                continue;
            }
            let mut mag = c.abs();
            let mut all_even = true;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    mag *= num_traits::pow(r[i].clone(), k as usize);
                    if k % 2 == 1 {
                        all_even = false;
                    }
                }
            }
            if mag.is_zero() {
                continue;
            }
            if all_even {
                if c.is_positive() {
                    hi += &mag;
                } else {
                    lo -= &mag;
                }
            } else {
                lo -= &mag;
                hi += &mag;
            }
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    share[i] += &mag;
                }
            }
        }
        let centered = RatInterval::new(lo, hi).expect("ordered");
        let naive = self.eval_interval(b);
        let out = centered.intersect(&naive).unwrap_or(centered);
        (out, share)
    }

    /// Coefficients in the given variable order, as a univariate polynomial
    /// when only variable `i` occurs.
    pub fn to_uni(&self, i: usize) -> Option<UniPoly> {
        let mut c = vec![Q::zero(); self.degree_in(i) as usize + 1];
        for (e, v) in &self.terms {
            if e.iter().enumerate().any(|(j, &k)| j != i && k > 0) {
                return None;
            }
            c[e[i] as usize] += v;
        }
        Some(UniPoly::new(c))
    }

    pub fn with_nvars(&self, n: usize) -> Poly {
        assert!(n >= self.nvars);
        Poly {
            nvars: n,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| {
                    let mut f = e.clone();
                    f.resize(n, 0);
                    (f, c.clone())
                })
                .collect(),
        }
    }
}

fn binomials(k: u32) -> Vec<Q> {
    let mut row = vec![Q::one()];
    for n in 1..=k {
        let mut next = vec![Q::one(); n as usize + 1];
        for j in 1..n as usize {
            next[j] = &row[j - 1] + &row[j];
        }
        row = next;
    }
    row
}

/// Dense univariate polynomial `Σ c_k z^k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UniPoly {
    #[serde(with = "crate::rational::serde_qvec")]
    coeffs: Vec<Q>,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<Q>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Q::zero());
        }
        UniPoly { coeffs }
    }

    pub fn constant(c: Q) -> Self {
        UniPoly::new(vec![c])
    }

    pub fn linear(c0: Q, c1: Q) -> Self {
        UniPoly::new(vec![c0, c1])
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: &Q) -> Q {
        let mut acc = Q::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn add(&self, o: &UniPoly) -> UniPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let z = Q::zero();
        UniPoly::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&z) + o.coeffs.get(i).unwrap_or(&z))
                .collect(),
        )
    }

    pub fn sub(&self, o: &UniPoly) -> UniPoly {
        self.add(&o.scale(&-Q::one()))
    }

    pub fn scale(&self, k: &Q) -> UniPoly {
        UniPoly::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, o: &UniPoly) -> UniPoly {
        let mut c = vec![Q::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        UniPoly::new(c)
    }

    /// `p(a·z + b)`.
    pub fn compose_affine(&self, a: &Q, b: &Q) -> UniPoly {
        let lin = UniPoly::linear(b.clone(), a.clone());
        let mut acc = UniPoly::constant(Q::zero());
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(&lin).add(&UniPoly::constant(c.clone()));
        }
        acc
    }

    pub fn derivative(&self) -> UniPoly {
        if self.coeffs.len() <= 1 {
            return UniPoly::constant(Q::zero());
        }
        UniPoly::new(
            self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c * qi(k as i64)).collect(),
        )
    }

    /// Centered-form enclosure of the range over `x`, intersected with Horner
    /// interval evaluation.
    pub fn range_enclosure(&self, x: &RatInterval) -> RatInterval {
        if x.is_point() {
            return RatInterval::point(self.eval(x.lo()));
        }
        let m = x.mid();
        let r = x.rad();
        let s = self.compose_affine(&Q::one(), &m);
        let mut lo = s.coeffs[0].clone();
        let mut hi = s.coeffs[0].clone();
        let mut rk = Q::one();
        for (k, c) in s.coeffs.iter().enumerate().skip(1) {
            rk *= &r;
            let mag = c.abs() * &rk;
            if k % 2 == 0 {
                if c.is_positive() {
                    hi += mag;
                } else {
                    lo -= mag;
                }
            } else {
                lo -= &mag;
                hi += mag;
            }
        }
        let centered = RatInterval::new(lo, hi).expect("ordered");
        let mut h = RatInterval::zero();
        for c in self.coeffs.iter().rev() {
            h = iadd(&imul(&h, x), &RatInterval::point(c.clone()));
        }
        centered.intersect(&h).unwrap_or(centered)
    }

    /// Tight range bounds: branch and bound separately on the minimum and the
    /// maximum until each is known to within `acc`.
    pub fn range_tight(&self, x: &RatInterval, acc: &Q) -> RatInterval {
        if x.is_point() || self.degree() == 0 {
            return self.range_enclosure(x);
        }
        if self.degree() == 1 {
            return RatInterval::spanning(self.eval(x.lo()), self.eval(x.hi()));
        }
        let lo = self.extremum(x, acc, false);
        let hi = self.extremum(x, acc, true);
        RatInterval::new(lo, hi).expect("ordered")
    }

    fn extremum(&self, x: &RatInterval, acc: &Q, upper: bool) -> Q {
        // Work on the lower bound; the upper one is the lower bound of -p.
        let p = if upper { self.scale(&-Q::one()) } else { self.clone() };
        let mut best = p.eval(x.lo()).min(p.eval(x.hi()));
        let mut work = vec![x.clone()];
        let mut bound: Option<Q> = None;
        let mut iters = 0usize;
        while let Some(iv) = work.pop() {
            iters += 1;
            let e = p.range_enclosure(&iv);
            let m = iv.mid();
            let vm = p.eval(&m);
            if vm < best {
                best = vm;
            }
            let settled = e.lo() >= &(&best - acc) || iters > 20_000 || iv.width() < Q::new(1.into(), num_bigint::BigInt::one() << 200usize);
            if settled {
                bound = Some(match bound {
                    None => e.lo().clone(),
                    Some(b) => b.min(e.lo().clone()),
                });
            } else {
                let (a, b) = iv.split();
                work.push(b);
                work.push(a);
            }
        }
        let lb = bound.unwrap_or(best);
        if upper {
            -lb
        } else {
            lb
        }
    }

    /// Bound on `max |p|` over `x`.
    pub fn sup_abs(&self, x: &RatInterval) -> Q {
        self.range_enclosure(x).mag()
    }

    /// Round every coefficient to a multiple of `2^-bits`; returns the rounded
    /// polynomial and the per-coefficient rounding errors.
    pub fn round_dyadic(&self, bits: u32) -> (UniPoly, Vec<Q>) {
        let rounded: Vec<Q> =
            self.coeffs.iter().map(|c| crate::rational::round_dyadic(c, bits)).collect();
        let errs = self.coeffs.iter().zip(&rounded).map(|(a, b)| (a - b).abs()).collect();
        (UniPoly::new(rounded), errs)
    }
}

/// Expand a function-free term; `None` when a variable has no index or a
/// function symbol occurs.
pub fn term_to_poly(t: &crate::formula::Term, nvars: usize, index: &dyn Fn(&str) -> Option<usize>) -> Option<Poly> {
    use crate::formula::Term;
    Some(match t {
        Term::Var(v) => Poly::var(nvars, index(v)?),
        Term::Const(c) => Poly::constant(nvars, c.clone()),
        Term::Add(a, b) => term_to_poly(a, nvars, index)?.add(&term_to_poly(b, nvars, index)?),
        Term::Mul(a, b) => term_to_poly(a, nvars, index)?.mul(&term_to_poly(b, nvars, index)?),
        Term::App(..) => return None,
    })
}

/// Sum-of-monomials term for `p` with variable `i` printed as `names[i]`.
pub fn poly_to_term(p: &Poly, names: &[String]) -> crate::formula::Term {
    use crate::formula::Term;
    let mut acc: Option<Term> = None;
    for (e, c) in p.terms().collect::<Vec<_>>().into_iter().rev() {
        let mut mono: Option<Term> = None;
        for (i, &k) in e.iter().enumerate() {
            for _ in 0..k {
                let v = Term::var(&names[i]);
                mono = Some(match mono {
                    None => v,
                    Some(m) => Term::mul(m, v),
                });
            }
        }
        let t = match mono {
            None => Term::Const(c.clone()),
            Some(m) if c.is_one() => m,
            Some(m) => Term::mul(Term::Const(c.clone()), m),
        };
        acc = Some(match acc {
            None => t,
            Some(a) => Term::add(a, t),
        });
    }
    acc.unwrap_or_else(|| Term::Const(Q::zero()))
}
