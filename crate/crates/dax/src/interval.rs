//! Closed intervals with exact rational endpoints.

use crate::formula::Term;
use crate::rational::{abs, max_q, midpoint, min_q, qi, Q};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatInterval {
    #[serde(with = "crate::rational::serde_q")]
    lo: Q,
    #[serde(with = "crate::rational::serde_q")]
    hi: Q,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntervalError {
    #[error("interval lower end exceeds upper end")]
    Inverted,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("term `{0}` contains a function symbol")]
    NotFunctionFree(String),
}

impl RatInterval {
    pub fn new(lo: Q, hi: Q) -> Result<Self, IntervalError> {
        if lo > hi {
            Err(IntervalError::Inverted)
        } else {
            Ok(RatInterval { lo, hi })
        }
    }

    /// Builds `[min(a,b), max(a,b)]`.
    pub fn spanning(a: Q, b: Q) -> Self {
        if a <= b {
            RatInterval { lo: a, hi: b }
        } else {
            RatInterval { lo: b, hi: a }
        }
    }

    pub fn point(x: Q) -> Self {
        RatInterval { lo: x.clone(), hi: x }
    }

    pub fn symmetric(r: &Q) -> Self {
        let r = abs(r);
        RatInterval { lo: -r.clone(), hi: r }
    }

    pub fn zero() -> Self {
        RatInterval::point(Q::zero())
    }

    pub fn unit() -> Self {
        RatInterval { lo: Q::zero(), hi: Q::one() }
    }

    pub fn lo(&self) -> &Q {
        &self.lo
    }

    pub fn hi(&self) -> &Q {
        &self.hi
    }

    pub fn width(&self) -> Q {
        &self.hi - &self.lo
    }

    pub fn mid(&self) -> Q {
        midpoint(&self.lo, &self.hi)
    }

    pub fn rad(&self) -> Q {
        self.width() / qi(2)
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> Q {
        max_q(&abs(&self.lo), &abs(&self.hi)).clone()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Q) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn hull(&self, other: &RatInterval) -> RatInterval {
        RatInterval {
            lo: min_q(&self.lo, &other.lo).clone(),
            hi: max_q(&self.hi, &other.hi).clone(),
        }
    }

    pub fn intersect(&self, other: &RatInterval) -> Option<RatInterval> {
        let lo = max_q(&self.lo, &other.lo).clone();
        let hi = min_q(&self.hi, &other.hi).clone();
        if lo <= hi {
            Some(RatInterval { lo, hi })
        } else {
            None
        }
    }

    pub fn neg(&self) -> RatInterval {
        RatInterval { lo: -self.hi.clone(), hi: -self.lo.clone() }
    }

    pub fn sub(&self, other: &RatInterval) -> RatInterval {
        iadd(self, &other.neg())
    }

    pub fn scale(&self, c: &Q) -> RatInterval {
        RatInterval::spanning(&self.lo * c, &self.hi * c)
    }

    pub fn shift(&self, c: &Q) -> RatInterval {
        RatInterval { lo: &self.lo + c, hi: &self.hi + c }
    }

    /// Widen by `r >= 0` on both sides.
    pub fn pad(&self, r: &Q) -> RatInterval {
        RatInterval { lo: &self.lo - r, hi: &self.hi + r }
    }

    /// `x^k` with the even-power tightening.
    pub fn powi(&self, k: u32) -> RatInterval {
        if k == 0 {
            return RatInterval::point(Q::one());
        }
        let a = num_traits::pow(self.lo.clone(), k as usize);
        let b = num_traits::pow(self.hi.clone(), k as usize);
        if k % 2 == 1 {
            RatInterval { lo: a, hi: b }
        } else if self.lo.is_negative() && self.hi.is_positive() {
            RatInterval { lo: Q::zero(), hi: max_q(&a, &b).clone() }
        } else {
            RatInterval::spanning(a, b)
        }
    }

    pub fn split(&self) -> (RatInterval, RatInterval) {
        let m = self.mid();
        (
            RatInterval { lo: self.lo.clone(), hi: m.clone() },
            RatInterval { lo: m, hi: self.hi.clone() },
        )
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.lo.is_positive()
    }

    /// Smallest enclosing interval with endpoints on the `2^-bits` grid.
    pub fn outward(&self, bits: u32) -> RatInterval {
        RatInterval {
            lo: crate::rational::floor_dyadic(&self.lo, bits),
            hi: crate::rational::ceil_dyadic(&self.hi, bits),
        }
    }
}

impl fmt::Display for RatInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}]",
            crate::rational::fmt_q(&self.lo),
            crate::rational::fmt_q(&self.hi)
        )
    }
}

/// Minkowski sum.
pub fn iadd(a: &RatInterval, b: &RatInterval) -> RatInterval {
    RatInterval { lo: &a.lo + &b.lo, hi: &a.hi + &b.hi }
}

/// Product: min and max of the four endpoint products.
pub fn imul(a: &RatInterval, b: &RatInterval) -> RatInterval {
    let ps = [&a.lo * &b.lo, &a.lo * &b.hi, &a.hi * &b.lo, &a.hi * &b.hi];
    let mut lo = ps[0].clone();
    let mut hi = ps[0].clone();
    for p in &ps[1..] {
        if p < &lo {
            lo = p.clone();
        }
        if p > &hi {
            hi = p.clone();
        }
    }
    RatInterval { lo, hi }
}

/// `inner ⊆ outer`.
pub fn icontains(outer: &RatInterval, inner: &RatInterval) -> bool {
    outer.lo <= inner.lo && inner.hi <= outer.hi
}

/// Natural interval extension of a function-free term; `x·x` is a plain product.
pub fn ieval_term(t: &Term, env: &BTreeMap<String, RatInterval>) -> Result<RatInterval, IntervalError> {
    match t {
        Term::Var(v) => env.get(v).cloned().ok_or_else(|| IntervalError::UnboundVariable(v.clone())),
        Term::Const(c) => Ok(RatInterval::point(c.clone())),
        Term::Add(a, b) => Ok(iadd(&ieval_term(a, env)?, &ieval_term(b, env)?)),
        Term::Mul(a, b) => Ok(imul(&ieval_term(a, env)?, &ieval_term(b, env)?)),
        Term::App(..) => Err(IntervalError::NotFunctionFree(t.to_string())),
    }
}

/// Exact value of a function-free term at a point.
pub fn eval_term_point(t: &Term, env: &BTreeMap<String, Q>) -> Result<Q, IntervalError> {
    match t {
        Term::Var(v) => env.get(v).cloned().ok_or_else(|| IntervalError::UnboundVariable(v.clone())),
        Term::Const(c) => Ok(c.clone()),
        Term::Add(a, b) => Ok(eval_term_point(a, env)? + eval_term_point(b, env)?),
        Term::Mul(a, b) => Ok(eval_term_point(a, env)? * eval_term_point(b, env)?),
        Term::App(..) => Err(IntervalError::NotFunctionFree(t.to_string())),
    }
}
