//! Taylor coefficients of solutions of polynomial autonomous systems,
//! computed by the Cauchy-product recurrence.

use crate::interval::{iadd, imul, RatInterval};
use crate::poly::Poly;
use crate::rational::{qi, Q};
use num_traits::Zero;

/// Coefficient ring for the recurrence: exact rationals or intervals.
pub(crate) trait Coef: Clone {
    fn zero() -> Self;
    fn from_q(c: &Q) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div_int(&self, k: i64) -> Self;
}

impl Coef for Q {
    fn zero() -> Self {
        <Q as Zero>::zero()
    }
    fn from_q(c: &Q) -> Self {
        c.clone()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div_int(&self, k: i64) -> Self {
        self / qi(k)
    }
}

impl Coef for RatInterval {
    fn zero() -> Self {
        RatInterval::zero()
    }
    fn from_q(c: &Q) -> Self {
        RatInterval::point(c.clone())
    }
    fn add(&self, o: &Self) -> Self {
        iadd(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        imul(self, o)
    }
    fn div_int(&self, k: i64) -> Self {
        self.scale(&Q::new(1.into(), k.into()))
    }
}

/// One monomial of the field as a chain of variable indices.
struct Chain {
    coeff: Q,
    factors: Vec<usize>,
}

/// `out[i][k]` is the k-th Taylor coefficient of coordinate `i` of the
/// solution of `x' = field(x)`, `x(0) = x0`, for `k = 0..=order`.
///
/// With interval `x0` every coefficient encloses the corresponding
/// coefficient for all solutions starting in the box.
pub(crate) fn taylor_coeffs<C: Coef>(field: &[Poly], x0: &[C], order: usize) -> Vec<Vec<C>> {
    let n = x0.len();
    let chains: Vec<Vec<Chain>> = field
        .iter()
        .map(|p| {
            p.terms()
                .map(|(e, c)| Chain {
                    coeff: c.clone(),
                    factors: e.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect(),
                })
                .collect()
        })
        .collect();
    let mut x: Vec<Vec<C>> = x0.iter().map(|c| vec![c.clone()]).collect();
    // partial[i][m][j] = coefficients of the product of the first j+1
    // factors of monomial m of component i; the last entry is the monomial.
    let mut partial: Vec<Vec<Vec<Vec<C>>>> = chains
        .iter()
        .map(|cs| cs.iter().map(|ch| vec![Vec::new(); ch.factors.len()]).collect())
        .collect();
    for k in 0..order {
        let mut next = vec![C::zero(); n];
        for (i, cs) in chains.iter().enumerate() {
            let mut gk = C::zero();
            for (m, ch) in cs.iter().enumerate() {
                if ch.factors.is_empty() {
                    if k == 0 {
                        gk = gk.add(&C::from_q(&ch.coeff));
                    }
                    continue;
                }
                let pp = &mut partial[i][m];
                let first = x[ch.factors[0]][k].clone();
                pp[0].push(first);
                for j in 1..ch.factors.len() {
                    let xs = &x[ch.factors[j]];
                    let mut s = C::zero();
                    for l in 0..=k {
                        s = s.add(&pp[j - 1][l].mul(&xs[k - l]));
                    }
                    pp[j].push(s);
                }
                let last = &pp[ch.factors.len() - 1][k];
                gk = gk.add(&last.mul(&C::from_q(&ch.coeff)));
            }
            next[i] = gk.div_int(k as i64 + 1);
        }
        for (xi, c) in x.iter_mut().zip(next) {
            xi.push(c);
        }
    }
    x
}
