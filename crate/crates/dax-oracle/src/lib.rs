//! Brute-force reference evaluation for tests.
//!
//! Builtin functions are evaluated by argument halving plus a truncated
//! power series in rational ball arithmetic; formulas are evaluated at a
//! point with every bounded quantifier replaced by a finite grid.  Nothing
//! here touches the ODE machinery of `dax`; only the syntax tree is shared.

use dax::formula::{Atom, Formula, Rel, Term};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, HashMap};

pub type Q = BigRational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub series_terms: usize,
    /// Grid spacing upper bound for quantifier ranges.
    pub grid_resolution: Q,
    /// Decimal digits; series values carry a radius below `10^-(precision-10)`.
    pub precision: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            series_terms: 40,
            grid_resolution: Q::new(BigInt::one(), BigInt::from(1024)),
            precision: 50,
        }
    }
}

impl OracleConfig {
    pub fn with_resolution(mut self, res: Q) -> Self {
        self.grid_resolution = res;
        self
    }

    fn bits(&self) -> u64 {
        u64::from(self.precision) * 4 + 16
    }
}

/// `mid ± rad`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ball {
    pub mid: Q,
    pub rad: Q,
}

impl Ball {
    pub fn exact(x: Q) -> Ball {
        Ball { mid: x, rad: Q::zero() }
    }

    pub fn lo(&self) -> Q {
        &self.mid - &self.rad
    }

    pub fn hi(&self) -> Q {
        &self.mid + &self.rad
    }

    pub fn contains(&self, x: &Q) -> bool {
        (&self.mid - x).abs() <= self.rad
    }

    pub fn add(&self, o: &Ball) -> Ball {
        Ball { mid: &self.mid + &o.mid, rad: &self.rad + &o.rad }
    }

    pub fn neg(&self) -> Ball {
        Ball { mid: -&self.mid, rad: self.rad.clone() }
    }

    pub fn mul(&self, o: &Ball) -> Ball {
        let rad = self.mid.abs() * &o.rad + o.mid.abs() * &self.rad + &self.rad * &o.rad;
        Ball { mid: &self.mid * &o.mid, rad }
    }

    pub fn scale(&self, c: &Q) -> Ball {
        Ball { mid: &self.mid * c, rad: &self.rad * c.abs() }
    }

    /// Rounds the midpoint onto a `2^-bits` grid once denominators get long.
    fn tidy(self, bits: u64) -> Ball {
        if self.mid.denom().bits() <= bits + 64 && self.rad.denom().bits() <= bits + 64 {
            return self;
        }
        let scale = Q::from_integer(BigInt::one() << bits);
        let ulp = Q::new(BigInt::one(), BigInt::one() << bits);
        let mid = (&self.mid * &scale).round() / &scale;
        let err = (&self.mid - &mid).abs();
        let rad = ((&self.rad + err) * &scale).ceil() / &scale + ulp;
        Ball { mid, rad }
    }
}

/// `2 (1/2)^n / n!`, the remainder bound of an `n`-term series at `|x| <= 1/2`.
fn remainder_bound(n: usize) -> Q {
    let mut d = BigInt::one();
    for k in 1..=n {
        d *= BigInt::from(k);
    }
    Q::new(BigInt::from(2), d << n)
}

/// Halves `t` until `|t| <= 1/2`; returns the reduced argument and the count.
fn reduce(t: &Q) -> (Q, u32) {
    let half = Q::new(BigInt::one(), BigInt::from(2));
    let mut x = t.clone();
    let mut k = 0;
    while x.abs() > half {
        x /= Q::from_integer(BigInt::from(2));
        k += 1;
    }
    (x, k)
}

/// Terms `x^j / j!` for `j < n` in fixed point with `bits` fraction bits,
/// each with an error bound in ulps.  Requires `|x| <= 1/2`.
fn fixed_terms(x: &Q, n: usize, bits: u64) -> Vec<(BigInt, u64)> {
    let one = BigInt::one() << bits;
    let xf = (x * Q::from_integer(one.clone())).floor().to_integer();
    let mut out = Vec::with_capacity(n);
    let (mut t, mut e) = (one, 0u64);
    for j in 0..n {
        out.push((t.clone(), e));
        // |t| <= 2^bits, so the rounding of x and of the shift each cost at
        // most one ulp before the division; the division costs one more.
        t = ((&t * &xf) >> bits) / BigInt::from(j + 1);
        e += 4;
    }
    out
}

fn to_ball(v: BigInt, err: u64, bits: u64) -> Ball {
    let den = BigInt::one() << bits;
    Ball { mid: Q::new(v, den.clone()), rad: Q::new(BigInt::from(err), den) }
}

fn widen(b: Ball, r: &Q) -> Ball {
    Ball { mid: b.mid, rad: b.rad + r }
}

pub fn oracle_exp(t: &Q, cfg: &OracleConfig) -> Ball {
    if t.is_zero() {
        return Ball::exact(Q::one());
    }
    let bits = cfg.bits();
    let (x, k) = reduce(t);
    let (mut sum, mut err) = (BigInt::zero(), 0u64);
    for (v, e) in fixed_terms(&x, cfg.series_terms, bits) {
        sum += v;
        err += e;
    }
    let mut e = widen(to_ball(sum, err, bits), &remainder_bound(cfg.series_terms));
    for _ in 0..k {
        e = e.mul(&e).tidy(bits);
    }
    e
}

/// `(sin t, cos t)`.
pub fn oracle_sin_cos(t: &Q, cfg: &OracleConfig) -> (Ball, Ball) {
    if t.is_zero() {
        return (Ball::exact(Q::zero()), Ball::exact(Q::one()));
    }
    let bits = cfg.bits();
    let (x, k) = reduce(t);
    let (mut s, mut c) = ((BigInt::zero(), 0u64), (BigInt::zero(), 0u64));
    for (j, (v, e)) in fixed_terms(&x, cfg.series_terms, bits).into_iter().enumerate() {
        let acc = if j % 2 == 0 { &mut c } else { &mut s };
        if (j / 2) % 2 == 0 {
            acc.0 += v;
        } else {
            acc.0 -= v;
        }
        acc.1 += e;
    }
    let rem = remainder_bound(cfg.series_terms);
    let mut s = widen(to_ball(s.0, s.1, bits), &rem);
    let mut c = widen(to_ball(c.0, c.1, bits), &rem);
    let two = Q::from_integer(BigInt::from(2));
    for _ in 0..k {
        let s2 = s.mul(&c).scale(&two).tidy(bits);
        let c2 = s.mul(&s).scale(&-two.clone()).add(&Ball::exact(Q::one())).tidy(bits);
        s = s2;
        c = c2;
    }
    (s, c)
}

/// Value of a builtin (`sin`, `cos`, `exp`) at a rational point.
pub fn oracle_eval_fn(name: &str, t: &Q, cfg: &OracleConfig) -> Option<Ball> {
    match name {
        "exp" => Some(oracle_exp(t, cfg)),
        "sin" => Some(oracle_sin_cos(t, cfg).0),
        "cos" => Some(oracle_sin_cos(t, cfg).1),
        _ => None,
    }
}

/// Ball around the value of `t` under `env`.  Panics on unknown functions or
/// unassigned variables.
pub fn oracle_eval_term(t: &Term, env: &BTreeMap<String, Q>, cfg: &OracleConfig) -> Ball {
    oracle_eval_term_memo(t, env, cfg, &mut HashMap::new())
}

/// [`oracle_eval_term`] recording the ball of every subterm in `memo`.
pub fn oracle_eval_term_memo(
    t: &Term,
    env: &BTreeMap<String, Q>,
    cfg: &OracleConfig,
    memo: &mut HashMap<Term, Ball>,
) -> Ball {
    if let Some(b) = memo.get(t) {
        return b.clone();
    }
    let b = match t {
        Term::Var(v) => Ball::exact(env.get(v).unwrap_or_else(|| panic!("unassigned variable `{v}`")).clone()),
        Term::Const(c) => Ball::exact(c.clone()),
        Term::Add(a, b) => oracle_eval_term_memo(a, env, cfg, memo).add(&oracle_eval_term_memo(b, env, cfg, memo)),
        Term::Mul(a, b) => oracle_eval_term_memo(a, env, cfg, memo)
            .mul(&oracle_eval_term_memo(b, env, cfg, memo))
            .tidy(cfg.bits()),
        Term::App(f, a) => {
            let arg = oracle_eval_term_memo(a, env, cfg, memo);
            let v = oracle_eval_fn(f.name(), &arg.mid, cfg).unwrap_or_else(|| panic!("no oracle for `{}`", f.name()));
            if arg.rad.is_zero() {
                v
            } else {
                // Nested application: widen by a Lipschitz bound over the
                // ball, 1 for sin and cos, e^(|x|+1) for exp.
                let lip = match f.name() {
                    "exp" => oracle_exp(&(arg.mid.abs() + &arg.rad + Q::one()).ceil(), cfg).hi(),
                    _ => Q::one(),
                };
                widen(v, &(lip * &arg.rad))
            }
        }
    };
    memo.insert(t.clone(), b.clone());
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Ambiguous,
}

impl Truth {
    fn from_bool(b: bool) -> Truth {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Ambiguous => Truth::Ambiguous,
        }
    }
}

fn atom_truth(a: &Atom, env: &BTreeMap<String, Q>, cfg: &OracleConfig) -> Truth {
    let v = oracle_eval_term(&a.lhs, env, cfg);
    // Function-free atoms are evaluated exactly; anything else is a
    // numerical value and a zero inside its radius cannot be ruled out.
    if a.lhs.is_function_free() {
        return Truth::from_bool(match a.rel {
            Rel::Geq => !v.mid.is_negative(),
            Rel::Gt => v.mid.is_positive(),
        });
    }
    if v.mid.abs() <= v.rad {
        Truth::Ambiguous
    } else {
        Truth::from_bool(v.mid.is_positive())
    }
}

fn conj(parts: impl Iterator<Item = Truth>) -> Truth {
    let mut amb = false;
    for t in parts {
        match t {
            Truth::False => return Truth::False,
            Truth::Ambiguous => amb = true,
            Truth::True => {}
        }
    }
    if amb {
        Truth::Ambiguous
    } else {
        Truth::True
    }
}

fn disj(parts: impl Iterator<Item = Truth>) -> Truth {
    conj(parts.map(Truth::not)).not()
}

/// `lo + k (hi - lo) / n` for `k = 0..=n`, with spacing at most `res`.
pub fn grid(lo: &Q, hi: &Q, res: &Q) -> Vec<Q> {
    let w = hi - lo;
    if w.is_zero() {
        return vec![lo.clone()];
    }
    let n = (&w / res).ceil().to_integer().max(BigInt::one());
    let n: u64 = n.try_into().expect("grid too fine");
    (0..=n).map(|k| lo + &w * Q::new(BigInt::from(k), BigInt::from(n))).collect()
}

fn bound_value(t: &Term, env: &BTreeMap<String, Q>, cfg: &OracleConfig) -> Q {
    let b = oracle_eval_term(t, env, cfg);
    assert!(b.rad.is_zero(), "quantifier bounds must be function-free");
    b.mid
}

/// Grid semantics at the point `env`: quantifiers range over [`grid`], empty
/// ranges make `∀` true and `∃` false.
pub fn oracle_eval_formula(f: &Formula, env: &BTreeMap<String, Q>, cfg: &OracleConfig) -> Truth {
    match f {
        Formula::Atomic(a) => atom_truth(a, env, cfg),
        Formula::And(fs) => conj(fs.iter().map(|g| oracle_eval_formula(g, env, cfg))),
        Formula::Or(fs) => disj(fs.iter().map(|g| oracle_eval_formula(g, env, cfg))),
        Formula::Not(g) => oracle_eval_formula(g, env, cfg).not(),
        Formula::Forall(v, lo, hi, body) | Formula::Exists(v, lo, hi, body) => {
            let (l, h) = (bound_value(lo, env, cfg), bound_value(hi, env, cfg));
            let forall = matches!(f, Formula::Forall(..));
            if h < l {
                return Truth::from_bool(forall);
            }
            let mut env = env.clone();
            let vals = grid(&l, &h, &cfg.grid_resolution).into_iter().map(|x| {
                env.insert(v.clone(), x);
                oracle_eval_formula(body, &env, cfg)
            });
            let vals: Vec<Truth> = vals.collect();
            if forall {
                conj(vals.into_iter())
            } else {
                disj(vals.into_iter())
            }
        }
    }
}

/// `x` as a decimal string with `digits` fractional digits, truncated.
pub fn decimal(x: &Q, digits: usize) -> String {
    let scale = BigInt::from(10).pow(digits as u32);
    let n = (x.abs() * Q::from_integer(scale.clone())).floor().to_integer();
    let (ip, fp) = (&n / &scale, &n % &scale);
    let sign = if x.is_negative() { "-" } else { "" };
    format!("{sign}{ip}.{:0>width$}", fp.to_string(), width = digits)
}
