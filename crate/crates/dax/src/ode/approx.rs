//! Certified piecewise-polynomial approximants of differentially-defined
//! functions and their error checks.

use super::series::taylor_coeffs;
use super::stepper::{enclose_at, solve_enclosure, verify_steps, TaylorStep};
use super::DivergenceError;
use crate::interval::{iadd, RatInterval};
use crate::poly::UniPoly;
use crate::rational::{abs, bits_below, fmt_q, qi, round_dyadic, to_f64, Q};
use crate::registry::FuncDef;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub domain: RatInterval,
    /// Polynomial in absolute time.
    pub poly: UniPoly,
}

impl Piece {
    pub fn new(domain: RatInterval, poly: UniPoly) -> Self {
        Piece { domain, poly }
    }
}

/// Bound on `|piece − h|` over the overlap of one piece with one step,
/// certified on the sub-intervals delimited by `cuts`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffCheck {
    pub piece: usize,
    pub step: usize,
    #[serde(with = "crate::rational::serde_qvec")]
    pub cuts: Vec<Q>,
    #[serde(with = "crate::rational::serde_q")]
    pub bound: Q,
}

/// Evidence that a piecewise polynomial is within `eps` of a function on a
/// window: the enclosure steps used and one check per piece/step overlap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub window: RatInterval,
    #[serde(with = "crate::rational::serde_q")]
    pub eps: Q,
    #[serde(with = "crate::rational::serde_q")]
    pub tol: Q,
    pub steps: Vec<TaylorStep>,
    pub checks: Vec<DiffCheck>,
}

impl ErrorRecord {
    /// Largest certified bound among the checks.
    pub fn sup_bound(&self) -> Q {
        self.checks.iter().map(|c| c.bound.clone()).max().unwrap_or_else(Q::zero)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertifiedApprox {
    pub func: String,
    pub domain: RatInterval,
    pub pieces: Vec<Piece>,
    /// Strict bound: `|pieces(t) − h(t)| < error_bound` on the domain.
    #[serde(with = "crate::rational::serde_q")]
    pub error_bound: Q,
    pub records: Vec<ErrorRecord>,
}

impl CertifiedApprox {
    pub fn eval(&self, t: &Q) -> Option<Q> {
        self.pieces.iter().find(|p| p.domain.contains(t)).map(|p| p.poly.eval(t))
    }

    /// Largest certified bound, which is below `error_bound`.
    pub fn certified_sup(&self) -> Q {
        self.records.iter().map(|r| r.sup_bound()).max().unwrap_or_else(Q::zero)
    }
}

fn overlap(a: &RatInterval, b: &RatInterval) -> Option<RatInterval> {
    a.intersect(b)
}

/// `D(τ) = piece(t0 + dir·τ) − step.poly[0](τ)`.
fn local_difference(piece: &Piece, step: &TaylorStep) -> UniPoly {
    piece.poly.compose_affine(&qi(step.dir as i64), &step.t0).sub(&step.poly[0])
}

fn sub_bound(d: &UniPoly, step: &TaylorStep, sub: &RatInterval) -> Q {
    d.range_enclosure(&step.local_interval(sub)).mag() + step.rem[0].mag()
}

/// Lower bound on `|piece − h|` at `t`.
fn pointwise_excess(piece: &Piece, step: &TaylorStep, t: &Q) -> Q {
    let d = piece.poly.eval(t) - step.poly[0].eval(&step.local(t));
    abs(&d) - step.rem[0].mag()
}

enum Outcome {
    Certified(Vec<DiffCheck>),
    Exceeds,
    Undecided,
}

fn pairs<'a>(
    pieces: &'a [Piece],
    steps: &'a [TaylorStep],
    window: &'a RatInterval,
) -> impl Iterator<Item = (usize, usize, RatInterval)> + 'a {
    pieces.iter().enumerate().flat_map(move |(pi, p)| {
        steps.iter().enumerate().filter_map(move |(si, s)| {
            let o = overlap(&p.domain, &s.time_window())?.intersect(window)?;
            (!o.is_point() || window.is_point()).then_some((pi, si, o))
        })
    })
}

fn check_pieces(pieces: &[Piece], steps: &[TaylorStep], window: &RatInterval, eps: &Q) -> Outcome {
    let mut checks = Vec::new();
    for (pi, si, ov) in pairs(pieces, steps, window) {
        let (piece, step) = (&pieces[pi], &steps[si]);
        let d = local_difference(piece, step);
        let mut cuts = vec![ov.lo().clone()];
        let mut bound = Q::zero();
        let mut stack = vec![(ov.clone(), 0u32)];
        let mut boxes = 0usize;
        while let Some((iv, depth)) = stack.pop() {
            boxes += 1;
            let b = sub_bound(&d, step, &iv);
            if &b < eps {
                if b > bound {
                    bound = b;
                }
                cuts.push(iv.hi().clone());
                continue;
            }
            for t in [iv.lo(), &iv.mid(), iv.hi()] {
                if &pointwise_excess(piece, step, t) >= eps {
                    return Outcome::Exceeds;
                }
            }
            if depth >= 40 || boxes > 20_000 {
                return Outcome::Undecided;
            }
            let (l, r) = iv.split();
            stack.push((r, depth + 1));
            stack.push((l, depth + 1));
        }
        checks.push(DiffCheck { piece: pi, step: si, cuts, bound });
    }
    Outcome::Certified(checks)
}

/// Steps from the initial time out to the far ends of `window`; the chain is
/// kept whole so that it can be re-verified from the initial condition.
fn steps_on(def: &FuncDef, window: &RatInterval, tol: &Q) -> Result<Vec<TaylorStep>, DivergenceError> {
    let reach = window.hull(&RatInterval::point(def.init_time.clone()));
    let steps = solve_enclosure(def, window, tol)?;
    Ok(steps
        .into_iter()
        .filter(|s| s.time_window().intersect(&reach).is_some_and(|o| !o.is_point() || reach.is_point()))
        .collect())
}

/// Certifies `sup_window |candidate − h| < eps`.  A `false` result means
/// either that the bound could not be certified or that some point of the
/// window provably violates it.
pub fn verify_error(
    def: &FuncDef,
    candidate: &[Piece],
    window: &RatInterval,
    eps: &Q,
) -> Result<(bool, Option<ErrorRecord>), DivergenceError> {
    assert!(eps.is_positive(), "eps must be positive");
    if !covers(candidate, window) {
        return Ok((false, None));
    }
    let mut tol = eps / qi(4);
    for _ in 0..5 {
        let steps = steps_on(def, window, &tol)?;
        match check_pieces(candidate, &steps, window, eps) {
            Outcome::Certified(checks) => {
                let rec = ErrorRecord { window: window.clone(), eps: eps.clone(), tol, steps, checks };
                return Ok((true, Some(rec)));
            }
            Outcome::Exceeds => return Ok((false, None)),
            Outcome::Undecided => tol /= qi(16),
        }
    }
    Ok((false, None))
}

/// Whether the pieces are contiguous and their union contains `window`.
fn covers(pieces: &[Piece], window: &RatInterval) -> bool {
    if pieces.is_empty() {
        return false;
    }
    if pieces.windows(2).any(|w| w[0].domain.hi() != w[1].domain.lo()) {
        return false;
    }
    pieces[0].domain.lo() <= window.lo() && window.hi() <= pieces[pieces.len() - 1].domain.hi()
}

/// Independent re-check of a record against the pieces it refers to.
pub fn check_record(def: &FuncDef, pieces: &[Piece], rec: &ErrorRecord) -> Result<(), String> {
    verify_steps(def, &rec.steps)?;
    if !covers(pieces, &rec.window) {
        return Err("pieces do not cover the record window".into());
    }
    let mut seen = vec![false; rec.checks.len()];
    for (pi, si, ov) in pairs(pieces, &rec.steps, &rec.window) {
        let idx = rec
            .checks
            .iter()
            .position(|c| c.piece == pi && c.step == si)
            .ok_or_else(|| format!("missing check for piece {pi} on step {si}"))?;
        seen[idx] = true;
        let c = &rec.checks[idx];
        if c.bound >= rec.eps {
            return Err(format!("check bound {} is not below {}", fmt_q(&c.bound), fmt_q(&rec.eps)));
        }
        if c.cuts.first() != Some(ov.lo()) || c.cuts.last() != Some(ov.hi()) {
            return Err(format!("check for piece {pi} on step {si} does not span the overlap"));
        }
        let d = local_difference(&pieces[pi], &rec.steps[si]);
        for w in c.cuts.windows(2) {
            let sub = RatInterval::new(w[0].clone(), w[1].clone())
                .map_err(|_| "cut points out of order".to_string())?;
            if sub_bound(&d, &rec.steps[si], &sub) > c.bound {
                return Err(format!(
                    "difference bound on {} exceeds the recorded {}",
                    sub,
                    fmt_q(&c.bound)
                ));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err("record holds a check for a non-overlapping pair".into());
    }
    // Step windows must cover the record window.
    let mut covered = rec.window.lo().clone();
    let mut ws: Vec<RatInterval> = rec.steps.iter().map(|s| s.time_window()).collect();
    ws.sort();
    for w in ws {
        if w.lo() <= &covered && w.hi() > &covered {
            covered = w.hi().clone();
        }
    }
    if &covered < rec.window.hi() || (rec.window.is_point() && rec.steps.is_empty()) {
        return Err("steps do not cover the record window".into());
    }
    Ok(())
}

pub fn check_approx(def: &FuncDef, a: &CertifiedApprox) -> Result<(), String> {
    if a.func != def.name {
        return Err("approximation refers to a different function".into());
    }
    if !covers(&a.pieces, &a.domain) {
        return Err("pieces do not cover the domain".into());
    }
    let mut at = a.domain.lo().clone();
    for rec in &a.records {
        if rec.eps > a.error_bound {
            return Err("record certified for a larger error than claimed".into());
        }
        if rec.window.lo() != &at {
            return Err("record windows are not contiguous".into());
        }
        at = rec.window.hi().clone();
        check_record(def, &a.pieces, rec)?;
    }
    if &at != a.domain.hi() || a.records.is_empty() {
        return Err("records do not cover the domain".into());
    }
    Ok(())
}

/// Certified range enclosure of `h` over `input` with overestimation at most
/// `2·tol` beyond the true range.
pub fn range_bound(def: &FuncDef, input: &RatInterval, tol: &Q) -> Result<RatInterval, DivergenceError> {
    assert!(tol.is_positive(), "tolerance must be positive");
    if input.is_point() {
        let v = enclose_at(def, input.lo(), &(tol / qi(2)))?;
        return Ok(v[0].clone());
    }
    let steps = solve_enclosure(def, input, &(tol / qi(2)))?;
    let acc = tol / qi(4);
    let mut out: Option<RatInterval> = None;
    for s in &steps {
        let Some(ov) = s.time_window().intersect(input) else { continue };
        if ov.is_point() {
            continue;
        }
        let r = iadd(&s.poly[0].range_tight(&s.local_interval(&ov), &acc), &s.rem[0]);
        out = Some(match out {
            None => r,
            Some(o) => o.hull(&r),
        });
    }
    Ok(out.expect("steps cover a non-degenerate input"))
}

/// Taylor candidate at the window center, or `None` when the estimated
/// degree exceeds the cap.
fn taylor_candidate(def: &FuncDef, window: &RatInterval, eps: &Q) -> Result<Option<UniPoly>, DivergenceError> {
    const MAX_DEGREE: usize = 24;
    let width = window.width();
    let c = if width.is_zero() {
        window.lo().clone()
    } else {
        round_dyadic(&window.mid(), bits_below(&width) + 4)
    };
    let ebits = bits_below(eps) + 8;
    let state = enclose_at(def, &c, &(eps / qi(64)))?;
    let xc: Vec<Q> = state.iter().map(|iv| round_dyadic(&iv.mid(), ebits)).collect();
    let coeffs = taylor_coeffs(&def.field, &xc, MAX_DEGREE + 2);
    let r = to_f64(&(window.hi() - &c)).max(to_f64(&(&c - window.lo()))).max(0.0);
    let target = to_f64(eps) / 8.0;
    let a: Vec<f64> = coeffs[0].iter().map(to_f64).collect();
    let est = |n: usize| 2.0 * (a[n + 1].abs() * r.powi(n as i32 + 1)).max(a[n + 2].abs() * r.powi(n as i32 + 2));
    let Some(n) = (0..=MAX_DEGREE).find(|&n| est(n) <= target) else {
        return Ok(None);
    };
    let rbits = ebits + (n as f64 * r.max(1.0).log2()).ceil() as u32;
    let centered = UniPoly::new(coeffs[0][..=n].iter().map(|v| round_dyadic(v, rbits)).collect());
    Ok(Some(centered.compose_affine(&Q::from_integer(1.into()), &-c)))
}

/// Certified piecewise polynomial with `sup_window |p − h| < eps`.
pub fn approx_function(def: &FuncDef, window: &RatInterval, eps: &Q) -> Result<CertifiedApprox, DivergenceError> {
    assert!(eps.is_positive(), "eps must be positive");
    let mut pieces = Vec::new();
    let mut records = Vec::new();
    let mut work = vec![(window.clone(), 0u32)];
    while let Some((iv, depth)) = work.pop() {
        if let Some(p) = taylor_candidate(def, &iv, eps)? {
            let piece = Piece::new(iv.clone(), p);
            if let (true, Some(mut rec)) = verify_error(def, std::slice::from_ref(&piece), &iv, eps)? {
                let offset = pieces.len();
                for c in &mut rec.checks {
                    c.piece += offset;
                }
                pieces.push(piece);
                records.push(rec);
                continue;
            }
        }
        if depth >= 16 || iv.is_point() {
            return Err(DivergenceError {
                func: def.name.clone(),
                time: iv.mid(),
                reason: "no certified approximant found".into(),
            });
        }
        let (l, r) = iv.split();
        work.push((r, depth + 1));
        work.push((l, depth + 1));
    }
    Ok(CertifiedApprox { func: def.name.clone(), domain: window.clone(), pieces, error_bound: eps.clone(), records })
}

/// Wraps a user-supplied piecewise polynomial after certifying it.
pub fn certify_candidate(
    def: &FuncDef,
    pieces: Vec<Piece>,
    window: &RatInterval,
    eps: &Q,
) -> Result<Option<CertifiedApprox>, DivergenceError> {
    let (ok, rec) = verify_error(def, &pieces, window, eps)?;
    Ok(match (ok, rec) {
        (true, Some(rec)) => Some(CertifiedApprox {
            func: def.name.clone(),
            domain: window.clone(),
            pieces,
            error_bound: eps.clone(),
            records: vec![rec],
        }),
        _ => None,
    })
}
