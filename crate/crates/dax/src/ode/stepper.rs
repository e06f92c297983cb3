//! Taylor-model integration with a-priori boxes and rigorous remainders.

use super::series::taylor_coeffs;
use super::DivergenceError;
use crate::interval::{iadd, icontains, imul, RatInterval};
use crate::poly::{Poly, UniPoly};
use crate::rational::{abs, bits_below, pow2, qi, round_dyadic, to_f64, Q};
use crate::registry::FuncDef;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub const TAYLOR_ORDER: usize = 12;

/// One integration step.  For local time `τ ∈ [0, h]` the solution at
/// `t0 + dir·τ` lies in `poly(τ) + rem`, coordinate-wise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaylorStep {
    #[serde(with = "crate::rational::serde_q")]
    pub t0: Q,
    pub dir: i8,
    #[serde(with = "crate::rational::serde_q")]
    pub h: Q,
    /// Expansion point of the Taylor polynomial at `τ = 0`.
    #[serde(with = "crate::rational::serde_qvec")]
    pub xhat: Vec<Q>,
    /// Offset box: the true state at `τ = 0` lies in `xhat + err`.
    pub err: Vec<RatInterval>,
    /// A-priori box containing every trajectory from `xhat + err` on the step.
    pub apriori: Vec<RatInterval>,
    pub poly: Vec<UniPoly>,
    pub rem: Vec<RatInterval>,
}

impl TaylorStep {
    pub fn time_window(&self) -> RatInterval {
        RatInterval::spanning(self.t0.clone(), self.t_end())
    }

    pub fn t_end(&self) -> Q {
        &self.t0 + &self.h * qi(self.dir as i64)
    }

    /// Local time of the absolute time `t`.
    pub fn local(&self, t: &Q) -> Q {
        (t - &self.t0) * qi(self.dir as i64)
    }

    /// Local-time interval of an absolute-time interval inside the window.
    pub fn local_interval(&self, t: &RatInterval) -> RatInterval {
        RatInterval::spanning(self.local(t.lo()), self.local(t.hi()))
    }

    pub fn enclose(&self, coord: usize, t: &Q) -> RatInterval {
        iadd(&RatInterval::point(self.poly[coord].eval(&self.local(t))), &self.rem[coord])
    }

    pub fn end_state(&self) -> Vec<RatInterval> {
        (0..self.poly.len()).map(|i| self.enclose(i, &self.t_end())).collect()
    }
}

pub(crate) fn directed_field(def: &FuncDef, dir: i8) -> Vec<Poly> {
    if dir > 0 {
        def.field.clone()
    } else {
        def.field.iter().map(|p| p.neg()).collect()
    }
}

/// Remainder implied by a step's data, or the reason the data is invalid.
pub(crate) fn implied_remainder(
    g: &[Poly],
    h: &Q,
    xhat: &[Q],
    err: &[RatInterval],
    b: &[RatInterval],
    poly: &[UniPoly],
) -> Result<Vec<RatInterval>, String> {
    let n = g.len();
    if xhat.len() != n || err.len() != n || b.len() != n || poly.len() != n {
        return Err("dimension mismatch".into());
    }
    if err.iter().any(|e| !e.contains(&Q::zero())) {
        return Err("offset box does not contain 0".into());
    }
    let x0: Vec<RatInterval> = xhat.iter().zip(err).map(|(x, e)| e.shift(x)).collect();
    let span = RatInterval::new(Q::zero(), h.clone()).map_err(|_| "negative step".to_string())?;
    for i in 0..n {
        let image = iadd(&x0[i], &imul(&span, &g[i].eval_interval(b)));
        if !icontains(&b[i], &image) {
            return Err(format!("a-priori box fails the Picard check in coordinate {i}"));
        }
    }
    let mut lip = Q::zero();
    for gi in g {
        let mut row = Q::zero();
        for j in 0..n {
            row += gi.derivative(j).eval_interval(b).mag();
        }
        if row > lip {
            lip = row;
        }
    }
    let y = &lip * h;
    if y > Q::one() {
        return Err("step too long for the Lipschitz bound".into());
    }
    let growth = Q::one() + &y + &y * &y;
    let spread = err.iter().map(|e| e.mag()).max().unwrap_or_else(Q::zero) * growth;
    let exact = taylor_coeffs(g, xhat, TAYLOR_ORDER);
    let tail = taylor_coeffs(g, b, TAYLOR_ORDER + 1);
    let hk1 = num_traits::pow(h.clone(), TAYLOR_ORDER + 1);
    let mut rem = Vec::with_capacity(n);
    for i in 0..n {
        let stored = poly[i].coeffs();
        if stored.len() > TAYLOR_ORDER + 1 {
            return Err("step polynomial degree exceeds the Taylor order".into());
        }
        let mut rho = Q::zero();
        let mut hk = Q::one();
        for (k, c) in exact[i].iter().enumerate() {
            let s = stored.get(k).cloned().unwrap_or_else(Q::zero);
            rho += abs(&(c - s)) * &hk;
            hk *= h;
        }
        let trunc = imul(&tail[i][TAYLOR_ORDER + 1], &RatInterval::new(Q::zero(), hk1.clone()).expect("ordered"));
        rem.push(iadd(&trunc, &RatInterval::symmetric(&(rho + &spread))));
    }
    Ok(rem)
}

struct StepTry {
    step: TaylorStep,
    trunc_mag: Q,
}

fn try_step(
    g: &[Poly],
    t0: &Q,
    dir: i8,
    h: &Q,
    xhat: &[Q],
    err: &[RatInterval],
    exact: &[Vec<Q>],
    bits: u32,
) -> Option<StepTry> {
    let n = g.len();
    let x0: Vec<RatInterval> = xhat.iter().zip(err).map(|(x, e)| e.shift(x)).collect();
    let span = RatInterval::new(Q::zero(), h.clone()).ok()?;
    let tiny = pow2(-(bits as i64));
    let inflate = |iv: &RatInterval| -> RatInterval { iv.pad(&(iv.width() / qi(8) + &tiny)).outward(bits) };
    let mut b: Vec<RatInterval> = (0..n)
        .map(|i| {
            let drift = imul(&span, &g[i].eval_interval(&x0));
            inflate(&iadd(&x0[i], &drift))
        })
        .collect();
    let mut ok = false;
    for _ in 0..6 {
        let image: Vec<RatInterval> =
            (0..n).map(|i| iadd(&x0[i], &imul(&span, &g[i].eval_interval(&b)))).collect();
        if image.iter().zip(&b).all(|(im, bi)| icontains(bi, im)) {
            ok = true;
            break;
        }
        b = image.iter().zip(&b).map(|(im, bi)| inflate(&im.hull(bi))).collect();
    }
    if !ok {
        return None;
    }
    let poly: Vec<UniPoly> = exact
        .iter()
        .map(|c| UniPoly::new(c.iter().map(|v| round_dyadic(v, bits)).collect()))
        .collect();
    let rem = implied_remainder(g, h, xhat, err, &b, &poly).ok()?;
    let rem: Vec<RatInterval> = rem.iter().map(|r| r.outward(bits)).collect();
    let tail = taylor_coeffs(g, &b, TAYLOR_ORDER + 1);
    let hk1 = num_traits::pow(h.clone(), TAYLOR_ORDER + 1);
    let trunc_mag = tail.iter().map(|c| c[TAYLOR_ORDER + 1].mag()).max().unwrap_or_else(Q::zero) * hk1;
    Some(StepTry {
        step: TaylorStep {
            t0: t0.clone(),
            dir,
            h: h.clone(),
            xhat: xhat.to_vec(),
            err: err.to_vec(),
            apriori: b,
            poly,
            rem,
        },
        trunc_mag,
    })
}

/// Integrates from the initial time over `horizon` in direction `dir`.
fn integrate(def: &FuncDef, dir: i8, horizon: &Q, tol: &Q) -> Result<Vec<TaylorStep>, DivergenceError> {
    let g = directed_field(def, dir);
    let min_h = horizon * pow2(-60);
    let mut local = tol / qi(4);
    for _attempt in 0..6 {
        let bits = bits_below(&local) + 16;
        let mut steps: Vec<TaylorStep> = Vec::new();
        let mut t = def.init_time.clone();
        let end = &def.init_time + horizon * qi(dir as i64);
        let mut xhat = def.init_state.clone();
        let mut err = vec![RatInterval::zero(); def.dim];
        let mut h = horizon.clone().min(Q::one());
        let mut widest = Q::zero();
        let mut done = Q::zero();
        while &done < horizon {
            let remaining = horizon - &done;
            if h > remaining {
                h = remaining.clone();
            }
            let exact = taylor_coeffs(&g, &xhat, TAYLOR_ORDER);
            let accepted = loop {
                if h < min_h {
                    return Err(DivergenceError {
                        func: def.name.clone(),
                        time: t,
                        reason: "no admissible step size".into(),
                    });
                }
                let budget = &local * &h / horizon;
                match try_step(&g, &t, dir, &h, &xhat, &err, &exact, bits) {
                    Some(st) if st.trunc_mag <= budget => break st.step,
                    _ => h /= qi(2),
                }
            };
            for r in &accepted.rem {
                if r.width() > widest {
                    widest = r.width();
                }
            }
            let end_state = accepted.end_state();
            if end_state.iter().any(|iv| iv.mag() > pow2(200)) {
                return Err(DivergenceError {
                    func: def.name.clone(),
                    time: t,
                    reason: "enclosure blow-up".into(),
                });
            }
            done += &accepted.h;
            t = if done == *horizon { end.clone() } else { accepted.t_end() };
            xhat = end_state.iter().map(|iv| round_dyadic(&iv.mid(), bits)).collect();
            err = end_state
                .iter()
                .zip(&xhat)
                .map(|(iv, x)| iv.shift(&-x.clone()).hull(&RatInterval::zero()).outward(bits + 4))
                .collect();
            h = &accepted.h * qi(2);
            steps.push(accepted);
        }
        if widest <= *tol {
            return Ok(steps);
        }
        let ratio = to_f64(&(&widest / tol)).clamp(16.0, 1e12);
        local /= Q::from_integer(((ratio * 4.0) as i64).into());
    }
    Err(DivergenceError {
        func: def.name.clone(),
        time: def.init_time.clone(),
        reason: "requested tolerance not reached".into(),
    })
}

type CacheKey = (String, i8, i64, u32);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Vec<TaylorStep>>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Vec<TaylorStep>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn horizon_exp(reach: &Q) -> i64 {
    let mut k = -2i64;
    while &pow2(k) < reach {
        k += 1;
    }
    k
}

/// Steps in one direction over the canonical horizon `2^k` at tolerance
/// `2^-bits`.  Results depend only on the key, so memoizing them keeps the
/// output deterministic.
fn canonical(def: &FuncDef, dir: i8, k: i64, bits: u32) -> Result<Arc<Vec<TaylorStep>>, DivergenceError> {
    let key = (def.to_source(), dir, k, bits);
    if let Some(hit) = cache().lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let steps = Arc::new(integrate(def, dir, &pow2(k), &pow2(-(bits as i64)))?);
    cache().lock().expect("cache lock").insert(key, steps.clone());
    Ok(steps)
}

/// Steps covering `window` (and the initial time), ordered by time, each
/// with remainder width at most `tol`.
pub fn solve_enclosure(def: &FuncDef, window: &RatInterval, tol: &Q) -> Result<Vec<TaylorStep>, DivergenceError> {
    assert!(tol > &Q::zero(), "tolerance must be positive");
    let bits = bits_below(tol);
    let t = &def.init_time;
    let fwd = window.hi() - t;
    let bwd = t - window.lo();
    let mut out = Vec::new();
    if bwd > Q::zero() {
        let mut b: Vec<TaylorStep> = canonical(def, -1, horizon_exp(&bwd), bits)?.as_ref().clone();
        b.reverse();
        out.extend(b);
    }
    if fwd > Q::zero() || bwd <= Q::zero() {
        out.extend(canonical(def, 1, horizon_exp(&fwd), bits)?.iter().cloned());
    }
    Ok(out)
}

/// Enclosure of every state coordinate at time `t`.
pub fn enclose_at(def: &FuncDef, t: &Q, tol: &Q) -> Result<Vec<RatInterval>, DivergenceError> {
    if t == &def.init_time {
        return Ok(def.init_state.iter().cloned().map(RatInterval::point).collect());
    }
    let steps = solve_enclosure(def, &RatInterval::point(t.clone()), tol)?;
    let s = steps
        .iter()
        .find(|s| s.time_window().contains(t))
        .expect("steps cover the requested time");
    Ok((0..def.dim).map(|i| s.enclose(i, t)).collect())
}

/// Re-derives every claim of a step list from scratch.
pub fn verify_steps(def: &FuncDef, steps: &[TaylorStep]) -> Result<(), String> {
    let mut last: [Option<&TaylorStep>; 2] = [None, None];
    // Backward steps come first in reverse time order; re-sort per direction.
    let mut by_dir: Vec<&TaylorStep> = steps.iter().filter(|s| s.dir < 0).collect();
    by_dir.reverse();
    by_dir.extend(steps.iter().filter(|s| s.dir > 0));
    for s in by_dir {
        if s.dir != 1 && s.dir != -1 {
            return Err("step direction must be ±1".into());
        }
        if s.h <= Q::zero() {
            return Err("step length must be positive".into());
        }
        let slot = usize::from(s.dir > 0);
        match last[slot] {
            None => {
                if s.t0 != def.init_time
                    || s.xhat != def.init_state
                    || s.err.iter().any(|e| e != &RatInterval::zero())
                {
                    return Err("first step does not start at the initial condition".into());
                }
            }
            Some(p) => {
                if s.t0 != p.t_end() {
                    return Err(format!("gap between steps at t = {}", crate::rational::fmt_q(&p.t_end())));
                }
                let entry: Vec<RatInterval> = s.xhat.iter().zip(&s.err).map(|(x, e)| e.shift(x)).collect();
                if p.end_state().iter().zip(&entry).any(|(a, b)| !icontains(b, a)) {
                    return Err(format!("step at t = {} does not contain its predecessor's end state", crate::rational::fmt_q(&s.t0)));
                }
            }
        }
        let g = directed_field(def, s.dir);
        let rem = implied_remainder(&g, &s.h, &s.xhat, &s.err, &s.apriori, &s.poly)?;
        if rem.len() != s.rem.len() || rem.iter().zip(&s.rem).any(|(need, have)| !icontains(have, need)) {
            return Err(format!("remainder of step at t = {} is too small", crate::rational::fmt_q(&s.t0)));
        }
        last[slot] = Some(s);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use crate::registry::{builtin_registry, constant_def};

    #[test]
    fn constant_solution_is_exact() {
        let d = constant_def("five", qi(5));
        let steps = solve_enclosure(&d, &RatInterval::new(qi(0), qi(1)).unwrap(), &q(1, 1000)).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].poly[0], UniPoly::constant(qi(5)));
        assert_eq!(steps[0].rem[0], RatInterval::zero());
    }

    #[test]
    fn exp_at_one() {
        let r = builtin_registry();
        let d = r.get_by_name("exp").unwrap();
        let tol = q(1, 1_000_000);
        let e = &enclose_at(d, &qi(1), &tol).unwrap()[0];
        // 2.71828182845 < e < 2.71828182846
        assert!(e.lo() <= &q(271_828_182_845, 100_000_000_000));
        assert!(e.hi() >= &q(271_828_182_846, 100_000_000_000));
        assert!(e.width() <= tol);
    }

    #[test]
    fn steps_validate_and_tamper_fails() {
        let r = builtin_registry();
        let d = r.get_by_name("sin").unwrap();
        let mut steps = solve_enclosure(d, &RatInterval::new(q(-1, 2), q(3, 2)).unwrap(), &q(1, 10_000)).unwrap();
        verify_steps(d, &steps).unwrap();
        let last = steps.len() - 1;
        steps[last].rem[0] = RatInterval::zero();
        assert!(verify_steps(d, &steps).is_err());
    }

    #[test]
    fn backward_steps_cover_negative_times() {
        let r = builtin_registry();
        let d = r.get_by_name("exp").unwrap();
        let e = &enclose_at(d, &qi(-1), &q(1, 100_000)).unwrap()[0];
        // 0.3678794411 < 1/e < 0.3678794412
        assert!(e.lo() <= &q(3_678_794_411, 10_000_000_000));
        assert!(e.hi() >= &q(3_678_794_412, 10_000_000_000));
    }
}
