//! Property tests over randomly generated formulas and intervals.

mod common;

use common::{rng, rq, Gen, Rng8};
use dax::engine::{eval_bounded_folr, Budget, Verdict};
use dax::enclosure::build_enclosure;
use dax::formula::{normalize, parse_formula, print_formula, Formula, Term};
use dax::interval::{iadd, imul, RatInterval};
use dax::perturbation::{build_admissible_approx, perturb_exists, perturb_forall};
use dax::rational::{q, qi, Q};
use dax::registry::builtin_registry;
use dax_oracle::{oracle_eval_formula, OracleConfig, Truth};
use proptest::prelude::*;
use rand::Rng;
use std::collections::BTreeMap;

fn small_q() -> impl Strategy<Value = Q> {
    (-64i64..=64, 1i64..=16).prop_map(|(n, d)| q(n, d))
}

fn small_interval() -> impl Strategy<Value = RatInterval> {
    (small_q(), small_q()).prop_map(|(a, b)| RatInterval::spanning(a, b))
}

fn point_in(iv: &RatInterval, t: u32) -> Q {
    iv.lo() + iv.width() * q(t as i64, 16)
}

/// Function-free sentence whose quantifiers are all of kind `forall` (or all
/// existential), over constant ranges.
fn uniform_sentence(r: &mut Rng8, g: &Gen, forall: bool) -> Formula {
    let vars: Vec<String> = ["x", "y"].iter().take(r.gen_range(1..=2)).map(|s| s.to_string()).collect();
    let mut f = g.matrix(r, &vars, false);
    for v in vars.iter().rev() {
        let iv = common::interval(r, -2, 2, 4);
        let (lo, hi) = (Term::Const(iv.lo().clone()), Term::Const(iv.hi().clone()));
        f = if forall { Formula::forall(v, lo, hi, f) } else { Formula::exists(v, lo, hi, f) };
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn print_parse_round_trip(seed in any::<u64>()) {
        let reg = builtin_registry();
        let g = Gen::new(&reg);
        let mut r = rng(seed);
        let nfree = r.gen_range(0..=2);
        let (f, _) = g.formula(&mut r, nfree, 2);
        let back = parse_formula(&print_formula(&f), &reg).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>()) {
        let reg = builtin_registry();
        let g = Gen::new(&reg);
        let mut r = rng(seed);
        let (f, _) = g.formula(&mut r, 2, 2);
        let n = normalize(&f);
        prop_assert_eq!(normalize(&n), n);
    }

    #[test]
    fn interval_ops_contain_pointwise_results(
        a in small_interval(), b in small_interval(), s in 0u32..=16, t in 0u32..=16
    ) {
        let (x, y) = (point_in(&a, s), point_in(&b, t));
        prop_assert!(iadd(&a, &b).contains(&(&x + &y)));
        prop_assert!(imul(&a, &b).contains(&(&x * &y)));
        prop_assert!(a.sub(&b).contains(&(&x - &y)));
        prop_assert!(a.powi(3).contains(&(&x * &x * &x)));
        let (l, h) = a.split();
        prop_assert!(l.contains(&x) || h.contains(&x));
        prop_assert_eq!(l.hull(&h), a);
    }

    #[test]
    fn perturbations_are_dual(seed in any::<u64>(), fine in any::<bool>()) {
        let reg = builtin_registry();
        let g = Gen::new(&reg);
        let mut r = rng(seed);
        let (phi, dom) = g.formula(&mut r, 2, 2);
        let delta = if fine { q(1, 100) } else { q(1, 10) };
        let goal = normalize(&phi);
        let enc = build_enclosure(&goal, &dom, &qi(1), &reg).unwrap();
        let approx = build_admissible_approx(&goal, &enc, &delta, &reg, &Default::default()).unwrap();
        let lhs = normalize(&Formula::not(perturb_forall(&goal, &approx, &delta).unwrap()));
        let rhs = perturb_exists(&normalize(&Formula::not(phi)), &approx, &delta).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn engine_true_universal_is_not_refuted(seed in any::<u64>()) {
        let reg = builtin_registry();
        let g = Gen::new(&reg);
        let mut r = rng(seed);
        let f = uniform_sentence(&mut r, &g, true);
        let budget = Budget { max_depth: 12, max_boxes: 20_000 };
        let d = eval_bounded_folr(&normalize(&f), &BTreeMap::new(), &budget).unwrap();
        let cfg = OracleConfig::default().with_resolution(q(1, 16));
        if d.verdict == Verdict::True {
            prop_assert_ne!(oracle_eval_formula(&f, &BTreeMap::new(), &cfg), Truth::False);
        }
    }

    #[test]
    fn engine_false_existential_has_no_witness(seed in any::<u64>()) {
        let reg = builtin_registry();
        let g = Gen::new(&reg);
        let mut r = rng(seed);
        let f = uniform_sentence(&mut r, &g, false);
        let budget = Budget { max_depth: 12, max_boxes: 20_000 };
        let d = eval_bounded_folr(&normalize(&f), &BTreeMap::new(), &budget).unwrap();
        let cfg = OracleConfig::default().with_resolution(q(1, 16));
        if d.verdict == Verdict::False {
            prop_assert_ne!(oracle_eval_formula(&f, &BTreeMap::new(), &cfg), Truth::True);
        }
    }

    #[test]
    fn engine_agrees_with_exact_point_evaluation(seed in any::<u64>()) {
        let reg = builtin_registry();
        let g = Gen::new(&reg);
        let mut r = rng(seed);
        let vars = vec!["a".to_string(), "b".to_string()];
        let f = g.matrix(&mut r, &vars, false);
        let env: BTreeMap<String, Q> = vars.iter().map(|v| (v.clone(), rq(&mut r, -2, 2, 8))).collect();
        let d = eval_bounded_folr(&normalize(&f), &env, &Budget::default()).unwrap();
        let expect = oracle_eval_formula(&f, &env, &OracleConfig::default());
        let got = match d.verdict {
            Verdict::True => Truth::True,
            Verdict::False => Truth::False,
            Verdict::Unknown(_) => Truth::Ambiguous,
        };
        prop_assert_eq!(got, expect);
    }
}
