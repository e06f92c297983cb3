//! The δ-decision pipeline: enclosure, admissible approximation, the two
//! perturbations, and the engine run on each.

use crate::certificate::{emit_certificate, Certificate};
use crate::enclosure::{build_enclosure, check_enclosure, default_eps, Domain, Enclosure, EnclosureError, Obligation};
use crate::engine::{eval_bounded_folr, Budget, Decision, EngineError, Verdict};
use crate::formula::{normalize, Formula, Term};
use crate::perturbation::{
    build_admissible_approx, perturb_exists, perturb_forall, ApproxPolicy, Approximation, PerturbError,
};
use crate::rational::{fmt_q, q, Q};
use crate::registry::FuncRegistry;
use num_traits::Signed;
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecideOptions {
    pub budget: Budget,
    /// Enclosure radius.
    pub eps: Q,
    pub policy: ApproxPolicy,
}

impl Default for DecideOptions {
    fn default() -> Self {
        DecideOptions { budget: Budget::default(), eps: default_eps(), policy: ApproxPolicy::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecideError {
    #[error("not a sentence: free variables {0:?}")]
    NotSentence(Vec<String>),
    #[error("delta must be positive, got {}", fmt_q(.0))]
    InvalidDelta(Q),
    #[error(transparent)]
    Enclosure(#[from] EnclosureError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl DecideError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, DecideError::Enclosure(EnclosureError::Divergence(_)) | DecideError::Perturb(PerturbError::Divergence(_)))
    }
}

/// Everything computed by one pipeline run.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    /// Normalized input sentence.
    pub goal: Formula,
    pub requested_delta: Q,
    /// `min(requested_delta, 1/4)`.
    pub delta: Q,
    pub options: DecideOptions,
    pub enclosure: Enclosure,
    pub obligations: Vec<Obligation>,
    pub approx: Approximation,
    pub forall: Formula,
    pub forall_decision: Decision,
    pub exists: Formula,
    /// Absent when the universal perturbation was already decided true.
    pub exists_decision: Option<Decision>,
}

impl PipelineRun {
    pub fn total_boxes(&self) -> u64 {
        self.forall_decision.stats.boxes + self.exists_decision.map_or(0, |d| d.stats.boxes)
    }
}

#[derive(Clone, Debug)]
pub enum DeltaVerdict {
    ProvablyTrue(Box<Certificate>),
    ProvablyFalse(Box<Certificate>),
    Inconclusive { forall: Verdict, exists: Verdict },
}

impl DeltaVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            DeltaVerdict::ProvablyTrue(_) => "provably-true",
            DeltaVerdict::ProvablyFalse(_) => "provably-false",
            DeltaVerdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

pub fn delta_cap() -> Q {
    q(1, 4)
}

/// Runs the pipeline.  With `both` the existential perturbation is decided
/// even when the universal one is already true.
pub fn run_pipeline(
    phi: &Formula,
    delta: &Q,
    opts: &DecideOptions,
    reg: &FuncRegistry,
    both: bool,
) -> Result<PipelineRun, DecideError> {
    if !delta.is_positive() {
        return Err(DecideError::InvalidDelta(delta.clone()));
    }
    let goal = normalize(phi);
    let fv = goal.free_vars();
    if !fv.is_empty() {
        return Err(DecideError::NotSentence(fv.into_iter().collect()));
    }
    let d = delta.min(&delta_cap()).clone();
    let enclosure = build_enclosure(&goal, &Domain::new(), &opts.eps, reg)?;
    let obligations = check_enclosure(&goal, &enclosure, reg);
    let approx = build_admissible_approx(&goal, &enclosure, &d, reg, &opts.policy)?;
    let forall = perturb_forall(&goal, &approx, &d)?;
    let exists = perturb_exists(&goal, &approx, &d)?;
    let env = BTreeMap::new();
    let forall_decision = eval_bounded_folr(&forall, &env, &opts.budget)?;
    let exists_decision = if both || forall_decision.verdict != Verdict::True {
        Some(eval_bounded_folr(&exists, &env, &opts.budget)?)
    } else {
        None
    };
    Ok(PipelineRun {
        goal,
        requested_delta: delta.clone(),
        delta: d,
        options: opts.clone(),
        enclosure,
        obligations,
        approx,
        forall,
        forall_decision,
        exists,
        exists_decision,
    })
}

/// δ-decides a sentence.  A true universal perturbation proves the sentence,
/// a false existential one refutes it.
pub fn delta_decide(phi: &Formula, delta: &Q, opts: &DecideOptions, reg: &FuncRegistry) -> Result<DeltaVerdict, DecideError> {
    let run = run_pipeline(phi, delta, opts, reg, false)?;
    Ok(verdict_of(&run, reg))
}

pub fn verdict_of(run: &PipelineRun, reg: &FuncRegistry) -> DeltaVerdict {
    let ev = run.exists_decision.map(|d| d.verdict);
    match (run.forall_decision.verdict, ev) {
        (Verdict::True, _) => DeltaVerdict::ProvablyTrue(Box::new(emit_certificate(run, reg).expect("certified run"))),
        (_, Some(Verdict::False)) => {
            DeltaVerdict::ProvablyFalse(Box::new(emit_certificate(run, reg).expect("certified run")))
        }
        (fa, ex) => DeltaVerdict::Inconclusive { forall: fa, exists: ex.expect("decided when not proved") },
    }
}

/// Universal closure of `phi` over a box of values for its free variables.
pub fn close_over(phi: &Formula, region: &Domain) -> Formula {
    let fv: Vec<String> = phi.free_vars().into_iter().collect();
    fv.iter().rev().fold(phi.clone(), |body, v| {
        let iv = &region[v];
        Formula::forall(v, Term::Const(iv.lo().clone()), Term::Const(iv.hi().clone()), body)
    })
}

/// `True` when every point of the region satisfies `phi`, `False` when some
/// point provably violates it.
pub fn check_region(
    phi: &Formula,
    region: &Domain,
    delta: &Q,
    opts: &DecideOptions,
    reg: &FuncRegistry,
) -> Result<Verdict, DecideError> {
    if let Some(v) = phi.free_vars().into_iter().find(|v| !region.contains_key(v)) {
        return Err(DecideError::Enclosure(EnclosureError::MissingDomain(v)));
    }
    Ok(match delta_decide(&close_over(phi, region), delta, opts, reg)? {
        DeltaVerdict::ProvablyTrue(_) => Verdict::True,
        DeltaVerdict::ProvablyFalse(_) => Verdict::False,
        DeltaVerdict::Inconclusive { forall, .. } => match forall {
            Verdict::Unknown(r) => Verdict::Unknown(r),
            _ => Verdict::Unknown(crate::engine::UnknownReason::BudgetExhausted),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanRow {
    pub delta: Q,
    pub forall: Verdict,
    pub exists: Verdict,
    pub boxes: u64,
    pub wall_ms: u128,
}

/// Both perturbation verdicts at each δ, with fresh approximants per level.
pub fn robustness_scan(
    phi: &Formula,
    deltas: &[Q],
    opts: &DecideOptions,
    reg: &FuncRegistry,
) -> Result<Vec<ScanRow>, DecideError> {
    deltas
        .iter()
        .map(|d| {
            let t0 = Instant::now();
            let run = run_pipeline(phi, d, opts, reg, true)?;
            Ok(ScanRow {
                delta: d.clone(),
                forall: run.forall_decision.verdict,
                exists: run.exists_decision.expect("both decided").verdict,
                boxes: run.total_boxes(),
                wall_ms: t0.elapsed().as_millis(),
            })
        })
        .collect()
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("delta,forall_verdict,exists_verdict,boxes_explored,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_q(&r.delta),
            r.forall.label(),
            r.exists.label(),
            r.boxes,
            r.wall_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::interval::RatInterval;
    use crate::rational::qi;
    use crate::registry::builtin_registry;

    fn decide(src: &str, delta: Q) -> DeltaVerdict {
        let reg = builtin_registry();
        let f = parse_formula(src, &reg).unwrap();
        delta_decide(&f, &delta, &DecideOptions::default(), &reg).unwrap()
    }

    #[test]
    fn exp_margin_true_and_false() {
        assert!(matches!(decide("(forall (x 0 1) (> (- 3 (exp x)) 0))", q(1, 20)), DeltaVerdict::ProvablyTrue(_)));
        assert!(matches!(decide("(forall (x 0 1) (> (- (exp x) 3) 0))", q(1, 20)), DeltaVerdict::ProvablyFalse(_)));
    }

    #[test]
    fn non_robust_sentence() {
        let src = "(forall (x 0 1) (or (> (- (exp x) 1) 0) (and (>= (- 1 (exp x)) 0) (>= (- (exp x) 1) 0))))";
        for d in [q(1, 4), q(1, 10), q(1, 100)] {
            match decide(src, d) {
                DeltaVerdict::Inconclusive { forall, exists } => {
                    assert_eq!(forall, Verdict::False);
                    assert_eq!(exists, Verdict::True);
                }
                other => panic!("unexpected {}", other.label()),
            }
        }
    }

    #[test]
    fn region_wrapping() {
        let reg = builtin_registry();
        let f = parse_formula("(forall (x 0 1) (> (- c (exp x)) 0))", &reg).unwrap();
        let mut region = Domain::new();
        region.insert("c".into(), RatInterval::new(qi(3), qi(4)).unwrap());
        assert_eq!(check_region(&f, &region, &q(1, 20), &DecideOptions::default(), &reg).unwrap(), Verdict::True);
    }

    #[test]
    fn scan_rows() {
        let reg = builtin_registry();
        let f = parse_formula("(exists (x 0 1) (>= (- -1 x) 0))", &reg).unwrap();
        let rows = robustness_scan(&f, &[q(1, 4), q(1, 10)], &DecideOptions::default(), &reg).unwrap();
        assert!(rows.iter().all(|r| r.exists == Verdict::False));
        assert!(scan_csv(&rows).starts_with("delta,forall_verdict,exists_verdict,boxes_explored,wall_ms\n1/4,"));
    }
}
