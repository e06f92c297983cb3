//! Self-contained JSON certificates for δ-decisions and their validation.

use crate::decide::{run_pipeline, DecideOptions, PipelineRun};
use crate::enclosure::{check_enclosure, Enclosure, Obligation};
use crate::engine::{eval_bounded_folr, Budget, SearchStats, Verdict};
use crate::formula::{function_terms, normalize, parse_formula, parse_term, print_formula, print_term, Formula, Term};
use crate::interval::{icontains, RatInterval};
use crate::ode::{check_approx, CertifiedApprox};
use crate::perturbation::{perturb_exists, perturb_forall, ApproxEntry, ApproxPolicy, Approximation};
use crate::poly::UniPoly;
use crate::rational::{fmt_q, Q};
use crate::registry::FuncRegistry;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ProvablyTrue,
    ProvablyFalse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnclosureEntry {
    pub term: String,
    pub interval: RatInterval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnclosureRecord {
    #[serde(with = "crate::rational::serde_q")]
    pub eps: Q,
    pub entries: Vec<EnclosureEntry>,
    pub obligations: Vec<Obligation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxRecord {
    pub term: String,
    pub window: RatInterval,
    pub approx: CertifiedApprox,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproximationRecord {
    #[serde(with = "crate::rational::serde_q")]
    pub norm_bound: Q,
    pub entries: Vec<ApproxRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStep {
    pub rule: String,
    pub conclusion: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafRecord {
    pub sentence: String,
    pub verdict: Verdict,
    pub stats: SearchStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub func: String,
    #[serde(with = "crate::rational::serde_qvec")]
    pub coeffs: Vec<Q>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigRecord {
    #[serde(with = "crate::rational::serde_q")]
    pub requested_delta: Q,
    #[serde(with = "crate::rational::serde_q")]
    pub eps: Q,
    pub budget: Budget,
    pub policy: Vec<PolicyEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub goal: String,
    #[serde(with = "crate::rational::serde_q")]
    pub delta: Q,
    pub outcome: Outcome,
    /// `define-fn` sources of the function symbols in the goal.
    pub functions: Vec<String>,
    pub enclosure: EnclosureRecord,
    pub approximation: ApproximationRecord,
    pub rule_trace: Vec<RuleStep>,
    pub leaf_verdict: LeafRecord,
    pub tool_version: String,
    pub config: ConfigRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertificateError {
    #[error("the run proved nothing; no certificate can be issued")]
    IncompleteTrace,
}

pub const RULE_CUT: &str = "cut";
pub const RULE_DELTA_FORALL: &str = "δ^∀";
pub const RULE_DELTA_EXISTS: &str = "δ^∃";
pub const RULE_DUALITY: &str = "duality";
pub const RULE_LEAF: &str = "qear-leaf";

pub fn emit_certificate(run: &PipelineRun, reg: &FuncRegistry) -> Result<Certificate, CertificateError> {
    let goal = print_formula(&run.goal);
    let (outcome, rule_trace, leaf) = if run.forall_decision.verdict == Verdict::True {
        let a = print_formula(&run.forall);
        let trace = vec![
            step(RULE_CUT, &goal),
            step(RULE_DELTA_FORALL, &format!("(=> {a} {goal})")),
            step(RULE_LEAF, &a),
        ];
        (Outcome::ProvablyTrue, trace, LeafRecord { sentence: a, verdict: Verdict::True, stats: run.forall_decision.stats })
    } else {
        match run.exists_decision {
            Some(d) if d.verdict == Verdict::False => {
                let e = print_formula(&run.exists);
                let dual = print_formula(&normalize(&Formula::not(run.exists.clone())));
                let trace = vec![
                    step(RULE_CUT, &print_formula(&normalize(&Formula::not(run.goal.clone())))),
                    step(RULE_DELTA_EXISTS, &format!("(=> {goal} {e})")),
                    step(RULE_DUALITY, &dual),
                    step(RULE_LEAF, &format!("(not {e})")),
                ];
                (Outcome::ProvablyFalse, trace, LeafRecord { sentence: e, verdict: Verdict::False, stats: d.stats })
            }
            _ => return Err(CertificateError::IncompleteTrace),
        }
    };
    let mut names: Vec<String> = function_terms(&run.goal)
        .iter()
        .filter_map(|t| match t {
            Term::App(f, _) => Some(f.name().to_string()),
            _ => None,
        })
        .collect();
    names.sort();
    names.dedup();
    let functions = names.iter().map(|n| reg.get_by_name(n).expect("registered").to_source()).collect();
    Ok(Certificate {
        goal,
        delta: run.delta.clone(),
        outcome,
        functions,
        enclosure: EnclosureRecord {
            eps: run.enclosure.eps.clone(),
            entries: run
                .enclosure
                .entries()
                .map(|(t, i)| EnclosureEntry { term: print_term(t), interval: i.clone() })
                .collect(),
            obligations: run.obligations.clone(),
        },
        approximation: ApproximationRecord {
            norm_bound: run.approx.norm_bound.clone(),
            entries: run
                .approx
                .entries
                .iter()
                .map(|e| ApproxRecord { term: print_term(&e.term), window: e.window.clone(), approx: e.approx.clone() })
                .collect(),
        },
        rule_trace,
        leaf_verdict: leaf,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: ConfigRecord {
            requested_delta: run.requested_delta.clone(),
            eps: run.options.eps.clone(),
            budget: run.options.budget,
            policy: run
                .options
                .policy
                .iter()
                .map(|(f, p)| PolicyEntry { func: f.clone(), coeffs: p.coeffs().to_vec() })
                .collect(),
        },
    })
}

fn step(rule: &str, conclusion: &str) -> RuleStep {
    RuleStep { rule: rule.to_string(), conclusion: conclusion.to_string() }
}

pub fn to_json(c: &Certificate) -> String {
    serde_json::to_string_pretty(c).expect("serializable")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Validation {
    pub ok: bool,
    pub failures: Vec<String>,
}

/// Validates a certificate given as JSON text.
pub fn validate_certificate_json(text: &str) -> Validation {
    match serde_json::from_str::<Certificate>(text) {
        Ok(c) => validate_certificate(&c),
        Err(e) => Validation { ok: false, failures: vec![format!("malformed certificate: {e}")] },
    }
}

/// Re-checks every obligation, replays the leaf search, and compares the
/// whole document with a fresh run of the pipeline on the recorded inputs.
pub fn validate_certificate(c: &Certificate) -> Validation {
    let mut failures = Vec::new();
    if let Err(e) = check_all(c, &mut failures) {
        failures.push(e);
    }
    Validation { ok: failures.is_empty(), failures }
}

fn check_all(c: &Certificate, fail: &mut Vec<String>) -> Result<(), String> {
    let mut reg = FuncRegistry::empty();
    for src in &c.functions {
        reg.load_source(src).map_err(|e| format!("function definition: {e}"))?;
    }
    let goal = parse_formula(&c.goal, &reg).map_err(|e| format!("goal: {e}"))?;
    if normalize(&goal) != goal {
        fail.push("goal is not in normal form".into());
    }
    let cap = crate::decide::delta_cap();
    if c.delta != c.config.requested_delta.clone().min(cap) {
        fail.push(format!("delta {} is not min(requested, 1/4)", fmt_q(&c.delta)));
    }

    // Enclosure: rebuild the map, then re-derive every obligation.
    let mut enc = Enclosure::new(c.enclosure.eps.clone());
    for e in &c.enclosure.entries {
        let t = parse_term(&e.term, &reg).map_err(|err| format!("enclosure term `{}`: {err}", e.term))?;
        enc.insert(t, e.interval.clone());
    }
    let mut subterms = Vec::new();
    goal.visit_terms(&mut |t| t.subterms_into(&mut subterms));
    goal.visit_binders(&mut |v| subterms.push(Term::var(v)));
    subterms.sort();
    subterms.dedup();
    let keys: Vec<Term> = enc.entries().map(|(t, _)| t.clone()).collect();
    if keys != subterms {
        fail.push("enclosure is not keyed by exactly the subterms of the goal".into());
    }
    let obs = check_enclosure(&goal, &enc, &reg);
    for o in obs.iter().filter(|o| !o.holds) {
        fail.push(format!("enclosure obligation {:?} fails for `{}`", o.kind, o.term));
    }
    if obs != c.enclosure.obligations {
        fail.push("recorded enclosure obligations differ from the re-derived ones".into());
    }

    // Approximation: one certified entry per function term, on its window.
    let fts = function_terms(&goal);
    if fts.len() != c.approximation.entries.len() {
        fail.push("approximation entries do not match the function terms".into());
    }
    let mut entries = Vec::new();
    for (t, r) in fts.iter().zip(&c.approximation.entries) {
        if print_term(t) != r.term {
            fail.push(format!("approximation entry `{}` out of place", r.term));
            continue;
        }
        let Term::App(fid, e) = t else { unreachable!() };
        if enc.get(e) != Some(&r.window) {
            fail.push(format!("window for `{}` differs from the enclosure", r.term));
        }
        if !icontains(&r.approx.domain, &r.window) {
            fail.push(format!("approximant for `{}` does not cover its window", r.term));
        }
        if let Err(e) = check_approx(reg.get(fid), &r.approx) {
            fail.push(format!("approximation error obligation for `{}`: {e}", r.term));
        }
        if r.approx.error_bound > c.delta {
            fail.push(format!("approximant for `{}` is not admissible", r.term));
        }
        entries.push(ApproxEntry { term: t.clone(), window: r.window.clone(), approx: r.approx.clone() });
    }
    let approx = Approximation { entries, norm_bound: c.approximation.norm_bound.clone() };
    if crate::perturbation::approx_norm(&approx) != approx.norm_bound {
        fail.push(format!("norm bound {} is not the largest error bound", fmt_q(&approx.norm_bound)));
    }

    // Rule trace and leaf replay.
    let (leaf_formula, expect, rules): (Formula, Verdict, &[&str]) = match c.outcome {
        Outcome::ProvablyTrue => (
            perturb_forall(&goal, &approx, &c.delta).map_err(|e| e.to_string())?,
            Verdict::True,
            &[RULE_CUT, RULE_DELTA_FORALL, RULE_LEAF],
        ),
        Outcome::ProvablyFalse => (
            perturb_exists(&goal, &approx, &c.delta).map_err(|e| e.to_string())?,
            Verdict::False,
            &[RULE_CUT, RULE_DELTA_EXISTS, RULE_DUALITY, RULE_LEAF],
        ),
    };
    let names: Vec<&str> = c.rule_trace.iter().map(|s| s.rule.as_str()).collect();
    if names != rules {
        fail.push(format!("rule trace {names:?} does not match the derivation shape"));
    }
    if print_formula(&leaf_formula) != c.leaf_verdict.sentence {
        fail.push("leaf sentence is not the perturbation of the goal".into());
    }
    if c.leaf_verdict.verdict != expect {
        fail.push("leaf verdict does not support the outcome".into());
    }
    let replay = eval_bounded_folr(&leaf_formula, &BTreeMap::new(), &c.config.budget).map_err(|e| e.to_string())?;
    if replay.verdict != expect || replay.stats != c.leaf_verdict.stats {
        fail.push(format!(
            "leaf replay gave {} with {} boxes, certificate records {} with {} boxes",
            replay.verdict.label(),
            replay.stats.boxes,
            c.leaf_verdict.verdict.label(),
            c.leaf_verdict.stats.boxes
        ));
    }
    if !fail.is_empty() {
        return Ok(());
    }

    // Deterministic recomputation must reproduce the document exactly.
    let policy: ApproxPolicy =
        c.config.policy.iter().map(|p| (p.func.clone(), UniPoly::new(p.coeffs.clone()))).collect();
    let opts = DecideOptions { budget: c.config.budget, eps: c.config.eps.clone(), policy };
    let run = run_pipeline(&goal, &c.config.requested_delta, &opts, &reg, false).map_err(|e| e.to_string())?;
    let fresh = emit_certificate(&run, &reg).map_err(|e| e.to_string())?;
    let a = serde_json::to_value(&fresh).expect("serializable");
    let b = serde_json::to_value(c).expect("serializable");
    if let Some(path) = first_difference(&a, &b, "") {
        fail.push(format!("field {path} differs from the recomputed certificate"));
    }
    Ok(())
}

fn first_difference(a: &serde_json::Value, b: &serde_json::Value, path: &str) -> Option<String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = format!("{path}.{k}");
                match y.get(k) {
                    Some(vb) => {
                        if let Some(d) = first_difference(va, vb, &p) {
                            return Some(d);
                        }
                    }
                    None => return Some(p),
                }
            }
            y.keys().find(|k| !x.contains_key(*k)).map(|k| format!("{path}.{k}"))
        }
        (Value::Array(x), Value::Array(y)) => {
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                if let Some(d) = first_difference(va, vb, &format!("{path}[{i}]")) {
                    return Some(d);
                }
            }
            (x.len() != y.len()).then(|| format!("{path}.length"))
        }
        _ => (a != b).then(|| if path.is_empty() { "<root>".to_string() } else { path.to_string() }),
    }
}

/// Sequent-style outline of the derivation behind a certificate.
pub fn render_proof_sketch(c: &Certificate) -> String {
    let mut out = Vec::new();
    out.push(format!("goal φ: {}", c.goal));
    out.push(format!("δ = {}", fmt_q(&c.delta)));
    let held = c.enclosure.obligations.iter().filter(|o| o.holds).count();
    out.push(format!(
        "enclosure (ε = {}): {held}/{} closure conditions certified",
        fmt_q(&c.enclosure.eps),
        c.enclosure.obligations.len()
    ));
    for e in &c.approximation.entries {
        out.push(format!(
            "premise: ∀s ∈ {} |F_{{{}}}(s) − {}(s)| < {} ({} piece(s))",
            e.window,
            e.term,
            e.approx.func,
            fmt_q(&e.approx.error_bound),
            e.approx.pieces.len()
        ));
    }
    out.push(format!(
        "leaf: {} decided {} ({} boxes, depth {})",
        c.leaf_verdict.sentence,
        c.leaf_verdict.verdict.label(),
        c.leaf_verdict.stats.boxes,
        c.leaf_verdict.stats.max_depth
    ));
    out.push(match c.outcome {
        Outcome::ProvablyTrue => "⊢ A^∀(φ,δ) → φ by δ^∀; ⊢ A^∀(φ,δ) by \\R; ⊢ φ by cut".to_string(),
        Outcome::ProvablyFalse => {
            "⊢ φ → A^∃(φ,δ) by δ^∃; ⊢ ¬A^∃(φ,δ) ↔ A^∀(¬φ,δ) by duality; ⊢ ¬A^∃(φ,δ) by \\R; ⊢ ¬φ by cut".to_string()
        }
    });
    out.join("\n")
}
