//! Mechanized desk-scale checks of the metatheory: safety, the
//! global-state simulation, the dynamic-state simulation, type
//! preservation of the translation, and the divergence witnesses.
//!
//! Matching is syntactic alpha-equivalence throughout, and every bounded
//! search reports a hit of its bound as a failure, never as a silent pass.

use std::collections::BTreeMap;

use crate::dynstate::{
    canonical_dyn, dyn_step, DynComputation, DynStepResult, DynValue, ParamSignature,
};
use crate::eval::{statesim, step, StepResult};
use crate::gen::{self, GenConfig};
use crate::infer::{self, skolemize, RawInference, TypedProgram};
use crate::syntax::{
    canonical_comp, subst_comp, Computation, Mode, OpName, Program, TypeExpr, Value, Var,
};
use crate::types::{Effects, Scheme, TypeResult};
use crate::{fixtures, pretty, translate};

/// Which theorem a verdict speaks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    Safety,
    GlobalStateSim,
    DynSim,
    TypePreservation,
    Divergence,
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Theorem::Safety => "safety",
            Theorem::GlobalStateSim => "global-state-sim",
            Theorem::DynSim => "dyn-sim",
            Theorem::TypePreservation => "type-preservation",
            Theorem::Divergence => "divergence",
        };
        f.write_str(s)
    }
}

/// A replayable counterexample: the seed and step index identify it, the
/// rest is for humans.
#[derive(Debug, Clone)]
pub struct Witness {
    pub seed: u64,
    pub step: usize,
    pub detail: String,
    pub term: String,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub theorem: Theorem,
    pub passed: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn pass(theorem: Theorem) -> Self {
        Verdict {
            theorem,
            passed: true,
            witness: None,
        }
    }

    fn fail(theorem: Theorem, seed: u64, step: usize, detail: String, term: String) -> Self {
        Verdict {
            theorem,
            passed: false,
            witness: Some(Witness {
                seed,
                step,
                detail,
                term,
            }),
        }
    }
}

/// Default bound for each per-step forward search.
pub const SIM_SEARCH_BOUND: usize = 200;

// ----- safety -----

/// Checks that a stepped computation still derives the original type and
/// an effect annotation included in the original.
fn preserves(program_mode: Mode, sig: &Option<crate::syntax::GlobalSignature>, c: &Computation, old: &TypedProgram) -> Result<(), String> {
    let program = Program {
        mode: program_mode,
        signature: sig.clone(),
        body: c.clone(),
    };
    let raw = infer::infer_program_raw(&program).map_err(|e| format!("re-check failed: {e}"))?;
    check_subsumes_and_included(raw, &old.scheme, &old.effects)
}

/// Within the re-check's substitution: the new type must re-derive the old
/// scheme (skolemized), and the new annotation must be included in the old.
fn check_subsumes_and_included(
    mut raw: RawInference,
    old_scheme: &Scheme,
    old_effects: &Effects,
) -> Result<(), String> {
    let sk = skolemize(old_scheme);
    raw.ctx
        .subst
        .unify(&raw.ty, &sk)
        .map_err(|e| format!("type not preserved: {e}"))?;
    effects_included(&mut raw, old_effects)
}

fn effects_included(raw: &mut RawInference, old_effects: &Effects) -> Result<(), String> {
    match (&raw.ctx.subst.zonk_effects(&raw.effects), old_effects) {
        (Effects::Untracked, Effects::Untracked) => Ok(()),
        (Effects::Coarse(new), Effects::Coarse(old)) => {
            for op in &new.ops {
                if !old.ops.contains(op) {
                    return Err(format!("operation `{op}` escaped the original annotation"));
                }
            }
            Ok(())
        }
        (Effects::Local(new), Effects::Local(old)) => {
            for (op, ot) in &new.entries {
                match old.entries.get(op) {
                    None => {
                        return Err(format!("operation `{op}` escaped the original annotation"))
                    }
                    Some(old_ot) => {
                        raw.ctx
                            .subst
                            .unify(&ot.param, &old_ot.param)
                            .map_err(|e| format!("annotation entry for `{op}` changed: {e}"))?;
                        raw.ctx
                            .subst
                            .unify(&ot.result, &old_ot.result)
                            .map_err(|e| format!("annotation entry for `{op}` changed: {e}"))?;
                    }
                }
            }
            Ok(())
        }
        (new, old) => Err(format!("annotation shape changed: {new:?} vs {old:?}")),
    }
}

/// Runs a well-typed program to completion, asserting the three Safety
/// clauses at every step: no stuck states, type-and-annotation
/// preservation, and unhandled operations covered by the annotation.
pub fn check_safety(program: &Program, fuel: u64, seed: u64) -> Verdict {
    let typed = match infer::check_program(program) {
        Ok(t) => t,
        Err(e) => {
            return Verdict::fail(
                Theorem::Safety,
                seed,
                0,
                format!("program failed to type-check: {e}"),
                pretty::pretty_comp(&program.body),
            )
        }
    };
    let mut cur = program.body.clone();
    for i in 0..fuel {
        match step(&cur) {
            StepResult::Stepped(next) => {
                if let Err(msg) = preserves(program.mode, &program.signature, &next, &typed) {
                    return Verdict::fail(
                        Theorem::Safety,
                        seed,
                        i as usize + 1,
                        msg,
                        pretty::pretty_comp(&next),
                    );
                }
                cur = next;
            }
            StepResult::Terminal(_) => return Verdict::pass(Theorem::Safety),
            StepResult::TerminalOp { op, arg, var, cont } => {
                if let Err(msg) =
                    terminal_op_covered(program, &typed, &op, &arg, &var, &cont)
                {
                    return Verdict::fail(
                        Theorem::Safety,
                        seed,
                        i as usize,
                        msg,
                        pretty::pretty_comp(&cur),
                    );
                }
                return Verdict::pass(Theorem::Safety);
            }
            StepResult::Stuck(msg) => {
                return Verdict::fail(
                    Theorem::Safety,
                    seed,
                    i as usize,
                    format!("stuck: {msg}"),
                    pretty::pretty_comp(&cur),
                )
            }
        }
    }
    // Fuel ran out with no violation observed.
    Verdict::pass(Theorem::Safety)
}

/// Safety clause (iii): the surfaced operation appears in the annotation
/// at the recorded type, and the continuation re-checks against the
/// original type under `y : B_op`.
fn terminal_op_covered(
    program: &Program,
    typed: &TypedProgram,
    op: &OpName,
    arg: &Value,
    var: &Var,
    cont: &Computation,
) -> Result<(), String> {
    let (param_ty, result_ty) = match (&typed.effects, program.mode) {
        (Effects::Local(row), _) => match row.entries.get(op) {
            None => return Err(format!("unhandled `{op}` is not in the annotation")),
            Some(ot) => (ot.param.clone(), ot.result.clone()),
        },
        (Effects::Coarse(row), Mode::Coarse) => {
            if !row.ops.contains(op) {
                return Err(format!("unhandled `{op}` is not in the annotation"));
            }
            global_entry(program, op)?
        }
        (Effects::Untracked, Mode::None) => global_entry(program, op)?,
        (eff, mode) => {
            return Err(format!(
                "unexpected annotation {eff:?} for mode {mode}"
            ))
        }
    };
    // ⊢ arg : A_op, and y : B_op ⊢ cont at the program type with an
    // included annotation. The annotation's free type variables are rigid
    // and shared with the scheme, so they line up by name.
    let mut ctx = infer::InferCtx::new(program.mode, program.signature.clone());
    let mut env = infer::TypeEnv::new();
    let arg_ty = ctx
        .infer_value(&env, arg)
        .map_err(|e| format!("argument re-check failed: {e}"))?;
    ctx.subst
        .unify(&arg_ty, &param_ty)
        .map_err(|e| format!("argument type differs from the annotation entry: {e}"))?;
    env.bind_mono(var.clone(), result_ty);
    let (cont_ty, cont_eff) = ctx
        .infer_comp(&env, cont)
        .map_err(|e| format!("continuation re-check failed: {e}"))?;
    let raw = RawInference {
        ctx,
        ty: cont_ty,
        effects: cont_eff,
    };
    check_subsumes_and_included(raw, &typed.scheme, &typed.effects)
}

fn global_entry(program: &Program, op: &OpName) -> Result<(crate::types::VType, crate::types::VType), String> {
    let sig = program
        .signature
        .as_ref()
        .ok_or_else(|| "missing global signature".to_string())?;
    let (a, b) = sig
        .get(op)
        .ok_or_else(|| format!("`{op}` not in the global signature"))?;
    let mut subst = crate::types::Subst::new();
    Ok((
        subst.type_from_expr(a, crate::types::EffectShape::Untracked),
        subst.type_from_expr(b, crate::types::EffectShape::Untracked),
    ))
}

// ----- global-state simulation -----

/// One step of the standard global-state semantics over (computation,
/// store) pairs, for programs using only `get`/`set`.
pub enum OracleStep {
    Next(Computation, Value),
    Done(Value),
    Blocked(String),
}

pub fn global_state_oracle_step(c: &Computation, s: &Value) -> OracleStep {
    match c {
        Computation::Return(v) => OracleStep::Done(v.clone()),
        Computation::OpCall(op, arg, y, cont) => match op.as_str() {
            "get" => {
                debug_assert_eq!(*arg, Value::Unit);
                OracleStep::Next(subst_comp(cont, s, y), s.clone())
            }
            "set" => OracleStep::Next(subst_comp(cont, &Value::Unit, y), arg.clone()),
            other => OracleStep::Blocked(format!("operation `{other}` is not get/set")),
        },
        Computation::Do(x, c1, c2) => match &**c1 {
            Computation::Return(v) => {
                OracleStep::Next(subst_comp(c2, v, x), s.clone())
            }
            _ => match global_state_oracle_step(c1, s) {
                OracleStep::Next(c1b, s2) => OracleStep::Next(
                    Computation::Do(x.clone(), Box::new(c1b), Box::new((**c2).clone())),
                    s2,
                ),
                OracleStep::Done(_) => unreachable!(),
                OracleStep::Blocked(msg) => OracleStep::Blocked(msg),
            },
        },
        Computation::If(Value::True, c1, _) => OracleStep::Next((**c1).clone(), s.clone()),
        Computation::If(Value::False, _, c2) => OracleStep::Next((**c2).clone(), s.clone()),
        Computation::App(Value::Lambda(x, body), v) => {
            OracleStep::Next(subst_comp(body, v, x), s.clone())
        }
        Computation::Add(Value::Int(a), Value::Int(b)) => OracleStep::Next(
            Computation::Return(Value::Int(a.wrapping_add(*b))),
            s.clone(),
        ),
        other => OracleStep::Blocked(format!("no oracle rule for {other:?}")),
    }
}

/// Checks that every oracle step `<c>s => <c'>s'` is matched by a
/// non-empty chain of handler steps between the corresponding statesim
/// configurations, syntactically up to alpha.
pub fn check_global_state_sim(c: &Computation, s0: &Value, fuel: u64, seed: u64) -> Verdict {
    let mut oracle_c = c.clone();
    let mut oracle_s = s0.clone();
    let mut handler_side = statesim(&oracle_c, &oracle_s);
    for i in 0..fuel {
        match global_state_oracle_step(&oracle_c, &oracle_s) {
            OracleStep::Blocked(msg) => {
                return Verdict::fail(
                    Theorem::GlobalStateSim,
                    seed,
                    i as usize,
                    format!("oracle blocked: {msg}"),
                    pretty::pretty_comp(&oracle_c),
                )
            }
            OracleStep::Done(v) => {
                // The handler side must reach `return v` as well.
                let mut cur = handler_side;
                for _ in 0..SIM_SEARCH_BOUND {
                    match step(&cur) {
                        StepResult::Stepped(next) => cur = next,
                        StepResult::Terminal(got) => {
                            if crate::syntax::alpha_eq_value(&got, &v) {
                                return Verdict::pass(Theorem::GlobalStateSim);
                            }
                            return Verdict::fail(
                                Theorem::GlobalStateSim,
                                seed,
                                i as usize,
                                format!(
                                    "terminal mismatch: oracle returned {}, handler returned {}",
                                    pretty::pretty_value(&v),
                                    pretty::pretty_value(&got)
                                ),
                                pretty::pretty_comp(&oracle_c),
                            );
                        }
                        other => {
                            return Verdict::fail(
                                Theorem::GlobalStateSim,
                                seed,
                                i as usize,
                                format!("handler side ended unexpectedly: {other:?}"),
                                pretty::pretty_comp(&oracle_c),
                            )
                        }
                    }
                }
                return Verdict::fail(
                    Theorem::GlobalStateSim,
                    seed,
                    i as usize,
                    format!("handler side did not terminate within {SIM_SEARCH_BOUND} steps"),
                    pretty::pretty_comp(&oracle_c),
                );
            }
            OracleStep::Next(c2, s2) => {
                let target = statesim(&c2, &s2);
                let target_key = canonical_comp(&target);
                let mut cur = handler_side.clone();
                let mut found = None;
                for _ in 0..SIM_SEARCH_BOUND {
                    match step(&cur) {
                        StepResult::Stepped(next) => {
                            if canonical_comp(&next) == target_key {
                                found = Some(next);
                                break;
                            }
                            cur = next;
                        }
                        _ => break,
                    }
                }
                match found {
                    Some(next) => {
                        handler_side = next;
                        oracle_c = c2;
                        oracle_s = s2;
                    }
                    None => {
                        return Verdict::fail(
                            Theorem::GlobalStateSim,
                            seed,
                            i as usize,
                            format!(
                                "no handler chain to `{}` within {SIM_SEARCH_BOUND} steps",
                                pretty::pretty_comp(&target)
                            ),
                            pretty::pretty_comp(&oracle_c),
                        )
                    }
                }
            }
        }
    }
    Verdict::pass(Theorem::GlobalStateSim)
}

// ----- dynamic-state simulation -----

/// Checks that every dyn step is matched by a non-empty chain of handler
/// steps between the translations, syntactically up to alpha.
pub fn check_dyn_simulation(c: &DynComputation, fuel: u64, seed: u64) -> Verdict {
    let mut dyn_cur = c.clone();
    let mut handler_side = translate::translate_term(&dyn_cur);
    for i in 0..fuel {
        match dyn_step(&dyn_cur) {
            DynStepResult::Terminal(v) => {
                let want = translate::translate_value(&v);
                let mut cur = handler_side;
                for _ in 0..SIM_SEARCH_BOUND {
                    match step(&cur) {
                        StepResult::Stepped(next) => cur = next,
                        StepResult::Terminal(got) => {
                            if crate::syntax::alpha_eq_value(&got, &want) {
                                return Verdict::pass(Theorem::DynSim);
                            }
                            return Verdict::fail(
                                Theorem::DynSim,
                                seed,
                                i as usize,
                                format!(
                                    "terminal mismatch: dyn returned {}, translation returned {}",
                                    pretty::pretty_value(&want),
                                    pretty::pretty_value(&got)
                                ),
                                crate::pretty::pretty_dyn(c),
                            );
                        }
                        other => {
                            return Verdict::fail(
                                Theorem::DynSim,
                                seed,
                                i as usize,
                                format!("translation ended unexpectedly: {other:?}"),
                                crate::pretty::pretty_dyn(c),
                            )
                        }
                    }
                }
                return Verdict::fail(
                    Theorem::DynSim,
                    seed,
                    i as usize,
                    format!("translation did not terminate within {SIM_SEARCH_BOUND} steps"),
                    crate::pretty::pretty_dyn(c),
                );
            }
            DynStepResult::UnboundParameter(p) => {
                // The dyn side is stuck on an unbound parameter; the
                // translation surfaces the corresponding unhandled
                // operation. There are no further steps to match.
                let mut cur = handler_side;
                for _ in 0..SIM_SEARCH_BOUND {
                    match step(&cur) {
                        StepResult::Stepped(next) => cur = next,
                        StepResult::TerminalOp { op, .. } => {
                            let expect_get = translate::get_op(&p);
                            let expect_set = translate::set_op(&p);
                            if op == expect_get || op == expect_set {
                                return Verdict::pass(Theorem::DynSim);
                            }
                            return Verdict::fail(
                                Theorem::DynSim,
                                seed,
                                i as usize,
                                format!("expected unhandled get/set for `${p}`, got `{op}`"),
                                crate::pretty::pretty_dyn(c),
                            );
                        }
                        other => {
                            return Verdict::fail(
                                Theorem::DynSim,
                                seed,
                                i as usize,
                                format!(
                                    "dyn side unbound `${p}` but translation gave {other:?}"
                                ),
                                crate::pretty::pretty_dyn(c),
                            )
                        }
                    }
                }
                return Verdict::fail(
                    Theorem::DynSim,
                    seed,
                    i as usize,
                    "translation did not surface the unbound parameter".to_string(),
                    crate::pretty::pretty_dyn(c),
                );
            }
            DynStepResult::Stuck(msg) => {
                return Verdict::fail(
                    Theorem::DynSim,
                    seed,
                    i as usize,
                    format!("dyn side stuck: {msg}"),
                    crate::pretty::pretty_dyn(c),
                )
            }
            DynStepResult::Stepped(c2) => {
                let target = translate::translate_term(&c2);
                let target_key = canonical_comp(&target);
                let mut cur = handler_side.clone();
                let mut found = None;
                for _ in 0..SIM_SEARCH_BOUND {
                    match step(&cur) {
                        StepResult::Stepped(next) => {
                            if canonical_comp(&next) == target_key {
                                found = Some(next);
                                break;
                            }
                            cur = next;
                        }
                        _ => break,
                    }
                }
                match found {
                    Some(next) => {
                        handler_side = next;
                        dyn_cur = c2;
                    }
                    None => {
                        return Verdict::fail(
                            Theorem::DynSim,
                            seed,
                            i as usize,
                            format!("no handler chain within {SIM_SEARCH_BOUND} steps"),
                            crate::pretty::pretty_dyn(&dyn_cur),
                        )
                    }
                }
            }
        }
    }
    Verdict::pass(Theorem::DynSim)
}

// ----- type preservation of the translation -----

/// Checks both halves of the Type Preservation theorem for one term: the
/// annotated translation types at the translated type with annotation
/// included in the translated signature, and the coarse translation types
/// at the coarse-translated type.
pub fn check_type_preservation(
    params: &ParamSignature,
    c: &DynComputation,
    mode: translate::TranslationMode,
    seed: u64,
) -> Verdict {
    match try_type_preservation(params, c, mode) {
        Ok(()) => Verdict::pass(Theorem::TypePreservation),
        Err(msg) => Verdict::fail(
            Theorem::TypePreservation,
            seed,
            0,
            msg,
            crate::pretty::pretty_dyn(c),
        ),
    }
}

fn try_type_preservation(
    params: &ParamSignature,
    c: &DynComputation,
    mode: translate::TranslationMode,
) -> Result<(), String> {
    let dyn_typed = infer::dyn_check(params, c).map_err(|e| format!("dyn_check failed: {e}"))?;
    let expected = translate::translate_scheme(mode, &dyn_typed.scheme, params)
        .map_err(|e| format!("type translation failed: {e}"))?;
    let translated = translate::translate_term(c);
    match mode {
        translate::TranslationMode::GroundAnnotated => {
            let program = Program {
                mode: Mode::Local,
                signature: None,
                body: translated,
            };
            let mut raw = infer::infer_program_raw(&program)
                .map_err(|e| format!("translated term failed local type-check: {e}"))?;
            let sk = skolemize(&expected);
            raw.ctx
                .subst
                .unify(&raw.ty, &sk)
                .map_err(|e| format!("translated type differs: {e}"))?;
            // The inferred annotation must be included in the translated
            // signature.
            let sig_row = translate::translate_signature(params)
                .map_err(|e| format!("signature translation failed: {e}"))?;
            let old = Effects::Local(sig_row);
            effects_included(&mut raw, &old)?;
            Ok(())
        }
        translate::TranslationMode::Coarse => {
            let program = Program {
                mode: Mode::None,
                signature: Some(translate::translate_signature_global(params)),
                body: translated,
            };
            let mut raw = infer::infer_program_raw(&program)
                .map_err(|e| format!("translated term failed coarse type-check: {e}"))?;
            let sk = skolemize(&expected);
            raw.ctx
                .subst
                .unify(&raw.ty, &sk)
                .map_err(|e| format!("translated type differs: {e}"))?;
            Ok(())
        }
    }
}

// ----- divergence witnesses -----

/// The Proposition's self-stepping term for a higher-order parameter
/// `p : A -> B`: `dlet p = (fun a -> (!p) a) in (!p) v` for an inhabitant
/// `v` of `A`.
pub fn divergence_witness(p: &crate::syntax::Param, arg_ty: &TypeExpr) -> DynComputation {
    let a = Var::new("a");
    let f = Var::new("f");
    let g = Var::new("g");
    let lam = DynValue::Lambda(
        a.clone(),
        Box::new(DynComputation::Do(
            f.clone(),
            Box::new(DynComputation::Deref(p.clone())),
            Box::new(DynComputation::App(
                DynValue::Var(f),
                DynValue::Var(a),
            )),
        )),
    );
    let arg = gen::dyn_inhabitant(arg_ty);
    DynComputation::DLet(
        p.clone(),
        lam,
        Box::new(DynComputation::Do(
            g.clone(),
            Box::new(DynComputation::Deref(p.clone())),
            Box::new(DynComputation::App(DynValue::Var(g), arg)),
        )),
    )
}

/// Detects a repeated state (up to alpha) within `bound` dyn steps and
/// returns the indices of the first recurrence.
pub fn dyn_cycle(c: &DynComputation, bound: usize) -> Option<(usize, usize)> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut cur = c.clone();
    for i in 0..=bound {
        let key = canonical_dyn(&cur);
        if let Some(first) = seen.get(&key) {
            return Some((*first, i));
        }
        seen.insert(key, i);
        match dyn_step(&cur) {
            DynStepResult::Stepped(next) => cur = next,
            _ => return None,
        }
    }
    None
}

/// Detects a repeated state (up to alpha) within `bound` handler steps.
pub fn eval_cycle(c: &Computation, bound: usize) -> Option<(usize, usize)> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut cur = c.clone();
    for i in 0..=bound {
        let key = canonical_comp(&cur);
        if let Some(first) = seen.get(&key) {
            return Some((*first, i));
        }
        seen.insert(key, i);
        match step(&cur) {
            StepResult::Stepped(next) => cur = next,
            _ => return None,
        }
    }
    None
}

/// The two-sided divergence check: the diverging handler is rejected in
/// local mode and loops in coarse mode.
pub fn check_divergence(seed: u64) -> Verdict {
    let body = fixtures::diverging_program_body();
    let local = Program {
        mode: Mode::Local,
        signature: None,
        body: body.clone(),
    };
    match infer::check_program(&local) {
        Err(e) if matches!(e.kind, crate::types::TypeErrorKind::OccursCheck(_, _)) => {}
        Err(e) => {
            return Verdict::fail(
                Theorem::Divergence,
                seed,
                0,
                format!("local mode rejected with the wrong error: {e}"),
                fixtures::H_DIV_SRC.to_string(),
            )
        }
        Ok(_) => {
            return Verdict::fail(
                Theorem::Divergence,
                seed,
                0,
                "local mode accepted the diverging handler".to_string(),
                fixtures::H_DIV_SRC.to_string(),
            )
        }
    }
    let coarse = Program {
        mode: Mode::Coarse,
        signature: Some(fixtures::diverging_signature()),
        body: body.clone(),
    };
    if let Err(e) = infer::check_program(&coarse) {
        return Verdict::fail(
            Theorem::Divergence,
            seed,
            0,
            format!("coarse mode rejected the diverging handler: {e}"),
            fixtures::H_DIV_SRC.to_string(),
        );
    }
    match eval_cycle(&body, 100) {
        Some(_) => Verdict::pass(Theorem::Divergence),
        None => Verdict::fail(
            Theorem::Divergence,
            seed,
            0,
            "no repeated state within 100 steps".to_string(),
            fixtures::H_DIV_SRC.to_string(),
        ),
    }
}

// ----- fuzz campaigns -----

#[derive(Debug, Clone)]
pub struct FuzzReport {
    pub theorem: Theorem,
    pub verdicts: Vec<Verdict>,
}

impl FuzzReport {
    pub fn passed(&self) -> usize {
        self.verdicts.iter().filter(|v| v.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.verdicts.len() - self.passed()
    }

    pub fn first_failure(&self) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| !v.passed)
    }
}

/// Safety over generated programs in one mode.
pub fn fuzz_safety(mode: Mode, seeds: std::ops::Range<u64>, depth: usize, fuel: u64) -> FuzzReport {
    let verdicts = seeds
        .map(|seed| {
            let cfg = GenConfig::new(seed, mode).with_depth(depth);
            let program = gen::gen_program(&cfg);
            check_safety(&program, fuel, seed)
        })
        .collect();
    FuzzReport {
        theorem: Theorem::Safety,
        verdicts,
    }
}

/// Global-state simulation over generated stateful programs.
pub fn fuzz_global_sim(seeds: std::ops::Range<u64>, depth: usize, fuel: u64) -> FuzzReport {
    let verdicts = seeds
        .map(|seed| {
            let (c, s) = gen::gen_stateful(seed, depth);
            check_global_state_sim(&c, &s, fuel, seed)
        })
        .collect();
    FuzzReport {
        theorem: Theorem::GlobalStateSim,
        verdicts,
    }
}

/// Dyn simulation over generated ground-signature dyn programs.
pub fn fuzz_dyn_sim(seeds: std::ops::Range<u64>, depth: usize, fuel: u64) -> FuzzReport {
    let verdicts = seeds
        .map(|seed| {
            let cfg = GenConfig::new(seed, Mode::None).with_depth(depth);
            let p = gen::gen_dyn_program(&cfg);
            check_dyn_simulation(&p.body, fuel, seed)
        })
        .collect();
    FuzzReport {
        theorem: Theorem::DynSim,
        verdicts,
    }
}

/// Type preservation (both halves) over generated dyn programs.
pub fn fuzz_type_preservation(seeds: std::ops::Range<u64>, depth: usize) -> FuzzReport {
    let verdicts = seeds
        .flat_map(|seed| {
            let cfg = GenConfig::new(seed, Mode::None).with_depth(depth);
            let p = gen::gen_dyn_program(&cfg);
            vec![
                check_type_preservation(
                    &p.params,
                    &p.body,
                    translate::TranslationMode::GroundAnnotated,
                    seed,
                ),
                check_type_preservation(
                    &p.params,
                    &p.body,
                    translate::TranslationMode::Coarse,
                    seed,
                ),
            ]
        })
        .collect();
    FuzzReport {
        theorem: Theorem::TypePreservation,
        verdicts,
    }
}

/// Sanity check used as a negative control: an ill-typed mutant must be
/// rejected before any stepping happens.
pub fn negative_control() -> TypeResult<()> {
    let bad = Program {
        mode: Mode::Local,
        signature: None,
        body: Computation::If(
            Value::Unit,
            Box::new(Computation::Return(Value::True)),
            Box::new(Computation::Return(Value::False)),
        ),
    };
    match infer::check_program(&bad) {
        Err(_) => Ok(()),
        Ok(_) => Err(crate::types::TypeError::new(
            crate::types::TypeErrorKind::Other(
                "negative control: the ill-typed mutant was accepted".to_string(),
            ),
        )),
    }
}
