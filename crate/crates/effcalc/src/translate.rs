//! The macro translation from the dynamic-state calculus into the handler
//! calculus, at both term and type level.
//!
//! The translation is compositional and uses no global information:
//! dereference and assignment become the specially named operations
//! `get_p` / `set_p`, and rebinding becomes handling with the state
//! handler specialized to those operations, applied to the translated
//! rebinding value.

use std::collections::BTreeMap;

use crate::dynstate::{DynComputation, DynProgram, DynValue, Frame, ParamSignature};
use crate::fixtures;
use crate::syntax::{
    free_vars_comp, free_vars_value, fresh_var, Computation, GlobalSignature, Handler, Mode,
    OpName, Param, Program, TypeExpr, Value,
};
use crate::types::{
    CType, Effects, LocalRow, OpType, Scheme, TypeError, TypeErrorKind, TypeResult, VType,
};

/// Which half of the type-level translation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranslationMode {
    /// Effect-annotated target types; requires a ground parameter
    /// signature, otherwise the translated signature would have to refer
    /// to itself.
    GroundAnnotated,
    /// No effect annotations on arrows; works for any parameter signature.
    Coarse,
}

pub fn get_op(p: &Param) -> OpName {
    OpName::new(format!("get_{p}"))
}

pub fn set_op(p: &Param) -> OpName {
    OpName::new(format!("set_{p}"))
}

/// The parameter-passing state handler specialized to `get_p` / `set_p`.
pub fn state_handler_for(p: &Param) -> Handler {
    let base = fixtures::handler_state();
    let mut clauses = BTreeMap::new();
    for (op, clause) in base.clauses {
        let renamed = match op.as_str() {
            "get" => get_op(p),
            "set" => set_op(p),
            _ => op,
        };
        clauses.insert(renamed, clause);
    }
    Handler {
        ret_var: base.ret_var,
        ret_body: base.ret_body,
        clauses,
    }
}

pub fn translate_value(v: &DynValue) -> Value {
    match v {
        DynValue::Var(x) => Value::Var(x.clone()),
        DynValue::True => Value::True,
        DynValue::False => Value::False,
        DynValue::Unit => Value::Unit,
        DynValue::Int(n) => Value::Int(*n),
        DynValue::Lambda(x, body) => Value::Lambda(x.clone(), Box::new(translate_term(body))),
    }
}

pub fn translate_term(c: &DynComputation) -> Computation {
    match c {
        DynComputation::Return(v) => Computation::Return(translate_value(v)),
        DynComputation::Do(x, c1, c2) => Computation::Do(
            x.clone(),
            Box::new(translate_term(c1)),
            Box::new(translate_term(c2)),
        ),
        DynComputation::If(v, c1, c2) => Computation::If(
            translate_value(v),
            Box::new(translate_term(c1)),
            Box::new(translate_term(c2)),
        ),
        DynComputation::App(v1, v2) => {
            Computation::App(translate_value(v1), translate_value(v2))
        }
        DynComputation::Add(v1, v2) => {
            Computation::Add(translate_value(v1), translate_value(v2))
        }
        DynComputation::Deref(p) => generic_op_call(get_op(p), Value::Unit),
        DynComputation::Assign(p, v) => generic_op_call(set_op(p), translate_value(v)),
        DynComputation::DLet(p, v, body) => {
            let handler = Value::Handler(Box::new(state_handler_for(p)));
            let body = translate_term(body);
            let v = translate_value(v);
            let mut avoid = free_vars_comp(&body);
            avoid.extend(free_vars_value(&v));
            let f = fresh_var("f", &avoid);
            Computation::Do(
                f.clone(),
                Box::new(Computation::Handle(handler, Box::new(body))),
                Box::new(Computation::App(Value::Var(f), v)),
            )
        }
    }
}

/// `op v` as a generic effect: `op(v; y. return y)`.
fn generic_op_call(op: OpName, arg: Value) -> Computation {
    let mut avoid = free_vars_value(&arg);
    avoid.insert(crate::syntax::Var::new("y"));
    let y = match &arg {
        Value::Var(x) if x.as_str() == "y" => fresh_var("y", &avoid),
        _ => crate::syntax::Var::new("y"),
    };
    Computation::OpCall(
        op,
        arg,
        y.clone(),
        Box::new(Computation::Return(Value::Var(y))),
    )
}

/// Translates a context frame-wise: `⟦E⟧[⟦c⟧] = ⟦E[c]⟧`.
pub fn plug_translated(frames: &[Frame], hole: Computation) -> Computation {
    let mut acc = hole;
    for frame in frames.iter().rev() {
        acc = match frame {
            Frame::DoFrame(x, rest) => {
                Computation::Do(x.clone(), Box::new(acc), Box::new(translate_term(rest)))
            }
            Frame::DLetFrame(p, v) => {
                let handler = Value::Handler(Box::new(state_handler_for(p)));
                let v = translate_value(v);
                let mut avoid = free_vars_comp(&acc);
                avoid.extend(free_vars_value(&v));
                let f = fresh_var("f", &avoid);
                Computation::Do(
                    f.clone(),
                    Box::new(Computation::Handle(handler, Box::new(acc))),
                    Box::new(Computation::App(Value::Var(f), v)),
                )
            }
        };
    }
    acc
}

fn ensure_ground(sig: &ParamSignature) -> TypeResult<()> {
    for (p, ty) in sig {
        if !ty.is_ground() {
            return Err(TypeError::new(TypeErrorKind::NonGroundSignature(p.clone())));
        }
    }
    Ok(())
}

fn vtype_from_expr_plain(te: &TypeExpr) -> VType {
    match te {
        TypeExpr::Bool => VType::Bool,
        TypeExpr::Unit => VType::Unit,
        TypeExpr::Int => VType::Int,
        TypeExpr::Arrow(a, b) => VType::Arrow(
            Box::new(vtype_from_expr_plain(a)),
            Box::new(CType::new(vtype_from_expr_plain(b), Effects::Untracked)),
        ),
    }
}

/// `⟦Σ⟧` for the annotated translation: a local signature with
/// `get_p : unit → A` and `set_p : A → unit` for every `(p : A) ∈ Σ`.
/// Only defined for ground signatures.
pub fn translate_signature(sig: &ParamSignature) -> TypeResult<LocalRow> {
    ensure_ground(sig)?;
    let mut entries = BTreeMap::new();
    for (p, ty) in sig {
        let a = vtype_from_expr_plain(ty);
        entries.insert(
            get_op(p),
            OpType {
                param: VType::Unit,
                result: a.clone(),
            },
        );
        entries.insert(
            set_op(p),
            OpType {
                param: a,
                result: VType::Unit,
            },
        );
    }
    Ok(LocalRow::closed(entries))
}

/// The translated signature as a source-level global signature, used as
/// the header of the coarse-translated program.
pub fn translate_signature_global(sig: &ParamSignature) -> GlobalSignature {
    let mut out = GlobalSignature::new();
    for (p, ty) in sig {
        out.insert(get_op(p), (TypeExpr::Unit, ty.clone()));
        out.insert(set_op(p), (ty.clone(), TypeExpr::Unit));
    }
    out
}

/// Type-level translation. In the annotated half, every arrow's codomain
/// is annotated with the whole translated signature; in the coarse half,
/// arrows stay bare.
pub fn translate_vtype(
    mode: TranslationMode,
    t: &VType,
    sig: &ParamSignature,
) -> TypeResult<VType> {
    match mode {
        TranslationMode::GroundAnnotated => {
            let row = translate_signature(sig)?;
            Ok(translate_vtype_with(t, &Some(row)))
        }
        TranslationMode::Coarse => Ok(translate_vtype_with(t, &None)),
    }
}

fn translate_vtype_with(t: &VType, row: &Option<LocalRow>) -> VType {
    match t {
        VType::Var(_) | VType::Meta(_) | VType::Bool | VType::Unit | VType::Int => t.clone(),
        VType::Arrow(dom, cod) => {
            let effects = match row {
                Some(row) => Effects::Local(row.clone()),
                None => Effects::Untracked,
            };
            VType::Arrow(
                Box::new(translate_vtype_with(dom, row)),
                Box::new(CType::new(translate_vtype_with(&cod.carrier, row), effects)),
            )
        }
        VType::HandlerT(_, _) => t.clone(),
    }
}

/// Schemes translate pointwise.
pub fn translate_scheme(
    mode: TranslationMode,
    s: &Scheme,
    sig: &ParamSignature,
) -> TypeResult<Scheme> {
    Ok(Scheme {
        vars: s.vars.clone(),
        body: translate_vtype(mode, &s.body, sig)?,
    })
}

/// Translates a whole dyn program into a handler-calculus program in the
/// matching mode: local for the annotated translation, annotation-free
/// (with the translated global signature) for the coarse one.
pub fn translate_program(p: &DynProgram, mode: TranslationMode) -> TypeResult<Program> {
    let body = translate_term(&p.body);
    match mode {
        TranslationMode::GroundAnnotated => {
            ensure_ground(&p.params)?;
            Ok(Program {
                mode: Mode::Local,
                signature: None,
                body,
            })
        }
        TranslationMode::Coarse => Ok(Program {
            mode: Mode::None,
            signature: Some(translate_signature_global(&p.params)),
            body,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynstate::{dyn_run, DynOutcome};
    use crate::eval::{run, Outcome};
    use crate::parse::{parse_computation, parse_dyn_computation};
    use crate::syntax::{alpha_eq_comp, alpha_eq_value};

    fn p(s: &str) -> Param {
        Param::new(s)
    }

    #[test]
    fn state_handler_for_is_the_state_handler_with_renamed_operations() {
        let h = state_handler_for(&p("p"));
        let expected = parse_computation(
            "return (handler { \
               return x -> return (fun _ -> return x) \
             | get_p(_; k) -> return (fun s -> (k s) s) \
             | set_p(s'; k) -> return (fun _ -> (k ()) s') })",
        )
        .unwrap();
        let got = Computation::Return(Value::Handler(Box::new(h)));
        assert!(alpha_eq_comp(&got, &expected));
    }

    #[test]
    fn distinct_parameters_get_disjoint_operations() {
        let h1 = state_handler_for(&p("p"));
        let h2 = state_handler_for(&p("q"));
        let ops1: Vec<_> = h1.clauses.keys().cloned().collect();
        let ops2: Vec<_> = h2.clauses.keys().cloned().collect();
        assert!(ops1.iter().all(|op| !ops2.contains(op)));
    }

    #[test]
    fn deref_translates_to_the_generic_get() {
        let c = translate_term(&DynComputation::Deref(p("p")));
        let expected = parse_computation("get_p ()").unwrap();
        assert!(alpha_eq_comp(&c, &expected));
    }

    #[test]
    fn assign_translates_to_the_generic_set() {
        let c = translate_term(&parse_dyn_computation("dlet $p = 1 in $p := 2").unwrap());
        let expected =
            parse_computation("do f <- (with handler { \
               return x -> return (fun _ -> return x) \
             | get_p(_; k) -> return (fun s -> (k s) s) \
             | set_p(s'; k) -> return (fun _ -> (k ()) s') } handle set_p 2) in f 1")
                .unwrap();
        assert!(alpha_eq_comp(&c, &expected));
    }

    #[test]
    fn homomorphic_on_the_common_core() {
        let c = DynComputation::Return(DynValue::True);
        assert_eq!(
            translate_term(&c),
            Computation::Return(Value::True)
        );
    }

    #[test]
    fn translation_commutes_with_substitution() {
        // ⟦c[v/x]⟧ = ⟦c⟧[⟦v⟧/x] on a representative term with binders.
        let wrapped =
            parse_dyn_computation("return (fun x -> do z <- return x in dlet $p = x in (z (); !$p))")
                .unwrap();
        let c = match wrapped {
            DynComputation::Return(DynValue::Lambda(_, body)) => *body,
            _ => unreachable!(),
        };
        let v = parse_dyn_computation("return (fun w -> $q := w; !$q)").unwrap();
        let v = match v {
            DynComputation::Return(v) => v,
            _ => unreachable!(),
        };
        let x = crate::syntax::Var::new("x");
        let lhs = translate_term(&crate::dynstate::subst_dyn(&c, &v, &x));
        let rhs = crate::syntax::subst_comp(&translate_term(&c), &translate_value(&v), &x);
        assert!(alpha_eq_comp(&lhs, &rhs));
    }

    #[test]
    fn translated_dyn_example_computes_two() {
        let dynv = fixtures::dyn_example();
        let dyn_trace = dyn_run(&dynv, 1000);
        assert_eq!(dyn_trace.outcome, DynOutcome::Value(DynValue::Int(2)));

        let translated = translate_term(&dynv);
        let trace = run(&translated, 1000);
        assert_eq!(trace.outcome, Outcome::Value(Value::Int(2)));
    }

    #[test]
    fn translate_signature_examples() {
        let mut sig = ParamSignature::new();
        sig.insert(p("p"), TypeExpr::Int);
        let row = translate_signature(&sig).unwrap();
        let get = row.entries.get(&get_op(&p("p"))).unwrap();
        assert_eq!(get.param, VType::Unit);
        assert_eq!(get.result, VType::Int);
        let set = row.entries.get(&set_op(&p("p"))).unwrap();
        assert_eq!(set.param, VType::Int);
        assert_eq!(set.result, VType::Unit);
    }

    #[test]
    fn ground_types_are_fixed_points() {
        let sig = ParamSignature::new();
        let t = translate_vtype(TranslationMode::GroundAnnotated, &VType::Bool, &sig).unwrap();
        assert_eq!(t, VType::Bool);
    }

    #[test]
    fn non_ground_signatures_are_rejected_in_annotated_mode() {
        let mut sig = ParamSignature::new();
        sig.insert(
            p("p"),
            TypeExpr::Arrow(Box::new(TypeExpr::Unit), Box::new(TypeExpr::Unit)),
        );
        let err = translate_signature(&sig).unwrap_err();
        assert!(matches!(err.kind, TypeErrorKind::NonGroundSignature(_)));
        // The coarse half still works.
        let global = translate_signature_global(&sig);
        assert_eq!(global.len(), 2);
    }

    #[test]
    fn translated_values_stay_values() {
        let v = DynValue::Lambda(
            crate::syntax::Var::new("x"),
            Box::new(DynComputation::Deref(p("r"))),
        );
        let tv = translate_value(&v);
        assert!(alpha_eq_value(
            &tv,
            &match parse_computation("return (fun x -> get_r ())").unwrap() {
                Computation::Return(v) => v,
                _ => unreachable!(),
            }
        ));
    }
}
