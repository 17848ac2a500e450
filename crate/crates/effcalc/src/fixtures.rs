//! The worked programs: the toggle computation, the state handlers, the
//! diverging handler, the dynamic-state example, and the polymorphism
//! showcase. All of them are built by parsing concrete syntax, so they
//! double as parser fixtures.

use std::collections::BTreeMap;

use crate::dynstate::{DynComputation, ParamSignature};
use crate::parse::{parse_computation, parse_dyn_computation, parse_value};
use crate::syntax::{Computation, GlobalSignature, Handler, OpName, Param, TypeExpr, Value};

/// The toggle computation: flips the state and returns the old value.
pub const T_SRC: &str =
    "if get () then (set false; return true) else (set true; return false)";

/// A handler that yields `true` for every `get` and ignores every `set`.
pub const H_C_SRC: &str =
    "handler { return x -> return x | get(_; k) -> k true | set(s; k) -> k () }";

/// The parameter-passing state handler.
pub const H_ST_SRC: &str = "handler { \
     return x -> return (fun _ -> return x) \
   | get(_; k) -> return (fun s -> (k s) s) \
   | set(s'; k) -> return (fun _ -> (k ()) s') }";

/// The read-only state handler: reads see the initial state, writes are
/// ignored but still get a unit answer.
pub const H_RO_SRC: &str = "handler { \
     return x -> return (fun _ -> return x) \
   | get(_; k) -> return (fun s -> (k s) s) \
   | set(_; k) -> return (fun s -> (k ()) s) }";

/// The diverging handler. Well-typed only with a global signature giving
/// `op` the higher-order type `unit -> (unit -> unit)`.
pub const H_DIV_SRC: &str =
    "handler { return x -> return x | op(_; k) -> k (fun _ -> op () ()) }";

/// The computation the diverging handler loops on.
pub const H_DIV_BODY_SRC: &str = "op () ()";

/// The dynamic-state example: the write inside `f` binds to the second,
/// enclosing `dlet`, so the program evaluates to `return 2`.
pub const DYN_EXAMPLE_SRC: &str = "\
do f <- (dlet $u = 0 in return (fun _ -> $u := 1 + !$u)) \
in dlet $u = 1 in (f (); !$u)";

/// Let-polymorphism without a value restriction: both bindings get the
/// scheme of the polymorphic identity even though neither is a value.
pub const ID_ID_SRC: &str =
    "do id <- (fun f -> return f) (fun x -> return x) in do id' <- id id in return id'";

fn value_fixture(src: &str) -> Handler {
    match parse_value(src).expect("fixture source must parse") {
        Value::Handler(h) => *h,
        other => panic!("fixture is not a handler: {other:?}"),
    }
}

pub fn toggle() -> Computation {
    parse_computation(T_SRC).expect("fixture source must parse")
}

pub fn handler_constant() -> Handler {
    value_fixture(H_C_SRC)
}

pub fn handler_state() -> Handler {
    value_fixture(H_ST_SRC)
}

pub fn handler_read_only() -> Handler {
    value_fixture(H_RO_SRC)
}

pub fn handler_diverging() -> Handler {
    value_fixture(H_DIV_SRC)
}

/// `with H handle op () ()` for the diverging handler.
pub fn diverging_program_body() -> Computation {
    let h = Value::Handler(Box::new(handler_diverging()));
    Computation::Handle(
        h,
        Box::new(parse_computation(H_DIV_BODY_SRC).expect("fixture source must parse")),
    )
}

/// The global signature `{ op : unit -> (unit -> unit) }` that makes the
/// diverging handler well-typed in the coarse and none modes.
pub fn diverging_signature() -> GlobalSignature {
    let mut sig = BTreeMap::new();
    sig.insert(
        OpName::new("op"),
        (
            TypeExpr::Unit,
            TypeExpr::Arrow(Box::new(TypeExpr::Unit), Box::new(TypeExpr::Unit)),
        ),
    );
    sig
}

pub fn dyn_example() -> DynComputation {
    parse_dyn_computation(DYN_EXAMPLE_SRC).expect("fixture source must parse")
}

/// Parameter signature for the dynamic-state example.
pub fn dyn_example_params() -> ParamSignature {
    let mut sig = ParamSignature::new();
    sig.insert(Param::new("u"), TypeExpr::Int);
    sig
}

pub fn id_id() -> Computation {
    parse_computation(ID_ID_SRC).expect("fixture source must parse")
}

/// A fixture looked up by name, as exposed on the command line.
#[derive(Debug, Clone)]
pub enum Fixture {
    Comp(Computation),
    HandlerVal(Handler),
    Dyn(DynComputation, ParamSignature),
}

pub const FIXTURE_NAMES: &[&str] = &["T", "H_C", "H_ST", "H_RO", "H_div", "dyn_example", "id_id"];

pub fn fixture(name: &str) -> Result<Fixture, String> {
    match name {
        "T" => Ok(Fixture::Comp(toggle())),
        "H_C" => Ok(Fixture::HandlerVal(handler_constant())),
        "H_ST" => Ok(Fixture::HandlerVal(handler_state())),
        "H_RO" => Ok(Fixture::HandlerVal(handler_read_only())),
        "H_div" => Ok(Fixture::HandlerVal(handler_diverging())),
        "dyn_example" => Ok(Fixture::Dyn(dyn_example(), dyn_example_params())),
        "id_id" => Ok(Fixture::Comp(id_id())),
        other => Err(format!(
            "unknown fixture `{other}` (expected one of {})",
            FIXTURE_NAMES.join(", ")
        )),
    }
}
