//! Small-step operational semantics for the handler calculus, with
//! fuel-bounded execution and traces.
//!
//! The hoisting of operation calls out of `do` and past non-matching
//! handlers is implemented as explicit rules; everything else is structural
//! congruence. Evaluation contexts are reserved for the dynamic-state
//! calculus, where the semantics genuinely needs them.

use crate::fixtures;
use crate::syntax::{
    free_vars_comp, free_vars_value, fresh_var, subst_comp, Computation, OpName, Value, Var,
};

/// The outcome of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Stepped(Computation),
    /// `return v` at the top level.
    Terminal(Value),
    /// An unhandled operation call at the top level. Safety guarantees the
    /// operation appears in the program's effect annotation.
    TerminalOp {
        op: OpName,
        arg: Value,
        var: Var,
        cont: Computation,
    },
    /// Only reachable from ill-typed or open input.
    Stuck(String),
}

/// One step of the small-step relation. `c` should be closed.
pub fn step(c: &Computation) -> StepResult {
    match c {
        Computation::Return(v) => StepResult::Terminal(v.clone()),
        Computation::OpCall(op, arg, y, cont) => StepResult::TerminalOp {
            op: op.clone(),
            arg: arg.clone(),
            var: y.clone(),
            cont: (**cont).clone(),
        },
        Computation::Do(x, c1, c2) => match &**c1 {
            Computation::Return(v) => StepResult::Stepped(subst_comp(c2, v, x)),
            Computation::OpCall(op, arg, y, cont) => {
                // Hoist the call outwards, rebinding the continuation:
                // do x <- op(v; y. c1') in c2  ~>  op(v; y. do x <- c1' in c2)
                let (y, cont) = freshen_for(y, cont, c2);
                StepResult::Stepped(Computation::OpCall(
                    op.clone(),
                    arg.clone(),
                    y,
                    Box::new(Computation::Do(
                        x.clone(),
                        Box::new(cont),
                        Box::new((**c2).clone()),
                    )),
                ))
            }
            _ => match step(c1) {
                StepResult::Stepped(c1) => StepResult::Stepped(Computation::Do(
                    x.clone(),
                    Box::new(c1),
                    Box::new((**c2).clone()),
                )),
                StepResult::Stuck(msg) => StepResult::Stuck(msg),
                StepResult::Terminal(_) | StepResult::TerminalOp { .. } => unreachable!(),
            },
        },
        Computation::If(v, c1, c2) => match v {
            Value::True => StepResult::Stepped((**c1).clone()),
            Value::False => StepResult::Stepped((**c2).clone()),
            other => StepResult::Stuck(format!("if on a non-boolean value: {other:?}")),
        },
        Computation::App(f, a) => match f {
            Value::Lambda(x, body) => StepResult::Stepped(subst_comp(body, a, x)),
            other => StepResult::Stuck(format!("application of a non-function: {other:?}")),
        },
        Computation::Add(a, b) => match (a, b) {
            (Value::Int(a), Value::Int(b)) => {
                StepResult::Stepped(Computation::Return(Value::Int(a.wrapping_add(*b))))
            }
            _ => StepResult::Stuck("addition of non-integers".to_string()),
        },
        Computation::Handle(h, body) => {
            let handler = match h {
                Value::Handler(handler) => handler,
                other => return StepResult::Stuck(format!("handling with a non-handler: {other:?}")),
            };
            match &**body {
                Computation::Return(v) => {
                    StepResult::Stepped(subst_comp(&handler.ret_body, v, &handler.ret_var))
                }
                Computation::OpCall(op, arg, y, cont) => {
                    match handler.clauses.get(op) {
                        Some(clause) => {
                            // Deep handler: the continuation is wrapped in
                            // the same handler again.
                            let k = Value::Lambda(
                                y.clone(),
                                Box::new(Computation::Handle(h.clone(), cont.clone())),
                            );
                            let body = subst_comp(&clause.body, arg, &clause.arg);
                            StepResult::Stepped(subst_comp(&body, &k, &clause.cont))
                        }
                        None => {
                            // Forwarding: hoist the call past this handler.
                            let (y, cont) = freshen_for_value(y, cont, h);
                            StepResult::Stepped(Computation::OpCall(
                                op.clone(),
                                arg.clone(),
                                y,
                                Box::new(Computation::Handle(h.clone(), Box::new(cont))),
                            ))
                        }
                    }
                }
                _ => match step(body) {
                    StepResult::Stepped(body) => {
                        StepResult::Stepped(Computation::Handle(h.clone(), Box::new(body)))
                    }
                    StepResult::Stuck(msg) => StepResult::Stuck(msg),
                    StepResult::Terminal(_) | StepResult::TerminalOp { .. } => unreachable!(),
                },
            }
        }
    }
}

/// Renames the bound `y` of a hoisted continuation when it would capture a
/// free variable of the surrounding computation.
fn freshen_for(y: &Var, cont: &Computation, ctx: &Computation) -> (Var, Computation) {
    let ctx_fv = free_vars_comp(ctx);
    if ctx_fv.contains(y) {
        let mut avoid = ctx_fv;
        avoid.extend(free_vars_comp(cont));
        let y2 = fresh_var(y.as_str(), &avoid);
        (y2.clone(), subst_comp(cont, &Value::Var(y2), y))
    } else {
        (y.clone(), cont.clone())
    }
}

fn freshen_for_value(y: &Var, cont: &Computation, ctx: &Value) -> (Var, Computation) {
    let ctx_fv = free_vars_value(ctx);
    if ctx_fv.contains(y) {
        let mut avoid = ctx_fv;
        avoid.extend(free_vars_comp(cont));
        let y2 = fresh_var(y.as_str(), &avoid);
        (y2.clone(), subst_comp(cont, &Value::Var(y2), y))
    } else {
        (y.clone(), cont.clone())
    }
}

/// Terminal outcome of a bounded run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Value(Value),
    Operation {
        op: OpName,
        arg: Value,
        var: Var,
        cont: Computation,
    },
    Stuck(String),
    FuelExhausted(Computation),
}

/// A run: the visited computations (capped at [`TRACE_CAP`] with the rest
/// elided), the outcome, and the number of steps taken.
#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<Computation>,
    pub elided: usize,
    pub outcome: Outcome,
    pub fuel_used: u64,
}

pub const DEFAULT_FUEL: u64 = 10_000;
pub const TRACE_CAP: usize = 1_000;

/// Iterates [`step`] until a terminal outcome or the fuel runs out. The
/// trace starts with the initial computation.
pub fn run(c: &Computation, fuel: u64) -> Trace {
    assert!(fuel > 0, "fuel must be positive");
    let mut steps = Vec::new();
    let mut elided = 0usize;
    let mut cur = c.clone();
    let mut used = 0u64;
    loop {
        if steps.len() < TRACE_CAP {
            steps.push(cur.clone());
        } else {
            elided += 1;
        }
        if used >= fuel {
            return Trace {
                steps,
                elided,
                outcome: Outcome::FuelExhausted(cur),
                fuel_used: used,
            };
        }
        match step(&cur) {
            StepResult::Stepped(next) => {
                used += 1;
                cur = next;
            }
            StepResult::Terminal(v) => {
                return Trace {
                    steps,
                    elided,
                    outcome: Outcome::Value(v),
                    fuel_used: used,
                }
            }
            StepResult::TerminalOp { op, arg, var, cont } => {
                return Trace {
                    steps,
                    elided,
                    outcome: Outcome::Operation { op, arg, var, cont },
                    fuel_used: used,
                }
            }
            StepResult::Stuck(msg) => {
                return Trace {
                    steps,
                    elided,
                    outcome: Outcome::Stuck(msg),
                    fuel_used: used,
                }
            }
        }
    }
}

/// `<c> s`: handles `c` with the state handler and applies the result to
/// the initial state, in call-by-value elaborated form:
/// `do f <- (with H_ST handle c) in f s`.
pub fn statesim(c: &Computation, s: &Value) -> Computation {
    let handler = Value::Handler(Box::new(fixtures::handler_state()));
    let mut avoid = free_vars_comp(c);
    avoid.extend(free_vars_value(s));
    let f = fresh_var("f", &avoid);
    Computation::Do(
        f.clone(),
        Box::new(Computation::Handle(handler, Box::new(c.clone()))),
        Box::new(Computation::App(Value::Var(f), s.clone())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{handler_constant, toggle};
    use crate::parse::parse_computation;
    use crate::syntax::{alpha_eq_comp, canonical_comp};

    #[test]
    fn do_return_steps_by_substitution() {
        let c = Computation::do_(
            "x",
            Computation::Return(Value::True),
            Computation::Return(Value::Var(Var::new("x"))),
        );
        match step(&c) {
            StepResult::Stepped(c2) => assert_eq!(c2, Computation::Return(Value::True)),
            other => panic!("expected step, got {other:?}"),
        }
    }

    #[test]
    fn nested_op_call_hoists_outward_twice() {
        // do x1 <- (do x2 <- op(v; y. c2) in c1) in c hoists twice and then
        // surfaces as a terminal operation call.
        let c = parse_computation(
            "do x1 <- (do x2 <- op(true; y. return y) in return x2) in return x1",
        )
        .unwrap();

        let after_one = parse_computation(
            "do x1 <- op(true; y. do x2 <- return y in return x2) in return x1",
        )
        .unwrap();
        let after_two = parse_computation(
            "op(true; y. do x1 <- (do x2 <- return y in return x2) in return x1)",
        )
        .unwrap();

        let s1 = match step(&c) {
            StepResult::Stepped(c) => c,
            other => panic!("expected step, got {other:?}"),
        };
        assert!(alpha_eq_comp(&s1, &after_one));
        let s2 = match step(&s1) {
            StepResult::Stepped(c) => c,
            other => panic!("expected step, got {other:?}"),
        };
        assert!(alpha_eq_comp(&s2, &after_two));
        assert!(matches!(step(&s2), StepResult::TerminalOp { .. }));
    }

    #[test]
    fn hoisting_avoids_capture() {
        // The op-bound y occurs free in the outer do body; hoisting must
        // rename it.
        let c = Computation::do_(
            "x",
            parse_computation("op(true; y. return y)").unwrap(),
            Computation::Return(Value::Var(Var::new("y"))),
        );
        match step(&c) {
            StepResult::Stepped(c2) => {
                match &c2 {
                    Computation::OpCall(_, _, y2, cont) => {
                        assert_ne!(y2.as_str(), "y");
                        // The free y must still be free in the hoisted body.
                        assert!(free_vars_comp(cont).contains(&Var::new("y")));
                    }
                    other => panic!("expected op call, got {other:?}"),
                }
            }
            other => panic!("expected step, got {other:?}"),
        }
    }

    #[test]
    fn constant_handler_returns_true_for_toggle() {
        let c = Computation::Handle(
            Value::Handler(Box::new(handler_constant())),
            Box::new(toggle()),
        );
        let trace = run(&c, 100);
        assert_eq!(trace.outcome, Outcome::Value(Value::True));
        assert!(trace.fuel_used <= 20, "took {} steps", trace.fuel_used);
    }

    #[test]
    fn statesim_get_follows_the_four_step_derivation() {
        // <get ()> s passes through <return s> s and ends at return s.
        let s = Value::Var(Var::new("s0"));
        let c = statesim(&parse_computation("get ()").unwrap(), &s);
        let halfway = statesim(&Computation::Return(s.clone()), &s);
        let trace = run(&c, 100);
        assert_eq!(trace.outcome, Outcome::Value(s));
        let key = canonical_comp(&halfway);
        let hit = trace
            .steps
            .iter()
            .position(|c| canonical_comp(c) == key)
            .expect("trace must pass through <return s> s");
        // Four steps from the start.
        assert_eq!(hit, 4);
    }

    #[test]
    fn statesim_set_reaches_return_unit() {
        let s = Value::True;
        let c = statesim(&parse_computation("set false").unwrap(), &s);
        let trace = run(&c, 100);
        assert_eq!(trace.outcome, Outcome::Value(Value::Unit));
    }

    #[test]
    fn statesim_toggle_returns_old_state() {
        for (initial, expected) in [(Value::True, Value::True), (Value::False, Value::False)] {
            let c = statesim(&toggle(), &initial);
            let trace = run(&c, 200);
            assert_eq!(trace.outcome, Outcome::Value(expected));
        }
    }

    #[test]
    fn statesim_return_discards_state() {
        let c = statesim(&Computation::Return(Value::Int(3)), &Value::True);
        let trace = run(&c, 100);
        assert_eq!(trace.outcome, Outcome::Value(Value::Int(3)));
    }

    #[test]
    fn unhandled_operation_forwards_past_handler() {
        let c = parse_computation(
            "with handler { return x -> return x | other(_; k) -> k () } handle op(true; y. return y)",
        )
        .unwrap();
        match step(&c) {
            StepResult::Stepped(c2) => match &c2 {
                Computation::OpCall(op, _, _, cont) => {
                    assert_eq!(op.as_str(), "op");
                    assert!(matches!(**cont, Computation::Handle(_, _)));
                }
                other => panic!("expected forwarded op, got {other:?}"),
            },
            other => panic!("expected step, got {other:?}"),
        }
    }

    #[test]
    fn diverging_handler_exhausts_fuel_with_a_repeated_state() {
        let c = crate::fixtures::diverging_program_body();
        let trace = run(&c, 100);
        assert!(matches!(trace.outcome, Outcome::FuelExhausted(_)));
        let keys: Vec<String> = trace.steps.iter().map(canonical_comp).collect();
        let mut seen = std::collections::HashSet::new();
        let repeat = keys.iter().position(|k| !seen.insert(k.clone()));
        assert!(repeat.is_some(), "no repeated state within 100 steps");
    }

    #[test]
    fn long_traces_are_capped_with_an_elision_count() {
        let c = crate::fixtures::diverging_program_body();
        let trace = run(&c, 1500);
        assert_eq!(trace.steps.len(), TRACE_CAP);
        assert!(trace.elided > 0);
        assert!(matches!(trace.outcome, Outcome::FuelExhausted(_)));
    }

    #[test]
    fn stuck_states_are_reported() {
        let c = Computation::If(
            Value::Unit,
            Box::new(Computation::Return(Value::True)),
            Box::new(Computation::Return(Value::False)),
        );
        assert!(matches!(step(&c), StepResult::Stuck(_)));

        let c = Computation::App(Value::True, Value::Unit);
        assert!(matches!(step(&c), StepResult::Stuck(_)));
    }
}
