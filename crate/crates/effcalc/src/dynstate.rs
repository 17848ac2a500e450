//! The dynamically scoped state calculus: syntax, Felleisen-style
//! evaluation contexts with parameter-binding tracking, and the small-step
//! semantics driven by unique decomposition.
//!
//! Unlike the handler calculus, the semantics here really does manipulate
//! explicit contexts: dereference and assignment must locate the nearest
//! enclosing `dlet` for their parameter.

use std::collections::{BTreeMap, BTreeSet};

use crate::syntax::{fresh_var, Param, TypeExpr, Var};

/// A value of the dynamic-state calculus. No handlers here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynValue {
    Var(Var),
    True,
    False,
    Unit,
    Int(i64),
    Lambda(Var, Box<DynComputation>),
}

/// A computation of the dynamic-state calculus: the common core plus
/// dereferencing, assignment and rebinding. There are no operation calls
/// and no handlers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynComputation {
    Return(DynValue),
    Do(Var, Box<DynComputation>, Box<DynComputation>),
    If(DynValue, Box<DynComputation>, Box<DynComputation>),
    App(DynValue, DynValue),
    Add(DynValue, DynValue),
    /// `!$p`
    Deref(Param),
    /// `$p := v`; evaluates to the unit value.
    Assign(Param, DynValue),
    /// `dlet $p = v in c`
    DLet(Param, DynValue, Box<DynComputation>),
}

/// The parameter signature `params { $p : A; ... }`. Types are closed and,
/// for the ground translation, must additionally be non-function types.
pub type ParamSignature = BTreeMap<Param, TypeExpr>;

/// A dynamic-state program: parameter signature header plus body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynProgram {
    pub params: ParamSignature,
    pub body: DynComputation,
}

pub fn free_vars_dyn_value(v: &DynValue) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_value(v, &mut out);
    out
}

pub fn free_vars_dyn(c: &DynComputation) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_comp(c, &mut out);
    out
}

fn collect_value(v: &DynValue, out: &mut BTreeSet<Var>) {
    match v {
        DynValue::Var(x) => {
            out.insert(x.clone());
        }
        DynValue::True | DynValue::False | DynValue::Unit | DynValue::Int(_) => {}
        DynValue::Lambda(x, body) => {
            let mut inner = BTreeSet::new();
            collect_comp(body, &mut inner);
            inner.remove(x);
            out.extend(inner);
        }
    }
}

fn collect_comp(c: &DynComputation, out: &mut BTreeSet<Var>) {
    match c {
        DynComputation::Return(v) | DynComputation::Assign(_, v) => collect_value(v, out),
        DynComputation::Deref(_) => {}
        DynComputation::Do(x, c1, c2) => {
            collect_comp(c1, out);
            let mut inner = BTreeSet::new();
            collect_comp(c2, &mut inner);
            inner.remove(x);
            out.extend(inner);
        }
        DynComputation::If(v, c1, c2) => {
            collect_value(v, out);
            collect_comp(c1, out);
            collect_comp(c2, out);
        }
        DynComputation::App(v1, v2) | DynComputation::Add(v1, v2) => {
            collect_value(v1, out);
            collect_value(v2, out);
        }
        DynComputation::DLet(_, v, c) => {
            collect_value(v, out);
            collect_comp(c, out);
        }
    }
}

/// Free parameters. `dlet $p = v in c` binds `p` in `c` but not in `v`.
pub fn free_params_dyn(c: &DynComputation) -> BTreeSet<Param> {
    let mut out = BTreeSet::new();
    params_comp(c, &mut out);
    out
}

pub fn free_params_dyn_value(v: &DynValue) -> BTreeSet<Param> {
    let mut out = BTreeSet::new();
    params_value(v, &mut out);
    out
}

fn params_value(v: &DynValue, out: &mut BTreeSet<Param>) {
    if let DynValue::Lambda(_, body) = v {
        params_comp(body, out);
    }
}

fn params_comp(c: &DynComputation, out: &mut BTreeSet<Param>) {
    match c {
        DynComputation::Return(v) => params_value(v, out),
        DynComputation::Do(_, c1, c2) => {
            params_comp(c1, out);
            params_comp(c2, out);
        }
        DynComputation::If(v, c1, c2) => {
            params_value(v, out);
            params_comp(c1, out);
            params_comp(c2, out);
        }
        DynComputation::App(v1, v2) | DynComputation::Add(v1, v2) => {
            params_value(v1, out);
            params_value(v2, out);
        }
        DynComputation::Deref(p) => {
            out.insert(p.clone());
        }
        DynComputation::Assign(p, v) => {
            out.insert(p.clone());
            params_value(v, out);
        }
        DynComputation::DLet(p, v, c) => {
            params_value(v, out);
            let mut inner = BTreeSet::new();
            params_comp(c, &mut inner);
            inner.remove(p);
            out.extend(inner);
        }
    }
}

/// Capture-avoiding substitution `c[v/x]` for the dyn calculus. Parameters
/// are names, not variables, so they never interact with substitution.
pub fn subst_dyn(c: &DynComputation, v: &DynValue, x: &Var) -> DynComputation {
    match c {
        DynComputation::Return(w) => DynComputation::Return(subst_dyn_value(w, v, x)),
        DynComputation::Do(y, c1, c2) => {
            let c1 = subst_dyn(c1, v, x);
            let (y, c2) = subst_under_binder(y, c2, v, x);
            DynComputation::Do(y, Box::new(c1), Box::new(c2))
        }
        DynComputation::If(w, c1, c2) => DynComputation::If(
            subst_dyn_value(w, v, x),
            Box::new(subst_dyn(c1, v, x)),
            Box::new(subst_dyn(c2, v, x)),
        ),
        DynComputation::App(v1, v2) => {
            DynComputation::App(subst_dyn_value(v1, v, x), subst_dyn_value(v2, v, x))
        }
        DynComputation::Add(v1, v2) => {
            DynComputation::Add(subst_dyn_value(v1, v, x), subst_dyn_value(v2, v, x))
        }
        DynComputation::Deref(p) => DynComputation::Deref(p.clone()),
        DynComputation::Assign(p, w) => {
            DynComputation::Assign(p.clone(), subst_dyn_value(w, v, x))
        }
        DynComputation::DLet(p, w, c) => DynComputation::DLet(
            p.clone(),
            subst_dyn_value(w, v, x),
            Box::new(subst_dyn(c, v, x)),
        ),
    }
}

pub fn subst_dyn_value(w: &DynValue, v: &DynValue, x: &Var) -> DynValue {
    match w {
        DynValue::Var(y) => {
            if y == x {
                v.clone()
            } else {
                w.clone()
            }
        }
        DynValue::True | DynValue::False | DynValue::Unit | DynValue::Int(_) => w.clone(),
        DynValue::Lambda(y, body) => {
            let (y, body) = subst_under_binder(y, body, v, x);
            DynValue::Lambda(y, Box::new(body))
        }
    }
}

fn subst_under_binder(
    y: &Var,
    body: &DynComputation,
    v: &DynValue,
    x: &Var,
) -> (Var, DynComputation) {
    if y == x {
        return (y.clone(), (*body).clone());
    }
    let fv_v = free_vars_dyn_value(v);
    if fv_v.contains(y) {
        let mut avoid = fv_v;
        avoid.extend(free_vars_dyn(body));
        avoid.insert(x.clone());
        let y2 = fresh_var(y.as_str(), &avoid);
        let renamed = subst_dyn(body, &DynValue::Var(y2.clone()), y);
        (y2, subst_dyn(&renamed, v, x))
    } else {
        (y.clone(), subst_dyn(body, v, x))
    }
}

/// Canonical form with bound variables as de Bruijn indices; parameter
/// names are kept literal, since parameters are dynamically scoped names
/// rather than binders subject to alpha-renaming.
pub fn canonical_dyn(c: &DynComputation) -> String {
    let mut canon = DynCanon {
        env: Vec::new(),
        out: String::new(),
    };
    canon.comp(c);
    canon.out
}

pub fn alpha_eq_dyn(a: &DynComputation, b: &DynComputation) -> bool {
    canonical_dyn(a) == canonical_dyn(b)
}

struct DynCanon {
    env: Vec<Var>,
    out: String,
}

impl DynCanon {
    fn var(&mut self, x: &Var) {
        match self.env.iter().rev().position(|y| y == x) {
            Some(i) => {
                self.out.push('#');
                self.out.push_str(&i.to_string());
            }
            None => {
                self.out.push('`');
                self.out.push_str(x.as_str());
            }
        }
    }

    fn value(&mut self, v: &DynValue) {
        match v {
            DynValue::Var(x) => self.var(x),
            DynValue::True => self.out.push_str("tt"),
            DynValue::False => self.out.push_str("ff"),
            DynValue::Unit => self.out.push_str("()"),
            DynValue::Int(n) => {
                self.out.push('i');
                self.out.push_str(&n.to_string());
            }
            DynValue::Lambda(x, body) => {
                self.out.push_str("λ(");
                self.env.push(x.clone());
                self.comp(body);
                self.env.pop();
                self.out.push(')');
            }
        }
    }

    fn comp(&mut self, c: &DynComputation) {
        match c {
            DynComputation::Return(v) => {
                self.out.push_str("R(");
                self.value(v);
                self.out.push(')');
            }
            DynComputation::Do(x, c1, c2) => {
                self.out.push_str("D(");
                self.comp(c1);
                self.out.push(',');
                self.env.push(x.clone());
                self.comp(c2);
                self.env.pop();
                self.out.push(')');
            }
            DynComputation::If(v, c1, c2) => {
                self.out.push_str("I(");
                self.value(v);
                self.out.push(',');
                self.comp(c1);
                self.out.push(',');
                self.comp(c2);
                self.out.push(')');
            }
            DynComputation::App(v1, v2) => {
                self.out.push_str("A(");
                self.value(v1);
                self.out.push(',');
                self.value(v2);
                self.out.push(')');
            }
            DynComputation::Add(v1, v2) => {
                self.out.push_str("+(");
                self.value(v1);
                self.out.push(',');
                self.value(v2);
                self.out.push(')');
            }
            DynComputation::Deref(p) => {
                self.out.push_str("!$");
                self.out.push_str(p.as_str());
            }
            DynComputation::Assign(p, v) => {
                self.out.push_str(":=$");
                self.out.push_str(p.as_str());
                self.out.push('(');
                self.value(v);
                self.out.push(')');
            }
            DynComputation::DLet(p, v, c) => {
                self.out.push_str("L$");
                self.out.push_str(p.as_str());
                self.out.push('(');
                self.value(v);
                self.out.push(',');
                self.comp(c);
                self.out.push(')');
            }
        }
    }
}

/// One frame of an evaluation context. The context grammar is exactly
/// `E ::= [] | E[do x <- [] in c] | E[dlet p = v in []]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    DoFrame(Var, DynComputation),
    DLetFrame(Param, DynValue),
}

/// An evaluation context: frames from outermost to innermost, hole at the
/// end.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalContext {
    pub frames: Vec<Frame>,
}

impl EvalContext {
    pub fn empty() -> Self {
        EvalContext { frames: Vec::new() }
    }

    /// Plugs a computation into the hole.
    pub fn plug(&self, c: DynComputation) -> DynComputation {
        let mut acc = c;
        for frame in self.frames.iter().rev() {
            acc = match frame {
                Frame::DoFrame(x, rest) => {
                    DynComputation::Do(x.clone(), Box::new(acc), Box::new(rest.clone()))
                }
                Frame::DLetFrame(p, v) => {
                    DynComputation::DLet(p.clone(), v.clone(), Box::new(acc))
                }
            };
        }
        acc
    }
}

/// `bp(E)`: the parameters bound by the context's `dlet` frames.
pub fn bound_params(e: &EvalContext) -> BTreeSet<Param> {
    e.frames
        .iter()
        .filter_map(|f| match f {
            Frame::DLetFrame(p, _) => Some(p.clone()),
            Frame::DoFrame(_, _) => None,
        })
        .collect()
}

/// The redex sitting in the hole of a decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Redex {
    /// `do x <- return v in c`
    DoReturn(Var, DynValue, DynComputation),
    /// `if true/false then c1 else c2` (or a stuck non-boolean scrutinee)
    If(DynValue, DynComputation, DynComputation),
    /// `(fun x -> c) v` (or a stuck non-function application)
    App(DynValue, DynValue),
    Add(DynValue, DynValue),
    /// `dlet p = v in return v'`
    DLetReturn(Param, DynValue, DynValue),
    Deref(Param),
    Assign(Param, DynValue),
}

/// Result of decomposing a computation into context and redex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decomposition {
    /// `return v` at top level.
    Terminal(DynValue),
    Redex(EvalContext, Redex),
}

/// Splits a closed computation into the unique evaluation context and
/// redex. For `Deref`/`Assign` redexes the binding frame is located later,
/// by scanning the context innermost-first; the `p ∉ bp(E')` side condition
/// is what makes that scan unambiguous.
pub fn decompose(c: &DynComputation) -> Decomposition {
    let mut frames = Vec::new();
    let mut cur = c;
    loop {
        match cur {
            DynComputation::Return(v) => match frames.pop() {
                None => return Decomposition::Terminal(v.clone()),
                Some(Frame::DoFrame(x, rest)) => {
                    return Decomposition::Redex(
                        EvalContext { frames },
                        Redex::DoReturn(x, v.clone(), rest),
                    )
                }
                Some(Frame::DLetFrame(p, w)) => {
                    return Decomposition::Redex(
                        EvalContext { frames },
                        Redex::DLetReturn(p, w, v.clone()),
                    )
                }
            },
            DynComputation::Do(x, c1, c2) => {
                frames.push(Frame::DoFrame(x.clone(), (**c2).clone()));
                cur = c1;
            }
            DynComputation::DLet(p, v, body) => {
                frames.push(Frame::DLetFrame(p.clone(), v.clone()));
                cur = body;
            }
            DynComputation::If(v, c1, c2) => {
                return Decomposition::Redex(
                    EvalContext { frames },
                    Redex::If(v.clone(), (**c1).clone(), (**c2).clone()),
                )
            }
            DynComputation::App(v1, v2) => {
                return Decomposition::Redex(
                    EvalContext { frames },
                    Redex::App(v1.clone(), v2.clone()),
                )
            }
            DynComputation::Add(v1, v2) => {
                return Decomposition::Redex(
                    EvalContext { frames },
                    Redex::Add(v1.clone(), v2.clone()),
                )
            }
            DynComputation::Deref(p) => {
                return Decomposition::Redex(EvalContext { frames }, Redex::Deref(p.clone()))
            }
            DynComputation::Assign(p, v) => {
                return Decomposition::Redex(
                    EvalContext { frames },
                    Redex::Assign(p.clone(), v.clone()),
                )
            }
        }
    }
}

/// Outcome of a single dyn step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynStepResult {
    Stepped(DynComputation),
    Terminal(DynValue),
    /// Dereference or assignment with no enclosing `dlet` for the
    /// parameter. This is the calculus' only stuck state reachable from
    /// well-typed programs; the type system does not rule it out.
    UnboundParameter(Param),
    Stuck(String),
}

/// One step of the Felleisen-style semantics.
pub fn dyn_step(c: &DynComputation) -> DynStepResult {
    let (ctx, redex) = match decompose(c) {
        Decomposition::Terminal(v) => return DynStepResult::Terminal(v),
        Decomposition::Redex(ctx, redex) => (ctx, redex),
    };
    match redex {
        Redex::DoReturn(x, v, c2) => DynStepResult::Stepped(ctx.plug(subst_dyn(&c2, &v, &x))),
        Redex::If(DynValue::True, c1, _) => DynStepResult::Stepped(ctx.plug(c1)),
        Redex::If(DynValue::False, _, c2) => DynStepResult::Stepped(ctx.plug(c2)),
        Redex::If(v, _, _) => DynStepResult::Stuck(format!("if on a non-boolean value {v:?}")),
        Redex::App(DynValue::Lambda(x, body), v) => {
            DynStepResult::Stepped(ctx.plug(subst_dyn(&body, &v, &x)))
        }
        Redex::App(v, _) => DynStepResult::Stuck(format!("application of a non-function {v:?}")),
        Redex::Add(DynValue::Int(a), DynValue::Int(b)) => {
            DynStepResult::Stepped(ctx.plug(DynComputation::Return(DynValue::Int(
                a.wrapping_add(b),
            ))))
        }
        Redex::Add(_, _) => DynStepResult::Stuck("addition of non-integers".to_string()),
        Redex::DLetReturn(_, _, v) => {
            DynStepResult::Stepped(ctx.plug(DynComputation::Return(v)))
        }
        Redex::Deref(p) => {
            let mut frames = ctx.frames.clone();
            match nearest_binding(&frames, &p) {
                None => DynStepResult::UnboundParameter(p),
                Some(i) => {
                    let v = match &frames[i] {
                        Frame::DLetFrame(_, v) => v.clone(),
                        Frame::DoFrame(_, _) => unreachable!(),
                    };
                    let ctx = EvalContext {
                        frames: std::mem::take(&mut frames),
                    };
                    DynStepResult::Stepped(ctx.plug(DynComputation::Return(v)))
                }
            }
        }
        Redex::Assign(p, v) => {
            let mut frames = ctx.frames.clone();
            match nearest_binding(&frames, &p) {
                None => DynStepResult::UnboundParameter(p),
                Some(i) => {
                    frames[i] = Frame::DLetFrame(p, v);
                    let ctx = EvalContext { frames };
                    DynStepResult::Stepped(ctx.plug(DynComputation::Return(DynValue::Unit)))
                }
            }
        }
    }
}

/// Index of the innermost `dlet` frame binding `p`, if any.
fn nearest_binding(frames: &[Frame], p: &Param) -> Option<usize> {
    frames
        .iter()
        .rposition(|f| matches!(f, Frame::DLetFrame(q, _) if q == p))
}

/// Terminal outcome of running a dyn computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynOutcome {
    Value(DynValue),
    UnboundParameter(Param),
    Stuck(String),
    FuelExhausted(DynComputation),
}

/// A dyn trace: the visited states (capped), the outcome, and fuel used.
#[derive(Debug, Clone)]
pub struct DynTrace {
    pub steps: Vec<DynComputation>,
    pub elided: usize,
    pub outcome: DynOutcome,
    pub fuel_used: u64,
}

pub const TRACE_CAP: usize = 1_000;

/// Iterates `dyn_step` until a terminal outcome or fuel runs out.
pub fn dyn_run(c: &DynComputation, fuel: u64) -> DynTrace {
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
            return DynTrace {
                steps,
                elided,
                outcome: DynOutcome::FuelExhausted(cur),
                fuel_used: used,
            };
        }
        match dyn_step(&cur) {
            DynStepResult::Stepped(next) => {
                used += 1;
                cur = next;
            }
            DynStepResult::Terminal(v) => {
                return DynTrace {
                    steps,
                    elided,
                    outcome: DynOutcome::Value(v),
                    fuel_used: used,
                }
            }
            DynStepResult::UnboundParameter(p) => {
                return DynTrace {
                    steps,
                    elided,
                    outcome: DynOutcome::UnboundParameter(p),
                    fuel_used: used,
                }
            }
            DynStepResult::Stuck(msg) => {
                return DynTrace {
                    steps,
                    elided,
                    outcome: DynOutcome::Stuck(msg),
                    fuel_used: used,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Param {
        Param::new(s)
    }

    #[test]
    fn bound_params_equations() {
        assert!(bound_params(&EvalContext::empty()).is_empty());

        let e = EvalContext {
            frames: vec![Frame::DLetFrame(p("p"), DynValue::True)],
        };
        assert_eq!(bound_params(&e).into_iter().collect::<Vec<_>>(), vec![p("p")]);

        let e = EvalContext {
            frames: vec![Frame::DoFrame(
                Var::new("x"),
                DynComputation::Return(DynValue::Unit),
            )],
        };
        assert!(bound_params(&e).is_empty());
    }

    #[test]
    fn decompose_terminal() {
        let c = DynComputation::Return(DynValue::Unit);
        assert_eq!(decompose(&c), Decomposition::Terminal(DynValue::Unit));
    }

    #[test]
    fn deref_selects_inner_binding() {
        // dlet p = 1 in dlet p = 2 in !p steps to ... return 2 in the hole.
        let c = DynComputation::DLet(
            p("p"),
            DynValue::Int(1),
            Box::new(DynComputation::DLet(
                p("p"),
                DynValue::Int(2),
                Box::new(DynComputation::Deref(p("p"))),
            )),
        );
        match dyn_step(&c) {
            DynStepResult::Stepped(c2) => {
                let expected = DynComputation::DLet(
                    p("p"),
                    DynValue::Int(1),
                    Box::new(DynComputation::DLet(
                        p("p"),
                        DynValue::Int(2),
                        Box::new(DynComputation::Return(DynValue::Int(2))),
                    )),
                );
                assert_eq!(c2, expected);
            }
            other => panic!("expected a step, got {other:?}"),
        }
    }

    #[test]
    fn assign_updates_nearest_binding_and_returns_unit() {
        // dlet p = 1 in (p := 2; !p) evaluates to return 2.
        let body = DynComputation::Do(
            Var::new("_"),
            Box::new(DynComputation::Assign(p("p"), DynValue::Int(2))),
            Box::new(DynComputation::Deref(p("p"))),
        );
        let c = DynComputation::DLet(p("p"), DynValue::Int(1), Box::new(body));
        let trace = dyn_run(&c, 100);
        assert_eq!(trace.outcome, DynOutcome::Value(DynValue::Int(2)));
    }

    #[test]
    fn unbound_parameter_is_reported() {
        let c = DynComputation::Deref(p("q"));
        assert_eq!(dyn_step(&c), DynStepResult::UnboundParameter(p("q")));
        let trace = dyn_run(&c, 10);
        assert_eq!(trace.outcome, DynOutcome::UnboundParameter(p("q")));
    }

    #[test]
    fn free_params_of_dlet_excludes_bound() {
        // free_params(dlet p = v in !p) = free_params(v)
        let v = DynValue::Lambda(
            Var::new("x"),
            Box::new(DynComputation::Deref(p("r"))),
        );
        let c = DynComputation::DLet(p("p"), v, Box::new(DynComputation::Deref(p("p"))));
        let fp = free_params_dyn(&c);
        assert_eq!(fp.into_iter().collect::<Vec<_>>(), vec![p("r")]);
    }
}
