//! Pretty-printing back to concrete syntax. The output of every printer in
//! this module re-parses, and elaborates to a term alpha-equivalent to the
//! one printed.
//!
//! Binders whose names collide with operation names, reserved `get_`/`set_`
//! prefixes, or keywords are alpha-renamed before printing so that the
//! scope-based operation resolution of the parser cannot misread them.

use std::collections::BTreeSet;

use crate::dynstate::{DynComputation, DynProgram, DynValue};
use crate::dynstate;
use crate::syntax::{
    free_vars_comp, fresh_var, is_reserved_op_name, subst_comp, Computation, Handler, OpClause,
    Program, Value, Var,
};

pub const KEYWORDS: &[&str] = &[
    "do", "in", "if", "then", "else", "fun", "return", "with", "handle", "handler", "dlet",
    "mode", "signature", "params", "true", "false", "local", "coarse", "none",
];

/// Precedence levels of the expression grammar, loosest first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Lv {
    Comp,
    Add,
    App,
    Atom,
}

pub fn pretty_comp(c: &Computation) -> String {
    let c = sanitize_comp(c);
    let mut out = String::new();
    comp(&mut out, &c, Lv::Comp);
    out
}

pub fn pretty_value(v: &Value) -> String {
    let v = sanitize_value(v);
    let mut out = String::new();
    value(&mut out, &v, Lv::Comp);
    out
}

pub fn pretty_dyn(c: &DynComputation) -> String {
    let c = sanitize_dyn(c);
    let mut out = String::new();
    dyn_comp(&mut out, &c, Lv::Comp);
    out
}

pub fn pretty_program(p: &Program) -> String {
    let mut out = format!("mode {};\n", p.mode);
    if let Some(sig) = &p.signature {
        out.push_str("signature {");
        for (op, (a, b)) in sig {
            out.push_str(&format!(" {op} : {a} -> {b};"));
        }
        out.push_str(" }\n");
    }
    out.push_str(&pretty_comp(&p.body));
    out.push('\n');
    out
}

pub fn pretty_dyn_program(p: &DynProgram) -> String {
    let mut out = String::from("params {");
    for (param, ty) in &p.params {
        out.push_str(&format!(" ${param} : {ty};"));
    }
    out.push_str(" }\n");
    out.push_str(&pretty_dyn(&p.body));
    out.push('\n');
    out
}

fn paren(out: &mut String, body: impl FnOnce(&mut String)) {
    out.push('(');
    body(out);
    out.push(')');
}

fn natural_comp(c: &Computation) -> Lv {
    match c {
        Computation::Return(_)
        | Computation::Do(_, _, _)
        | Computation::If(_, _, _)
        | Computation::Handle(_, _) => Lv::Comp,
        Computation::Add(_, _) => Lv::Add,
        Computation::App(_, _) => Lv::App,
        Computation::OpCall(_, _, _, _) => {
            if is_generic_opcall(c) {
                Lv::App
            } else {
                Lv::Atom
            }
        }
    }
}

/// `op(v; y. return y)` prints as the generic application `op v`.
fn is_generic_opcall(c: &Computation) -> bool {
    if let Computation::OpCall(_, _, y, cont) = c {
        matches!(&**cont, Computation::Return(Value::Var(z)) if z == y)
    } else {
        false
    }
}

/// Heads that the sequencing / do right-hand-side grammar accepts without
/// parentheses (everything that is not a greedy prefix form).
fn nongreedy_head(c: &Computation) -> bool {
    matches!(
        c,
        Computation::Return(_)
            | Computation::App(_, _)
            | Computation::Add(_, _)
            | Computation::OpCall(_, _, _, _)
    )
}

fn comp(out: &mut String, c: &Computation, lv: Lv) {
    if natural_comp(c) < lv {
        paren(out, |o| comp(o, c, Lv::Comp));
        return;
    }
    match c {
        Computation::Return(v) => {
            out.push_str("return ");
            value(out, v, Lv::Add);
        }
        Computation::Do(x, c1, c2) => {
            let as_seq = !free_vars_comp(c2).contains(x) && nongreedy_head(c1);
            if as_seq {
                comp(out, c1, Lv::Comp);
                out.push_str("; ");
                comp(out, c2, Lv::Comp);
            } else {
                out.push_str("do ");
                out.push_str(x.as_str());
                out.push_str(" <- ");
                if nongreedy_head(c1) {
                    comp(out, c1, Lv::Comp);
                } else {
                    paren(out, |o| comp(o, c1, Lv::Comp));
                }
                out.push_str(" in ");
                comp(out, c2, Lv::Comp);
            }
        }
        Computation::If(v, c1, c2) => {
            out.push_str("if ");
            value(out, v, Lv::Add);
            out.push_str(" then ");
            comp(out, c1, Lv::Comp);
            out.push_str(" else ");
            comp(out, c2, Lv::Comp);
        }
        Computation::App(v1, v2) => {
            value(out, v1, Lv::App);
            out.push(' ');
            value(out, v2, Lv::Atom);
        }
        Computation::OpCall(op, arg, y, cont) => {
            if is_generic_opcall(c) {
                out.push_str(op.as_str());
                out.push(' ');
                value(out, arg, Lv::Atom);
            } else {
                out.push_str(op.as_str());
                out.push('(');
                value(out, arg, Lv::Add);
                out.push_str("; ");
                out.push_str(y.as_str());
                out.push_str(". ");
                comp(out, cont, Lv::Comp);
                out.push(')');
            }
        }
        Computation::Handle(h, c) => {
            out.push_str("with ");
            match h {
                Value::Handler(_) => value(out, h, Lv::Comp),
                _ => value(out, h, Lv::Atom),
            }
            out.push_str(" handle ");
            comp(out, c, Lv::Comp);
        }
        Computation::Add(v1, v2) => {
            value(out, v1, Lv::App);
            out.push_str(" + ");
            value(out, v2, Lv::App);
        }
    }
}

fn natural_value(v: &Value) -> Lv {
    match v {
        Value::Lambda(_, _) => Lv::Comp,
        // Handler literals are self-delimiting.
        Value::Handler(_) => Lv::Atom,
        _ => Lv::Atom,
    }
}

fn value(out: &mut String, v: &Value, lv: Lv) {
    if natural_value(v) < lv {
        paren(out, |o| value(o, v, Lv::Comp));
        return;
    }
    match v {
        Value::Var(x) => out.push_str(x.as_str()),
        Value::True => out.push_str("true"),
        Value::False => out.push_str("false"),
        Value::Unit => out.push_str("()"),
        Value::Int(n) => out.push_str(&n.to_string()),
        Value::Lambda(x, body) => {
            out.push_str("fun ");
            out.push_str(x.as_str());
            // Flatten curried lambdas.
            let mut cur = body;
            while let Computation::Return(Value::Lambda(y, inner)) = &**cur {
                out.push(' ');
                out.push_str(y.as_str());
                cur = inner;
            }
            out.push_str(" -> ");
            comp(out, cur, Lv::Comp);
        }
        Value::Handler(h) => {
            out.push_str("handler { return ");
            out.push_str(h.ret_var.as_str());
            out.push_str(" -> ");
            comp(out, &h.ret_body, Lv::Comp);
            for (op, clause) in &h.clauses {
                out.push_str(" | ");
                out.push_str(op.as_str());
                out.push('(');
                out.push_str(clause.arg.as_str());
                out.push_str("; ");
                out.push_str(clause.cont.as_str());
                out.push_str(") -> ");
                comp(out, &clause.body, Lv::Comp);
            }
            out.push_str(" }");
        }
    }
}

fn natural_dyn(c: &DynComputation) -> Lv {
    match c {
        DynComputation::Return(_)
        | DynComputation::Do(_, _, _)
        | DynComputation::If(_, _, _)
        | DynComputation::Assign(_, _)
        | DynComputation::DLet(_, _, _) => Lv::Comp,
        DynComputation::Add(_, _) => Lv::Add,
        DynComputation::App(_, _) => Lv::App,
        DynComputation::Deref(_) => Lv::Atom,
    }
}

fn dyn_nongreedy_head(c: &DynComputation) -> bool {
    matches!(
        c,
        DynComputation::Return(_)
            | DynComputation::App(_, _)
            | DynComputation::Add(_, _)
            | DynComputation::Deref(_)
            | DynComputation::Assign(_, _)
    )
}

fn dyn_comp(out: &mut String, c: &DynComputation, lv: Lv) {
    if natural_dyn(c) < lv {
        paren(out, |o| dyn_comp(o, c, Lv::Comp));
        return;
    }
    match c {
        DynComputation::Return(v) => {
            out.push_str("return ");
            dyn_value(out, v, Lv::Add);
        }
        DynComputation::Do(x, c1, c2) => {
            let as_seq = !dynstate::free_vars_dyn(c2).contains(x) && dyn_nongreedy_head(c1);
            if as_seq {
                dyn_comp(out, c1, Lv::Comp);
                out.push_str("; ");
                dyn_comp(out, c2, Lv::Comp);
            } else {
                out.push_str("do ");
                out.push_str(x.as_str());
                out.push_str(" <- ");
                if dyn_nongreedy_head(c1) {
                    dyn_comp(out, c1, Lv::Comp);
                } else {
                    paren(out, |o| dyn_comp(o, c1, Lv::Comp));
                }
                out.push_str(" in ");
                dyn_comp(out, c2, Lv::Comp);
            }
        }
        DynComputation::If(v, c1, c2) => {
            out.push_str("if ");
            dyn_value(out, v, Lv::Add);
            out.push_str(" then ");
            dyn_comp(out, c1, Lv::Comp);
            out.push_str(" else ");
            dyn_comp(out, c2, Lv::Comp);
        }
        DynComputation::App(v1, v2) => {
            dyn_value(out, v1, Lv::App);
            out.push(' ');
            dyn_value(out, v2, Lv::Atom);
        }
        DynComputation::Add(v1, v2) => {
            dyn_value(out, v1, Lv::App);
            out.push_str(" + ");
            dyn_value(out, v2, Lv::App);
        }
        DynComputation::Deref(p) => {
            out.push_str("!$");
            out.push_str(p.as_str());
        }
        DynComputation::Assign(p, v) => {
            out.push('$');
            out.push_str(p.as_str());
            out.push_str(" := ");
            dyn_value(out, v, Lv::Add);
        }
        DynComputation::DLet(p, v, c) => {
            out.push_str("dlet $");
            out.push_str(p.as_str());
            out.push_str(" = ");
            dyn_value(out, v, Lv::Add);
            out.push_str(" in ");
            dyn_comp(out, c, Lv::Comp);
        }
    }
}

fn dyn_value(out: &mut String, v: &DynValue, lv: Lv) {
    let natural = match v {
        DynValue::Lambda(_, _) => Lv::Comp,
        _ => Lv::Atom,
    };
    if natural < lv {
        paren(out, |o| dyn_value(o, v, Lv::Comp));
        return;
    }
    match v {
        DynValue::Var(x) => out.push_str(x.as_str()),
        DynValue::True => out.push_str("true"),
        DynValue::False => out.push_str("false"),
        DynValue::Unit => out.push_str("()"),
        DynValue::Int(n) => out.push_str(&n.to_string()),
        DynValue::Lambda(x, body) => {
            out.push_str("fun ");
            out.push_str(x.as_str());
            let mut cur = body;
            while let DynComputation::Return(DynValue::Lambda(y, inner)) = &**cur {
                out.push(' ');
                out.push_str(y.as_str());
                cur = inner;
            }
            out.push_str(" -> ");
            dyn_comp(out, cur, Lv::Comp);
        }
    }
}

/// Names a binder must not use if the printed term is to re-parse with the
/// same meaning.
fn bad_binder(name: &str, ops: &BTreeSet<String>) -> bool {
    is_reserved_op_name(name) || ops.contains(name) || KEYWORDS.contains(&name)
}

fn collect_ops_comp(c: &Computation, out: &mut BTreeSet<String>) {
    match c {
        Computation::Return(v) => collect_ops_value(v, out),
        Computation::Do(_, c1, c2) => {
            collect_ops_comp(c1, out);
            collect_ops_comp(c2, out);
        }
        Computation::If(v, c1, c2) => {
            collect_ops_value(v, out);
            collect_ops_comp(c1, out);
            collect_ops_comp(c2, out);
        }
        Computation::App(v1, v2) | Computation::Add(v1, v2) => {
            collect_ops_value(v1, out);
            collect_ops_value(v2, out);
        }
        Computation::OpCall(op, arg, _, cont) => {
            out.insert(op.as_str().to_string());
            collect_ops_value(arg, out);
            collect_ops_comp(cont, out);
        }
        Computation::Handle(h, c) => {
            collect_ops_value(h, out);
            collect_ops_comp(c, out);
        }
    }
}

fn collect_ops_value(v: &Value, out: &mut BTreeSet<String>) {
    match v {
        Value::Lambda(_, body) => collect_ops_comp(body, out),
        Value::Handler(h) => {
            collect_ops_comp(&h.ret_body, out);
            for (op, clause) in &h.clauses {
                out.insert(op.as_str().to_string());
                collect_ops_comp(&clause.body, out);
            }
        }
        _ => {}
    }
}

fn sanitize_comp(c: &Computation) -> Computation {
    let mut ops = BTreeSet::new();
    collect_ops_comp(c, &mut ops);
    rename_comp(c, &ops)
}

fn sanitize_value(v: &Value) -> Value {
    let mut ops = BTreeSet::new();
    collect_ops_value(v, &mut ops);
    rename_value(v, &ops)
}

fn fix_binder(x: &Var, body: &Computation, ops: &BTreeSet<String>) -> (Var, Computation) {
    if bad_binder(x.as_str(), ops) {
        let mut avoid = free_vars_comp(body);
        avoid.insert(x.clone());
        let x2 = fresh_var("x", &avoid);
        (x2.clone(), subst_comp(body, &Value::Var(x2), x))
    } else {
        (x.clone(), body.clone())
    }
}

fn rename_comp(c: &Computation, ops: &BTreeSet<String>) -> Computation {
    match c {
        Computation::Return(v) => Computation::Return(rename_value(v, ops)),
        Computation::Do(x, c1, c2) => {
            let (x, c2) = fix_binder(x, c2, ops);
            Computation::Do(
                x,
                Box::new(rename_comp(c1, ops)),
                Box::new(rename_comp(&c2, ops)),
            )
        }
        Computation::If(v, c1, c2) => Computation::If(
            rename_value(v, ops),
            Box::new(rename_comp(c1, ops)),
            Box::new(rename_comp(c2, ops)),
        ),
        Computation::App(v1, v2) => {
            Computation::App(rename_value(v1, ops), rename_value(v2, ops))
        }
        Computation::OpCall(op, arg, y, cont) => {
            let (y, cont) = fix_binder(y, cont, ops);
            Computation::OpCall(
                op.clone(),
                rename_value(arg, ops),
                y,
                Box::new(rename_comp(&cont, ops)),
            )
        }
        Computation::Handle(h, c) => {
            Computation::Handle(rename_value(h, ops), Box::new(rename_comp(c, ops)))
        }
        Computation::Add(v1, v2) => {
            Computation::Add(rename_value(v1, ops), rename_value(v2, ops))
        }
    }
}

fn rename_value(v: &Value, ops: &BTreeSet<String>) -> Value {
    match v {
        Value::Lambda(x, body) => {
            let (x, body) = fix_binder(x, body, ops);
            Value::Lambda(x, Box::new(rename_comp(&body, ops)))
        }
        Value::Handler(h) => {
            let (ret_var, ret_body) = fix_binder(&h.ret_var, &h.ret_body, ops);
            let clauses = h
                .clauses
                .iter()
                .map(|(op, clause)| {
                    let (arg, body) = fix_binder(&clause.arg, &clause.body, ops);
                    let (cont, body) = fix_binder(&clause.cont, &body, ops);
                    (
                        op.clone(),
                        OpClause {
                            arg,
                            cont,
                            body: rename_comp(&body, ops),
                        },
                    )
                })
                .collect();
            Value::Handler(Box::new(Handler {
                ret_var,
                ret_body: rename_comp(&ret_body, ops),
                clauses,
            }))
        }
        _ => v.clone(),
    }
}

fn sanitize_dyn(c: &DynComputation) -> DynComputation {
    // No operations in dyn programs; only keyword/reserved collisions.
    let ops = BTreeSet::new();
    rename_dyn(c, &ops)
}

fn fix_dyn_binder(
    x: &Var,
    body: &DynComputation,
    ops: &BTreeSet<String>,
) -> (Var, DynComputation) {
    if bad_binder(x.as_str(), ops) {
        let mut avoid = dynstate::free_vars_dyn(body);
        avoid.insert(x.clone());
        let x2 = fresh_var("x", &avoid);
        (x2.clone(), dynstate::subst_dyn(body, &DynValue::Var(x2), x))
    } else {
        (x.clone(), body.clone())
    }
}

fn rename_dyn(c: &DynComputation, ops: &BTreeSet<String>) -> DynComputation {
    match c {
        DynComputation::Return(v) => DynComputation::Return(rename_dyn_value(v, ops)),
        DynComputation::Do(x, c1, c2) => {
            let (x, c2) = fix_dyn_binder(x, c2, ops);
            DynComputation::Do(
                x,
                Box::new(rename_dyn(c1, ops)),
                Box::new(rename_dyn(&c2, ops)),
            )
        }
        DynComputation::If(v, c1, c2) => DynComputation::If(
            rename_dyn_value(v, ops),
            Box::new(rename_dyn(c1, ops)),
            Box::new(rename_dyn(c2, ops)),
        ),
        DynComputation::App(v1, v2) => {
            DynComputation::App(rename_dyn_value(v1, ops), rename_dyn_value(v2, ops))
        }
        DynComputation::Add(v1, v2) => {
            DynComputation::Add(rename_dyn_value(v1, ops), rename_dyn_value(v2, ops))
        }
        DynComputation::Deref(p) => DynComputation::Deref(p.clone()),
        DynComputation::Assign(p, v) => {
            DynComputation::Assign(p.clone(), rename_dyn_value(v, ops))
        }
        DynComputation::DLet(p, v, c) => DynComputation::DLet(
            p.clone(),
            rename_dyn_value(v, ops),
            Box::new(rename_dyn(c, ops)),
        ),
    }
}

fn rename_dyn_value(v: &DynValue, ops: &BTreeSet<String>) -> DynValue {
    match v {
        DynValue::Lambda(x, body) => {
            let (x, body) = fix_dyn_binder(x, body, ops);
            DynValue::Lambda(x, Box::new(rename_dyn(&body, ops)))
        }
        _ => v.clone(),
    }
}
