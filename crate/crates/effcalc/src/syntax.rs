//! Abstract syntax for the handler calculus: names, values, computations,
//! handlers and programs, plus capture-avoiding substitution and
//! alpha-equivalence.
//!
//! Variables, operations and parameters live in disjoint namespaces, which
//! the three name newtypes enforce by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// A term variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(String);

/// An operation symbol such as `get` or `set`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpName(String);

/// A dynamically scoped parameter, written `$p` in concrete syntax.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Param(String);

macro_rules! name_impls {
    ($ty:ident) => {
        impl $ty {
            pub fn new(text: impl Into<String>) -> Self {
                let text = text.into();
                debug_assert!(!text.is_empty(), "names must be nonempty");
                $ty(text)
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $ty {
            fn from(s: &str) -> Self {
                $ty::new(s)
            }
        }
    };
}

name_impls!(Var);
name_impls!(OpName);
name_impls!(Param);

/// Identifiers starting with these prefixes are reserved for the operations
/// the dynamic-state translation synthesizes; the parser refuses to bind
/// them as variables or parameters.
pub fn is_reserved_op_name(text: &str) -> bool {
    text.starts_with("get_") || text.starts_with("set_")
}

static FRESH: AtomicU64 = AtomicU64::new(0);

/// Draws the next name from the global fresh supply, guaranteed not to
/// occur in `avoid`. The supply is an atomic counter, so concurrent use is
/// safe; freshness against arbitrary user-written names is ensured by the
/// avoid set, not by the counter alone.
pub fn fresh_var(base: &str, avoid: &BTreeSet<Var>) -> Var {
    let stem = base.split('\'').next().unwrap_or("x");
    let stem = if stem.is_empty() { "x" } else { stem };
    loop {
        let n = FRESH.fetch_add(1, Ordering::Relaxed);
        let v = Var(format!("{stem}'{n}"));
        if !avoid.contains(&v) {
            return v;
        }
    }
}

/// Which variant of the type system a program requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Local signatures with the kinding side condition on generalization.
    Local,
    /// One global signature; annotations track operation names only.
    Coarse,
    /// One global signature and no effect annotations at all.
    None,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Local => f.write_str("local"),
            Mode::Coarse => f.write_str("coarse"),
            Mode::None => f.write_str("none"),
        }
    }
}

/// A source-level type expression, as written in `signature { ... }` and
/// `params { ... }` headers. These are always closed (no type variables).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Bool,
    Unit,
    Int,
    Arrow(Box<TypeExpr>, Box<TypeExpr>),
}

impl TypeExpr {
    /// Ground types contain no function types.
    pub fn is_ground(&self) -> bool {
        match self {
            TypeExpr::Bool | TypeExpr::Unit | TypeExpr::Int => true,
            TypeExpr::Arrow(_, _) => false,
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Bool => f.write_str("bool"),
            TypeExpr::Unit => f.write_str("unit"),
            TypeExpr::Int => f.write_str("int"),
            TypeExpr::Arrow(a, b) => {
                if matches!(**a, TypeExpr::Arrow(_, _)) {
                    write!(f, "({a}) -> {b}")
                } else {
                    write!(f, "{a} -> {b}")
                }
            }
        }
    }
}

/// The global operation signature used by the coarse and none modes.
pub type GlobalSignature = BTreeMap<OpName, (TypeExpr, TypeExpr)>;

/// A value: inert, never steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Var(Var),
    True,
    False,
    Unit,
    Int(i64),
    Lambda(Var, Box<Computation>),
    Handler(Box<Handler>),
}

/// A computation in fine-grained call-by-value style.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Computation {
    Return(Value),
    /// `do x <- c1 in c2`, binding `x` in `c2`.
    Do(Var, Box<Computation>, Box<Computation>),
    If(Value, Box<Computation>, Box<Computation>),
    App(Value, Value),
    /// `op(v; y. c)`, binding `y` in `c` only.
    OpCall(OpName, Value, Var, Box<Computation>),
    /// `with h handle c`; the handler position is a value.
    Handle(Value, Box<Computation>),
    /// Integer addition.
    Add(Value, Value),
}

/// One operation clause `op(arg; cont) -> body`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpClause {
    pub arg: Var,
    pub cont: Var,
    pub body: Computation,
}

/// A handler: a return clause plus operation clauses keyed by operation
/// name, so clause order is irrelevant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handler {
    pub ret_var: Var,
    pub ret_body: Computation,
    pub clauses: BTreeMap<OpName, OpClause>,
}

/// A handler-calculus program: a mode header, the global signature when the
/// mode requires one, and a body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub mode: Mode,
    pub signature: Option<GlobalSignature>,
    pub body: Computation,
}

impl Value {
    pub fn lambda(x: impl Into<String>, body: Computation) -> Value {
        Value::Lambda(Var::new(x), Box::new(body))
    }
}

impl Computation {
    pub fn ret(v: Value) -> Computation {
        Computation::Return(v)
    }

    pub fn do_(x: impl Into<String>, c1: Computation, c2: Computation) -> Computation {
        Computation::Do(Var::new(x), Box::new(c1), Box::new(c2))
    }

    pub fn app(v1: Value, v2: Value) -> Computation {
        Computation::App(v1, v2)
    }

    pub fn handle(h: Value, c: Computation) -> Computation {
        Computation::Handle(h, Box::new(c))
    }
}

pub fn free_vars_value(v: &Value) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_value(v, &mut out);
    out
}

pub fn free_vars_comp(c: &Computation) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_comp(c, &mut out);
    out
}

fn collect_value(v: &Value, out: &mut BTreeSet<Var>) {
    match v {
        Value::Var(x) => {
            out.insert(x.clone());
        }
        Value::True | Value::False | Value::Unit | Value::Int(_) => {}
        Value::Lambda(x, body) => {
            let mut inner = BTreeSet::new();
            collect_comp(body, &mut inner);
            inner.remove(x);
            out.extend(inner);
        }
        Value::Handler(h) => {
            let mut inner = BTreeSet::new();
            collect_comp(&h.ret_body, &mut inner);
            inner.remove(&h.ret_var);
            out.extend(inner);
            for clause in h.clauses.values() {
                let mut body = BTreeSet::new();
                collect_comp(&clause.body, &mut body);
                body.remove(&clause.arg);
                body.remove(&clause.cont);
                out.extend(body);
            }
        }
    }
}

fn collect_comp(c: &Computation, out: &mut BTreeSet<Var>) {
    match c {
        Computation::Return(v) => collect_value(v, out),
        Computation::Do(x, c1, c2) => {
            collect_comp(c1, out);
            let mut inner = BTreeSet::new();
            collect_comp(c2, &mut inner);
            inner.remove(x);
            out.extend(inner);
        }
        Computation::If(v, c1, c2) => {
            collect_value(v, out);
            collect_comp(c1, out);
            collect_comp(c2, out);
        }
        Computation::App(v1, v2) => {
            collect_value(v1, out);
            collect_value(v2, out);
        }
        Computation::OpCall(_, arg, y, cont) => {
            collect_value(arg, out);
            let mut inner = BTreeSet::new();
            collect_comp(cont, &mut inner);
            inner.remove(y);
            out.extend(inner);
        }
        Computation::Handle(h, c) => {
            collect_value(h, out);
            collect_comp(c, out);
        }
        Computation::Add(v1, v2) => {
            collect_value(v1, out);
            collect_value(v2, out);
        }
    }
}

/// Capture-avoiding substitution `c[v/x]`.
pub fn subst_comp(c: &Computation, v: &Value, x: &Var) -> Computation {
    match c {
        Computation::Return(w) => Computation::Return(subst_value(w, v, x)),
        Computation::Do(y, c1, c2) => {
            let c1 = subst_comp(c1, v, x);
            let (y, c2) = subst_under_binder(y, c2, v, x);
            Computation::Do(y, Box::new(c1), Box::new(c2))
        }
        Computation::If(w, c1, c2) => Computation::If(
            subst_value(w, v, x),
            Box::new(subst_comp(c1, v, x)),
            Box::new(subst_comp(c2, v, x)),
        ),
        Computation::App(v1, v2) => {
            Computation::App(subst_value(v1, v, x), subst_value(v2, v, x))
        }
        Computation::OpCall(op, arg, y, cont) => {
            let arg = subst_value(arg, v, x);
            let (y, cont) = subst_under_binder(y, cont, v, x);
            Computation::OpCall(op.clone(), arg, y, Box::new(cont))
        }
        Computation::Handle(h, c) => {
            Computation::Handle(subst_value(h, v, x), Box::new(subst_comp(c, v, x)))
        }
        Computation::Add(v1, v2) => {
            Computation::Add(subst_value(v1, v, x), subst_value(v2, v, x))
        }
    }
}

pub fn subst_value(w: &Value, v: &Value, x: &Var) -> Value {
    match w {
        Value::Var(y) => {
            if y == x {
                v.clone()
            } else {
                w.clone()
            }
        }
        Value::True | Value::False | Value::Unit | Value::Int(_) => w.clone(),
        Value::Lambda(y, body) => {
            let (y, body) = subst_under_binder(y, body, v, x);
            Value::Lambda(y, Box::new(body))
        }
        Value::Handler(h) => {
            let (ret_var, ret_body) = subst_under_binder(&h.ret_var, &h.ret_body, v, x);
            let clauses = h
                .clauses
                .iter()
                .map(|(op, clause)| (op.clone(), subst_clause(clause, v, x)))
                .collect();
            Value::Handler(Box::new(Handler {
                ret_var,
                ret_body,
                clauses,
            }))
        }
    }
}

/// Substitutes under a single binder, renaming the binder when it would
/// capture a free variable of `v`.
fn subst_under_binder(y: &Var, body: &Computation, v: &Value, x: &Var) -> (Var, Computation) {
    if y == x {
        return (y.clone(), (*body).clone());
    }
    let fv_v = free_vars_value(v);
    if fv_v.contains(y) {
        let mut avoid = fv_v;
        avoid.extend(free_vars_comp(body));
        avoid.insert(x.clone());
        let y2 = fresh_var(y.as_str(), &avoid);
        let renamed = subst_comp(body, &Value::Var(y2.clone()), y);
        (y2, subst_comp(&renamed, v, x))
    } else {
        (y.clone(), subst_comp(body, v, x))
    }
}

fn subst_clause(clause: &OpClause, v: &Value, x: &Var) -> OpClause {
    if clause.arg == *x || clause.cont == *x {
        return clause.clone();
    }
    let fv_v = free_vars_value(v);
    let mut arg = clause.arg.clone();
    let mut cont = clause.cont.clone();
    let mut body = clause.body.clone();
    if fv_v.contains(&arg) {
        let mut avoid = fv_v.clone();
        avoid.extend(free_vars_comp(&body));
        avoid.insert(x.clone());
        avoid.insert(cont.clone());
        let a2 = fresh_var(arg.as_str(), &avoid);
        body = subst_comp(&body, &Value::Var(a2.clone()), &arg);
        arg = a2;
    }
    if fv_v.contains(&cont) {
        let mut avoid = fv_v.clone();
        avoid.extend(free_vars_comp(&body));
        avoid.insert(x.clone());
        avoid.insert(arg.clone());
        let k2 = fresh_var(cont.as_str(), &avoid);
        body = subst_comp(&body, &Value::Var(k2.clone()), &cont);
        cont = k2;
    }
    OpClause {
        arg,
        cont,
        body: subst_comp(&body, v, x),
    }
}

/// Renders a term into a canonical string in which bound variables appear
/// as de Bruijn indices. Two terms are alpha-equivalent iff their canonical
/// forms are equal, so this doubles as the hash key for cycle detection.
pub struct Canon {
    env: Vec<Var>,
    out: String,
}

impl Canon {
    pub fn new() -> Self {
        Canon {
            env: Vec::new(),
            out: String::new(),
        }
    }

    pub fn finish(self) -> String {
        self.out
    }

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

    pub fn value(&mut self, v: &Value) {
        match v {
            Value::Var(x) => self.var(x),
            Value::True => self.out.push_str("tt"),
            Value::False => self.out.push_str("ff"),
            Value::Unit => self.out.push_str("()"),
            Value::Int(n) => {
                self.out.push('i');
                self.out.push_str(&n.to_string());
            }
            Value::Lambda(x, body) => {
                self.out.push_str("λ(");
                self.env.push(x.clone());
                self.comp(body);
                self.env.pop();
                self.out.push(')');
            }
            Value::Handler(h) => {
                self.out.push_str("H{r(");
                self.env.push(h.ret_var.clone());
                self.comp(&h.ret_body);
                self.env.pop();
                self.out.push(')');
                for (op, clause) in &h.clauses {
                    self.out.push(';');
                    self.out.push_str(op.as_str());
                    self.out.push('(');
                    self.env.push(clause.arg.clone());
                    self.env.push(clause.cont.clone());
                    self.comp(&clause.body);
                    self.env.pop();
                    self.env.pop();
                    self.out.push(')');
                }
                self.out.push('}');
            }
        }
    }

    pub fn comp(&mut self, c: &Computation) {
        match c {
            Computation::Return(v) => {
                self.out.push_str("R(");
                self.value(v);
                self.out.push(')');
            }
            Computation::Do(x, c1, c2) => {
                self.out.push_str("D(");
                self.comp(c1);
                self.out.push(',');
                self.env.push(x.clone());
                self.comp(c2);
                self.env.pop();
                self.out.push(')');
            }
            Computation::If(v, c1, c2) => {
                self.out.push_str("I(");
                self.value(v);
                self.out.push(',');
                self.comp(c1);
                self.out.push(',');
                self.comp(c2);
                self.out.push(')');
            }
            Computation::App(v1, v2) => {
                self.out.push_str("A(");
                self.value(v1);
                self.out.push(',');
                self.value(v2);
                self.out.push(')');
            }
            Computation::OpCall(op, arg, y, cont) => {
                self.out.push_str("O[");
                self.out.push_str(op.as_str());
                self.out.push_str("](");
                self.value(arg);
                self.out.push(',');
                self.env.push(y.clone());
                self.comp(cont);
                self.env.pop();
                self.out.push(')');
            }
            Computation::Handle(h, c) => {
                self.out.push_str("W(");
                self.value(h);
                self.out.push(',');
                self.comp(c);
                self.out.push(')');
            }
            Computation::Add(v1, v2) => {
                self.out.push_str("+(");
                self.value(v1);
                self.out.push(',');
                self.value(v2);
                self.out.push(')');
            }
        }
    }
}

impl Default for Canon {
    fn default() -> Self {
        Self::new()
    }
}

pub fn canonical_comp(c: &Computation) -> String {
    let mut canon = Canon::new();
    canon.comp(c);
    canon.finish()
}

pub fn canonical_value(v: &Value) -> String {
    let mut canon = Canon::new();
    canon.value(v);
    canon.finish()
}

pub fn alpha_eq_comp(a: &Computation, b: &Computation) -> bool {
    canonical_comp(a) == canonical_comp(b)
}

pub fn alpha_eq_value(a: &Value, b: &Value) -> bool {
    canonical_value(a) == canonical_value(b)
}
