//! Type-directed random program generation. Every generated term is
//! well-typed by construction; the harness re-checks them anyway and
//! treats a failure as a finding.
//!
//! Operation and parameter types are drawn once per program and used
//! consistently, so local-signature merges always unify. Higher-order
//! parameter types are avoided except by the dedicated divergence tests,
//! which keeps fuzz runs terminating.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynstate::{DynComputation, DynProgram, DynValue, ParamSignature};
use crate::syntax::{
    Computation, GlobalSignature, Handler, Mode, OpClause, OpName, Param, Program, TypeExpr,
    Value, Var,
};

/// Deterministic generator configuration; the same config always yields
/// the same program.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seed: u64,
    pub max_depth: usize,
    pub mode: Mode,
    pub op_budget: usize,
    pub param_budget: usize,
}

impl GenConfig {
    pub fn new(seed: u64, mode: Mode) -> Self {
        GenConfig {
            seed,
            max_depth: 4,
            mode,
            op_budget: 3,
            param_budget: 2,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth;
        self
    }
}

struct Gen {
    rng: ChaCha8Rng,
    ops: BTreeMap<OpName, (TypeExpr, TypeExpr)>,
    counter: u32,
}

type TypedEnv = Vec<(Var, TypeExpr)>;

impl Gen {
    fn new(cfg: &GenConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ops = BTreeMap::new();
        let n_ops = if cfg.op_budget == 0 {
            0
        } else {
            rng.gen_range(1..=cfg.op_budget)
        };
        for i in 0..n_ops {
            let param = ground_type(&mut rng);
            let result = ground_type(&mut rng);
            ops.insert(OpName::new(format!("op{i}")), (param, result));
        }
        Gen {
            rng,
            ops,
            counter: 0,
        }
    }

    fn fresh(&mut self, base: &str) -> Var {
        let n = self.counter;
        self.counter += 1;
        Var::new(format!("{base}{n}"))
    }

    fn random_type(&mut self, depth: usize) -> TypeExpr {
        if depth > 0 && self.rng.gen_bool(0.25) {
            let a = self.random_type(depth - 1);
            let b = self.random_type(depth - 1);
            TypeExpr::Arrow(Box::new(a), Box::new(b))
        } else {
            ground_type(&mut self.rng)
        }
    }

    fn env_candidates<'e>(&self, env: &'e TypedEnv, ty: &TypeExpr) -> Vec<&'e Var> {
        env.iter().filter(|(_, t)| t == ty).map(|(x, _)| x).collect()
    }

    fn value(&mut self, env: &TypedEnv, ty: &TypeExpr, depth: usize) -> Value {
        let candidates = self.env_candidates(env, ty);
        if !candidates.is_empty() && self.rng.gen_bool(0.5) {
            let i = self.rng.gen_range(0..candidates.len());
            return Value::Var(candidates[i].clone());
        }
        match ty {
            TypeExpr::Bool => {
                if self.rng.gen_bool(0.5) {
                    Value::True
                } else {
                    Value::False
                }
            }
            TypeExpr::Unit => Value::Unit,
            TypeExpr::Int => Value::Int(self.rng.gen_range(-5..=5)),
            TypeExpr::Arrow(a, b) => {
                let x = self.fresh("x");
                let mut env2 = env.clone();
                env2.push((x.clone(), (**a).clone()));
                let body = if depth == 0 {
                    Computation::Return(inhabitant(b))
                } else {
                    self.comp(&env2, b, depth - 1, true)
                };
                Value::Lambda(x, Box::new(body))
            }
        }
    }

    fn comp(&mut self, env: &TypedEnv, ty: &TypeExpr, depth: usize, effects: bool) -> Computation {
        if depth == 0 {
            return Computation::Return(self.value(env, ty, 0));
        }
        let mut choices: Vec<u32> = vec![3, 3, 2, 2];
        // 0 return, 1 do, 2 if, 3 app
        if effects && !self.ops.is_empty() {
            choices.push(2); // 4 op call
            choices.push(1); // 5 handle
        }
        if *ty == TypeExpr::Int {
            choices.push(2); // 6 add (index depends on effects)
        }
        let add_index = if effects && !self.ops.is_empty() { 6 } else { 4 };
        let total: u32 = choices.iter().sum();
        let mut pick = self.rng.gen_range(0..total);
        let mut kind = 0usize;
        for (i, w) in choices.iter().enumerate() {
            if pick < *w {
                kind = i;
                break;
            }
            pick -= w;
        }
        if kind == add_index && *ty == TypeExpr::Int {
            let a = self.value(env, &TypeExpr::Int, depth - 1);
            let b = self.value(env, &TypeExpr::Int, depth - 1);
            return Computation::Add(a, b);
        }
        match kind {
            0 => Computation::Return(self.value(env, ty, depth - 1)),
            1 => {
                // Occasionally the polymorphic-identity pattern, exercising
                // generalization of a non-value computation.
                if self.rng.gen_bool(0.15) {
                    let f = self.fresh("f");
                    let x = self.fresh("x");
                    let i = self.fresh("i");
                    let c1 = Computation::App(
                        Value::Lambda(
                            f.clone(),
                            Box::new(Computation::Return(Value::Var(f.clone()))),
                        ),
                        Value::Lambda(
                            x.clone(),
                            Box::new(Computation::Return(Value::Var(x.clone()))),
                        ),
                    );
                    let arg = self.value(env, ty, depth - 1);
                    let c2 = Computation::App(Value::Var(i.clone()), arg);
                    return Computation::Do(i, Box::new(c1), Box::new(c2));
                }
                let t1 = self.random_type(1);
                let c1 = self.comp(env, &t1, depth - 1, effects);
                let x = self.fresh("v");
                let mut env2 = env.clone();
                env2.push((x.clone(), t1));
                let c2 = self.comp(&env2, ty, depth - 1, effects);
                Computation::Do(x, Box::new(c1), Box::new(c2))
            }
            2 => {
                let cond = self.value(env, &TypeExpr::Bool, depth - 1);
                let c1 = self.comp(env, ty, depth - 1, effects);
                let c2 = self.comp(env, ty, depth - 1, effects);
                Computation::If(cond, Box::new(c1), Box::new(c2))
            }
            3 => {
                let a = self.random_type(1);
                let f = self.value(
                    env,
                    &TypeExpr::Arrow(Box::new(a.clone()), Box::new(ty.clone())),
                    depth - 1,
                );
                let arg = self.value(env, &a, depth - 1);
                Computation::App(f, arg)
            }
            4 => {
                let ops: Vec<_> = self.ops.keys().cloned().collect();
                let op = ops[self.rng.gen_range(0..ops.len())].clone();
                let (pa, pb) = self.ops[&op].clone();
                let arg = self.value(env, &pa, depth - 1);
                let y = self.fresh("y");
                let mut env2 = env.clone();
                env2.push((y.clone(), pb));
                let cont = self.comp(&env2, ty, depth - 1, effects);
                Computation::OpCall(op, arg, y, Box::new(cont))
            }
            5 => self.gen_handle(env, ty, depth),
            _ => unreachable!(),
        }
    }

    /// `with (handler {...}) handle c`: the handler transports an inner
    /// type to the target type; unhandled operations forward.
    fn gen_handle(&mut self, env: &TypedEnv, ty: &TypeExpr, depth: usize) -> Computation {
        let inner_ty = self.random_type(1);
        let ops: Vec<_> = self.ops.keys().cloned().collect();
        let n_handled = self.rng.gen_range(0..=ops.len().min(3));
        let mut handled = ops.clone();
        // Deterministic shuffle by repeated removal.
        let mut chosen = Vec::new();
        for _ in 0..n_handled {
            let i = self.rng.gen_range(0..handled.len());
            chosen.push(handled.remove(i));
        }

        let ret_var = self.fresh("r");
        let mut ret_env = env.clone();
        ret_env.push((ret_var.clone(), inner_ty.clone()));
        let ret_body = self.comp(&ret_env, ty, depth - 1, false);

        let mut clauses = BTreeMap::new();
        for op in chosen {
            let (pa, pb) = self.ops[&op].clone();
            let arg = self.fresh("p");
            let cont = self.fresh("k");
            let mut cl_env = env.clone();
            cl_env.push((arg.clone(), pa));
            // The continuation has type B_op -> target; either resume it
            // or ignore it and produce the target directly.
            let body = if self.rng.gen_bool(0.7) {
                let resume_arg = self.value(&cl_env, &pb, depth - 1);
                Computation::App(Value::Var(cont.clone()), resume_arg)
            } else {
                self.comp(&cl_env, ty, depth - 1, false)
            };
            clauses.insert(
                op,
                OpClause {
                    arg,
                    cont,
                    body,
                },
            );
        }
        let handler = Handler {
            ret_var,
            ret_body,
            clauses,
        };
        let inner = self.comp(env, &inner_ty, depth - 1, true);
        Computation::Handle(Value::Handler(Box::new(handler)), Box::new(inner))
    }
}

fn ground_type(rng: &mut ChaCha8Rng) -> TypeExpr {
    match rng.gen_range(0..3) {
        0 => TypeExpr::Bool,
        1 => TypeExpr::Unit,
        _ => TypeExpr::Int,
    }
}

/// A closed value of the given type.
pub fn inhabitant(ty: &TypeExpr) -> Value {
    match ty {
        TypeExpr::Bool => Value::True,
        TypeExpr::Unit => Value::Unit,
        TypeExpr::Int => Value::Int(0),
        TypeExpr::Arrow(_, b) => {
            Value::Lambda(Var::new("x"), Box::new(Computation::Return(inhabitant(b))))
        }
    }
}

pub fn dyn_inhabitant(ty: &TypeExpr) -> DynValue {
    match ty {
        TypeExpr::Bool => DynValue::True,
        TypeExpr::Unit => DynValue::Unit,
        TypeExpr::Int => DynValue::Int(0),
        TypeExpr::Arrow(_, b) => DynValue::Lambda(
            Var::new("x"),
            Box::new(DynComputation::Return(dyn_inhabitant(b))),
        ),
    }
}

/// Generates a well-typed program for the configured mode.
pub fn gen_program(cfg: &GenConfig) -> Program {
    let mut g = Gen::new(cfg);
    let target = g.random_type(1);
    let body = g.comp(&Vec::new(), &target, cfg.max_depth, true);
    let signature: GlobalSignature = g.ops.clone();
    match cfg.mode {
        Mode::Local => Program {
            mode: Mode::Local,
            signature: None,
            body,
        },
        mode => Program {
            mode,
            signature: Some(signature),
            body,
        },
    }
}

/// Generates a computation over `get`/`set` only (no handlers inside), for
/// the global-state simulation, together with a matching initial state.
pub fn gen_stateful(seed: u64, depth: usize) -> (Computation, Value) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state_ty = ground_type(&mut rng);
    let mut ops = BTreeMap::new();
    ops.insert(
        OpName::new("get"),
        (TypeExpr::Unit, state_ty.clone()),
    );
    ops.insert(
        OpName::new("set"),
        (state_ty.clone(), TypeExpr::Unit),
    );
    let mut g = Gen {
        rng,
        ops,
        counter: 0,
    };
    let target = ground_type(&mut g.rng);
    let body = g.gen_stateful_comp(&Vec::new(), &target, depth);
    let initial = g.value(&Vec::new(), &state_ty, 0);
    (body, initial)
}

impl Gen {
    /// Like [`Gen::comp`] but without handler nodes, so the global-state
    /// oracle understands every construct.
    fn gen_stateful_comp(&mut self, env: &TypedEnv, ty: &TypeExpr, depth: usize) -> Computation {
        if depth == 0 {
            return Computation::Return(self.value(env, ty, 0));
        }
        match self.rng.gen_range(0..10) {
            0 | 1 => Computation::Return(self.value(env, ty, depth - 1)),
            2 | 3 => {
                let t1 = self.random_type(0);
                let c1 = self.gen_stateful_comp(env, &t1, depth - 1);
                let x = self.fresh("v");
                let mut env2 = env.clone();
                env2.push((x.clone(), t1));
                let c2 = self.gen_stateful_comp(&env2, ty, depth - 1);
                Computation::Do(x, Box::new(c1), Box::new(c2))
            }
            4 | 5 => {
                let cond = self.value(env, &TypeExpr::Bool, 0);
                let c1 = self.gen_stateful_comp(env, ty, depth - 1);
                let c2 = self.gen_stateful_comp(env, ty, depth - 1);
                Computation::If(cond, Box::new(c1), Box::new(c2))
            }
            6 => {
                let a = self.random_type(0);
                let x = self.fresh("x");
                let mut env2 = env.clone();
                env2.push((x.clone(), a.clone()));
                let body = self.gen_stateful_comp(&env2, ty, depth - 1);
                let f = Value::Lambda(x, Box::new(body));
                let arg = self.value(env, &a, 0);
                Computation::App(f, arg)
            }
            _ => {
                let ops: Vec<_> = self.ops.keys().cloned().collect();
                let op = ops[self.rng.gen_range(0..ops.len())].clone();
                let (pa, pb) = self.ops[&op].clone();
                let arg = self.value(env, &pa, 0);
                let y = self.fresh("y");
                let mut env2 = env.clone();
                env2.push((y.clone(), pb));
                let cont = self.gen_stateful_comp(&env2, ty, depth - 1);
                Computation::OpCall(op, arg, y, Box::new(cont))
            }
        }
    }

    fn dyn_comp(
        &mut self,
        env: &TypedEnv,
        params: &ParamSignature,
        bound: &[Param],
        ty: &TypeExpr,
        depth: usize,
    ) -> DynComputation {
        if depth == 0 {
            return DynComputation::Return(self.dyn_value(env, params, bound, ty, 0));
        }
        let param_list: Vec<_> = params.keys().cloned().collect();
        match self.rng.gen_range(0..12) {
            0 | 1 => DynComputation::Return(self.dyn_value(env, params, bound, ty, depth - 1)),
            2 | 3 => {
                let t1 = self.random_type(1);
                let c1 = self.dyn_comp(env, params, bound, &t1, depth - 1);
                let x = self.fresh("v");
                let mut env2 = env.clone();
                env2.push((x.clone(), t1));
                let c2 = self.dyn_comp(&env2, params, bound, ty, depth - 1);
                DynComputation::Do(x, Box::new(c1), Box::new(c2))
            }
            4 => {
                let cond = self.dyn_value(env, params, bound, &TypeExpr::Bool, 0);
                let c1 = self.dyn_comp(env, params, bound, ty, depth - 1);
                let c2 = self.dyn_comp(env, params, bound, ty, depth - 1);
                DynComputation::If(cond, Box::new(c1), Box::new(c2))
            }
            5 => {
                let a = self.random_type(0);
                let x = self.fresh("x");
                let mut env2 = env.clone();
                env2.push((x.clone(), a.clone()));
                let body = self.dyn_comp(&env2, params, bound, ty, depth - 1);
                let f = DynValue::Lambda(x, Box::new(body));
                let arg = self.dyn_value(env, params, bound, &a, 0);
                DynComputation::App(f, arg)
            }
            6 if *ty == TypeExpr::Int => {
                let a = self.dyn_value(env, params, bound, &TypeExpr::Int, 0);
                let b = self.dyn_value(env, params, bound, &TypeExpr::Int, 0);
                DynComputation::Add(a, b)
            }
            7 | 8 => {
                // dlet: rebind some parameter around a subcomputation.
                if param_list.is_empty() {
                    return DynComputation::Return(self.dyn_value(env, params, bound, ty, 0));
                }
                let p = param_list[self.rng.gen_range(0..param_list.len())].clone();
                let pty = params[&p].clone();
                let v = self.dyn_value(env, params, bound, &pty, depth - 1);
                let mut bound2 = bound.to_vec();
                bound2.push(p.clone());
                let body = self.dyn_comp(env, params, &bound2, ty, depth - 1);
                DynComputation::DLet(p, v, Box::new(body))
            }
            9 | 10 => {
                // Deref a bound parameter of the right type if possible.
                let usable: Vec<_> = bound
                    .iter()
                    .filter(|p| params[*p] == *ty)
                    .cloned()
                    .collect();
                if usable.is_empty() {
                    return DynComputation::Return(self.dyn_value(env, params, bound, ty, 0));
                }
                let p = usable[self.rng.gen_range(0..usable.len())].clone();
                DynComputation::Deref(p)
            }
            _ => {
                // Assignment yields unit.
                if *ty == TypeExpr::Unit && !bound.is_empty() {
                    let p = bound[self.rng.gen_range(0..bound.len())].clone();
                    let pty = params[&p].clone();
                    let v = self.dyn_value(env, params, bound, &pty, 0);
                    DynComputation::Assign(p, v)
                } else {
                    DynComputation::Return(self.dyn_value(env, params, bound, ty, 0))
                }
            }
        }
    }

    fn dyn_value(
        &mut self,
        env: &TypedEnv,
        params: &ParamSignature,
        bound: &[Param],
        ty: &TypeExpr,
        depth: usize,
    ) -> DynValue {
        let candidates = self.env_candidates(env, ty);
        if !candidates.is_empty() && self.rng.gen_bool(0.5) {
            let i = self.rng.gen_range(0..candidates.len());
            return DynValue::Var(candidates[i].clone());
        }
        match ty {
            TypeExpr::Bool => {
                if self.rng.gen_bool(0.5) {
                    DynValue::True
                } else {
                    DynValue::False
                }
            }
            TypeExpr::Unit => DynValue::Unit,
            TypeExpr::Int => DynValue::Int(self.rng.gen_range(-5..=5)),
            TypeExpr::Arrow(a, b) => {
                let x = self.fresh("x");
                let mut env2 = env.clone();
                env2.push((x.clone(), (**a).clone()));
                let body = if depth == 0 {
                    DynComputation::Return(dyn_inhabitant(b))
                } else {
                    self.dyn_comp(&env2, params, bound, b, depth - 1)
                };
                DynValue::Lambda(x, Box::new(body))
            }
        }
    }
}

/// Generates a well-typed dyn program over a ground parameter signature.
pub fn gen_dyn_program(cfg: &GenConfig) -> DynProgram {
    let mut g = Gen::new(cfg);
    let mut params = ParamSignature::new();
    let n = if cfg.param_budget == 0 {
        0
    } else {
        g.rng.gen_range(1..=cfg.param_budget)
    };
    for i in 0..n {
        params.insert(Param::new(format!("p{i}")), ground_type(&mut g.rng));
    }
    let target = g.random_type(0);
    let body = g.dyn_comp(&Vec::new(), &params, &[], &target, cfg.max_depth);
    DynProgram { params, body }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer;

    #[test]
    fn shallow_configs_generate_leaf_returns() {
        let cfg = GenConfig::new(7, Mode::Local).with_depth(0);
        let p = gen_program(&cfg);
        assert!(matches!(p.body, Computation::Return(_)));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig::new(42, Mode::Local);
        assert_eq!(gen_program(&cfg), gen_program(&cfg));
        let d1 = gen_dyn_program(&cfg);
        let d2 = gen_dyn_program(&cfg);
        assert_eq!(d1, d2);
    }

    #[test]
    fn generated_programs_recheck_in_every_mode() {
        for mode in [Mode::Local, Mode::Coarse, Mode::None] {
            for seed in 0..150 {
                let cfg = GenConfig::new(seed, mode);
                let p = gen_program(&cfg);
                if let Err(e) = infer::check_program(&p) {
                    panic!(
                        "seed {seed} mode {mode} generated an ill-typed program: {e}\n{}",
                        crate::pretty::pretty_comp(&p.body)
                    );
                }
            }
        }
    }

    #[test]
    fn generated_dyn_programs_recheck() {
        for seed in 0..150 {
            let cfg = GenConfig::new(seed, Mode::None);
            let p = gen_dyn_program(&cfg);
            if let Err(e) = infer::check_dyn_program(&p) {
                panic!(
                    "seed {seed} generated an ill-typed dyn program: {e}\n{}",
                    crate::pretty::pretty_dyn(&p.body)
                );
            }
        }
    }

    #[test]
    fn generator_covers_every_syntax_form() {
        let mut saw_handler = false;
        let mut saw_op = false;
        let mut saw_forwarding = false;
        for seed in 0..100 {
            let cfg = GenConfig::new(seed, Mode::Local).with_depth(5);
            let p = gen_program(&cfg);
            walk(&p.body, &mut |c| {
                if let Computation::Handle(Value::Handler(h), body) = c {
                    saw_handler = true;
                    let mut called = Vec::new();
                    collect_ops(body, &mut called);
                    if called.iter().any(|op| !h.clauses.contains_key(op)) {
                        saw_forwarding = true;
                    }
                }
                if matches!(c, Computation::OpCall(_, _, _, _)) {
                    saw_op = true;
                }
            });
        }
        assert!(saw_handler, "no handlers generated in 100 seeds");
        assert!(saw_op, "no operation calls generated in 100 seeds");
        assert!(saw_forwarding, "no forwarding case generated in 100 seeds");
    }

    fn walk(c: &Computation, f: &mut impl FnMut(&Computation)) {
        f(c);
        match c {
            Computation::Return(v) => walk_value(v, f),
            Computation::Do(_, c1, c2) | Computation::If(_, c1, c2) => {
                walk(c1, f);
                walk(c2, f);
            }
            Computation::App(v1, v2) | Computation::Add(v1, v2) => {
                walk_value(v1, f);
                walk_value(v2, f);
            }
            Computation::OpCall(_, arg, _, cont) => {
                walk_value(arg, f);
                walk(cont, f);
            }
            Computation::Handle(h, body) => {
                walk_value(h, f);
                walk(body, f);
            }
        }
    }

    fn walk_value(v: &Value, f: &mut impl FnMut(&Computation)) {
        match v {
            Value::Lambda(_, body) => walk(body, f),
            Value::Handler(h) => {
                walk(&h.ret_body, f);
                for clause in h.clauses.values() {
                    walk(&clause.body, f);
                }
            }
            _ => {}
        }
    }

    fn collect_ops(c: &Computation, out: &mut Vec<OpName>) {
        walk(c, &mut |c| {
            if let Computation::OpCall(op, _, _, _) = c {
                out.push(op.clone());
            }
        });
    }
}
