//! Hindley-Milner inference for the handler calculus, in the three
//! annotation disciplines, and for the dynamic-state calculus.
//!
//! Inference is syntax-directed in Algorithm W style. Generalization is
//! unrestricted over the term grammar: any `do`-bound computation is
//! generalized, with the one side condition that variables free in the
//! computation's own effect signature stay monomorphic. That side
//! condition, not a value restriction, is what keeps the system sound.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU32, Ordering};

use crate::dynstate::{DynComputation, DynProgram, DynValue, ParamSignature};
use crate::syntax::{
    Computation, GlobalSignature, Handler, Mode, OpName, Param, Program, Value, Var,
};
use crate::types::{
    kind_check_scheme, promote_metas_vtype, CType, CoarseRow, EffectShape, Effects, LocalRow,
    MetaId, OpType, Scheme, Subst, TyVar, TypeError, TypeErrorKind, TypeResult, VType,
};

/// The typing environment: type variables, polymorphic bindings, and
/// monomorphic bindings. A variable is in at most one of the two maps.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    pub theta: BTreeSet<TyVar>,
    pub poly: HashMap<Var, Scheme>,
    pub mono: HashMap<Var, VType>,
}

impl TypeEnv {
    pub fn new() -> Self {
        TypeEnv::default()
    }

    pub fn bind_mono(&mut self, x: Var, t: VType) {
        self.poly.remove(&x);
        self.mono.insert(x, t);
    }

    pub fn bind_poly(&mut self, x: Var, s: Scheme) {
        self.mono.remove(&x);
        self.poly.insert(x, s);
    }
}

/// Inference state for one program.
pub struct InferCtx {
    pub mode: Mode,
    pub global: Option<GlobalSignature>,
    pub params: Option<BTreeMap<Param, VType>>,
    pub subst: Subst,
    /// Every `do`-bound scheme, in binding order.
    pub bindings: Vec<(Var, Scheme)>,
    gen_counter: u32,
}

impl InferCtx {
    pub fn new(mode: Mode, global: Option<GlobalSignature>) -> Self {
        InferCtx {
            mode,
            global,
            params: None,
            subst: Subst::new(),
            bindings: Vec::new(),
            gen_counter: 0,
        }
    }

    fn err_ctx<T>(&self, r: TypeResult<T>, what: impl Fn() -> String) -> TypeResult<T> {
        r.map_err(|mut e| {
            e.context.push(what());
            e
        })
    }

    /// The empty annotation for the current mode.
    fn empty_effects(&self) -> Effects {
        match self.mode {
            Mode::Local => Effects::empty_local(),
            Mode::Coarse => Effects::empty_coarse(),
            Mode::None => Effects::Untracked,
        }
    }

    /// A fresh, fully undetermined annotation.
    fn fresh_effects(&mut self) -> Effects {
        match self.mode {
            Mode::Local => Effects::Local(self.subst.open_local()),
            Mode::Coarse => Effects::Coarse(self.subst.open_coarse()),
            Mode::None => Effects::Untracked,
        }
    }

    /// The annotation of a single operation call.
    fn op_effects(&self, op: &OpName, param: VType, result: VType) -> Effects {
        match self.mode {
            Mode::Local => {
                let mut entries = BTreeMap::new();
                entries.insert(op.clone(), OpType { param, result });
                Effects::Local(LocalRow::closed(entries))
            }
            Mode::Coarse => {
                let mut ops = BTreeSet::new();
                ops.insert(op.clone());
                Effects::Coarse(CoarseRow::closed(ops))
            }
            Mode::None => Effects::Untracked,
        }
    }

    /// Latent effects recorded on an arrow: the body annotation widened
    /// with a fresh open tail, so use sites may require more.
    fn widen_latent(&mut self, eff: Effects) -> TypeResult<Effects> {
        let open = self.fresh_effects();
        self.subst.merge_effects(&eff, &open)
    }

    /// Parameter and result type of a globally declared operation.
    fn global_op_types(&mut self, op: &OpName) -> TypeResult<(VType, VType)> {
        let shape = match self.mode {
            Mode::Coarse => EffectShape::CoarseOpen,
            Mode::None => EffectShape::Untracked,
            Mode::Local => {
                return Err(TypeError::new(TypeErrorKind::Other(
                    "internal error: no global signature in local mode".to_string(),
                )))
            }
        };
        let (a, b) = self
            .global
            .as_ref()
            .and_then(|sig| sig.get(op))
            .cloned()
            .ok_or_else(|| TypeError::new(TypeErrorKind::UndeclaredOperation(op.clone())))?;
        Ok((
            self.subst.type_from_expr(&a, shape),
            self.subst.type_from_expr(&b, shape),
        ))
    }

    fn fresh_gen_var(&mut self) -> TyVar {
        let n = self.gen_counter;
        self.gen_counter += 1;
        TyVar(format!("t{n}"))
    }

    /// Generalizes `t` against the environment and the computation's own
    /// effect annotation: exactly the type variables free in `t` but not in
    /// the environment or the annotation are quantified.
    pub fn generalize(&mut self, env: &TypeEnv, t: &VType, eff: &Effects) -> Scheme {
        let mut candidates = Vec::new();
        self.subst.free_metas_vtype(t, &mut candidates);

        let mut excluded = Vec::new();
        for ty in env.mono.values() {
            self.subst.free_metas_vtype(ty, &mut excluded);
        }
        for sch in env.poly.values() {
            self.subst.free_metas_scheme(sch, &mut excluded);
        }
        self.subst.free_metas_effects(eff, &mut excluded);
        let excluded: BTreeSet<MetaId> = excluded.into_iter().collect();

        let mut map = HashMap::new();
        let mut vars = Vec::new();
        for m in candidates {
            if !excluded.contains(&m) {
                let v = self.fresh_gen_var();
                vars.push(v.clone());
                map.insert(m, v);
            }
        }
        debug_assert!(map.keys().all(|m| !excluded.contains(m)));
        let body = promote_metas_vtype(&self.subst.zonk_vtype(t), &map);
        Scheme { vars, body }
    }

    // ----- values -----

    pub fn infer_value(&mut self, env: &TypeEnv, v: &Value) -> TypeResult<VType> {
        match v {
            Value::Var(x) => {
                if let Some(t) = env.mono.get(x) {
                    Ok(t.clone())
                } else if let Some(sch) = env.poly.get(x) {
                    Ok(self.subst.instantiate(sch))
                } else {
                    Err(TypeError::new(TypeErrorKind::UnboundVariable(x.clone())))
                }
            }
            Value::True | Value::False => Ok(VType::Bool),
            Value::Unit => Ok(VType::Unit),
            Value::Int(_) => Ok(VType::Int),
            Value::Lambda(x, body) => {
                let dom = self.subst.fresh_meta();
                let mut env2 = env.clone();
                env2.bind_mono(x.clone(), dom.clone());
                let (cod, eff) = self.infer_comp(&env2, body)?;
                let latent = self.widen_latent(eff)?;
                Ok(VType::Arrow(
                    Box::new(dom),
                    Box::new(CType::new(cod, latent)),
                ))
            }
            Value::Handler(h) => self.infer_handler(env, h),
        }
    }

    /// Handler typing: `A!Σ ⇒ B!Σ'` where `Σ` lists exactly the handled
    /// operations, the return clause checks at `B!Σ'` under `x : A`, and
    /// each operation clause checks at `B!Σ'` with the continuation at
    /// `B_op -> B!Σ'` (deep handlers). Unhandled operations are forwarded
    /// at the handling site.
    pub fn infer_handler(&mut self, env: &TypeEnv, h: &Handler) -> TypeResult<VType> {
        let a_in = self.subst.fresh_meta();
        let b_out = self.subst.fresh_meta();

        // The output annotation stays open while the clauses are inferred;
        // the knot is tied below.
        let out_eff = self.fresh_effects();

        // Handled-operation types.
        let mut handled_local = BTreeMap::new();
        let mut handled_coarse = BTreeSet::new();
        let mut clause_types = Vec::new();
        for (op, clause) in &h.clauses {
            let (a_op, b_op) = match self.mode {
                Mode::Local => (self.subst.fresh_meta(), self.subst.fresh_meta()),
                Mode::Coarse | Mode::None => self.global_op_types(op)?,
            };
            if self.mode == Mode::Local {
                handled_local.insert(
                    op.clone(),
                    OpType {
                        param: a_op.clone(),
                        result: b_op.clone(),
                    },
                );
            } else {
                handled_coarse.insert(op.clone());
            }
            clause_types.push((op.clone(), clause, a_op, b_op));
        }

        let mut env_ret = env.clone();
        env_ret.bind_mono(h.ret_var.clone(), a_in.clone());
        let ret_result = self.infer_comp(&env_ret, &h.ret_body);
        let (tr, er) = self.err_ctx(ret_result, || {
            "checking the handler's return clause".to_string()
        })?;
        let unified = self.subst.unify(&tr, &b_out);
        self.err_ctx(unified, || "checking the handler's return clause".to_string())?;
        let mut acc = er;

        for (op, clause, a_op, b_op) in clause_types {
            let mut env_cl = env.clone();
            env_cl.bind_mono(clause.arg.clone(), a_op);
            env_cl.bind_mono(
                clause.cont.clone(),
                VType::Arrow(
                    Box::new(b_op),
                    Box::new(CType::new(b_out.clone(), out_eff.clone())),
                ),
            );
            let body_result = self.infer_comp(&env_cl, &clause.body);
            let (tb, eb) = self.err_ctx(body_result, || {
                format!("checking the clause for operation `{op}`")
            })?;
            let unified = self.subst.unify(&tb, &b_out);
            self.err_ctx(unified, || {
                format!("checking the clause for operation `{op}`")
            })?;
            acc = self.subst.merge_effects(&acc, &eb)?;
        }

        // Tie the knot: the continuation's output annotation is the
        // accumulated clause annotation. The occurs check rejects
        // signatures that would have to mention themselves.
        let knot = self.subst.unify_effects(&out_eff, &acc);
        self.err_ctx(knot, || "closing the handler's output signature".to_string())?;

        let in_eff = match self.mode {
            Mode::Local => Effects::Local(LocalRow::closed(handled_local)),
            Mode::Coarse => Effects::Coarse(CoarseRow::closed(handled_coarse)),
            Mode::None => Effects::Untracked,
        };
        Ok(VType::HandlerT(
            Box::new(CType::new(a_in, in_eff)),
            Box::new(CType::new(b_out, out_eff)),
        ))
    }

    // ----- computations -----

    pub fn infer_comp(&mut self, env: &TypeEnv, c: &Computation) -> TypeResult<(VType, Effects)> {
        match c {
            Computation::Return(v) => {
                let t = self.infer_value(env, v)?;
                Ok((t, self.empty_effects()))
            }
            Computation::Do(x, c1, c2) => {
                let (t1, e1) = self.infer_comp(env, c1)?;
                let sch = self.generalize(env, &t1, &e1);
                self.bindings.push((x.clone(), sch.clone()));
                let mut env2 = env.clone();
                env2.bind_poly(x.clone(), sch);
                let (t2, e2) = self.infer_comp(&env2, c2)?;
                let eff = self.subst.merge_effects(&e1, &e2)?;
                Ok((t2, eff))
            }
            Computation::If(v, c1, c2) => {
                let tv = self.infer_value(env, v)?;
                let unified = self.subst.unify(&tv, &VType::Bool);
                self.err_ctx(unified, || "checking an if condition".to_string())?;
                let (t1, e1) = self.infer_comp(env, c1)?;
                let (t2, e2) = self.infer_comp(env, c2)?;
                let unified = self.subst.unify(&t1, &t2);
                self.err_ctx(unified, || "joining the branches of an if".to_string())?;
                let eff = self.subst.merge_effects(&e1, &e2)?;
                Ok((t1, eff))
            }
            Computation::App(f, a) => {
                let tf = self.infer_value(env, f)?;
                let ta = self.infer_value(env, a)?;
                let result = self.subst.fresh_meta();
                let eff = self.fresh_effects();
                let arrow = VType::Arrow(
                    Box::new(ta),
                    Box::new(CType::new(result.clone(), eff.clone())),
                );
                let unified = self.subst.unify(&tf, &arrow);
                self.err_ctx(unified, || "checking an application".to_string())?;
                Ok((result, eff))
            }
            Computation::OpCall(op, arg, y, cont) => {
                let targ = self.infer_value(env, arg)?;
                let result = match self.mode {
                    Mode::Local => self.subst.fresh_meta(),
                    Mode::Coarse | Mode::None => {
                        let (pa, pb) = self.global_op_types(op)?;
                        let unified = self.subst.unify(&targ, &pa);
                        self.err_ctx(unified, || {
                            format!("checking the argument of operation `{op}`")
                        })?;
                        pb
                    }
                };
                let op_eff = self.op_effects(op, targ, result.clone());
                let mut env2 = env.clone();
                env2.bind_mono(y.clone(), result);
                let (tc, ec) = self.infer_comp(&env2, cont)?;
                let eff = self.subst.merge_effects(&op_eff, &ec)?;
                Ok((tc, eff))
            }
            Computation::Handle(hv, body) => {
                let th = self.infer_value(env, hv)?;
                let (tc, ec) = self.infer_comp(env, body)?;
                // Expose the handler type, introducing one if unknown.
                let (cin, cout) = match self.subst.head(&th) {
                    VType::HandlerT(cin, cout) => (*cin, *cout),
                    other => {
                        let a = self.subst.fresh_meta();
                        let b = self.subst.fresh_meta();
                        let ein = self.fresh_effects();
                        let eout = self.fresh_effects();
                        let cin = CType::new(a, ein);
                        let cout = CType::new(b, eout);
                        let want =
                            VType::HandlerT(Box::new(cin.clone()), Box::new(cout.clone()));
                        let unified = self.subst.unify(&other, &want);
                        self.err_ctx(unified, || "checking a with-handle".to_string())?;
                        (cin, cout)
                    }
                };
                let unified = self.subst.unify(&tc, &cin.carrier);
                self.err_ctx(unified, || {
                    "matching the handled computation against the handler".to_string()
                })?;
                let eff = self.handle_effects(&cin.effects, &ec, &cout.effects)?;
                Ok((cout.carrier, eff))
            }
            Computation::Add(v1, v2) => {
                let t1 = self.infer_value(env, v1)?;
                let t2 = self.infer_value(env, v2)?;
                let u1 = self.subst.unify(&t1, &VType::Int);
                self.err_ctx(u1, || "checking the left operand of +".to_string())?;
                let u2 = self.subst.unify(&t2, &VType::Int);
                self.err_ctx(u2, || "checking the right operand of +".to_string())?;
                Ok((VType::Int, self.empty_effects()))
            }
        }
    }

    /// Splits the handled computation's annotation against the handler's
    /// input signature: handled entries unify with the handler's entry for
    /// that operation, everything else is forwarded into the result.
    fn handle_effects(
        &mut self,
        handled: &Effects,
        comp: &Effects,
        out: &Effects,
    ) -> TypeResult<Effects> {
        match (handled, comp) {
            (Effects::Untracked, Effects::Untracked) => Ok(Effects::Untracked),
            (Effects::Local(handled), Effects::Local(comp)) => {
                let handled_resolved = self.subst.resolve_local(handled);
                let handled = self.err_ctx(handled_resolved, || {
                    "resolving the handler's input signature".to_string()
                })?;
                // Unifying an entry against its clause type can bind the
                // computation row's tail, surfacing more entries, so the
                // split iterates until the view is stable.
                let comp = loop {
                    let resolved = self.subst.resolve_local(comp);
                    let resolved = self.err_ctx(resolved, || {
                        "resolving the handled computation's signature".to_string()
                    })?;
                    let before = (resolved.entries.keys().cloned().collect::<Vec<_>>(), resolved.tail);
                    for (op, ot) in &resolved.entries {
                        if let Some(hot) = handled.entries.get(op) {
                            let hot = hot.clone();
                            let u1 = self.subst.unify(&ot.param, &hot.param);
                            self.err_ctx(u1, || {
                                format!("matching operation `{op}` against its handler clause")
                            })?;
                            let u2 = self.subst.unify(&ot.result, &hot.result);
                            self.err_ctx(u2, || {
                                format!("matching operation `{op}` against its handler clause")
                            })?;
                        }
                    }
                    let after = self.subst.resolve_local(&resolved);
                    let after = self.err_ctx(after, || {
                        "resolving the handled computation's signature".to_string()
                    })?;
                    if (after.entries.keys().cloned().collect::<Vec<_>>(), after.tail) == before {
                        break after;
                    }
                };
                let forwarded: BTreeMap<OpName, OpType> = comp
                    .entries
                    .into_iter()
                    .filter(|(op, _)| !handled.entries.contains_key(op))
                    .collect();
                let fwd_row = LocalRow {
                    entries: forwarded,
                    tail: comp.tail,
                };
                self.subst
                    .merge_effects(out, &Effects::Local(fwd_row))
            }
            (Effects::Coarse(handled), Effects::Coarse(comp)) => {
                let handled = match self.subst.zonk_effects(&Effects::Coarse(handled.clone())) {
                    Effects::Coarse(row) => row,
                    _ => unreachable!(),
                };
                let comp = match self.subst.zonk_effects(&Effects::Coarse(comp.clone())) {
                    Effects::Coarse(row) => row,
                    _ => unreachable!(),
                };
                let forwarded: BTreeSet<OpName> =
                    comp.ops.difference(&handled.ops).cloned().collect();
                let fwd_row = CoarseRow {
                    ops: forwarded,
                    tail: comp.tail,
                };
                self.subst
                    .merge_effects(out, &Effects::Coarse(fwd_row))
            }
            _ => Err(TypeError::new(TypeErrorKind::Other(
                "internal error: mixed effect representations".to_string(),
            ))),
        }
    }

    // ----- dynamic-state computations (no effect annotations) -----

    fn param_type(&self, p: &Param) -> TypeResult<VType> {
        self.params
            .as_ref()
            .and_then(|m| m.get(p))
            .cloned()
            .ok_or_else(|| TypeError::new(TypeErrorKind::ParamNotInSignature(p.clone())))
    }

    pub fn infer_dyn_value(&mut self, env: &TypeEnv, v: &DynValue) -> TypeResult<VType> {
        match v {
            DynValue::Var(x) => {
                if let Some(t) = env.mono.get(x) {
                    Ok(t.clone())
                } else if let Some(sch) = env.poly.get(x) {
                    Ok(self.subst.instantiate(sch))
                } else {
                    Err(TypeError::new(TypeErrorKind::UnboundVariable(x.clone())))
                }
            }
            DynValue::True | DynValue::False => Ok(VType::Bool),
            DynValue::Unit => Ok(VType::Unit),
            DynValue::Int(_) => Ok(VType::Int),
            DynValue::Lambda(x, body) => {
                let dom = self.subst.fresh_meta();
                let mut env2 = env.clone();
                env2.bind_mono(x.clone(), dom.clone());
                let cod = self.infer_dyn(&env2, body)?;
                Ok(VType::Arrow(
                    Box::new(dom),
                    Box::new(CType::new(cod, Effects::Untracked)),
                ))
            }
        }
    }

    pub fn infer_dyn(&mut self, env: &TypeEnv, c: &DynComputation) -> TypeResult<VType> {
        match c {
            DynComputation::Return(v) => self.infer_dyn_value(env, v),
            DynComputation::Do(x, c1, c2) => {
                // Generalization here is completely unrestricted: the
                // parameter signature is closed, so no side condition is
                // needed.
                let t1 = self.infer_dyn(env, c1)?;
                let sch = self.generalize(env, &t1, &Effects::Untracked);
                self.bindings.push((x.clone(), sch.clone()));
                let mut env2 = env.clone();
                env2.bind_poly(x.clone(), sch);
                self.infer_dyn(&env2, c2)
            }
            DynComputation::If(v, c1, c2) => {
                let tv = self.infer_dyn_value(env, v)?;
                let unified = self.subst.unify(&tv, &VType::Bool);
                self.err_ctx(unified, || "checking an if condition".to_string())?;
                let t1 = self.infer_dyn(env, c1)?;
                let t2 = self.infer_dyn(env, c2)?;
                let unified = self.subst.unify(&t1, &t2);
                self.err_ctx(unified, || "joining the branches of an if".to_string())?;
                Ok(t1)
            }
            DynComputation::App(f, a) => {
                let tf = self.infer_dyn_value(env, f)?;
                let ta = self.infer_dyn_value(env, a)?;
                let result = self.subst.fresh_meta();
                let arrow = VType::Arrow(
                    Box::new(ta),
                    Box::new(CType::new(result.clone(), Effects::Untracked)),
                );
                let unified = self.subst.unify(&tf, &arrow);
                self.err_ctx(unified, || "checking an application".to_string())?;
                Ok(result)
            }
            DynComputation::Add(v1, v2) => {
                let t1 = self.infer_dyn_value(env, v1)?;
                let t2 = self.infer_dyn_value(env, v2)?;
                self.subst.unify(&t1, &VType::Int)?;
                self.subst.unify(&t2, &VType::Int)?;
                Ok(VType::Int)
            }
            DynComputation::Deref(p) => self.param_type(p),
            DynComputation::Assign(p, v) => {
                let tp = self.param_type(p)?;
                let tv = self.infer_dyn_value(env, v)?;
                let unified = self.subst.unify(&tv, &tp);
                self.err_ctx(unified, || format!("assigning to parameter `${p}`"))?;
                Ok(VType::Unit)
            }
            DynComputation::DLet(p, v, body) => {
                let tp = self.param_type(p)?;
                let tv = self.infer_dyn_value(env, v)?;
                let unified = self.subst.unify(&tv, &tp);
                self.err_ctx(unified, || format!("rebinding parameter `${p}`"))?;
                self.infer_dyn(env, body)
            }
        }
    }
}

/// A checked program: per-binding schemes, the top-level scheme, and the
/// closed top-level effect annotation. All inference variables are gone.
#[derive(Debug, Clone)]
pub struct TypedProgram {
    pub mode: Mode,
    pub bindings: Vec<(Var, Scheme)>,
    pub scheme: Scheme,
    pub effects: Effects,
}

/// A raw inference result, still carrying its substitution so callers can
/// pose further unification questions (subsumption, inclusion).
pub struct RawInference {
    pub ctx: InferCtx,
    pub ty: VType,
    pub effects: Effects,
}

fn validate_headers(p: &Program) -> TypeResult<()> {
    match (p.mode, &p.signature) {
        (Mode::Local, Some(_)) => Err(TypeError::new(TypeErrorKind::Other(
            "local mode takes no global signature".to_string(),
        ))),
        (Mode::Coarse, None) | (Mode::None, None) => Err(TypeError::new(TypeErrorKind::Other(
            format!("mode {} requires a global signature", p.mode),
        ))),
        _ => Ok(()),
    }
}

/// Runs inference on a program body and returns the live result.
pub fn infer_program_raw(p: &Program) -> TypeResult<RawInference> {
    validate_headers(p)?;
    let mut ctx = InferCtx::new(p.mode, p.signature.clone());
    let env = TypeEnv::new();
    let (ty, effects) = ctx.infer_comp(&env, &p.body)?;
    Ok(RawInference { ctx, ty, effects })
}

/// Type-checks a whole program: infers, generalizes the top level, and
/// eliminates every remaining inference variable.
pub fn check_program(p: &Program) -> TypeResult<TypedProgram> {
    let RawInference {
        mut ctx,
        ty,
        effects,
    } = infer_program_raw(p)?;
    let env = TypeEnv::new();
    let scheme = ctx.generalize(&env, &ty, &effects);
    let (bindings, scheme, effects) = finalize(&mut ctx, scheme, effects);
    Ok(TypedProgram {
        mode: p.mode,
        bindings,
        scheme,
        effects,
    })
}

/// Infers the scheme of a closed value (typically a handler).
pub fn infer_value_scheme(mode: Mode, global: Option<GlobalSignature>, v: &Value) -> TypeResult<Scheme> {
    let mut ctx = InferCtx::new(mode, global);
    let env = TypeEnv::new();
    let ty = ctx.infer_value(&env, v)?;
    let eff = ctx.empty_effects();
    let scheme = ctx.generalize(&env, &ty, &eff);
    let (_, scheme, _) = finalize(&mut ctx, scheme, eff);
    Ok(scheme)
}

/// The checked form of a dynamic-state program.
#[derive(Debug, Clone)]
pub struct TypedDyn {
    pub bindings: Vec<(Var, Scheme)>,
    pub scheme: Scheme,
}

pub fn resolve_params(sig: &ParamSignature) -> BTreeMap<Param, VType> {
    let mut subst = Subst::new();
    sig.iter()
        .map(|(p, te)| (p.clone(), subst.type_from_expr(te, EffectShape::Untracked)))
        .collect()
}

/// Runs dyn inference and returns the live result.
pub fn infer_dyn_raw(sig: &ParamSignature, c: &DynComputation) -> TypeResult<RawInference> {
    let mut ctx = InferCtx::new(Mode::None, None);
    ctx.params = Some(resolve_params(sig));
    let env = TypeEnv::new();
    let ty = ctx.infer_dyn(&env, c)?;
    Ok(RawInference {
        ctx,
        ty,
        effects: Effects::Untracked,
    })
}

/// Type-checks a dynamic-state computation under a parameter signature.
pub fn dyn_check(sig: &ParamSignature, c: &DynComputation) -> TypeResult<TypedDyn> {
    let RawInference {
        mut ctx, ty, ..
    } = infer_dyn_raw(sig, c)?;
    let env = TypeEnv::new();
    let scheme = ctx.generalize(&env, &ty, &Effects::Untracked);
    let (bindings, scheme, _) = finalize(&mut ctx, scheme, Effects::Untracked);
    Ok(TypedDyn { bindings, scheme })
}

pub fn check_dyn_program(p: &DynProgram) -> TypeResult<TypedDyn> {
    dyn_check(&p.params, &p.body)
}

/// Replaces every meta still free after generalization by a fresh rigid
/// type variable and closes all rows, in the top-level scheme, the
/// annotation, and the recorded bindings alike.
fn finalize(
    ctx: &mut InferCtx,
    scheme: Scheme,
    effects: Effects,
) -> (Vec<(Var, Scheme)>, Scheme, Effects) {
    let mut leftover = Vec::new();
    ctx.subst.free_metas_scheme(&scheme, &mut leftover);
    ctx.subst.free_metas_effects(&effects, &mut leftover);
    let bindings = std::mem::take(&mut ctx.bindings);
    for (_, sch) in &bindings {
        ctx.subst.free_metas_scheme(sch, &mut leftover);
    }
    let mut map = HashMap::new();
    for m in leftover {
        map.entry(m).or_insert_with(|| {
            
            ctx.fresh_gen_var()
        });
    }
    let promote_scheme = |subst: &Subst, sch: &Scheme| -> Scheme {
        let body = promote_metas_vtype(&subst.close_vtype(&sch.body), &map);
        Scheme {
            vars: sch.vars.clone(),
            body,
        }
    };
    let scheme = promote_scheme(&ctx.subst, &scheme);
    let effects = match ctx.subst.close_effects(&effects) {
        Effects::Local(row) => {
            let entries = row
                .entries
                .into_iter()
                .map(|(op, ot)| {
                    (
                        op,
                        OpType {
                            param: promote_metas_vtype(&ot.param, &map),
                            result: promote_metas_vtype(&ot.result, &map),
                        },
                    )
                })
                .collect();
            Effects::Local(LocalRow::closed(entries))
        }
        other => other,
    };
    let bindings = bindings
        .iter()
        .map(|(x, sch)| (x.clone(), promote_scheme(&ctx.subst, sch)))
        .collect();
    (bindings, scheme, effects)
}

// ----- scheme comparison helpers -----

static SKOLEM_COUNTER: AtomicU32 = AtomicU32::new(0);

/// Replaces a scheme's quantified variables by fresh rigid names that
/// nothing can unify with except themselves.
pub fn skolemize(s: &Scheme) -> VType {
    let mut map = HashMap::new();
    for v in &s.vars {
        let n = SKOLEM_COUNTER.fetch_add(1, Ordering::Relaxed);
        map.insert(v.clone(), TyVar(format!("sk{n}")));
    }
    rename_vtype(&s.body, &map)
}

fn rename_vtype(t: &VType, map: &HashMap<TyVar, TyVar>) -> VType {
    match t {
        VType::Var(v) => VType::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
        VType::Meta(_) | VType::Bool | VType::Unit | VType::Int => t.clone(),
        VType::Arrow(dom, cod) => VType::Arrow(
            Box::new(rename_vtype(dom, map)),
            Box::new(rename_ctype(cod, map)),
        ),
        VType::HandlerT(c1, c2) => VType::HandlerT(
            Box::new(rename_ctype(c1, map)),
            Box::new(rename_ctype(c2, map)),
        ),
    }
}

fn rename_ctype(c: &CType, map: &HashMap<TyVar, TyVar>) -> CType {
    let effects = match &c.effects {
        Effects::Untracked => Effects::Untracked,
        Effects::Coarse(row) => Effects::Coarse(row.clone()),
        Effects::Local(row) => Effects::Local(LocalRow {
            entries: row
                .entries
                .iter()
                .map(|(op, ot)| {
                    (
                        op.clone(),
                        OpType {
                            param: rename_vtype(&ot.param, map),
                            result: rename_vtype(&ot.result, map),
                        },
                    )
                })
                .collect(),
            tail: row.tail,
        }),
    };
    CType {
        carrier: rename_vtype(&c.carrier, map),
        effects,
    }
}

/// `general` subsumes `specific` when the skolemized body of `specific`
/// is an instance of `general`.
pub fn scheme_subsumes(general: &Scheme, specific: &Scheme) -> bool {
    let mut subst = Subst::new();
    let g = subst.instantiate(general);
    let s = skolemize(specific);
    subst.unify(&g, &s).is_ok()
}

// ----- canonical display renaming -----

const GREEK: &[&str] = &["α", "β", "γ", "δ", "ε", "ζ", "η", "θ", "ι", "κ"];

fn greek_name(i: usize) -> String {
    if i < GREEK.len() {
        GREEK[i].to_string()
    } else {
        format!("α{}", i - GREEK.len() + 1)
    }
}

struct Renamer {
    map: HashMap<TyVar, TyVar>,
    next: usize,
}

impl Renamer {
    fn new() -> Self {
        Renamer {
            map: HashMap::new(),
            next: 0,
        }
    }

    fn get(&mut self, v: &TyVar) -> TyVar {
        if let Some(n) = self.map.get(v) {
            return n.clone();
        }
        let name = TyVar(greek_name(self.next));
        self.next += 1;
        self.map.insert(v.clone(), name.clone());
        name
    }

    fn vtype(&mut self, t: &VType) -> VType {
        match t {
            VType::Var(v) => VType::Var(self.get(v)),
            VType::Meta(_) | VType::Bool | VType::Unit | VType::Int => t.clone(),
            VType::Arrow(dom, cod) => VType::Arrow(
                Box::new(self.vtype(dom)),
                Box::new(self.ctype(cod)),
            ),
            VType::HandlerT(c1, c2) => VType::HandlerT(
                Box::new(self.ctype(c1)),
                Box::new(self.ctype(c2)),
            ),
        }
    }

    fn ctype(&mut self, c: &CType) -> CType {
        let carrier = self.vtype(&c.carrier);
        let effects = self.effects(&c.effects);
        CType { carrier, effects }
    }

    fn effects(&mut self, e: &Effects) -> Effects {
        match e {
            Effects::Untracked => Effects::Untracked,
            Effects::Coarse(row) => Effects::Coarse(row.clone()),
            Effects::Local(row) => Effects::Local(LocalRow {
                entries: row
                    .entries
                    .iter()
                    .map(|(op, ot)| {
                        (
                            op.clone(),
                            OpType {
                                param: self.vtype(&ot.param),
                                result: self.vtype(&ot.result),
                            },
                        )
                    })
                    .collect(),
                tail: row.tail,
            }),
        }
    }
}

/// Renames type variables to α, β, γ, ... in first-occurrence order. Two
/// schemes are alpha-equivalent iff their canonical forms are equal.
pub fn canonical_scheme(s: &Scheme) -> Scheme {
    let mut renamer = Renamer::new();
    let body = renamer.vtype(&s.body);
    let vars = s
        .vars
        .iter()
        .filter_map(|v| renamer.map.get(v).cloned())
        .collect();
    Scheme { vars, body }
}

/// Canonically renames a scheme together with its top-level annotation, so
/// that shared variables keep shared names.
pub fn canonical_typed(s: &Scheme, e: &Effects) -> (Scheme, Effects) {
    let mut renamer = Renamer::new();
    let body = renamer.vtype(&s.body);
    let effects = renamer.effects(e);
    let vars = s
        .vars
        .iter()
        .filter_map(|v| renamer.map.get(v).cloned())
        .collect();
    (Scheme { vars, body }, effects)
}

pub fn schemes_alpha_eq(a: &Scheme, b: &Scheme) -> bool {
    canonical_scheme(a) == canonical_scheme(b)
}

/// Renders a finalized scheme with canonical names.
pub fn render_scheme(s: &Scheme) -> String {
    let s = canonical_scheme(s);
    let subst = Subst::new();
    if s.vars.is_empty() {
        subst.render_vtype(&s.body)
    } else {
        let vars: Vec<String> = s.vars.iter().map(|v| v.to_string()).collect();
        format!("∀{}. {}", vars.join(", "), subst.render_vtype(&s.body))
    }
}

/// Renders a finalized scheme and annotation, canonically renamed together.
pub fn render_typed(s: &Scheme, e: &Effects) -> String {
    let (s, e) = canonical_typed(s, e);
    let subst = Subst::new();
    let body = if s.vars.is_empty() {
        subst.render_vtype(&s.body)
    } else {
        let vars: Vec<String> = s.vars.iter().map(|v| v.to_string()).collect();
        format!("∀{}. {}", vars.join(", "), subst.render_vtype(&s.body))
    };
    let eff = subst.render_effects(&e);
    if eff.is_empty() || eff == "{}" {
        body
    } else {
        format!("{body} ! {eff}")
    }
}

/// A scheme built from source text pieces for tests and expectations:
/// parses nothing, takes the structure directly.
pub fn scheme(vars: &[&str], body: VType) -> Scheme {
    Scheme {
        vars: vars.iter().map(|v| TyVar(v.to_string())).collect(),
        body,
    }
}

/// Kinding entry point for schemes against an explicit type-variable
/// environment; re-exported for the public API.
pub fn kind_check(theta: &BTreeSet<TyVar>, s: &Scheme) -> TypeResult<()> {
    kind_check_scheme(theta, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parse::parse_computation;
    use crate::types::{CType, Effects, LocalRow, OpType, VType};

    fn tv(s: &str) -> VType {
        VType::Var(TyVar(s.to_string()))
    }

    fn arrow(dom: VType, cod: VType, eff: Effects) -> VType {
        VType::Arrow(Box::new(dom), Box::new(CType::new(cod, eff)))
    }

    fn local_sig(entries: &[(&str, VType, VType)]) -> Effects {
        let mut map = BTreeMap::new();
        for (op, a, b) in entries {
            map.insert(
                OpName::new(*op),
                OpType {
                    param: a.clone(),
                    result: b.clone(),
                },
            );
        }
        Effects::Local(LocalRow::closed(map))
    }

    fn handler_t(a: VType, ain: Effects, b: VType, bout: Effects) -> VType {
        VType::HandlerT(
            Box::new(CType::new(a, ain)),
            Box::new(CType::new(b, bout)),
        )
    }

    fn local_program(body: Computation) -> Program {
        Program {
            mode: Mode::Local,
            signature: None,
            body,
        }
    }

    #[test]
    fn id_id_gets_the_polymorphic_identity_without_a_value_restriction() {
        let typed = check_program(&local_program(fixtures::id_id())).unwrap();
        let expected = scheme(
            &["a"],
            arrow(tv("a"), tv("a"), Effects::empty_local()),
        );
        assert_eq!(typed.bindings.len(), 2);
        for (name, sch) in &typed.bindings {
            assert!(
                schemes_alpha_eq(sch, &expected),
                "binding {name} got {}",
                render_scheme(sch)
            );
        }
        assert!(schemes_alpha_eq(&typed.scheme, &expected));
    }

    /// `get` is conventionally the nullary read operation, taking a unit
    /// parameter; the clause ignores its argument, so inference assigns
    /// the parameter its own quantified variable. The conventional scheme
    /// is the instance at unit.
    fn conventional_state_scheme() -> Scheme {
        scheme(
            &["a", "b"],
            handler_t(
                tv("a"),
                local_sig(&[
                    ("get", VType::Unit, tv("b")),
                    ("set", tv("b"), VType::Unit),
                ]),
                arrow(tv("b"), tv("a"), Effects::empty_local()),
                Effects::empty_local(),
            ),
        )
    }

    #[test]
    fn state_handler_scheme_and_its_conventional_instance() {
        let h = Value::Handler(Box::new(fixtures::handler_state()));
        let got = infer_value_scheme(Mode::Local, None, &h).unwrap();
        let general = scheme(
            &["a", "p", "b"],
            handler_t(
                tv("a"),
                local_sig(&[("get", tv("p"), tv("b")), ("set", tv("b"), VType::Unit)]),
                arrow(tv("b"), tv("a"), Effects::empty_local()),
                Effects::empty_local(),
            ),
        );
        assert!(
            schemes_alpha_eq(&got, &general),
            "got {}",
            render_scheme(&got)
        );
        assert!(scheme_subsumes(&got, &conventional_state_scheme()));
    }

    #[test]
    fn read_only_handler_scheme_and_its_conventional_instance() {
        let h = Value::Handler(Box::new(fixtures::handler_read_only()));
        let got = infer_value_scheme(Mode::Local, None, &h).unwrap();
        let general = scheme(
            &["a", "p", "b", "g"],
            handler_t(
                tv("a"),
                local_sig(&[("get", tv("p"), tv("b")), ("set", tv("g"), VType::Unit)]),
                arrow(tv("b"), tv("a"), Effects::empty_local()),
                Effects::empty_local(),
            ),
        );
        assert!(
            schemes_alpha_eq(&got, &general),
            "got {}",
            render_scheme(&got)
        );
        let conventional = scheme(
            &["a", "b", "g"],
            handler_t(
                tv("a"),
                local_sig(&[
                    ("get", VType::Unit, tv("b")),
                    ("set", tv("g"), VType::Unit),
                ]),
                arrow(tv("b"), tv("a"), Effects::empty_local()),
                Effects::empty_local(),
            ),
        );
        assert!(scheme_subsumes(&got, &conventional));
    }

    #[test]
    fn statesim_of_toggle_checks_at_bool_with_no_effects() {
        let c = crate::eval::statesim(&fixtures::toggle(), &Value::True);
        let typed = check_program(&local_program(c)).unwrap();
        assert!(schemes_alpha_eq(&typed.scheme, &Scheme::mono(VType::Bool)));
        match &typed.effects {
            Effects::Local(row) => assert!(row.entries.is_empty()),
            other => panic!("unexpected effects {other:?}"),
        }
    }

    #[test]
    fn mismatched_state_uses_are_rejected_by_the_state_handler() {
        // set at unit, get at bool: H_ST forces both onto one state type.
        let body = parse_computation(
            "with handler { return x -> return (fun _ -> return x) \
               | get(_; k) -> return (fun s -> (k s) s) \
               | set(s'; k) -> return (fun _ -> (k ()) s') } \
             handle (set (); if get () then return () else return ())",
        )
        .unwrap();
        let err = check_program(&local_program(body)).unwrap_err();
        assert!(
            matches!(err.kind, TypeErrorKind::Mismatch(_, _)),
            "got {err}"
        );
    }

    #[test]
    fn mismatched_state_uses_are_accepted_by_the_read_only_handler() {
        let body = parse_computation(
            "do f <- (with handler { return x -> return (fun _ -> return x) \
               | get(_; k) -> return (fun s -> (k s) s) \
               | set(_; k) -> return (fun s -> (k ()) s) } \
             handle (set (); if get () then return () else return ())) in f true",
        )
        .unwrap();
        let typed = check_program(&local_program(body.clone())).unwrap();
        assert!(schemes_alpha_eq(&typed.scheme, &Scheme::mono(VType::Unit)));
        // And it runs without a runtime error.
        let trace = crate::eval::run(&body, 500);
        assert!(matches!(trace.outcome, crate::eval::Outcome::Value(Value::Unit)));
    }

    #[test]
    fn diverging_handler_is_an_occurs_check_failure_in_local_mode() {
        let body = fixtures::diverging_program_body();
        let err = check_program(&local_program(body)).unwrap_err();
        assert!(
            matches!(err.kind, TypeErrorKind::OccursCheck(_, _)),
            "got {err}"
        );
    }

    #[test]
    fn diverging_handler_is_accepted_in_coarse_mode() {
        let h = Value::Handler(Box::new(fixtures::handler_diverging()));
        let got =
            infer_value_scheme(Mode::Coarse, Some(fixtures::diverging_signature()), &h).unwrap();
        let mut ops = BTreeSet::new();
        ops.insert(OpName::new("op"));
        // Most general: ∀α. (α!{op}) ⇒ (α!∅); the judgement
        // (unit!{op}) ⇒ (unit!∅) is its instance at unit.
        let general = scheme(
            &["a"],
            handler_t(
                tv("a"),
                Effects::Coarse(CoarseRow::closed(ops.clone())),
                tv("a"),
                Effects::empty_coarse(),
            ),
        );
        assert!(
            schemes_alpha_eq(&got, &general),
            "got {}",
            render_scheme(&got)
        );
        let conventional = scheme(
            &[],
            handler_t(
                VType::Unit,
                Effects::Coarse(CoarseRow::closed(ops)),
                VType::Unit,
                Effects::empty_coarse(),
            ),
        );
        assert!(scheme_subsumes(&got, &conventional));

        let program = Program {
            mode: Mode::Coarse,
            signature: Some(fixtures::diverging_signature()),
            body: fixtures::diverging_program_body(),
        };
        let typed = check_program(&program).unwrap();
        assert!(schemes_alpha_eq(&typed.scheme, &Scheme::mono(VType::Unit)));
    }

    #[test]
    fn diverging_handler_is_accepted_in_none_mode() {
        let program = Program {
            mode: Mode::None,
            signature: Some(fixtures::diverging_signature()),
            body: fixtures::diverging_program_body(),
        };
        check_program(&program).unwrap();
    }

    #[test]
    fn coarse_mode_rejects_undeclared_operations() {
        let program = Program {
            mode: Mode::Coarse,
            signature: Some(fixtures::diverging_signature()),
            body: parse_computation("other ()").unwrap(),
        };
        let err = check_program(&program).unwrap_err();
        assert!(matches!(err.kind, TypeErrorKind::UndeclaredOperation(_)));
    }

    #[test]
    fn generalization_stops_at_the_effect_signature() {
        // do g <- op((); y. return y) in return g: the result type of op
        // occurs in the annotation, so g stays monomorphic.
        let body = parse_computation("do g <- op((); y. return y) in return g").unwrap();
        let typed = check_program(&local_program(body)).unwrap();
        let (name, sch) = &typed.bindings[0];
        assert_eq!(name.as_str(), "g");
        assert!(sch.vars.is_empty(), "got {}", render_scheme(sch));
        // The annotation mentions the same variable as the result type.
        match (&typed.scheme.body, &typed.effects) {
            (VType::Var(a), Effects::Local(row)) => {
                let entry = row.entries.get(&OpName::new("op")).unwrap();
                assert_eq!(entry.result, VType::Var(a.clone()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polymorphic_binding_instantiates_at_two_types() {
        // The H_ST handler handles computations with different state types
        // when bound polymorphically.
        let body = parse_computation(
            "do h <- return (handler { return x -> return (fun _ -> return x) \
               | get(_; k) -> return (fun s -> (k s) s) \
               | set(s'; k) -> return (fun _ -> (k ()) s') }) \
             in do a <- (with h handle set ()) () in (with h handle get ()) true",
        )
        .unwrap();
        let typed = check_program(&local_program(body)).unwrap();
        assert!(schemes_alpha_eq(&typed.scheme, &Scheme::mono(VType::Bool)));
    }

    #[test]
    fn unbound_variables_are_reported() {
        let body = Computation::Return(Value::Var(Var::new("nope")));
        let err = check_program(&local_program(body)).unwrap_err();
        assert!(matches!(err.kind, TypeErrorKind::UnboundVariable(_)));
    }

    #[test]
    fn dyn_example_checks_at_int() {
        let typed = dyn_check(&fixtures::dyn_example_params(), &fixtures::dyn_example()).unwrap();
        assert!(schemes_alpha_eq(&typed.scheme, &Scheme::mono(VType::Int)));
    }

    #[test]
    fn dyn_signature_mismatch_is_rejected() {
        let c = crate::parse::parse_dyn_computation("dlet $u = 1 in $u := true").unwrap();
        let err = dyn_check(&fixtures::dyn_example_params(), &c).unwrap_err();
        assert!(matches!(err.kind, TypeErrorKind::Mismatch(_, _)));
    }

    #[test]
    fn dyn_unknown_parameter_is_rejected() {
        let c = crate::parse::parse_dyn_computation("!$missing").unwrap();
        let err = dyn_check(&fixtures::dyn_example_params(), &c).unwrap_err();
        assert!(matches!(err.kind, TypeErrorKind::ParamNotInSignature(_)));
    }

    #[test]
    fn generalize_skips_environment_variables() {
        // generalize(env with x : m, m, ∅) quantifies nothing.
        let mut ctx = InferCtx::new(Mode::Local, None);
        let m = ctx.subst.fresh_meta();
        let mut env = TypeEnv::new();
        env.bind_mono(Var::new("x"), m.clone());
        let sch = ctx.generalize(&env, &m, &Effects::empty_local());
        assert!(sch.vars.is_empty());
    }

    #[test]
    fn identity_handler_forwards_everything() {
        // handler { return x -> return x } has an empty handled map and
        // type ∀α. α!∅ ⇒ α!∅; operations pass through at the use site.
        let h = parse_computation("return (handler { return x -> return x })").unwrap();
        let h = match h {
            Computation::Return(v) => v,
            _ => unreachable!(),
        };
        let got = infer_value_scheme(Mode::Local, None, &h).unwrap();
        let expected = scheme(
            &["a"],
            handler_t(
                tv("a"),
                Effects::empty_local(),
                tv("a"),
                Effects::empty_local(),
            ),
        );
        assert!(
            schemes_alpha_eq(&got, &expected),
            "got {}",
            render_scheme(&got)
        );

        // Forwarding merge at the use site: the operation survives into
        // the program's annotation.
        let program = local_program(
            parse_computation(
                "with handler { return x -> return x } handle op(true; y. return y)",
            )
            .unwrap(),
        );
        let typed = check_program(&program).unwrap();
        match &typed.effects {
            Effects::Local(row) => {
                assert!(row.entries.contains_key(&OpName::new("op")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn specialized_state_handler_scheme() {
        // infer_handler(state_handler_for(p)) is the state-handler scheme
        // over the renamed operations.
        let p = crate::syntax::Param::new("p");
        let h = Value::Handler(Box::new(crate::translate::state_handler_for(&p)));
        let got = infer_value_scheme(Mode::Local, None, &h).unwrap();
        let general = scheme(
            &["a", "p", "b"],
            handler_t(
                tv("a"),
                local_sig(&[("get_p", tv("p"), tv("b")), ("set_p", tv("b"), VType::Unit)]),
                arrow(tv("b"), tv("a"), Effects::empty_local()),
                Effects::empty_local(),
            ),
        );
        assert!(
            schemes_alpha_eq(&got, &general),
            "got {}",
            render_scheme(&got)
        );
        let conventional = scheme(
            &["a", "b"],
            handler_t(
                tv("a"),
                local_sig(&[
                    ("get_p", VType::Unit, tv("b")),
                    ("set_p", tv("b"), VType::Unit),
                ]),
                arrow(tv("b"), tv("a"), Effects::empty_local()),
                Effects::empty_local(),
            ),
        );
        assert!(scheme_subsumes(&got, &conventional));
    }

    #[test]
    fn render_uses_canonical_names() {
        let typed = check_program(&local_program(fixtures::id_id())).unwrap();
        assert_eq!(render_scheme(&typed.scheme), "∀α. α → α");
    }
}
