//! Types, effect signatures, schemes, substitutions and unification.
//!
//! Effect signatures are rows: a finite map of operation entries plus an
//! optional open tail used only during inference. Tails let the latent
//! effects of a not-yet-known function stay undetermined until use; they
//! are never quantified over (there is no effect polymorphism) and every
//! tail still open at the end of inference is closed to the empty
//! signature. Occurs checks traverse signature entries, which is exactly
//! what rejects the recursive signatures the local system rules out.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::syntax::{OpName, Param, TypeExpr, Var};

/// A unification variable for value types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetaId(pub u32);

/// A unification variable for whole signatures (a row tail).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub u32);

/// A named (rigid) type variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TyVar(pub String);

impl fmt::Display for TyVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Value types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VType {
    Var(TyVar),
    Meta(MetaId),
    Bool,
    Unit,
    Int,
    Arrow(Box<VType>, Box<CType>),
    /// `C ⇒ D`: handles computations of type `C` into computations of
    /// type `D`. The input effects list exactly the handled operations.
    HandlerT(Box<CType>, Box<CType>),
}

/// Computation types: a carrier value type with an effect annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CType {
    pub carrier: VType,
    pub effects: Effects,
}

impl CType {
    pub fn new(carrier: VType, effects: Effects) -> Self {
        CType { carrier, effects }
    }
}

/// Parameter and result type of one operation entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpType {
    pub param: VType,
    pub result: VType,
}

/// A local-mode signature row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocalRow {
    pub entries: BTreeMap<OpName, OpType>,
    pub tail: Option<RowId>,
}

impl LocalRow {
    pub fn closed(entries: BTreeMap<OpName, OpType>) -> Self {
        LocalRow {
            entries,
            tail: None,
        }
    }

    pub fn empty() -> Self {
        LocalRow::default()
    }
}

/// A coarse-mode signature row: operation names only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoarseRow {
    pub ops: BTreeSet<OpName>,
    pub tail: Option<RowId>,
}

impl CoarseRow {
    pub fn closed(ops: BTreeSet<OpName>) -> Self {
        CoarseRow { ops, tail: None }
    }

    pub fn empty() -> Self {
        CoarseRow::default()
    }
}

/// Effect annotations, shaped per typing mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effects {
    /// Mode `none`: effects are not tracked at all.
    Untracked,
    Coarse(CoarseRow),
    Local(LocalRow),
}

impl Effects {
    pub fn empty_local() -> Effects {
        Effects::Local(LocalRow::empty())
    }

    pub fn empty_coarse() -> Effects {
        Effects::Coarse(CoarseRow::empty())
    }
}

/// A type scheme `∀ᾱ. A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheme {
    pub vars: Vec<TyVar>,
    pub body: VType,
}

impl Scheme {
    pub fn mono(body: VType) -> Scheme {
        Scheme {
            vars: Vec::new(),
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeErrorKind {
    Mismatch(String, String),
    OccursCheck(String, String),
    UnboundVariable(Var),
    UnboundTypeVariable(TyVar),
    UndeclaredOperation(OpName),
    ParamNotInSignature(Param),
    NonGroundSignature(Param),
    Other(String),
}

/// A type error with the constraint provenance collected on the way down.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub context: Vec<String>,
}

impl TypeError {
    pub fn new(kind: TypeErrorKind) -> Self {
        TypeError {
            kind,
            context: Vec::new(),
        }
    }
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TypeErrorKind::Mismatch(a, b) => write!(f, "cannot unify `{a}` with `{b}`")?,
            TypeErrorKind::OccursCheck(m, t) => {
                write!(f, "occurs check: `{m}` occurs in `{t}`")?
            }
            TypeErrorKind::UnboundVariable(x) => write!(f, "unbound variable `{x}`")?,
            TypeErrorKind::UnboundTypeVariable(a) => {
                write!(f, "unbound type variable `{a}`")?
            }
            TypeErrorKind::UndeclaredOperation(op) => {
                write!(f, "operation `{op}` is not in the global signature")?
            }
            TypeErrorKind::ParamNotInSignature(p) => {
                write!(f, "parameter `${p}` is not in the parameter signature")?
            }
            TypeErrorKind::NonGroundSignature(p) => write!(
                f,
                "parameter `${p}` has a function type; the annotated translation requires a ground signature"
            )?,
            TypeErrorKind::Other(msg) => write!(f, "{msg}")?,
        }
        for ctx in &self.context {
            write!(f, "\n  while {ctx}")?;
        }
        Ok(())
    }
}

pub type TypeResult<T> = Result<T, TypeError>;

/// The substitution: solved type metas and solved row tails, plus the
/// fresh-variable counters. Inference threads one of these through.
#[derive(Debug, Clone, Default)]
pub struct Subst {
    tys: HashMap<u32, VType>,
    local_rows: HashMap<u32, LocalRow>,
    coarse_rows: HashMap<u32, CoarseRow>,
    next_meta: u32,
    next_row: u32,
}

impl Subst {
    pub fn new() -> Self {
        Subst::default()
    }

    pub fn fresh_meta(&mut self) -> VType {
        let id = self.next_meta;
        self.next_meta += 1;
        VType::Meta(MetaId(id))
    }

    pub fn fresh_row(&mut self) -> RowId {
        let id = self.next_row;
        self.next_row += 1;
        RowId(id)
    }

    pub fn open_local(&mut self) -> LocalRow {
        LocalRow {
            entries: BTreeMap::new(),
            tail: Some(self.fresh_row()),
        }
    }

    pub fn open_coarse(&mut self) -> CoarseRow {
        CoarseRow {
            ops: BTreeSet::new(),
            tail: Some(self.fresh_row()),
        }
    }

    /// Resolves the head of a type: follows meta bindings until an unbound
    /// meta or a constructor surfaces.
    pub fn head(&self, t: &VType) -> VType {
        let mut cur = t.clone();
        while let VType::Meta(m) = cur {
            match self.tys.get(&m.0) {
                Some(next) => cur = next.clone(),
                None => return VType::Meta(m),
            }
        }
        cur
    }

    /// Fully applies the substitution to a type. Open rows remain open.
    pub fn zonk_vtype(&self, t: &VType) -> VType {
        match self.head(t) {
            VType::Arrow(dom, cod) => VType::Arrow(
                Box::new(self.zonk_vtype(&dom)),
                Box::new(self.zonk_ctype(&cod)),
            ),
            VType::HandlerT(c1, c2) => VType::HandlerT(
                Box::new(self.zonk_ctype(&c1)),
                Box::new(self.zonk_ctype(&c2)),
            ),
            other => other,
        }
    }

    pub fn zonk_ctype(&self, c: &CType) -> CType {
        CType {
            carrier: self.zonk_vtype(&c.carrier),
            effects: self.zonk_effects(&c.effects),
        }
    }

    pub fn zonk_effects(&self, e: &Effects) -> Effects {
        match e {
            Effects::Untracked => Effects::Untracked,
            Effects::Coarse(row) => {
                let (ops, tail) = self.chase_coarse(row);
                Effects::Coarse(CoarseRow { ops, tail })
            }
            Effects::Local(row) => {
                let (entries, tail) = self.chase_local(row);
                let entries = entries
                    .into_iter()
                    .map(|(op, ot)| {
                        (
                            op,
                            OpType {
                                param: self.zonk_vtype(&ot.param),
                                result: self.zonk_vtype(&ot.result),
                            },
                        )
                    })
                    .collect();
                Effects::Local(LocalRow { entries, tail })
            }
        }
    }

    /// Follows a local row's tail chain, collecting entries. Duplicate
    /// entries are deduplicated first-wins; use [`Subst::resolve_local`]
    /// wherever duplicates must be unified instead.
    fn chase_local(&self, row: &LocalRow) -> (BTreeMap<OpName, OpType>, Option<RowId>) {
        let mut entries = row.entries.clone();
        let mut tail = row.tail;
        while let Some(id) = tail {
            match self.local_rows.get(&id.0) {
                None => return (entries, Some(id)),
                Some(next) => {
                    for (op, ot) in &next.entries {
                        entries.entry(op.clone()).or_insert_with(|| ot.clone());
                    }
                    tail = next.tail;
                }
            }
        }
        (entries, None)
    }

    /// All entries along a local row's chain, duplicates included, plus the
    /// final unbound tail. The exhaustive view used by occurs checks and
    /// free-variable collection.
    fn chain_local(&self, row: &LocalRow) -> (Vec<(OpName, OpType)>, Option<RowId>) {
        let mut entries: Vec<(OpName, OpType)> = row
            .entries
            .iter()
            .map(|(op, ot)| (op.clone(), ot.clone()))
            .collect();
        let mut tail = row.tail;
        while let Some(id) = tail {
            match self.local_rows.get(&id.0) {
                None => return (entries, Some(id)),
                Some(next) => {
                    entries.extend(
                        next.entries
                            .iter()
                            .map(|(op, ot)| (op.clone(), ot.clone())),
                    );
                    tail = next.tail;
                }
            }
        }
        (entries, None)
    }

    fn size(&self) -> usize {
        self.tys.len() + self.local_rows.len() + self.coarse_rows.len()
    }

    /// Normalizes a local row: chases the tail chain and unifies duplicate
    /// entries for the same operation, restarting whenever unification
    /// extends the substitution (a binding may splice new entries into the
    /// chain being walked).
    pub fn resolve_local(&mut self, row: &LocalRow) -> TypeResult<LocalRow> {
        loop {
            let before = self.size();
            let (all, tail) = self.chain_local(row);
            let mut entries: BTreeMap<OpName, OpType> = BTreeMap::new();
            for (op, ot) in all {
                match entries.get(&op) {
                    Some(existing) => {
                        let existing = existing.clone();
                        self.unify(&existing.param, &ot.param)?;
                        self.unify(&existing.result, &ot.result)?;
                    }
                    None => {
                        entries.insert(op, ot);
                    }
                }
            }
            if self.size() == before {
                return Ok(LocalRow { entries, tail });
            }
        }
    }

    fn chase_coarse(&self, row: &CoarseRow) -> (BTreeSet<OpName>, Option<RowId>) {
        let mut ops = row.ops.clone();
        let mut tail = row.tail;
        while let Some(id) = tail {
            match self.coarse_rows.get(&id.0) {
                None => return (ops, Some(id)),
                Some(next) => {
                    ops.extend(next.ops.iter().cloned());
                    tail = next.tail;
                }
            }
        }
        (ops, None)
    }

    /// Applies the substitution and closes any remaining open rows to the
    /// empty signature; used on final results.
    pub fn close_vtype(&self, t: &VType) -> VType {
        match self.zonk_vtype(t) {
            VType::Arrow(dom, cod) => VType::Arrow(
                Box::new(self.close_vtype(&dom)),
                Box::new(self.close_ctype(&cod)),
            ),
            VType::HandlerT(c1, c2) => VType::HandlerT(
                Box::new(self.close_ctype(&c1)),
                Box::new(self.close_ctype(&c2)),
            ),
            other => other,
        }
    }

    pub fn close_ctype(&self, c: &CType) -> CType {
        CType {
            carrier: self.close_vtype(&c.carrier),
            effects: self.close_effects(&c.effects),
        }
    }

    pub fn close_effects(&self, e: &Effects) -> Effects {
        match self.zonk_effects(e) {
            Effects::Untracked => Effects::Untracked,
            Effects::Coarse(row) => Effects::Coarse(CoarseRow {
                ops: row.ops,
                tail: None,
            }),
            Effects::Local(row) => {
                let entries = row
                    .entries
                    .into_iter()
                    .map(|(op, ot)| {
                        (
                            op,
                            OpType {
                                param: self.close_vtype(&ot.param),
                                result: self.close_vtype(&ot.result),
                            },
                        )
                    })
                    .collect();
                Effects::Local(LocalRow {
                    entries,
                    tail: None,
                })
            }
        }
    }

    // ----- occurs checks -----

    fn meta_occurs(&self, m: MetaId, t: &VType) -> bool {
        match self.head(t) {
            VType::Meta(m2) => m2 == m,
            VType::Arrow(dom, cod) => {
                self.meta_occurs(m, &dom) || self.meta_occurs_ctype(m, &cod)
            }
            VType::HandlerT(c1, c2) => {
                self.meta_occurs_ctype(m, &c1) || self.meta_occurs_ctype(m, &c2)
            }
            _ => false,
        }
    }

    fn meta_occurs_ctype(&self, m: MetaId, c: &CType) -> bool {
        if self.meta_occurs(m, &c.carrier) {
            return true;
        }
        match &c.effects {
            Effects::Untracked | Effects::Coarse(_) => false,
            Effects::Local(row) => {
                let (entries, _) = self.chain_local(row);
                entries
                    .iter()
                    .any(|(_, ot)| self.meta_occurs(m, &ot.param) || self.meta_occurs(m, &ot.result))
            }
        }
    }

    fn row_occurs_in_local(&self, r: RowId, row: &LocalRow) -> bool {
        let (entries, tail) = self.chain_local(row);
        if tail == Some(r) {
            return true;
        }
        entries
            .iter()
            .any(|(_, ot)| self.row_occurs_in_vtype(r, &ot.param) || self.row_occurs_in_vtype(r, &ot.result))
    }

    fn row_occurs_in_vtype(&self, r: RowId, t: &VType) -> bool {
        match self.head(t) {
            VType::Arrow(dom, cod) => {
                self.row_occurs_in_vtype(r, &dom) || self.row_occurs_in_ctype(r, &cod)
            }
            VType::HandlerT(c1, c2) => {
                self.row_occurs_in_ctype(r, &c1) || self.row_occurs_in_ctype(r, &c2)
            }
            _ => false,
        }
    }

    fn row_occurs_in_ctype(&self, r: RowId, c: &CType) -> bool {
        if self.row_occurs_in_vtype(r, &c.carrier) {
            return true;
        }
        match &c.effects {
            Effects::Untracked | Effects::Coarse(_) => false,
            Effects::Local(row) => self.row_occurs_in_local(r, row),
        }
    }

    fn coarse_row_occurs(&self, r: RowId, row: &CoarseRow) -> bool {
        let (_, tail) = self.chase_coarse(row);
        tail == Some(r)
    }

    // ----- binding -----

    fn bind_meta(&mut self, m: MetaId, t: &VType) -> TypeResult<()> {
        if let VType::Meta(m2) = self.head(t) {
            if m2 == m {
                return Ok(());
            }
        }
        if self.meta_occurs(m, t) {
            return Err(TypeError::new(TypeErrorKind::OccursCheck(
                self.render_vtype(&VType::Meta(m)),
                self.render_vtype(t),
            )));
        }
        self.tys.insert(m.0, t.clone());
        Ok(())
    }

    fn bind_local_row(&mut self, r: RowId, row: LocalRow) -> TypeResult<()> {
        debug_assert!(!self.local_rows.contains_key(&r.0), "row rebound");
        if self.row_occurs_in_local(r, &row) {
            return Err(TypeError::new(TypeErrorKind::OccursCheck(
                format!("signature row ρ{}", r.0),
                self.render_effects(&Effects::Local(row)),
            )));
        }
        self.local_rows.insert(r.0, row);
        Ok(())
    }

    fn bind_coarse_row(&mut self, r: RowId, row: CoarseRow) -> TypeResult<()> {
        if self.coarse_row_occurs(r, &row) {
            return Err(TypeError::new(TypeErrorKind::OccursCheck(
                format!("signature row ρ{}", r.0),
                self.render_effects(&Effects::Coarse(row)),
            )));
        }
        self.coarse_rows.insert(r.0, row);
        Ok(())
    }



    // ----- unification -----

    pub fn unify(&mut self, a: &VType, b: &VType) -> TypeResult<()> {
        let a = self.head(a);
        let b = self.head(b);
        match (&a, &b) {
            (VType::Meta(m), _) => self.bind_meta(*m, &b),
            (_, VType::Meta(m)) => self.bind_meta(*m, &a),
            (VType::Var(x), VType::Var(y)) if x == y => Ok(()),
            (VType::Bool, VType::Bool)
            | (VType::Unit, VType::Unit)
            | (VType::Int, VType::Int) => Ok(()),
            (VType::Arrow(d1, c1), VType::Arrow(d2, c2)) => {
                self.unify(d1, d2)?;
                self.unify_ctype(c1, c2)
            }
            (VType::HandlerT(a1, b1), VType::HandlerT(a2, b2)) => {
                self.unify_ctype(a1, a2)?;
                self.unify_ctype(b1, b2)
            }
            _ => Err(TypeError::new(TypeErrorKind::Mismatch(
                self.render_vtype(&a),
                self.render_vtype(&b),
            ))),
        }
    }

    pub fn unify_ctype(&mut self, a: &CType, b: &CType) -> TypeResult<()> {
        self.unify(&a.carrier, &b.carrier)?;
        self.unify_effects(&a.effects, &b.effects)
    }

    pub fn unify_effects(&mut self, a: &Effects, b: &Effects) -> TypeResult<()> {
        match (a, b) {
            (Effects::Untracked, Effects::Untracked) => Ok(()),
            (Effects::Local(r1), Effects::Local(r2)) => self.unify_local_rows(r1, r2),
            (Effects::Coarse(r1), Effects::Coarse(r2)) => self.unify_coarse_rows(r1, r2),
            _ => Err(TypeError::new(TypeErrorKind::Other(
                "internal error: mixed effect representations".to_string(),
            ))),
        }
    }

    fn unify_local_rows(&mut self, r1: &LocalRow, r2: &LocalRow) -> TypeResult<()> {
        let resolved1 = self.resolve_local(r1)?;
        let resolved2 = self.resolve_local(r2)?;
        let (e1, t1) = (resolved1.entries, resolved1.tail);
        let (e2, t2) = (resolved2.entries, resolved2.tail);
        for (op, ot1) in &e1 {
            if let Some(ot2) = e2.get(op) {
                self.unify(&ot1.param, &ot2.param)?;
                self.unify(&ot1.result, &ot2.result)?;
            }
        }
        let d1: BTreeMap<OpName, OpType> = e1
            .iter()
            .filter(|(op, _)| !e2.contains_key(*op))
            .map(|(op, ot)| (op.clone(), ot.clone()))
            .collect();
        let d2: BTreeMap<OpName, OpType> = e2
            .iter()
            .filter(|(op, _)| !e1.contains_key(*op))
            .map(|(op, ot)| (op.clone(), ot.clone()))
            .collect();
        match (t1, t2) {
            (None, None) => {
                if d1.is_empty() && d2.is_empty() {
                    Ok(())
                } else {
                    Err(TypeError::new(TypeErrorKind::Mismatch(
                        self.render_effects(&Effects::Local(LocalRow::closed(e1))),
                        self.render_effects(&Effects::Local(LocalRow::closed(e2))),
                    )))
                }
            }
            (Some(t1), None) => {
                if !d1.is_empty() {
                    return Err(TypeError::new(TypeErrorKind::Mismatch(
                        self.render_effects(&Effects::Local(LocalRow {
                            entries: e1,
                            tail: Some(t1),
                        })),
                        self.render_effects(&Effects::Local(LocalRow::closed(e2))),
                    )));
                }
                self.bind_local_row(t1, LocalRow::closed(d2))
            }
            (None, Some(t2)) => {
                if !d2.is_empty() {
                    return Err(TypeError::new(TypeErrorKind::Mismatch(
                        self.render_effects(&Effects::Local(LocalRow::closed(e1))),
                        self.render_effects(&Effects::Local(LocalRow {
                            entries: e2,
                            tail: Some(t2),
                        })),
                    )));
                }
                self.bind_local_row(t2, LocalRow::closed(d1))
            }
            (Some(t1), Some(t2)) => {
                if t1 == t2 {
                    if d1.is_empty() && d2.is_empty() {
                        return Ok(());
                    }
                    let fresh = self.fresh_row();
                    let mut both = d1;
                    both.extend(d2);
                    return self.bind_local_row(
                        t1,
                        LocalRow {
                            entries: both,
                            tail: Some(fresh),
                        },
                    );
                }
                let fresh = self.fresh_row();
                self.bind_local_row(
                    t1,
                    LocalRow {
                        entries: d2,
                        tail: Some(fresh),
                    },
                )?;
                self.bind_local_row(
                    t2,
                    LocalRow {
                        entries: d1,
                        tail: Some(fresh),
                    },
                )
            }
        }
    }

    fn unify_coarse_rows(&mut self, r1: &CoarseRow, r2: &CoarseRow) -> TypeResult<()> {
        let (o1, t1) = self.chase_coarse(r1);
        let (o2, t2) = self.chase_coarse(r2);
        let d1: BTreeSet<OpName> = o1.difference(&o2).cloned().collect();
        let d2: BTreeSet<OpName> = o2.difference(&o1).cloned().collect();
        match (t1, t2) {
            (None, None) => {
                if d1.is_empty() && d2.is_empty() {
                    Ok(())
                } else {
                    Err(TypeError::new(TypeErrorKind::Mismatch(
                        self.render_effects(&Effects::Coarse(CoarseRow::closed(o1))),
                        self.render_effects(&Effects::Coarse(CoarseRow::closed(o2))),
                    )))
                }
            }
            (Some(t1), None) => {
                if !d1.is_empty() {
                    return Err(TypeError::new(TypeErrorKind::Mismatch(
                        self.render_effects(&Effects::Coarse(CoarseRow {
                            ops: o1,
                            tail: Some(t1),
                        })),
                        self.render_effects(&Effects::Coarse(CoarseRow::closed(o2))),
                    )));
                }
                self.bind_coarse_row(t1, CoarseRow::closed(d2))
            }
            (None, Some(t2)) => {
                if !d2.is_empty() {
                    return Err(TypeError::new(TypeErrorKind::Mismatch(
                        self.render_effects(&Effects::Coarse(CoarseRow::closed(o1))),
                        self.render_effects(&Effects::Coarse(CoarseRow {
                            ops: o2,
                            tail: Some(t2),
                        })),
                    )));
                }
                self.bind_coarse_row(t2, CoarseRow::closed(d1))
            }
            (Some(t1), Some(t2)) => {
                if t1 == t2 {
                    if d1.is_empty() && d2.is_empty() {
                        return Ok(());
                    }
                    let fresh = self.fresh_row();
                    let both = d1.union(&d2).cloned().collect();
                    return self.bind_coarse_row(
                        t1,
                        CoarseRow {
                            ops: both,
                            tail: Some(fresh),
                        },
                    );
                }
                let fresh = self.fresh_row();
                self.bind_coarse_row(
                    t1,
                    CoarseRow {
                        ops: d2,
                        tail: Some(fresh),
                    },
                )?;
                self.bind_coarse_row(
                    t2,
                    CoarseRow {
                        ops: d1,
                        tail: Some(fresh),
                    },
                )
            }
        }
    }

    // ----- merging (the widening used at do/if joins and forwarding) -----

    /// Union of two signatures: shared operations must agree, tails are
    /// kept so later growth propagates.
    pub fn merge_effects(&mut self, a: &Effects, b: &Effects) -> TypeResult<Effects> {
        match (a, b) {
            (Effects::Untracked, Effects::Untracked) => Ok(Effects::Untracked),
            (Effects::Local(r1), Effects::Local(r2)) => {
                Ok(Effects::Local(self.merge_local_rows(r1, r2)?))
            }
            (Effects::Coarse(r1), Effects::Coarse(r2)) => {
                Ok(Effects::Coarse(self.merge_coarse_rows(r1, r2)))
            }
            _ => Err(TypeError::new(TypeErrorKind::Other(
                "internal error: mixed effect representations".to_string(),
            ))),
        }
    }

    pub fn merge_local_rows(&mut self, r1: &LocalRow, r2: &LocalRow) -> TypeResult<LocalRow> {
        let resolved1 = self.resolve_local(r1)?;
        let resolved2 = self.resolve_local(r2)?;
        let (e1, t1) = (resolved1.entries, resolved1.tail);
        let (e2, t2) = (resolved2.entries, resolved2.tail);
        let mut entries = e1;
        for (op, ot2) in e2 {
            match entries.get(&op) {
                Some(ot1) => {
                    let ot1 = ot1.clone();
                    self.unify(&ot1.param, &ot2.param)?;
                    self.unify(&ot1.result, &ot2.result)?;
                }
                None => {
                    entries.insert(op, ot2);
                }
            }
        }
        let tail = match (t1, t2) {
            (None, None) => None,
            (Some(t), None) | (None, Some(t)) => Some(t),
            (Some(t1), Some(t2)) => {
                if t1 == t2 {
                    Some(t1)
                } else {
                    let fresh = self.fresh_row();
                    self.bind_local_row(
                        t1,
                        LocalRow {
                            entries: BTreeMap::new(),
                            tail: Some(fresh),
                        },
                    )?;
                    self.bind_local_row(
                        t2,
                        LocalRow {
                            entries: BTreeMap::new(),
                            tail: Some(fresh),
                        },
                    )?;
                    Some(fresh)
                }
            }
        };
        Ok(LocalRow { entries, tail })
    }

    pub fn merge_coarse_rows(&mut self, r1: &CoarseRow, r2: &CoarseRow) -> CoarseRow {
        let (o1, t1) = self.chase_coarse(r1);
        let (o2, t2) = self.chase_coarse(r2);
        let mut ops = o1;
        ops.extend(o2);
        let tail = match (t1, t2) {
            (None, None) => None,
            (Some(t), None) | (None, Some(t)) => Some(t),
            (Some(t1), Some(t2)) => {
                if t1 == t2 {
                    Some(t1)
                } else {
                    let fresh = self.fresh_row();
                    // Tying both tails to one fresh row cannot fail the
                    // occurs check: coarse rows carry no types.
                    self.coarse_rows.insert(
                        t1.0,
                        CoarseRow {
                            ops: BTreeSet::new(),
                            tail: Some(fresh),
                        },
                    );
                    self.coarse_rows.insert(
                        t2.0,
                        CoarseRow {
                            ops: BTreeSet::new(),
                            tail: Some(fresh),
                        },
                    );
                    Some(fresh)
                }
            }
        };
        CoarseRow { ops, tail }
    }

    // ----- schemes -----

    /// Replaces the quantified variables by fresh metas.
    pub fn instantiate(&mut self, scheme: &Scheme) -> VType {
        let mut map = HashMap::new();
        for v in &scheme.vars {
            map.insert(v.clone(), self.fresh_meta());
        }
        instantiate_vtype(&scheme.body, &map)
    }

    /// Free metas of a fully zonked view of the type, in first-occurrence
    /// order. Signature entries count; open tails do not (they are rows).
    pub fn free_metas_vtype(&self, t: &VType, out: &mut Vec<MetaId>) {
        match self.head(t) {
            VType::Meta(m) => {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
            VType::Arrow(dom, cod) => {
                self.free_metas_vtype(&dom, out);
                self.free_metas_ctype(&cod, out);
            }
            VType::HandlerT(c1, c2) => {
                self.free_metas_ctype(&c1, out);
                self.free_metas_ctype(&c2, out);
            }
            _ => {}
        }
    }

    pub fn free_metas_ctype(&self, c: &CType, out: &mut Vec<MetaId>) {
        self.free_metas_vtype(&c.carrier, out);
        self.free_metas_effects(&c.effects, out);
    }

    pub fn free_metas_effects(&self, e: &Effects, out: &mut Vec<MetaId>) {
        if let Effects::Local(row) = e {
            let (entries, _) = self.chain_local(row);
            for (_, ot) in &entries {
                self.free_metas_vtype(&ot.param, out);
                self.free_metas_vtype(&ot.result, out);
            }
        }
    }

    pub fn free_metas_scheme(&self, s: &Scheme, out: &mut Vec<MetaId>) {
        // Quantified variables are rigid names, not metas, so the body's
        // metas are exactly the scheme's free metas.
        self.free_metas_vtype(&s.body, out);
    }

    // ----- conversion of source-level type expressions -----

    /// Converts a source type for the given effect discipline; arrows get
    /// fresh open rows (coarse) or no annotation (untracked).
    pub fn type_from_expr(&mut self, te: &TypeExpr, shape: EffectShape) -> VType {
        match te {
            TypeExpr::Bool => VType::Bool,
            TypeExpr::Unit => VType::Unit,
            TypeExpr::Int => VType::Int,
            TypeExpr::Arrow(a, b) => {
                let dom = self.type_from_expr(a, shape);
                let cod = self.type_from_expr(b, shape);
                let effects = match shape {
                    EffectShape::Untracked => Effects::Untracked,
                    EffectShape::CoarseOpen => Effects::Coarse(self.open_coarse()),
                };
                VType::Arrow(Box::new(dom), Box::new(CType::new(cod, effects)))
            }
        }
    }

    // ----- rendering -----

    pub fn render_vtype(&self, t: &VType) -> String {
        format!("{}", DisplayVType(self, t))
    }

    pub fn render_ctype(&self, c: &CType) -> String {
        format!("{}", DisplayCType(self, c))
    }

    pub fn render_effects(&self, e: &Effects) -> String {
        match self.zonk_effects(e) {
            Effects::Untracked => String::new(),
            Effects::Coarse(row) => {
                let mut parts: Vec<String> =
                    row.ops.iter().map(|op| op.as_str().to_string()).collect();
                if row.tail.is_some() {
                    parts.push("..".to_string());
                }
                format!("{{{}}}", parts.join(", "))
            }
            Effects::Local(row) => {
                let mut parts: Vec<String> = row
                    .entries
                    .iter()
                    .map(|(op, ot)| {
                        format!(
                            "{op} : {} → {}",
                            self.render_vtype(&ot.param),
                            self.render_vtype(&ot.result)
                        )
                    })
                    .collect();
                if row.tail.is_some() {
                    parts.push("..".to_string());
                }
                format!("{{{}}}", parts.join(", "))
            }
        }
    }
}

/// How arrows read from source types are annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectShape {
    Untracked,
    CoarseOpen,
}

fn instantiate_vtype(t: &VType, map: &HashMap<TyVar, VType>) -> VType {
    match t {
        VType::Var(v) => map.get(v).cloned().unwrap_or_else(|| t.clone()),
        VType::Meta(_) | VType::Bool | VType::Unit | VType::Int => t.clone(),
        VType::Arrow(dom, cod) => VType::Arrow(
            Box::new(instantiate_vtype(dom, map)),
            Box::new(instantiate_ctype(cod, map)),
        ),
        VType::HandlerT(c1, c2) => VType::HandlerT(
            Box::new(instantiate_ctype(c1, map)),
            Box::new(instantiate_ctype(c2, map)),
        ),
    }
}

fn instantiate_ctype(c: &CType, map: &HashMap<TyVar, VType>) -> CType {
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
                            param: instantiate_vtype(&ot.param, map),
                            result: instantiate_vtype(&ot.result, map),
                        },
                    )
                })
                .collect(),
            tail: row.tail,
        }),
    };
    CType {
        carrier: instantiate_vtype(&c.carrier, map),
        effects,
    }
}

/// Substitutes metas by rigid type variables; the inverse of instantiation,
/// used by generalization.
pub fn promote_metas_vtype(t: &VType, map: &HashMap<MetaId, TyVar>) -> VType {
    match t {
        VType::Meta(m) => match map.get(m) {
            Some(v) => VType::Var(v.clone()),
            None => t.clone(),
        },
        VType::Var(_) | VType::Bool | VType::Unit | VType::Int => t.clone(),
        VType::Arrow(dom, cod) => VType::Arrow(
            Box::new(promote_metas_vtype(dom, map)),
            Box::new(promote_metas_ctype(cod, map)),
        ),
        VType::HandlerT(c1, c2) => VType::HandlerT(
            Box::new(promote_metas_ctype(c1, map)),
            Box::new(promote_metas_ctype(c2, map)),
        ),
    }
}

pub fn promote_metas_ctype(c: &CType, map: &HashMap<MetaId, TyVar>) -> CType {
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
                            param: promote_metas_vtype(&ot.param, map),
                            result: promote_metas_vtype(&ot.result, map),
                        },
                    )
                })
                .collect(),
            tail: row.tail,
        }),
    };
    CType {
        carrier: promote_metas_vtype(&c.carrier, map),
        effects,
    }
}

// ----- kinding -----

/// Kinding: every type variable must be bound by the environment; schemes
/// extend the environment with their binders.
pub fn kind_check_vtype(theta: &BTreeSet<TyVar>, t: &VType) -> TypeResult<()> {
    match t {
        VType::Var(v) => {
            if theta.contains(v) {
                Ok(())
            } else {
                Err(TypeError::new(TypeErrorKind::UnboundTypeVariable(v.clone())))
            }
        }
        VType::Meta(_) | VType::Bool | VType::Unit | VType::Int => Ok(()),
        VType::Arrow(dom, cod) => {
            kind_check_vtype(theta, dom)?;
            kind_check_ctype(theta, cod)
        }
        VType::HandlerT(c1, c2) => {
            kind_check_ctype(theta, c1)?;
            kind_check_ctype(theta, c2)
        }
    }
}

pub fn kind_check_ctype(theta: &BTreeSet<TyVar>, c: &CType) -> TypeResult<()> {
    kind_check_vtype(theta, &c.carrier)?;
    kind_check_effects(theta, &c.effects)
}

pub fn kind_check_effects(theta: &BTreeSet<TyVar>, e: &Effects) -> TypeResult<()> {
    match e {
        Effects::Untracked | Effects::Coarse(_) => Ok(()),
        Effects::Local(row) => {
            for ot in row.entries.values() {
                kind_check_vtype(theta, &ot.param)?;
                kind_check_vtype(theta, &ot.result)?;
            }
            Ok(())
        }
    }
}

pub fn kind_check_scheme(theta: &BTreeSet<TyVar>, s: &Scheme) -> TypeResult<()> {
    let mut extended = theta.clone();
    extended.extend(s.vars.iter().cloned());
    kind_check_vtype(&extended, &s.body)
}

// ----- display -----

struct DisplayVType<'a>(&'a Subst, &'a VType);
struct DisplayCType<'a>(&'a Subst, &'a CType);

impl fmt::Display for DisplayVType<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_vtype(f, self.0, self.1, 0)
    }
}

impl fmt::Display for DisplayCType<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_ctype(f, self.0, self.1)
    }
}

fn effects_visible(subst: &Subst, e: &Effects) -> bool {
    match subst.zonk_effects(e) {
        Effects::Untracked => false,
        Effects::Coarse(row) => !row.ops.is_empty(),
        Effects::Local(row) => !row.entries.is_empty(),
    }
}

fn fmt_vtype(f: &mut fmt::Formatter<'_>, subst: &Subst, t: &VType, prec: u8) -> fmt::Result {
    match subst.head(t) {
        VType::Var(v) => write!(f, "{v}"),
        VType::Meta(m) => write!(f, "?{}", m.0),
        VType::Bool => write!(f, "bool"),
        VType::Unit => write!(f, "unit"),
        VType::Int => write!(f, "int"),
        VType::Arrow(dom, cod) => {
            if prec >= 2 {
                write!(f, "(")?;
            }
            fmt_vtype(f, subst, &dom, 2)?;
            write!(f, " → ")?;
            fmt_ctype(f, subst, &cod)?;
            if prec >= 2 {
                write!(f, ")")?;
            }
            Ok(())
        }
        VType::HandlerT(c1, c2) => {
            if prec >= 1 {
                write!(f, "(")?;
            }
            fmt_ctype(f, subst, &c1)?;
            write!(f, " ⇒ ")?;
            fmt_ctype(f, subst, &c2)?;
            if prec >= 1 {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

fn fmt_ctype(f: &mut fmt::Formatter<'_>, subst: &Subst, c: &CType) -> fmt::Result {
    if effects_visible(subst, &c.effects) {
        let needs_parens = matches!(
            subst.head(&c.carrier),
            VType::Arrow(_, _) | VType::HandlerT(_, _)
        );
        if needs_parens {
            write!(f, "(")?;
            fmt_vtype(f, subst, &c.carrier, 0)?;
            write!(f, ")")?;
        } else {
            fmt_vtype(f, subst, &c.carrier, 2)?;
        }
        write!(f, "!{}", subst.render_effects(&c.effects))
    } else {
        fmt_vtype(f, subst, &c.carrier, 1)
    }
}
