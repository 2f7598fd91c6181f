//! Union-find unifier integrated with a bipartite variable/relation
//! dependency graph, and the relation work queue.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::attrs::Attrs;
use crate::expr::Loc;
use crate::op::{apply_relation, OpRegistry, RelationOutcome};
use crate::ty::{Dim, FuncType, TensorType, Type};

/// A solver unknown: a type variable or a dimension variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKey {
    Type(u32),
    Dim(u32),
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Type(id) => write!(f, "?t{id}"),
            VarKey::Dim(id) => write!(f, "?d{id}"),
        }
    }
}

/// First conflicting pair found by unification.
#[derive(Debug, Clone, PartialEq)]
pub enum Conflict {
    Types(Type, Type),
    Dims(Dim, Dim),
    Occurs(VarKey, Type),
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conflict::Types(a, b) => write!(f, "{a} vs {b}"),
            Conflict::Dims(a, b) => write!(f, "dimension {a} vs {b}"),
            Conflict::Occurs(v, t) => write!(f, "{v} occurs in {t}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelationNode {
    pub relation: String,
    /// Operator (or other source) the instance came from, for diagnostics.
    pub origin: String,
    pub types: Vec<Type>,
    pub attrs: Attrs,
    pub loc: Loc,
    pub solved: bool,
}

/// One variable-assignment event observed while solving.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Promotion {
    /// Relation whose result caused the assignment.
    pub relation: usize,
    pub changed: Vec<VarKey>,
    /// Unsolved relations adjacent to the changed variables.
    pub adjacent: Vec<usize>,
    /// Queue contents right after re-prioritization.
    pub queue_after: Vec<usize>,
}

/// Instrumentation of a solver run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolverTrace {
    /// Relation ids in the order they were dequeued.
    pub visits: Vec<usize>,
    /// Discharged relations with the index of the visit that discharged them.
    pub discharged: Vec<(usize, usize)>,
    pub promotions: Vec<Promotion>,
}

impl SolverTrace {
    /// True if some relation was dequeued after being discharged.
    pub fn revisits_solved(&self) -> bool {
        self.discharged.iter().any(|&(r, at)| self.visits[at + 1..].contains(&r))
    }

    /// True if every promotion left all adjacent relations ahead of every
    /// non-adjacent one.
    pub fn queue_discipline_holds(&self) -> bool {
        self.promotions.iter().all(|p| {
            let k = p.adjacent.len();
            p.queue_after.len() >= k && p.queue_after[..k].iter().all(|r| p.adjacent.contains(r))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    RelationFailed { relation: usize, reason: String },
    Underconstrained { relations: Vec<usize>, vars: Vec<VarKey> },
}

pub struct Solver<'r> {
    registry: &'r OpRegistry,
    tparent: Vec<u32>,
    tbind: Vec<Option<Type>>,
    dparent: Vec<u32>,
    dbind: Vec<Option<Dim>>,
    pub relations: Vec<RelationNode>,
    deps: BTreeMap<VarKey, BTreeSet<usize>>,
    queue: VecDeque<usize>,
    changed: Vec<VarKey>,
    pub trace: SolverTrace,
}

impl<'r> Solver<'r> {
    pub fn new(registry: &'r OpRegistry) -> Solver<'r> {
        Solver {
            registry,
            tparent: Vec::new(),
            tbind: Vec::new(),
            dparent: Vec::new(),
            dbind: Vec::new(),
            relations: Vec::new(),
            deps: BTreeMap::new(),
            queue: VecDeque::new(),
            changed: Vec::new(),
            trace: SolverTrace::default(),
        }
    }

    pub fn fresh_type(&mut self) -> Type {
        let id = self.tparent.len() as u32;
        self.tparent.push(id);
        self.tbind.push(None);
        Type::Infer(id)
    }

    pub fn fresh_dim(&mut self) -> Dim {
        let id = self.dparent.len() as u32;
        self.dparent.push(id);
        self.dbind.push(None);
        Dim::Infer(id)
    }

    /// Makes sure ids used by externally built types exist.
    pub fn reserve(&mut self, t: &Type) {
        t.visit(
            &mut |t| {
                if let Type::Infer(id) = t {
                    while self.tparent.len() <= *id as usize {
                        self.fresh_type();
                    }
                }
            },
            &mut |_| {},
        );
        let mut dims = Vec::new();
        t.visit(&mut |_| {}, &mut |d| {
            if let Dim::Infer(id) = d {
                dims.push(*id);
            }
        });
        for id in dims {
            while self.dparent.len() <= id as usize {
                self.fresh_dim();
            }
        }
    }

    fn find_t(&self, mut x: u32) -> u32 {
        while self.tparent[x as usize] != x {
            x = self.tparent[x as usize];
        }
        x
    }

    fn find_d(&self, mut x: u32) -> u32 {
        while self.dparent[x as usize] != x {
            x = self.dparent[x as usize];
        }
        x
    }

    /// Follows bindings at the head of a type only.
    fn shallow(&self, t: &Type) -> Type {
        let mut cur = t.clone();
        while let Type::Infer(x) = cur {
            let root = self.find_t(x);
            match &self.tbind[root as usize] {
                Some(b) => cur = b.clone(),
                None => return Type::Infer(root),
            }
        }
        cur
    }

    pub fn resolve_dim(&self, d: &Dim) -> Dim {
        match d {
            Dim::Infer(x) => {
                let root = self.find_d(*x);
                match &self.dbind[root as usize] {
                    Some(b) => self.resolve_dim(b),
                    None => Dim::Infer(root),
                }
            }
            _ => d.clone(),
        }
    }

    /// Substitutes every bound variable, recursively.
    pub fn resolve(&self, t: &Type) -> Type {
        t.map(
            &mut |t| match t {
                Type::Infer(_) => {
                    let s = self.shallow(t);
                    Some(match s {
                        Type::Infer(_) => s,
                        other => self.resolve(&other),
                    })
                }
                _ => None,
            },
            &mut |d| self.resolve_dim(d),
        )
    }

    /// Unbound variables in `t`, in order of appearance.
    pub fn vars_of(&self, t: &Type) -> Vec<VarKey> {
        let r = self.resolve(t);
        let mut out = Vec::new();
        let mut dims = Vec::new();
        r.visit(
            &mut |t| {
                if let Type::Infer(x) = t {
                    out.push(VarKey::Type(*x));
                }
            },
            &mut |d| {
                if let Dim::Infer(x) = d {
                    dims.push(VarKey::Dim(*x));
                }
            },
        );
        out.extend(dims);
        let mut seen = BTreeSet::new();
        out.retain(|v| seen.insert(*v));
        out
    }

    fn note_change(&mut self, v: VarKey) {
        self.changed.push(v);
    }

    fn bind_type(&mut self, root: u32, t: Type) {
        let key = VarKey::Type(root);
        let rels = self.deps.get(&key).cloned().unwrap_or_default();
        for v in self.vars_of(&t) {
            self.deps.entry(v).or_default().extend(rels.iter().copied());
        }
        self.tbind[root as usize] = Some(t);
        self.note_change(key);
    }

    fn bind_dim(&mut self, root: u32, d: Dim) {
        let key = VarKey::Dim(root);
        if let Dim::Infer(other) = d {
            let rels = self.deps.get(&key).cloned().unwrap_or_default();
            self.deps.entry(VarKey::Dim(other)).or_default().extend(rels);
            self.dparent[root as usize] = other;
        } else {
            self.dbind[root as usize] = Some(d);
        }
        self.note_change(key);
    }

    fn unify_dim(&mut self, a: &Dim, b: &Dim) -> Result<(), Conflict> {
        let a = self.resolve_dim(a);
        let b = self.resolve_dim(b);
        match (&a, &b) {
            (Dim::Infer(x), Dim::Infer(y)) if x == y => Ok(()),
            (Dim::Infer(x), _) => {
                self.bind_dim(*x, b.clone());
                Ok(())
            }
            (_, Dim::Infer(y)) => {
                self.bind_dim(*y, a.clone());
                Ok(())
            }
            (Dim::Any, _) | (_, Dim::Any) => Ok(()),
            (x, y) if x == y => Ok(()),
            _ => Err(Conflict::Dims(a, b)),
        }
    }

    fn occurs(&self, x: u32, t: &Type) -> bool {
        self.vars_of(t).contains(&VarKey::Type(x))
    }

    /// Unifies two types, recording every variable it assigns.
    pub fn unify(&mut self, a: &Type, b: &Type) -> Result<(), Conflict> {
        let a = self.shallow(a);
        let b = self.shallow(b);
        match (&a, &b) {
            (Type::Infer(x), Type::Infer(y)) if x == y => Ok(()),
            (Type::Infer(x), Type::Infer(y)) => {
                let key = VarKey::Type(*x);
                let rels = self.deps.get(&key).cloned().unwrap_or_default();
                self.deps.entry(VarKey::Type(*y)).or_default().extend(rels);
                self.tparent[*x as usize] = *y;
                self.note_change(key);
                Ok(())
            }
            (Type::Infer(x), t) | (t, Type::Infer(x)) => {
                if self.occurs(*x, t) {
                    return Err(Conflict::Occurs(VarKey::Type(*x), self.resolve(t)));
                }
                self.bind_type(*x, t.clone());
                Ok(())
            }
            (Type::Tensor(p), Type::Tensor(q)) => {
                if p.dtype != q.dtype || p.shape.len() != q.shape.len() {
                    return Err(Conflict::Types(self.resolve(&a), self.resolve(&b)));
                }
                for (x, y) in p.shape.iter().zip(&q.shape) {
                    self.unify_dim(x, y)?;
                }
                Ok(())
            }
            (Type::Tuple(p), Type::Tuple(q)) if p.len() == q.len() => {
                for (x, y) in p.iter().zip(q) {
                    self.unify(x, y)?;
                }
                Ok(())
            }
            (Type::Func(f), Type::Func(g)) if f.args.len() == g.args.len() => {
                for (x, y) in f.args.iter().zip(&g.args) {
                    self.unify(x, y)?;
                }
                self.unify(&f.ret, &g.ret)
            }
            (Type::Ref(x), Type::Ref(y)) => self.unify(x, y),
            (Type::Call { head: h1, args: a1 }, Type::Call { head: h2, args: a2 }) if h1 == h2 && a1.len() == a2.len() => {
                for (x, y) in a1.iter().zip(a2) {
                    self.unify(x, y)?;
                }
                Ok(())
            }
            (Type::Var(n), Type::Var(m)) if n == m => Ok(()),
            _ => Err(Conflict::Types(self.resolve(&a), self.resolve(&b))),
        }
    }

    /// Registers a relation instance and enqueues it.
    pub fn add_relation(&mut self, relation: &str, origin: &str, types: Vec<Type>, attrs: Attrs, loc: Loc) -> usize {
        let id = self.relations.len();
        for t in &types {
            for v in self.vars_of(t) {
                self.deps.entry(v).or_default().insert(id);
            }
        }
        self.relations.push(RelationNode {
            relation: String::from(relation),
            origin: String::from(origin),
            types,
            attrs,
            loc,
            solved: false,
        });
        self.queue.push_back(id);
        id
    }

    fn adjacent(&self, changed: &[VarKey]) -> Vec<usize> {
        let mut out = BTreeSet::new();
        for v in changed {
            if let Some(rels) = self.deps.get(v) {
                out.extend(rels.iter().copied().filter(|&r| !self.relations[r].solved));
            }
        }
        out.into_iter().collect()
    }

    fn discharge(&mut self, r: usize) {
        self.relations[r].solved = true;
        let at = self.trace.visits.len() - 1;
        self.trace.discharged.push((r, at));
    }

    /// Runs the queue to fixpoint.
    pub fn solve(&mut self) -> Result<(), SolveError> {
        self.changed.clear();
        let mut stall = 0usize;
        while let Some(r) = self.queue.pop_front() {
            if self.relations[r].solved {
                continue;
            }
            self.trace.visits.push(r);
            let node = &self.relations[r];
            let rel = self
                .registry
                .relation(&node.relation)
                .ok_or_else(|| SolveError::RelationFailed { relation: r, reason: alloc::format!("unknown relation {}", node.relation) })?
                .clone();
            let types: Vec<Type> = node.types.iter().map(|t| self.resolve(t)).collect();
            let attrs = node.attrs.clone();
            let mut progress = false;
            match apply_relation(&rel, &types, &attrs) {
                RelationOutcome::Holds => {
                    self.discharge(r);
                    progress = true;
                }
                RelationOutcome::Fails(reason) => return Err(SolveError::RelationFailed { relation: r, reason }),
                RelationOutcome::Progress(assignments) => {
                    self.changed.clear();
                    for (slot, t) in assignments {
                        let Some(current) = types.get(slot) else {
                            return Err(SolveError::RelationFailed { relation: r, reason: alloc::format!("no slot {slot}") });
                        };
                        if let Err(c) = self.unify(current, &t) {
                            return Err(SolveError::RelationFailed { relation: r, reason: alloc::format!("{c}") });
                        }
                    }
                    let changed = core::mem::take(&mut self.changed);
                    if !changed.is_empty() {
                        progress = true;
                    }
                    let now: Vec<Type> = self.relations[r].types.iter().map(|t| self.resolve(t)).collect();
                    if now.iter().all(Type::is_resolved) {
                        match apply_relation(&rel, &now, &attrs) {
                            RelationOutcome::Holds => {
                                self.discharge(r);
                                progress = true;
                            }
                            RelationOutcome::Fails(reason) => return Err(SolveError::RelationFailed { relation: r, reason }),
                            RelationOutcome::Progress(_) => unreachable!("resolved types always decide"),
                        }
                    }
                    if !self.relations[r].solved {
                        self.queue.push_back(r);
                    }
                    if !changed.is_empty() {
                        let mut adjacent = self.adjacent(&changed);
                        adjacent.retain(|&q| q != r);
                        self.queue.retain(|q| !adjacent.contains(q));
                        for &a in adjacent.iter().rev() {
                            self.queue.push_front(a);
                        }
                        self.trace.promotions.push(Promotion {
                            relation: r,
                            changed,
                            adjacent,
                            queue_after: self.queue.iter().copied().collect(),
                        });
                    }
                }
            }
            if progress {
                stall = 0;
            } else {
                stall += 1;
                if stall >= self.queue.len() {
                    let relations: Vec<usize> = self.queue.iter().copied().collect();
                    let mut vars = Vec::new();
                    for &q in &relations {
                        for t in &self.relations[q].types {
                            for v in self.vars_of(t) {
                                if !vars.contains(&v) {
                                    vars.push(v);
                                }
                            }
                        }
                    }
                    self.queue.clear();
                    return Err(SolveError::Underconstrained { relations, vars });
                }
            }
        }
        Ok(())
    }
}

/// Merges two types that unify, keeping `Any` wherever either side has it.
pub(crate) fn merge_any(a: &Type, b: &Type) -> Type {
    match (a, b) {
        (Type::Tensor(p), Type::Tensor(q)) if p.shape.len() == q.shape.len() => Type::Tensor(TensorType {
            shape: p
                .shape
                .iter()
                .zip(&q.shape)
                .map(|(x, y)| if matches!(x, Dim::Any) || matches!(y, Dim::Any) { Dim::Any } else { x.clone() })
                .collect(),
            dtype: p.dtype,
        }),
        (Type::Tuple(p), Type::Tuple(q)) if p.len() == q.len() => Type::Tuple(p.iter().zip(q).map(|(x, y)| merge_any(x, y)).collect()),
        (Type::Func(f), Type::Func(g)) if f.args.len() == g.args.len() => Type::Func(Arc::new(FuncType {
            type_params: f.type_params.clone(),
            args: f.args.iter().zip(&g.args).map(|(x, y)| merge_any(x, y)).collect(),
            ret: merge_any(&f.ret, &g.ret),
            relations: f.relations.clone(),
        })),
        (Type::Ref(x), Type::Ref(y)) => Type::Ref(Box::new(merge_any(x, y))),
        (Type::Call { head, args: a1 }, Type::Call { args: a2, .. }) if a1.len() == a2.len() => {
            Type::Call { head: head.clone(), args: a1.iter().zip(a2).map(|(x, y)| merge_any(x, y)).collect() }
        }
        _ => a.clone(),
    }
}
