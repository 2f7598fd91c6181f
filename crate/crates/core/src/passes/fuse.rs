//! Operator fusion.
//!
//! Within each A-normal-form block, operator calls form a dataflow DAG with
//! a virtual sink standing for every other use. Nodes are grouped by their
//! immediate post-dominator, and every group becomes a local function
//! marked `Primitive`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::analysis::free_vars;
use crate::anf::function_to_anf;
use crate::attrs::{AttrValue, Attrs, PRIMITIVE};
use crate::expr::{build_lets, flatten_lets, Clause, Expr, ExprKind, Function, Param, Var};
use crate::module::Module;
use crate::op::{FusionPattern, OpRegistry};
use crate::ty::Type;

use super::util::subst;
use super::PassError;

/// Operator-call DAG of one block. Nodes are numbered in binding order,
/// which is topological; index `len()` is the sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataflowDag {
    pub patterns: Vec<FusionPattern>,
    /// Consumers of each node, ascending, possibly including the sink.
    pub succs: Vec<Vec<usize>>,
}

impl DataflowDag {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn sink(&self) -> usize {
        self.patterns.len()
    }

    /// DAG of the top-level bindings of `block`, with the variable bound
    /// by each node.
    pub fn of_block(registry: &OpRegistry, block: &Expr) -> (DataflowDag, Vec<Var>) {
        let (bindings, tail) = flatten_lets(block);
        let (dag, nodes) = build(registry, &bindings, &tail);
        let vars = nodes.iter().map(|&i| bindings[i].0.clone()).collect();
        (dag, vars)
    }

    /// Immediate post-dominator of every node. Nodes without consumers are
    /// post-dominated by the sink alone.
    pub fn post_dominators(&self) -> Vec<usize> {
        let n = self.len();
        let sink = self.sink();
        let mut ipdom = alloc::vec![sink; n + 1];
        let mut depth = alloc::vec![0usize; n + 1];
        for v in (0..n).rev() {
            let mut acc: Option<usize> = None;
            for &s in &self.succs[v] {
                acc = Some(match acc {
                    None => s,
                    Some(a) => {
                        let (mut a, mut b) = (a, s);
                        while a != b {
                            if depth[a] >= depth[b] {
                                a = ipdom[a];
                            } else {
                                b = ipdom[b];
                            }
                        }
                        a
                    }
                });
            }
            let d = acc.unwrap_or(sink);
            ipdom[v] = d;
            depth[v] = depth[d] + 1;
        }
        ipdom.truncate(n);
        ipdom
    }

    /// Group of every node, named by the group's last (anchor) node.
    pub fn partition(&self, max_depth: Option<usize>) -> Vec<usize> {
        let n = self.len();
        let sink = self.sink();
        let ipdom = self.post_dominators();
        let mut group: Vec<usize> = (0..n).collect();
        let mut size = alloc::vec![1usize; n];
        let mut complex = alloc::vec![0usize; n];
        for v in 0..n {
            if self.patterns[v] == FusionPattern::ComplexOutFusable {
                complex[v] = 1;
            }
        }
        for v in (0..n).rev() {
            let d = ipdom[v];
            if d == sink {
                continue;
            }
            let p = self.patterns[v];
            if matches!(p, FusionPattern::Opaque | FusionPattern::Reduction) || self.patterns[d] > FusionPattern::Reduction {
                continue;
            }
            let root = group[d];
            let is_complex = usize::from(p == FusionPattern::ComplexOutFusable);
            if complex[root] + is_complex > 1 || max_depth.is_some_and(|k| size[root] + 1 > k) {
                continue;
            }
            let between = self.between(v, d);
            if between.iter().all(|&m| self.patterns[m] <= FusionPattern::Injective && group[m] == root) {
                group[v] = root;
                size[root] += 1;
                complex[root] += is_complex;
            }
        }
        group
    }

    /// Nodes strictly between `from` and `to` on some path.
    fn between(&self, from: usize, to: usize) -> Vec<usize> {
        let n = self.len();
        let mut fwd = alloc::vec![false; n + 1];
        fwd[from] = true;
        for v in from..n {
            if fwd[v] {
                for &s in &self.succs[v] {
                    fwd[s] = true;
                }
            }
        }
        let mut back = alloc::vec![false; n + 1];
        back[to] = true;
        for v in (from..to).rev() {
            if self.succs[v].iter().any(|&s| back[s]) {
                back[v] = true;
            }
        }
        (from + 1..to).filter(|&v| fwd[v] && back[v]).collect()
    }
}

type Bindings = Vec<(Var, Option<Type>, Expr)>;

fn build(registry: &OpRegistry, bindings: &Bindings, tail: &Expr) -> (DataflowDag, Vec<usize>) {
    let mut node_of = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut patterns = Vec::new();
    for (i, (var, _, value)) in bindings.iter().enumerate() {
        if let Some((op, _)) = value.as_op_call() {
            let pattern = registry.lookup(op).map_or(FusionPattern::Opaque, |d| d.pattern);
            node_of.insert(var.id(), nodes.len());
            nodes.push(i);
            patterns.push(pattern);
        }
    }
    let sink = nodes.len();
    let mut succs: Vec<Vec<usize>> = alloc::vec![Vec::new(); sink];
    let mut edge = |from: usize, to: usize| {
        if !succs[from].contains(&to) {
            succs[from].push(to);
        }
    };
    for (i, (_, _, value)) in bindings.iter().enumerate() {
        let consumer = node_of.get(&bindings[i].0.id()).copied().filter(|_| value.as_op_call().is_some());
        for v in free_vars(value) {
            if let Some(&p) = node_of.get(&v.id()) {
                edge(p, consumer.unwrap_or(sink));
            }
        }
    }
    for v in free_vars(tail) {
        if let Some(&p) = node_of.get(&v.id()) {
            edge(p, sink);
        }
    }
    for s in succs.iter_mut() {
        s.sort_unstable();
    }
    (DataflowDag { patterns, succs }, nodes)
}

/// Groups fusable operators into primitive functions. `max_depth` bounds
/// the number of operators per group.
pub fn fuse_ops(m: &Module, max_depth: Option<usize>) -> Result<Module, PassError> {
    let registry = m.registry.clone();
    Ok(m.map_globals(|_, f| {
        let f = function_to_anf(f);
        Function { body: fuse_block(&registry, &f.body, max_depth), ..f }
    }))
}

fn fuse_block(registry: &OpRegistry, block: &Expr, max_depth: Option<usize>) -> Expr {
    let (bindings, tail) = flatten_lets(block);
    let (dag, nodes) = build(registry, &bindings, &tail);
    let group = dag.partition(max_depth);
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &g) in group.iter().enumerate() {
        members.entry(g).or_default().push(k);
    }
    let node_at: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out = Vec::new();
    for (i, (var, ann, value)) in bindings.iter().enumerate() {
        match node_at.get(&i) {
            Some(&k) if group[k] == k => {
                let group_bindings: Bindings = members[&k]
                    .iter()
                    .map(|&mk| {
                        let (v, a, e) = &bindings[nodes[mk]];
                        (v.clone(), a.clone(), e.clone())
                    })
                    .collect();
                out.push((var.clone(), ann.clone(), primitive_call(group_bindings, var)));
            }
            Some(_) => {}
            None => out.push((var.clone(), ann.clone(), nested(registry, value, max_depth))),
        }
    }
    build_lets(out, nested(registry, &tail, max_depth))
}

/// `(fn(params, Primitive=1) { members; root })(free vars)`.
fn primitive_call(group: Bindings, root: &Var) -> Expr {
    let body = build_lets(group, Expr::var(root));
    let free = free_vars(&body);
    let params: Vec<Var> = free.iter().map(|v| Var::fresh(v.name())).collect();
    let map: BTreeMap<usize, Expr> = free.iter().zip(&params).map(|(v, p)| (v.id(), Expr::var(p))).collect();
    let mut func = Function::new(params.iter().map(|p| Param { var: p.clone(), annotation: None }).collect(), subst(&body, &map));
    func.attrs = Attrs::new().with(PRIMITIVE, AttrValue::Int(1));
    Expr::call(Expr::function(func), free.iter().map(Expr::var).collect())
}

/// Fuses inside the blocks nested in `e` (branches, clauses, function
/// bodies); existing primitive functions are left alone.
fn nested(registry: &OpRegistry, e: &Expr, max_depth: Option<usize>) -> Expr {
    match e.kind() {
        ExprKind::Function(f) if f.is_primitive() => e.clone(),
        ExprKind::Function(f) => {
            e.rebuild(ExprKind::Function(Function { body: fuse_block(registry, &f.body, max_depth), ..f.clone() }))
        }
        ExprKind::If(c, t, f) => e.rebuild(ExprKind::If(
            c.clone(),
            fuse_block(registry, t, max_depth),
            fuse_block(registry, f, max_depth),
        )),
        ExprKind::Match(s, clauses) => e.rebuild(ExprKind::Match(
            s.clone(),
            clauses
                .iter()
                .map(|cl| Clause { pattern: cl.pattern.clone(), body: fuse_block(registry, &cl.body, max_depth) })
                .collect(),
        )),
        _ => e.map_children(&mut |c| nested(registry, c, max_depth)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtype::BaseType;
    use crate::ty::const_shape;
    use alloc::vec;
    use FusionPattern::*;

    fn dag(patterns: Vec<FusionPattern>, succs: Vec<Vec<usize>>) -> DataflowDag {
        DataflowDag { patterns, succs }
    }

    #[test]
    fn chain_conv_bias_relu() {
        let d = dag(vec![ComplexOutFusable, Broadcast, Elementwise], vec![vec![1], vec![2], vec![3]]);
        assert_eq!(d.post_dominators(), vec![1, 2, 3]);
        assert_eq!(d.partition(None), vec![2, 2, 2]);
        assert_eq!(d.partition(Some(2)), vec![0, 2, 2]);
    }

    #[test]
    fn diamond() {
        // 0 -> {1, 2} -> 3
        let d = dag(vec![Elementwise, Elementwise, Elementwise, Broadcast], vec![vec![1, 2], vec![3], vec![3], vec![4]]);
        assert_eq!(d.post_dominators(), vec![3, 3, 3, 4]);
        assert_eq!(d.partition(None), vec![3, 3, 3, 3]);
    }

    #[test]
    fn conv_conv_and_opaque() {
        let d = dag(vec![ComplexOutFusable, ComplexOutFusable], vec![vec![1], vec![2]]);
        assert_eq!(d.partition(None), vec![0, 1]);
        let d = dag(vec![Elementwise, Opaque, Elementwise], vec![vec![1], vec![2], vec![3]]);
        assert_eq!(d.partition(None), vec![0, 1, 2]);
        // Escaping value: post-dominated by the sink only.
        let d = dag(vec![Elementwise, Elementwise], vec![vec![1, 2], vec![2]]);
        assert_eq!(d.partition(None), vec![0, 1]);
    }

    #[test]
    fn fuses_program_into_one_primitive() {
        let t = |dims: &[usize]| Some(Type::tensor(const_shape(dims), BaseType::F32));
        let (x, w, b) = (Var::fresh("x"), Var::fresh("w"), Var::fresh("b"));
        let conv = Expr::call_op("conv2d", vec![Expr::var(&x), Expr::var(&w)], Attrs::new());
        let body = Expr::call_op("relu", vec![Expr::call_op("bias_add", vec![conv, Expr::var(&b)], Attrs::new())], Attrs::new());
        let params = vec![
            Param { var: x, annotation: t(&[1, 2, 4, 4]) },
            Param { var: w, annotation: t(&[3, 2, 1, 1]) },
            Param { var: b, annotation: t(&[3]) },
        ];
        let mut m = Module::new();
        m.add_global("main", Function::new(params, body)).unwrap();
        let fused = fuse_ops(&m, None).unwrap();
        let (bindings, _) = flatten_lets(&fused.globals["main"].body);
        assert_eq!(bindings.len(), 1);
        let ExprKind::Call(c) = bindings[0].2.kind() else { panic!() };
        let ExprKind::Function(f) = c.callee.kind() else { panic!() };
        assert!(f.is_primitive());
        assert_eq!(flatten_lets(&f.body).0.len(), 3);
        assert!(crate::infer::infer(&fused).is_ok());
        // Idempotent.
        let again = fuse_ops(&fused, None).unwrap();
        assert!(crate::analysis::alpha_equal_fn(&again.globals["main"], &fused.globals["main"]));
    }
}
