use std::collections::{HashMap, HashSet};
use std::fmt::Write;
use std::sync::Arc;

use microrelay_core::exec::fmt_element;
use microrelay_core::{AdtDef, Attrs, BaseType, Expr, ExprKind, Function, Module, Pattern, Tensor, Var};

/// Constants with more elements than this go to the metadata section.
pub const INLINE_LIMIT: usize = 16;

/// Renders the user part of a module; prelude items are omitted.
pub fn print_module(m: &Module) -> String {
    let mut p = Printer::default();
    let mut out = String::new();
    for adt in m.adts.values().filter(|a| !m.prelude_names.contains(&a.name)) {
        out.push_str(&print_adt(adt));
        out.push('\n');
    }
    for (name, f) in m.user_globals() {
        p.names.clear();
        p.used.clear();
        out.push_str(&format!("def @{name}{}\n\n", p.function_tail(f, 0)));
    }
    if !p.meta.is_empty() {
        out.push_str("metadata {\n");
        for t in &p.meta {
            out.push_str(&format!("  {},\n", const_literal(t)));
        }
        out.push_str("}\n");
    }
    while out.ends_with("\n\n") {
        out.pop();
    }
    out
}

/// Renders a closed expression on its own, inlining every constant.
pub fn print_expr(e: &Expr) -> String {
    let mut p = Printer { inline_all: true, ..Printer::default() };
    p.seq(e, 0)
}

fn print_adt(adt: &AdtDef) -> String {
    let mut s = format!("type {}", adt.name);
    if !adt.type_params.is_empty() {
        s.push_str(&format!("[{}]", adt.type_params.join(", ")));
    }
    s.push_str(" {\n");
    for c in &adt.constructors {
        s.push_str("  ");
        s.push_str(&c.name);
        if !c.fields.is_empty() {
            s.push_str(&format!("({})", join(c.fields.iter().map(|t| t.to_string()))));
        }
        s.push_str(",\n");
    }
    s.push_str("}\n");
    s
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(", ")
}

fn indent(depth: usize) -> String {
    "  ".repeat(depth)
}

fn scalar_literal(t: &Tensor) -> Option<String> {
    if !t.shape.is_empty() {
        return None;
    }
    let finite = t.data.get_f64(0).is_finite();
    if !(t.dtype == BaseType::I32 || t.dtype == BaseType::BOOL || (t.dtype == BaseType::F32 && finite)) {
        return None;
    }
    let mut s = String::from("const ");
    fmt_element(&t.data, 0, t.dtype.bits(), &mut s).ok()?;
    Some(s)
}

/// `const(data, (shape), dtype)`.
pub fn const_literal(t: &Tensor) -> String {
    fn rec(t: &Tensor, dim: usize, offset: usize, s: &mut String) {
        if dim == t.shape.len() {
            let _ = fmt_element(&t.data, offset, t.dtype.bits(), s);
            return;
        }
        let inner: usize = t.shape[dim + 1..].iter().product();
        s.push('[');
        for i in 0..t.shape[dim] {
            if i > 0 {
                s.push_str(", ");
            }
            rec(t, dim + 1, offset + i * inner, s);
        }
        s.push(']');
    }
    let mut s = String::from("const(");
    rec(t, 0, 0, &mut s);
    let dims = join(t.shape.iter().map(|d| d.to_string()));
    let comma = if t.shape.len() == 1 { "," } else { "" };
    let _ = write!(s, ", ({dims}{comma}), {})", t.dtype);
    s
}

fn attr_items(attrs: &Attrs) -> impl Iterator<Item = String> + '_ {
    attrs.iter().map(|(k, v)| format!("{k}={v}"))
}

#[derive(Default)]
struct Printer {
    names: HashMap<usize, String>,
    used: HashSet<String>,
    meta: Vec<Arc<Tensor>>,
    inline_all: bool,
}

impl Printer {
    fn bind(&mut self, v: &Var) -> String {
        if let Some(n) = self.names.get(&v.id()) {
            return n.clone();
        }
        let mut base: String = v.name().chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
        if base.is_empty() {
            base.push('v');
        }
        let mut name = base.clone();
        let mut k = 1;
        while self.used.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.used.insert(name.clone());
        self.names.insert(v.id(), name.clone());
        name
    }

    fn var(&mut self, v: &Var) -> String {
        format!("%{}", self.bind(v))
    }

    fn function_tail(&mut self, f: &Function, depth: usize) -> String {
        let mut s = String::new();
        if !f.type_params.is_empty() {
            s.push_str(&format!("<{}>", f.type_params.join(", ")));
        }
        if !f.attrs.is_empty() {
            s.push_str(&format!("[{}]", join(attr_items(&f.attrs))));
        }
        let params = join(f.params.iter().map(|p| {
            let v = self.var(&p.var);
            match &p.annotation {
                Some(t) => format!("{v}: {t}"),
                None => v,
            }
        }));
        s.push_str(&format!("({params})"));
        if let Some(t) = &f.ret_type {
            s.push_str(&format!(" -> {t}"));
        }
        s.push(' ');
        s.push_str(&self.block(&f.body, depth));
        s
    }

    fn block(&mut self, e: &Expr, depth: usize) -> String {
        format!("{{\n{}{}\n{}}}", indent(depth + 1), self.seq(e, depth + 1), indent(depth))
    }

    /// A sequence: let bindings on their own lines, then the result.
    fn seq(&mut self, e: &Expr, depth: usize) -> String {
        let mut s = String::new();
        let mut cur = e.clone();
        while let ExprKind::Let(l) = cur.kind() {
            let name = self.var(&l.var);
            let value = self.expr(&l.value, depth);
            match &l.annotation {
                Some(t) => s.push_str(&format!("let {name}: {t} = {value};\n")),
                None => s.push_str(&format!("let {name} = {value};\n")),
            }
            s.push_str(&indent(depth));
            let next = l.body.clone();
            cur = next;
        }
        s.push_str(&self.expr(&cur, depth));
        s
    }

    /// An expression in a position that does not accept a bare sequence.
    fn expr(&mut self, e: &Expr, depth: usize) -> String {
        match e.kind() {
            ExprKind::Let(_) => format!("({})", self.seq(e, depth)),
            ExprKind::RefWrite(r, v) => {
                let lhs = self.unary(r, depth);
                format!("{lhs} := {}", self.expr(v, depth))
            }
            _ => self.unary(e, depth),
        }
    }

    fn unary(&mut self, e: &Expr, depth: usize) -> String {
        match e.kind() {
            ExprKind::RefRead(r) => format!("!{}", self.unary(r, depth)),
            ExprKind::Let(_) => self.expr(e, depth),
            ExprKind::RefWrite(..) => format!("({})", self.expr(e, depth)),
            _ => self.primary(e, depth),
        }
    }

    /// An operand of a call or projection.
    fn postfix_operand(&mut self, e: &Expr, depth: usize) -> String {
        match e.kind() {
            ExprKind::Let(_) => self.expr(e, depth),
            ExprKind::RefWrite(..)
            | ExprKind::RefRead(_)
            | ExprKind::Function(_)
            | ExprKind::If(..)
            | ExprKind::Match(..) => format!("({})", self.expr(e, depth)),
            _ => self.primary(e, depth),
        }
    }

    fn primary(&mut self, e: &Expr, depth: usize) -> String {
        match e.kind() {
            ExprKind::Var(v) => self.var(v),
            ExprKind::Global(n) => format!("@{n}"),
            ExprKind::Op(n) | ExprKind::Constructor(n) => n.clone(),
            ExprKind::Constant(t) => {
                if let Some(s) = scalar_literal(t) {
                    s
                } else if !self.inline_all && t.num_elements() > INLINE_LIMIT {
                    let i = match self.meta.iter().position(|m| Arc::ptr_eq(m, t)) {
                        Some(i) => i,
                        None => {
                            self.meta.push(t.clone());
                            self.meta.len() - 1
                        }
                    };
                    format!("meta[Constant][{i}]")
                } else {
                    const_literal(t)
                }
            }
            ExprKind::Call(c) => {
                let mut s = self.postfix_operand(&c.callee, depth);
                if !c.type_args.is_empty() {
                    s.push_str(&format!("<{}>", join(c.type_args.iter().map(|t| t.to_string()))));
                }
                let mut items: Vec<String> = c.args.iter().map(|a| self.expr(a, depth)).collect();
                items.extend(attr_items(&c.attrs));
                s.push_str(&format!("({})", items.join(", ")));
                s
            }
            ExprKind::Proj(t, i) => format!("{}.{i}", self.postfix_operand(t, depth)),
            ExprKind::Tuple(fields) => {
                let items: Vec<String> = fields.iter().map(|f| self.expr(f, depth)).collect();
                match items.len() {
                    1 => format!("({},)", items[0]),
                    _ => format!("({})", items.join(", ")),
                }
            }
            ExprKind::Function(f) => format!("fn {}", self.function_tail(f, depth)),
            ExprKind::If(c, t, f) => {
                let cond = self.seq(c, depth);
                let then = self.block(t, depth);
                let else_ = self.block(f, depth);
                format!("if ({cond}) {then} else {else_}")
            }
            ExprKind::Match(scrutinee, clauses) => {
                let mut s = format!("match ({}) {{\n", self.seq(scrutinee, depth));
                for c in clauses {
                    let pat = self.pattern(&c.pattern);
                    let body = self.seq(&c.body, depth + 2);
                    s.push_str(&format!("{}{pat} =>\n{}{body},\n", indent(depth + 1), indent(depth + 2)));
                }
                s.push_str(&indent(depth));
                s.push('}');
                s
            }
            ExprKind::RefNew(init) => format!("ref({})", self.expr(init, depth)),
            ExprKind::Let(_) => self.expr(e, depth),
            ExprKind::RefRead(_) | ExprKind::RefWrite(..) => format!("({})", self.expr(e, depth)),
        }
    }

    fn pattern(&mut self, p: &Pattern) -> String {
        match p {
            Pattern::Wildcard => String::from("_"),
            Pattern::Var(v) => self.var(v),
            Pattern::Constructor { name, fields } if fields.is_empty() => name.clone(),
            Pattern::Constructor { name, fields } => {
                let items: Vec<String> = fields.iter().map(|f| self.pattern(f)).collect();
                format!("{name}({})", items.join(", "))
            }
            Pattern::Tuple(fields) => {
                let items: Vec<String> = fields.iter().map(|f| self.pattern(f)).collect();
                format!("({})", items.join(", "))
            }
        }
    }
}
