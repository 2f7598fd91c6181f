use std::str::FromStr;
use std::sync::Arc;

use microrelay_core::expr::{Call, Let};
use microrelay_core::module::ModuleError;
use microrelay_core::ty::{FuncType, RelationInstance};
use microrelay_core::{
    AdtDef, AttrValue, Attrs, BaseType, Buffer, Clause, Constructor, Dim, Expr, ExprKind, Function, IrError, Module, Param,
    Pattern, Span, Tensor, Type, Var,
};

use super::lexer::{lex, LexError, Tok, Token};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("SyntaxError at {span}: expected {}, found {found}", expected.join(" or "))]
    Syntax { span: Span, expected: Vec<String>, found: String },
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("MetaIndexOutOfRange: meta[Constant][{index}] at {span}, pool has {size} entries")]
    MetaIndexOutOfRange { index: usize, size: usize, span: Span },
    #[error(transparent)]
    Module(#[from] ModuleError),
    #[error(transparent)]
    Ir(#[from] IrError),
}

impl ParseError {
    pub fn span(&self) -> Option<&Span> {
        match self {
            ParseError::Syntax { span, .. } | ParseError::MetaIndexOutOfRange { span, .. } => Some(span),
            ParseError::Lex(e) => Some(&e.span),
            _ => None,
        }
    }
}

enum Elem {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Elem {
    fn as_f64(&self) -> f64 {
        match self {
            Elem::Int(v) => *v as f64,
            Elem::Float(v) => *v,
            Elem::Bool(b) => f64::from(u8::from(*b)),
        }
    }
}

type PResult<T> = Result<T, ParseError>;

const KEYWORDS: [&str; 11] = ["let", "def", "type", "fn", "if", "else", "match", "ref", "const", "meta", "metadata"];

fn is_ctor_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase())
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scopes: Vec<(String, Var)>,
    meta: Vec<Arc<Tensor>>,
}

impl Parser {
    pub(crate) fn new(text: &str, file: &str) -> PResult<Parser> {
        let toks = lex(text, &Arc::from(file))?;
        Ok(Parser { toks, pos: 0, scopes: Vec::new(), meta: Vec::new() })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span.clone()
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn span_from(&self, start: &Span) -> Span {
        let end = &self.toks[self.pos.saturating_sub(1)].span;
        Span { end_line: end.end_line, end_col: end.end_col, ..start.clone() }
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::Syntax {
            span: self.span(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat(p) {
            Ok(())
        } else {
            self.fail(&[&format!("`{p}`")])
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{k}`")])
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(&[what]),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok(v)
            }
            _ => self.fail(&["an integer"]),
        }
    }

    fn index(&mut self) -> PResult<usize> {
        let span = self.span();
        let v = self.int()?;
        usize::try_from(v).map_err(|_| ParseError::Syntax {
            span,
            expected: vec![String::from("a non-negative integer")],
            found: format!("`{v}`"),
        })
    }

    /// Comma-separated items up to `close`, allowing a trailing comma.
    /// Returns the items and whether a trailing comma was present.
    fn list<T>(&mut self, close: &str, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<(Vec<T>, bool)> {
        let mut out = Vec::new();
        let mut trailing = false;
        while !self.eat(close) {
            out.push(item(self)?);
            trailing = false;
            if self.eat(",") {
                trailing = true;
            } else if !self.is_punct(close) {
                return self.fail(&["`,`", &format!("`{close}`")]);
            }
        }
        Ok((out, trailing))
    }

    fn bind(&mut self, name: String) -> Var {
        let v = Var::fresh(&name);
        self.scopes.push((name, v.clone()));
        v
    }

    fn lookup(&self, name: &str, span: &Span) -> PResult<Var> {
        self.scopes
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| IrError::UnboundVariable { name: name.to_string(), loc: microrelay_core::expr::Loc(Some(span.clone())) }.into())
    }

    // Module level.

    pub(crate) fn module(&mut self, m: &mut Module) -> PResult<()> {
        self.prescan_metadata()?;
        loop {
            match self.peek().clone() {
                Tok::Eof => return Ok(()),
                Tok::Ident(k) if k == "def" => {
                    self.bump();
                    let name = match self.bump() {
                        Tok::Global(n) => n,
                        _ => {
                            self.pos -= 1;
                            return self.fail(&["a global name"]);
                        }
                    };
                    let f = self.function_tail()?;
                    m.add_global(&name, f)?;
                }
                Tok::Ident(k) if k == "type" => {
                    let adt = self.adt()?;
                    m.add_adt(adt)?;
                }
                Tok::Ident(k) if k == "metadata" => {
                    self.metadata()?;
                }
                _ => return self.fail(&["`def`", "`type`", "`metadata`"]),
            }
        }
    }

    fn prescan_metadata(&mut self) -> PResult<()> {
        let mut depth = 0i32;
        let mut i = 0;
        while i < self.toks.len() {
            match &self.toks[i].tok {
                Tok::Punct("{") | Tok::Punct("(") | Tok::Punct("[") => depth += 1,
                Tok::Punct("}") | Tok::Punct(")") | Tok::Punct("]") => depth -= 1,
                Tok::Ident(k) if k == "metadata" && depth == 0 => {
                    let saved = self.pos;
                    self.pos = i;
                    self.meta = self.metadata()?;
                    self.pos = saved;
                    return Ok(());
                }
                _ => {}
            }
            i += 1;
        }
        Ok(())
    }

    fn metadata(&mut self) -> PResult<Vec<Arc<Tensor>>> {
        self.expect_kw("metadata")?;
        self.expect("{")?;
        let (items, _) = self.list("}", |p| p.const_literal().map(Arc::new))?;
        Ok(items)
    }

    fn adt(&mut self) -> PResult<AdtDef> {
        self.expect_kw("type")?;
        let name = self.ident("a type name")?;
        let type_params = if self.eat("[") { self.list("]", |p| p.ident("a type parameter"))?.0 } else { Vec::new() };
        self.expect("{")?;
        let (constructors, _) = self.list("}", |p| {
            let name = p.ident("a constructor name")?;
            let fields = if p.eat("(") { p.list(")", Self::ty)?.0 } else { Vec::new() };
            Ok(Constructor { name, fields })
        })?;
        Ok(AdtDef { name, type_params, constructors })
    }

    /// Everything after `fn` or `def @name`: type parameters, attributes,
    /// parameters, result annotation and body.
    fn function_tail(&mut self) -> PResult<Function> {
        let type_params = if self.eat("<") { self.list(">", |p| p.ident("a type parameter"))?.0 } else { Vec::new() };
        let attrs = if self.eat("[") { self.attr_list("]")? } else { Attrs::new() };
        self.expect("(")?;
        let depth = self.scopes.len();
        let (params, _) = self.list(")", |p| {
            let name = match p.peek() {
                Tok::Local(n) => n.clone(),
                _ => return p.fail(&["a parameter"]),
            };
            p.bump();
            let annotation = if p.eat(":") { Some(p.ty()?) } else { None };
            Ok(Param { var: p.bind(name), annotation })
        })?;
        let ret_type = if self.eat("->") { Some(self.ty()?) } else { None };
        self.expect("{")?;
        let body = self.seq();
        self.scopes.truncate(depth);
        let body = body?;
        self.expect("}")?;
        Ok(Function { type_params, params, ret_type, body, attrs })
    }

    fn attr_list(&mut self, close: &str) -> PResult<Attrs> {
        let mut attrs = Attrs::new();
        let (items, _) = self.list(close, |p| {
            let key = p.ident("an attribute name")?;
            p.expect("=")?;
            Ok((key, p.attr_value()?))
        })?;
        for (k, v) in items {
            attrs.set(&k, v);
        }
        Ok(attrs)
    }

    fn attr_value(&mut self) -> PResult<AttrValue> {
        let v = match self.peek().clone() {
            Tok::Int(v) => AttrValue::Int(v),
            Tok::Float(v) => AttrValue::Float(v),
            Tok::Str(s) => AttrValue::Str(s),
            Tok::Ident(s) if s == "True" => AttrValue::Bool(true),
            Tok::Ident(s) if s == "False" => AttrValue::Bool(false),
            Tok::Ident(_) | Tok::Punct("-") => return Ok(AttrValue::Float(self.special_float()?)),
            Tok::Punct("(") | Tok::Punct("[") => {
                let close = if self.is_punct("(") { ")" } else { "]" };
                self.bump();
                return Ok(AttrValue::List(self.list(close, Self::attr_value)?.0));
            }
            _ => return self.fail(&["an attribute value"]),
        };
        self.bump();
        Ok(v)
    }

    fn special_float(&mut self) -> PResult<f64> {
        let neg = self.eat("-");
        let v = match self.peek() {
            Tok::Ident(s) if s == "inf" => f64::INFINITY,
            Tok::Ident(s) if s == "nan" || s == "NaN" => f64::NAN,
            _ => return self.fail(&["a number"]),
        };
        self.bump();
        Ok(if neg { -v } else { v })
    }

    // Types.

    pub(crate) fn ty(&mut self) -> PResult<Type> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Punct("(") => {
                self.bump();
                Ok(Type::Tuple(self.list(")", Self::ty)?.0))
            }
            Tok::Ident(s) if s == "Tensor" => {
                self.bump();
                self.expect("[")?;
                let shape = self.shape()?;
                self.expect(",")?;
                let dtype = self.dtype()?;
                self.expect("]")?;
                Ok(Type::tensor(shape, dtype))
            }
            Tok::Ident(s) if s == "Ref" => {
                self.bump();
                self.expect("[")?;
                let inner = self.ty()?;
                self.expect("]")?;
                Ok(Type::Ref(Box::new(inner)))
            }
            Tok::Ident(s) if s == "fn" => {
                self.bump();
                let type_params = if self.eat("<") { self.list(">", |p| p.ident("a type parameter"))?.0 } else { Vec::new() };
                self.expect("(")?;
                let (args, _) = self.list(")", Self::ty)?;
                self.expect("->")?;
                let ret = self.ty()?;
                let mut relations = Vec::new();
                if self.is_kw("where") {
                    self.bump();
                    loop {
                        let relation = self.ident("a relation name")?;
                        self.expect("(")?;
                        let (types, _) = self.list(")", Self::ty)?;
                        relations.push(RelationInstance { relation, types });
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                Ok(Type::Func(Arc::new(FuncType { type_params, args, ret, relations })))
            }
            Tok::Ident(s) if is_ctor_name(&s) => {
                self.bump();
                let args = if self.eat("[") { self.list("]", Self::ty)?.0 } else { Vec::new() };
                Ok(Type::Call { head: s, args })
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                match BaseType::from_str(&s) {
                    Ok(bt) => Ok(Type::scalar(bt)),
                    Err(_) if s.starts_with("int") || s.starts_with("uint") || s.starts_with("float") || s == "bool" => {
                        self.pos -= 1;
                        Err(ParseError::Syntax { span: start, expected: vec![String::from("a valid data type")], found: format!("`{s}`") })
                    }
                    Err(_) => Ok(Type::Var(s)),
                }
            }
            _ => self.fail(&["a type"]),
        }
    }

    fn shape(&mut self) -> PResult<Vec<Dim>> {
        self.expect("(")?;
        Ok(self
            .list(")", |p| match p.peek().clone() {
                Tok::Int(v) if v >= 0 => {
                    p.bump();
                    Ok(Dim::Const(v as u64))
                }
                Tok::Punct("?") => {
                    p.bump();
                    Ok(Dim::Any)
                }
                Tok::Ident(_) => Ok(Dim::Var(p.ident("a dimension")?)),
                _ => p.fail(&["a dimension"]),
            })?
            .0)
    }

    fn dtype(&mut self) -> PResult<BaseType> {
        let span = self.span();
        let name = self.ident("a data type")?;
        BaseType::from_str(&name).map_err(|_| ParseError::Syntax {
            span,
            expected: vec![String::from("a data type")],
            found: format!("`{name}`"),
        })
    }

    // Expressions.

    fn at_block_end(&self) -> bool {
        matches!(self.peek(), Tok::Punct("}") | Tok::Punct(")") | Tok::Punct(",") | Tok::Eof)
    }

    /// A sequence of bindings ending in an expression.
    pub(crate) fn seq(&mut self) -> PResult<Expr> {
        let start = self.span();
        let graph_let = matches!(self.peek(), Tok::Local(_)) && matches!(self.peek_at(1), Tok::Punct("="));
        if self.is_kw("let") || graph_let {
            if !graph_let {
                self.bump();
            }
            let name = match self.bump() {
                Tok::Local(n) => n,
                _ => {
                    self.pos -= 1;
                    return self.fail(&["a local variable"]);
                }
            };
            let annotation = if !graph_let && self.eat(":") { Some(self.ty()?) } else { None };
            self.expect("=")?;
            let recursive = self.is_kw("fn");
            let depth = self.scopes.len();
            let (var, value) = if recursive {
                let v = self.bind(name);
                (v, self.expr()?)
            } else {
                let value = self.expr()?;
                (self.bind(name), value)
            };
            self.expect(";")?;
            let body = self.seq();
            self.scopes.truncate(depth);
            let body = body?;
            return Ok(Expr::with_span(ExprKind::Let(Let { var, annotation, value, body }), Some(self.span_from(&start))));
        }
        let e = self.expr()?;
        if !self.eat(";") {
            return Ok(e);
        }
        if self.at_block_end() {
            return self.fail(&["an expression"]);
        }
        let body = self.seq()?;
        let var = Var::fresh("_");
        Ok(Expr::with_span(ExprKind::Let(Let { var, annotation: None, value: e, body }), Some(self.span_from(&start))))
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        let lhs = self.unary()?;
        if self.eat(":=") {
            let rhs = self.expr()?;
            return Ok(Expr::with_span(ExprKind::RefWrite(lhs, rhs), Some(self.span_from(&start))));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat("!") {
            let inner = self.unary()?;
            return Ok(Expr::with_span(ExprKind::RefRead(inner), Some(self.span_from(&start))));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let start = self.span();
        let block_like = self.is_kw("if") || self.is_kw("match") || self.is_kw("fn");
        let mut e = self.primary()?;
        if block_like {
            return Ok(e);
        }
        loop {
            if self.is_punct("<") || self.is_punct("(") {
                let type_args = if self.eat("<") { self.list(">", Self::ty)?.0 } else { Vec::new() };
                self.expect("(")?;
                let mut args = Vec::new();
                let mut attrs = Attrs::new();
                self.list(")", |p| {
                    let is_attr = matches!(p.peek(), Tok::Ident(_)) && matches!(p.peek_at(1), Tok::Punct("="));
                    if is_attr {
                        let key = p.ident("an attribute name")?;
                        p.expect("=")?;
                        attrs.set(&key, p.attr_value()?);
                    } else if !attrs.is_empty() {
                        return p.fail(&["an attribute"]);
                    } else {
                        args.push(p.expr()?);
                    }
                    Ok(())
                })?;
                e = Expr::with_span(ExprKind::Call(Call { callee: e, type_args, args, attrs }), Some(self.span_from(&start)));
            } else if self.eat(".") {
                let i = self.index()?;
                e = Expr::with_span(ExprKind::Proj(e, i), Some(self.span_from(&start)));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Local(n) => {
                self.bump();
                ExprKind::Var(self.lookup(&n, &start)?)
            }
            Tok::Global(n) => {
                self.bump();
                ExprKind::Global(n)
            }
            Tok::Int(v) => {
                self.bump();
                let t = match i32::try_from(v) {
                    Ok(v) => Tensor::scalar_i32(v),
                    Err(_) => Tensor::from_i64(vec![], BaseType::I64, vec![v]),
                };
                ExprKind::Constant(Arc::new(t))
            }
            Tok::Float(v) => {
                self.bump();
                ExprKind::Constant(Arc::new(Tensor::from_f64(vec![], BaseType::F32, vec![v])))
            }
            Tok::Ident(k) if k == "True" || k == "False" => {
                self.bump();
                ExprKind::Constant(Arc::new(Tensor::scalar_bool(k == "True")))
            }
            Tok::Ident(k) if k == "const" && !matches!(self.peek_at(1), Tok::Punct("(")) => {
                self.bump();
                return self.primary_scalar(start);
            }
            Tok::Ident(k) if k == "const" => ExprKind::Constant(Arc::new(self.const_literal()?)),
            Tok::Ident(k) if k == "meta" => {
                self.bump();
                self.expect("[")?;
                self.expect_kw("Constant")?;
                self.expect("]")?;
                self.expect("[")?;
                let index = self.index()?;
                self.expect("]")?;
                let t = self.meta.get(index).cloned().ok_or_else(|| ParseError::MetaIndexOutOfRange {
                    index,
                    size: self.meta.len(),
                    span: self.span_from(&start),
                })?;
                ExprKind::Constant(t)
            }
            Tok::Ident(k) if k == "fn" => {
                self.bump();
                ExprKind::Function(self.function_tail()?)
            }
            Tok::Ident(k) if k == "if" => return self.if_expr(),
            Tok::Ident(k) if k == "match" => return self.match_expr(),
            Tok::Ident(k) if k == "ref" => {
                self.bump();
                self.expect("(")?;
                let init = self.expr()?;
                self.expect(")")?;
                ExprKind::RefNew(init)
            }
            Tok::Ident(k) if is_ctor_name(&k) => {
                self.bump();
                ExprKind::Constructor(k)
            }
            Tok::Ident(k) if !KEYWORDS.contains(&k.as_str()) => {
                self.bump();
                ExprKind::Op(k)
            }
            Tok::Punct("(") => {
                self.bump();
                if self.eat(")") {
                    ExprKind::Tuple(Vec::new())
                } else {
                    let first = self.seq()?;
                    if self.eat(")") {
                        return Ok(first);
                    }
                    self.expect(",")?;
                    let (mut rest, _) = self.list(")", Self::expr)?;
                    rest.insert(0, first);
                    ExprKind::Tuple(rest)
                }
            }
            _ => return self.fail(&["an expression"]),
        };
        Ok(Expr::with_span(kind, Some(self.span_from(&start))))
    }

    /// A scalar after `const`: an integer, float, boolean or special float.
    fn primary_scalar(&mut self, start: Span) -> PResult<Expr> {
        let t = match self.peek().clone() {
            Tok::Ident(k) if k == "True" || k == "False" => {
                self.bump();
                Tensor::scalar_bool(k == "True")
            }
            Tok::Int(_) | Tok::Float(_) => return self.primary(),
            _ => Tensor::from_f64(vec![], BaseType::F32, vec![self.special_float()?]),
        };
        Ok(Expr::with_span(ExprKind::Constant(Arc::new(t)), Some(self.span_from(&start))))
    }

    fn block(&mut self) -> PResult<Expr> {
        self.expect("{")?;
        let depth = self.scopes.len();
        let e = self.seq();
        self.scopes.truncate(depth);
        let e = e?;
        self.expect("}")?;
        Ok(e)
    }

    fn if_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        self.expect_kw("if")?;
        self.expect("(")?;
        let cond = self.seq()?;
        self.expect(")")?;
        let then = self.block()?;
        self.expect_kw("else")?;
        let else_ = if self.is_kw("if") { self.if_expr()? } else { self.block()? };
        Ok(Expr::with_span(ExprKind::If(cond, then, else_), Some(self.span_from(&start))))
    }

    fn match_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        self.expect_kw("match")?;
        self.expect("(")?;
        let scrutinee = self.seq()?;
        self.expect(")")?;
        self.expect("{")?;
        let (clauses, _) = self.list("}", |p| {
            let depth = p.scopes.len();
            let pattern = p.pattern()?;
            p.expect("=>")?;
            let body = p.seq();
            p.scopes.truncate(depth);
            Ok(Clause { pattern, body: body? })
        })?;
        Ok(Expr::with_span(ExprKind::Match(scrutinee, clauses), Some(self.span_from(&start))))
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "_" => {
                self.bump();
                Ok(Pattern::Wildcard)
            }
            Tok::Local(n) => {
                self.bump();
                Ok(Pattern::Var(self.bind(n)))
            }
            Tok::Ident(s) if is_ctor_name(&s) => {
                self.bump();
                let fields = if self.eat("(") { self.list(")", Self::pattern)?.0 } else { Vec::new() };
                Ok(Pattern::Constructor { name: s, fields })
            }
            Tok::Punct("(") => {
                self.bump();
                Ok(Pattern::Tuple(self.list(")", Self::pattern)?.0))
            }
            _ => self.fail(&["a pattern"]),
        }
    }

    /// `const(data, (shape), dtype)`.
    pub(crate) fn const_literal(&mut self) -> PResult<Tensor> {
        let start = self.span();
        self.expect_kw("const")?;
        self.expect("(")?;
        let mut data = Vec::new();
        self.elements(&mut data)?;
        self.expect(",")?;
        let shape = self.shape()?;
        self.expect(",")?;
        let dtype = self.dtype()?;
        self.expect(")")?;
        let extents: Vec<usize> = shape
            .iter()
            .map(|d| d.as_const().map(|v| v as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| self.malformed(&start, String::from("literal shapes must be constant")))?;
        let n: usize = extents.iter().product();
        if n != data.len() {
            return Err(self.malformed(&start, format!("shape {extents:?} needs {n} elements, found {}", data.len())));
        }
        let buffer = if data.iter().any(|e| matches!(e, Elem::Float(_))) {
            Buffer::Float(data.iter().map(Elem::as_f64).collect())
        } else if data.iter().all(|e| matches!(e, Elem::Bool(_))) && !data.is_empty() {
            Buffer::Bool(data.iter().map(|e| matches!(e, Elem::Bool(true))).collect())
        } else {
            Buffer::Int(data.iter().map(|e| match e {
                Elem::Int(v) => *v,
                other => other.as_f64() as i64,
            }).collect())
        };
        Ok(Tensor::new(extents, dtype, buffer))
    }

    fn malformed(&self, start: &Span, detail: String) -> ParseError {
        IrError::MalformedLiteral { detail, loc: microrelay_core::expr::Loc(Some(self.span_from(start))) }.into()
    }

    fn elements(&mut self, out: &mut Vec<Elem>) -> PResult<()> {
        match self.peek().clone() {
            Tok::Punct("[") => {
                self.bump();
                self.list("]", |p| p.elements(out))?;
            }
            Tok::Int(v) => {
                self.bump();
                out.push(Elem::Int(v));
            }
            Tok::Float(v) => {
                self.bump();
                out.push(Elem::Float(v));
            }
            Tok::Ident(s) if s == "True" || s == "False" => {
                self.bump();
                out.push(Elem::Bool(s == "True"));
            }
            _ => out.push(Elem::Float(self.special_float()?)),
        }
        Ok(())
    }

    pub(crate) fn expect_eof(&self) -> PResult<()> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.fail(&["end of input"])
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub(crate) fn local_name(&mut self) -> PResult<String> {
        match self.bump() {
            Tok::Local(n) => Ok(n),
            _ => {
                self.pos -= 1;
                self.fail(&["a local variable"])
            }
        }
    }

    pub(crate) fn expect_punct(&mut self, p: &str) -> PResult<()> {
        self.expect(p)
    }

    pub(crate) fn eat_punct(&mut self, p: &str) -> bool {
        self.eat(p)
    }
}
