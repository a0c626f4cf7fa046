//! Abstract syntax of μF programs.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Var(String),
    Pair(Box<Pattern>, Box<Pattern>),
    Wild,
    Unit,
}

impl Pattern {
    pub fn pair(a: Pattern, b: Pattern) -> Pattern {
        Pattern::Pair(Box::new(a), Box::new(b))
    }

    /// Right-nested tuple pattern; an empty list is `()`.
    pub fn tuple(mut items: Vec<Pattern>) -> Pattern {
        match items.len() {
            0 => Pattern::Unit,
            1 => items.pop().unwrap(),
            _ => {
                let first = items.remove(0);
                Pattern::pair(first, Pattern::tuple(items))
            }
        }
    }
}

/// Names bound by a pattern.
pub fn free_pattern_vars(p: &Pattern) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_vars(p, &mut out);
    out
}

fn collect_vars(p: &Pattern, out: &mut BTreeSet<String>) {
    match p {
        Pattern::Var(x) => {
            out.insert(x.clone());
        }
        Pattern::Pair(a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Pattern::Wild | Pattern::Unit => {}
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Const {
    Unit,
    Bool(bool),
    Int(i64),
    Real(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Const),
    Var(String),
    Pair(Box<Expr>, Box<Expr>),
    /// Builtin operator applied to a (possibly tuple) argument.
    Op(String, Box<Expr>),
    /// Call of a declared function or a let-bound closure.
    App(String, Box<Expr>),
    Lambda(Pattern, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Let(Pattern, Box<Expr>, Box<Expr>),
    Init(String),
    Unfold(String, Box<Expr>),
    Sample(Box<Expr>),
    Observe(Box<Expr>, Box<Expr>),
    Infer(String),
}

impl Expr {
    pub fn pair(a: Expr, b: Expr) -> Expr {
        Expr::Pair(Box::new(a), Box::new(b))
    }

    pub fn tuple(mut items: Vec<Expr>) -> Expr {
        match items.len() {
            0 => Expr::Const(Const::Unit),
            1 => items.pop().unwrap(),
            _ => {
                let first = items.remove(0);
                Expr::pair(first, Expr::tuple(items))
            }
        }
    }

    /// Syntactic values: constants, variables, lambdas and pairs of values.
    pub fn is_value(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Lambda(..) => true,
            Expr::Pair(a, b) => a.is_value() && b.is_value(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamDecl {
    pub name: String,
    pub init: Expr,
    pub state: Pattern,
    pub input: Pattern,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Val(Pattern, Expr),
    Fun(String, Pattern, Expr),
    Stream(StreamDecl),
}

impl Decl {
    pub fn bound_names(&self) -> BTreeSet<String> {
        match self {
            Decl::Val(p, _) => free_pattern_vars(p),
            Decl::Fun(f, _, _) => [f.clone()].into_iter().collect(),
            Decl::Stream(s) => [s.name.clone()].into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub main: String,
}

impl Program {
    pub fn stream(&self, name: &str) -> Option<&StreamDecl> {
        self.decls.iter().rev().find_map(|d| match d {
            Decl::Stream(s) if s.name == name => Some(s),
            _ => None,
        })
    }

    pub fn streams(&self) -> impl Iterator<Item = &StreamDecl> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Stream(s) => Some(s),
            _ => None,
        })
    }
}

// Pretty printing. The output reparses to the same tree (fresh `$` names are
// printed as ordinary identifiers and accepted back by the lexer).

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(x) => write!(f, "{x}"),
            Pattern::Wild => write!(f, "_"),
            Pattern::Unit => write!(f, "()"),
            Pattern::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Unit => write!(f, "()"),
            Const::Bool(b) => write!(f, "{b}"),
            Const::Int(i) => write!(f, "{i}"),
            Const::Real(r) => {
                if r.is_finite() && r.fract() == 0.0 && r.abs() < 1e15 {
                    write!(f, "{r:.1}")
                } else {
                    write!(f, "{r:?}")
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(x) => write!(f, "{x}"),
            Expr::Pair(a, b) => write!(f, "({a}, {b})"),
            Expr::Op(op, arg) | Expr::App(op, arg) => match arg.as_ref() {
                Expr::Const(Const::Unit) if is_nullary(op) => write!(f, "{op}"),
                Expr::Pair(..) => write!(f, "{op} {arg}"),
                _ => write!(f, "{op} ({arg})"),
            },
            Expr::Lambda(p, body) => write!(f, "(fun {p} -> {body})"),
            Expr::If(c, a, b) => write!(f, "(if {c} then {a} else {b})"),
            Expr::Let(p, e1, e2) => write!(f, "(let {p} = {e1} in {e2})"),
            Expr::Init(m) => write!(f, "init {m}"),
            Expr::Infer(m) => write!(f, "infer {m}"),
            Expr::Unfold(x, arg) => write!(f, "unfold ({x}, {arg})"),
            Expr::Sample(e) => write!(f, "sample ({e})"),
            Expr::Observe(a, b) => write!(f, "observe ({a}, {b})"),
        }
    }
}

fn is_nullary(op: &str) -> bool {
    matches!(op, "List.nil" | "Array.empty")
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decl::Val(p, e) => write!(f, "val {p} = {e}"),
            Decl::Fun(name, p, e) => write!(f, "val {name} = fun {p} -> {e}"),
            Decl::Stream(s) => write!(
                f,
                "val {} = stream {{\n  init = {};\n  step ({}, {}) = {}\n}}",
                s.name, s.init, s.state, s.input, s.body
            ),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}
