//! Runtime values: concrete data extended with random-variable references
//! and symbolic operator applications.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::ast::{Expr, Pattern, StreamDecl};
use crate::distributions::{Concrete, MDistr};
use crate::ds_graph::NodeId;
use crate::interpreter::{Env, PInstance};

#[derive(Debug, Clone)]
pub struct Closure {
    pub param: Pattern,
    pub body: Expr,
    pub env: Env,
}

#[derive(Debug, Clone)]
pub struct StreamFn {
    pub decl: Arc<StreamDecl>,
    pub env: Env,
    pub prob: bool,
}

#[derive(Debug, Clone)]
pub struct DInstance {
    pub state: Value,
    pub def: Arc<StreamFn>,
}

#[derive(Debug, Clone)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Real(f64),
    Pair(Arc<(Value, Value)>),
    Rv(NodeId),
    Sym(Arc<(String, Value)>),
    List(Arc<Vec<Value>>),
    Array(Arc<Vec<Value>>),
    Dist(Arc<MDistr>),
    Closure(Arc<Closure>),
    StreamFn(Arc<StreamFn>),
    DInstance(Arc<DInstance>),
    PInstance(Arc<PInstance>),
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Arc::new((a, b)))
    }

    pub fn sym(op: &str, arg: Value) -> Value {
        Value::Sym(Arc::new((op.to_string(), arg)))
    }

    /// Free random variables, ordered by id.
    pub fn frv(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        self.collect_frv(&mut out);
        out
    }

    fn collect_frv(&self, out: &mut BTreeSet<NodeId>) {
        match self {
            Value::Rv(x) => {
                out.insert(*x);
            }
            Value::Pair(p) => {
                p.0.collect_frv(out);
                p.1.collect_frv(out);
            }
            Value::Sym(s) => s.1.collect_frv(out),
            Value::List(xs) | Value::Array(xs) => xs.iter().for_each(|x| x.collect_frv(out)),
            _ => {}
        }
    }

    pub fn has_rv(&self) -> bool {
        match self {
            Value::Rv(_) => true,
            Value::Pair(p) => p.0.has_rv() || p.1.has_rv(),
            Value::Sym(s) => s.1.has_rv(),
            Value::List(xs) | Value::Array(xs) => xs.iter().any(Value::has_rv),
            _ => false,
        }
    }

    /// The concrete data denoted by a value without random variables.
    pub fn to_concrete(&self) -> Option<Concrete> {
        Some(match self {
            Value::Unit => Concrete::Unit,
            Value::Bool(b) => Concrete::Bool(*b),
            Value::Int(i) => Concrete::Int(*i),
            Value::Real(r) => Concrete::Real(*r),
            Value::Pair(p) => Concrete::pair(p.0.to_concrete()?, p.1.to_concrete()?),
            Value::List(xs) => Concrete::List(xs.iter().map(Value::to_concrete).collect::<Option<_>>()?),
            Value::Array(xs) => Concrete::Array(xs.iter().map(Value::to_concrete).collect::<Option<_>>()?),
            Value::Dist(d) => Concrete::Dist(Box::new((**d).clone())),
            _ => return None,
        })
    }

    pub fn from_concrete(c: &Concrete) -> Value {
        match c {
            Concrete::Unit => Value::Unit,
            Concrete::Bool(b) => Value::Bool(*b),
            Concrete::Int(i) => Value::Int(*i),
            Concrete::Real(r) => Value::Real(*r),
            Concrete::Pair(a, b) => Value::pair(Value::from_concrete(a), Value::from_concrete(b)),
            Concrete::List(xs) => Value::List(Arc::new(xs.iter().map(Value::from_concrete).collect())),
            Concrete::Array(xs) => Value::Array(Arc::new(xs.iter().map(Value::from_concrete).collect())),
            Concrete::Dist(d) => Value::Dist(Arc::new((**d).clone())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Pair(p) => write!(f, "({}, {})", p.0, p.1),
            Value::Rv(x) => write!(f, "{x}"),
            Value::Sym(s) => write!(f, "{}({})", s.0, s.1),
            Value::List(xs) | Value::Array(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::Dist(d) => write!(f, "{d}"),
            Value::Closure(_) => write!(f, "<fun>"),
            Value::StreamFn(s) => write!(f, "<stream {}>", s.decl.name),
            Value::DInstance(i) => write!(f, "<instance {}>", i.def.decl.name),
            Value::PInstance(p) => write!(f, "<infer {}>", p.def.decl.name),
        }
    }
}
