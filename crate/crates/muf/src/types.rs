//! Core type checker: simple types plus a deterministic/probabilistic mode,
//! with the measurability restriction on probabilistic expressions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::ast::{Const, Decl, Expr, Pattern, Program};
use crate::error::TypeError;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreType {
    Unit,
    Bool,
    Real,
    Int,
    Fun(Box<CoreType>, Box<CoreType>),
    Prod(Box<CoreType>, Box<CoreType>),
    Distr(Box<CoreType>),
    DStreamFn(Box<CoreType>, Box<CoreType>),
    PStreamFn(Box<CoreType>, Box<CoreType>),
    /// Instance created by `init`; unfolding it is deterministic.
    DStream(Box<CoreType>, Box<CoreType>),
    /// Instance created by `infer`; unfolding yields a distribution.
    PStream(Box<CoreType>, Box<CoreType>),
    List(Box<CoreType>),
    Array(Box<CoreType>),
    Var(u32),
}

use CoreType as T;

fn bx(t: CoreType) -> Box<CoreType> {
    Box::new(t)
}

impl CoreType {
    pub fn prod(a: CoreType, b: CoreType) -> CoreType {
        T::Prod(bx(a), bx(b))
    }

    /// Types that may be the support of a distribution.
    pub fn measurable(&self) -> bool {
        match self {
            T::Unit | T::Bool | T::Real | T::Int | T::Var(_) => true,
            T::Prod(a, b) => a.measurable() && b.measurable(),
            T::Distr(a) | T::List(a) | T::Array(a) => a.measurable(),
            _ => false,
        }
    }
}

impl fmt::Display for CoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            T::Unit => write!(f, "unit"),
            T::Bool => write!(f, "bool"),
            T::Real => write!(f, "real"),
            T::Int => write!(f, "int"),
            T::Fun(a, b) => write!(f, "({a} -> {b})"),
            T::Prod(a, b) => write!(f, "({a} * {b})"),
            T::Distr(a) => write!(f, "{a} dist"),
            T::DStreamFn(a, b) => write!(f, "dstreamfn({a}, {b})"),
            T::PStreamFn(a, b) => write!(f, "pstreamfn({a}, {b})"),
            T::DStream(a, b) => write!(f, "dstream({a}, {b})"),
            T::PStream(a, b) => write!(f, "pstream({a}, {b})"),
            T::List(a) => write!(f, "{a} list"),
            T::Array(a) => write!(f, "{a} array"),
            T::Var(n) => write!(f, "'t{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Det,
    Prob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSig {
    pub prob: bool,
    pub state: CoreType,
    pub input: CoreType,
    pub output: CoreType,
}

impl StreamSig {
    pub fn fn_type(&self) -> CoreType {
        if self.prob {
            T::PStreamFn(bx(self.input.clone()), bx(self.output.clone()))
        } else {
            T::DStreamFn(bx(self.input.clone()), bx(self.output.clone()))
        }
    }
}

/// Type and mode of one checked expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub expr: String,
    pub ty: CoreType,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct TypedProgram {
    pub program: Program,
    pub streams: BTreeMap<String, StreamSig>,
    pub values: BTreeMap<String, CoreType>,
    pub annotations: Vec<Annotation>,
}

impl TypedProgram {
    pub fn main_sig(&self) -> &StreamSig {
        &self.streams[&self.program.main]
    }
}

#[derive(Clone)]
struct Entry {
    ty: CoreType,
    /// Calling this value performs probabilistic effects.
    prob_call: bool,
}

#[derive(Clone, Default)]
struct Subst {
    map: HashMap<u32, CoreType>,
    next: u32,
}

impl Subst {
    fn fresh(&mut self) -> CoreType {
        self.next += 1;
        T::Var(self.next)
    }

    fn resolve(&self, t: &CoreType) -> CoreType {
        match t {
            T::Var(n) => match self.map.get(n) {
                Some(u) => self.resolve(u),
                None => t.clone(),
            },
            T::Fun(a, b) => T::Fun(bx(self.resolve(a)), bx(self.resolve(b))),
            T::Prod(a, b) => T::Prod(bx(self.resolve(a)), bx(self.resolve(b))),
            T::DStreamFn(a, b) => T::DStreamFn(bx(self.resolve(a)), bx(self.resolve(b))),
            T::PStreamFn(a, b) => T::PStreamFn(bx(self.resolve(a)), bx(self.resolve(b))),
            T::DStream(a, b) => T::DStream(bx(self.resolve(a)), bx(self.resolve(b))),
            T::PStream(a, b) => T::PStream(bx(self.resolve(a)), bx(self.resolve(b))),
            T::Distr(a) => T::Distr(bx(self.resolve(a))),
            T::List(a) => T::List(bx(self.resolve(a))),
            T::Array(a) => T::Array(bx(self.resolve(a))),
            _ => t.clone(),
        }
    }

    fn occurs(&self, n: u32, t: &CoreType) -> bool {
        match self.resolve(t) {
            T::Var(m) => m == n,
            T::Fun(a, b)
            | T::Prod(a, b)
            | T::DStreamFn(a, b)
            | T::PStreamFn(a, b)
            | T::DStream(a, b)
            | T::PStream(a, b) => self.occurs(n, &a) || self.occurs(n, &b),
            T::Distr(a) | T::List(a) | T::Array(a) => self.occurs(n, &a),
            _ => false,
        }
    }

    fn unify(&mut self, a: &CoreType, b: &CoreType) -> Result<(), TypeError> {
        let (a, b) = (self.resolve(a), self.resolve(b));
        let mismatch = || TypeError::Mismatch(format!("cannot unify {a} with {b}"));
        match (&a, &b) {
            (T::Var(n), T::Var(m)) if n == m => Ok(()),
            (T::Var(n), t) | (t, T::Var(n)) => {
                if self.occurs(*n, t) {
                    return Err(mismatch());
                }
                self.map.insert(*n, t.clone());
                Ok(())
            }
            (T::Unit, T::Unit) | (T::Bool, T::Bool) | (T::Real, T::Real) | (T::Int, T::Int) => Ok(()),
            (T::Fun(a1, b1), T::Fun(a2, b2))
            | (T::Prod(a1, b1), T::Prod(a2, b2))
            | (T::DStreamFn(a1, b1), T::DStreamFn(a2, b2))
            | (T::PStreamFn(a1, b1), T::PStreamFn(a2, b2))
            | (T::DStream(a1, b1), T::DStream(a2, b2))
            | (T::PStream(a1, b1), T::PStream(a2, b2)) => {
                self.unify(a1, a2)?;
                self.unify(b1, b2)
            }
            (T::Distr(x), T::Distr(y)) | (T::List(x), T::List(y)) | (T::Array(x), T::Array(y)) => {
                self.unify(x, y)
            }
            _ => Err(mismatch()),
        }
    }
}

struct Checker {
    subst: Subst,
    scopes: Vec<Vec<(String, Entry)>>,
    streams: BTreeMap<String, StreamSig>,
    /// Types that must end up int or real.
    numeric: Vec<CoreType>,
    /// Probabilistic expressions whose type must be measurable.
    prob_exprs: Vec<(String, CoreType)>,
    annotations: Vec<Annotation>,
    /// Latent effect of each checked lambda, keyed by node address.
    lambda_prob: HashMap<usize, bool>,
}

type TResult<T> = Result<T, TypeError>;

pub fn typecheck_core(program: &Program) -> TResult<TypedProgram> {
    let mut c = Checker {
        subst: Subst::default(),
        scopes: vec![Vec::new()],
        streams: BTreeMap::new(),
        numeric: Vec::new(),
        prob_exprs: Vec::new(),
        annotations: Vec::new(),
        lambda_prob: HashMap::new(),
    };
    let mut values = BTreeMap::new();
    for d in &program.decls {
        match d {
            Decl::Val(p, e) => {
                let (t, _) = c.expr(e, Mode::Det)?;
                let entries = c.bind(p, &t, lambda_effect(&c, e))?;
                c.finish()?;
                for (name, entry) in entries {
                    values.insert(name.clone(), c.subst.resolve(&entry.ty));
                    c.scopes[0].push((name, entry));
                }
            }
            Decl::Fun(name, p, body) => {
                let param = c.subst.fresh();
                let entries = c.bind(p, &param, false)?;
                c.scopes.push(entries);
                let (rt, prob) = c.expr(body, Mode::Prob)?;
                c.scopes.pop();
                c.finish()?;
                let ty = T::Fun(bx(c.subst.resolve(&param)), bx(c.subst.resolve(&rt)));
                values.insert(name.clone(), ty.clone());
                c.scopes[0].push((name.clone(), Entry { ty, prob_call: prob }));
            }
            Decl::Stream(s) => {
                let (init_t, _) = c.expr(&s.init, Mode::Det)?;
                // A stream is deterministic when its body checks in det mode.
                let saved =
                    (c.subst.clone(), c.numeric.len(), c.prob_exprs.len(), c.annotations.len());
                let sig = match c.stream_body(s, &init_t, Mode::Det) {
                    Ok(sig) => sig,
                    Err(TypeError::ModeViolation(_)) => {
                        c.subst = saved.0;
                        c.numeric.truncate(saved.1);
                        c.prob_exprs.truncate(saved.2);
                        c.annotations.truncate(saved.3);
                        c.stream_body(s, &init_t, Mode::Prob)?
                    }
                    Err(e) => return Err(e),
                };
                c.finish()?;
                let sig = StreamSig {
                    prob: sig.prob,
                    state: c.subst.resolve(&sig.state),
                    input: c.subst.resolve(&sig.input),
                    output: c.subst.resolve(&sig.output),
                };
                if sig.prob {
                    for t in [&sig.state, &sig.output] {
                        if !t.measurable() {
                            return Err(TypeError::NonMeasurable(format!(
                                "{t} in probabilistic stream `{}`",
                                s.name
                            )));
                        }
                    }
                }
                c.scopes[0].push((s.name.clone(), Entry { ty: sig.fn_type(), prob_call: false }));
                c.streams.insert(s.name.clone(), sig);
            }
        }
    }
    match c.streams.get(&program.main) {
        Some(sig) if sig.prob => {
            return Err(TypeError::ModeViolation(format!(
                "main stream `{}` must be deterministic",
                program.main
            )))
        }
        Some(_) => {}
        None => return Err(TypeError::Mismatch(format!("no stream named `{}`", program.main))),
    }
    let annotations = c
        .annotations
        .iter()
        .map(|a| Annotation { expr: a.expr.clone(), ty: c.subst.resolve(&a.ty), mode: a.mode })
        .collect();
    Ok(TypedProgram { program: program.clone(), streams: c.streams, values, annotations })
}

fn lambda_effect(c: &Checker, e: &Expr) -> bool {
    c.lambda_prob.get(&(e as *const Expr as usize)).copied().unwrap_or(false)
}

impl Checker {

    fn finish(&mut self) -> TResult<()> {
        for t in std::mem::take(&mut self.numeric) {
            match self.subst.resolve(&t) {
                T::Int | T::Real | T::Var(_) => {}
                other => return Err(TypeError::Mismatch(format!("expected int or real, found {other}"))),
            }
        }
        for (e, t) in std::mem::take(&mut self.prob_exprs) {
            let t = self.subst.resolve(&t);
            if !t.measurable() {
                return Err(TypeError::NonMeasurable(format!("{t} for `{e}`")));
            }
        }
        Ok(())
    }

    fn stream_body(
        &mut self,
        s: &crate::ast::StreamDecl,
        init_t: &CoreType,
        mode: Mode,
    ) -> TResult<StreamSig> {
        let state = self.subst.fresh();
        let input = self.subst.fresh();
        self.subst.unify(&state, init_t)?;
        let mut entries = self.bind(&s.state, &state, false)?;
        entries.extend(self.bind(&s.input, &input, false)?);
        self.scopes.push(entries);
        let res = self.expr(&s.body, mode);
        self.scopes.pop();
        let (bt, prob) = res?;
        let output = self.subst.fresh();
        self.subst
            .unify(&bt, &T::prod(output.clone(), state.clone()))
            .map_err(|e| TypeError::Mismatch(format!("step of `{}` must return (output, state): {e}", s.name)))?;
        Ok(StreamSig { prob, state, input, output })
    }

    fn lookup(&self, x: &str) -> Option<&Entry> {
        self.scopes.iter().rev().flat_map(|s| s.iter().rev()).find(|(n, _)| n == x).map(|(_, e)| e)
    }

    fn bind(&mut self, p: &Pattern, t: &CoreType, prob_call: bool) -> TResult<Vec<(String, Entry)>> {
        let mut out = Vec::new();
        self.bind_into(p, t, prob_call, &mut out)?;
        Ok(out)
    }

    fn bind_into(
        &mut self,
        p: &Pattern,
        t: &CoreType,
        prob_call: bool,
        out: &mut Vec<(String, Entry)>,
    ) -> TResult<()> {
        match p {
            Pattern::Var(x) => {
                out.push((x.clone(), Entry { ty: t.clone(), prob_call }));
                Ok(())
            }
            Pattern::Wild => Ok(()),
            Pattern::Unit => self.subst.unify(t, &T::Unit),
            Pattern::Pair(a, b) => {
                let (ta, tb) = (self.subst.fresh(), self.subst.fresh());
                self.subst.unify(t, &T::prod(ta.clone(), tb.clone()))?;
                // Components of a destructured value have unknown call effects.
                self.bind_into(a, &ta, true, out)?;
                self.bind_into(b, &tb, true, out)
            }
        }
    }

    fn annotate(&mut self, e: &Expr, ty: &CoreType, prob: bool) {
        self.annotations.push(Annotation {
            expr: e.to_string(),
            ty: ty.clone(),
            mode: if prob { Mode::Prob } else { Mode::Det },
        });
        if prob {
            self.prob_exprs.push((e.to_string(), ty.clone()));
        }
    }

    /// Returns the type and whether evaluating `e` has probabilistic effects.
    fn expr(&mut self, e: &Expr, mode: Mode) -> TResult<(CoreType, bool)> {
        let (t, prob) = self.expr_inner(e, mode)?;
        self.annotate(e, &t, prob);
        Ok((t, prob))
    }

    fn expr_inner(&mut self, e: &Expr, mode: Mode) -> TResult<(CoreType, bool)> {
        match e {
            Expr::Const(c) => Ok((
                match c {
                    Const::Unit => T::Unit,
                    Const::Bool(_) => T::Bool,
                    Const::Int(_) => T::Int,
                    Const::Real(_) => T::Real,
                },
                false,
            )),
            Expr::Var(x) => match self.lookup(x) {
                Some(entry) => Ok((entry.ty.clone(), false)),
                None => Err(TypeError::Mismatch(format!("unbound variable `{x}`"))),
            },
            Expr::Pair(a, b) => {
                let (ta, pa) = self.expr(a, mode)?;
                let (tb, pb) = self.expr(b, mode)?;
                Ok((T::prod(ta, tb), pa || pb))
            }
            Expr::Lambda(p, body) => {
                let param = self.subst.fresh();
                let entries = self.bind(p, &param, false)?;
                self.scopes.push(entries);
                let res = self.expr(body, mode);
                self.scopes.pop();
                let (rt, prob) = res?;
                self.lambda_prob.insert(e as *const Expr as usize, prob);
                Ok((T::Fun(bx(param), bx(rt)), false))
            }
            Expr::Let(p, e1, e2) => {
                let (t1, p1) = self.expr(e1, mode)?;
                let latent = lambda_effect(self, e1);
                let entries = self.bind(p, &t1, latent)?;
                self.scopes.push(entries);
                let res = self.expr(e2, mode);
                self.scopes.pop();
                let (t2, p2) = res?;
                Ok((t2, p1 || p2))
            }
            Expr::If(c, a, b) => {
                let (tc, pc) = self.expr(c, mode)?;
                self.subst.unify(&tc, &T::Bool)?;
                let (ta, pa) = self.expr(a, mode)?;
                let (tb, pb) = self.expr(b, mode)?;
                self.subst.unify(&ta, &tb)?;
                Ok((ta, pc || pa || pb))
            }
            Expr::Sample(d) => {
                if mode != Mode::Prob {
                    return Err(TypeError::ModeViolation(format!(
                        "`{e}` outside a probabilistic stream"
                    )));
                }
                let (td, _) = self.expr(d, mode)?;
                let t = self.subst.fresh();
                self.subst.unify(&td, &T::Distr(bx(t.clone())))?;
                Ok((t, true))
            }
            Expr::Observe(d, v) => {
                if mode != Mode::Prob {
                    return Err(TypeError::ModeViolation(format!(
                        "`{e}` outside a probabilistic stream"
                    )));
                }
                let (td, _) = self.expr(d, mode)?;
                let (tv, _) = self.expr(v, mode)?;
                self.subst.unify(&td, &T::Distr(bx(tv)))?;
                Ok((T::Unit, true))
            }
            Expr::Infer(m) => {
                if mode != Mode::Det {
                    return Err(TypeError::ModeViolation(format!("nested inference `{e}`")));
                }
                let sig = self.stream_sig(m)?;
                Ok((T::PStream(bx(sig.input.clone()), bx(sig.output.clone())), false))
            }
            Expr::Init(m) => {
                let sig = self.stream_sig(m)?;
                if sig.prob {
                    return Err(TypeError::ModeViolation(format!(
                        "`init {m}` of a probabilistic stream function (use infer)"
                    )));
                }
                Ok((T::DStream(bx(sig.input.clone()), bx(sig.output.clone())), false))
            }
            Expr::Unfold(x, v) => {
                let inst = match self.lookup(x) {
                    Some(entry) => self.subst.resolve(&entry.ty),
                    None => return Err(TypeError::Mismatch(format!("unbound variable `{x}`"))),
                };
                let (tv, pv) = self.expr(v, mode)?;
                match inst {
                    T::DStream(i, o) => {
                        self.subst.unify(&tv, &i)?;
                        Ok((T::prod(*o.clone(), T::DStream(i, o)), pv))
                    }
                    T::PStream(i, o) => {
                        self.subst.unify(&tv, &i)?;
                        Ok((T::prod(T::Distr(o.clone()), T::PStream(i, o)), pv))
                    }
                    other => Err(TypeError::Mismatch(format!(
                        "unfold of `{x}` which has non-instance type {other}"
                    ))),
                }
            }
            Expr::App(f, v) => {
                let entry = match self.lookup(f) {
                    Some(entry) => entry.clone(),
                    None => return Err(TypeError::Mismatch(format!("unbound function `{f}`"))),
                };
                if entry.prob_call && mode == Mode::Det {
                    return Err(TypeError::ModeViolation(format!(
                        "call of probabilistic function `{f}` in deterministic context"
                    )));
                }
                let (tv, pv) = self.expr(v, mode)?;
                let r = self.subst.fresh();
                self.subst.unify(&entry.ty, &T::Fun(bx(tv), bx(r.clone())))?;
                Ok((r, pv || entry.prob_call))
            }
            Expr::Op(op, arg) => self.op(op, arg, mode),
        }
    }

    fn stream_sig(&self, m: &str) -> TResult<StreamSig> {
        self.streams
            .get(m)
            .cloned()
            .ok_or_else(|| TypeError::Mismatch(format!("`{m}` is not a stream function")))
    }

    fn op(&mut self, op: &str, arg: &Expr, mode: Mode) -> TResult<(CoreType, bool)> {
        let (ta, pa) = self.expr(arg, mode)?;
        // Latent effects of lambdas passed to higher-order builtins.
        let latent = lambda_args(arg).iter().any(|l| lambda_effect(self, l));
        let a = self.subst.fresh();
        let b = self.subst.fresh();
        let fun = |x: &CoreType, y: &CoreType| T::Fun(bx(x.clone()), bx(y.clone()));
        let tuple = |xs: Vec<CoreType>| {
            let mut it = xs.into_iter().rev();
            let last = it.next().unwrap();
            it.fold(last, |acc, x| T::prod(x, acc))
        };
        let (param, result) = match op {
            "plus" | "sub" | "mult" | "div" => {
                self.numeric.push(a.clone());
                (tuple(vec![a.clone(), a.clone()]), a)
            }
            "lt" => {
                self.numeric.push(a.clone());
                (tuple(vec![a.clone(), a]), T::Bool)
            }
            "eq" => (tuple(vec![a.clone(), a]), T::Bool),
            "not" => (T::Bool, T::Bool),
            "and" | "or" => (tuple(vec![T::Bool, T::Bool]), T::Bool),
            "ite" => (tuple(vec![T::Bool, a.clone(), a.clone()]), a),
            "gaussian" | "beta" | "uniform" => (tuple(vec![T::Real, T::Real]), T::Distr(bx(T::Real))),
            "bernoulli" => (T::Real, T::Distr(bx(T::Bool))),
            "poisson" => (T::Real, T::Distr(bx(T::Int))),
            "shuffle" => (T::List(bx(a.clone())), T::Distr(bx(T::List(bx(a))))),
            "mean" => (T::Distr(bx(a)), T::Real),
            "eval" => (a.clone(), a),
            "List.nil" => (T::Unit, T::List(bx(a))),
            "Array.empty" => (T::Unit, T::Array(bx(a))),
            "List.init" => (tuple(vec![T::Int, fun(&T::Int, &a)]), T::List(bx(a))),
            "Array.init" => (tuple(vec![T::Int, fun(&T::Int, &a)]), T::Array(bx(a))),
            "List.map" => (tuple(vec![fun(&a, &b), T::List(bx(a))]), T::List(bx(b))),
            "List.filter" => (tuple(vec![fun(&a, &T::Bool), T::List(bx(a.clone()))]), T::List(bx(a))),
            "List.append" => (tuple(vec![T::List(bx(a.clone())), T::List(bx(a.clone()))]), T::List(bx(a))),
            "List.length" => (T::List(bx(a)), T::Int),
            "List.iter2" => (
                tuple(vec![
                    fun(&T::prod(a.clone(), b.clone()), &T::Unit),
                    T::List(bx(a)),
                    T::List(bx(b)),
                ]),
                T::Unit,
            ),
            "Array.get" => (tuple(vec![T::Array(bx(a.clone())), T::Int]), a),
            _ => return Err(TypeError::Mismatch(format!("unknown operator `{op}`"))),
        };
        self.subst
            .unify(&ta, &param)
            .map_err(|e| TypeError::Mismatch(format!("argument of `{op}`: {e}")))?;
        Ok((result, pa || latent))
    }
}

fn lambda_args(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::Lambda(..) => vec![e],
        Expr::Pair(a, b) => {
            let mut v = lambda_args(a);
            v.extend(lambda_args(b));
            v
        }
        _ => vec![],
    }
}
