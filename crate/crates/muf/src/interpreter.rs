//! Evaluation of μF programs: deterministic streams, the delayed-sampling
//! probabilistic semantics, and the particle-filter `infer` operator.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::{Const, Decl, Expr, Pattern, Program};
use crate::builtins::{apply_concrete, is_symbolic_op};
use crate::distributions::{
    cdistr_to_mdistr, make_conditional, make_marginal, stats, Concrete, MDistr, ProductKind,
};
use crate::ds_graph::{affine_form, fold_realized, Ds, DsGraph, NodeId, NodeState, Trace};
use crate::error::{MufError, RuntimeError};
use crate::types::{typecheck_core, CoreType, TypedProgram};
use crate::value::{Closure, DInstance, StreamFn, Value};

type RResult<T> = Result<T, RuntimeError>;

fn eval_err<T>(msg: impl Into<String>) -> RResult<T> {
    Err(RuntimeError::Eval(msg.into()))
}

struct Scope {
    name: String,
    value: Value,
    next: Env,
}

/// Persistent lexical environment.
#[derive(Clone, Default)]
pub struct Env(Option<Arc<Scope>>);

impl Env {
    pub fn new() -> Self {
        Env(None)
    }

    pub fn bind(&self, name: &str, value: Value) -> Env {
        Env(Some(Arc::new(Scope { name: name.to_string(), value, next: self.clone() })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        let mut cur = &self.0;
        while let Some(s) = cur {
            if s.name == name {
                return Some(&s.value);
            }
            cur = &s.next.0;
        }
        None
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = &self.0;
        while let Some(s) = cur {
            out.push(s.name.clone());
            cur = &s.next.0;
        }
        out
    }
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Env{:?}", self.names())
    }
}

/// Binds `v` against `p`. Pairs of random variables or symbolic terms are
/// not destructured (they never are, values stay structured).
pub fn bind_pattern(env: &Env, p: &Pattern, v: &Value) -> RResult<Env> {
    match (p, v) {
        (Pattern::Var(x), _) => Ok(env.bind(x, v.clone())),
        (Pattern::Wild, _) => Ok(env.clone()),
        (Pattern::Unit, Value::Unit) => Ok(env.clone()),
        (Pattern::Pair(a, b), Value::Pair(pv)) => {
            let env = bind_pattern(env, a, &pv.0)?;
            bind_pattern(&env, b, &pv.1)
        }
        _ => eval_err(format!("pattern {p} does not match value {v}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub particles: usize,
    pub seed: u64,
    /// Record delayed-sampling traces in every particle.
    pub record_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { particles: 100, seed: 0, record_trace: false }
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub state: Value,
    pub graph: DsGraph,
    pub trace: Trace,
    pub weight: f64,
    pub rng: ChaCha8Rng,
}

/// A stream instance created by `infer`.
#[derive(Debug, Clone)]
pub struct PInstance {
    pub particles: Vec<Particle>,
    pub step: u64,
    pub site: u64,
    pub def: Arc<StreamFn>,
    pub config: RunConfig,
}

fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6d75_665f_7365_6564, |acc, p| mix64(acc ^ mix64(*p)))
}

fn name_hash(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

const RESAMPLE: u64 = 1;
const PARTICLE: u64 = 2;
const SUMMARY: u64 = 3;

/// Probabilistic context threaded through a step of one particle.
pub struct ProbCtx<'a> {
    pub ds: Ds<'a, ChaCha8Rng>,
    pub weight: f64,
}

/// Evaluator shared by deterministic and probabilistic code.
pub struct Interpreter {
    pub config: RunConfig,
    infer_count: Cell<u64>,
}

impl Interpreter {
    pub fn new(config: RunConfig) -> Self {
        Interpreter { config, infer_count: Cell::new(0) }
    }

    /// Evaluates the declarations of a checked program.
    pub fn eval_decls(&self, typed: &TypedProgram) -> RResult<Env> {
        let mut env = Env::new();
        for d in &typed.program.decls {
            match d {
                Decl::Val(p, e) => {
                    let v = self.eval(e, &env, None)?;
                    env = bind_pattern(&env, p, &v)?;
                }
                Decl::Fun(f, p, body) => {
                    let c = Closure { param: p.clone(), body: body.clone(), env: env.clone() };
                    env = env.bind(f, Value::Closure(Arc::new(c)));
                }
                Decl::Stream(s) => {
                    let prob = typed.streams.get(&s.name).map_or(false, |sig| sig.prob);
                    let f = StreamFn { decl: Arc::new(s.clone()), env: env.clone(), prob };
                    env = env.bind(&s.name, Value::StreamFn(Arc::new(f)));
                }
            }
        }
        Ok(env)
    }

    fn lookup<'e>(&self, env: &'e Env, x: &str) -> RResult<&'e Value> {
        env.lookup(x).ok_or_else(|| RuntimeError::Eval(format!("unbound variable `{x}`")))
    }

    /// Forces a value to concrete data, sampling its random variables.
    fn force(&self, v: &Value, prob: Option<&mut ProbCtx>) -> RResult<Concrete> {
        if v.has_rv() {
            match prob {
                Some(p) => p.ds.value(v),
                None => eval_err(format!("random value {v} in deterministic context")),
            }
        } else {
            match v.to_concrete() {
                Some(c) => Ok(c),
                None => eval_err(format!("{v} is not first-order data")),
            }
        }
    }

    fn force_int(&self, v: &Value, prob: Option<&mut ProbCtx>) -> RResult<i64> {
        match v {
            Value::Int(i) => Ok(*i),
            _ => match self.force(v, prob)? {
                Concrete::Int(i) => Ok(i),
                c => eval_err(format!("expected an int, found {c}")),
            },
        }
    }

    fn force_bool(&self, v: &Value, prob: Option<&mut ProbCtx>) -> RResult<bool> {
        match v {
            Value::Bool(b) => Ok(*b),
            _ => match self.force(v, prob)? {
                Concrete::Bool(b) => Ok(b),
                c => eval_err(format!("expected a bool, found {c}")),
            },
        }
    }

    fn force_seq(&self, v: &Value, prob: Option<&mut ProbCtx>) -> RResult<Arc<Vec<Value>>> {
        match v {
            Value::List(xs) | Value::Array(xs) => Ok(xs.clone()),
            _ => match Value::from_concrete(&self.force(v, prob)?) {
                Value::List(xs) | Value::Array(xs) => Ok(xs),
                other => eval_err(format!("expected a collection, found {other}")),
            },
        }
    }

    fn apply(&self, f: &Value, arg: Value, prob: Option<&mut ProbCtx>) -> RResult<Value> {
        match f {
            Value::Closure(c) => {
                let env = bind_pattern(&c.env, &c.param, &arg)?;
                self.eval(&c.body, &env, prob)
            }
            other => eval_err(format!("{other} is not a function")),
        }
    }

    pub fn eval(&self, e: &Expr, env: &Env, mut prob: Option<&mut ProbCtx>) -> RResult<Value> {
        match e {
            Expr::Const(c) => Ok(match c {
                Const::Unit => Value::Unit,
                Const::Bool(b) => Value::Bool(*b),
                Const::Int(i) => Value::Int(*i),
                Const::Real(r) => Value::Real(*r),
            }),
            Expr::Var(x) => self.lookup(env, x).cloned(),
            Expr::Pair(a, b) => {
                let a = self.eval(a, env, prob.as_deref_mut())?;
                let b = self.eval(b, env, prob)?;
                Ok(Value::pair(a, b))
            }
            Expr::Lambda(p, body) => Ok(Value::Closure(Arc::new(Closure {
                param: p.clone(),
                body: (**body).clone(),
                env: env.clone(),
            }))),
            Expr::App(f, arg) => {
                let f = self.lookup(env, f)?.clone();
                let arg = self.eval(arg, env, prob.as_deref_mut())?;
                self.apply(&f, arg, prob)
            }
            Expr::Op(op, arg) => {
                let arg = self.eval(arg, env, prob.as_deref_mut())?;
                self.eval_op(op, arg, prob)
            }
            Expr::If(c, a, b) => {
                let c = self.eval(c, env, prob.as_deref_mut())?;
                if self.force_bool(&c, prob.as_deref_mut())? {
                    self.eval(a, env, prob)
                } else {
                    self.eval(b, env, prob)
                }
            }
            Expr::Let(p, e1, e2) => {
                let v = self.eval(e1, env, prob.as_deref_mut())?;
                let env = bind_pattern(env, p, &v)?;
                self.eval(e2, &env, prob)
            }
            Expr::Init(s) => match self.lookup(env, s)? {
                Value::StreamFn(f) if !f.prob => {
                    let state = self.eval(&f.decl.init, &f.env, None)?;
                    Ok(Value::DInstance(Arc::new(DInstance { state, def: f.clone() })))
                }
                other => eval_err(format!("init of {other}")),
            },
            Expr::Infer(s) => match self.lookup(env, s)? {
                Value::StreamFn(f) => Ok(Value::PInstance(Arc::new(self.new_pinstance(f)?))),
                other => eval_err(format!("infer of {other}")),
            },
            Expr::Unfold(x, arg) => {
                let inst = self.lookup(env, x)?.clone();
                let input = self.eval(arg, env, prob)?;
                self.unfold(&inst, input)
            }
            Expr::Sample(d) => {
                let d = self.eval(d, env, prob.as_deref_mut())?;
                match prob {
                    Some(p) => Ok(Value::Rv(p.ds.assume(&d)?)),
                    None => eval_err("sample outside a probabilistic stream"),
                }
            }
            Expr::Observe(d, v) => {
                let d = self.eval(d, env, prob.as_deref_mut())?;
                let v = self.eval(v, env, prob.as_deref_mut())?;
                let p = match prob {
                    Some(p) => p,
                    None => return eval_err("observe outside a probabilistic stream"),
                };
                let x = p.ds.assume(&d)?;
                let obs = if v.has_rv() { p.ds.value(&v)? } else { self.force(&v, None)? };
                p.weight *= p.ds.observe(x, &obs)?;
                Ok(Value::Unit)
            }
        }
    }

    fn eval_op(&self, op: &str, arg: Value, mut prob: Option<&mut ProbCtx>) -> RResult<Value> {
        if is_symbolic_op(op) {
            let arg = match &prob {
                Some(p) if arg.has_rv() => fold_realized(&arg, p.ds.graph),
                _ => arg,
            };
            if arg.has_rv() {
                return Ok(Value::sym(op, arg));
            }
            let c = self.force(&arg, None)?;
            return Ok(Value::from_concrete(&apply_concrete(op, &c)?));
        }
        let args = |n: usize| -> RResult<Vec<Value>> {
            let mut out = Vec::with_capacity(n);
            let mut cur = arg.clone();
            for _ in 1..n {
                match cur {
                    Value::Pair(p) => {
                        out.push(p.0.clone());
                        cur = p.1.clone();
                    }
                    _ => return eval_err(format!("{op}: expected {n} arguments")),
                }
            }
            out.push(cur);
            Ok(out)
        };
        match op {
            "eval" => Ok(Value::from_concrete(&self.force(&arg, prob)?)),
            "mean" => match &arg {
                Value::Dist(d) => Ok(Value::Real(stats(d)?.0)),
                other => eval_err(format!("mean of {other}")),
            },
            "List.nil" => Ok(Value::List(Arc::new(Vec::new()))),
            "Array.empty" => Ok(Value::Array(Arc::new(Vec::new()))),
            "List.init" | "Array.init" => {
                let a = args(2)?;
                let n = self.force_int(&a[0], prob.as_deref_mut())?;
                let mut out = Vec::with_capacity(n.max(0) as usize);
                for i in 0..n.max(0) {
                    out.push(self.apply(&a[1], Value::Int(i), prob.as_deref_mut())?);
                }
                Ok(if op == "List.init" { Value::List(Arc::new(out)) } else { Value::Array(Arc::new(out)) })
            }
            "List.map" => {
                let a = args(2)?;
                let xs = self.force_seq(&a[1], prob.as_deref_mut())?;
                let mut out = Vec::with_capacity(xs.len());
                for x in xs.iter() {
                    out.push(self.apply(&a[0], x.clone(), prob.as_deref_mut())?);
                }
                Ok(Value::List(Arc::new(out)))
            }
            "List.filter" => {
                let a = args(2)?;
                let xs = self.force_seq(&a[1], prob.as_deref_mut())?;
                let mut out = Vec::new();
                for x in xs.iter() {
                    let keep = self.apply(&a[0], x.clone(), prob.as_deref_mut())?;
                    if self.force_bool(&keep, prob.as_deref_mut())? {
                        out.push(x.clone());
                    }
                }
                Ok(Value::List(Arc::new(out)))
            }
            "List.append" => {
                let a = args(2)?;
                let mut xs = (*self.force_seq(&a[0], prob.as_deref_mut())?).clone();
                xs.extend(self.force_seq(&a[1], prob)?.iter().cloned());
                Ok(Value::List(Arc::new(xs)))
            }
            "List.length" => Ok(Value::Int(self.force_seq(&arg, prob)?.len() as i64)),
            "List.iter2" => {
                let a = args(3)?;
                let xs = self.force_seq(&a[1], prob.as_deref_mut())?;
                let ys = self.force_seq(&a[2], prob.as_deref_mut())?;
                if xs.len() != ys.len() {
                    return eval_err(format!("List.iter2: lengths {} and {}", xs.len(), ys.len()));
                }
                for (x, y) in xs.iter().zip(ys.iter()) {
                    self.apply(&a[0], Value::pair(x.clone(), y.clone()), prob.as_deref_mut())?;
                }
                Ok(Value::Unit)
            }
            "Array.get" => {
                let a = args(2)?;
                let xs = self.force_seq(&a[0], prob.as_deref_mut())?;
                let i = self.force_int(&a[1], prob)?;
                usize::try_from(i)
                    .ok()
                    .and_then(|i| xs.get(i).cloned())
                    .ok_or_else(|| RuntimeError::Eval(format!("Array.get: index {i} out of bounds 0..{}", xs.len())))
            }
            _ => eval_err(format!("unknown operator `{op}`")),
        }
    }

    fn new_pinstance(&self, f: &Arc<StreamFn>) -> RResult<PInstance> {
        let k = self.infer_count.get();
        self.infer_count.set(k + 1);
        let site = derive_seed(&[name_hash(&f.decl.name), k]);
        let state = self.eval(&f.decl.init, &f.env, None)?;
        if state.has_rv() {
            return eval_err("initial state of an inferred stream must be deterministic");
        }
        let n = self.config.particles.max(1);
        let particles = (0..n)
            .map(|i| Particle {
                state: state.clone(),
                graph: DsGraph::new(),
                trace: Trace::new(),
                weight: 1.0,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(&[self.config.seed, site, PARTICLE, 0, i as u64])),
            })
            .collect();
        Ok(PInstance { particles, step: 0, site, def: f.clone(), config: self.config })
    }

    /// Applies a stream instance to one input.
    pub fn unfold(&self, inst: &Value, input: Value) -> RResult<Value> {
        match inst {
            Value::DInstance(d) => {
                let decl = &d.def.decl;
                let env = bind_pattern(&d.def.env, &decl.state, &d.state)?;
                let env = bind_pattern(&env, &decl.input, &input)?;
                let (out, state) = split_result(self.eval(&decl.body, &env, None)?)?;
                let next = DInstance { state, def: d.def.clone() };
                Ok(Value::pair(out, Value::DInstance(Arc::new(next))))
            }
            Value::PInstance(p) => {
                let (d, next) = self.run_infer_step(p, &input)?;
                Ok(Value::pair(Value::Dist(Arc::new(d)), Value::PInstance(Arc::new(next))))
            }
            other => eval_err(format!("unfold of {other}")),
        }
    }

    /// One step of the particle filter.
    pub fn run_infer_step(&self, inst: &PInstance, input: &Value) -> RResult<(MDistr, PInstance)> {
        if input.has_rv() {
            return eval_err("input of an inferred stream must be deterministic");
        }
        let n = inst.particles.len();
        let weights: Vec<f64> = inst.particles.iter().map(|p| p.weight).collect();
        let norm = normalize(&weights)?;
        let step = inst.step + 1;
        let cfg = inst.config;

        let mut rs = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, inst.site, RESAMPLE, step]));
        let picks = multinomial(&norm, n, &mut rs);

        let decl = &inst.def.decl;
        let mut particles = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        for (i, &src) in picks.iter().enumerate() {
            let old = &inst.particles[src];
            let mut graph = old.graph.clone();
            let mut trace = if cfg.record_trace { old.trace.clone() } else { Trace::new() };
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, inst.site, PARTICLE, step, i as u64]));
            let env = bind_pattern(&inst.def.env, &decl.state, &old.state)?;
            let env = bind_pattern(&env, &decl.input, input)?;
            let (result, weight) = {
                let mut ctx = ProbCtx {
                    ds: Ds {
                        graph: &mut graph,
                        rng: &mut rng,
                        trace: if cfg.record_trace { Some(&mut trace) } else { None },
                    },
                    weight: 1.0,
                };
                let r = self.eval(&decl.body, &env, Some(&mut ctx))?;
                (r, ctx.weight)
            };
            let (out, state) = split_result(result)?;
            let mut srng =
                ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, inst.site, SUMMARY, step, i as u64]));
            outputs.push(distribution(&out, &graph, &mut srng)?);
            particles.push(Particle { state, graph, trace, weight, rng });
        }

        let raw: Vec<f64> = particles.iter().map(|p| p.weight).collect();
        let wbar = normalize(&raw)?;
        for (p, w) in particles.iter_mut().zip(&wbar) {
            p.weight = *w;
        }
        let out = mixture(wbar, outputs);
        let next = PInstance { particles, step, site: inst.site, def: inst.def.clone(), config: cfg };
        Ok((out, next))
    }
}

fn split_result(v: Value) -> RResult<(Value, Value)> {
    match v {
        Value::Pair(p) => Ok((p.0.clone(), p.1.clone())),
        other => eval_err(format!("step must return an (output, state) pair, found {other}")),
    }
}

/// Normalized weights; fails when all are zero or not finite.
pub fn normalize(w: &[f64]) -> RResult<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() || w.iter().any(|x| x.is_nan()) {
        return Err(RuntimeError::DegenerateWeights);
    }
    Ok(w.iter().map(|x| x / total).collect())
}

fn multinomial<R: Rng + ?Sized>(w: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for x in w {
        acc += x;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            cdf.partition_point(|c| *c <= u).min(w.len() - 1)
        })
        .collect()
}

fn mixture(w: Vec<f64>, ds: Vec<MDistr>) -> MDistr {
    if ds.iter().all(|d| *d == ds[0]) {
        return ds.into_iter().next().unwrap();
    }
    MDistr::Mixture(w.into_iter().zip(ds).collect())
}

/// Marginal of the current value of a random variable, when it can be read
/// from the graph without sampling.
fn exact_marginal(g: &DsGraph, x: NodeId) -> RResult<Option<MDistr>> {
    let state = match g.state(x) {
        Some(s) => s,
        None => return Err(RuntimeError::Invariant(format!("unknown node {x}"))),
    };
    match state {
        NodeState::Realized(c) => Ok(Some(MDistr::Delta(c.clone()))),
        NodeState::Marginalized { m, child: None } => Ok(Some(m.clone())),
        NodeState::Marginalized { m, child: Some((c, cd)) } => match g.state(*c) {
            Some(NodeState::Realized(v)) => Ok(Some(make_conditional(m, cd, v)?)),
            _ => {
                // Stale only if some node further down the chain has been realized.
                let mut cur = *c;
                loop {
                    match g.state(cur) {
                        Some(NodeState::Marginalized { child: Some((next, _)), .. }) => {
                            if matches!(g.state(*next), Some(NodeState::Realized(_))) {
                                return Ok(None);
                            }
                            cur = *next;
                        }
                        _ => return Ok(Some(m.clone())),
                    }
                }
            }
        },
        NodeState::Initialized { parent, cd } => {
            let top = exact_marginal(g, *parent)?;
            Ok(match top {
                Some(MDistr::Delta(v)) => Some(cdistr_to_mdistr(cd, &v)?),
                Some(pm) => Some(make_marginal(&pm, cd)?),
                None => None,
            })
        }
    }
}

fn rv_marginal<R: Rng + ?Sized>(g: &DsGraph, x: NodeId, rng: &mut R) -> RResult<MDistr> {
    if let Some(m) = exact_marginal(g, x)? {
        return Ok(m);
    }
    let mut sim = g.clone();
    sim.graft(x, rng)?;
    sim.force_condition(x)?;
    match sim.state(x) {
        Some(NodeState::Marginalized { m, child: None }) => Ok(m.clone()),
        Some(NodeState::Realized(c)) => Ok(MDistr::Delta(c.clone())),
        other => Err(RuntimeError::Invariant(format!("simulated graft left {x} as {other:?}"))),
    }
}

const MC_DRAWS: usize = 1000;

/// Distribution of a value under the current graph; the graph is left
/// untouched.
pub fn distribution<R: Rng + ?Sized>(v: &Value, g: &DsGraph, rng: &mut R) -> RResult<MDistr> {
    if !v.has_rv() {
        return match v.to_concrete() {
            Some(c) => Ok(MDistr::Delta(c)),
            None => eval_err(format!("{v} has no distribution")),
        };
    }
    match v {
        Value::Rv(x) => rv_marginal(g, *x, rng),
        Value::Pair(p) => Ok(MDistr::Product(
            ProductKind::Pair,
            vec![distribution(&p.0, g, rng)?, distribution(&p.1, g, rng)?],
        )),
        Value::List(xs) | Value::Array(xs) => {
            let kind = if matches!(v, Value::List(_)) { ProductKind::List } else { ProductKind::Array };
            Ok(MDistr::Product(kind, xs.iter().map(|x| distribution(x, g, rng)).collect::<RResult<_>>()?))
        }
        _ => {
            let ids = v.frv();
            if ids.len() == 1 {
                let y = *ids.iter().next().unwrap();
                if let Some((s, t)) = affine_form(v, y) {
                    if let MDistr::Gaussian { mean, var } = rv_marginal(g, y, rng)? {
                        return Ok(if s == 0.0 {
                            MDistr::Delta(Concrete::Real(t))
                        } else {
                            MDistr::gaussian(s * mean + t, s * s * var)?
                        });
                    }
                }
            }
            monte_carlo(v, g, rng)
        }
    }
}

fn monte_carlo<R: Rng + ?Sized>(v: &Value, g: &DsGraph, rng: &mut R) -> RResult<MDistr> {
    let mut atoms: Vec<(Concrete, f64)> = Vec::new();
    for _ in 0..MC_DRAWS {
        let mut sim = g.clone();
        let c = {
            let mut ds = Ds { graph: &mut sim, rng: &mut *rng, trace: None };
            ds.value(v)?
        };
        match atoms.iter_mut().find(|(a, _)| *a == c) {
            Some((_, w)) => *w += 1.0,
            None => atoms.push((c, 1.0)),
        }
    }
    Ok(MDistr::categorical(atoms)?)
}

/// Step-by-step execution of a program's main stream.
pub struct Runner {
    interp: Interpreter,
    instance: Value,
    steps: u64,
}

impl Runner {
    pub fn new(typed: &TypedProgram, config: RunConfig) -> Result<Runner, MufError> {
        let interp = Interpreter::new(config);
        let env = interp.eval_decls(typed)?;
        let main = Expr::Init(typed.program.main.clone());
        let instance = interp.eval(&main, &env, None)?;
        Ok(Runner { interp, instance, steps: 0 })
    }

    pub fn step(&mut self, input: Value) -> RResult<Value> {
        let r = self.interp.unfold(&self.instance, input)?;
        let (out, inst) = split_result(r)?;
        self.instance = inst;
        self.steps += 1;
        Ok(out)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// State of the main stream.
    pub fn state(&self) -> &Value {
        match &self.instance {
            Value::DInstance(d) => &d.state,
            other => other,
        }
    }

    /// The first inferred instance held in the main stream's state.
    pub fn pinstance(&self) -> Option<&PInstance> {
        fn find(v: &Value) -> Option<&PInstance> {
            match v {
                Value::PInstance(p) => Some(p),
                Value::Pair(p) => find(&p.0).or_else(|| find(&p.1)),
                Value::List(xs) | Value::Array(xs) => xs.iter().find_map(find),
                _ => None,
            }
        }
        find(self.state())
    }
}

/// Folds `unfold` over the inputs starting from `init main`.
pub fn run_program(program: &Program, inputs: &[Value], config: RunConfig) -> Result<Vec<Value>, MufError> {
    let typed = typecheck_core(program)?;
    let mut runner = Runner::new(&typed, config)?;
    inputs.iter().map(|i| runner.step(i.clone()).map_err(MufError::from)).collect()
}

/// The zero value of a first-order type; used when no input is supplied.
pub fn default_input(t: &CoreType) -> Value {
    match t {
        CoreType::Bool => Value::Bool(false),
        CoreType::Int => Value::Int(0),
        CoreType::Real => Value::Real(0.0),
        CoreType::Prod(a, b) => Value::pair(default_input(a), default_input(b)),
        CoreType::List(_) => Value::List(Arc::new(Vec::new())),
        CoreType::Array(_) => Value::Array(Arc::new(Vec::new())),
        _ => Value::Unit,
    }
}
