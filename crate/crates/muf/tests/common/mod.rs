//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use muf::distributions::{Concrete, MDistr};
use muf::ds_graph::{Ds, DsGraph, NodeId, Trace, TraceEvent};
use muf::value::Value;
use rand::Rng;

pub const GRID: usize = 1 << 16;

/// Trapezoid rule on `GRID` points.
pub fn trapz(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let h = (hi - lo) / (GRID - 1) as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..GRID - 1 {
        acc += f(lo + h * i as f64);
    }
    acc * h
}

/// Mean and variance of the density proportional to `w` on `[lo, hi]`.
pub fn moments_of(w: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let z = trapz(&w, lo, hi);
    let mean = trapz(|x| x * w(x), lo, hi) / z;
    let var = trapz(|x| (x - mean).powi(2) * w(x), lo, hi) / z;
    (mean, var)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn beta_unnorm(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return if (x == 0.0 && a == 1.0) || (x == 1.0 && b == 1.0) { 1.0 } else { 0.0 };
    }
    x.powf(a - 1.0) * (1.0 - x).powf(b - 1.0)
}

fn gaussian_support(m0: f64, v0: f64) -> (f64, f64) {
    let sd = v0.sqrt();
    (m0 - 10.0 * sd, m0 + 10.0 * sd)
}

/// Posterior of x ~ N(m0, v0) after observing y ~ N(s x + t, v).
pub fn gaussian_posterior_oracle(m0: f64, v0: f64, v: f64, s: f64, t: f64, y: f64) -> (f64, f64) {
    let (lo, hi) = gaussian_support(m0, v0);
    moments_of(|x| normal_pdf(x, m0, v0) * normal_pdf(y, s * x + t, v), lo, hi)
}

/// Moments of y when x ~ N(m0, v0) and y | x ~ N(s x + t, v).
pub fn gaussian_marginal_oracle(m0: f64, v0: f64, v: f64, s: f64, t: f64) -> (f64, f64) {
    let (lo, hi) = gaussian_support(m0, v0);
    let mean = trapz(|x| (s * x + t) * normal_pdf(x, m0, v0), lo, hi);
    let second = trapz(|x| ((s * x + t).powi(2) + v) * normal_pdf(x, m0, v0), lo, hi);
    (mean, second - mean * mean)
}

pub fn beta_posterior_oracle(a: f64, b: f64, obs: bool) -> (f64, f64) {
    let lik = |p: f64| if obs { p } else { 1.0 - p };
    moments_of(|p| beta_unnorm(p, a, b) * lik(p), 0.0, 1.0)
}

/// Probability of `true` when p ~ Beta(a, b) and y | p ~ Bernoulli(p).
pub fn beta_bernoulli_marginal_oracle(a: f64, b: f64) -> f64 {
    let z = trapz(|p| beta_unnorm(p, a, b), 0.0, 1.0);
    trapz(|p| p * beta_unnorm(p, a, b), 0.0, 1.0) / z
}

pub fn gaussian_params(d: &MDistr) -> (f64, f64) {
    match d {
        MDistr::Gaussian { mean, var } => (*mean, *var),
        other => panic!("expected a Gaussian, got {other}"),
    }
}

pub fn beta_params(d: &MDistr) -> (f64, f64) {
    match d {
        MDistr::Beta { a, b } => (*a, *b),
        other => panic!("expected a Beta, got {other}"),
    }
}

// Trace oracles.

fn assumes(trace: &[TraceEvent]) -> Vec<(NodeId, Option<NodeId>)> {
    trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Assume { child, parent } => Some((*child, *parent)),
            _ => None,
        })
        .collect()
}

fn consumed(trace: &[TraceEvent]) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for e in trace {
        match e {
            TraceEvent::Obs(x) => {
                out.insert(*x);
            }
            TraceEvent::Eval(xs) => out.extend(xs.iter().copied()),
            _ => {}
        }
    }
    out
}

fn is_m_consumed(x: NodeId, m: usize, edges: &[(NodeId, Option<NodeId>)], cons: &BTreeSet<NodeId>) -> bool {
    if cons.contains(&x) {
        return true;
    }
    m > 0 && edges.iter().any(|(c, p)| *p == Some(x) && is_m_consumed(*c, m - 1, edges, cons))
}

/// Smallest m for which each assumed variable is m-consumed, by direct
/// recursion on the definition.
pub fn brute_m_consumed(trace: &[TraceEvent]) -> BTreeMap<NodeId, Option<usize>> {
    let edges = assumes(trace);
    let cons = consumed(trace);
    edges
        .iter()
        .map(|(x, _)| (*x, (0..=edges.len()).find(|m| is_m_consumed(*x, *m, &edges, &cons))))
        .collect()
}

/// Every unseparated path in the trace, as variable sequences.
pub fn enumerate_paths(trace: &[TraceEvent]) -> Vec<Vec<NodeId>> {
    let edges = assumes(trace);
    let cons = consumed(trace);
    let mut out = Vec::new();
    let mut stack: Vec<Vec<NodeId>> =
        edges.iter().filter(|(x, _)| !cons.contains(x)).map(|(x, _)| vec![*x]).collect();
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        for (c, p) in &edges {
            if *p == Some(last) && !cons.contains(c) {
                let mut next = path.clone();
                next.push(*c);
                stack.push(next);
            }
        }
        out.push(path);
    }
    out
}

/// Longest unseparated path starting at each assumed variable, in
/// variables; 0 when the variable is consumed.
pub fn brute_paths(trace: &[TraceEvent]) -> BTreeMap<NodeId, usize> {
    let mut out: BTreeMap<NodeId, usize> = assumes(trace).into_iter().map(|(x, _)| (x, 0)).collect();
    for p in enumerate_paths(trace) {
        let slot = out.get_mut(&p[0]).unwrap();
        *slot = (*slot).max(p.len());
    }
    out
}

/// A well-formed random trace with at most `max_len` events.
pub fn random_trace<R: Rng>(rng: &mut R, max_len: usize) -> Trace {
    let len = rng.gen_range(0..=max_len);
    let mut n = 0usize;
    let mut events = Vec::new();
    for _ in 0..len {
        let roll = rng.gen_range(0..10);
        if n == 0 || roll < 6 {
            let parent = if n > 0 && rng.gen_bool(0.7) { Some(NodeId(rng.gen_range(0..n))) } else { None };
            events.push(TraceEvent::Assume { child: NodeId(n), parent });
            n += 1;
        } else if roll < 8 {
            events.push(TraceEvent::Obs(NodeId(rng.gen_range(0..n))));
        } else {
            let k = rng.gen_range(0..=2.min(n));
            let xs: BTreeSet<NodeId> = (0..k).map(|_| NodeId(rng.gen_range(0..n))).collect();
            events.push(TraceEvent::Eval(xs.into_iter().collect()));
        }
    }
    Trace::from_events(events)
}

// Random high-level operation sequences.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Real,
    Prob,
    Bool,
}

#[derive(Debug, Clone)]
pub enum Op {
    Gaussian { parent: Option<usize>, scale: f64, shift: f64, var: f64 },
    Beta { a: f64, b: f64 },
    Bernoulli { parent: Option<usize> },
    Observe(usize),
    Value(usize),
}

/// Interprets `Op`s against a delayed-sampling graph, choosing operands
/// among existing nodes.
pub struct OpRunner {
    pub graph: DsGraph,
    pub trace: Trace,
    pub kinds: Vec<Kind>,
    pub observed: BTreeSet<NodeId>,
}

impl OpRunner {
    pub fn new() -> Self {
        OpRunner { graph: DsGraph::new(), trace: Trace::new(), kinds: Vec::new(), observed: BTreeSet::new() }
    }

    fn pick(kinds: &[Kind], i: usize, kind: Option<Kind>) -> Option<NodeId> {
        let cands: Vec<usize> = (0..kinds.len()).filter(|j| kind.map_or(true, |k| kinds[*j] == k)).collect();
        if cands.is_empty() {
            None
        } else {
            Some(NodeId(cands[i % cands.len()]))
        }
    }

    pub fn apply<R: Rng>(&mut self, op: &Op, rng: &mut R) {
        let mut ds = Ds { graph: &mut self.graph, rng, trace: Some(&mut self.trace) };
        match op {
            Op::Gaussian { parent, scale, shift, var } => {
                let mean = match parent.and_then(|p| Self::pick(&self.kinds, p, Some(Kind::Real))) {
                    Some(y) => Value::sym(
                        "plus",
                        Value::pair(Value::sym("mult", Value::pair(Value::Real(*scale), Value::Rv(y))), Value::Real(*shift)),
                    ),
                    None => Value::Real(*shift),
                };
                let x = ds.assume(&Value::sym("gaussian", Value::pair(mean, Value::Real(*var)))).unwrap();
                assert_eq!(x.0, self.kinds.len());
                self.kinds.push(Kind::Real);
            }
            Op::Beta { a, b } => {
                ds.assume(&Value::sym("beta", Value::pair(Value::Real(*a), Value::Real(*b)))).unwrap();
                self.kinds.push(Kind::Prob);
            }
            Op::Bernoulli { parent } => {
                let p = match parent.and_then(|p| Self::pick(&self.kinds, p, Some(Kind::Prob))) {
                    Some(y) => Value::Rv(y),
                    None => Value::Real(0.5),
                };
                ds.assume(&Value::sym("bernoulli", p)).unwrap();
                self.kinds.push(Kind::Bool);
            }
            Op::Observe(i) => {
                let live: Vec<usize> = (0..self.kinds.len())
                    .filter(|j| !matches!(ds.graph.state(NodeId(*j)), Some(muf::ds_graph::NodeState::Realized(_))))
                    .collect();
                if live.is_empty() {
                    return;
                }
                let x = NodeId(live[i % live.len()]);
                let v = match self.kinds[x.0] {
                    Kind::Real => Concrete::Real(0.25),
                    Kind::Prob => Concrete::Real(0.5),
                    Kind::Bool => Concrete::Bool(true),
                };
                ds.observe(x, &v).unwrap();
                self.observed.insert(x);
            }
            Op::Value(i) => {
                if let Some(x) = Self::pick(&self.kinds, *i, None) {
                    ds.value(&Value::Rv(x)).unwrap();
                }
            }
        }
    }
}

impl Default for OpRunner {
    fn default() -> Self {
        Self::new()
    }
}

pub fn random_op<R: Rng>(rng: &mut R) -> Op {
    match rng.gen_range(0..10) {
        0..=3 => Op::Gaussian {
            parent: if rng.gen_bool(0.8) { Some(rng.gen_range(0..64)) } else { None },
            scale: [1.0, 2.0, -0.5][rng.gen_range(0..3)],
            shift: rng.gen_range(-1.0..1.0),
            var: rng.gen_range(0.5..2.0),
        },
        4 => Op::Beta { a: rng.gen_range(1.0..3.0), b: rng.gen_range(1.0..3.0) },
        5 => Op::Bernoulli { parent: Some(rng.gen_range(0..64)) },
        6..=7 => Op::Observe(rng.gen_range(0..64)),
        _ => Op::Value(rng.gen_range(0..64)),
    }
}

// Random programs.

/// A small random stream program over real-valued state, wrapped in the
/// usual `infer` driver.
pub fn random_program<R: Rng>(rng: &mut R) -> String {
    let width = rng.gen_range(1..=3);
    let state: Vec<String> = (0..width).map(|i| format!("s{i}")).collect();
    let mut atoms: Vec<String> = state.clone();
    let mut body = String::new();
    let stmts = rng.gen_range(1..=5);
    let mut fresh = 0;
    let atom = |rng: &mut R, atoms: &[String]| -> String {
        match rng.gen_range(0..8) {
            0 => format!("{:.1}", rng.gen_range(-2.0..2.0)),
            1 => {
                let a = &atoms[rng.gen_range(0..atoms.len())];
                format!("plus ({a}, 1.)")
            }
            2 => {
                let a = &atoms[rng.gen_range(0..atoms.len())];
                let b = &atoms[rng.gen_range(0..atoms.len())];
                format!("mult ({a}, {b})")
            }
            _ => atoms[rng.gen_range(0..atoms.len())].clone(),
        }
    };
    for _ in 0..stmts {
        let a = atom(rng, &atoms);
        match rng.gen_range(0..10) {
            0..=3 => {
                let x = format!("x{fresh}");
                fresh += 1;
                body.push_str(&format!("    let {x} = sample (gaussian ({a}, 1.)) in\n"));
                atoms.push(x);
            }
            4..=6 => body.push_str(&format!("    let () = observe (gaussian ({a}, 1.), obs) in\n")),
            7 => {
                let x = format!("x{fresh}");
                fresh += 1;
                body.push_str(&format!("    let {x} = eval ({a}) in\n"));
                atoms.push(x);
            }
            8 => {
                let x = format!("x{fresh}");
                fresh += 1;
                let b = atom(rng, &atoms);
                body.push_str(&format!("    let {x} = if lt ({a}, 0.) then {a} else {b} in\n"));
                atoms.push(x);
            }
            _ => {
                let x = format!("x{fresh}");
                fresh += 1;
                body.push_str(&format!("    let {x} = sample (gaussian (0., 2.)) in\n"));
                atoms.push(x);
            }
        }
    }
    let out = atom(rng, &atoms);
    let next: Vec<String> = (0..width).map(|_| atom(rng, &atoms)).collect();
    let init: Vec<&str> = (0..width).map(|_| "0.").collect();
    let tuple = |xs: &[String]| if xs.len() == 1 { xs[0].clone() } else { format!("({})", xs.join(", ")) };
    format!(
        "val f = stream {{\n  init = {init};\n  step ({st}, obs) =\n{body}    ({out}, {next})\n}}\n\n\
         val main = stream {{\n  init = infer f;\n  step (f, args) = unfold (f, args)\n}}\n",
        init = if width == 1 { "0.".to_string() } else { format!("({})", init.join(", ")) },
        st = tuple(&state),
        next = tuple(&next),
    )
}
