//! The delayed-sampling graph: node states, the low-level graph operations,
//! the traced high-level interface, and reachability.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;

use crate::builtins::apply_concrete;
use crate::chunked::ChunkedVec;
use crate::distributions::{
    cdistr_to_mdistr, draw, make_conditional, make_marginal, pdf, CDistr, Concrete, MDistr,
};
use crate::error::RuntimeError;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeState {
    Initialized { parent: NodeId, cd: CDistr },
    Marginalized { m: MDistr, child: Option<(NodeId, CDistr)> },
    Realized(Concrete),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DsGraph {
    nodes: ChunkedVec<NodeState>,
}

type GResult<T> = Result<T, RuntimeError>;

fn invariant<T>(msg: String) -> GResult<T> {
    Err(RuntimeError::Invariant(msg))
}

impl DsGraph {
    pub fn new() -> Self {
        DsGraph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn state(&self, n: NodeId) -> Option<&NodeState> {
        self.nodes.get(n.0)
    }

    fn get(&self, n: NodeId) -> GResult<&NodeState> {
        match self.nodes.get(n.0) {
            Some(s) => Ok(s),
            None => invariant(format!("unknown node {n}")),
        }
    }

    fn set(&mut self, n: NodeId, s: NodeState) {
        self.nodes.set(n.0, s);
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn assume_constant(&mut self, m: MDistr) -> NodeId {
        self.nodes.push_back(NodeState::Marginalized { m, child: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn assume_conditional(&mut self, parent: NodeId, cd: CDistr) -> GResult<NodeId> {
        match self.get(parent)? {
            NodeState::Realized(_) => {
                return invariant(format!("assume_conditional under realized node {parent}"))
            }
            _ => {}
        }
        self.nodes.push_back(NodeState::Initialized { parent, cd });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn marginalize(&mut self, n: NodeId) -> GResult<()> {
        let (parent, cd) = match self.get(n)? {
            NodeState::Initialized { parent, cd } => (*parent, cd.clone()),
            other => return invariant(format!("marginalize {n} in state {other:?}")),
        };
        match self.get(parent)?.clone() {
            NodeState::Realized(x) => {
                let m = cdistr_to_mdistr(&cd, &x)?;
                self.set(n, NodeState::Marginalized { m, child: None });
            }
            NodeState::Marginalized { m: pm, child: None } => {
                let m = make_marginal(&pm, &cd)?;
                self.set(parent, NodeState::Marginalized { m: pm, child: Some((n, cd)) });
                self.set(n, NodeState::Marginalized { m, child: None });
            }
            other => {
                return invariant(format!("marginalize {n}: parent {parent} in state {other:?}"))
            }
        }
        Ok(())
    }

    pub fn force_condition(&mut self, n: NodeId) -> GResult<()> {
        if let NodeState::Marginalized { m, child: Some((c, cd)) } = self.get(n)? {
            if let NodeState::Realized(x) = self.get(*c)? {
                let post = make_conditional(m, cd, x)?;
                self.set(n, NodeState::Marginalized { m: post, child: None });
            }
        }
        Ok(())
    }

    pub fn realize(&mut self, n: NodeId, v: Concrete) -> GResult<()> {
        self.get(n)?;
        self.set(n, NodeState::Realized(v));
        Ok(())
    }

    pub fn sample_node<R: Rng + ?Sized>(&mut self, n: NodeId, rng: &mut R) -> GResult<()> {
        self.force_condition(n)?;
        match self.get(n)? {
            NodeState::Marginalized { m, child: None } => {
                let x = draw(m, rng);
                self.set(n, NodeState::Realized(x));
                Ok(())
            }
            NodeState::Realized(_) => Ok(()),
            other => invariant(format!("sample {n} in state {other:?}")),
        }
    }

    /// Realizes the marginalized child chain below `n`, deepest first, then `n`.
    pub fn prune<R: Rng + ?Sized>(&mut self, n: NodeId, rng: &mut R) -> GResult<()> {
        let mut chain = vec![n];
        let mut cur = n;
        while let NodeState::Marginalized { child: Some((c, _)), .. } = self.get(cur)? {
            chain.push(*c);
            cur = *c;
            if chain.len() > self.nodes.len() {
                return invariant("cycle in marginalized chain".into());
            }
        }
        for x in chain.into_iter().rev() {
            self.sample_node(x, rng)?;
        }
        Ok(())
    }

    pub fn graft<R: Rng + ?Sized>(&mut self, n: NodeId, rng: &mut R) -> GResult<()> {
        // Walk up the initialized ancestors, then replay the recursive
        // definition from the top down.
        let mut path = vec![n];
        let mut cur = n;
        while let NodeState::Initialized { parent, .. } = self.get(cur)? {
            path.push(*parent);
            cur = *parent;
            if path.len() > self.nodes.len() + 1 {
                return invariant("cycle in initialized chain".into());
            }
        }
        let top = cur;
        if let NodeState::Marginalized { child: Some((c, _)), .. } = self.get(top)? {
            let c = *c;
            self.prune(c, rng)?;
        }
        for w in path.windows(2).rev() {
            let (child, parent) = (w[0], w[1]);
            self.force_condition(parent)?;
            self.marginalize(child)?;
        }
        Ok(())
    }

    /// Reflexive-transitive closure of the reachability relation.
    pub fn reachable(&self, roots: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = roots.iter().copied().collect();
        while let Some(x) = queue.pop_front() {
            if x.0 >= self.nodes.len() || !seen.insert(x) {
                continue;
            }
            if let Some(y) = self.successor(x) {
                queue.push_back(y);
            }
        }
        seen
    }

    fn successor(&self, x: NodeId) -> Option<NodeId> {
        match &self.nodes[x.0] {
            NodeState::Initialized { parent, .. } => Some(*parent),
            NodeState::Marginalized { child: Some((c, _)), .. } => match &self.nodes[c.0] {
                NodeState::Marginalized { .. } | NodeState::Realized(_) => Some(*c),
                NodeState::Initialized { .. } => None,
            },
            _ => None,
        }
    }

    /// Longest initialized chain and longest marginalized chain, in edges.
    pub fn chain_profile(&self) -> (usize, usize) {
        let n = self.nodes.len();
        let mut init = vec![0usize; n];
        for i in 0..n {
            if let NodeState::Initialized { parent, .. } = &self.nodes[i] {
                init[i] = 1 + init[parent.0];
            }
        }
        let mut marg = vec![0usize; n];
        for i in (0..n).rev() {
            if let NodeState::Marginalized { child: Some((c, _)), .. } = &self.nodes[i] {
                if !matches!(self.nodes[c.0], NodeState::Initialized { .. }) {
                    marg[i] = 1 + marg[c.0];
                }
            }
        }
        (init.into_iter().max().unwrap_or(0), marg.into_iter().max().unwrap_or(0))
    }

    /// Shape of the link structure reachable from `n`.
    pub fn classify(&self, n: NodeId) -> ChainShape {
        let mut saw_init = false;
        let mut saw_marg = false;
        let mut cur = n;
        for _ in 0..=self.nodes.len() {
            match &self.nodes[cur.0] {
                NodeState::Initialized { parent, .. } => {
                    if saw_marg {
                        return ChainShape::Invalid;
                    }
                    saw_init = true;
                    cur = *parent;
                }
                NodeState::Marginalized { child, .. } => {
                    match child {
                        Some((c, _)) => match &self.nodes[c.0] {
                            NodeState::Initialized { .. } => return ChainShape::Invalid,
                            _ => {
                                saw_marg = true;
                                cur = *c;
                            }
                        },
                        None => break,
                    }
                }
                NodeState::Realized(_) => break,
            }
        }
        match (saw_init, saw_marg) {
            (false, false) => ChainShape::Single,
            (true, false) => ChainShape::Initialized,
            (false, true) => ChainShape::Marginalized,
            (true, true) => ChainShape::InitializedThenMarginalized,
        }
    }

    /// Checks the per-node link invariants.
    pub fn check_links(&self) -> Result<(), String> {
        for (i, s) in self.nodes.iter().enumerate() {
            match s {
                NodeState::Initialized { parent, .. } => {
                    if parent.0 >= i {
                        return Err(format!("X{i}: parent {parent} is not older"));
                    }
                }
                NodeState::Marginalized { child: Some((c, _)), .. } => {
                    if c.0 >= self.nodes.len() || c.0 <= i {
                        return Err(format!("X{i}: bad child link {c}"));
                    }
                    if matches!(self.nodes[c.0], NodeState::Initialized { .. }) {
                        return Err(format!("X{i}: child {c} is initialized"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Deterministic textual rendering.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.nodes.iter().enumerate() {
            let line = match s {
                NodeState::Initialized { parent, cd } => format!("X{i} initialized parent={parent} {cd}"),
                NodeState::Marginalized { m, child: None } => format!("X{i} marginalized {m}"),
                NodeState::Marginalized { m, child: Some((c, cd)) } => {
                    format!("X{i} marginalized {m} child={c} {cd}")
                }
                NodeState::Realized(v) => format!("X{i} realized {v}"),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainShape {
    Single,
    Initialized,
    Marginalized,
    InitializedThenMarginalized,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Assume { child: NodeId, parent: Option<NodeId> },
    Eval(Vec<NodeId>),
    Obs(NodeId),
}

/// Append-only log of delayed-sampling operations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    events: ChunkedVec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn from_events(events: Vec<TraceEvent>) -> Self {
        Trace { events: events.into_iter().collect() }
    }

    pub fn push(&mut self, e: TraceEvent) {
        self.events.push_back(e);
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.events.iter().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn prefix(&self, n: usize) -> Trace {
        Trace { events: self.events.take(n.min(self.events.len())) }
    }

    /// Every Obs/Eval id was introduced by an earlier Assume.
    pub fn well_formed(&self) -> bool {
        let mut seen = BTreeSet::new();
        for e in self.events.iter() {
            match e {
                TraceEvent::Assume { child, parent } => {
                    if parent.map_or(false, |p| !seen.contains(&p)) || !seen.insert(*child) {
                        return false;
                    }
                }
                TraceEvent::Eval(xs) => {
                    if xs.iter().any(|x| !seen.contains(x)) {
                        return false;
                    }
                }
                TraceEvent::Obs(x) => {
                    if !seen.contains(x) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Mutable delayed-sampling context of one particle.
pub struct Ds<'a, R: Rng + ?Sized> {
    pub graph: &'a mut DsGraph,
    pub rng: &'a mut R,
    pub trace: Option<&'a mut Trace>,
}

impl<'a, R: Rng + ?Sized> Ds<'a, R> {
    fn log(&mut self, e: TraceEvent) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(e);
        }
    }

    fn value_node(&mut self, n: NodeId) -> GResult<Concrete> {
        if let NodeState::Realized(x) = self.graph.get(n)? {
            return Ok(x.clone());
        }
        self.graph.graft(n, self.rng)?;
        self.graph.sample_node(n, self.rng)?;
        match self.graph.get(n)? {
            NodeState::Realized(x) => Ok(x.clone()),
            other => invariant(format!("value {n} left in state {other:?}")),
        }
    }

    /// Samples every random variable of `v` and returns its concrete value.
    pub fn value(&mut self, v: &Value) -> GResult<Concrete> {
        let ids = v.frv();
        for &x in &ids {
            self.value_node(x)?;
        }
        self.log(TraceEvent::Eval(ids.into_iter().collect()));
        substitute(v, self.graph)
    }

    /// Adds a random variable distributed according to `v`.
    pub fn assume(&mut self, v: &Value) -> GResult<NodeId> {
        if let Some((parent, cd)) = conjugate_parent(v, self.graph) {
            let x = self.graph.assume_conditional(parent, cd)?;
            self.log(TraceEvent::Assume { child: x, parent: Some(parent) });
            return Ok(x);
        }
        let d = if v.has_rv() { self.value(v)? } else { substitute(v, self.graph)? };
        match d {
            Concrete::Dist(m) => {
                let x = self.graph.assume_constant(*m);
                self.log(TraceEvent::Assume { child: x, parent: None });
                Ok(x)
            }
            other => Err(RuntimeError::Eval(format!("sample of non-distribution {other}"))),
        }
    }

    /// Conditions `x` on the value `v`; returns the density of `v` under the
    /// grafted marginal of `x`.
    pub fn observe(&mut self, x: NodeId, v: &Concrete) -> GResult<f64> {
        self.graph.graft(x, self.rng)?;
        self.graph.force_condition(x)?;
        let w = match self.graph.get(x)? {
            NodeState::Marginalized { m, child: None } => pdf(m, v),
            other => return invariant(format!("observe {x} in state {other:?}")),
        };
        self.graph.realize(x, v.clone())?;
        self.log(TraceEvent::Obs(x));
        Ok(w)
    }
}

/// Replaces realized random variables inside a symbolic term by their
/// values, evaluating every operator whose arguments become concrete.
pub fn fold_realized(v: &Value, g: &DsGraph) -> Value {
    match v {
        Value::Rv(x) => match g.state(*x) {
            Some(NodeState::Realized(c)) => Value::from_concrete(c),
            _ => v.clone(),
        },
        Value::Pair(p) => Value::pair(fold_realized(&p.0, g), fold_realized(&p.1, g)),
        Value::Sym(s) => {
            let arg = fold_realized(&s.1, g);
            if !arg.has_rv() {
                if let Some(c) = arg.to_concrete() {
                    if let Ok(r) = apply_concrete(&s.0, &c) {
                        return Value::from_concrete(&r);
                    }
                }
            }
            Value::sym(&s.0, arg)
        }
        other => other.clone(),
    }
}

/// Replaces realized random variables by their values and evaluates
/// symbolic operators. Fails on unrealized variables.
pub fn substitute(v: &Value, g: &DsGraph) -> GResult<Concrete> {
    Ok(match v {
        Value::Rv(x) => match g.get(*x)? {
            NodeState::Realized(c) => c.clone(),
            _ => return invariant(format!("{x} is not realized")),
        },
        Value::Pair(p) => Concrete::pair(substitute(&p.0, g)?, substitute(&p.1, g)?),
        Value::Sym(s) => apply_concrete(&s.0, &substitute(&s.1, g)?)?,
        Value::List(xs) => Concrete::List(xs.iter().map(|x| substitute(x, g)).collect::<GResult<_>>()?),
        Value::Array(xs) => Concrete::Array(xs.iter().map(|x| substitute(x, g)).collect::<GResult<_>>()?),
        other => match other.to_concrete() {
            Some(c) => c,
            None => return Err(RuntimeError::Eval(format!("{other} is not first-order data"))),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Beta,
    Other,
}

pub fn family(g: &DsGraph, y: NodeId) -> Family {
    match g.state(y) {
        Some(NodeState::Marginalized { m: MDistr::Gaussian { .. }, .. }) => Family::Gaussian,
        Some(NodeState::Marginalized { m: MDistr::Beta { .. }, .. }) => Family::Beta,
        Some(NodeState::Initialized { cd: CDistr::GaussianMean { .. } | CDistr::GaussianObs { .. }, .. }) => {
            Family::Gaussian
        }
        _ => Family::Other,
    }
}

/// `v` as `s * y + t`, if it is affine in `y` (built from plus, sub, mult
/// and div by constants).
pub fn affine_form(v: &Value, y: NodeId) -> Option<(f64, f64)> {
    match v {
        Value::Rv(x) if *x == y => Some((1.0, 0.0)),
        Value::Real(c) => Some((0.0, *c)),
        Value::Sym(s) => {
            let (op, arg) = (&s.0, &s.1);
            let (a, b) = match arg {
                Value::Pair(p) => (&p.0, &p.1),
                _ => return None,
            };
            let (s1, t1) = affine_form(a, y)?;
            let (s2, t2) = affine_form(b, y)?;
            match op.as_str() {
                "plus" => Some((s1 + s2, t1 + t2)),
                "sub" => Some((s1 - s2, t1 - t2)),
                "mult" if s1 == 0.0 => Some((t1 * s2, t1 * t2)),
                "mult" if s2 == 0.0 => Some((s1 * t2, t1 * t2)),
                "div" if s2 == 0.0 && t2 != 0.0 => Some((s1 / t2, t1 / t2)),
                _ => None,
            }
        }
        _ => None,
    }
}

/// The parent and kernel when `v` is a conjugate distribution over exactly
/// one unrealized random variable.
pub fn conjugate_parent(v: &Value, g: &DsGraph) -> Option<(NodeId, CDistr)> {
    let (op, arg) = match v {
        Value::Sym(s) => (&s.0, &s.1),
        _ => return None,
    };
    let ids = v.frv();
    if ids.len() != 1 {
        return None;
    }
    let y = *ids.iter().next().unwrap();
    if matches!(g.state(y), Some(NodeState::Realized(_)) | None) {
        return None;
    }
    match (op.as_str(), family(g, y)) {
        ("gaussian", Family::Gaussian) => {
            let (mean, var) = match arg {
                Value::Pair(p) => (&p.0, &p.1),
                _ => return None,
            };
            let var = match var {
                Value::Real(v) if *v > 0.0 => *v,
                _ => return None,
            };
            let (scale, shift) = affine_form(mean, y)?;
            Some((y, CDistr::GaussianMean { var, scale, shift }))
        }
        ("bernoulli", Family::Beta) => match arg {
            Value::Rv(x) if *x == y => Some((y, CDistr::Bernoulli)),
            _ => None,
        },
        _ => None,
    }
}
