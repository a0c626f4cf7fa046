//! Trace-level checks of the m-consumed and unseparated-path properties,
//! and of the two bounded-memory criteria, over recorded executions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ds_graph::{ChainShape, DsGraph, NodeId, Trace, TraceEvent};
use crate::error::MufError;
use crate::interpreter::{RunConfig, Runner};
use crate::types::TypedProgram;
use crate::value::Value;

/// Minimal m for which each variable is m-consumed; `None` is infinity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsumptionReport {
    pub m: BTreeMap<NodeId, Option<usize>>,
}

impl ConsumptionReport {
    pub fn get(&self, x: NodeId) -> Option<usize> {
        self.m.get(&x).copied().flatten()
    }

    pub fn max_finite(&self) -> Option<usize> {
        self.m.values().filter_map(|v| *v).max()
    }

    pub fn unconsumed(&self) -> Vec<NodeId> {
        self.m.iter().filter(|(_, v)| v.is_none()).map(|(x, _)| *x).collect()
    }
}

/// Variables that appear in an Obs or Eval event.
pub fn consumed_set(trace: &Trace) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for e in trace.iter() {
        match e {
            TraceEvent::Obs(x) => {
                out.insert(*x);
            }
            TraceEvent::Eval(xs) => out.extend(xs.iter().copied()),
            TraceEvent::Assume { .. } => {}
        }
    }
    out
}

fn min_opt(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

pub fn m_consumed(trace: &Trace) -> ConsumptionReport {
    let consumed = consumed_set(trace);
    let events = trace.events();
    // best[x] = min m over children assumed from x seen so far (in reverse).
    let mut best: BTreeMap<NodeId, Option<usize>> = BTreeMap::new();
    let mut m = BTreeMap::new();
    for e in events.iter().rev() {
        if let TraceEvent::Assume { child, parent } = e {
            let v = if consumed.contains(child) {
                Some(0)
            } else {
                best.get(child).copied().flatten().map(|k| k + 1)
            };
            m.insert(*child, v);
            if let Some(p) = parent {
                let slot = best.entry(*p).or_insert(None);
                *slot = min_opt(*slot, v);
            }
        }
    }
    ConsumptionReport { m }
}

/// Longest unseparated path starting at each variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathReport {
    /// Length counted in variables; 0 for a consumed variable.
    pub vars: BTreeMap<NodeId, usize>,
    pub max: usize,
}

impl PathReport {
    pub fn get(&self, x: NodeId) -> usize {
        self.vars.get(&x).copied().unwrap_or(0)
    }

    /// Same length counted in edges.
    pub fn edges(&self, x: NodeId) -> usize {
        self.get(x).saturating_sub(1)
    }

    pub fn max_from(&self, roots: &BTreeSet<NodeId>) -> usize {
        roots.iter().map(|x| self.get(*x)).max().unwrap_or(0)
    }
}

pub fn unseparated_paths(trace: &Trace) -> PathReport {
    let consumed = consumed_set(trace);
    let events = trace.events();
    let mut longest_child: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut vars = BTreeMap::new();
    for e in events.iter().rev() {
        if let TraceEvent::Assume { child, parent } = e {
            let l = if consumed.contains(child) {
                0
            } else {
                1 + longest_child.get(child).copied().unwrap_or(0)
            };
            vars.insert(*child, l);
            if let Some(p) = parent {
                let slot = longest_child.entry(*p).or_insert(0);
                *slot = (*slot).max(l);
            }
        }
    }
    let max = vars.values().copied().max().unwrap_or(0);
    PathReport { vars, max }
}

/// Longest unseparated path, in variables, that contains each variable.
pub fn longest_path_through(trace: &Trace) -> BTreeMap<NodeId, usize> {
    let down = unseparated_paths(trace);
    let consumed = consumed_set(trace);
    let mut up: BTreeMap<NodeId, usize> = BTreeMap::new();
    for e in trace.iter() {
        if let TraceEvent::Assume { child, parent } = e {
            let u = if consumed.contains(child) {
                0
            } else {
                1 + parent.and_then(|p| up.get(&p).copied()).unwrap_or(0)
            };
            up.insert(*child, u);
        }
    }
    up.iter()
        .map(|(x, u)| (*x, if *u == 0 { 0 } else { u + down.get(*x) - 1 }))
        .collect()
}

/// State of one particle after a step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub state: BTreeSet<NodeId>,
    pub trace: Trace,
    pub graph: DsGraph,
}

impl Snapshot {
    pub fn reachable(&self) -> usize {
        self.graph.reachable(&self.state).len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighLevelVerdict {
    pub horizon: usize,
    pub m_consumed: bool,
    pub unseparated: bool,
    /// Variables judged neither m-consumed nor unused.
    pub unconsumed: Vec<NodeId>,
    pub max_state_path: usize,
    pub first_path_violation: Option<usize>,
}

impl HighLevelVerdict {
    pub fn holds(&self) -> bool {
        self.m_consumed && self.unseparated
    }
}

/// Checks both high-level conditions up to the last snapshot. Variables
/// introduced during the final `grace` steps are not judged for
/// consumption, since they may be consumed later.
pub fn check_high_level(snaps: &[Snapshot], m_bound: usize, c_bound: usize, grace: usize) -> HighLevelVerdict {
    let horizon = snaps.len();
    let mut unconsumed = Vec::new();
    if let Some(last) = snaps.last() {
        let cutoff = if horizon > grace { Some(snaps[horizon - 1 - grace].graph.len()) } else { None };
        let cons = m_consumed(&last.trace);
        let through = longest_path_through(&last.trace);
        if let Some(cutoff) = cutoff {
            for (x, m) in &cons.m {
                if x.0 >= cutoff {
                    continue;
                }
                let ok = m.map_or(false, |m| m <= m_bound) || through.get(x).copied().unwrap_or(0) <= m_bound;
                if !ok {
                    unconsumed.push(*x);
                }
            }
        }
    }
    let mut max_state_path = 0;
    let mut first_path_violation = None;
    for s in snaps {
        let p = unseparated_paths(&s.trace).max_from(&s.state);
        max_state_path = max_state_path.max(p);
        if p > c_bound && first_path_violation.is_none() {
            first_path_violation = Some(s.step);
        }
    }
    HighLevelVerdict {
        horizon,
        m_consumed: unconsumed.is_empty(),
        unseparated: first_path_violation.is_none(),
        unconsumed,
        max_state_path,
        first_path_violation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelVerdict {
    pub holds: bool,
    pub max_reachable: usize,
    /// max over steps of |reachable| / max(1, |frv(state)|)
    pub max_ratio: f64,
    pub first_violation: Option<usize>,
}

pub fn check_low_level(snaps: &[Snapshot], k: usize) -> LowLevelVerdict {
    let mut max_reachable = 0;
    let mut max_ratio: f64 = 0.0;
    let mut first_violation = None;
    for s in snaps {
        let r = s.reachable();
        max_reachable = max_reachable.max(r);
        max_ratio = max_ratio.max(r as f64 / s.state.len().max(1) as f64);
        if r > k * s.state.len() && first_violation.is_none() {
            first_violation = Some(s.step);
        }
    }
    LowLevelVerdict { holds: first_violation.is_none(), max_reachable, max_ratio, first_violation }
}

/// Outcome of the chain-structure probe on one graph and its trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainProbe {
    pub invalid_nodes: Vec<NodeId>,
    pub max_init_chain: usize,
    pub max_marg_chain: usize,
    /// Longest ⇜-path of never-consumed variables, in variables.
    pub unconsumed_depth: usize,
}

impl ChainProbe {
    pub fn holds(&self) -> bool {
        self.invalid_nodes.is_empty() && self.max_init_chain <= self.unconsumed_depth
    }
}

pub fn chain_bounds_probe(graph: &DsGraph, trace: &Trace) -> ChainProbe {
    let invalid_nodes = graph.node_ids().filter(|x| graph.classify(*x) == ChainShape::Invalid).collect();
    let (max_init_chain, max_marg_chain) = graph.chain_profile();
    let unconsumed_depth = unconsumed_depth(trace, &m_consumed(trace));
    ChainProbe { invalid_nodes, max_init_chain, max_marg_chain, unconsumed_depth }
}

fn unconsumed_depth(trace: &Trace, cons: &ConsumptionReport) -> usize {
    let mut best_child: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut out = 0;
    for e in trace.events().iter().rev() {
        if let TraceEvent::Assume { child, parent } = e {
            let d = if cons.get(*child).is_none() { 1 + best_child.get(child).copied().unwrap_or(0) } else { 0 };
            out = out.max(d);
            if let Some(p) = parent {
                let slot = best_child.entry(*p).or_insert(0);
                *slot = (*slot).max(d);
            }
        }
    }
    out
}

/// Per-step metrics for one particle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepMetrics {
    pub step: usize,
    pub reachable: usize,
    pub max_init_chain: usize,
    pub max_marg_chain: usize,
    pub max_state_path: usize,
    /// Largest m among state variables; `None` when one is never consumed.
    pub max_unconsumed_m: Option<usize>,
}

impl StepMetrics {
    pub const CSV_HEADER: &'static str =
        "step,reachable,max_init_chain,max_marg_chain,max_state_path,max_unconsumed_m";

    pub fn of(s: &Snapshot) -> StepMetrics {
        let (max_init_chain, max_marg_chain) = s.graph.chain_profile();
        let cons = m_consumed(&s.trace);
        let mut worst = Some(0);
        for x in &s.state {
            match (worst, cons.get(*x)) {
                (Some(w), Some(m)) => worst = Some(w.max(m)),
                _ => worst = None,
            }
        }
        StepMetrics {
            step: s.step,
            reachable: s.reachable(),
            max_init_chain,
            max_marg_chain,
            max_state_path: unseparated_paths(&s.trace).max_from(&s.state),
            max_unconsumed_m: worst,
        }
    }
}

impl fmt::Display for StepMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},",
            self.step, self.reachable, self.max_init_chain, self.max_marg_chain, self.max_state_path
        )?;
        match self.max_unconsumed_m {
            Some(m) => write!(f, "{m}"),
            None => write!(f, "inf"),
        }
    }
}

/// Runs the main stream and records one particle of the first inferred
/// instance after every step. Traces are always recorded.
pub fn record_run(
    typed: &TypedProgram,
    mut config: RunConfig,
    inputs: impl IntoIterator<Item = Value>,
    particle: usize,
) -> Result<Vec<Snapshot>, MufError> {
    config.record_trace = true;
    let mut runner = Runner::new(typed, config)?;
    let mut out = Vec::new();
    for (i, input) in inputs.into_iter().enumerate() {
        runner.step(input)?;
        if let Some(p) = runner.pinstance() {
            let part = p.particles.get(particle).unwrap_or(&p.particles[0]);
            out.push(Snapshot {
                step: i + 1,
                state: part.state.frv(),
                trace: part.trace.clone(),
                graph: part.graph.clone(),
            });
        }
    }
    Ok(out)
}
