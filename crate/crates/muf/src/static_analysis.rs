//! Static bounded-memory analysis. Programs are abstracted as operations on
//! two abstract delayed-sampling graphs: one tracks which variables are
//! introduced and consumed, the other bounds unseparated path lengths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::ast::{Const, Decl, Expr, Pattern, Program};
use crate::builtins;
use crate::error::AnalysisError;

type AResult<T> = Result<T, AnalysisError>;

fn other(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Other(msg.into())
}

/// An abstract random variable: the `occ`-th sample site evaluated during
/// iteration `iter` of the stream under analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsRv {
    pub iter: u32,
    pub occ: u32,
}

impl AbsRv {
    pub fn new(iter: u32, occ: u32) -> Self {
        AbsRv { iter, occ }
    }
}

impl fmt::Display for AbsRv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}.{}", self.iter, self.occ)
    }
}

pub type RvSet = BTreeSet<AbsRv>;

/// Must-reference (`lb`) and may-reference (`ub`) variable sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefSet {
    pub lb: RvSet,
    pub ub: RvSet,
}

impl RefSet {
    pub fn empty() -> Self {
        RefSet::default()
    }

    pub fn exact(xs: RvSet) -> Self {
        RefSet { lb: xs.clone(), ub: xs }
    }

    pub fn single(x: AbsRv) -> Self {
        RefSet::exact([x].into_iter().collect())
    }

    pub fn is_empty(&self) -> bool {
        self.ub.is_empty() && self.lb.is_empty()
    }

    pub fn union(&self, other: &RefSet) -> RefSet {
        RefSet { lb: &self.lb | &other.lb, ub: &self.ub | &other.ub }
    }

    pub fn join(&self, other: &RefSet) -> RefSet {
        self.join_fresh(other, &RvSet::new(), &RvSet::new())
    }

    /// Join of the results of two branches. A variable created inside one
    /// branch only exists when that branch ran, so it stays in `lb` if that
    /// branch must reference it.
    pub fn join_fresh(&self, other: &RefSet, fresh_a: &RvSet, fresh_b: &RvSet) -> RefSet {
        let mut lb: RvSet = &self.lb & &other.lb;
        lb.extend(self.lb.intersection(fresh_a).copied());
        lb.extend(other.lb.intersection(fresh_b).copied());
        RefSet { lb, ub: &self.ub | &other.ub }
    }

    /// Forgets must-information, as for elements of a collection.
    pub fn weaken(&self) -> RefSet {
        RefSet { lb: RvSet::new(), ub: self.ub.clone() }
    }
}

/// Analysis context: a persistent association list.
#[derive(Clone, Default)]
pub struct Ctx(Option<Arc<CtxNode>>);

struct CtxNode {
    name: String,
    ty: AType,
    next: Ctx,
}

impl Ctx {
    pub fn new() -> Self {
        Ctx(None)
    }

    pub fn bind(&self, name: &str, ty: AType) -> Ctx {
        Ctx(Some(Arc::new(CtxNode { name: name.to_string(), ty, next: self.clone() })))
    }

    pub fn lookup(&self, name: &str) -> Option<&AType> {
        let mut cur = self;
        while let Some(node) = &cur.0 {
            if node.name == name {
                return Some(&node.ty);
            }
            cur = &node.next;
        }
        None
    }
}

impl fmt::Debug for Ctx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names = Vec::new();
        let mut cur = self;
        while let Some(node) = &cur.0 {
            names.push(node.name.as_str());
            cur = &node.next;
        }
        f.debug_tuple("Ctx").field(&names).finish()
    }
}

/// Step function representation: re-analyzed at every unfold.
#[derive(Debug, Clone)]
pub struct StepFn {
    pub name: String,
    pub state: Pattern,
    pub input: Pattern,
    pub env: Ctx,
    pub body: Expr,
}

#[derive(Debug, Clone)]
pub struct AClosure {
    pub param: Pattern,
    pub body: Expr,
    pub env: Ctx,
}

#[derive(Debug, Clone)]
pub enum AType {
    Ref(RefSet),
    Unit,
    Prod(Box<AType>, Box<AType>),
    /// Functions are inlined at call sites, so the type keeps the code.
    Fun(Arc<AClosure>),
    Stream(Box<AType>, Arc<StepFn>),
    Bounded,
    /// List or array; element lower bounds are always empty.
    Coll(Box<AType>),
    /// A declared stream function: initial state type and step function.
    Def(Box<AType>, Arc<StepFn>),
    /// Element type of an empty collection; the unit of join.
    Empty,
}

impl AType {
    pub fn empty() -> AType {
        AType::Ref(RefSet::empty())
    }

    pub fn prod(a: AType, b: AType) -> AType {
        AType::Prod(Box::new(a), Box::new(b))
    }

    fn shape(&self) -> &'static str {
        match self {
            AType::Ref(_) => "reference set",
            AType::Unit => "unit",
            AType::Prod(..) => "product",
            AType::Fun(_) => "function",
            AType::Stream(..) => "stream instance",
            AType::Bounded => "bounded instance",
            AType::Coll(_) => "collection",
            AType::Def(..) => "stream function",
            AType::Empty => "empty",
        }
    }

    /// Splits a value bound by a pair pattern.
    fn split(&self) -> (AType, AType) {
        match self {
            AType::Prod(a, b) => ((**a).clone(), (**b).clone()),
            other => (other.clone(), other.clone()),
        }
    }

    /// Element type when used as a sequence.
    fn element(&self) -> AType {
        match self {
            AType::Coll(e) => (**e).clone(),
            other => match fold(other) {
                Ok(r) => AType::Ref(r.weaken()),
                Err(_) => AType::empty(),
            },
        }
    }

    /// Clears every lower bound.
    fn weaken(&self) -> AType {
        match self {
            AType::Ref(r) => AType::Ref(r.weaken()),
            AType::Prod(a, b) => AType::prod(a.weaken(), b.weaken()),
            AType::Coll(e) => AType::Coll(Box::new(e.weaken())),
            other => other.clone(),
        }
    }

    fn coll(elem: AType) -> AType {
        AType::Coll(Box::new(elem.weaken()))
    }
}

impl fmt::Display for AType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn set(f: &mut fmt::Formatter<'_>, s: &RvSet) -> fmt::Result {
            write!(f, "{{")?;
            for (i, x) in s.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, "}}")
        }
        match self {
            AType::Ref(r) => {
                write!(f, "(")?;
                set(f, &r.lb)?;
                write!(f, ", ")?;
                set(f, &r.ub)?;
                write!(f, ")")
            }
            AType::Unit => write!(f, "()"),
            AType::Prod(a, b) => write!(f, "({a} × {b})"),
            AType::Fun(_) => write!(f, "fun"),
            AType::Stream(t, s) => write!(f, "stream({t}, {})", s.name),
            AType::Bounded => write!(f, "bounded"),
            AType::Coll(e) => write!(f, "{e} coll"),
            AType::Def(t, s) => write!(f, "def({t}, {})", s.name),
            AType::Empty => write!(f, "⊥"),
        }
    }
}

/// Folds a type into a single reference set.
pub fn fold(t: &AType) -> AResult<RefSet> {
    match t {
        AType::Ref(r) => Ok(r.clone()),
        AType::Unit | AType::Bounded | AType::Empty => Ok(RefSet::empty()),
        AType::Prod(a, b) => Ok(fold(a)?.union(&fold(b)?)),
        AType::Stream(t, _) => fold(t),
        AType::Coll(e) => Ok(fold(e)?.weaken()),
        AType::Fun(_) | AType::Def(..) => Err(other(format!("cannot fold a {}", t.shape()))),
    }
}

/// Number of base values in a type.
pub fn size(t: &AType) -> usize {
    match t {
        AType::Ref(_) => 1,
        AType::Prod(a, b) => size(a) + size(b),
        AType::Stream(t, _) => size(t),
        AType::Coll(e) => size(e).max(1),
        AType::Unit | AType::Bounded | AType::Fun(_) | AType::Def(..) | AType::Empty => 0,
    }
}

pub fn join_types(a: &AType, b: &AType) -> AResult<AType> {
    join_types_fresh(a, b, &RvSet::new(), &RvSet::new())
}

fn join_types_fresh(a: &AType, b: &AType, fa: &RvSet, fb: &RvSet) -> AResult<AType> {
    match (a, b) {
        (AType::Unit, AType::Unit) => Ok(AType::Unit),
        (AType::Empty, t) | (t, AType::Empty) => Ok(t.weaken()),
        (AType::Ref(x), AType::Ref(y)) => Ok(AType::Ref(x.join_fresh(y, fa, fb))),
        (AType::Prod(a1, a2), AType::Prod(b1, b2)) => {
            Ok(AType::prod(join_types_fresh(a1, b1, fa, fb)?, join_types_fresh(a2, b2, fa, fb)?))
        }
        (AType::Coll(x), AType::Coll(y)) => Ok(AType::Coll(Box::new(join_loose(x, y)?))),
        (AType::Unit, AType::Ref(r)) | (AType::Ref(r), AType::Unit) => Ok(AType::Ref(r.weaken())),
        _ => Err(AnalysisError::JoinUndefined(format!("{} and {}", a.shape(), b.shape()))),
    }
}

/// Join for collection elements: mismatched shapes fold to one set.
fn join_loose(a: &AType, b: &AType) -> AResult<AType> {
    match join_types(a, b) {
        Ok(t) => Ok(t.weaken()),
        Err(_) => Ok(AType::Ref(fold(a)?.union(&fold(b)?).weaken())),
    }
}

/// Interface shared by the two abstract graphs.
pub trait AbstractGraph: Clone + Default + fmt::Debug {
    fn assume(&mut self, x: AbsRv, r: &RefSet);
    fn observe(&mut self, x: AbsRv, r: &RefSet);
    fn value(&mut self, r: &RefSet);
    /// Join of the graphs after two branches; `fresh_*` are the variables
    /// each branch introduced.
    fn join_fresh(a: &Self, b: &Self, fresh_a: &RvSet, fresh_b: &RvSet) -> Self;

    fn join(a: &Self, b: &Self) -> Self {
        Self::join_fresh(a, b, &RvSet::new(), &RvSet::new())
    }
}

fn fresh_join_set(a: &RvSet, b: &RvSet, fa: &RvSet, fb: &RvSet) -> RvSet {
    let mut out: RvSet = a & b;
    out.extend(a.intersection(fa).copied());
    out.extend(b.intersection(fb).copied());
    out
}

/// Introduced and consumed variables. `deps` records the must-parents of
/// each variable: consuming a variable also consumes its ancestors, since
/// they are then a bounded number of steps from a consumed variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct McGraph {
    pub introduced: RvSet,
    pub consumed: RvSet,
    pub deps: BTreeMap<AbsRv, RvSet>,
}

impl McGraph {
    pub fn new(introduced: RvSet, consumed: RvSet) -> Self {
        McGraph { introduced, consumed, deps: BTreeMap::new() }
    }

    fn consume<'a>(&mut self, xs: impl IntoIterator<Item = &'a AbsRv>) {
        let mut stack: Vec<AbsRv> = xs.into_iter().copied().collect();
        while let Some(x) = stack.pop() {
            if self.consumed.insert(x) {
                if let Some(ps) = self.deps.get(&x) {
                    stack.extend(ps.iter().copied());
                }
            }
        }
    }

    /// Variables whose consumption would follow from consuming `roots`.
    pub fn ancestors(&self, roots: &RvSet) -> RvSet {
        let mut seen = RvSet::new();
        let mut stack: Vec<AbsRv> = roots.iter().copied().collect();
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                if let Some(ps) = self.deps.get(&x) {
                    stack.extend(ps.iter().copied());
                }
            }
        }
        seen
    }
}

impl AbstractGraph for McGraph {
    fn assume(&mut self, x: AbsRv, r: &RefSet) {
        self.introduced.insert(x);
        self.deps.insert(x, r.lb.clone());
    }

    fn observe(&mut self, x: AbsRv, r: &RefSet) {
        self.consume(r.lb.iter().chain(std::iter::once(&x)));
    }

    fn value(&mut self, r: &RefSet) {
        self.consume(r.lb.iter());
    }

    fn join_fresh(a: &Self, b: &Self, fa: &RvSet, fb: &RvSet) -> Self {
        let mut deps = a.deps.clone();
        for (k, v) in &b.deps {
            deps.entry(*k).or_default().extend(v.iter().copied());
        }
        McGraph {
            introduced: &a.introduced | &b.introduced,
            consumed: fresh_join_set(&a.consumed, &b.consumed, fa, fb),
            deps,
        }
    }
}

/// Path-length bounds between variables plus the separator set. Paths are
/// stored by target: `paths[y][x]` bounds the path from `x` to `y`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpGraph {
    pub paths: BTreeMap<AbsRv, BTreeMap<AbsRv, usize>>,
    pub sep: RvSet,
}

impl UpGraph {
    pub fn get(&self, from: AbsRv, to: AbsRv) -> Option<usize> {
        self.paths.get(&to).and_then(|m| m.get(&from)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (AbsRv, AbsRv, usize)> + '_ {
        self.paths.iter().flat_map(|(to, m)| m.iter().map(move |(from, n)| (*from, *to, *n)))
    }

    /// Longest entry overall.
    pub fn longest_entry(&self) -> Option<(AbsRv, AbsRv, usize)> {
        self.entries().max_by_key(|e| (e.2, std::cmp::Reverse((e.0, e.1))))
    }

    /// Longest path from a variable in `sources` to a non-separator.
    pub fn path_from(&self, sources: &RvSet) -> usize {
        let mut best = 0;
        for (to, m) in &self.paths {
            if self.sep.contains(to) {
                continue;
            }
            for (from, n) in m {
                if sources.contains(from) {
                    best = best.max(*n);
                }
            }
        }
        best
    }
}

impl AbstractGraph for UpGraph {
    fn assume(&mut self, x: AbsRv, r: &RefSet) {
        let mut row: BTreeMap<AbsRv, usize> = BTreeMap::new();
        for p in r.ub.difference(&self.sep) {
            if let Some(m) = self.paths.get(p) {
                for (from, n) in m {
                    let e = row.entry(*from).or_insert(0);
                    *e = (*e).max(n + 1);
                }
            }
        }
        row.insert(x, 0);
        self.paths.insert(x, row);
    }

    fn observe(&mut self, x: AbsRv, r: &RefSet) {
        self.sep.extend(r.lb.iter().copied());
        self.sep.insert(x);
    }

    fn value(&mut self, r: &RefSet) {
        self.sep.extend(r.lb.iter().copied());
    }

    fn join_fresh(a: &Self, b: &Self, fa: &RvSet, fb: &RvSet) -> Self {
        let mut paths = a.paths.clone();
        for (to, m) in &b.paths {
            let row = paths.entry(*to).or_default();
            for (from, n) in m {
                let e = row.entry(*from).or_insert(0);
                *e = (*e).max(*n);
            }
        }
        UpGraph { paths, sep: fresh_join_set(&a.sep, &b.sep, fa, fb) }
    }
}

/// Verdict for one `infer` site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteReport {
    pub site: String,
    pub mc: bool,
    pub up: bool,
    pub mc_unconsumed: Vec<String>,
    pub up_longest_path: usize,
    pub iterations_used: usize,
    /// Set when the m-consumed check had to look past the first iteration.
    pub mc_window_extension: bool,
    pub error: Option<String>,
}

impl SiteReport {
    pub fn bounded(&self) -> bool {
        self.mc && self.up
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalysisReport {
    pub sites: Vec<SiteReport>,
}

impl AnalysisReport {
    /// True when every infer site is bounded (vacuously for none).
    pub fn accepted(&self) -> bool {
        self.sites.iter().all(SiteReport::bounded)
    }

    pub fn site(&self, name: &str) -> Option<&SiteReport> {
        self.sites.iter().find(|s| s.site == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Iteration budget of the unseparated-paths check; also bounds how
    /// long the m-consumed check waits for a variable to be consumed.
    pub up_budget: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { up_budget: 10 }
    }
}

const MAX_INLINE_DEPTH: usize = 64;

struct Session {
    config: AnalysisConfig,
    sites: Vec<SiteReport>,
    active: BTreeSet<String>,
}

/// Evaluates expressions over one abstract graph kind.
struct Analyzer<'s, G> {
    session: &'s mut Session,
    iter: u32,
    next: u32,
    depth: usize,
    labels: BTreeMap<AbsRv, String>,
    _graph: std::marker::PhantomData<G>,
}

fn pattern_type(p: &Pattern) -> AType {
    match p {
        Pattern::Var(_) | Pattern::Wild => AType::empty(),
        Pattern::Unit => AType::Unit,
        Pattern::Pair(a, b) => AType::prod(pattern_type(a), pattern_type(b)),
    }
}

fn bind(ctx: &Ctx, p: &Pattern, t: AType) -> Ctx {
    match p {
        Pattern::Var(x) => ctx.bind(x, t),
        Pattern::Wild | Pattern::Unit => ctx.clone(),
        Pattern::Pair(a, b) => {
            let (ta, tb) = t.split();
            bind(&bind(ctx, a, ta), b, tb)
        }
    }
}

fn arg_list(t: &AType, n: usize) -> Vec<AType> {
    let mut out = Vec::with_capacity(n);
    let mut cur = t.clone();
    for _ in 1..n {
        let (a, b) = cur.split();
        out.push(a);
        cur = b;
    }
    out.push(cur);
    out
}

impl<'s, G: AbstractGraph> Analyzer<'s, G> {
    fn new(session: &'s mut Session) -> Self {
        Analyzer {
            session,
            iter: 0,
            next: 0,
            depth: 0,
            labels: BTreeMap::new(),
            _graph: std::marker::PhantomData,
        }
    }

    fn fresh(&mut self) -> AbsRv {
        let x = AbsRv::new(self.iter, self.next);
        self.next += 1;
        x
    }

    fn since(&self, start: u32) -> RvSet {
        (start..self.next).map(|o| AbsRv::new(self.iter, o)).collect()
    }

    fn lookup<'c>(&self, ctx: &'c Ctx, x: &str) -> AResult<&'c AType> {
        ctx.lookup(x).ok_or_else(|| other(format!("unbound `{x}`")))
    }

    fn expr(&mut self, ctx: &Ctx, g: &mut G, e: &Expr) -> AResult<AType> {
        match e {
            Expr::Const(Const::Unit) => Ok(AType::Unit),
            Expr::Const(_) => Ok(AType::empty()),
            Expr::Var(x) => Ok(self.lookup(ctx, x)?.clone()),
            Expr::Pair(a, b) => {
                let ta = self.expr(ctx, g, a)?;
                let tb = self.expr(ctx, g, b)?;
                Ok(AType::prod(ta, tb))
            }
            Expr::Op(op, arg) => {
                let t = self.expr(ctx, g, arg)?;
                self.op(op, t, g)
            }
            Expr::App(f, arg) => {
                let tf = self.lookup(ctx, f)?.clone();
                let ta = self.expr(ctx, g, arg)?;
                self.apply(&tf, ta, g)
            }
            Expr::Lambda(p, body) => {
                Ok(AType::Fun(Arc::new(AClosure { param: p.clone(), body: (**body).clone(), env: ctx.clone() })))
            }
            Expr::If(c, a, b) => {
                let r = fold(&self.expr(ctx, g, c)?)?;
                g.value(&r);
                let s0 = self.next;
                let mut g1 = g.clone();
                let t1 = self.expr(ctx, &mut g1, a)?;
                let s1 = self.next;
                let mut g2 = g.clone();
                let t2 = self.expr(ctx, &mut g2, b)?;
                let f1 = (s0..s1).map(|o| AbsRv::new(self.iter, o)).collect();
                let f2 = self.since(s1);
                if matches!(t1, AType::Fun(_) | AType::Stream(..) | AType::Bounded | AType::Def(..)) {
                    return Err(AnalysisError::JoinUndefined(format!("branches of type {}", t1.shape())));
                }
                let t = join_types_fresh(&t1, &t2, &f1, &f2)?;
                *g = G::join_fresh(&g1, &g2, &f1, &f2);
                Ok(t)
            }
            Expr::Let(p, e1, e2) => {
                let start = self.next;
                let t1 = self.expr(ctx, g, e1)?;
                self.label_pattern(p, &t1, start);
                let ctx2 = bind(ctx, p, t1);
                self.expr(&ctx2, g, e2)
            }
            Expr::Init(m) => match self.lookup(ctx, m)? {
                AType::Def(t, s) => Ok(AType::Stream(t.clone(), s.clone())),
                other_t => Err(other(format!("init of a {}", other_t.shape()))),
            },
            Expr::Unfold(x, v) => {
                let inst = self.lookup(ctx, x)?.clone();
                let tin = self.expr(ctx, g, v)?;
                match inst {
                    AType::Stream(t, s) => {
                        let (out, next) = self.step_body(&s, (*t).clone(), tin, g)?;
                        Ok(AType::prod(out, AType::Stream(Box::new(next), s)))
                    }
                    AType::Bounded => {
                        let r = fold(&tin)?;
                        if !r.ub.is_empty() {
                            return Err(AnalysisError::UnfoldInput(format!(
                                "input of inferred instance `{x}` references random variables"
                            )));
                        }
                        Ok(AType::prod(AType::empty(), AType::Bounded))
                    }
                    other_t => Err(AnalysisError::UnfoldInput(format!("unfold of a {}", other_t.shape()))),
                }
            }
            Expr::Sample(v) => {
                let r = fold(&self.expr(ctx, g, v)?)?;
                let x = self.fresh();
                g.assume(x, &r);
                Ok(AType::Ref(RefSet::single(x)))
            }
            Expr::Observe(v1, v2) => {
                let r1 = fold(&self.expr(ctx, g, v1)?)?;
                let x = self.fresh();
                g.assume(x, &r1);
                let r2 = fold(&self.expr(ctx, g, v2)?)?;
                g.value(&r2);
                g.observe(x, &r2);
                Ok(AType::Unit)
            }
            Expr::Infer(m) => match self.lookup(ctx, m)?.clone() {
                AType::Def(t, s) => {
                    check_site(self.session, &t, &s)?;
                    Ok(AType::Bounded)
                }
                other_t => Err(other(format!("infer of a {}", other_t.shape()))),
            },
        }
    }

    /// Names the variables created since `start` after the program
    /// variables they are bound to.
    fn label_pattern(&mut self, p: &Pattern, t: &AType, start: u32) {
        match (p, t) {
            (Pattern::Var(name), AType::Ref(r)) if !name.starts_with('$') => {
                for x in r.ub.iter().filter(|x| x.iter == self.iter && x.occ >= start) {
                    self.labels.entry(*x).or_insert_with(|| name.clone());
                }
            }
            (Pattern::Pair(a, b), AType::Prod(ta, tb)) => {
                self.label_pattern(a, ta, start);
                self.label_pattern(b, tb, start);
            }
            _ => {}
        }
    }

    /// Runs a step body; returns (output, next state).
    fn step_body(&mut self, s: &StepFn, state: AType, input: AType, g: &mut G) -> AResult<(AType, AType)> {
        let ctx = bind(&bind(&s.env, &s.state, state), &s.input, input);
        self.enter()?;
        let t = self.expr(&ctx, g, &s.body);
        self.depth -= 1;
        Ok(t?.split())
    }

    fn enter(&mut self) -> AResult<()> {
        self.depth += 1;
        if self.depth > MAX_INLINE_DEPTH {
            return Err(other("recursion is not supported by the analysis"));
        }
        Ok(())
    }

    fn apply(&mut self, f: &AType, arg: AType, g: &mut G) -> AResult<AType> {
        match f {
            AType::Fun(c) => {
                let ctx = bind(&c.env, &c.param, arg);
                self.enter()?;
                let t = self.expr(&ctx, g, &c.body);
                self.depth -= 1;
                t
            }
            other_t => Err(other(format!("call of a {}", other_t.shape()))),
        }
    }

    /// Applies `f` a statically unknown number of times (possibly zero).
    fn apply_many(&mut self, f: &AType, arg: AType, g: &mut G) -> AResult<AType> {
        let start = self.next;
        let mut body = g.clone();
        let t = self.apply(f, arg, &mut body)?;
        let fresh = self.since(start);
        *g = G::join_fresh(g, &body, &RvSet::new(), &fresh);
        Ok(t)
    }

    fn sequence(&mut self, t: &AType, g: &mut G) -> AResult<AType> {
        if let AType::Ref(r) = t {
            // A sampled sequence is forced before it is traversed.
            g.value(r);
        }
        Ok(t.element())
    }

    fn op(&mut self, op: &str, t: AType, g: &mut G) -> AResult<AType> {
        match op {
            "eval" => {
                g.value(&fold(&t)?);
                Ok(AType::empty())
            }
            "List.nil" | "Array.empty" => Ok(AType::coll(AType::Empty)),
            "List.init" | "Array.init" => {
                let a = arg_list(&t, 2);
                g.value(&fold(&a[0])?);
                let elem = self.apply_many(&a[1], AType::empty(), g)?;
                Ok(AType::coll(elem))
            }
            "List.map" => {
                let a = arg_list(&t, 2);
                let elem = self.sequence(&a[1], g)?;
                let out = self.apply_many(&a[0], elem, g)?;
                Ok(AType::coll(out))
            }
            "List.filter" => {
                let a = arg_list(&t, 2);
                let elem = self.sequence(&a[1], g)?;
                let start = self.next;
                let mut body = g.clone();
                let keep = self.apply(&a[0], elem.clone(), &mut body)?;
                body.value(&fold(&keep)?);
                let fresh = self.since(start);
                *g = G::join_fresh(g, &body, &RvSet::new(), &fresh);
                Ok(AType::coll(elem))
            }
            "List.append" => {
                let a = arg_list(&t, 2);
                let x = self.sequence(&a[0], g)?;
                let y = self.sequence(&a[1], g)?;
                Ok(AType::coll(join_loose(&x, &y)?))
            }
            "List.length" => {
                self.sequence(&t, g)?;
                Ok(AType::empty())
            }
            "List.iter2" => {
                let a = arg_list(&t, 3);
                let x = self.sequence(&a[1], g)?;
                let y = self.sequence(&a[2], g)?;
                self.apply_many(&a[0], AType::prod(x, y), g)?;
                Ok(AType::Unit)
            }
            "Array.get" => {
                let a = arg_list(&t, 2);
                g.value(&fold(&a[1])?);
                Ok(self.sequence(&a[0], g)?.weaken())
            }
            _ if builtins::is_builtin(op) => Ok(AType::Ref(fold(&t)?)),
            _ => Err(other(format!("unknown operator `{op}`"))),
        }
    }
}

/// One analysis iteration: the state type and graph after it.
#[derive(Debug, Clone)]
pub struct Iteration<G> {
    pub state: AType,
    pub graph: G,
}

/// The iteration judgment for `n = 0, 1, ...`, computed lazily.
struct Iterations<'s, G> {
    analyzer: Analyzer<'s, G>,
    init: AType,
    step: Arc<StepFn>,
    done: Vec<Iteration<G>>,
}

impl<'s, G: AbstractGraph> Iterations<'s, G> {
    fn get(&mut self, n: usize) -> AResult<&Iteration<G>> {
        while self.done.len() <= n {
            let (state, mut graph) = match self.done.last() {
                Some(it) => (it.state.clone(), it.graph.clone()),
                None => (self.init.clone(), G::default()),
            };
            self.analyzer.iter = self.done.len() as u32;
            self.analyzer.next = 0;
            let input = pattern_type(&self.step.input);
            let step = self.step.clone();
            let (_, next) = self.analyzer.step_body(&step, state, input, &mut graph)?;
            self.done.push(Iteration { state: next, graph });
        }
        Ok(&self.done[n])
    }
}

/// Runs iterations `0..=n` of a stream's step function over graph kind `G`.
pub fn iterate<G: AbstractGraph>(init: &AType, step: &Arc<StepFn>, n: usize, config: AnalysisConfig) -> AResult<Vec<Iteration<G>>> {
    let mut session = new_session(config);
    let mut it = Iterations { analyzer: Analyzer::new(&mut session), init: init.clone(), step: step.clone(), done: Vec::new() };
    it.get(n)?;
    Ok(it.done)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McVerdict {
    pub bounded: bool,
    pub unconsumed: Vec<String>,
    pub iterations: usize,
    pub extended: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpVerdict {
    pub bounded: bool,
    pub longest_path: usize,
    pub iterations: usize,
}

fn label(labels: &BTreeMap<AbsRv, String>, x: AbsRv) -> String {
    match labels.get(&x) {
        Some(l) => format!("{l}@{x}"),
        None => x.to_string(),
    }
}

/// m-consumed check. For each of the first `budget + 1` iterations `k`, the
/// variables introduced at `k` and kept in the state must be consumed
/// within `budget` further iterations. A window fails early once a pending
/// variable can no longer be consumed by any later iteration.
fn check_mc(session: &mut Session, init: &AType, step: &Arc<StepFn>) -> AResult<McVerdict> {
    let budget = session.config.up_budget;
    let mut it = Iterations::<McGraph> { analyzer: Analyzer::new(session), init: init.clone(), step: step.clone(), done: Vec::new() };
    let mut used = 0;
    let mut extended = false;
    for k in 0..=budget {
        let cur = it.get(k)?;
        let ub = fold(&cur.state)?.ub;
        let mut pending: RvSet =
            cur.graph.introduced.iter().filter(|x| x.iter == k as u32 && ub.contains(x)).copied().collect();
        extended |= k > 0 && !pending.is_empty();
        let mut n = k;
        loop {
            let g = &it.get(n)?.graph;
            pending.retain(|x| !g.consumed.contains(x));
            if pending.is_empty() {
                used = used.max(n + 1);
                break;
            }
            let live = if n > k {
                let before = it.get(n - 1)?.graph.consumed.clone();
                let now = it.get(n)?;
                let reach = now.graph.ancestors(&fold(&now.state)?.ub);
                let stalled = before == now.graph.consumed;
                !stalled && pending.iter().all(|x| reach.contains(x))
            } else {
                true
            };
            if !live || n >= k + budget {
                let labels = &it.analyzer.labels;
                return Ok(McVerdict {
                    bounded: false,
                    unconsumed: pending.iter().map(|x| label(labels, *x)).collect(),
                    iterations: n + 1,
                    extended: k > 0,
                });
            }
            n += 1;
        }
    }
    Ok(McVerdict { bounded: true, unconsumed: Vec::new(), iterations: used, extended })
}

fn path(t: &AType, g: &UpGraph) -> AResult<usize> {
    Ok(g.path_from(&fold(t)?.ub))
}

/// Unseparated-paths check: find the first `n ≤ budget` whose longest
/// state path equals the one `path·size + 1` iterations later.
fn check_up(session: &mut Session, init: &AType, step: &Arc<StepFn>) -> AResult<UpVerdict> {
    let budget = session.config.up_budget;
    let mut it = Iterations::<UpGraph> { analyzer: Analyzer::new(session), init: init.clone(), step: step.clone(), done: Vec::new() };
    let mut longest = 0;
    for n in 0..=budget {
        let cur = it.get(n)?;
        let p = path(&cur.state, &cur.graph)?;
        let window = n + p * size(&cur.state) + 1;
        longest = longest.max(p);
        let later = it.get(window)?;
        let q = path(&later.state, &later.graph)?;
        if p == q {
            return Ok(UpVerdict { bounded: true, longest_path: p, iterations: n + 1 });
        }
    }
    Ok(UpVerdict { bounded: false, longest_path: longest, iterations: budget + 1 })
}

fn check_site(session: &mut Session, init: &AType, step: &Arc<StepFn>) -> AResult<()> {
    let name = step.name.clone();
    if session.sites.iter().any(|s| s.site == name) || session.active.contains(&name) {
        return Ok(());
    }
    session.active.insert(name.clone());
    let mc = check_mc(session, init, step);
    let up = check_up(session, init, step);
    session.active.remove(&name);
    let report = match (mc, up) {
        (Ok(mc), Ok(up)) => SiteReport {
            site: name,
            mc: mc.bounded,
            up: up.bounded,
            mc_unconsumed: mc.unconsumed,
            up_longest_path: up.longest_path,
            iterations_used: up.iterations,
            mc_window_extension: mc.extended,
            error: None,
        },
        (mc, up) => {
            let err = mc.err().or(up.err()).map(|e| e.to_string());
            SiteReport {
                site: name,
                mc: false,
                up: false,
                mc_unconsumed: Vec::new(),
                up_longest_path: 0,
                iterations_used: 0,
                mc_window_extension: false,
                error: err,
            }
        }
    };
    session.sites.push(report);
    Ok(())
}

fn new_session(config: AnalysisConfig) -> Session {
    Session { config, sites: Vec::new(), active: BTreeSet::new() }
}

type Declared = Option<(AType, Arc<StepFn>)>;

/// Extends the context with one declaration. With `full`, stream
/// declarations are also checked: the initial state must not reference
/// random variables, and one pass over the body finds nested infer sites.
fn declare(session: &mut Session, ctx: &Ctx, d: &Decl, full: bool) -> AResult<(Ctx, Declared)> {
    let mut a = Analyzer::<McGraph>::new(session);
    let mut g = McGraph::default();
    match d {
        Decl::Val(p, e) => {
            let t = a.expr(ctx, &mut g, e)?;
            Ok((bind(ctx, p, t), None))
        }
        Decl::Fun(f, p, e) => {
            let c = AClosure { param: p.clone(), body: e.clone(), env: ctx.clone() };
            Ok((ctx.bind(f, AType::Fun(Arc::new(c))), None))
        }
        Decl::Stream(s) => {
            let init = a.expr(ctx, &mut g, &s.init)?;
            let step = Arc::new(StepFn {
                name: s.name.clone(),
                state: s.state.clone(),
                input: s.input.clone(),
                env: ctx.clone(),
                body: s.body.clone(),
            });
            if full {
                if !fold(&init)?.ub.is_empty() {
                    return Err(other(format!("initial state of `{}` references random variables", s.name)));
                }
                a.step_body(&step, init.clone(), pattern_type(&s.input), &mut g)?;
            }
            let ctx = ctx.bind(&s.name, AType::Def(Box::new(init.clone()), step.clone()));
            Ok((ctx, Some((init, step))))
        }
    }
}

/// Analyzes every declaration, reporting each `infer` site once.
pub fn analyze_program(program: &Program, config: AnalysisConfig) -> Result<AnalysisReport, AnalysisError> {
    let mut session = new_session(config);
    let mut ctx = Ctx::new();
    for d in &program.decls {
        ctx = declare(&mut session, &ctx, d, true)?.0;
    }
    Ok(AnalysisReport { sites: session.sites })
}

/// Looks up a stream declaration's initial type and step function.
pub fn stream_def(program: &Program, name: &str) -> AResult<(AType, Arc<StepFn>)> {
    let mut session = new_session(AnalysisConfig::default());
    let mut ctx = Ctx::new();
    for d in &program.decls {
        let (next, def) = declare(&mut session, &ctx, d, false)?;
        match def {
            Some(def) if def.1.name == name => return Ok(def),
            _ => ctx = next,
        }
    }
    Err(other(format!("no stream named `{name}`")))
}

/// Analyzes the named stream as if it were an infer site.
pub fn analyze_stream(program: &Program, name: &str, config: AnalysisConfig) -> Result<SiteReport, AnalysisError> {
    let (init, step) = stream_def(program, name)?;
    let mut session = new_session(config);
    check_site(&mut session, &init, &step)?;
    session.sites.pop().ok_or_else(|| other(format!("no report for `{name}`")))
}

/// Infers the type of an expression in an empty context.
pub fn infer_type<G: AbstractGraph>(e: &Expr, g: &mut G) -> AResult<AType> {
    let mut session = new_session(AnalysisConfig::default());
    let mut a = Analyzer::<G>::new(&mut session);
    a.expr(&Ctx::new(), g, e)
}

pub fn check_mc_bounded(init: &AType, step: &Arc<StepFn>, config: AnalysisConfig) -> AResult<McVerdict> {
    check_mc(&mut new_session(config), init, step)
}

pub fn check_up_bounded(init: &AType, step: &Arc<StepFn>, config: AnalysisConfig) -> AResult<UpVerdict> {
    check_up(&mut new_session(config), init, step)
}
