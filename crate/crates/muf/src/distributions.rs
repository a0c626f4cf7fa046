//! Marginal and conditional distributions, sampling, densities and the
//! conjugate updates used by delayed sampling.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta as BetaD, Distribution, Normal, Poisson as PoissonD};
use statrs::function::gamma::ln_gamma;

use crate::error::DistError;

/// Fully concrete data: what a realized random variable holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Concrete {
    Unit,
    Bool(bool),
    Int(i64),
    Real(f64),
    Pair(Box<Concrete>, Box<Concrete>),
    List(Vec<Concrete>),
    Array(Vec<Concrete>),
    Dist(Box<MDistr>),
}

impl Concrete {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Concrete::Real(r) => Some(*r),
            Concrete::Int(i) => Some(*i as f64),
            Concrete::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn pair(a: Concrete, b: Concrete) -> Concrete {
        Concrete::Pair(Box::new(a), Box::new(b))
    }
}

impl fmt::Display for Concrete {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Concrete::Unit => write!(f, "()"),
            Concrete::Bool(b) => write!(f, "{b}"),
            Concrete::Int(i) => write!(f, "{i}"),
            Concrete::Real(r) => write!(f, "{r}"),
            Concrete::Pair(a, b) => write!(f, "({a}, {b})"),
            Concrete::List(xs) | Concrete::Array(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Concrete::Dist(d) => write!(f, "{d}"),
        }
    }
}

/// Marginal distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum MDistr {
    Gaussian { mean: f64, var: f64 },
    Beta { a: f64, b: f64 },
    Bernoulli { p: f64 },
    Poisson { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Delta(Concrete),
    Categorical(Vec<(Concrete, f64)>),
    Shuffle(Vec<Concrete>),
    /// Weighted mixture; produced by `infer`.
    Mixture(Vec<(f64, MDistr)>),
    /// Componentwise marginals of a structured value (pair, list or array).
    Product(ProductKind, Vec<MDistr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductKind {
    Pair,
    List,
    Array,
}

impl fmt::Display for MDistr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MDistr::Gaussian { mean, var } => write!(f, "Gaussian({mean}, {var})"),
            MDistr::Beta { a, b } => write!(f, "Beta({a}, {b})"),
            MDistr::Bernoulli { p } => write!(f, "Bernoulli({p})"),
            MDistr::Poisson { rate } => write!(f, "Poisson({rate})"),
            MDistr::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            MDistr::Delta(v) => write!(f, "Delta({v})"),
            MDistr::Categorical(s) => write!(f, "Categorical({} atoms)", s.len()),
            MDistr::Shuffle(xs) => write!(f, "Shuffle({} items)", xs.len()),
            MDistr::Mixture(cs) => write!(f, "Mixture({} components)", cs.len()),
            MDistr::Product(_, cs) => write!(f, "Product({} components)", cs.len()),
        }
    }
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), DistError> {
    if ok {
        Ok(())
    } else {
        Err(DistError::InvalidParams(what()))
    }
}

impl MDistr {
    pub fn gaussian(mean: f64, var: f64) -> Result<MDistr, DistError> {
        check(mean.is_finite() && var.is_finite() && var > 0.0, || {
            format!("gaussian({mean}, {var})")
        })?;
        Ok(MDistr::Gaussian { mean, var })
    }

    pub fn beta(a: f64, b: f64) -> Result<MDistr, DistError> {
        check(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(), || format!("beta({a}, {b})"))?;
        Ok(MDistr::Beta { a, b })
    }

    pub fn bernoulli(p: f64) -> Result<MDistr, DistError> {
        check((0.0..=1.0).contains(&p), || format!("bernoulli({p})"))?;
        Ok(MDistr::Bernoulli { p })
    }

    pub fn poisson(rate: f64) -> Result<MDistr, DistError> {
        check(rate > 0.0 && rate.is_finite(), || format!("poisson({rate})"))?;
        Ok(MDistr::Poisson { rate })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<MDistr, DistError> {
        check(lo.is_finite() && hi.is_finite() && hi > lo, || format!("uniform({lo}, {hi})"))?;
        Ok(MDistr::Uniform { lo, hi })
    }

    /// Normalizes the weights; atoms with equal support are kept separate.
    pub fn categorical(atoms: Vec<(Concrete, f64)>) -> Result<MDistr, DistError> {
        let total: f64 = atoms.iter().map(|(_, w)| *w).sum();
        check(
            atoms.iter().all(|(_, w)| *w >= 0.0) && total > 0.0 && total.is_finite(),
            || "categorical weights".to_string(),
        )?;
        Ok(MDistr::Categorical(atoms.into_iter().map(|(v, w)| (v, w / total)).collect()))
    }
}

/// Conditional kernels p(child | parent).
#[derive(Debug, Clone, PartialEq)]
pub enum CDistr {
    /// child ~ Gaussian(scale * parent + shift, var)
    GaussianMean { var: f64, scale: f64, shift: f64 },
    /// child ~ Bernoulli(parent)
    Bernoulli,
    /// child ~ Gaussian(parent, var)
    GaussianObs { var: f64 },
}

impl CDistr {
    fn affine(&self) -> Option<(f64, f64, f64)> {
        match self {
            CDistr::GaussianMean { var, scale, shift } => Some((*var, *scale, *shift)),
            CDistr::GaussianObs { var } => Some((*var, 1.0, 0.0)),
            CDistr::Bernoulli => None,
        }
    }
}

impl fmt::Display for CDistr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CDistr::GaussianMean { var, scale, shift } => {
                write!(f, "CGaussianMean({var}, ({scale}, {shift}))")
            }
            CDistr::Bernoulli => write!(f, "CBernoulli"),
            CDistr::GaussianObs { var } => write!(f, "CGaussianObs({var})"),
        }
    }
}

pub fn draw<R: Rng + ?Sized>(d: &MDistr, rng: &mut R) -> Concrete {
    match d {
        MDistr::Gaussian { mean, var } => {
            let n = Normal::new(*mean, var.sqrt()).expect("validated gaussian");
            Concrete::Real(n.sample(rng))
        }
        MDistr::Beta { a, b } => {
            let d = BetaD::new(*a, *b).expect("validated beta");
            Concrete::Real(d.sample(rng))
        }
        MDistr::Bernoulli { p } => Concrete::Bool(rng.gen::<f64>() < *p),
        MDistr::Poisson { rate } => {
            let d = PoissonD::new(*rate).expect("validated poisson");
            Concrete::Int(d.sample(rng) as i64)
        }
        MDistr::Uniform { lo, hi } => Concrete::Real(rng.gen_range(*lo..*hi)),
        MDistr::Delta(v) => v.clone(),
        MDistr::Categorical(atoms) => {
            let idx = pick(atoms.iter().map(|(_, w)| *w), rng);
            atoms[idx].0.clone()
        }
        MDistr::Shuffle(xs) => {
            let mut ys = xs.clone();
            ys.shuffle(rng);
            Concrete::List(ys)
        }
        MDistr::Mixture(cs) => {
            let idx = pick(cs.iter().map(|(w, _)| *w), rng);
            draw(&cs[idx].1, rng)
        }
        MDistr::Product(kind, cs) => {
            let vals: Vec<Concrete> = cs.iter().map(|c| draw(c, rng)).collect();
            rebuild(*kind, vals)
        }
    }
}

fn rebuild(kind: ProductKind, mut vals: Vec<Concrete>) -> Concrete {
    match kind {
        ProductKind::Pair => {
            let b = vals.pop().unwrap_or(Concrete::Unit);
            let a = vals.pop().unwrap_or(Concrete::Unit);
            Concrete::pair(a, b)
        }
        ProductKind::List => Concrete::List(vals),
        ProductKind::Array => Concrete::Array(vals),
    }
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
        }
        u -= w;
    }
    last
}

/// Density or mass of `v` under `d`.
pub fn pdf(d: &MDistr, v: &Concrete) -> f64 {
    match (d, v) {
        (MDistr::Gaussian { mean, var }, _) => match v.as_real() {
            Some(x) => {
                let z = x - mean;
                (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }
            None => 0.0,
        },
        (MDistr::Beta { a, b }, Concrete::Real(x)) => {
            if *x < 0.0 || *x > 1.0 {
                return 0.0;
            }
            let ln_b = ln_gamma(*a) + ln_gamma(*b) - ln_gamma(a + b);
            let lx = if *a == 1.0 { 0.0 } else { (a - 1.0) * x.ln() };
            let l1x = if *b == 1.0 { 0.0 } else { (b - 1.0) * (1.0 - x).ln() };
            (lx + l1x - ln_b).exp()
        }
        (MDistr::Bernoulli { p }, Concrete::Bool(x)) => {
            if *x {
                *p
            } else {
                1.0 - p
            }
        }
        (MDistr::Poisson { rate }, Concrete::Int(k)) => {
            if *k < 0 {
                return 0.0;
            }
            let k = *k as f64;
            (k * rate.ln() - rate - ln_gamma(k + 1.0)).exp()
        }
        (MDistr::Uniform { lo, hi }, _) => match v.as_real() {
            Some(x) if x >= *lo && x <= *hi => 1.0 / (hi - lo),
            _ => 0.0,
        },
        (MDistr::Delta(x), _) => {
            if x == v {
                1.0
            } else {
                0.0
            }
        }
        (MDistr::Categorical(atoms), _) => {
            atoms.iter().filter(|(x, _)| x == v).map(|(_, w)| *w).sum()
        }
        (MDistr::Shuffle(xs), Concrete::List(ys)) => {
            if is_permutation(xs, ys) {
                (-ln_gamma(xs.len() as f64 + 1.0)).exp()
            } else {
                0.0
            }
        }
        (MDistr::Mixture(cs), _) => cs.iter().map(|(w, c)| w * pdf(c, v)).sum(),
        (MDistr::Product(kind, cs), _) => {
            let parts: Vec<&Concrete> = match (kind, v) {
                (ProductKind::Pair, Concrete::Pair(a, b)) => vec![a, b],
                (ProductKind::List, Concrete::List(xs)) | (ProductKind::Array, Concrete::Array(xs)) => {
                    xs.iter().collect()
                }
                _ => return 0.0,
            };
            if parts.len() != cs.len() {
                return 0.0;
            }
            cs.iter().zip(parts).map(|(c, x)| pdf(c, x)).product()
        }
        _ => 0.0,
    }
}

fn is_permutation(xs: &[Concrete], ys: &[Concrete]) -> bool {
    if xs.len() != ys.len() {
        return false;
    }
    let mut used = vec![false; ys.len()];
    xs.iter().all(|x| {
        match ys.iter().enumerate().position(|(j, y)| !used[j] && y == x) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

/// Specializes a conditional at a realized parent value.
pub fn cdistr_to_mdistr(cd: &CDistr, parent: &Concrete) -> Result<MDistr, DistError> {
    let x = parent
        .as_real()
        .ok_or_else(|| DistError::InvalidParams(format!("parent value {parent}")))?;
    match cd {
        CDistr::Bernoulli => MDistr::bernoulli(x),
        _ => {
            let (var, s, t) = cd.affine().unwrap();
            MDistr::gaussian(s * x + t, var)
        }
    }
}

/// Marginal of the child after integrating out the parent.
pub fn make_marginal(parent: &MDistr, cd: &CDistr) -> Result<MDistr, DistError> {
    match (parent, cd) {
        (MDistr::Gaussian { mean, var }, cd) if cd.affine().is_some() => {
            let (v, s, t) = cd.affine().unwrap();
            MDistr::gaussian(s * mean + t, s * s * var + v)
        }
        (MDistr::Beta { a, b }, CDistr::Bernoulli) => MDistr::bernoulli(a / (a + b)),
        _ => Err(DistError::NonConjugate(format!("{parent} with {cd}"))),
    }
}

/// Posterior of the parent after observing the child.
pub fn make_conditional(parent: &MDistr, cd: &CDistr, obs: &Concrete) -> Result<MDistr, DistError> {
    match (parent, cd) {
        (MDistr::Gaussian { mean, var }, cd) if cd.affine().is_some() => {
            let (v, s, t) = cd.affine().unwrap();
            let y = obs
                .as_real()
                .ok_or_else(|| DistError::InvalidParams(format!("gaussian observation {obs}")))?;
            // Precision-weighted update for y = s*x + t + noise.
            let prec = 1.0 / var + s * s / v;
            let post_var = 1.0 / prec;
            let post_mean = post_var * (mean / var + s * (y - t) / v);
            MDistr::gaussian(post_mean, post_var)
        }
        (MDistr::Beta { a, b }, CDistr::Bernoulli) => match obs {
            Concrete::Bool(true) => MDistr::beta(a + 1.0, *b),
            Concrete::Bool(false) => MDistr::beta(*a, b + 1.0),
            _ => Err(DistError::InvalidParams(format!("bernoulli observation {obs}"))),
        },
        _ => Err(DistError::NonConjugate(format!("{parent} with {cd}"))),
    }
}

/// Whether a (parent, kernel) pair is in the conjugacy table.
pub fn is_conjugate(parent: &MDistr, cd: &CDistr) -> bool {
    matches!(
        (parent, cd),
        (MDistr::Gaussian { .. }, CDistr::GaussianMean { .. } | CDistr::GaussianObs { .. })
            | (MDistr::Beta { .. }, CDistr::Bernoulli)
    )
}

/// Mean and variance.
pub fn stats(d: &MDistr) -> Result<(f64, f64), DistError> {
    match d {
        MDistr::Gaussian { mean, var } => Ok((*mean, *var)),
        MDistr::Beta { a, b } => {
            let s = a + b;
            Ok((a / s, a * b / (s * s * (s + 1.0))))
        }
        MDistr::Bernoulli { p } => Ok((*p, p * (1.0 - p))),
        MDistr::Poisson { rate } => Ok((*rate, *rate)),
        MDistr::Uniform { lo, hi } => Ok(((lo + hi) / 2.0, (hi - lo).powi(2) / 12.0)),
        MDistr::Delta(v) => match v.as_real() {
            Some(x) => Ok((x, 0.0)),
            None => Err(DistError::UndefinedMoment(format!("Delta({v})"))),
        },
        MDistr::Categorical(atoms) => {
            let mut m = 0.0;
            let mut m2 = 0.0;
            for (v, w) in atoms {
                let x = v
                    .as_real()
                    .ok_or_else(|| DistError::UndefinedMoment("non-numeric categorical".into()))?;
                m += w * x;
                m2 += w * x * x;
            }
            Ok((m, (m2 - m * m).max(0.0)))
        }
        MDistr::Shuffle(_) => Err(DistError::UndefinedMoment("Shuffle".into())),
        MDistr::Mixture(cs) => {
            // Law of total expectation and total variance.
            let total: f64 = cs.iter().map(|(w, _)| w).sum();
            let mut mean = 0.0;
            let mut second = 0.0;
            for (w, c) in cs {
                let (m, v) = stats(c)?;
                let w = w / total;
                mean += w * m;
                second += w * (v + m * m);
            }
            Ok((mean, (second - mean * mean).max(0.0)))
        }
        MDistr::Product(..) => Err(DistError::UndefinedMoment("structured value".into())),
    }
}

/// Per-component moments of a possibly structured distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Moments {
    Scalar { mean: f64, var: f64 },
    Seq(ProductKind, Vec<Moments>),
    Undefined,
}

pub fn moments(d: &MDistr) -> Moments {
    match d {
        MDistr::Product(kind, cs) => Moments::Seq(*kind, cs.iter().map(moments).collect()),
        MDistr::Delta(v) => concrete_moments(v),
        MDistr::Mixture(cs) => {
            let parts: Vec<(f64, Moments)> = cs.iter().map(|(w, c)| (*w, moments(c))).collect();
            mix_moments(&parts)
        }
        MDistr::Categorical(atoms) if atoms.iter().any(|(v, _)| v.as_real().is_none()) => {
            let parts: Vec<(f64, Moments)> =
                atoms.iter().map(|(v, w)| (*w, concrete_moments(v))).collect();
            mix_moments(&parts)
        }
        _ => match stats(d) {
            Ok((mean, var)) => Moments::Scalar { mean, var },
            Err(_) => Moments::Undefined,
        },
    }
}

fn concrete_moments(v: &Concrete) -> Moments {
    match v {
        Concrete::Pair(a, b) => {
            Moments::Seq(ProductKind::Pair, vec![concrete_moments(a), concrete_moments(b)])
        }
        Concrete::List(xs) => Moments::Seq(ProductKind::List, xs.iter().map(concrete_moments).collect()),
        Concrete::Array(xs) => {
            Moments::Seq(ProductKind::Array, xs.iter().map(concrete_moments).collect())
        }
        Concrete::Dist(d) => moments(d),
        other => match other.as_real() {
            Some(x) => Moments::Scalar { mean: x, var: 0.0 },
            None => Moments::Undefined,
        },
    }
}

fn mix_moments(parts: &[(f64, Moments)]) -> Moments {
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if parts.is_empty() || total <= 0.0 {
        return Moments::Undefined;
    }
    match &parts[0].1 {
        Moments::Scalar { .. } => {
            let mut mean = 0.0;
            let mut second = 0.0;
            for (w, m) in parts {
                match m {
                    Moments::Scalar { mean: mu, var } => {
                        let w = w / total;
                        mean += w * mu;
                        second += w * (var + mu * mu);
                    }
                    _ => return Moments::Undefined,
                }
            }
            Moments::Scalar { mean, var: (second - mean * mean).max(0.0) }
        }
        Moments::Seq(kind, first) => {
            let n = first.len();
            let mut cols: Vec<Vec<(f64, Moments)>> = vec![Vec::with_capacity(parts.len()); n];
            for (w, m) in parts {
                match m {
                    Moments::Seq(k, xs) if k == kind && xs.len() == n => {
                        for (col, x) in cols.iter_mut().zip(xs) {
                            col.push((*w, x.clone()));
                        }
                    }
                    _ => return Moments::Undefined,
                }
            }
            Moments::Seq(*kind, cols.iter().map(|c| mix_moments(c)).collect())
        }
        Moments::Undefined => Moments::Undefined,
    }
}
