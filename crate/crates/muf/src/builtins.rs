//! The builtin operator table and evaluation of first-order operators on
//! concrete arguments.

use crate::distributions::{Concrete, MDistr};
use crate::error::RuntimeError;

/// Operators that may be applied to symbolic arguments, building a
/// symbolic term instead of forcing their inputs.
pub const SYMBOLIC_OPS: &[&str] = &[
    "plus", "sub", "mult", "div", "lt", "eq", "not", "and", "or", "ite", "gaussian", "beta",
    "bernoulli", "poisson", "uniform", "shuffle",
];

pub const STRUCTURAL_OPS: &[&str] = &[
    "List.nil",
    "List.init",
    "List.map",
    "List.filter",
    "List.append",
    "List.length",
    "List.iter2",
    "Array.empty",
    "Array.init",
    "Array.get",
];

pub const SPECIAL_OPS: &[&str] = &["mean", "eval"];

pub const DISTRIBUTION_OPS: &[&str] = &["gaussian", "beta", "bernoulli", "poisson", "uniform", "shuffle"];

pub fn is_builtin(name: &str) -> bool {
    SYMBOLIC_OPS.contains(&name) || STRUCTURAL_OPS.contains(&name) || SPECIAL_OPS.contains(&name)
}

pub fn is_nullary(name: &str) -> bool {
    matches!(name, "List.nil" | "Array.empty")
}

pub fn is_symbolic_op(name: &str) -> bool {
    SYMBOLIC_OPS.contains(&name)
}

pub fn is_distribution_op(name: &str) -> bool {
    DISTRIBUTION_OPS.contains(&name)
}

fn err(msg: impl Into<String>) -> RuntimeError {
    RuntimeError::Eval(msg.into())
}

/// Splits a right-nested tuple argument into `n` components.
pub fn split_args(arg: &Concrete, n: usize) -> Result<Vec<&Concrete>, RuntimeError> {
    let mut out = Vec::with_capacity(n);
    let mut cur = arg;
    for _ in 1..n {
        match cur {
            Concrete::Pair(a, b) => {
                out.push(a.as_ref());
                cur = b.as_ref();
            }
            _ => return Err(err(format!("expected a {n}-tuple argument, found {arg}"))),
        }
    }
    out.push(cur);
    Ok(out)
}

fn real(v: &Concrete, op: &str) -> Result<f64, RuntimeError> {
    match v {
        Concrete::Real(r) => Ok(*r),
        _ => Err(err(format!("{op}: expected a real, found {v}"))),
    }
}

fn boolean(v: &Concrete, op: &str) -> Result<bool, RuntimeError> {
    match v {
        Concrete::Bool(b) => Ok(*b),
        _ => Err(err(format!("{op}: expected a bool, found {v}"))),
    }
}

fn arith(op: &str, a: &Concrete, b: &Concrete) -> Result<Concrete, RuntimeError> {
    match (a, b) {
        (Concrete::Int(x), Concrete::Int(y)) => {
            let r = match op {
                "plus" => x.checked_add(*y),
                "sub" => x.checked_sub(*y),
                "mult" => x.checked_mul(*y),
                _ => {
                    if *y == 0 {
                        return Err(err("integer division by zero"));
                    }
                    x.checked_div(*y)
                }
            };
            r.map(Concrete::Int).ok_or_else(|| err(format!("{op}: integer overflow")))
        }
        (Concrete::Real(x), Concrete::Real(y)) => Ok(Concrete::Real(match op {
            "plus" => x + y,
            "sub" => x - y,
            "mult" => x * y,
            _ => x / y,
        })),
        _ => Err(err(format!("{op}: operands {a} and {b} are not both int or both real"))),
    }
}

/// Evaluates a first-order operator on concrete arguments.
pub fn apply_concrete(op: &str, arg: &Concrete) -> Result<Concrete, RuntimeError> {
    let dist = |d: Result<MDistr, _>| -> Result<Concrete, RuntimeError> {
        Ok(Concrete::Dist(Box::new(d.map_err(RuntimeError::Dist)?)))
    };
    match op {
        "plus" | "sub" | "mult" | "div" => {
            let a = split_args(arg, 2)?;
            arith(op, a[0], a[1])
        }
        "lt" => {
            let a = split_args(arg, 2)?;
            match (a[0], a[1]) {
                (Concrete::Int(x), Concrete::Int(y)) => Ok(Concrete::Bool(x < y)),
                (Concrete::Real(x), Concrete::Real(y)) => Ok(Concrete::Bool(x < y)),
                _ => Err(err(format!("lt: incomparable operands {arg}"))),
            }
        }
        "eq" => {
            let a = split_args(arg, 2)?;
            Ok(Concrete::Bool(a[0] == a[1]))
        }
        "not" => Ok(Concrete::Bool(!boolean(arg, op)?)),
        "and" | "or" => {
            let a = split_args(arg, 2)?;
            let (x, y) = (boolean(a[0], op)?, boolean(a[1], op)?);
            Ok(Concrete::Bool(if op == "and" { x && y } else { x || y }))
        }
        "ite" => {
            let a = split_args(arg, 3)?;
            Ok(if boolean(a[0], op)? { a[1].clone() } else { a[2].clone() })
        }
        "gaussian" => {
            let a = split_args(arg, 2)?;
            dist(MDistr::gaussian(real(a[0], op)?, real(a[1], op)?))
        }
        "beta" => {
            let a = split_args(arg, 2)?;
            dist(MDistr::beta(real(a[0], op)?, real(a[1], op)?))
        }
        "uniform" => {
            let a = split_args(arg, 2)?;
            dist(MDistr::uniform(real(a[0], op)?, real(a[1], op)?))
        }
        "bernoulli" => dist(MDistr::bernoulli(real(arg, op)?)),
        "poisson" => dist(MDistr::poisson(real(arg, op)?)),
        "shuffle" => match arg {
            Concrete::List(xs) => Ok(Concrete::Dist(Box::new(MDistr::Shuffle(xs.clone())))),
            _ => Err(err(format!("shuffle: expected a list, found {arg}"))),
        },
        _ => Err(err(format!("`{op}` is not a first-order operator"))),
    }
}
