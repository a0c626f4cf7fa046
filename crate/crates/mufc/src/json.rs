//! Conversions between JSON and runtime values, and report encoding.

use std::sync::Arc;

use muf::distributions::{moments, Moments};
use muf::static_analysis::{AnalysisReport, SiteReport};
use muf::types::CoreType;
use muf::value::Value;
use serde_json::{json, Value as Json};

/// Converts one step's JSON input to a value of type `t`.
///
/// Tuples may be written flat (`[1, 2, 3]` for `a * (b * c)`) or nested.
pub fn to_value(j: &Json, t: &CoreType) -> Result<Value, String> {
    match (t, j) {
        (CoreType::Unit, Json::Null) => Ok(Value::Unit),
        (CoreType::Unit, Json::Array(xs)) if xs.is_empty() => Ok(Value::Unit),
        (CoreType::Bool, Json::Bool(b)) => Ok(Value::Bool(*b)),
        (CoreType::Int, Json::Number(n)) => {
            n.as_i64().map(Value::Int).ok_or_else(|| format!("expected an integer, got {n}"))
        }
        (CoreType::Real, Json::Number(n)) => Ok(Value::Real(n.as_f64().unwrap_or(f64::NAN))),
        (CoreType::Prod(..), Json::Array(xs)) => tuple(xs, t),
        (CoreType::List(e), Json::Array(xs)) => {
            Ok(Value::List(Arc::new(xs.iter().map(|x| to_value(x, e)).collect::<Result<_, _>>()?)))
        }
        (CoreType::Array(e), Json::Array(xs)) => {
            Ok(Value::Array(Arc::new(xs.iter().map(|x| to_value(x, e)).collect::<Result<_, _>>()?)))
        }
        // Unconstrained input positions accept any first-order value.
        (CoreType::Var(_), j) => Ok(untyped(j)),
        (t, j) => Err(format!("expected {t}, got {j}")),
    }
}

fn tuple(xs: &[Json], t: &CoreType) -> Result<Value, String> {
    match t {
        CoreType::Prod(a, b) => {
            let (first, rest) = xs.split_first().ok_or_else(|| format!("too few components for {t}"))?;
            let va = to_value(first, a)?;
            let vb = match rest {
                [one] => to_value(one, b)?,
                _ if matches!(**b, CoreType::Prod(..)) => tuple(rest, b)?,
                _ => return Err(format!("wrong number of components for {t}")),
            };
            Ok(Value::pair(va, vb))
        }
        _ => match xs {
            [one] => to_value(one, t),
            _ => Err(format!("wrong number of components for {t}")),
        },
    }
}

fn untyped(j: &Json) -> Value {
    match j {
        Json::Null => Value::Unit,
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => match n.as_i64() {
            Some(i) if !n.is_f64() => Value::Int(i),
            _ => Value::Real(n.as_f64().unwrap_or(f64::NAN)),
        },
        Json::Array(xs) => Value::List(Arc::new(xs.iter().map(untyped).collect())),
        Json::String(_) | Json::Object(_) => Value::Unit,
    }
}

fn num(x: f64) -> Json {
    serde_json::Number::from_f64(x).map(Json::Number).unwrap_or(Json::Null)
}

fn moments_json(m: &Moments) -> Json {
    match m {
        Moments::Scalar { mean, var } => json!({ "mean": num(*mean), "variance": num(*var) }),
        Moments::Seq(_, cs) => Json::Array(cs.iter().map(moments_json).collect()),
        Moments::Undefined => Json::Null,
    }
}

/// Encodes an output value. Distributions are summarized by their mean
/// and variance; with `raw` they are printed as text instead.
pub fn from_value(v: &Value, raw: bool) -> Json {
    match v {
        Value::Unit => Json::Null,
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => json!(i),
        Value::Real(r) => num(*r),
        Value::Pair(p) => {
            let mut out = vec![from_value(&p.0, raw)];
            match from_value(&p.1, raw) {
                Json::Array(rest) if matches!(p.1, Value::Pair(_)) => out.extend(rest),
                other => out.push(other),
            }
            Json::Array(out)
        }
        Value::List(xs) | Value::Array(xs) => Json::Array(xs.iter().map(|x| from_value(x, raw)).collect()),
        Value::Dist(d) if raw => Json::String(d.to_string()),
        Value::Dist(d) => moments_json(&moments(d)),
        other => Json::String(other.to_string()),
    }
}

/// Flattens an encoded output into CSV cells.
pub fn csv_cells(j: &Json, out: &mut Vec<String>) {
    match j {
        Json::Array(xs) => xs.iter().for_each(|x| csv_cells(x, out)),
        Json::Object(m) => m.values().for_each(|x| csv_cells(x, out)),
        Json::Null => out.push(String::new()),
        Json::String(s) => out.push(format!("\"{}\"", s.replace('"', "\"\""))),
        other => out.push(other.to_string()),
    }
}

pub fn site_json(s: &SiteReport) -> Json {
    let mut j = json!({
        "site": s.site,
        "mc": s.mc,
        "up": s.up,
        "bounded": s.bounded(),
        "mc_unconsumed": s.mc_unconsumed,
        "up_longest_path": s.up_longest_path,
        "iterations_used": s.iterations_used,
    });
    if s.mc_window_extension {
        j["mc_window_extension"] = Json::Bool(true);
    }
    if let Some(e) = &s.error {
        j["error"] = Json::String(e.clone());
    }
    j
}

pub fn report_json(file: &str, r: &AnalysisReport) -> Json {
    json!({
        "file": file,
        "accepted": r.accepted(),
        "sites": r.sites.iter().map(site_json).collect::<Vec<_>>(),
    })
}
