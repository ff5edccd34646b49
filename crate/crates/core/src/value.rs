//! Scalar comparison used for grading and response conditions.
//!
//! Numbers compare by exact decimal value: integers as integers, everything
//! else through the nearest `f64` of the decimal text (equal decimals parse
//! to the same double, so `0.5` and `0.50` agree without an epsilon).
//! A string that parses as a finite number compares numerically against a
//! number.

use core::cmp::Ordering;

use serde_json::{Number, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Numeric {
    Int(i128),
    Real(f64),
}

fn numeric(v: &Value) -> Option<Numeric> {
    match v {
        Value::Number(n) => Some(from_number(n)),
        Value::String(s) => parse_decimal(s.trim()),
        _ => None,
    }
}

fn from_number(n: &Number) -> Numeric {
    if let Some(i) = n.as_i64() {
        Numeric::Int(i128::from(i))
    } else if let Some(u) = n.as_u64() {
        Numeric::Int(i128::from(u))
    } else {
        Numeric::Real(n.as_f64().unwrap_or(f64::NAN))
    }
}

fn parse_decimal(s: &str) -> Option<Numeric> {
    if s.is_empty() {
        return None;
    }
    if let Ok(i) = s.parse::<i128>() {
        return Some(Numeric::Int(i));
    }
    match s.parse::<f64>() {
        Ok(f) if f.is_finite() => Some(Numeric::Real(f)),
        _ => None,
    }
}

fn as_real(n: Numeric) -> f64 {
    match n {
        Numeric::Int(i) => i as f64,
        Numeric::Real(f) => f,
    }
}

fn cmp_numeric(a: Numeric, b: Numeric) -> Option<Ordering> {
    match (a, b) {
        (Numeric::Int(x), Numeric::Int(y)) => Some(x.cmp(&y)),
        (Numeric::Int(x), Numeric::Real(y)) | (Numeric::Real(y), Numeric::Int(x))
            if libm::trunc(y) == y && libm::fabs(y) < 1.7e38 =>
        {
            let ord = x.cmp(&(y as i128));
            Some(if matches!(a, Numeric::Int(_)) { ord } else { ord.reverse() })
        }
        _ => as_real(a).partial_cmp(&as_real(b)),
    }
}

/// Grading equality between a submitted value and an expected value.
pub fn scalar_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::String(x), Value::String(y)) => x == y,
        (Value::Number(_), _) | (_, Value::Number(_)) => match (numeric(a), numeric(b)) {
            (Some(x), Some(y)) => cmp_numeric(x, y) == Some(Ordering::Equal),
            _ => false,
        },
        _ => a == b,
    }
}

/// Ordering for `lt`/`gt` comparisons; `None` unless both sides are numeric.
pub fn scalar_cmp(a: &Value, b: &Value) -> Option<Ordering> {
    cmp_numeric(numeric(a)?, numeric(b)?)
}

pub fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}
