//! Ground-term evaluation of ELM expressions.
//!
//! Classical two-valued semantics over exact integers and rationals, so
//! verdicts agree with solver arithmetic on every representable input.
//! Integer division-like operations (`mod`, scaled time differences) use
//! the Euclidean convention (`0 <= r < |n|`), matching SMT-LIB `div`/`mod`.
//!
//! This evaluator is the independent oracle the test suites check solver
//! verdicts against: conjunction with brute-force enumeration of a finite
//! domain decides satisfiability without the solver's help.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use super::{BinaryOp, ElmExpression, NaryOp, UnaryOp, Value};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unbound symbol `{name}` at {source_path}")]
    UnboundSymbol { name: String, source_path: String },
    #[error("type mismatch at {source_path}: {detail}")]
    TypeMismatch { detail: String, source_path: String },
    #[error("division by zero at {source_path}")]
    DivisionByZero { source_path: String },
    #[error("operator `{name}` at {source_path} is not evaluable")]
    UnsupportedOperator { name: String, source_path: String },
}

/// Evaluates `expr` under `assignment`. Conjunctions and disjunctions
/// short-circuit left to right.
pub fn evaluate(
    expr: &ElmExpression,
    assignment: &BTreeMap<String, Value>,
) -> Result<Value, EvalError> {
    match expr {
        ElmExpression::Literal { value, .. } => Ok(value.clone()),
        ElmExpression::SymbolRef { name, source_path } => {
            assignment
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::UnboundSymbol {
                    name: name.clone(),
                    source_path: source_path.clone(),
                })
        }
        ElmExpression::Unary {
            op,
            arg,
            source_path,
        } => eval_unary(*op, arg, assignment, source_path),
        ElmExpression::Binary {
            op,
            lhs,
            rhs,
            source_path,
        } => eval_binary(*op, lhs, rhs, assignment, source_path),
        ElmExpression::Nary {
            op,
            args,
            source_path,
        } => eval_nary(*op, args, assignment, source_path),
        ElmExpression::IntervalTest {
            value,
            low,
            high,
            low_closed,
            high_closed,
            source_path,
        } => {
            let v = evaluate(value, assignment)?;
            let lo = evaluate(low, assignment)?;
            let hi = evaluate(high, assignment)?;
            let above = compare(&v, &lo, source_path)?;
            let below = compare(&v, &hi, source_path)?;
            let low_ok = if *low_closed { above >= 0 } else { above > 0 };
            let high_ok = if *high_closed { below <= 0 } else { below < 0 };
            Ok(Value::Bool(low_ok && high_ok))
        }
    }
}

fn expect_bool(v: Value, path: &str) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::TypeMismatch {
            detail: format!("expected Bool, found {}", other.kind()),
            source_path: path.to_string(),
        }),
    }
}

fn eval_unary(
    op: UnaryOp,
    arg: &ElmExpression,
    assignment: &BTreeMap<String, Value>,
    path: &str,
) -> Result<Value, EvalError> {
    match op {
        UnaryOp::Not => {
            let b = expect_bool(evaluate(arg, assignment)?, path)?;
            Ok(Value::Bool(!b))
        }
        UnaryOp::Negate => match evaluate(arg, assignment)? {
            Value::Int(i) => Ok(Value::Int(-i)),
            Value::Real(r) => Ok(Value::Real(-r)),
            other => Err(EvalError::TypeMismatch {
                detail: format!("cannot negate {}", other.kind()),
                source_path: path.to_string(),
            }),
        },
        UnaryOp::Exists => match evaluate(arg, assignment)? {
            Value::List(items) => Ok(Value::Bool(!items.is_empty())),
            other => Err(EvalError::TypeMismatch {
                detail: format!("Exists expects a list, found {}", other.kind()),
                source_path: path.to_string(),
            }),
        },
        UnaryOp::IsTrue => {
            let b = expect_bool(evaluate(arg, assignment)?, path)?;
            Ok(Value::Bool(b))
        }
        UnaryOp::IsFalse => {
            let b = expect_bool(evaluate(arg, assignment)?, path)?;
            Ok(Value::Bool(!b))
        }
        // Values carry no null; IsNull over a non-nullable symbol is
        // false by definition.
        UnaryOp::IsNull => {
            evaluate(arg, assignment)?;
            Ok(Value::Bool(false))
        }
        UnaryOp::Count => Err(EvalError::UnsupportedOperator {
            name: "Count".into(),
            source_path: path.to_string(),
        }),
    }
}

fn eval_nary(
    op: NaryOp,
    args: &[ElmExpression],
    assignment: &BTreeMap<String, Value>,
    path: &str,
) -> Result<Value, EvalError> {
    match op {
        NaryOp::And => {
            for a in args {
                if !expect_bool(evaluate(a, assignment)?, path)? {
                    return Ok(Value::Bool(false));
                }
            }
            Ok(Value::Bool(true))
        }
        NaryOp::Or => {
            for a in args {
                if expect_bool(evaluate(a, assignment)?, path)? {
                    return Ok(Value::Bool(true));
                }
            }
            Ok(Value::Bool(false))
        }
        NaryOp::Concatenate => {
            let mut s = String::new();
            for a in args {
                match evaluate(a, assignment)? {
                    Value::Str(part) => s.push_str(&part),
                    other => {
                        return Err(EvalError::TypeMismatch {
                            detail: format!("Concatenate expects Str, found {}", other.kind()),
                            source_path: path.to_string(),
                        })
                    }
                }
            }
            Ok(Value::Str(s))
        }
    }
}

fn eval_binary(
    op: BinaryOp,
    lhs: &ElmExpression,
    rhs: &ElmExpression,
    assignment: &BTreeMap<String, Value>,
    path: &str,
) -> Result<Value, EvalError> {
    match op {
        BinaryOp::Xor => {
            let a = expect_bool(evaluate(lhs, assignment)?, path)?;
            let b = expect_bool(evaluate(rhs, assignment)?, path)?;
            Ok(Value::Bool(a != b))
        }
        BinaryOp::Implies => {
            let a = expect_bool(evaluate(lhs, assignment)?, path)?;
            if !a {
                return Ok(Value::Bool(true));
            }
            let b = expect_bool(evaluate(rhs, assignment)?, path)?;
            Ok(Value::Bool(b))
        }
        BinaryOp::Add => arith(
            lhs,
            rhs,
            assignment,
            path,
            "Add",
            |a, b| a + b,
            |a, b| a + b,
        ),
        BinaryOp::Subtract => arith(
            lhs,
            rhs,
            assignment,
            path,
            "Subtract",
            |a, b| a - b,
            |a, b| a - b,
        ),
        BinaryOp::Multiply => arith(
            lhs,
            rhs,
            assignment,
            path,
            "Multiply",
            |a, b| a * b,
            |a, b| a * b,
        ),
        BinaryOp::Divide => {
            let a = evaluate(lhs, assignment)?;
            let b = evaluate(rhs, assignment)?;
            let (a, b) = promote_pair(a, b, "Divide", path)?;
            let (a, b) = match (a, b) {
                (Value::Int(x), Value::Int(y)) => {
                    (BigRational::from_integer(x), BigRational::from_integer(y))
                }
                (Value::Real(x), Value::Real(y)) => (x, y),
                (x, y) => {
                    return Err(EvalError::TypeMismatch {
                        detail: format!("Divide over {} and {}", x.kind(), y.kind()),
                        source_path: path.to_string(),
                    })
                }
            };
            if b.is_zero() {
                return Err(EvalError::DivisionByZero {
                    source_path: path.to_string(),
                });
            }
            Ok(Value::Real(a / b))
        }
        BinaryOp::Modulo => {
            let a = evaluate(lhs, assignment)?;
            let b = evaluate(rhs, assignment)?;
            match (a, b) {
                (Value::Int(a), Value::Int(b)) => {
                    if b.is_zero() {
                        return Err(EvalError::DivisionByZero {
                            source_path: path.to_string(),
                        });
                    }
                    Ok(Value::Int(euclid_rem(&a, &b)))
                }
                (x, y) => Err(EvalError::TypeMismatch {
                    detail: format!(
                        "Modulo expects Int operands, found {} and {}",
                        x.kind(),
                        y.kind()
                    ),
                    source_path: path.to_string(),
                }),
            }
        }
        BinaryOp::Equal | BinaryOp::NotEqual => {
            let a = evaluate(lhs, assignment)?;
            let b = evaluate(rhs, assignment)?;
            let eq = values_equal(&a, &b, path)?;
            Ok(Value::Bool(if op == BinaryOp::Equal { eq } else { !eq }))
        }
        BinaryOp::Greater | BinaryOp::GreaterOrEqual | BinaryOp::Less | BinaryOp::LessOrEqual => {
            let a = evaluate(lhs, assignment)?;
            let b = evaluate(rhs, assignment)?;
            let ord = compare(&a, &b, path)?;
            Ok(Value::Bool(match op {
                BinaryOp::Greater => ord > 0,
                BinaryOp::GreaterOrEqual => ord >= 0,
                BinaryOp::Less => ord < 0,
                BinaryOp::LessOrEqual => ord <= 0,
                _ => unreachable!(),
            }))
        }
        BinaryOp::StartsWith | BinaryOp::EndsWith => {
            let a = evaluate(lhs, assignment)?;
            let b = evaluate(rhs, assignment)?;
            match (a, b) {
                (Value::Str(s), Value::Str(part)) => {
                    Ok(Value::Bool(if op == BinaryOp::StartsWith {
                        s.starts_with(&part)
                    } else {
                        s.ends_with(&part)
                    }))
                }
                (x, y) => Err(EvalError::TypeMismatch {
                    detail: format!("string test over {} and {}", x.kind(), y.kind()),
                    source_path: path.to_string(),
                }),
            }
        }
        BinaryOp::DifferenceBetween(precision) => {
            let a = evaluate(lhs, assignment)?;
            let b = evaluate(rhs, assignment)?;
            match (a, b) {
                (Value::Timestamp(t1), Value::Timestamp(t2)) => {
                    let delta = BigInt::from(t2) - BigInt::from(t1);
                    let div = BigInt::from(precision.divisor_ms());
                    Ok(Value::Int(euclid_div(&delta, &div)))
                }
                (x, y) => Err(EvalError::TypeMismatch {
                    detail: format!(
                        "DifferenceBetween expects Timestamps, found {} and {}",
                        x.kind(),
                        y.kind()
                    ),
                    source_path: path.to_string(),
                }),
            }
        }
    }
}

fn arith(
    lhs: &ElmExpression,
    rhs: &ElmExpression,
    assignment: &BTreeMap<String, Value>,
    path: &str,
    opname: &str,
    int_op: impl Fn(BigInt, BigInt) -> BigInt,
    real_op: impl Fn(BigRational, BigRational) -> BigRational,
) -> Result<Value, EvalError> {
    let a = evaluate(lhs, assignment)?;
    let b = evaluate(rhs, assignment)?;
    match promote_pair(a, b, opname, path)? {
        (Value::Int(x), Value::Int(y)) => Ok(Value::Int(int_op(x, y))),
        (Value::Real(x), Value::Real(y)) => Ok(Value::Real(real_op(x, y))),
        (x, y) => Err(EvalError::TypeMismatch {
            detail: format!("{opname} over {} and {}", x.kind(), y.kind()),
            source_path: path.to_string(),
        }),
    }
}

/// Promotes Int to Real when the other side is Real; anything else passes
/// through unchanged for the caller to check.
fn promote_pair(a: Value, b: Value, opname: &str, path: &str) -> Result<(Value, Value), EvalError> {
    match (a, b) {
        (Value::Int(x), Value::Real(y)) => {
            Ok((Value::Real(BigRational::from_integer(x)), Value::Real(y)))
        }
        (Value::Real(x), Value::Int(y)) => {
            Ok((Value::Real(x), Value::Real(BigRational::from_integer(y))))
        }
        (Value::Bool(_), _) | (_, Value::Bool(_)) if opname != "Equal" => {
            Err(EvalError::TypeMismatch {
                detail: format!("{opname} over Bool"),
                source_path: path.to_string(),
            })
        }
        pair => Ok(pair),
    }
}

/// Three-way comparison over ordered values: -1, 0, or 1.
fn compare(a: &Value, b: &Value, path: &str) -> Result<i32, EvalError> {
    let ord = match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Real(x), Value::Real(y)) => x.cmp(y),
        (Value::Int(x), Value::Real(y)) => BigRational::from_integer(x.clone()).cmp(y),
        (Value::Real(x), Value::Int(y)) => x.cmp(&BigRational::from_integer(y.clone())),
        (Value::Timestamp(x), Value::Timestamp(y)) => x.cmp(y),
        (x, y) => {
            return Err(EvalError::TypeMismatch {
                detail: format!("cannot order {} against {}", x.kind(), y.kind()),
                source_path: path.to_string(),
            })
        }
    };
    Ok(ord as i32)
}

fn values_equal(a: &Value, b: &Value, path: &str) -> Result<bool, EvalError> {
    match (a, b) {
        (Value::Bool(x), Value::Bool(y)) => Ok(x == y),
        (Value::Str(x), Value::Str(y)) => Ok(x == y),
        (Value::Timestamp(x), Value::Timestamp(y)) => Ok(x == y),
        (Value::Int(_), Value::Int(_))
        | (Value::Real(_), Value::Real(_))
        | (Value::Int(_), Value::Real(_))
        | (Value::Real(_), Value::Int(_)) => Ok(compare(a, b, path)? == 0),
        (Value::List(x), Value::List(y)) => {
            if x.len() != y.len() {
                return Ok(false);
            }
            for (p, q) in x.iter().zip(y) {
                if !values_equal(p, q, path)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        (
            Value::Opaque {
                sort_name: s1,
                tag: t1,
            },
            Value::Opaque {
                sort_name: s2,
                tag: t2,
            },
        ) if s1 == s2 => Ok(t1 == t2),
        (x, y) => Err(EvalError::TypeMismatch {
            detail: format!("cannot compare {} against {}", x.kind(), y.kind()),
            source_path: path.to_string(),
        }),
    }
}

/// Euclidean remainder: `0 <= r < |b|`.
fn euclid_rem(a: &BigInt, b: &BigInt) -> BigInt {
    let r = a % b;
    if r.is_negative() {
        r + b.abs()
    } else {
        r
    }
}

/// Euclidean quotient, consistent with [`euclid_rem`]:
/// `a = b * q + r` with `0 <= r < |b|`.
fn euclid_div(a: &BigInt, b: &BigInt) -> BigInt {
    (a - euclid_rem(a, b)) / b
}
