//! ELM expression AST, parsing, metrics, and a ground-term evaluator.
//!
//! The AST covers the operator subset this tool translates: logical,
//! arithmetic, and comparison operators completely; list `Exists` and
//! interval `In` partially; time differences and `IsTrue`/`IsFalse`/
//! `IsNull` in a minimal fragment; aggregation (`Count`) is recognized
//! so it can be diagnosed, but is never translatable.

mod eval;
mod parse;
mod text;

pub use eval::{evaluate, EvalError};
pub use parse::{parse_elm, ElmParseError};
pub use text::{parse_prefix, prefix_text};

pub(crate) use parse::decimal_to_rational as decimal_to_rational_text;

use num_bigint::BigInt;
use num_rational::BigRational;

/// Operator categories, used when diagnosing unsupported constructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorCategory {
    Logical,
    Mathematical,
    Equality,
    String,
    List,
    Interval,
    Time,
    Miscellaneous,
    Aggregation,
}

impl OperatorCategory {
    pub fn name(self) -> &'static str {
        match self {
            OperatorCategory::Logical => "Logical",
            OperatorCategory::Mathematical => "Mathematical",
            OperatorCategory::Equality => "Equality",
            OperatorCategory::String => "String",
            OperatorCategory::List => "List",
            OperatorCategory::Interval => "Interval",
            OperatorCategory::Time => "Time",
            OperatorCategory::Miscellaneous => "Miscellaneous",
            OperatorCategory::Aggregation => "Aggregation",
        }
    }
}

/// How completely a category is covered by the translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportLevel {
    Complete,
    Partial,
    Scarce,
    None,
}

impl SupportLevel {
    pub fn name(self) -> &'static str {
        match self {
            SupportLevel::Complete => "completely",
            SupportLevel::Partial => "partially",
            SupportLevel::Scarce => "scarcely",
            SupportLevel::None => "none",
        }
    }
}

/// Precision of a time difference. Divisors are fixed: a day is
/// 86 400 000 ms and a year is 365.25 days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimePrecision {
    Years,
    Days,
    Milliseconds,
}

impl TimePrecision {
    pub fn divisor_ms(self) -> i64 {
        match self {
            TimePrecision::Years => 31_557_600_000,
            TimePrecision::Days => 86_400_000,
            TimePrecision::Milliseconds => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Negate,
    Exists,
    IsTrue,
    IsFalse,
    IsNull,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Xor,
    Implies,
    Add,
    Subtract,
    Multiply,
    Divide,
    Modulo,
    Equal,
    NotEqual,
    Greater,
    GreaterOrEqual,
    Less,
    LessOrEqual,
    StartsWith,
    EndsWith,
    DifferenceBetween(TimePrecision),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaryOp {
    And,
    Or,
    Concatenate,
}

impl UnaryOp {
    pub fn category(self) -> OperatorCategory {
        match self {
            UnaryOp::Not => OperatorCategory::Logical,
            UnaryOp::Negate => OperatorCategory::Mathematical,
            UnaryOp::Exists => OperatorCategory::List,
            UnaryOp::IsTrue | UnaryOp::IsFalse | UnaryOp::IsNull => OperatorCategory::Miscellaneous,
            UnaryOp::Count => OperatorCategory::Aggregation,
        }
    }

    pub fn support(self) -> SupportLevel {
        match self.category() {
            OperatorCategory::Logical | OperatorCategory::Mathematical => SupportLevel::Complete,
            OperatorCategory::List => SupportLevel::Partial,
            OperatorCategory::Miscellaneous => SupportLevel::Scarce,
            OperatorCategory::Aggregation => SupportLevel::None,
            _ => unreachable!("unary operator categories are fixed"),
        }
    }
}

impl BinaryOp {
    pub fn category(self) -> OperatorCategory {
        match self {
            BinaryOp::Xor | BinaryOp::Implies => OperatorCategory::Logical,
            BinaryOp::Add
            | BinaryOp::Subtract
            | BinaryOp::Multiply
            | BinaryOp::Divide
            | BinaryOp::Modulo => OperatorCategory::Mathematical,
            BinaryOp::Equal
            | BinaryOp::NotEqual
            | BinaryOp::Greater
            | BinaryOp::GreaterOrEqual
            | BinaryOp::Less
            | BinaryOp::LessOrEqual => OperatorCategory::Equality,
            BinaryOp::StartsWith | BinaryOp::EndsWith => OperatorCategory::String,
            BinaryOp::DifferenceBetween(_) => OperatorCategory::Time,
        }
    }

    pub fn support(self) -> SupportLevel {
        match self.category() {
            OperatorCategory::Logical
            | OperatorCategory::Mathematical
            | OperatorCategory::Equality
            | OperatorCategory::String => SupportLevel::Complete,
            OperatorCategory::Time => SupportLevel::Scarce,
            _ => unreachable!("binary operator categories are fixed"),
        }
    }
}

impl NaryOp {
    pub fn category(self) -> OperatorCategory {
        match self {
            NaryOp::And | NaryOp::Or => OperatorCategory::Logical,
            NaryOp::Concatenate => OperatorCategory::String,
        }
    }

    pub fn support(self) -> SupportLevel {
        SupportLevel::Complete
    }
}

/// A ground value: literal carrier and the evaluator's result type.
///
/// Integers and rationals are exact and unbounded so evaluation agrees
/// with solver arithmetic on every input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Bool(bool),
    Int(BigInt),
    Real(BigRational),
    Str(String),
    /// Epoch milliseconds.
    Timestamp(i64),
    List(Vec<Value>),
    /// An element of an uninterpreted sort, identified by sort name and a
    /// distinguishing tag.
    Opaque {
        sort_name: String,
        tag: i64,
    },
}

impl Value {
    pub fn int(i: i64) -> Value {
        Value::Int(BigInt::from(i))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Bool(_) => "Bool",
            Value::Int(_) => "Int",
            Value::Real(_) => "Real",
            Value::Str(_) => "Str",
            Value::Timestamp(_) => "Timestamp",
            Value::List(_) => "List",
            Value::Opaque { .. } => "Opaque",
        }
    }
}

/// A typed ELM logic fragment. Every node keeps the source path of the
/// XML element it was parsed from, so diagnostics point back at the
/// document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElmExpression {
    Literal {
        value: Value,
        source_path: String,
    },
    SymbolRef {
        name: String,
        source_path: String,
    },
    Unary {
        op: UnaryOp,
        arg: Box<ElmExpression>,
        source_path: String,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<ElmExpression>,
        rhs: Box<ElmExpression>,
        source_path: String,
    },
    Nary {
        op: NaryOp,
        args: Vec<ElmExpression>,
        source_path: String,
    },
    IntervalTest {
        value: Box<ElmExpression>,
        low: Box<ElmExpression>,
        high: Box<ElmExpression>,
        low_closed: bool,
        high_closed: bool,
        source_path: String,
    },
}

impl ElmExpression {
    pub fn source_path(&self) -> &str {
        match self {
            ElmExpression::Literal { source_path, .. }
            | ElmExpression::SymbolRef { source_path, .. }
            | ElmExpression::Unary { source_path, .. }
            | ElmExpression::Binary { source_path, .. }
            | ElmExpression::Nary { source_path, .. }
            | ElmExpression::IntervalTest { source_path, .. } => source_path,
        }
    }

    /// Child expressions in evaluation order.
    pub fn children(&self) -> Vec<&ElmExpression> {
        match self {
            ElmExpression::Literal { .. } | ElmExpression::SymbolRef { .. } => Vec::new(),
            ElmExpression::Unary { arg, .. } => vec![arg],
            ElmExpression::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            ElmExpression::Nary { args, .. } => args.iter().collect(),
            ElmExpression::IntervalTest {
                value, low, high, ..
            } => vec![value, low, high],
        }
    }

    /// True for operator nodes (everything except literals and symbol
    /// references).
    pub fn is_operator(&self) -> bool {
        !matches!(
            self,
            ElmExpression::Literal { .. } | ElmExpression::SymbolRef { .. }
        )
    }

    /// All symbol names referenced in this expression, in first-occurrence
    /// order.
    pub fn referenced_symbols(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if let ElmExpression::SymbolRef { name, .. } = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
            let mut kids = e.children();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }

    /// Structural equality that ignores source paths; used to compare
    /// ASTs that originate from different serializations.
    pub fn structurally_equal(&self, other: &ElmExpression) -> bool {
        match (self, other) {
            (ElmExpression::Literal { value: a, .. }, ElmExpression::Literal { value: b, .. }) => {
                a == b
            }
            (
                ElmExpression::SymbolRef { name: a, .. },
                ElmExpression::SymbolRef { name: b, .. },
            ) => a == b,
            (
                ElmExpression::Unary { op: a, arg: x, .. },
                ElmExpression::Unary { op: b, arg: y, .. },
            ) => a == b && x.structurally_equal(y),
            (
                ElmExpression::Binary {
                    op: a,
                    lhs: l1,
                    rhs: r1,
                    ..
                },
                ElmExpression::Binary {
                    op: b,
                    lhs: l2,
                    rhs: r2,
                    ..
                },
            ) => a == b && l1.structurally_equal(l2) && r1.structurally_equal(r2),
            (
                ElmExpression::Nary { op: a, args: x, .. },
                ElmExpression::Nary { op: b, args: y, .. },
            ) => {
                a == b
                    && x.len() == y.len()
                    && x.iter().zip(y).all(|(p, q)| p.structurally_equal(q))
            }
            (
                ElmExpression::IntervalTest {
                    value: v1,
                    low: l1,
                    high: h1,
                    low_closed: lc1,
                    high_closed: hc1,
                    ..
                },
                ElmExpression::IntervalTest {
                    value: v2,
                    low: l2,
                    high: h2,
                    low_closed: lc2,
                    high_closed: hc2,
                    ..
                },
            ) => {
                lc1 == lc2
                    && hc1 == hc2
                    && v1.structurally_equal(v2)
                    && l1.structurally_equal(l2)
                    && h1.structurally_equal(h2)
            }
            _ => false,
        }
    }
}

/// Size counters for a set of top-level expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub expr_count: u64,
    pub oper_count: u64,
}

/// Counts top-level expressions and operator nodes.
///
/// The counting rule: `expr_count` is the number of top-level expressions
/// passed in (named expression definitions plus condition roots);
/// `oper_count` is the total number of operator (non-leaf) AST nodes
/// across all of them. Literals and symbol references are leaves.
pub fn count_metrics(exprs: &[ElmExpression]) -> Metrics {
    let mut oper = 0u64;
    for e in exprs {
        let mut stack = vec![e];
        while let Some(n) = stack.pop() {
            if n.is_operator() {
                oper += 1;
            }
            stack.extend(n.children());
        }
    }
    Metrics {
        expr_count: exprs.len() as u64,
        oper_count: oper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(name: &str) -> ElmExpression {
        ElmExpression::SymbolRef {
            name: name.into(),
            source_path: format!("${name}"),
        }
    }

    #[test]
    fn metrics_empty_list() {
        let m = count_metrics(&[]);
        assert_eq!((m.expr_count, m.oper_count), (0, 0));
    }

    #[test]
    fn metrics_single_and_of_two_symbols() {
        let e = ElmExpression::Nary {
            op: NaryOp::And,
            args: vec![sym("p"), sym("q")],
            source_path: "$".into(),
        };
        let m = count_metrics(&[e]);
        assert_eq!((m.expr_count, m.oper_count), (1, 1));
    }

    #[test]
    fn metrics_commute_under_reordering() {
        let a = ElmExpression::Unary {
            op: UnaryOp::Not,
            arg: Box::new(sym("p")),
            source_path: "$a".into(),
        };
        let b = ElmExpression::Binary {
            op: BinaryOp::Greater,
            lhs: Box::new(sym("x")),
            rhs: Box::new(ElmExpression::Literal {
                value: Value::int(3),
                source_path: "$3".into(),
            }),
            source_path: "$b".into(),
        };
        let fwd = count_metrics(&[a.clone(), b.clone()]);
        let rev = count_metrics(&[b, a]);
        assert_eq!(fwd, rev);
    }

    #[test]
    fn table_2_support_levels() {
        assert_eq!(NaryOp::And.support(), SupportLevel::Complete);
        assert_eq!(BinaryOp::Divide.support(), SupportLevel::Complete);
        assert_eq!(BinaryOp::GreaterOrEqual.support(), SupportLevel::Complete);
        assert_eq!(BinaryOp::StartsWith.support(), SupportLevel::Complete);
        assert_eq!(UnaryOp::Exists.support(), SupportLevel::Partial);
        assert_eq!(
            BinaryOp::DifferenceBetween(TimePrecision::Years).support(),
            SupportLevel::Scarce
        );
        assert_eq!(UnaryOp::IsTrue.support(), SupportLevel::Scarce);
        assert_eq!(UnaryOp::Count.support(), SupportLevel::None);
        assert_eq!(UnaryOp::Count.category(), OperatorCategory::Aggregation);
    }
}
