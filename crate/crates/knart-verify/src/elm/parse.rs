//! Parsing raw condition subtrees into the ELM AST.
//!
//! The operator of an element is taken from its `xsi:type` attribute
//! when present (the usual ELM serialization, e.g.
//! `<operand xsi:type="elm:And">`), falling back to the element's local
//! name. Operands are the `operand` children when any exist, otherwise
//! every child element that is not an annotation or type specifier.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::pow::Pow;
use thiserror::Error;

use super::{BinaryOp, ElmExpression, NaryOp, TimePrecision, UnaryOp, Value};
use crate::xml::{strip_qname_prefix, XmlNode};

#[derive(Debug, Error)]
pub enum ElmParseError {
    #[error("unknown operator `{name}` at {source_path}")]
    UnknownOperator { name: String, source_path: String },
    #[error("operator `{op}` at {source_path} expects {expected} operand(s), found {found}")]
    ArityMismatch {
        op: String,
        expected: String,
        found: usize,
        source_path: String,
    },
    #[error("malformed node at {source_path}: {detail}")]
    BadNode { detail: String, source_path: String },
}

/// Parses one raw expression subtree into an [`ElmExpression`].
pub fn parse_elm(raw: &XmlNode) -> Result<ElmExpression, ElmParseError> {
    let op_name = operator_name(raw);
    match op_name.as_str() {
        "Literal" => parse_literal(raw),
        "ExpressionRef" | "OperandRef" | "ParameterRef" | "IdentifierRef" | "AliasRef" => {
            let name = raw
                .attr("name")
                .or_else(|| raw.attr("parameterName"))
                .ok_or_else(|| ElmParseError::BadNode {
                    detail: format!("{op_name} is missing a name attribute"),
                    source_path: raw.path.clone(),
                })?;
            Ok(ElmExpression::SymbolRef {
                name: name.to_string(),
                source_path: raw.path.clone(),
            })
        }
        "And" | "Or" => {
            let args = parse_operands(raw)?;
            require_at_least(raw, &op_name, 2, args.len())?;
            Ok(ElmExpression::Nary {
                op: if op_name == "And" {
                    NaryOp::And
                } else {
                    NaryOp::Or
                },
                args,
                source_path: raw.path.clone(),
            })
        }
        "Concatenate" => {
            let args = parse_operands(raw)?;
            require_at_least(raw, &op_name, 2, args.len())?;
            Ok(ElmExpression::Nary {
                op: NaryOp::Concatenate,
                args,
                source_path: raw.path.clone(),
            })
        }
        "Not" => unary(raw, UnaryOp::Not),
        "Negate" => unary(raw, UnaryOp::Negate),
        "Exists" => unary(raw, UnaryOp::Exists),
        "IsTrue" => unary(raw, UnaryOp::IsTrue),
        "IsFalse" => unary(raw, UnaryOp::IsFalse),
        "IsNull" => unary(raw, UnaryOp::IsNull),
        "Count" => unary(raw, UnaryOp::Count),
        "Xor" => binary(raw, BinaryOp::Xor),
        "Implies" => binary(raw, BinaryOp::Implies),
        "Add" => binary(raw, BinaryOp::Add),
        "Subtract" => binary(raw, BinaryOp::Subtract),
        "Multiply" => binary(raw, BinaryOp::Multiply),
        "Divide" => binary(raw, BinaryOp::Divide),
        "Modulo" => binary(raw, BinaryOp::Modulo),
        "Equal" => binary(raw, BinaryOp::Equal),
        "NotEqual" => binary(raw, BinaryOp::NotEqual),
        "Greater" => binary(raw, BinaryOp::Greater),
        "GreaterOrEqual" => binary(raw, BinaryOp::GreaterOrEqual),
        "Less" => binary(raw, BinaryOp::Less),
        "LessOrEqual" => binary(raw, BinaryOp::LessOrEqual),
        "StartsWith" => binary(raw, BinaryOp::StartsWith),
        "EndsWith" => binary(raw, BinaryOp::EndsWith),
        "DifferenceBetween" | "DurationBetween" => {
            let precision = parse_precision(raw)?;
            binary(raw, BinaryOp::DifferenceBetween(precision))
        }
        "In" => parse_in(raw),
        other => Err(ElmParseError::UnknownOperator {
            name: other.to_string(),
            source_path: raw.path.clone(),
        }),
    }
}

fn operator_name(node: &XmlNode) -> String {
    match node.attr("type") {
        Some(t) => strip_qname_prefix(t).to_string(),
        None => node.name.clone(),
    }
}

/// Children that are expression operands (skips annotations, type
/// specifiers, and operator parameters such as `precision`).
fn operand_nodes(node: &XmlNode) -> Vec<&XmlNode> {
    let named: Vec<&XmlNode> = node.children_named("operand").collect();
    if !named.is_empty() {
        return named;
    }
    node.children
        .iter()
        .filter(|c| {
            !matches!(
                c.name.as_str(),
                "annotation" | "resultTypeSpecifier" | "precision" | "conditionRole"
            )
        })
        .collect()
}

fn parse_operands(node: &XmlNode) -> Result<Vec<ElmExpression>, ElmParseError> {
    operand_nodes(node).into_iter().map(parse_elm).collect()
}

fn require_at_least(
    node: &XmlNode,
    op: &str,
    expected: usize,
    found: usize,
) -> Result<(), ElmParseError> {
    if found < expected {
        return Err(ElmParseError::ArityMismatch {
            op: op.to_string(),
            expected: format!("at least {expected}"),
            found,
            source_path: node.path.clone(),
        });
    }
    Ok(())
}

fn exactly_n(node: &XmlNode, op: &str, n: usize) -> Result<Vec<ElmExpression>, ElmParseError> {
    let args = parse_operands(node)?;
    if args.len() != n {
        return Err(ElmParseError::ArityMismatch {
            op: op.to_string(),
            expected: n.to_string(),
            found: args.len(),
            source_path: node.path.clone(),
        });
    }
    Ok(args)
}

fn unary(node: &XmlNode, op: UnaryOp) -> Result<ElmExpression, ElmParseError> {
    let mut args = exactly_n(node, &operator_name(node), 1)?;
    Ok(ElmExpression::Unary {
        op,
        arg: Box::new(args.remove(0)),
        source_path: node.path.clone(),
    })
}

fn binary(node: &XmlNode, op: BinaryOp) -> Result<ElmExpression, ElmParseError> {
    let mut args = exactly_n(node, &operator_name(node), 2)?;
    let rhs = args.remove(1);
    let lhs = args.remove(0);
    Ok(ElmExpression::Binary {
        op,
        lhs: Box::new(lhs),
        rhs: Box::new(rhs),
        source_path: node.path.clone(),
    })
}

fn parse_precision(node: &XmlNode) -> Result<TimePrecision, ElmParseError> {
    let raw = node
        .attr("precision")
        .map(str::to_string)
        .or_else(|| {
            node.child("precision")
                .and_then(|p| p.attr("value"))
                .map(str::to_string)
        })
        .ok_or_else(|| ElmParseError::BadNode {
            detail: "time difference requires a precision".into(),
            source_path: node.path.clone(),
        })?;
    match raw.to_ascii_lowercase().as_str() {
        "year" | "years" | "a" => Ok(TimePrecision::Years),
        "day" | "days" | "d" => Ok(TimePrecision::Days),
        "millisecond" | "milliseconds" | "ms" => Ok(TimePrecision::Milliseconds),
        other => Err(ElmParseError::BadNode {
            detail: format!("unsupported precision `{other}` (want years, days, or milliseconds)"),
            source_path: node.path.clone(),
        }),
    }
}

/// `In` takes a value and an `Interval` operand carrying `low`/`high`
/// children and `lowClosed`/`highClosed` attributes (both default true,
/// as in ELM).
fn parse_in(node: &XmlNode) -> Result<ElmExpression, ElmParseError> {
    let operands = operand_nodes(node);
    if operands.len() != 2 {
        return Err(ElmParseError::ArityMismatch {
            op: "In".into(),
            expected: "2".into(),
            found: operands.len(),
            source_path: node.path.clone(),
        });
    }
    let value = parse_elm(operands[0])?;
    let interval = operands[1];
    if operator_name(interval) != "Interval" {
        return Err(ElmParseError::BadNode {
            detail: "second operand of In must be an Interval".into(),
            source_path: interval.path.clone(),
        });
    }
    let low = interval
        .child("low")
        .ok_or_else(|| ElmParseError::BadNode {
            detail: "Interval is missing its low bound".into(),
            source_path: interval.path.clone(),
        })?;
    let high = interval
        .child("high")
        .ok_or_else(|| ElmParseError::BadNode {
            detail: "Interval is missing its high bound".into(),
            source_path: interval.path.clone(),
        })?;
    let closed = |attr: Option<&str>| attr.map(|v| v != "false").unwrap_or(true);
    Ok(ElmExpression::IntervalTest {
        value: Box::new(value),
        low: Box::new(parse_elm(low)?),
        high: Box::new(parse_elm(high)?),
        low_closed: closed(interval.attr("lowClosed")),
        high_closed: closed(interval.attr("highClosed")),
        source_path: node.path.clone(),
    })
}

fn parse_literal(node: &XmlNode) -> Result<ElmExpression, ElmParseError> {
    let text = node
        .attr("value")
        .map(str::to_string)
        .unwrap_or_else(|| node.text.clone());
    let value_type = node.attr("valueType").map(strip_qname_prefix);
    let value = match value_type {
        Some("Boolean") => parse_bool(&text, node)?,
        Some("Integer") => parse_int(&text, node)?,
        Some("Decimal") => parse_decimal(&text, node)?,
        Some("String") => Value::Str(text),
        Some("DateTime") => {
            Value::Timestamp(text.parse::<i64>().map_err(|_| ElmParseError::BadNode {
                detail: format!("DateTime literal `{text}` must be integer epoch milliseconds"),
                source_path: node.path.clone(),
            })?)
        }
        Some(other) => {
            return Err(ElmParseError::BadNode {
                detail: format!("unsupported literal value type `{other}`"),
                source_path: node.path.clone(),
            })
        }
        // Untyped literal: sniff boolean, then integer, then decimal,
        // else string.
        None => {
            if text == "true" || text == "false" {
                Value::Bool(text == "true")
            } else if let Ok(v) = parse_int(&text, node) {
                v
            } else if let Ok(v) = parse_decimal(&text, node) {
                v
            } else {
                Value::Str(text)
            }
        }
    };
    Ok(ElmExpression::Literal {
        value,
        source_path: node.path.clone(),
    })
}

fn parse_bool(text: &str, node: &XmlNode) -> Result<Value, ElmParseError> {
    match text {
        "true" => Ok(Value::Bool(true)),
        "false" => Ok(Value::Bool(false)),
        _ => Err(ElmParseError::BadNode {
            detail: format!("bad Boolean literal `{text}`"),
            source_path: node.path.clone(),
        }),
    }
}

fn parse_int(text: &str, node: &XmlNode) -> Result<Value, ElmParseError> {
    text.parse::<BigInt>()
        .map(Value::Int)
        .map_err(|_| ElmParseError::BadNode {
            detail: format!("bad Integer literal `{text}`"),
            source_path: node.path.clone(),
        })
}

fn parse_decimal(text: &str, node: &XmlNode) -> Result<Value, ElmParseError> {
    decimal_to_rational(text)
        .map(Value::Real)
        .ok_or_else(|| ElmParseError::BadNode {
            detail: format!("bad Decimal literal `{text}`"),
            source_path: node.path.clone(),
        })
}

/// Exact conversion of a plain decimal string (`-12.75`) to a rational.
pub(crate) fn decimal_to_rational(text: &str) -> Option<BigRational> {
    let (sign, digits) = match text.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, text),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all_digits = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let numer: BigInt = joined.parse().ok()?;
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(BigRational::new(numer * sign, denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml::parse_document;

    /// The running example's condition logic, as serialized in a KA.
    pub(crate) const LIST_1_XML: &str = r#"<logic xmlns:elm="urn:hl7-org:elm:r1" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:type="elm:And">
  <operand xsi:type="elm:GreaterOrEqual">
    <operand xsi:type="elm:ExpressionRef" name="PatientAgeInYears"/>
    <operand xsi:type="elm:Literal" valueType="t:Integer" value="18"/>
  </operand>
  <operand xsi:type="elm:Not">
    <operand xsi:type="elm:Exists">
      <operand xsi:type="elm:ExpressionRef" name="AdverseReactionToACEInhibitors"/>
    </operand>
  </operand>
</logic>"#;

    #[test]
    fn parses_the_running_example() {
        let root = parse_document(LIST_1_XML.as_bytes()).unwrap();
        let ast = parse_elm(&root).unwrap();
        assert_eq!(
            super::super::prefix_text(&ast),
            "(and (>= PatientAgeInYears 18) (not (exists AdverseReactionToACEInhibitors)))"
        );
        // Source paths survive on every node.
        if let ElmExpression::Nary { args, .. } = &ast {
            assert_eq!(args[0].source_path(), "/logic[1]/operand[1]");
        } else {
            panic!("expected an And node");
        }
    }

    #[test]
    fn bare_boolean_literal() {
        let root = parse_document(br#"<Literal value="true"/>"#).unwrap();
        let ast = parse_elm(&root).unwrap();
        assert!(matches!(
            ast,
            ElmExpression::Literal {
                value: Value::Bool(true),
                ..
            }
        ));
    }

    #[test]
    fn count_parses_but_is_tagged_aggregation() {
        let xml = r#"<Count><ExpressionRef name="xs"/></Count>"#;
        let root = parse_document(xml.as_bytes()).unwrap();
        let ast = parse_elm(&root).unwrap();
        match ast {
            ElmExpression::Unary { op, .. } => {
                assert_eq!(op, UnaryOp::Count);
                assert_eq!(op.support(), super::super::SupportLevel::None);
            }
            other => panic!("expected Count, got {other:?}"),
        }
    }

    #[test]
    fn unknown_operator_carries_source_path() {
        let xml = r#"<And><Query/><Literal value="true"/></And>"#;
        let root = parse_document(xml.as_bytes()).unwrap();
        let err = parse_elm(&root).unwrap_err();
        match err {
            ElmParseError::UnknownOperator { name, source_path } => {
                assert_eq!(name, "Query");
                assert_eq!(source_path, "/And[1]/Query[1]");
            }
            other => panic!("expected UnknownOperator, got {other:?}"),
        }
    }

    #[test]
    fn arity_is_checked() {
        let xml = r#"<Not><Literal value="true"/><Literal value="false"/></Not>"#;
        let root = parse_document(xml.as_bytes()).unwrap();
        assert!(matches!(
            parse_elm(&root),
            Err(ElmParseError::ArityMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn interval_membership_with_open_bound() {
        let xml = r#"<In>
            <ExpressionRef name="x"/>
            <Interval lowClosed="true" highClosed="false">
              <low xsi:type="elm:Literal" valueType="t:Integer" value="3"
                   xmlns:elm="urn:hl7-org:elm:r1"
                   xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"/>
              <high xsi:type="elm:Literal" valueType="t:Integer" value="7"
                   xmlns:elm="urn:hl7-org:elm:r1"
                   xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"/>
            </Interval>
          </In>"#;
        let root = parse_document(xml.as_bytes()).unwrap();
        match parse_elm(&root).unwrap() {
            ElmExpression::IntervalTest {
                low_closed,
                high_closed,
                ..
            } => {
                assert!(low_closed);
                assert!(!high_closed);
            }
            other => panic!("expected IntervalTest, got {other:?}"),
        }
    }

    #[test]
    fn decimal_literals_are_exact() {
        let r = decimal_to_rational("-12.75").unwrap();
        assert_eq!(r, BigRational::new(BigInt::from(-51), BigInt::from(4)));
        assert!(decimal_to_rational("1.2.3").is_none());
    }

    proptest::proptest! {
        /// Parsing stays panic-free over corrupted condition subtrees.
        #[test]
        fn parse_never_panics_on_mutated_logic(at in 0usize..1000, byte in 0u8..128) {
            let mut doc = LIST_1_XML.as_bytes().to_vec();
            let at = at % doc.len();
            doc[at] = byte;
            if let Ok(root) = parse_document(&doc) {
                let _ = parse_elm(&root);
            }
        }
    }

    #[test]
    fn difference_between_requires_known_precision() {
        let xml = r#"<DifferenceBetween precision="months">
            <ExpressionRef name="a"/><ExpressionRef name="b"/>
          </DifferenceBetween>"#;
        let root = parse_document(xml.as_bytes()).unwrap();
        assert!(matches!(
            parse_elm(&root),
            Err(ElmParseError::BadNode { .. })
        ));
        let xml = xml.replace("months", "years");
        let root = parse_document(xml.as_bytes()).unwrap();
        assert!(matches!(
            parse_elm(&root).unwrap(),
            ElmExpression::Binary {
                op: BinaryOp::DifferenceBetween(TimePrecision::Years),
                ..
            }
        ));
    }
}
