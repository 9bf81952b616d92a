//! Debug prefix-text format for ASTs.
//!
//! Fully parenthesized, operators lower-cased:
//! `(and (>= PatientAgeInYears 18) (not (exists AdverseReactionToACEInhibitors)))`.
//!
//! [`parse_prefix`] reads the same format back, assigning positional
//! source paths (`$`, `$/0`, `$/0/1`, …), so printing an AST produced by
//! this parser and re-parsing it round-trips exactly.

use super::{BinaryOp, ElmExpression, NaryOp, TimePrecision, UnaryOp, Value};

pub fn prefix_text(expr: &ElmExpression) -> String {
    let mut out = String::new();
    write_expr(expr, &mut out);
    out
}

fn write_expr(expr: &ElmExpression, out: &mut String) {
    match expr {
        ElmExpression::Literal { value, .. } => write_value(value, out),
        ElmExpression::SymbolRef { name, .. } => out.push_str(name),
        ElmExpression::Unary { op, arg, .. } => {
            out.push('(');
            out.push_str(unary_token(*op));
            out.push(' ');
            write_expr(arg, out);
            out.push(')');
        }
        ElmExpression::Binary { op, lhs, rhs, .. } => {
            out.push('(');
            out.push_str(binary_token(*op));
            out.push(' ');
            write_expr(lhs, out);
            out.push(' ');
            write_expr(rhs, out);
            out.push(')');
        }
        ElmExpression::Nary { op, args, .. } => {
            out.push('(');
            out.push_str(nary_token(*op));
            for a in args {
                out.push(' ');
                write_expr(a, out);
            }
            out.push(')');
        }
        ElmExpression::IntervalTest {
            value,
            low,
            high,
            low_closed,
            high_closed,
            ..
        } => {
            out.push('(');
            out.push_str(interval_token(*low_closed, *high_closed));
            out.push(' ');
            write_expr(value, out);
            out.push(' ');
            write_expr(low, out);
            out.push(' ');
            write_expr(high, out);
            out.push(')');
        }
    }
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => out.push_str(&i.to_string()),
        Value::Real(r) => {
            // `num`/`den` form keeps the representation exact.
            out.push_str(&format!("{}/{}", r.numer(), r.denom()));
        }
        Value::Str(s) => {
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        Value::Timestamp(t) => out.push_str(&format!("@{t}")),
        Value::List(items) => {
            out.push_str("(list");
            for v in items {
                out.push(' ');
                write_value(v, out);
            }
            out.push(')');
        }
        Value::Opaque { sort_name, tag } => {
            out.push_str(&format!("(opaque {sort_name} {tag})"));
        }
    }
}

fn unary_token(op: UnaryOp) -> &'static str {
    match op {
        UnaryOp::Not => "not",
        UnaryOp::Negate => "neg",
        UnaryOp::Exists => "exists",
        UnaryOp::IsTrue => "is-true",
        UnaryOp::IsFalse => "is-false",
        UnaryOp::IsNull => "is-null",
        UnaryOp::Count => "count",
    }
}

fn binary_token(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Xor => "xor",
        BinaryOp::Implies => "implies",
        BinaryOp::Add => "+",
        BinaryOp::Subtract => "-",
        BinaryOp::Multiply => "*",
        BinaryOp::Divide => "/",
        BinaryOp::Modulo => "mod",
        BinaryOp::Equal => "=",
        BinaryOp::NotEqual => "!=",
        BinaryOp::Greater => ">",
        BinaryOp::GreaterOrEqual => ">=",
        BinaryOp::Less => "<",
        BinaryOp::LessOrEqual => "<=",
        BinaryOp::StartsWith => "starts-with",
        BinaryOp::EndsWith => "ends-with",
        BinaryOp::DifferenceBetween(TimePrecision::Years) => "diff-years",
        BinaryOp::DifferenceBetween(TimePrecision::Days) => "diff-days",
        BinaryOp::DifferenceBetween(TimePrecision::Milliseconds) => "diff-ms",
    }
}

fn nary_token(op: NaryOp) -> &'static str {
    match op {
        NaryOp::And => "and",
        NaryOp::Or => "or",
        NaryOp::Concatenate => "concat",
    }
}

fn interval_token(low_closed: bool, high_closed: bool) -> &'static str {
    match (low_closed, high_closed) {
        (true, true) => "in-cc",
        (true, false) => "in-co",
        (false, true) => "in-oc",
        (false, false) => "in-oo",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixParseError {
    pub message: String,
    pub offset: usize,
}

impl std::fmt::Display for PrefixParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at offset {}", self.message, self.offset)
    }
}

impl std::error::Error for PrefixParseError {}

/// Parses the debug prefix format back into an AST.
pub fn parse_prefix(text: &str) -> Result<ElmExpression, PrefixParseError> {
    let tokens = tokenize(text)?;
    let mut pos = 0usize;
    let expr = parse_tokens(&tokens, &mut pos, "$".to_string())?;
    if pos != tokens.len() {
        return Err(PrefixParseError {
            message: "trailing input after expression".into(),
            offset: tokens[pos].1,
        });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Str(String),
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, PrefixParseError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((Tok::Open, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::Close, i));
                i += 1;
            }
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(PrefixParseError {
                            message: "unterminated string".into(),
                            offset: start,
                        });
                    }
                    match bytes[i] {
                        b'\\' if i + 1 < bytes.len() => {
                            s.push(bytes[i + 1] as char);
                            i += 2;
                        }
                        b'"' => {
                            i += 1;
                            break;
                        }
                        _ => {
                            let c = text[i..].chars().next().unwrap();
                            s.push(c);
                            i += c.len_utf8();
                        }
                    }
                }
                out.push((Tok::Str(s), start));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !b" \t\n\r()\"".contains(&bytes[i]) {
                    i += 1;
                }
                out.push((Tok::Atom(text[start..i].to_string()), start));
            }
        }
    }
    Ok(out)
}

fn parse_tokens(
    tokens: &[(Tok, usize)],
    pos: &mut usize,
    path: String,
) -> Result<ElmExpression, PrefixParseError> {
    let (tok, offset) = tokens.get(*pos).ok_or(PrefixParseError {
        message: "unexpected end of input".into(),
        offset: usize::MAX,
    })?;
    match tok {
        Tok::Str(s) => {
            *pos += 1;
            Ok(ElmExpression::Literal {
                value: Value::Str(s.clone()),
                source_path: path,
            })
        }
        Tok::Atom(a) => {
            *pos += 1;
            Ok(parse_atom(a, path, *offset)?)
        }
        Tok::Close => Err(PrefixParseError {
            message: "unexpected `)`".into(),
            offset: *offset,
        }),
        Tok::Open => {
            *pos += 1;
            let (head, head_off) = match tokens.get(*pos) {
                Some((Tok::Atom(a), off)) => (a.clone(), *off),
                Some((_, off)) => {
                    return Err(PrefixParseError {
                        message: "expected operator after `(`".into(),
                        offset: *off,
                    })
                }
                None => {
                    return Err(PrefixParseError {
                        message: "unexpected end of input".into(),
                        offset: usize::MAX,
                    })
                }
            };
            *pos += 1;
            let mut args = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some((Tok::Close, _)) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => {
                        let child_path = format!("{path}/{}", args.len());
                        args.push(parse_tokens(tokens, pos, child_path)?);
                    }
                    None => {
                        return Err(PrefixParseError {
                            message: "missing `)`".into(),
                            offset: usize::MAX,
                        })
                    }
                }
            }
            build_node(&head, args, path, head_off)
        }
    }
}

fn parse_atom(atom: &str, path: String, offset: usize) -> Result<ElmExpression, PrefixParseError> {
    if atom == "true" || atom == "false" {
        return Ok(ElmExpression::Literal {
            value: Value::Bool(atom == "true"),
            source_path: path,
        });
    }
    if let Some(ts) = atom.strip_prefix('@') {
        let t = ts.parse::<i64>().map_err(|_| PrefixParseError {
            message: format!("bad timestamp `{atom}`"),
            offset,
        })?;
        return Ok(ElmExpression::Literal {
            value: Value::Timestamp(t),
            source_path: path,
        });
    }
    let first = atom.chars().next().unwrap_or(' ');
    if first.is_ascii_digit() || (first == '-' && atom.len() > 1) {
        if let Some((n, d)) = atom.split_once('/') {
            let numer = n.parse().map_err(|_| bad_number(atom, offset))?;
            let denom = d.parse().map_err(|_| bad_number(atom, offset))?;
            let r = num_rational::BigRational::new(numer, denom);
            return Ok(ElmExpression::Literal {
                value: Value::Real(r),
                source_path: path,
            });
        }
        let i = atom.parse().map_err(|_| bad_number(atom, offset))?;
        return Ok(ElmExpression::Literal {
            value: Value::Int(i),
            source_path: path,
        });
    }
    Ok(ElmExpression::SymbolRef {
        name: atom.to_string(),
        source_path: path,
    })
}

fn bad_number(atom: &str, offset: usize) -> PrefixParseError {
    PrefixParseError {
        message: format!("bad numeric literal `{atom}`"),
        offset,
    }
}

fn build_node(
    head: &str,
    mut args: Vec<ElmExpression>,
    path: String,
    offset: usize,
) -> Result<ElmExpression, PrefixParseError> {
    let arity_err = |want: &str, got: usize| PrefixParseError {
        message: format!("`{head}` expects {want} argument(s), found {got}"),
        offset,
    };
    let unary = {
        let path = path.clone();
        move |op: UnaryOp, mut args: Vec<ElmExpression>| {
            if args.len() != 1 {
                return Err(arity_err("1", args.len()));
            }
            Ok(ElmExpression::Unary {
                op,
                arg: Box::new(args.remove(0)),
                source_path: path.clone(),
            })
        }
    };
    let binary = {
        let path = path.clone();
        move |op: BinaryOp, mut args: Vec<ElmExpression>| {
            if args.len() != 2 {
                return Err(arity_err("2", args.len()));
            }
            let rhs = args.remove(1);
            let lhs = args.remove(0);
            Ok(ElmExpression::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                source_path: path.clone(),
            })
        }
    };
    match head {
        "and" | "or" | "concat" => {
            if args.len() < 2 {
                return Err(arity_err("at least 2", args.len()));
            }
            let op = match head {
                "and" => NaryOp::And,
                "or" => NaryOp::Or,
                _ => NaryOp::Concatenate,
            };
            Ok(ElmExpression::Nary {
                op,
                args,
                source_path: path,
            })
        }
        "not" => unary(UnaryOp::Not, args),
        "neg" => unary(UnaryOp::Negate, args),
        "exists" => unary(UnaryOp::Exists, args),
        "is-true" => unary(UnaryOp::IsTrue, args),
        "is-false" => unary(UnaryOp::IsFalse, args),
        "is-null" => unary(UnaryOp::IsNull, args),
        "count" => unary(UnaryOp::Count, args),
        "xor" => binary(BinaryOp::Xor, args),
        "implies" => binary(BinaryOp::Implies, args),
        "+" => binary(BinaryOp::Add, args),
        "-" => binary(BinaryOp::Subtract, args),
        "*" => binary(BinaryOp::Multiply, args),
        "/" => binary(BinaryOp::Divide, args),
        "mod" => binary(BinaryOp::Modulo, args),
        "=" => binary(BinaryOp::Equal, args),
        "!=" => binary(BinaryOp::NotEqual, args),
        ">" => binary(BinaryOp::Greater, args),
        ">=" => binary(BinaryOp::GreaterOrEqual, args),
        "<" => binary(BinaryOp::Less, args),
        "<=" => binary(BinaryOp::LessOrEqual, args),
        "starts-with" => binary(BinaryOp::StartsWith, args),
        "ends-with" => binary(BinaryOp::EndsWith, args),
        "diff-years" => binary(BinaryOp::DifferenceBetween(TimePrecision::Years), args),
        "diff-days" => binary(BinaryOp::DifferenceBetween(TimePrecision::Days), args),
        "diff-ms" => binary(
            BinaryOp::DifferenceBetween(TimePrecision::Milliseconds),
            args,
        ),
        "in-cc" | "in-co" | "in-oc" | "in-oo" => {
            if args.len() != 3 {
                return Err(arity_err("3", args.len()));
            }
            let high = Box::new(args.remove(2));
            let low = Box::new(args.remove(1));
            let value = Box::new(args.remove(0));
            Ok(ElmExpression::IntervalTest {
                value,
                low,
                high,
                low_closed: head.as_bytes()[3] == b'c',
                high_closed: head.as_bytes()[4] == b'c',
                source_path: path,
            })
        }
        "list" => {
            let mut items = Vec::with_capacity(args.len());
            for a in args.drain(..) {
                match a {
                    ElmExpression::Literal { value, .. } => items.push(value),
                    _ => {
                        return Err(PrefixParseError {
                            message: "list literals may only contain literals".into(),
                            offset,
                        })
                    }
                }
            }
            Ok(ElmExpression::Literal {
                value: Value::List(items),
                source_path: path,
            })
        }
        other => Err(PrefixParseError {
            message: format!("unknown operator `{other}`"),
            offset,
        }),
    }
}
