//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use knart_verify::codegen::{SortedCondition, SpecConstraint};
use knart_verify::elm::{evaluate, BinaryOp, ElmExpression, NaryOp, UnaryOp, Value};
use knart_verify::ingest::{Cardinality, SymbolDecl, SymbolEnv};
use knart_verify::sorts::infer_sorts;

pub fn testdata(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("testdata")
        .join(rel)
}

pub fn read_testdata(rel: &str) -> Vec<u8> {
    std::fs::read(testdata(rel)).unwrap_or_else(|e| panic!("cannot read {rel}: {e}"))
}

pub fn solver_available() -> bool {
    let cmd = knart_verify::solver::default_command();
    std::process::Command::new(&cmd[0])
        .arg("--version")
        .output()
        .is_ok()
}

/// Token-level script comparison that ignores whitespace and unwraps
/// `(! term :named name)` annotations.
pub fn scripts_equal_modulo_named(a: &str, b: &str) -> bool {
    normalize_script(a) == normalize_script(b)
}

pub fn normalize_script(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    // Drop `( ! … :named name )` wrappers: remove the `( !` pair, the
    // `:named name`, and the matching `)`.
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut depth_stack: Vec<usize> = Vec::new();
    let mut depth = 0usize;
    let mut i = 0usize;
    while i < tokens.len() {
        match tokens[i].as_str() {
            "(" if tokens.get(i + 1).map(String::as_str) == Some("!") => {
                depth += 1;
                depth_stack.push(depth);
                i += 2;
            }
            "(" => {
                depth += 1;
                out.push("(".into());
                i += 1;
            }
            ")" => {
                if depth_stack.last() == Some(&depth) {
                    depth_stack.pop();
                } else {
                    out.push(")".into());
                }
                depth -= 1;
                i += 1;
            }
            ":named" => {
                i += 2;
            }
            tok => {
                out.push(tok.to_string());
                i += 1;
            }
        }
    }
    out
}

/// A randomly generated, well-typed boolean condition over a small
/// integer/boolean symbol pool, plus everything needed to check it both
/// ways.
pub struct GeneratedCondition {
    pub expr: ElmExpression,
    pub int_symbols: Vec<String>,
    pub bool_symbols: Vec<String>,
}

pub const DOMAIN_MIN: i64 = -8;
pub const DOMAIN_MAX: i64 = 8;

/// Generates one condition: depth <= 5, operators drawn from the
/// logical, mathematical, equality, and interval categories, at most 3
/// integer symbols over [-8, 8] and 2 boolean symbols.
pub fn generate_condition(rng: &mut ChaCha8Rng, tag: usize) -> GeneratedCondition {
    let n_int = *pick(
        rng,
        &[0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3],
    );
    let n_bool = *pick(rng, &[0, 0, 1, 1, 1, 2, 2]);
    let (n_int, n_bool) = if n_int == 0 && n_bool == 0 {
        (1, 0)
    } else {
        (n_int, n_bool)
    };
    let int_symbols: Vec<String> = (0..n_int).map(|i| format!("x{i}")).collect();
    let bool_symbols: Vec<String> = (0..n_bool).map(|i| format!("p{i}")).collect();
    let mut paths = 0usize;
    let expr = gen_bool(
        rng,
        5,
        &int_symbols,
        &bool_symbols,
        &mut paths,
        &format!("g{tag}"),
    );
    GeneratedCondition {
        expr,
        int_symbols,
        bool_symbols,
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

fn next_path(prefix: &str, paths: &mut usize) -> String {
    *paths += 1;
    format!("{prefix}/{paths}")
}

fn gen_bool(
    rng: &mut ChaCha8Rng,
    depth: usize,
    ints: &[String],
    bools: &[String],
    paths: &mut usize,
    prefix: &str,
) -> ElmExpression {
    let path = next_path(prefix, paths);
    if depth == 0 || rng.gen_ratio(1, 6) {
        if !bools.is_empty() && rng.gen_bool(0.6) {
            return ElmExpression::SymbolRef {
                name: pick(rng, bools).clone(),
                source_path: path,
            };
        }
        if depth == 0 || ints.is_empty() {
            return ElmExpression::Literal {
                value: Value::Bool(rng.gen_bool(0.5)),
                source_path: path,
            };
        }
    }
    match rng.gen_range(0..9) {
        0 | 1 => {
            let op = *pick(
                rng,
                &[
                    BinaryOp::Equal,
                    BinaryOp::NotEqual,
                    BinaryOp::Greater,
                    BinaryOp::GreaterOrEqual,
                    BinaryOp::Less,
                    BinaryOp::LessOrEqual,
                ],
            );
            ElmExpression::Binary {
                op,
                lhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
                rhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
                source_path: path,
            }
        }
        2 => ElmExpression::IntervalTest {
            value: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            low: Box::new(int_literal(rng, paths, prefix)),
            high: Box::new(int_literal(rng, paths, prefix)),
            low_closed: rng.gen_bool(0.5),
            high_closed: rng.gen_bool(0.5),
            source_path: path,
        },
        3 | 4 => {
            let n = rng.gen_range(2..=3);
            let args = (0..n)
                .map(|_| gen_bool(rng, depth - 1, ints, bools, paths, prefix))
                .collect();
            ElmExpression::Nary {
                op: if rng.gen_bool(0.5) {
                    NaryOp::And
                } else {
                    NaryOp::Or
                },
                args,
                source_path: path,
            }
        }
        5 => ElmExpression::Unary {
            op: UnaryOp::Not,
            arg: Box::new(gen_bool(rng, depth - 1, ints, bools, paths, prefix)),
            source_path: path,
        },
        6 => ElmExpression::Binary {
            op: BinaryOp::Xor,
            lhs: Box::new(gen_bool(rng, depth - 1, ints, bools, paths, prefix)),
            rhs: Box::new(gen_bool(rng, depth - 1, ints, bools, paths, prefix)),
            source_path: path,
        },
        7 => ElmExpression::Binary {
            op: BinaryOp::Implies,
            lhs: Box::new(gen_bool(rng, depth - 1, ints, bools, paths, prefix)),
            rhs: Box::new(gen_bool(rng, depth - 1, ints, bools, paths, prefix)),
            source_path: path,
        },
        _ => {
            if bools.is_empty() {
                ElmExpression::Binary {
                    op: BinaryOp::Equal,
                    lhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
                    rhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
                    source_path: path,
                }
            } else {
                ElmExpression::SymbolRef {
                    name: pick(rng, bools).clone(),
                    source_path: path,
                }
            }
        }
    }
}

fn int_literal(rng: &mut ChaCha8Rng, paths: &mut usize, prefix: &str) -> ElmExpression {
    ElmExpression::Literal {
        value: Value::int(rng.gen_range(DOMAIN_MIN..=DOMAIN_MAX)),
        source_path: next_path(prefix, paths),
    }
}

fn gen_int(
    rng: &mut ChaCha8Rng,
    depth: usize,
    ints: &[String],
    paths: &mut usize,
    prefix: &str,
) -> ElmExpression {
    let path = next_path(prefix, paths);
    if depth == 0 || rng.gen_ratio(1, 2) {
        if !ints.is_empty() && rng.gen_bool(0.7) {
            return ElmExpression::SymbolRef {
                name: pick(rng, ints).clone(),
                source_path: path,
            };
        }
        return ElmExpression::Literal {
            value: Value::int(rng.gen_range(DOMAIN_MIN..=DOMAIN_MAX)),
            source_path: path,
        };
    }
    match rng.gen_range(0..4) {
        0 => ElmExpression::Binary {
            op: BinaryOp::Add,
            lhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            rhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            source_path: path,
        },
        1 => ElmExpression::Binary {
            op: BinaryOp::Subtract,
            lhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            rhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            source_path: path,
        },
        2 => ElmExpression::Binary {
            op: BinaryOp::Multiply,
            lhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            rhs: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            source_path: path,
        },
        _ => ElmExpression::Unary {
            op: UnaryOp::Negate,
            arg: Box::new(gen_int(rng, depth - 1, ints, paths, prefix)),
            source_path: path,
        },
    }
}

/// Brute-force satisfiability over the finite domain: every integer
/// symbol ranges over [-8, 8], every boolean over {false, true}. Returns
/// the first satisfying assignment if any.
pub fn brute_force_sat(cond: &GeneratedCondition) -> Option<BTreeMap<String, Value>> {
    let ints = &cond.int_symbols;
    let bools = &cond.bool_symbols;
    let width = (DOMAIN_MAX - DOMAIN_MIN + 1) as usize;
    let int_count = ints.len() as u32;
    let total_int = width.pow(int_count);
    let total_bool = 1usize << bools.len();
    let mut assignment: BTreeMap<String, Value> = BTreeMap::new();
    for iv in 0..total_int {
        let mut rest = iv;
        for name in ints {
            let v = DOMAIN_MIN + (rest % width) as i64;
            rest /= width;
            assignment.insert(name.clone(), Value::int(v));
        }
        for bv in 0..total_bool {
            for (i, name) in bools.iter().enumerate() {
                assignment.insert(name.clone(), Value::Bool((bv >> i) & 1 == 1));
            }
            match evaluate(&cond.expr, &assignment) {
                Ok(Value::Bool(true)) => return Some(assignment),
                Ok(Value::Bool(false)) => {}
                other => panic!("oracle evaluation failed: {other:?}"),
            }
        }
    }
    None
}

/// Declares the generated symbols so inference has ground truth, then
/// sorts the condition.
pub fn sorted_condition(cond: &GeneratedCondition, id: &str) -> SortedCondition {
    let mut env = SymbolEnv::default();
    for s in &cond.int_symbols {
        env.insert(
            s,
            SymbolDecl {
                value_type_name: "Integer".into(),
                cardinality: Cardinality::Single,
            },
        )
        .unwrap();
    }
    for s in &cond.bool_symbols {
        env.insert(
            s,
            SymbolDecl {
                value_type_name: "Boolean".into(),
                cardinality: Cardinality::Single,
            },
        )
        .unwrap();
    }
    let sorts = infer_sorts(&cond.expr, &env).expect("generated conditions are well-sorted");
    SortedCondition {
        id: id.to_string(),
        source_path: cond.expr.source_path().to_string(),
        expr: cond.expr.clone(),
        sorts,
    }
}

/// Domain-bounding φ constraints for the integer symbols the condition
/// references (the finite brute-force domain, stated to the solver).
pub fn domain_constraints(cond: &GeneratedCondition) -> Vec<SpecConstraint> {
    let referenced = cond.expr.referenced_symbols();
    cond.int_symbols
        .iter()
        .filter(|s| referenced.contains(&s.as_str()))
        .map(|s| SpecConstraint {
            name: format!("range-{s}"),
            term_text: format!("(and (>= {s} (- 8)) (<= {s} 8))"),
        })
        .collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reconstructs a Value assignment from solver model bindings for the
/// generated symbols; unbound symbols default to 0/false.
pub fn model_to_assignment(
    cond: &GeneratedCondition,
    bindings: &BTreeMap<String, String>,
) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for s in &cond.int_symbols {
        let value = bindings
            .get(s)
            .and_then(|t| knart_verify::solver::parse_model_value(t))
            .unwrap_or(Value::Int(BigInt::from(0)));
        out.insert(s.clone(), value);
    }
    for s in &cond.bool_symbols {
        let value = bindings
            .get(s)
            .and_then(|t| knart_verify::solver::parse_model_value(t))
            .unwrap_or(Value::Bool(false));
        out.insert(s.clone(), value);
    }
    out
}
