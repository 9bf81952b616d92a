//! SMT-LIB v2 script generation.
//!
//! A script contains, in order: options, sort declarations
//! (first-occurrence order), constant declarations (document order),
//! helper definitions, one named assertion per condition, user
//! specification constraints, and `(check-sat)`. Model and core
//! retrieval are issued interactively by the solver driver and never
//! serialized into the script.
//!
//! Two list encodings exist. `PaperCompat` uses the legacy built-in
//! `(List T)` sort and an `elm_exists` helper defined through a
//! quantifier over `head`; it reproduces the classic encoding
//! byte-for-byte and is kept for golden-file fidelity. `Portable` (the
//! default) declares a parametric cons/nil datatype and translates
//! `Exists` as nonemptiness, which is solver-neutral and gives `Exists`
//! its intended "list has an element" meaning.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Signed;
use thiserror::Error;

use crate::elm::{BinaryOp, ElmExpression, NaryOp, TimePrecision, UnaryOp, Value};
use crate::sorts::{Sort, SortEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmissionMode {
    PaperCompat,
    #[default]
    Portable,
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error(
        "unsupported operator `{name}` at {source_path}: category {category}, support {support}"
    )]
    UnsupportedOperator {
        name: String,
        category: String,
        support: String,
        source_path: String,
    },
    #[error("symbol `{name}` at {source_path} is not declared")]
    UndeclaredSymbol { name: String, source_path: String },
    #[error("cannot translate node at {source_path}: {detail}")]
    TypeMismatch { detail: String, source_path: String },
    #[error("symbol `{name}` has conflicting sorts across conditions: {first} vs {second}")]
    ConflictingSymbolSorts {
        name: String,
        first: Sort,
        second: Sort,
    },
    #[error("bad specification constraint: {detail}")]
    BadSpecConstraint { detail: String },
}

/// A user-supplied constraint: a named raw SMT-LIB boolean term,
/// conjoined with the artifact's conditions before checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecConstraint {
    pub name: String,
    pub term_text: String,
}

/// A condition ready for translation.
#[derive(Debug, Clone)]
pub struct SortedCondition {
    pub id: String,
    pub source_path: String,
    pub expr: ElmExpression,
    pub sorts: SortEnv,
}

/// What a named assertion points back at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssertionTarget {
    Condition {
        condition_id: String,
        source_path: String,
    },
    Constraint {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmtCommand {
    SetOption {
        key: String,
        value: String,
    },
    SetLogic {
        name: String,
    },
    DeclareSort {
        name: String,
    },
    DeclareListDatatype,
    DeclareOptionDatatype,
    DeclareConst {
        name: String,
        sort: Sort,
    },
    DefineFun {
        name: String,
        params: Vec<(String, Sort)>,
        ret: Sort,
        body: String,
    },
    Assert {
        term: String,
        name: Option<String>,
    },
    CheckSat,
}

/// An ordered SMT-LIB script plus the index mapping assertion names back
/// to conditions and spec constraints.
#[derive(Debug, Clone)]
pub struct SmtScript {
    pub commands: Vec<SmtCommand>,
    pub mode: EmissionMode,
    pub assertion_index: BTreeMap<String, AssertionTarget>,
    /// Rendered constant name → source symbol name, for mapping model
    /// bindings back to the document's vocabulary. Identity unless
    /// sanitization had to rewrite a name.
    pub symbol_names: BTreeMap<String, String>,
}

impl SmtScript {
    /// Inserts a `(set-logic …)` directly after any options.
    pub fn with_logic(mut self, name: &str) -> SmtScript {
        let at = self
            .commands
            .iter()
            .position(|c| !matches!(c, SmtCommand::SetOption { .. }))
            .unwrap_or(0);
        self.commands.insert(
            at,
            SmtCommand::SetLogic {
                name: name.to_string(),
            },
        );
        self
    }

    /// A copy containing only the assertions with the given names (all
    /// declarations and definitions are kept). Used to re-check that an
    /// unsat core is itself unsatisfiable.
    pub fn restrict_to_assertions(&self, names: &[String]) -> SmtScript {
        let commands = self
            .commands
            .iter()
            .filter(|c| match c {
                SmtCommand::Assert { name, .. } => match name {
                    Some(n) => names.iter().any(|k| k == n),
                    None => false,
                },
                _ => true,
            })
            .cloned()
            .collect();
        let assertion_index = self
            .assertion_index
            .iter()
            .filter(|(k, _)| names.iter().any(|n| n == *k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        SmtScript {
            commands,
            mode: self.mode,
            assertion_index,
            symbol_names: self.symbol_names.clone(),
        }
    }

    /// Single-pass declaration-before-use check over the rendered
    /// assertions: every identifier must be introduced by an earlier
    /// command or be part of the background signature.
    pub fn check_declaration_order(&self) -> Result<(), String> {
        let mut known: Vec<String> = BUILTINS.iter().map(|s| s.to_string()).collect();
        for cmd in &self.commands {
            match cmd {
                SmtCommand::DeclareSort { name } => known.push(name.clone()),
                SmtCommand::DeclareListDatatype => {
                    known.extend(["Lst", "cons", "nil", "head", "tail"].map(String::from));
                }
                SmtCommand::DeclareOptionDatatype => {
                    known.extend(["Opt", "some", "none", "val"].map(String::from));
                }
                SmtCommand::DeclareConst { name, .. } => known.push(name.clone()),
                SmtCommand::DefineFun {
                    name, params, body, ..
                } => {
                    for tok in identifier_tokens(body) {
                        if !known.contains(&tok)
                            && !params.iter().any(|(p, _)| *p == tok)
                            && tok != "x"
                        {
                            return Err(format!("`{tok}` used before declaration in {name}"));
                        }
                    }
                    known.push(name.clone());
                }
                SmtCommand::Assert { term, .. } => {
                    for tok in identifier_tokens(term) {
                        if !known.contains(&tok) {
                            return Err(format!("`{tok}` used before declaration"));
                        }
                    }
                }
                SmtCommand::SetOption { .. }
                | SmtCommand::SetLogic { .. }
                | SmtCommand::CheckSat => {}
            }
        }
        Ok(())
    }
}

const BUILTINS: &[&str] = &[
    "true",
    "false",
    "and",
    "or",
    "not",
    "xor",
    "=>",
    "=",
    "distinct",
    "ite",
    "exists",
    "forall",
    "+",
    "-",
    "*",
    "/",
    "div",
    "mod",
    "abs",
    ">",
    ">=",
    "<",
    "<=",
    "to_real",
    "to_int",
    "List",
    "insert",
    "head",
    "tail",
    "nil",
    "is",
    "_",
    "str.prefixof",
    "str.suffixof",
    "str.++",
    "str.len",
    "Bool",
    "Int",
    "Real",
    "String",
];

/// Bare identifier atoms of a rendered term (skips numerals, decimals,
/// string literals, and keywords).
fn identifier_tokens(term: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = term.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' | ')' | ' ' => {}
            '"' => {
                // Skip the string literal; doubled quotes are escapes.
                while let Some(c) = chars.next() {
                    if c == '"' {
                        if chars.peek() == Some(&'"') {
                            chars.next();
                        } else {
                            break;
                        }
                    }
                }
            }
            ':' => {
                // Keyword such as :named; skip with its value.
                for c in chars.by_ref() {
                    if c == ' ' || c == ')' {
                        break;
                    }
                }
            }
            _ => {
                let mut tok = String::new();
                tok.push(c);
                while let Some(&c) = chars.peek() {
                    if c == '(' || c == ')' || c == ' ' {
                        break;
                    }
                    tok.push(c);
                    chars.next();
                }
                let numeric = tok
                    .chars()
                    .all(|c| c.is_ascii_digit() || c == '.' || c == '-');
                if !numeric {
                    out.push(tok);
                }
            }
        }
    }
    out
}

/// Builds a complete script for the given sorted conditions and spec
/// constraints.
pub fn build_script(
    conditions: &[SortedCondition],
    spec: &[SpecConstraint],
    mode: EmissionMode,
    want_cores: bool,
) -> Result<SmtScript, CodegenError> {
    let merged = merge_sort_envs(conditions)?;
    let translator = Translator::new(&merged, mode);

    let mut commands = Vec::new();
    if want_cores {
        commands.push(SmtCommand::SetOption {
            key: ":produce-unsat-cores".into(),
            value: "true".into(),
        });
    }
    for sort_name in &merged.uninterpreted_sorts {
        commands.push(SmtCommand::DeclareSort {
            name: sort_name.clone(),
        });
    }
    let list_elems = translator.list_element_sorts();
    let has_option = merged
        .symbols
        .values()
        .chain(merged.node_sorts.values())
        .any(contains_option);
    if mode == EmissionMode::Portable && !list_elems.is_empty() {
        commands.push(SmtCommand::DeclareListDatatype);
    }
    if has_option {
        commands.push(SmtCommand::DeclareOptionDatatype);
    }
    for name in &merged.symbol_order {
        commands.push(SmtCommand::DeclareConst {
            name: translator.symbol_name(name).expect("ordered symbol"),
            sort: merged.symbols[name].clone(),
        });
    }
    if mode == EmissionMode::PaperCompat {
        for (i, elem) in list_elems.iter().enumerate() {
            let elem_text = render_sort(elem, mode);
            commands.push(SmtCommand::DefineFun {
                name: exists_helper_name(i, elem),
                params: vec![("lst".into(), Sort::List(Box::new(elem.clone())))],
                ret: Sort::Bool,
                body: format!("(ite (exists ((x {elem_text})) (= x (head lst))) true false)"),
            });
        }
    }

    let mut assertion_index = BTreeMap::new();
    for (i, cond) in conditions.iter().enumerate() {
        let term = translator.translate(&cond.expr)?;
        let body = match mode {
            EmissionMode::PaperCompat => format!("(= true {term})"),
            EmissionMode::Portable => term,
        };
        let name = format!("assertion-{}", i + 1);
        assertion_index.insert(
            name.clone(),
            AssertionTarget::Condition {
                condition_id: cond.id.clone(),
                source_path: cond.source_path.clone(),
            },
        );
        commands.push(SmtCommand::Assert {
            term: body,
            name: want_cores.then_some(name),
        });
    }

    for constraint in spec {
        if assertion_index.contains_key(&constraint.name) {
            return Err(CodegenError::BadSpecConstraint {
                detail: format!(
                    "constraint name `{}` collides with a generated assertion name",
                    constraint.name
                ),
            });
        }
        assertion_index.insert(
            constraint.name.clone(),
            AssertionTarget::Constraint {
                name: constraint.name.clone(),
            },
        );
        commands.push(SmtCommand::Assert {
            term: constraint.term_text.clone(),
            name: want_cores.then(|| constraint.name.clone()),
        });
    }

    commands.push(SmtCommand::CheckSat);
    let symbol_names = merged
        .symbol_order
        .iter()
        .map(|raw| (translator.symbol_name(raw).expect("ordered symbol"), raw.clone()))
        .collect();
    Ok(SmtScript {
        commands,
        mode,
        assertion_index,
        symbol_names,
    })
}

fn contains_option(sort: &Sort) -> bool {
    match sort {
        Sort::Option(_) => true,
        Sort::List(e) => contains_option(e),
        _ => false,
    }
}

fn merge_sort_envs(conditions: &[SortedCondition]) -> Result<SortEnv, CodegenError> {
    let mut merged = SortEnv::default();
    for cond in conditions {
        for name in &cond.sorts.symbol_order {
            let sort = &cond.sorts.symbols[name];
            match merged.symbols.get(name) {
                None => {
                    merged.symbol_order.push(name.clone());
                    merged.symbols.insert(name.clone(), sort.clone());
                }
                Some(existing) if existing == sort => {}
                Some(existing) => {
                    return Err(CodegenError::ConflictingSymbolSorts {
                        name: name.clone(),
                        first: existing.clone(),
                        second: sort.clone(),
                    })
                }
            }
        }
        for (path, sort) in &cond.sorts.node_sorts {
            merged.node_sorts.insert(path.clone(), sort.clone());
        }
        for s in &cond.sorts.uninterpreted_sorts {
            if !merged.uninterpreted_sorts.contains(s) {
                merged.uninterpreted_sorts.push(s.clone());
            }
        }
    }
    Ok(merged)
}

fn exists_helper_name(index: usize, elem: &Sort) -> String {
    if index == 0 {
        "elm_exists".to_string()
    } else {
        format!("elm_exists_{}", sort_suffix(elem))
    }
}

fn sort_suffix(sort: &Sort) -> String {
    render_sort(sort, EmissionMode::Portable)
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Renders a sort in SMT-LIB concrete syntax. Timestamps share the Int
/// carrier.
pub fn render_sort(sort: &Sort, mode: EmissionMode) -> String {
    match sort {
        Sort::Bool => "Bool".into(),
        Sort::Int | Sort::Timestamp => "Int".into(),
        Sort::Real => "Real".into(),
        Sort::Str => "String".into(),
        Sort::Uninterpreted(n) => n.clone(),
        Sort::List(e) => match mode {
            EmissionMode::PaperCompat => format!("(List {})", render_sort(e, mode)),
            EmissionMode::Portable => format!("(Lst {})", render_sort(e, mode)),
        },
        Sort::Option(e) => format!("(Opt {})", render_sort(e, mode)),
    }
}

/// Translates one sorted expression to an SMT-LIB term.
pub fn translate_term(
    expr: &ElmExpression,
    env: &SortEnv,
    mode: EmissionMode,
) -> Result<String, CodegenError> {
    Translator::new(env, mode).translate(expr)
}

struct Translator<'a> {
    env: &'a SortEnv,
    mode: EmissionMode,
    symbol_names: BTreeMap<String, String>,
}

impl<'a> Translator<'a> {
    fn new(env: &'a SortEnv, mode: EmissionMode) -> Self {
        let mut used = Vec::new();
        let mut symbol_names = BTreeMap::new();
        for raw in &env.symbol_order {
            symbol_names.insert(raw.clone(), sanitize_ident(raw, &mut used));
        }
        Translator {
            env,
            mode,
            symbol_names,
        }
    }

    fn symbol_name(&self, raw: &str) -> Option<String> {
        self.symbol_names.get(raw).cloned()
    }

    /// List element sorts in first-occurrence order (symbols first).
    fn list_element_sorts(&self) -> Vec<Sort> {
        let mut out: Vec<Sort> = Vec::new();
        let symbol_sorts = self.env.symbol_order.iter().map(|n| &self.env.symbols[n]);
        for sort in symbol_sorts.chain(self.env.node_sorts.values()) {
            collect_list_elems(sort, &mut out);
        }
        out
    }

    fn node_sort(&self, expr: &ElmExpression) -> Result<Sort, CodegenError> {
        self.env
            .node_sort(expr.source_path())
            .cloned()
            .ok_or_else(|| CodegenError::TypeMismatch {
                detail: "node has no inferred sort".into(),
                source_path: expr.source_path().to_string(),
            })
    }

    fn translate(&self, expr: &ElmExpression) -> Result<String, CodegenError> {
        self.tr(expr, false)
    }

    /// `want_real` asks for an Int-sorted result to be coerced to Real.
    fn tr(&self, expr: &ElmExpression, want_real: bool) -> Result<String, CodegenError> {
        let text = match expr {
            ElmExpression::Literal { value, source_path } => {
                literal_text(value, want_real, source_path)?
            }
            ElmExpression::SymbolRef { name, source_path } => {
                let rendered =
                    self.symbol_name(name)
                        .ok_or_else(|| CodegenError::UndeclaredSymbol {
                            name: name.clone(),
                            source_path: source_path.clone(),
                        })?;
                self.coerce(expr, rendered, want_real)?
            }
            ElmExpression::Unary {
                op,
                arg,
                source_path,
            } => {
                let text = self.tr_unary(*op, arg, source_path)?;
                self.coerce(expr, text, want_real)?
            }
            ElmExpression::Binary {
                op,
                lhs,
                rhs,
                source_path,
            } => {
                let text = self.tr_binary(*op, lhs, rhs, source_path)?;
                self.coerce(expr, text, want_real)?
            }
            ElmExpression::Nary { op, args, .. } => {
                let (token, real_args) = match op {
                    NaryOp::And => ("and", false),
                    NaryOp::Or => ("or", false),
                    NaryOp::Concatenate => ("str.++", false),
                };
                let mut parts = Vec::with_capacity(args.len());
                for a in args {
                    parts.push(self.tr(a, real_args)?);
                }
                format!("({token} {})", parts.join(" "))
            }
            ElmExpression::IntervalTest {
                value,
                low,
                high,
                low_closed,
                high_closed,
                ..
            } => {
                let real = [value, low, high]
                    .iter()
                    .any(|e| matches!(self.node_sort(e), Ok(Sort::Real)));
                let v = self.tr(value, real)?;
                let lo = self.tr(low, real)?;
                let hi = self.tr(high, real)?;
                let low_cmp = if *low_closed { ">=" } else { ">" };
                let high_cmp = if *high_closed { "<=" } else { "<" };
                format!("(and ({low_cmp} {v} {lo}) ({high_cmp} {v} {hi}))")
            }
        };
        Ok(text)
    }

    /// Wraps an Int-sorted term in `to_real` when a Real context asks
    /// for it. Literals are rendered directly in decimal instead.
    fn coerce(
        &self,
        expr: &ElmExpression,
        text: String,
        want_real: bool,
    ) -> Result<String, CodegenError> {
        if !want_real {
            return Ok(text);
        }
        match self.node_sort(expr)? {
            Sort::Int => Ok(format!("(to_real {text})")),
            _ => Ok(text),
        }
    }

    fn tr_unary(
        &self,
        op: UnaryOp,
        arg: &ElmExpression,
        path: &str,
    ) -> Result<String, CodegenError> {
        match op {
            UnaryOp::Not => Ok(format!("(not {})", self.tr(arg, false)?)),
            UnaryOp::Negate => Ok(format!("(- {})", self.tr(arg, false)?)),
            UnaryOp::IsTrue => Ok(format!("(= {} true)", self.tr(arg, false)?)),
            UnaryOp::IsFalse => Ok(format!("(= {} false)", self.tr(arg, false)?)),
            UnaryOp::IsNull => match self.node_sort(arg)? {
                Sort::Option(_) => Ok(format!("((_ is none) {})", self.tr(arg, false)?)),
                _ => Ok("false".into()),
            },
            UnaryOp::Exists => {
                let text = self.tr(arg, false)?;
                match self.mode {
                    EmissionMode::Portable => Ok(format!("(not ((_ is nil) {text}))")),
                    EmissionMode::PaperCompat => {
                        let elem = match self.node_sort(arg)? {
                            Sort::List(e) => *e,
                            other => {
                                return Err(CodegenError::TypeMismatch {
                                    detail: format!("Exists over non-list sort {other}"),
                                    source_path: path.to_string(),
                                })
                            }
                        };
                        let helpers = self.list_element_sorts();
                        let index = helpers.iter().position(|s| *s == elem).ok_or_else(|| {
                            CodegenError::TypeMismatch {
                                detail: format!("no list helper for element sort {elem}"),
                                source_path: path.to_string(),
                            }
                        })?;
                        Ok(format!("({} {text})", exists_helper_name(index, &elem)))
                    }
                }
            }
            UnaryOp::Count => Err(CodegenError::UnsupportedOperator {
                name: "Count".into(),
                category: op.category().name().into(),
                support: op.support().name().into(),
                source_path: path.to_string(),
            }),
        }
    }

    fn tr_binary(
        &self,
        op: BinaryOp,
        lhs: &ElmExpression,
        rhs: &ElmExpression,
        _path: &str,
    ) -> Result<String, CodegenError> {
        let either_real = || -> bool {
            matches!(self.node_sort(lhs), Ok(Sort::Real))
                || matches!(self.node_sort(rhs), Ok(Sort::Real))
        };
        match op {
            BinaryOp::Xor => Ok(format!(
                "(xor {} {})",
                self.tr(lhs, false)?,
                self.tr(rhs, false)?
            )),
            BinaryOp::Implies => Ok(format!(
                "(=> {} {})",
                self.tr(lhs, false)?,
                self.tr(rhs, false)?
            )),
            BinaryOp::Add | BinaryOp::Subtract | BinaryOp::Multiply => {
                let real = either_real();
                let token = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Subtract => "-",
                    _ => "*",
                };
                Ok(format!(
                    "({token} {} {})",
                    self.tr(lhs, real)?,
                    self.tr(rhs, real)?
                ))
            }
            BinaryOp::Divide => Ok(format!(
                "(/ {} {})",
                self.tr(lhs, true)?,
                self.tr(rhs, true)?
            )),
            BinaryOp::Modulo => Ok(format!(
                "(mod {} {})",
                self.tr(lhs, false)?,
                self.tr(rhs, false)?
            )),
            BinaryOp::Equal
            | BinaryOp::NotEqual
            | BinaryOp::Greater
            | BinaryOp::GreaterOrEqual
            | BinaryOp::Less
            | BinaryOp::LessOrEqual => {
                let real = either_real();
                let token = match op {
                    BinaryOp::Equal => "=",
                    BinaryOp::NotEqual => "distinct",
                    BinaryOp::Greater => ">",
                    BinaryOp::GreaterOrEqual => ">=",
                    BinaryOp::Less => "<",
                    _ => "<=",
                };
                Ok(format!(
                    "({token} {} {})",
                    self.tr(lhs, real)?,
                    self.tr(rhs, real)?
                ))
            }
            // str.prefixof / str.suffixof take the affix first.
            BinaryOp::StartsWith => Ok(format!(
                "(str.prefixof {} {})",
                self.tr(rhs, false)?,
                self.tr(lhs, false)?
            )),
            BinaryOp::EndsWith => Ok(format!(
                "(str.suffixof {} {})",
                self.tr(rhs, false)?,
                self.tr(lhs, false)?
            )),
            BinaryOp::DifferenceBetween(precision) => {
                let a = self.tr(lhs, false)?;
                let b = self.tr(rhs, false)?;
                let delta = format!("(- {b} {a})");
                Ok(match precision {
                    TimePrecision::Milliseconds => delta,
                    other => format!("(div {delta} {})", other.divisor_ms()),
                })
            }
        }
    }
}

fn collect_list_elems(sort: &Sort, out: &mut Vec<Sort>) {
    if let Sort::List(e) = sort {
        if !out.contains(e) {
            out.push((**e).clone());
        }
        collect_list_elems(e, out);
    }
}

fn literal_text(value: &Value, want_real: bool, path: &str) -> Result<String, CodegenError> {
    match value {
        Value::Bool(b) => Ok(if *b { "true" } else { "false" }.into()),
        Value::Int(i) => Ok(int_text(i, want_real)),
        Value::Real(r) => {
            if r.is_integer() {
                Ok(int_decimal_text(r.numer()))
            } else {
                let body = format!(
                    "(/ {} {})",
                    decimal_digits(&r.numer().abs()),
                    decimal_digits(r.denom())
                );
                Ok(if r.numer().is_negative() {
                    format!("(- {body})")
                } else {
                    body
                })
            }
        }
        Value::Str(s) => Ok(string_literal(s)),
        Value::Timestamp(t) => Ok(int_text(&BigInt::from(*t), false)),
        Value::List(_) | Value::Opaque { .. } => Err(CodegenError::TypeMismatch {
            detail: format!("{} literals are not translatable", value.kind()),
            source_path: path.to_string(),
        }),
    }
}

fn int_text(i: &BigInt, want_real: bool) -> String {
    if want_real {
        return int_decimal_text(i);
    }
    if i.is_negative() {
        format!("(- {})", i.abs())
    } else {
        i.to_string()
    }
}

fn int_decimal_text(i: &BigInt) -> String {
    if i.is_negative() {
        format!("(- {}.0)", i.abs())
    } else {
        format!("{i}.0")
    }
}

fn decimal_digits(i: &BigInt) -> String {
    format!("{i}.0")
}

/// SMT-LIB v2.6 string literal: quotes are escaped by doubling.
fn string_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' {
            out.push('"');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Rewrites a raw name into a valid solver identifier, suffixing on
/// collision.
pub(crate) fn sanitize_ident(raw: &str, used: &mut Vec<String>) -> String {
    let mut base: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if !base
        .chars()
        .next()
        .map(|c| c.is_ascii_alphabetic())
        .unwrap_or(false)
    {
        base.insert(0, 'S');
    }
    let mut candidate = base.clone();
    let mut n = 1usize;
    while used.contains(&candidate) {
        n += 1;
        candidate = format!("{base}_{n}");
    }
    used.push(candidate.clone());
    candidate
}

/// Renders a script as SMT-LIB text: UTF-8, one command per line, LF
/// endings, byte-deterministic for equal scripts.
pub fn render(script: &SmtScript) -> String {
    let mut out = String::new();
    for cmd in &script.commands {
        render_command(cmd, script.mode, &mut out);
        out.push('\n');
    }
    out
}

fn render_command(cmd: &SmtCommand, mode: EmissionMode, out: &mut String) {
    match cmd {
        SmtCommand::SetOption { key, value } => {
            out.push_str(&format!("(set-option {key} {value})"));
        }
        SmtCommand::SetLogic { name } => out.push_str(&format!("(set-logic {name})")),
        SmtCommand::DeclareSort { name } => match mode {
            // The classic encoding omits the arity numeral on zero-arity
            // sorts; Z3 accepts it and the golden fixture preserves it.
            EmissionMode::PaperCompat => out.push_str(&format!("(declare-sort {name})")),
            EmissionMode::Portable => out.push_str(&format!("(declare-sort {name} 0)")),
        },
        SmtCommand::DeclareListDatatype => out.push_str(
            "(declare-datatypes ((Lst 1)) ((par (T) ((cons (head T) (tail (Lst T))) (nil)))))",
        ),
        SmtCommand::DeclareOptionDatatype => {
            out.push_str("(declare-datatypes ((Opt 1)) ((par (T) ((some (val T)) (none)))))")
        }
        SmtCommand::DeclareConst { name, sort } => {
            out.push_str(&format!(
                "(declare-const {name} {})",
                render_sort(sort, mode)
            ));
        }
        SmtCommand::DefineFun {
            name,
            params,
            ret,
            body,
        } => {
            let params_text: Vec<String> = params
                .iter()
                .map(|(p, s)| format!("({p} {})", render_sort(s, mode)))
                .collect();
            out.push_str(&format!(
                "(define-fun {name} ({}) {} {body})",
                params_text.join(" "),
                render_sort(ret, mode)
            ));
        }
        SmtCommand::Assert { term, name } => match name {
            Some(n) => out.push_str(&format!("(assert (! {term} :named {n}))")),
            None => out.push_str(&format!("(assert {term})")),
        },
        SmtCommand::CheckSat => out.push_str("(check-sat)"),
    }
}

/// Parses a specification (φ) file: `;` comments and blank space are
/// ignored; each entry is `(<name> <boolean-term>)`.
pub fn parse_spec_constraints(text: &str) -> Result<Vec<SpecConstraint>, CodegenError> {
    let mut out: Vec<SpecConstraint> = Vec::new();
    let stripped = strip_comments(text);
    let bytes = stripped.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                let end =
                    balanced_end(&stripped, i).ok_or_else(|| CodegenError::BadSpecConstraint {
                        detail: "unbalanced parentheses".into(),
                    })?;
                let entry = &stripped[i..=end];
                out.push(parse_constraint_entry(entry)?);
                i = end + 1;
            }
            _ => {
                return Err(CodegenError::BadSpecConstraint {
                    detail: format!(
                        "expected `(` at offset {i}, found `{}`",
                        stripped[i..].chars().next().unwrap_or(' ')
                    ),
                })
            }
        }
    }
    let mut seen: Vec<&str> = Vec::new();
    for c in &out {
        if seen.contains(&c.name.as_str()) {
            return Err(CodegenError::BadSpecConstraint {
                detail: format!("duplicate constraint name `{}`", c.name),
            });
        }
        seen.push(&c.name);
    }
    Ok(out)
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        match line.find(';') {
            Some(i) => out.push_str(&line[..i]),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (off, c) in text[start..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + off);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_constraint_entry(entry: &str) -> Result<SpecConstraint, CodegenError> {
    let inner = entry
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| CodegenError::BadSpecConstraint {
            detail: "entry is not a parenthesized pair".into(),
        })?
        .trim();
    let (name, term) = inner
        .split_once(|c: char| c.is_whitespace())
        .ok_or_else(|| CodegenError::BadSpecConstraint {
            detail: format!("entry `{entry}` needs a name and a term"),
        })?;
    let valid_name = name
        .chars()
        .next()
        .map(|c| c.is_ascii_alphabetic())
        .unwrap_or(false)
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    if !valid_name {
        return Err(CodegenError::BadSpecConstraint {
            detail: format!("`{name}` is not a valid constraint name"),
        });
    }
    if is_generated_assertion_name(name) {
        return Err(CodegenError::BadSpecConstraint {
            detail: format!("`{name}` collides with the generated assertion names"),
        });
    }
    let term = term.trim();
    if term.is_empty() {
        return Err(CodegenError::BadSpecConstraint {
            detail: format!("constraint `{name}` has an empty term"),
        });
    }
    // A term must itself be balanced (it is a slice of a balanced entry,
    // so only atom-vs-list shape can go wrong).
    let opens = term.matches('(').count();
    let closes = term.matches(')').count();
    if opens != closes {
        return Err(CodegenError::BadSpecConstraint {
            detail: format!("constraint `{name}` must contain exactly one term"),
        });
    }
    Ok(SpecConstraint {
        name: name.to_string(),
        term_text: normalize_ws(term),
    })
}

fn is_generated_assertion_name(name: &str) -> bool {
    name.strip_prefix("assertion-")
        .map(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        .unwrap_or(false)
}

fn normalize_ws(term: &str) -> String {
    term.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elm::parse_prefix;
    use crate::ingest::{Cardinality, SymbolDecl, SymbolEnv};
    use crate::sorts::infer_sorts;

    fn os_env() -> SymbolEnv {
        let mut env = SymbolEnv::default();
        env.insert(
            "AdverseReactionToACEInhibitors",
            SymbolDecl {
                value_type_name: "AdverseEvent".into(),
                cardinality: Cardinality::List,
            },
        )
        .unwrap();
        env.insert(
            "PatientAgeInYears",
            SymbolDecl {
                value_type_name: "Integer".into(),
                cardinality: Cardinality::Single,
            },
        )
        .unwrap();
        env
    }

    fn condition(text: &str, env: &SymbolEnv) -> SortedCondition {
        let expr = parse_prefix(text).unwrap();
        let sorts = infer_sorts(&expr, env).unwrap();
        SortedCondition {
            id: "cond-1".into(),
            source_path: expr.source_path().to_string(),
            expr,
            sorts,
        }
    }

    const LIST_1: &str =
        "(and (>= PatientAgeInYears 18) (not (exists AdverseReactionToACEInhibitors)))";

    #[test]
    fn paper_compat_script_reproduces_the_classic_encoding() {
        let cond = condition(LIST_1, &os_env());
        let script = build_script(&[cond], &[], EmissionMode::PaperCompat, false).unwrap();
        let text = render(&script);
        let expected = "\
(declare-sort AdverseEvent)
(declare-const AdverseReactionToACEInhibitors (List AdverseEvent))
(declare-const PatientAgeInYears Int)
(define-fun elm_exists ((lst (List AdverseEvent))) Bool (ite (exists ((x AdverseEvent)) (= x (head lst))) true false))
(assert (= true (and (>= PatientAgeInYears 18) (not (elm_exists AdverseReactionToACEInhibitors)))))
(check-sat)
";
        assert_eq!(text, expected);
    }

    #[test]
    fn portable_script_uses_the_datatype_encoding() {
        let cond = condition(LIST_1, &os_env());
        let script = build_script(&[cond], &[], EmissionMode::Portable, true).unwrap();
        let text = render(&script);
        assert!(text.starts_with("(set-option :produce-unsat-cores true)\n"));
        assert!(text.contains(
            "(declare-datatypes ((Lst 1)) ((par (T) ((cons (head T) (tail (Lst T))) (nil)))))"
        ));
        assert!(text.contains("(declare-const AdverseReactionToACEInhibitors (Lst AdverseEvent))"));
        assert!(text.contains(
            "(assert (! (and (>= PatientAgeInYears 18) (not (not ((_ is nil) AdverseReactionToACEInhibitors)))) :named assertion-1))"
        ));
        script.check_declaration_order().unwrap();
    }

    #[test]
    fn eca_03_term_is_translated_structurally() {
        // 18 >= age and 50 <= age: literal-first comparisons stay as
        // written.
        let env = SymbolEnv::default();
        let cond = condition("(and (>= 18 PatientAge) (<= 50 PatientAge))", &env);
        let script = build_script(&[cond], &[], EmissionMode::Portable, true).unwrap();
        let text = render(&script);
        assert!(text.contains(
            "(assert (! (and (>= 18 PatientAge) (<= 50 PatientAge)) :named assertion-1))"
        ));
    }

    #[test]
    fn count_is_unsupported_with_its_table_category() {
        let mut env = SymbolEnv::default();
        env.insert(
            "xs",
            SymbolDecl {
                value_type_name: "Event".into(),
                cardinality: Cardinality::List,
            },
        )
        .unwrap();
        let cond = condition("(> (count xs) 0)", &env);
        match build_script(&[cond], &[], EmissionMode::Portable, true) {
            Err(CodegenError::UnsupportedOperator {
                name,
                category,
                support,
                source_path,
            }) => {
                assert_eq!(name, "Count");
                assert_eq!(category, "Aggregation");
                assert_eq!(support, "none");
                assert!(!source_path.is_empty());
            }
            other => panic!("expected UnsupportedOperator, got {other:?}"),
        }
    }

    #[test]
    fn render_examples() {
        let script = SmtScript {
            commands: vec![
                SmtCommand::DeclareConst {
                    name: "PatientAgeInYears".into(),
                    sort: Sort::Int,
                },
                SmtCommand::Assert {
                    term: "(= true true)".into(),
                    name: Some("assertion-1".into()),
                },
            ],
            mode: EmissionMode::PaperCompat,
            assertion_index: BTreeMap::new(),
            symbol_names: BTreeMap::new(),
        };
        let text = render(&script);
        assert_eq!(
            text,
            "(declare-const PatientAgeInYears Int)\n(assert (! (= true true) :named assertion-1))\n"
        );
    }

    #[test]
    fn interval_and_string_translations() {
        let env = SymbolEnv::default();
        let cond = condition("(in-cc x 3 7)", &env);
        let term = translate_term(&cond.expr, &cond.sorts, EmissionMode::Portable).unwrap();
        assert_eq!(term, "(and (>= x 3) (<= x 7))");

        let mut env = SymbolEnv::default();
        env.insert(
            "s",
            SymbolDecl {
                value_type_name: "String".into(),
                cardinality: Cardinality::Single,
            },
        )
        .unwrap();
        let cond = condition(r#"(starts-with s "pre")"#, &env);
        let term = translate_term(&cond.expr, &cond.sorts, EmissionMode::Portable).unwrap();
        assert_eq!(term, r#"(str.prefixof "pre" s)"#);
    }

    #[test]
    fn divide_promotes_operands_to_real() {
        let env = SymbolEnv::default();
        let cond = condition("(> (/ x 4) 2)", &env);
        let term = translate_term(&cond.expr, &cond.sorts, EmissionMode::Portable).unwrap();
        assert_eq!(term, "(> (/ (to_real x) 4.0) 2.0)");
    }

    #[test]
    fn real_literal_comparison_renders_decimals() {
        let env = SymbolEnv::default();
        let cond = condition("(> x 5/2)", &env);
        let term = translate_term(&cond.expr, &cond.sorts, EmissionMode::Portable).unwrap();
        assert_eq!(term, "(> x (/ 5.0 2.0))");
    }

    #[test]
    fn spec_constraints_are_appended_and_named() {
        let env = SymbolEnv::default();
        let cond = condition("(>= PatientAgeInYears 200)", &env);
        let spec = parse_spec_constraints(
            "; valid age range\n(age-range (and (>= PatientAgeInYears 0) (<= PatientAgeInYears 140)))",
        )
        .unwrap();
        let script = build_script(&[cond], &spec, EmissionMode::Portable, true).unwrap();
        let text = render(&script);
        assert!(text.contains(
            "(assert (! (and (>= PatientAgeInYears 0) (<= PatientAgeInYears 140)) :named age-range))"
        ));
        assert!(matches!(
            script.assertion_index["age-range"],
            AssertionTarget::Constraint { .. }
        ));
        assert!(matches!(
            script.assertion_index["assertion-1"],
            AssertionTarget::Condition { .. }
        ));
    }

    #[test]
    fn spec_constraint_names_cannot_shadow_generated_names() {
        assert!(matches!(
            parse_spec_constraints("(assertion-1 true)"),
            Err(CodegenError::BadSpecConstraint { .. })
        ));
        assert!(matches!(
            parse_spec_constraints("(x (and true false)) (x true)"),
            Err(CodegenError::BadSpecConstraint { .. })
        ));
        assert!(matches!(
            parse_spec_constraints("(bad"),
            Err(CodegenError::BadSpecConstraint { .. })
        ));
    }

    #[test]
    fn restriction_keeps_declarations_and_named_asserts() {
        let env = SymbolEnv::default();
        let a = condition("(> x 5)", &env);
        let mut b = condition("(< y 2)", &env);
        // Re-root b's paths so the two conditions do not collide.
        b.id = "cond-2".into();
        let script = build_script(&[a, b], &[], EmissionMode::Portable, true).unwrap();
        let restricted = script.restrict_to_assertions(&["assertion-2".to_string()]);
        let text = render(&restricted);
        assert!(text.contains("(declare-const x Int)"));
        assert!(text.contains(":named assertion-2"));
        assert!(!text.contains(":named assertion-1"));
        assert_eq!(restricted.assertion_index.len(), 1);
    }

    #[test]
    fn rendered_lines_are_balanced_sexprs() {
        let cond = condition(LIST_1, &os_env());
        for mode in [EmissionMode::PaperCompat, EmissionMode::Portable] {
            let script = build_script(std::slice::from_ref(&cond), &[], mode, true).unwrap();
            for line in render(&script).lines() {
                let depth = line.chars().fold(0i32, |d, c| match c {
                    '(' => d + 1,
                    ')' => d - 1,
                    _ => d,
                });
                assert_eq!(depth, 0, "unbalanced line: {line}");
            }
            script.check_declaration_order().unwrap();
        }
    }

    #[test]
    fn consistent_renaming_yields_identical_script_modulo_names() {
        let env = SymbolEnv::default();
        let a = condition("(and (> age 3) (< age weight))", &env);
        let b = condition("(and (> years 3) (< years mass))", &env);
        let sa = render(&build_script(&[a], &[], EmissionMode::Portable, true).unwrap());
        let sb = render(&build_script(&[b], &[], EmissionMode::Portable, true).unwrap());
        assert_eq!(sa.replace("age", "years").replace("weight", "mass"), sb);
    }

    #[test]
    fn conflicting_sorts_across_conditions_are_rejected() {
        let env = SymbolEnv::default();
        let a = condition("(> x 5)", &env);
        let mut b_env = SymbolEnv::default();
        b_env
            .insert(
                "x",
                SymbolDecl {
                    value_type_name: "Boolean".into(),
                    cardinality: Cardinality::Single,
                },
            )
            .unwrap();
        let b_expr = parse_prefix("(and x true)").unwrap();
        let b_sorts = infer_sorts(&b_expr, &b_env).unwrap();
        let b = SortedCondition {
            id: "cond-2".into(),
            source_path: "$b".into(),
            expr: b_expr,
            sorts: b_sorts,
        };
        assert!(matches!(
            build_script(&[a, b], &[], EmissionMode::Portable, false),
            Err(CodegenError::ConflictingSymbolSorts { .. })
        ));
    }

    #[test]
    fn with_logic_inserts_after_options() {
        let env = SymbolEnv::default();
        let cond = condition("(> x 1)", &env);
        let script = build_script(&[cond], &[], EmissionMode::Portable, true)
            .unwrap()
            .with_logic("ALL");
        let text = render(&script);
        let first_two: Vec<&str> = text.lines().take(2).collect();
        assert_eq!(
            first_two,
            ["(set-option :produce-unsat-cores true)", "(set-logic ALL)"]
        );
    }

    #[test]
    fn string_literals_escape_quotes_by_doubling() {
        assert_eq!(string_literal(r#"say "hi""#), r#""say ""hi""""#);
    }

    #[test]
    fn is_null_over_a_plain_symbol_is_false() {
        let env = SymbolEnv::default();
        let cond = condition("(or (is-null x) (> x 1))", &env);
        let term = translate_term(&cond.expr, &cond.sorts, EmissionMode::Portable).unwrap();
        assert_eq!(term, "(or false (> x 1))");
    }

    #[test]
    fn option_datatype_renders() {
        let mut out = String::new();
        render_command(&SmtCommand::DeclareOptionDatatype, EmissionMode::Portable, &mut out);
        assert_eq!(
            out,
            "(declare-datatypes ((Opt 1)) ((par (T) ((some (val T)) (none)))))"
        );
        assert_eq!(
            render_sort(&Sort::Option(Box::new(Sort::Int)), EmissionMode::Portable),
            "(Opt Int)"
        );
    }
}
