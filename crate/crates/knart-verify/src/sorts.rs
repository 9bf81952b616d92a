//! Sort inference: assigns an SMT sort to every symbol and AST node.
//!
//! Declared value types from the symbol environment seed the inference;
//! bottom-up constraints from operator signatures do the rest. Unknown
//! value-type names become uninterpreted sorts. Unification joins along
//! the promotion lattice `Int <= Real`; `Timestamp` deliberately never
//! unifies with `Int` even though both are integer-carried, so category
//! errors surface at translation time instead of in solver output.
//!
//! Symbols with no evidence at all default to `Int`, which is what an
//! integer-literal comparison would have forced anyway.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::elm::{BinaryOp, ElmExpression, NaryOp, UnaryOp, Value};
use crate::ingest::{Cardinality, SymbolDecl, SymbolEnv};

/// An SMT sort.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sort {
    Bool,
    Int,
    Real,
    Str,
    Timestamp,
    List(Box<Sort>),
    Uninterpreted(String),
    Option(Box<Sort>),
}

impl std::fmt::Display for Sort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sort::Bool => write!(f, "Bool"),
            Sort::Int => write!(f, "Int"),
            Sort::Real => write!(f, "Real"),
            Sort::Str => write!(f, "String"),
            Sort::Timestamp => write!(f, "Timestamp"),
            Sort::List(e) => write!(f, "(List {e})"),
            Sort::Uninterpreted(n) => write!(f, "{n}"),
            Sort::Option(e) => write!(f, "(Option {e})"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SortError {
    #[error("sort conflict: `{first}` (at {first_path}) vs `{second}` (at {second_path})")]
    SortConflict {
        first: Sort,
        second: Sort,
        first_path: String,
        second_path: String,
    },
    #[error("condition at {source_path} is not boolean (found `{found}`)")]
    NonBooleanCondition { found: Sort, source_path: String },
}

/// The least sort compatible with both inputs: identical sorts unify to
/// themselves, `Int` promotes to `Real`, and container sorts unify
/// element-wise. Everything else conflicts.
pub fn unify(a: &Sort, b: &Sort) -> Result<Sort, SortError> {
    match (a, b) {
        _ if a == b => Ok(a.clone()),
        (Sort::Int, Sort::Real) | (Sort::Real, Sort::Int) => Ok(Sort::Real),
        (Sort::List(x), Sort::List(y)) => Ok(Sort::List(Box::new(unify(x, y)?))),
        (Sort::Option(x), Sort::Option(y)) => Ok(Sort::Option(Box::new(unify(x, y)?))),
        _ => Err(SortError::SortConflict {
            first: a.clone(),
            second: b.clone(),
            first_path: String::new(),
            second_path: String::new(),
        }),
    }
}

/// Inferred typing context for one or more expressions.
#[derive(Debug, Clone, Default)]
pub struct SortEnv {
    /// Sort of every referenced symbol.
    pub symbols: BTreeMap<String, Sort>,
    /// Symbol names in declaration order (declared symbols first, in
    /// document order, then undeclared ones in first-use order).
    pub symbol_order: Vec<String>,
    /// Uninterpreted sort names in first-occurrence order.
    pub uninterpreted_sorts: Vec<String>,
    /// Sort of every AST node, keyed by source path.
    pub node_sorts: BTreeMap<String, Sort>,
}

impl SortEnv {
    pub fn symbol_sort(&self, name: &str) -> Option<&Sort> {
        self.symbols.get(name)
    }

    pub fn node_sort(&self, path: &str) -> Option<&Sort> {
        self.node_sorts.get(path)
    }
}

/// Infers sorts for a single condition expression.
pub fn infer_sorts(expr: &ElmExpression, env: &SymbolEnv) -> Result<SortEnv, SortError> {
    infer_sorts_many(std::slice::from_ref(expr), env)
}

/// Infers sorts for several conditions of one artifact in a shared
/// constraint store, so symbols common to multiple conditions agree.
pub fn infer_sorts_many(exprs: &[ElmExpression], env: &SymbolEnv) -> Result<SortEnv, SortError> {
    let mut ctx = Inference::new(env);
    let mut roots = Vec::with_capacity(exprs.len());
    for expr in exprs {
        let root = ctx.infer_node(expr)?;
        roots.push((root, expr.source_path().to_string()));
    }
    ctx.check_deferred()?;
    for (root, path) in &roots {
        let sort = ctx.resolve(*root);
        if sort != Sort::Bool {
            return Err(SortError::NonBooleanCondition {
                found: sort,
                source_path: path.clone(),
            });
        }
    }
    Ok(ctx.finish())
}

/// Maps a declared value-type name to a sort; names beyond the primitive
/// table become uninterpreted sorts.
fn primitive_sort(name: &str) -> Option<Sort> {
    match name {
        "Integer" => Some(Sort::Int),
        "Decimal" => Some(Sort::Real),
        "Boolean" => Some(Sort::Bool),
        "String" => Some(Sort::Str),
        "DateTime" => Some(Sort::Timestamp),
        _ => None,
    }
}

/// Rewrites value-type names into valid solver identifiers
/// (`[A-Za-z][A-Za-z0-9_]*`), suffixing `_2`, `_3`, … on collisions.
#[derive(Debug, Default)]
struct Sanitizer {
    map: BTreeMap<String, String>,
    used: Vec<String>,
}

impl Sanitizer {
    fn sanitize(&mut self, raw: &str) -> String {
        if let Some(done) = self.map.get(raw) {
            return done.clone();
        }
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
            base.insert(0, 'T');
        }
        let mut candidate = base.clone();
        let mut n = 1usize;
        while self.used.contains(&candidate) {
            n += 1;
            candidate = format!("{base}_{n}");
        }
        self.used.push(candidate.clone());
        self.map.insert(raw.to_string(), candidate.clone());
        candidate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Known(usize),
    Var(usize),
}

#[derive(Debug)]
enum Deferred {
    Ordered(Term, String),
    IntOnly(Term, String, &'static str),
    ListOf(Term, String),
}

struct Inference<'a> {
    env: &'a SymbolEnv,
    sanitizer: Sanitizer,
    /// Interned ground sorts referenced by `Term::Known`.
    grounds: Vec<Sort>,
    parent: Vec<usize>,
    binding: Vec<Option<Sort>>,
    origin: Vec<String>,
    symbol_terms: BTreeMap<String, Term>,
    /// Referenced symbols: declared ones in declaration order first, then
    /// undeclared in first-use order.
    declared_used: Vec<String>,
    undeclared_used: Vec<String>,
    /// (path, term) for every visited node, in walk order.
    nodes: Vec<(String, Term)>,
    deferred: Vec<Deferred>,
}

impl<'a> Inference<'a> {
    fn new(env: &'a SymbolEnv) -> Self {
        Inference {
            env,
            sanitizer: Sanitizer::default(),
            grounds: Vec::new(),
            parent: Vec::new(),
            binding: Vec::new(),
            origin: Vec::new(),
            symbol_terms: BTreeMap::new(),
            declared_used: Vec::new(),
            undeclared_used: Vec::new(),
            nodes: Vec::new(),
            deferred: Vec::new(),
        }
    }

    fn known(&mut self, sort: Sort) -> Term {
        match self.grounds.iter().position(|s| *s == sort) {
            Some(i) => Term::Known(i),
            None => {
                self.grounds.push(sort);
                Term::Known(self.grounds.len() - 1)
            }
        }
    }

    fn fresh_var(&mut self, path: &str) -> Term {
        self.parent.push(self.parent.len());
        self.binding.push(None);
        self.origin.push(path.to_string());
        Term::Var(self.parent.len() - 1)
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn decl_sort(&mut self, decl: &SymbolDecl) -> Sort {
        let base = primitive_sort(&decl.value_type_name)
            .unwrap_or_else(|| Sort::Uninterpreted(self.sanitizer.sanitize(&decl.value_type_name)));
        match decl.cardinality {
            Cardinality::Single => base,
            Cardinality::List => Sort::List(Box::new(base)),
        }
    }

    fn symbol_term(&mut self, name: &str, path: &str) -> Term {
        if let Some(t) = self.symbol_terms.get(name) {
            return *t;
        }
        let term = match self.env.get(name) {
            Some(decl) => {
                let decl = decl.clone();
                let sort = self.decl_sort(&decl);
                self.declared_used.push(name.to_string());
                self.known(sort)
            }
            None => {
                self.undeclared_used.push(name.to_string());
                self.fresh_var(path)
            }
        };
        self.symbol_terms.insert(name.to_string(), term);
        term
    }

    fn join(&mut self, a: &Sort, b: &Sort, path_a: &str, path_b: &str) -> Result<Sort, SortError> {
        unify(a, b).map_err(|e| match e {
            SortError::SortConflict { first, second, .. } => SortError::SortConflict {
                first,
                second,
                first_path: path_a.to_string(),
                second_path: path_b.to_string(),
            },
            other => other,
        })
    }

    fn unify_terms(&mut self, a: Term, b: Term, path: &str) -> Result<Term, SortError> {
        match (a, b) {
            (Term::Known(x), Term::Known(y)) => {
                let (sx, sy) = (self.grounds[x].clone(), self.grounds[y].clone());
                let joined = self.join(&sx, &sy, path, path)?;
                Ok(self.known(joined))
            }
            (Term::Var(v), Term::Known(g)) | (Term::Known(g), Term::Var(v)) => {
                let root = self.find(v);
                let ground = self.grounds[g].clone();
                match self.binding[root].clone() {
                    Some(existing) => {
                        let o = self.origin[root].clone();
                        let joined = self.join(&existing, &ground, &o, path)?;
                        self.binding[root] = Some(joined);
                    }
                    None => {
                        self.binding[root] = Some(ground);
                        self.origin[root] = path.to_string();
                    }
                }
                Ok(Term::Var(root))
            }
            (Term::Var(x), Term::Var(y)) => {
                let (rx, ry) = (self.find(x), self.find(y));
                if rx == ry {
                    return Ok(Term::Var(rx));
                }
                let joined = match (self.binding[rx].clone(), self.binding[ry].clone()) {
                    (Some(a), Some(b)) => {
                        let (oa, ob) = (self.origin[rx].clone(), self.origin[ry].clone());
                        Some(self.join(&a, &b, &oa, &ob)?)
                    }
                    (Some(a), None) => Some(a),
                    (None, Some(b)) => Some(b),
                    (None, None) => None,
                };
                self.parent[ry] = rx;
                self.binding[rx] = joined;
                Ok(Term::Var(rx))
            }
        }
    }

    fn constrain(&mut self, term: Term, sort: Sort, path: &str) -> Result<Term, SortError> {
        let k = self.known(sort);
        self.unify_terms(term, k, path)
    }

    fn literal_sort(&mut self, value: &Value, path: &str) -> Term {
        match value {
            Value::Bool(_) => self.known(Sort::Bool),
            Value::Int(_) => self.known(Sort::Int),
            Value::Real(_) => self.known(Sort::Real),
            Value::Str(_) => self.known(Sort::Str),
            Value::Timestamp(_) => self.known(Sort::Timestamp),
            Value::Opaque { sort_name, .. } => {
                let n = self.sanitizer.sanitize(sort_name);
                self.known(Sort::Uninterpreted(n))
            }
            Value::List(items) => match items.first() {
                Some(first) => {
                    let elem = self.literal_sort(first, path);
                    match elem {
                        Term::Known(i) => {
                            let s = Sort::List(Box::new(self.grounds[i].clone()));
                            self.known(s)
                        }
                        Term::Var(_) => self.fresh_var(path),
                    }
                }
                None => {
                    // Empty list literal: element sort is unconstrained.
                    let v = self.fresh_var(path);
                    self.deferred.push(Deferred::ListOf(v, path.to_string()));
                    v
                }
            },
        }
    }

    fn infer_node(&mut self, expr: &ElmExpression) -> Result<Term, SortError> {
        let path = expr.source_path().to_string();
        let term = match expr {
            ElmExpression::Literal { value, .. } => self.literal_sort(value, &path),
            ElmExpression::SymbolRef { name, .. } => self.symbol_term(name, &path),
            ElmExpression::Unary { op, arg, .. } => {
                let t = self.infer_node(arg)?;
                let arg_path = arg.source_path().to_string();
                match op {
                    UnaryOp::Not | UnaryOp::IsTrue | UnaryOp::IsFalse => {
                        self.constrain(t, Sort::Bool, &arg_path)?;
                        self.known(Sort::Bool)
                    }
                    UnaryOp::IsNull => self.known(Sort::Bool),
                    UnaryOp::Negate => self.constrain(t, Sort::Int, &arg_path)?,
                    UnaryOp::Exists => {
                        self.deferred.push(Deferred::ListOf(t, arg_path));
                        self.known(Sort::Bool)
                    }
                    UnaryOp::Count => {
                        self.deferred.push(Deferred::ListOf(t, arg_path));
                        self.known(Sort::Int)
                    }
                }
            }
            ElmExpression::Binary { op, lhs, rhs, .. } => {
                let lt = self.infer_node(lhs)?;
                let rt = self.infer_node(rhs)?;
                let lp = lhs.source_path().to_string();
                let rp = rhs.source_path().to_string();
                match op {
                    BinaryOp::Xor | BinaryOp::Implies => {
                        self.constrain(lt, Sort::Bool, &lp)?;
                        self.constrain(rt, Sort::Bool, &rp)?;
                        self.known(Sort::Bool)
                    }
                    BinaryOp::Add | BinaryOp::Subtract | BinaryOp::Multiply => {
                        let lt = self.constrain(lt, Sort::Int, &lp)?;
                        let rt = self.constrain(rt, Sort::Int, &rp)?;
                        self.unify_terms(lt, rt, &path)?
                    }
                    BinaryOp::Divide => {
                        let lt = self.constrain(lt, Sort::Int, &lp)?;
                        let rt = self.constrain(rt, Sort::Int, &rp)?;
                        self.unify_terms(lt, rt, &path)?;
                        self.known(Sort::Real)
                    }
                    BinaryOp::Modulo => {
                        let lt = self.constrain(lt, Sort::Int, &lp)?;
                        let rt = self.constrain(rt, Sort::Int, &rp)?;
                        let t = self.unify_terms(lt, rt, &path)?;
                        self.deferred
                            .push(Deferred::IntOnly(t, path.clone(), "Modulo"));
                        t
                    }
                    BinaryOp::Equal | BinaryOp::NotEqual => {
                        self.unify_terms(lt, rt, &path)?;
                        self.known(Sort::Bool)
                    }
                    BinaryOp::Greater
                    | BinaryOp::GreaterOrEqual
                    | BinaryOp::Less
                    | BinaryOp::LessOrEqual => {
                        let t = self.unify_terms(lt, rt, &path)?;
                        self.deferred.push(Deferred::Ordered(t, path.clone()));
                        self.known(Sort::Bool)
                    }
                    BinaryOp::StartsWith | BinaryOp::EndsWith => {
                        self.constrain(lt, Sort::Str, &lp)?;
                        self.constrain(rt, Sort::Str, &rp)?;
                        self.known(Sort::Bool)
                    }
                    BinaryOp::DifferenceBetween(_) => {
                        self.constrain(lt, Sort::Timestamp, &lp)?;
                        self.constrain(rt, Sort::Timestamp, &rp)?;
                        self.known(Sort::Int)
                    }
                }
            }
            ElmExpression::Nary { op, args, .. } => match op {
                NaryOp::And | NaryOp::Or => {
                    for a in args {
                        let t = self.infer_node(a)?;
                        self.constrain(t, Sort::Bool, a.source_path())?;
                    }
                    self.known(Sort::Bool)
                }
                NaryOp::Concatenate => {
                    for a in args {
                        let t = self.infer_node(a)?;
                        self.constrain(t, Sort::Str, a.source_path())?;
                    }
                    self.known(Sort::Str)
                }
            },
            ElmExpression::IntervalTest {
                value, low, high, ..
            } => {
                let vt = self.infer_node(value)?;
                let lt = self.infer_node(low)?;
                let ht = self.infer_node(high)?;
                let t = self.unify_terms(vt, lt, &path)?;
                let t = self.unify_terms(t, ht, &path)?;
                self.deferred.push(Deferred::Ordered(t, path.clone()));
                self.known(Sort::Bool)
            }
        };
        self.nodes.push((path, term));
        Ok(term)
    }

    /// Resolves a term to its ground sort; unconstrained variables
    /// default to Int.
    fn resolve(&mut self, term: Term) -> Sort {
        match term {
            Term::Known(i) => self.grounds[i].clone(),
            Term::Var(v) => {
                let root = self.find(v);
                self.binding[root].clone().unwrap_or(Sort::Int)
            }
        }
    }

    fn check_deferred(&mut self) -> Result<(), SortError> {
        let deferred = std::mem::take(&mut self.deferred);
        for d in deferred {
            match d {
                Deferred::Ordered(t, path) => {
                    let sort = self.resolve(t);
                    if !matches!(sort, Sort::Int | Sort::Real | Sort::Timestamp) {
                        return Err(SortError::SortConflict {
                            first: sort,
                            second: Sort::Int,
                            first_path: path.clone(),
                            second_path: path,
                        });
                    }
                }
                Deferred::IntOnly(t, path, _op) => {
                    let sort = self.resolve(t);
                    if sort != Sort::Int {
                        return Err(SortError::SortConflict {
                            first: sort,
                            second: Sort::Int,
                            first_path: path.clone(),
                            second_path: path,
                        });
                    }
                }
                Deferred::ListOf(t, path) => match t {
                    Term::Known(i) => {
                        let sort = self.grounds[i].clone();
                        if !matches!(sort, Sort::List(_)) {
                            return Err(SortError::SortConflict {
                                first: sort,
                                second: Sort::List(Box::new(Sort::Int)),
                                first_path: path.clone(),
                                second_path: path,
                            });
                        }
                    }
                    Term::Var(v) => {
                        let root = self.find(v);
                        match self.binding[root].clone() {
                            Some(Sort::List(_)) => {}
                            Some(other) => {
                                return Err(SortError::SortConflict {
                                    first: other,
                                    second: Sort::List(Box::new(Sort::Int)),
                                    first_path: self.origin[root].clone(),
                                    second_path: path,
                                })
                            }
                            // No evidence for the element sort; default it.
                            None => {
                                self.binding[root] = Some(Sort::List(Box::new(Sort::Int)));
                                self.origin[root] = path;
                            }
                        }
                    }
                },
            }
        }
        Ok(())
    }

    fn finish(mut self) -> SortEnv {
        let mut env = SortEnv::default();
        // Declared symbols keep document order; the declaration list is
        // already recorded in first-use order, so re-rank by env order.
        let mut declared = self.declared_used.clone();
        declared.sort_by_key(|n| {
            self.env
                .iter()
                .position(|(en, _)| en == n)
                .unwrap_or(usize::MAX)
        });
        let undeclared = self.undeclared_used.clone();
        for name in declared.into_iter().chain(undeclared) {
            let term = self.symbol_terms[&name];
            let sort = self.resolve(term);
            env.symbol_order.push(name.clone());
            env.symbols.insert(name, sort);
        }
        let node_list = std::mem::take(&mut self.nodes);
        for (path, term) in node_list {
            let sort = self.resolve(term);
            env.node_sorts.insert(path, sort);
        }
        // Uninterpreted sorts in first-occurrence order: symbols first
        // (document order), then any remaining node-level occurrences.
        let mut seen = Vec::new();
        for name in &env.symbol_order {
            collect_uninterpreted(&env.symbols[name], &mut seen);
        }
        for sort in env.node_sorts.values() {
            collect_uninterpreted(sort, &mut seen);
        }
        env.uninterpreted_sorts = seen;
        env
    }
}

fn collect_uninterpreted(sort: &Sort, out: &mut Vec<String>) {
    match sort {
        Sort::Uninterpreted(n) => {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        Sort::List(e) | Sort::Option(e) => collect_uninterpreted(e, out),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elm::parse_prefix;
    use crate::ingest::{Cardinality, SymbolDecl};

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

    #[test]
    fn infers_the_running_example() {
        let ast = parse_prefix(
            "(and (>= PatientAgeInYears 18) (not (exists AdverseReactionToACEInhibitors)))",
        )
        .unwrap();
        let sorts = infer_sorts(&ast, &os_env()).unwrap();
        assert_eq!(sorts.symbols["PatientAgeInYears"], Sort::Int);
        assert_eq!(
            sorts.symbols["AdverseReactionToACEInhibitors"],
            Sort::List(Box::new(Sort::Uninterpreted("AdverseEvent".into())))
        );
        assert_eq!(sorts.node_sorts[ast.source_path()], Sort::Bool);
        assert_eq!(sorts.uninterpreted_sorts, ["AdverseEvent"]);
        // Declared symbols keep document order even though the age symbol
        // is referenced first.
        assert_eq!(
            sorts.symbol_order,
            ["AdverseReactionToACEInhibitors", "PatientAgeInYears"]
        );
    }

    #[test]
    fn boolean_literal_with_empty_env() {
        let ast = parse_prefix("true").unwrap();
        let sorts = infer_sorts(&ast, &SymbolEnv::default()).unwrap();
        assert!(sorts.symbols.is_empty());
        assert_eq!(sorts.node_sorts[ast.source_path()], Sort::Bool);
    }

    #[test]
    fn conflicting_uses_of_one_symbol_are_reported_with_both_paths() {
        let ast = parse_prefix("(and x (> x 3))").unwrap();
        match infer_sorts(&ast, &SymbolEnv::default()) {
            Err(SortError::SortConflict {
                first,
                second,
                first_path,
                second_path,
            }) => {
                assert_eq!(first, Sort::Bool);
                assert_eq!(second, Sort::Int);
                assert_ne!(first_path, second_path);
            }
            other => panic!("expected SortConflict, got {other:?}"),
        }
    }

    #[test]
    fn unify_follows_the_promotion_lattice() {
        assert_eq!(unify(&Sort::Int, &Sort::Real).unwrap(), Sort::Real);
        assert_eq!(unify(&Sort::Bool, &Sort::Bool).unwrap(), Sort::Bool);
        assert!(unify(
            &Sort::List(Box::new(Sort::Uninterpreted("A".into()))),
            &Sort::List(Box::new(Sort::Uninterpreted("B".into())))
        )
        .is_err());
        // Timestamps share the integer carrier but never unify with Int.
        assert!(unify(&Sort::Timestamp, &Sort::Int).is_err());
    }

    #[test]
    fn non_boolean_root_is_rejected() {
        let ast = parse_prefix("(+ x 1)").unwrap();
        assert!(matches!(
            infer_sorts(&ast, &SymbolEnv::default()),
            Err(SortError::NonBooleanCondition {
                found: Sort::Int,
                ..
            })
        ));
    }

    #[test]
    fn literal_comparison_defaults_symbols_to_int() {
        let ast = parse_prefix("(= x y)").unwrap();
        let sorts = infer_sorts(&ast, &SymbolEnv::default()).unwrap();
        assert_eq!(sorts.symbols["x"], Sort::Int);
        assert_eq!(sorts.symbols["y"], Sort::Int);
    }

    #[test]
    fn real_evidence_promotes_across_a_shared_variable() {
        // y is tied to x by equality, and x is forced Real by division.
        let ast = parse_prefix("(and (= x y) (> (/ x 2) 1) (< y 10))").unwrap();
        let sorts = infer_sorts(&ast, &SymbolEnv::default()).unwrap();
        assert_eq!(sorts.symbols["x"], Sort::Int);
        assert_eq!(sorts.symbols["y"], Sort::Int);
        // Division itself is Real regardless of operand promotion.
        let div_path = sorts
            .node_sorts
            .iter()
            .find(|(p, _)| p.ends_with("$/1/0"))
            .map(|(_, s)| s.clone());
        assert_eq!(div_path, Some(Sort::Real));
    }

    #[test]
    fn decimal_literal_promotes_symbol_to_real() {
        let ast = parse_prefix("(> x 5/2)").unwrap();
        let sorts = infer_sorts(&ast, &SymbolEnv::default()).unwrap();
        assert_eq!(sorts.symbols["x"], Sort::Real);
    }

    #[test]
    fn modulo_over_real_is_a_conflict() {
        let ast = parse_prefix("(= 1 (mod x 5/2))").unwrap();
        assert!(matches!(
            infer_sorts(&ast, &SymbolEnv::default()),
            Err(SortError::SortConflict { .. })
        ));
    }

    #[test]
    fn timestamp_comparisons_are_ordered() {
        let ast = parse_prefix("(and (< t1 t2) (> (diff-years t1 t2) 5))").unwrap();
        let mut env = SymbolEnv::default();
        for name in ["t1", "t2"] {
            env.insert(
                name,
                SymbolDecl {
                    value_type_name: "DateTime".into(),
                    cardinality: Cardinality::Single,
                },
            )
            .unwrap();
        }
        let sorts = infer_sorts(&ast, &env).unwrap();
        assert_eq!(sorts.symbols["t1"], Sort::Timestamp);
        assert_eq!(sorts.symbols["t2"], Sort::Timestamp);
    }

    #[test]
    fn value_type_names_are_sanitized() {
        let ast = parse_prefix("(exists xs)").unwrap();
        let mut env = SymbolEnv::default();
        env.insert(
            "xs",
            SymbolDecl {
                value_type_name: "vmr.Adverse-Event/2".into(),
                cardinality: Cardinality::List,
            },
        )
        .unwrap();
        let sorts = infer_sorts(&ast, &env).unwrap();
        assert_eq!(sorts.uninterpreted_sorts, ["vmr_Adverse_Event_2"]);
    }

    #[test]
    fn sanitized_name_collisions_get_suffixes() {
        // Two distinct raw type names that sanitize to the same base.
        let ast = parse_prefix("(and (exists xs) (exists ys))").unwrap();
        let mut env = SymbolEnv::default();
        for (sym, raw) in [("xs", "Adverse-Event"), ("ys", "Adverse_Event")] {
            env.insert(
                sym,
                SymbolDecl {
                    value_type_name: raw.into(),
                    cardinality: Cardinality::List,
                },
            )
            .unwrap();
        }
        let sorts = infer_sorts(&ast, &env).unwrap();
        assert_eq!(
            sorts.uninterpreted_sorts,
            ["Adverse_Event", "Adverse_Event_2"]
        );
        // A leading non-letter gains a prefix to stay a valid identifier.
        let ast = parse_prefix("(exists zs)").unwrap();
        let mut env = SymbolEnv::default();
        env.insert(
            "zs",
            SymbolDecl {
                value_type_name: "2ndOpinion".into(),
                cardinality: Cardinality::List,
            },
        )
        .unwrap();
        let sorts = infer_sorts(&ast, &env).unwrap();
        assert_eq!(sorts.uninterpreted_sorts, ["T2ndOpinion"]);
    }

    #[test]
    fn every_symbol_ref_gets_a_sort() {
        let ast = parse_prefix("(or (> a b) (and p (= c 3)) (exists xs))").unwrap();
        let mut env = SymbolEnv::default();
        env.insert(
            "xs",
            SymbolDecl {
                value_type_name: "Event".into(),
                cardinality: Cardinality::List,
            },
        )
        .unwrap();
        let sorts = infer_sorts(&ast, &env).unwrap();
        for name in ast.referenced_symbols() {
            assert!(sorts.symbols.contains_key(name), "missing {name}");
        }
        // Every node has a sort too.
        let mut stack = vec![&ast];
        while let Some(e) = stack.pop() {
            assert!(sorts.node_sorts.contains_key(e.source_path()));
            stack.extend(e.children());
        }
    }

    #[test]
    fn shared_inference_keeps_conditions_consistent() {
        let a = parse_prefix("(> x 3)").unwrap();
        let b = parse_prefix("(< x 2/1)").unwrap();
        // Distinct roots so node paths do not collide.
        let b = match b {
            ElmExpression::Binary { op, lhs, rhs, .. } => ElmExpression::Binary {
                op,
                lhs,
                rhs,
                source_path: "$b".into(),
            },
            _ => unreachable!(),
        };
        let sorts = infer_sorts_many(&[a, b], &SymbolEnv::default()).unwrap();
        assert_eq!(sorts.symbols["x"], Sort::Real);
    }

    proptest::proptest! {
        #[test]
        fn unify_is_commutative_and_idempotent(i in 0usize..6, j in 0usize..6) {
            let sorts = [
                Sort::Bool,
                Sort::Int,
                Sort::Real,
                Sort::Str,
                Sort::Timestamp,
                Sort::List(Box::new(Sort::Int)),
            ];
            let (a, b) = (&sorts[i], &sorts[j]);
            let ab = unify(a, b).ok();
            let ba = unify(b, a).ok();
            proptest::prop_assert_eq!(ab, ba);
            proptest::prop_assert_eq!(unify(a, a).unwrap(), a.clone());
        }
    }
}
