//! Consistency checking for the expression logic embedded in HL7 KNART
//! clinical knowledge artifacts.
//!
//! The pipeline ingests a KNART XML document, parses the ELM condition
//! logic into an AST, infers an SMT sort for every symbol, emits an
//! SMT-LIB v2 script with one named assertion per condition, runs an
//! external solver over it, and maps the verdict — a satisfying model or
//! an unsat core — back to the source document.
//!
//! Stages are exposed as independent modules so they can be driven
//! separately:
//!
//! - [`ingest`]: KNART XML → [`ingest::KnowledgeArtifact`]
//! - [`elm`]: condition subtrees → [`elm::ElmExpression`], plus a ground
//!   evaluator used as a testing oracle
//! - [`sorts`]: symbol/node sort inference
//! - [`codegen`]: sorted conditions → [`codegen::SmtScript`]
//! - [`solver`]: child-process SMT solver driver
//! - [`report`]: verdicts → renderable verification reports
//! - [`pipeline`]: the whole chain, with phase timings
//! - [`cli`]: the `knart-verify` command-line front end

pub mod cli;
pub mod codegen;
pub mod elm;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod solver;
pub mod sorts;
pub mod xml;

pub use codegen::{EmissionMode, SmtScript, SpecConstraint};
pub use elm::{ElmExpression, Metrics, Value};
pub use ingest::{ArtifactKind, KnowledgeArtifact, SymbolEnv};
pub use report::{Finding, VerificationReport};
pub use solver::{SolverConfig, SolverVerdict};
pub use sorts::{Sort, SortEnv};
