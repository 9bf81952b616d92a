//! The whole verification chain for one artifact, with phase timings:
//! prep (load + extract), translate (infer + codegen + render), solve
//! (solver wall time).
//!
//! Degenerate inputs never abort the run; they produce reports carrying
//! ParseError / UnsupportedConstruct findings and the matching status.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::codegen::{
    self, build_script, render, CodegenError, EmissionMode, SmtScript, SortedCondition,
    SpecConstraint,
};
use crate::elm::{self, count_metrics, ElmExpression, Metrics};
use crate::ingest::{self, IngestError, KnowledgeArtifact};
use crate::report::{
    build_report, ArtifactStatus, Finding, FindingSeverity, Timings, VerificationReport,
    REPORT_SCHEMA,
};
use crate::solver::{self, SolverConfig, SolverStatus, SolverVerdict};
use crate::sorts::{infer_sorts_many, SortError};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub mode: EmissionMode,
    /// One script per condition instead of one joint script per artifact.
    pub per_condition: bool,
    pub want_cores: bool,
    pub spec_constraints: Vec<SpecConstraint>,
    pub set_logic: Option<String>,
    pub solver: SolverConfig,
    /// Skip the solver entirely (emit-only runs).
    pub skip_solve: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mode: EmissionMode::default(),
            per_condition: false,
            want_cores: true,
            spec_constraints: Vec::new(),
            set_logic: None,
            solver: SolverConfig::default(),
            skip_solve: false,
        }
    }
}

/// Result of verifying one artifact: the report plus every rendered
/// script (file name stem → text) for `--emit-smt`.
#[derive(Debug, Clone)]
pub struct VerifiedArtifact {
    pub report: VerificationReport,
    pub scripts: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

/// Verifies a document given as bytes. `stem` names emitted scripts.
pub fn verify_bytes(stem: &str, bytes: &[u8], opts: &PipelineOptions) -> VerifiedArtifact {
    let prep_started = Instant::now();
    let artifact = match ingest::load_artifact(bytes) {
        Ok(a) => a,
        Err(e) => return ingest_failure(stem, e, prep_started),
    };
    let env = match ingest::extract_symbol_env(&artifact) {
        Ok(env) => env,
        Err(e) => return ingest_failure_with_artifact(&artifact, e, prep_started),
    };
    let prep_ms = ms_since(prep_started);
    let mut warnings = artifact.warnings.clone();

    // Parse conditions; metrics additionally count the named expression
    // definitions (definitions outside the translatable subset count
    // toward expr totals but contribute no operator nodes).
    let mut condition_exprs: Vec<(usize, ElmExpression)> = Vec::new();
    let mut parse_findings: Vec<Finding> = Vec::new();
    for (i, cond) in artifact.conditions.iter().enumerate() {
        match elm::parse_elm(&cond.raw_expression) {
            Ok(expr) => condition_exprs.push((i, expr)),
            Err(e) => parse_findings.push(parse_error_finding(&artifact, &e)),
        }
    }
    let mut metric_exprs: Vec<ElmExpression> = Vec::new();
    for def in &artifact.expressions {
        match &def.raw_expression {
            Some(raw) => match elm::parse_elm(raw) {
                Ok(expr) => metric_exprs.push(expr),
                Err(_) => {
                    warnings.push(format!(
                        "expression def `{}` is outside the translatable subset; \
                         it counts toward Expr but not Oper",
                        def.name
                    ));
                    metric_exprs.push(placeholder_expr(&def.source_path));
                }
            },
            None => metric_exprs.push(placeholder_expr(&def.source_path)),
        }
    }
    let def_count = metric_exprs.len();
    for (_, expr) in &condition_exprs {
        metric_exprs.push(expr.clone());
    }
    let mut metrics = count_metrics(&metric_exprs);
    // Placeholders for untypeable defs added one leaf each; expr_count
    // already includes them, oper_count is unaffected.
    metrics.expr_count = (def_count + artifact.conditions.len()) as u64;

    if !parse_findings.is_empty() {
        return VerifiedArtifact {
            report: failure_report(
                &artifact,
                metrics,
                ArtifactStatus::Untranslatable,
                parse_findings,
                Timings {
                    prep_ms,
                    ..Timings::default()
                },
            ),
            scripts: Vec::new(),
            warnings,
        };
    }

    // Translate.
    let translate_started = Instant::now();
    let exprs: Vec<ElmExpression> = condition_exprs.iter().map(|(_, e)| e.clone()).collect();
    let sorts = match infer_sorts_many(&exprs, &env) {
        Ok(s) => s,
        Err(e) => {
            return VerifiedArtifact {
                report: failure_report(
                    &artifact,
                    metrics,
                    ArtifactStatus::Untranslatable,
                    vec![sort_error_finding(&artifact, &e)],
                    Timings {
                        prep_ms,
                        translate_ms: ms_since(translate_started),
                        ..Timings::default()
                    },
                ),
                scripts: Vec::new(),
                warnings,
            }
        }
    };
    let sorted: Vec<SortedCondition> = condition_exprs
        .iter()
        .map(|(i, expr)| SortedCondition {
            id: artifact.conditions[*i].id.clone(),
            source_path: artifact.conditions[*i].source_path.clone(),
            expr: expr.clone(),
            sorts: sorts.clone(),
        })
        .collect();

    let script_groups: Vec<(String, Vec<SortedCondition>)> = if opts.per_condition {
        sorted
            .iter()
            .map(|c| (format!("{stem}.{}", c.id), vec![c.clone()]))
            .collect()
    } else {
        vec![(stem.to_string(), sorted)]
    };

    let mut scripts: Vec<(String, SmtScript)> = Vec::new();
    for (name, conds) in &script_groups {
        match build_script(conds, &opts.spec_constraints, opts.mode, opts.want_cores) {
            Ok(mut script) => {
                if let Some(logic) = &opts.set_logic {
                    script = script.with_logic(logic);
                }
                scripts.push((name.clone(), script));
            }
            Err(e) => {
                return VerifiedArtifact {
                    report: failure_report(
                        &artifact,
                        metrics,
                        ArtifactStatus::Untranslatable,
                        vec![codegen_error_finding(&artifact, &e)],
                        Timings {
                            prep_ms,
                            translate_ms: ms_since(translate_started),
                            ..Timings::default()
                        },
                    ),
                    scripts: Vec::new(),
                    warnings,
                }
            }
        }
    }
    let rendered: Vec<(String, String)> = scripts
        .iter()
        .map(|(name, s)| (format!("{name}.smt2"), render(s)))
        .collect();
    let translate_ms = ms_since(translate_started);

    // Solve. A script with no assertions is vacuously satisfiable and
    // skips the solver.
    let mut worst: Option<SolverVerdict> = None;
    let mut findings: Vec<Finding> = Vec::new();
    let mut solve_ms = 0u64;
    if !opts.skip_solve {
        for (_, script) in &scripts {
            let has_assertions = script
                .commands
                .iter()
                .any(|c| matches!(c, codegen::SmtCommand::Assert { .. }));
            if !has_assertions {
                continue;
            }
            match solver::check(script, &opts.solver) {
                Ok(verdict) => {
                    solve_ms += verdict.solve_ms;
                    if verdict.core.is_some() {
                        let single =
                            build_report(&artifact, metrics, script, &verdict, Timings::default());
                        findings.extend(single.findings);
                    }
                    worst = Some(match worst.take() {
                        None => verdict,
                        Some(prev) => worse_verdict(prev, verdict),
                    });
                }
                Err(e) => {
                    return VerifiedArtifact {
                        report: failure_report(
                            &artifact,
                            metrics,
                            ArtifactStatus::Error,
                            vec![Finding {
                                assertion_name: String::new(),
                                condition_id: String::new(),
                                source_path: String::new(),
                                rendered_term: String::new(),
                                severity: FindingSeverity::ParseError,
                                detail: e.to_string(),
                            }],
                            Timings {
                                prep_ms,
                                translate_ms,
                                solve_ms,
                            },
                        ),
                        scripts: rendered,
                        warnings,
                    }
                }
            }
        }
    }

    let timings = Timings {
        prep_ms,
        translate_ms,
        solve_ms,
    };
    let report = match worst {
        Some(verdict) => {
            // Rebuild against the first script for status/error fields,
            // then attach the findings gathered across all scripts.
            let mut report = build_report(&artifact, metrics, &scripts[0].1, &verdict, timings);
            report.findings = findings;
            report
        }
        None => VerificationReport {
            schema: REPORT_SCHEMA.into(),
            artifact_id: artifact.id.clone(),
            artifact_kind: artifact.kind.name().into(),
            metrics,
            prep_ms: timings.prep_ms,
            translate_ms: timings.translate_ms,
            solve_ms: timings.solve_ms,
            status: ArtifactStatus::Sat,
            error: None,
            model: None,
            findings: Vec::new(),
        },
    };
    VerifiedArtifact {
        report,
        scripts: rendered,
        warnings,
    }
}

/// Verifies one file; I/O failures become error reports.
pub fn verify_file(path: &Path, opts: &PipelineOptions) -> VerifiedArtifact {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    match std::fs::read(path) {
        Ok(bytes) => verify_bytes(&stem, &bytes, opts),
        Err(e) => VerifiedArtifact {
            report: VerificationReport {
                schema: REPORT_SCHEMA.into(),
                artifact_id: stem,
                artifact_kind: "unknown".into(),
                metrics: Metrics {
                    expr_count: 0,
                    oper_count: 0,
                },
                prep_ms: 0,
                translate_ms: 0,
                solve_ms: 0,
                status: ArtifactStatus::Error,
                error: Some(format!("cannot read {}: {e}", path.display())),
                model: None,
                findings: Vec::new(),
            },
            scripts: Vec::new(),
            warnings: Vec::new(),
        },
    }
}

/// Writes emitted scripts into a directory, creating it if needed.
pub fn write_scripts(dir: &Path, scripts: &[(String, String)]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (name, text) in scripts {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        out.push(path);
    }
    Ok(out)
}

fn ms_since(at: Instant) -> u64 {
    at.elapsed().as_millis() as u64
}

fn worse_verdict(a: SolverVerdict, b: SolverVerdict) -> SolverVerdict {
    let rank = |s: SolverStatus| match s {
        SolverStatus::Sat => 0,
        SolverStatus::Unsat => 1,
        SolverStatus::Unknown => 2,
        SolverStatus::Timeout => 3,
        SolverStatus::SolverError => 4,
    };
    if rank(b.status) > rank(a.status) {
        b
    } else {
        a
    }
}

/// A leaf standing in for a definition body outside the parseable
/// subset: contributes to expression counts, never to operator counts.
fn placeholder_expr(path: &str) -> ElmExpression {
    ElmExpression::Literal {
        value: crate::elm::Value::Bool(true),
        source_path: path.to_string(),
    }
}

fn ingest_failure(stem: &str, e: IngestError, prep_started: Instant) -> VerifiedArtifact {
    let (status, finding) = ingest_error_parts(&e);
    VerifiedArtifact {
        report: VerificationReport {
            schema: REPORT_SCHEMA.into(),
            artifact_id: stem.to_string(),
            artifact_kind: "unknown".into(),
            metrics: Metrics {
                expr_count: 0,
                oper_count: 0,
            },
            prep_ms: ms_since(prep_started),
            translate_ms: 0,
            solve_ms: 0,
            status,
            error: matches!(status, ArtifactStatus::Error).then(|| e.to_string()),
            model: None,
            findings: vec![finding],
        },
        scripts: Vec::new(),
        warnings: Vec::new(),
    }
}

fn ingest_failure_with_artifact(
    artifact: &KnowledgeArtifact,
    e: IngestError,
    prep_started: Instant,
) -> VerifiedArtifact {
    let (status, finding) = ingest_error_parts(&e);
    VerifiedArtifact {
        report: failure_report(
            artifact,
            Metrics {
                expr_count: 0,
                oper_count: 0,
            },
            status,
            vec![finding],
            Timings {
                prep_ms: ms_since(prep_started),
                ..Timings::default()
            },
        ),
        scripts: Vec::new(),
        warnings: artifact.warnings.clone(),
    }
}

/// Unreadable documents are I/O-grade errors; in-document defects leave
/// the artifact readable but untranslatable.
fn ingest_error_parts(e: &IngestError) -> (ArtifactStatus, Finding) {
    let status = match e {
        IngestError::MalformedXml { .. } | IngestError::UnrecognizedRoot { .. } => {
            ArtifactStatus::Error
        }
        IngestError::SchemaViolation { .. } | IngestError::DuplicateSymbol { .. } => {
            ArtifactStatus::Untranslatable
        }
    };
    let source_path = match e {
        IngestError::SchemaViolation { path, .. } => path.clone(),
        _ => String::new(),
    };
    (
        status,
        Finding {
            assertion_name: String::new(),
            condition_id: String::new(),
            source_path,
            rendered_term: String::new(),
            severity: FindingSeverity::ParseError,
            detail: e.to_string(),
        },
    )
}

fn parse_error_finding(artifact: &KnowledgeArtifact, e: &elm::ElmParseError) -> Finding {
    let source_path = match e {
        elm::ElmParseError::UnknownOperator { source_path, .. }
        | elm::ElmParseError::ArityMismatch { source_path, .. }
        | elm::ElmParseError::BadNode { source_path, .. } => source_path.clone(),
    };
    Finding {
        assertion_name: String::new(),
        condition_id: owning_condition(artifact, &source_path),
        source_path,
        rendered_term: String::new(),
        severity: FindingSeverity::ParseError,
        detail: e.to_string(),
    }
}

fn sort_error_finding(artifact: &KnowledgeArtifact, e: &SortError) -> Finding {
    let source_path = match e {
        SortError::SortConflict { first_path, .. } => first_path.clone(),
        SortError::NonBooleanCondition { source_path, .. } => source_path.clone(),
    };
    Finding {
        assertion_name: String::new(),
        condition_id: owning_condition(artifact, &source_path),
        source_path,
        rendered_term: String::new(),
        severity: FindingSeverity::ParseError,
        detail: e.to_string(),
    }
}

fn codegen_error_finding(artifact: &KnowledgeArtifact, e: &CodegenError) -> Finding {
    let (severity, source_path) = match e {
        CodegenError::UnsupportedOperator { source_path, .. } => {
            (FindingSeverity::UnsupportedConstruct, source_path.clone())
        }
        CodegenError::UndeclaredSymbol { source_path, .. }
        | CodegenError::TypeMismatch { source_path, .. } => {
            (FindingSeverity::ParseError, source_path.clone())
        }
        _ => (FindingSeverity::ParseError, String::new()),
    };
    Finding {
        assertion_name: String::new(),
        condition_id: owning_condition(artifact, &source_path),
        source_path,
        rendered_term: String::new(),
        severity,
        detail: e.to_string(),
    }
}

/// Maps a node path back to the condition whose subtree contains it.
fn owning_condition(artifact: &KnowledgeArtifact, node_path: &str) -> String {
    artifact
        .conditions
        .iter()
        .find(|c| node_path.starts_with(&c.source_path))
        .map(|c| c.id.clone())
        .unwrap_or_default()
}

fn failure_report(
    artifact: &KnowledgeArtifact,
    metrics: Metrics,
    status: ArtifactStatus,
    findings: Vec<Finding>,
    timings: Timings,
) -> VerificationReport {
    VerificationReport {
        schema: REPORT_SCHEMA.into(),
        artifact_id: artifact.id.clone(),
        artifact_kind: artifact.kind.name().into(),
        metrics,
        prep_ms: timings.prep_ms,
        translate_ms: timings.translate_ms,
        solve_ms: timings.solve_ms,
        status,
        error: None,
        model: None,
        findings,
    }
}
