//! Verification reports: per-artifact verdicts, Table-1-style metrics
//! and phase timings, findings mapped back to source logic, and the
//! text/JSON renderers.

use serde::{Deserialize, Serialize};

use crate::codegen::{AssertionTarget, SmtCommand, SmtScript};
use crate::elm::Metrics;
use crate::ingest::KnowledgeArtifact;
use crate::solver::{SolverStatus, SolverVerdict};

/// Overall verdict for one artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactStatus {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    Untranslatable,
    Error,
}

impl ArtifactStatus {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactStatus::Sat => "sat",
            ArtifactStatus::Unsat => "unsat",
            ArtifactStatus::Unknown => "unknown",
            ArtifactStatus::Timeout => "timeout",
            ArtifactStatus::Untranslatable => "untranslatable",
            ArtifactStatus::Error => "error",
        }
    }

    /// Exit-code rank: errors dominate unsupported/unknown states, which
    /// dominate unsat, which dominates sat.
    pub fn exit_rank(self) -> i32 {
        match self {
            ArtifactStatus::Sat => 0,
            ArtifactStatus::Unsat => 1,
            ArtifactStatus::Unknown | ArtifactStatus::Timeout | ArtifactStatus::Untranslatable => 2,
            ArtifactStatus::Error => 3,
        }
    }
}

/// Exit code for a batch: the worst per-artifact rank.
pub fn exit_code(statuses: impl IntoIterator<Item = ArtifactStatus>) -> i32 {
    statuses
        .into_iter()
        .map(ArtifactStatus::exit_rank)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingSeverity {
    UnsatCondition,
    SpecViolation,
    UnsupportedConstruct,
    ParseError,
}

/// One diagnosable fact tied back to the source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(rename = "assertion")]
    pub assertion_name: String,
    pub condition_id: String,
    pub source_path: String,
    #[serde(rename = "term")]
    pub rendered_term: String,
    pub severity: FindingSeverity,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

pub const REPORT_SCHEMA: &str = "knart-verify/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub artifact_id: String,
    pub artifact_kind: String,
    pub metrics: Metrics,
    pub prep_ms: u64,
    pub translate_ms: u64,
    pub solve_ms: u64,
    pub status: ArtifactStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Witnessing assignment when satisfiable: symbol → solver term text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<std::collections::BTreeMap<String, String>>,
    pub findings: Vec<Finding>,
}

/// Phase wall times, following the three-phase convention: prep is
/// load+extract, translate is infer+codegen+render, solve is solver
/// time. Prep here covers subset parsing only and is orders of magnitude
/// below timings that include full schema validation, so it is not
/// comparable across tools.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    pub prep_ms: u64,
    pub translate_ms: u64,
    pub solve_ms: u64,
}

/// Builds the report for a solver-checked artifact: unsat-core assertion
/// names are resolved through the script's assertion index to condition
/// ids and source paths; specification constraint names classify as
/// spec violations.
pub fn build_report(
    artifact: &KnowledgeArtifact,
    metrics: Metrics,
    script: &SmtScript,
    verdict: &SolverVerdict,
    timings: Timings,
) -> VerificationReport {
    let status = match verdict.status {
        SolverStatus::Sat => ArtifactStatus::Sat,
        SolverStatus::Unsat => ArtifactStatus::Unsat,
        SolverStatus::Unknown => ArtifactStatus::Unknown,
        SolverStatus::Timeout => ArtifactStatus::Timeout,
        SolverStatus::SolverError => ArtifactStatus::Error,
    };
    let mut findings = Vec::new();
    if let Some(core) = &verdict.core {
        for name in core {
            findings.push(core_finding(script, name));
        }
    }
    VerificationReport {
        schema: REPORT_SCHEMA.into(),
        artifact_id: artifact.id.clone(),
        artifact_kind: artifact.kind.name().into(),
        metrics,
        prep_ms: timings.prep_ms,
        translate_ms: timings.translate_ms,
        solve_ms: timings.solve_ms,
        status,
        error: verdict.error_message.clone(),
        // Named assertions show up in solver models as tracking
        // literals; only declared constants belong in the witness, keyed
        // by their source names.
        model: verdict.model.as_ref().map(|m| {
            m.bindings
                .iter()
                .filter(|(name, _)| !script.assertion_index.contains_key(*name))
                .map(|(k, v)| {
                    let source = script.symbol_names.get(k).unwrap_or(k);
                    (source.clone(), v.clone())
                })
                .collect()
        }),
        findings,
    }
}

fn core_finding(script: &SmtScript, assertion_name: &str) -> Finding {
    let rendered_term = script
        .commands
        .iter()
        .find_map(|c| match c {
            SmtCommand::Assert {
                term,
                name: Some(n),
            } if n == assertion_name => Some(term.clone()),
            _ => None,
        })
        .unwrap_or_default();
    match script.assertion_index.get(assertion_name) {
        Some(AssertionTarget::Condition {
            condition_id,
            source_path,
        }) => Finding {
            assertion_name: assertion_name.to_string(),
            condition_id: condition_id.clone(),
            source_path: source_path.clone(),
            rendered_term,
            severity: FindingSeverity::UnsatCondition,
            detail: String::new(),
        },
        Some(AssertionTarget::Constraint { name }) => Finding {
            assertion_name: assertion_name.to_string(),
            condition_id: name.clone(),
            source_path: format!("spec:{name}"),
            rendered_term,
            severity: FindingSeverity::SpecViolation,
            detail: String::new(),
        },
        None => Finding {
            assertion_name: assertion_name.to_string(),
            condition_id: String::new(),
            source_path: String::new(),
            rendered_term,
            severity: FindingSeverity::UnsatCondition,
            detail: "assertion name not in the script index".into(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

/// Renders one report. Text echoes the Expr/Oper/Prep/Tran/Solv columns;
/// JSON follows the `knart-verify/1` schema and is deterministic.
pub fn render_report(report: &VerificationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Text => {
            let mut out = String::new();
            out.push_str(&table_header());
            out.push_str(&table_row(report));
            if let Some(line) = model_line(report) {
                out.push_str(&line);
            }
            for f in &report.findings {
                out.push_str(&finding_line(f));
            }
            if let Some(e) = &report.error {
                out.push_str(&format!("    solver error: {e}\n"));
            }
            out
        }
    }
}

pub fn table_header() -> String {
    format!(
        "{:<28} {:<22} {:>6} {:>6} {:>6} {:>6} {:>6}  {}\n",
        "KA", "Kind", "Expr", "Oper", "Prep", "Tran", "Solv", "Status"
    )
}

pub fn table_row(report: &VerificationReport) -> String {
    format!(
        "{:<28} {:<22} {:>6} {:>6} {:>6} {:>6} {:>6}  {}\n",
        clip(&report.artifact_id, 28),
        report.artifact_kind,
        report.metrics.expr_count,
        report.metrics.oper_count,
        report.prep_ms,
        report.translate_ms,
        report.solve_ms,
        report.status.name()
    )
}

/// One-line witness rendering for satisfiable artifacts.
pub fn model_line(report: &VerificationReport) -> Option<String> {
    let model = report.model.as_ref()?;
    if model.is_empty() {
        return None;
    }
    let pairs: Vec<String> = model.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    Some(format!("    witness: {}\n", pairs.join(", ")))
}

pub fn finding_line(f: &Finding) -> String {
    let severity = match f.severity {
        FindingSeverity::UnsatCondition => "unsat condition",
        FindingSeverity::SpecViolation => "spec violation",
        FindingSeverity::UnsupportedConstruct => "unsupported construct",
        FindingSeverity::ParseError => "parse error",
    };
    let mut line = format!("    [{severity}]");
    if !f.assertion_name.is_empty() {
        line.push_str(&format!(" {}", f.assertion_name));
    }
    if !f.condition_id.is_empty() {
        line.push_str(&format!(" (condition {})", f.condition_id));
    }
    if !f.source_path.is_empty() {
        line.push_str(&format!(" at {}", f.source_path));
    }
    if !f.rendered_term.is_empty() {
        line.push_str(&format!(": {}", f.rendered_term));
    }
    if !f.detail.is_empty() {
        line.push_str(&format!(" — {}", f.detail));
    }
    line.push('\n');
    line
}

fn clip(s: &str, width: usize) -> String {
    if s.len() <= width {
        s.to_string()
    } else {
        format!("{}…", &s[..width.saturating_sub(1)])
    }
}
