//! The `knart-verify` command-line front end.
//!
//! `knart-verify [PATHS] [--solver-cmd CMD] [--timeout-ms N]
//! [--mode paper|portable] [--per-condition] [--spec FILE]
//! [--unsat-core[=BOOL]] [--emit-smt DIR] [--format text|json]
//! [--set-logic NAME] [--jobs N] [--download-corpus URL]`
//!
//! Exit codes: 0 all satisfiable; 1 at least one unsat condition or spec
//! violation; 2 untranslatable/unknown/timeout present; 3 usage or I/O
//! error.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{ArgAction, Parser, ValueEnum};

use crate::codegen::{parse_spec_constraints, EmissionMode};
use crate::pipeline::{self, PipelineOptions, VerifiedArtifact};
use crate::report::{self, exit_code};
use crate::solver::{default_command, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum ModeArg {
    /// Reproduce the classic encoding (built-in List sort, elm_exists).
    Paper,
    /// Solver-neutral datatype encoding (default).
    #[default]
    Portable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum FormatArg {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "knart-verify",
    version,
    about = "Check the satisfiability of KNART condition logic with an SMT solver"
)]
pub struct Args {
    /// KNART XML files, or directories scanned for *.xml.
    pub paths: Vec<PathBuf>,

    /// Solver command accepting SMT-LIB on stdin (default: $SMT_SOLVER_CMD or `z3 -in`).
    #[arg(long)]
    pub solver_cmd: Option<String>,

    /// Per-script solver timeout in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    pub timeout_ms: u64,

    /// Script emission mode.
    #[arg(long, value_enum, default_value_t)]
    pub mode: ModeArg,

    /// Check each condition in its own script instead of jointly.
    #[arg(long)]
    pub per_condition: bool,

    /// Specification constraint (φ) file: `(<name> <boolean-term>)` entries.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Request unsat cores and name assertions (on by default; pass
    /// `--unsat-core=false` to disable).
    #[arg(long, action = ArgAction::Set, default_value_t = true,
          num_args = 0..=1, default_missing_value = "true")]
    pub unsat_core: bool,

    /// Write the generated .smt2 script(s) into this directory.
    #[arg(long)]
    pub emit_smt: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_enum, default_value_t)]
    pub format: FormatArg,

    /// Emit `(set-logic NAME)`; by default the logic is left undeclared.
    #[arg(long)]
    pub set_logic: Option<String>,

    /// Worker limit for parallel verification (default: CPU count).
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Download the public HL7 r1.3 example set from this base URL into
    /// the first PATH (network use is opt-in only).
    #[arg(long)]
    pub download_corpus: Option<String>,
}

/// Runs the CLI on the given arguments (without the program name) and
/// returns the process exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let argv = std::iter::once("knart-verify".to_string()).chain(args.into_iter().map(Into::into));
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            // Help/version requests exit 0 by convention.
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(args) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("knart-verify: {message}");
            3
        }
    }
}

fn run_parsed(args: Args) -> Result<i32, String> {
    let mut paths = args.paths.clone();
    if let Some(url) = &args.download_corpus {
        let dir = paths
            .first()
            .cloned()
            .unwrap_or_else(|| PathBuf::from("hl7-cds-ka-r1.3"));
        download_corpus(url, &dir)?;
        if paths.is_empty() {
            paths.push(dir);
        }
    }
    if paths.is_empty() {
        return Err("no input paths (see --help)".into());
    }

    let files = collect_inputs(&paths)?;
    if files.is_empty() {
        return Err("no .xml artifacts found under the given paths".into());
    }

    let spec_constraints = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read spec file {}: {e}", path.display()))?;
            parse_spec_constraints(&text).map_err(|e| e.to_string())?
        }
        None => Vec::new(),
    };

    let solver = SolverConfig {
        command: match &args.solver_cmd {
            Some(cmd) => cmd.split_whitespace().map(str::to_string).collect(),
            None => default_command(),
        },
        timeout_ms: args.timeout_ms,
        produce_models: true,
        produce_cores: args.unsat_core,
    };
    let opts = PipelineOptions {
        mode: match args.mode {
            ModeArg::Paper => EmissionMode::PaperCompat,
            ModeArg::Portable => EmissionMode::Portable,
        },
        per_condition: args.per_condition,
        want_cores: args.unsat_core,
        spec_constraints,
        set_logic: args.set_logic.clone(),
        solver,
        skip_solve: false,
    };

    let results = verify_all(&files, &opts, args.jobs);

    if let Some(dir) = &args.emit_smt {
        for r in &results {
            pipeline::write_scripts(dir, &r.scripts)
                .map_err(|e| format!("cannot write scripts to {}: {e}", dir.display()))?;
        }
    }

    for r in &results {
        for w in &r.warnings {
            eprintln!("knart-verify: warning: {w}");
        }
    }

    match args.format {
        FormatArg::Text => {
            print!("{}", report::table_header());
            for r in &results {
                print!("{}", report::table_row(&r.report));
                if let Some(line) = report::model_line(&r.report) {
                    print!("{line}");
                }
                for f in &r.report.findings {
                    print!("{}", report::finding_line(f));
                }
                if let Some(e) = &r.report.error {
                    println!("    solver error: {e}");
                }
            }
        }
        FormatArg::Json => {
            let reports: Vec<&report::VerificationReport> =
                results.iter().map(|r| &r.report).collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&reports).expect("reports serialize")
            );
        }
    }

    Ok(exit_code(results.iter().map(|r| r.report.status)))
}

/// Expands files and directories into a work list; directory entries are
/// processed in lexicographic filename order.
fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_file() {
            files.push(path.clone());
        } else if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| format!("cannot read directory {}: {e}", path.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.extension()
                        .map(|ext| ext.eq_ignore_ascii_case("xml"))
                        .unwrap_or(false)
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            return Err(format!("{}: no such file or directory", path.display()));
        }
    }
    Ok(files)
}

/// Verifies files in parallel up to the worker limit; results come back
/// in input order.
fn verify_all(
    files: &[PathBuf],
    opts: &PipelineOptions,
    jobs: Option<usize>,
) -> Vec<VerifiedArtifact> {
    let workers = jobs
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
        .min(files.len().max(1));
    let slots: Mutex<Vec<Option<VerifiedArtifact>>> = Mutex::new(vec![None; files.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= files.len() {
                    break;
                }
                let result = pipeline::verify_file(&files[i], opts);
                slots.lock().expect("result slots")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every file verified"))
        .collect()
}

/// Table-1 artifact names in the public HL7 r1.3 example set.
const CORPUS_NAMES: [&str; 7] = [
    "OS-01", "ECA-01", "ECA-02", "ECA-03", "ECA-04", "DT-01", "DT-02",
];

/// Fetches `<base>/<NAME>.xml` for the seven public artifacts.
fn download_corpus(base: &str, dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let base = base.trim_end_matches('/');
    for name in CORPUS_NAMES {
        let url = format!("{base}/{name}.xml");
        let body = ureq::get(&url)
            .call()
            .map_err(|e| format!("download of {url} failed: {e}"))?
            .into_string()
            .map_err(|e| format!("download of {url} failed: {e}"))?;
        let target = dir.join(format!("{name}.xml"));
        std::fs::write(&target, body)
            .map_err(|e| format!("cannot write {}: {e}", target.display()))?;
        eprintln!("knart-verify: fetched {}", target.display());
    }
    Ok(())
}
