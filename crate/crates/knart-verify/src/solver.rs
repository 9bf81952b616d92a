//! External SMT solver driver.
//!
//! Runs a solver as a child process speaking SMT-LIB over standard
//! input/output (`z3 -in` style), writes a rendered script, reads the
//! verdict, and — depending on it — interactively requests a model or an
//! unsat core. The protocol is interactive because SMT-LIB scripts
//! cannot branch on the verdict.
//!
//! Every read is bounded by the configured timeout; on expiry the child
//! is killed and reaped and the verdict is `Timeout` (a first-class
//! state, not an error).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use thiserror::Error;

use crate::codegen::{render, SmtScript};
use crate::elm::Value;

/// How long a child process gets to exit after `(exit)` before being
/// killed.
const EXIT_GRACE: Duration = Duration::from_millis(2000);

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Executable and arguments; must accept SMT-LIB on standard input.
    pub command: Vec<String>,
    pub timeout_ms: u64,
    pub produce_models: bool,
    pub produce_cores: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            command: default_command(),
            timeout_ms: 10_000,
            produce_models: true,
            produce_cores: true,
        }
    }
}

/// `SMT_SOLVER_CMD` (whitespace-split) or `z3 -in`.
pub fn default_command() -> Vec<String> {
    match std::env::var("SMT_SOLVER_CMD") {
        Ok(cmd) if !cmd.trim().is_empty() => cmd.split_whitespace().map(str::to_string).collect(),
        _ => vec!["z3".into(), "-in".into()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    SolverError,
}

impl SolverStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolverStatus::Sat => "sat",
            SolverStatus::Unsat => "unsat",
            SolverStatus::Unknown => "unknown",
            SolverStatus::Timeout => "timeout",
            SolverStatus::SolverError => "solver-error",
        }
    }
}

/// A satisfying assignment as reported by the solver. Values are kept as
/// verbatim ground-term text; [`parse_model_value`] interprets the
/// primitive ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelAssignment {
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct SolverVerdict {
    pub status: SolverStatus,
    pub model: Option<ModelAssignment>,
    pub core: Option<Vec<String>>,
    /// Wall time of the `(check-sat)` round trip.
    pub solve_ms: u64,
    /// Present when status is `SolverError`.
    pub error_message: Option<String>,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("solver executable `{command}` not found")]
    SolverNotFound { command: String },
    #[error("solver I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("unparseable solver response: {detail} (raw: {raw:?})")]
    Protocol { detail: String, raw: String },
}

/// Renders the script and checks it.
pub fn check(script: &SmtScript, cfg: &SolverConfig) -> Result<SolverVerdict, DriverError> {
    check_rendered(&render(script), cfg)
}

/// Checks an already-rendered SMT-LIB script.
pub fn check_rendered(script_text: &str, cfg: &SolverConfig) -> Result<SolverVerdict, DriverError> {
    let (program, args) = cfg
        .command
        .split_first()
        .ok_or_else(|| DriverError::SolverNotFound {
            command: String::new(),
        })?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                DriverError::SolverNotFound {
                    command: program.clone(),
                }
            } else {
                DriverError::Io(e)
            }
        })?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let stderr = child.stderr.take().expect("piped stderr");

    // Reader threads are detached, not joined: a misbehaving solver can
    // leave orphaned grandchildren holding the pipes open, and joining
    // would hang on them.
    let (line_tx, line_rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            match line {
                Ok(l) => {
                    if line_tx.send(l).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });
    let (stderr_tx, stderr_rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = BufReader::new(stderr).read_to_string(&mut buf);
        let _ = stderr_tx.send(buf);
    });

    let deadline = Instant::now() + Duration::from_millis(cfg.timeout_ms);
    let result = run_session(&mut child, &mut stdin, &line_rx, cfg, script_text, deadline);

    // Always reap the child: ask politely, then kill.
    let _ = stdin.write_all(b"(exit)\n");
    let _ = stdin.flush();
    drop(stdin);
    let exit_deadline = Instant::now() + EXIT_GRACE;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() < exit_deadline => {
                std::thread::sleep(Duration::from_millis(5));
            }
            _ => {
                let _ = child.kill();
                let _ = child.wait();
                break;
            }
        }
    }
    let stderr_text = stderr_rx
        .recv_timeout(Duration::from_millis(200))
        .unwrap_or_default();

    match result {
        SessionOutcome::Done(verdict) => Ok(verdict),
        SessionOutcome::Timeout { solve_ms } => Ok(SolverVerdict {
            status: SolverStatus::Timeout,
            model: None,
            core: None,
            solve_ms,
            error_message: None,
        }),
        SessionOutcome::SolverError { message, solve_ms } => Ok(SolverVerdict {
            status: SolverStatus::SolverError,
            model: None,
            core: None,
            solve_ms,
            error_message: Some(if message.is_empty() {
                stderr_text.trim().to_string()
            } else {
                message
            }),
        }),
        SessionOutcome::Io(e) => Err(DriverError::Io(e)),
    }
}

enum SessionOutcome {
    Done(SolverVerdict),
    Timeout { solve_ms: u64 },
    SolverError { message: String, solve_ms: u64 },
    Io(std::io::Error),
}

fn run_session(
    child: &mut Child,
    stdin: &mut std::process::ChildStdin,
    lines: &mpsc::Receiver<String>,
    cfg: &SolverConfig,
    script_text: &str,
    deadline: Instant,
) -> SessionOutcome {
    // A solver that exits before reading the script surfaces here as a
    // broken pipe; report it as a solver failure, not an I/O bug.
    let write_error = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            SessionOutcome::SolverError {
                message: "solver exited before reading the script".into(),
                solve_ms: 0,
            }
        } else {
            SessionOutcome::Io(e)
        }
    };
    // Model production must be requested up front; this is protocol
    // traffic, not part of the emitted artifact file.
    if cfg.produce_models {
        if let Err(e) = stdin.write_all(b"(set-option :produce-models true)\n") {
            return write_error(e);
        }
    }
    if let Err(e) = stdin.write_all(script_text.as_bytes()) {
        return write_error(e);
    }
    if let Err(e) = stdin.flush() {
        return write_error(e);
    }

    let started = Instant::now();
    let verdict_status = loop {
        match next_line(lines, deadline) {
            LineRead::Line(line) => {
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                match trimmed {
                    "sat" => break SolverStatus::Sat,
                    "unsat" => break SolverStatus::Unsat,
                    "unknown" => break SolverStatus::Unknown,
                    other if other.starts_with("(error") => {
                        return SessionOutcome::SolverError {
                            message: error_message(other),
                            solve_ms: started.elapsed().as_millis() as u64,
                        }
                    }
                    // Banners and echoes are tolerated.
                    _ => continue,
                }
            }
            LineRead::TimedOut => {
                let _ = child.kill();
                return SessionOutcome::Timeout {
                    solve_ms: started.elapsed().as_millis() as u64,
                };
            }
            LineRead::Eof => {
                return SessionOutcome::SolverError {
                    message: "solver exited before producing a verdict".into(),
                    solve_ms: started.elapsed().as_millis() as u64,
                }
            }
        }
    };
    let solve_ms = started.elapsed().as_millis() as u64;

    let mut verdict = SolverVerdict {
        status: verdict_status,
        model: None,
        core: None,
        solve_ms,
        error_message: None,
    };

    if verdict_status == SolverStatus::Sat && cfg.produce_models {
        match follow_up(stdin, lines, "(get-model)\n", child, deadline) {
            // A solver without model support answers (error …) instead;
            // the verdict stands, just without a model.
            Ok(Some(text)) => {
                if let Some(SolverResponse::Model(bindings)) = parse_response_block(&text) {
                    verdict.model = Some(ModelAssignment { bindings });
                }
            }
            Ok(None) => {
                return SessionOutcome::Timeout {
                    solve_ms: verdict.solve_ms,
                }
            }
            Err(e) => return SessionOutcome::Io(e),
        }
    }
    if verdict_status == SolverStatus::Unsat && cfg.produce_cores {
        match follow_up(stdin, lines, "(get-unsat-core)\n", child, deadline) {
            Ok(Some(text)) => {
                if let Some(SolverResponse::Core(names)) = parse_response_block(&text) {
                    verdict.core = Some(names);
                }
            }
            Ok(None) => {
                return SessionOutcome::Timeout {
                    solve_ms: verdict.solve_ms,
                }
            }
            Err(e) => return SessionOutcome::Io(e),
        }
    }
    SessionOutcome::Done(verdict)
}

enum LineRead {
    Line(String),
    TimedOut,
    Eof,
}

fn next_line(lines: &mpsc::Receiver<String>, deadline: Instant) -> LineRead {
    let now = Instant::now();
    if now >= deadline {
        return LineRead::TimedOut;
    }
    match lines.recv_timeout(deadline - now) {
        Ok(line) => LineRead::Line(line),
        Err(mpsc::RecvTimeoutError::Timeout) => LineRead::TimedOut,
        Err(mpsc::RecvTimeoutError::Disconnected) => LineRead::Eof,
    }
}

/// Sends one retrieval command and reads one balanced s-expression.
/// `Ok(None)` means the deadline expired (child already killed).
fn follow_up(
    stdin: &mut std::process::ChildStdin,
    lines: &mpsc::Receiver<String>,
    command: &str,
    child: &mut Child,
    deadline: Instant,
) -> Result<Option<String>, std::io::Error> {
    stdin.write_all(command.as_bytes())?;
    stdin.flush()?;
    let mut buf = String::new();
    loop {
        match next_line(lines, deadline) {
            LineRead::Line(line) => {
                buf.push_str(&line);
                buf.push('\n');
                if sexp_complete(&buf) {
                    return Ok(Some(buf));
                }
            }
            LineRead::TimedOut => {
                let _ = child.kill();
                return Ok(None);
            }
            LineRead::Eof => return Ok(Some(buf)),
        }
    }
}

/// True once the buffer holds at least one complete s-expression
/// (string-literal aware).
fn sexp_complete(text: &str) -> bool {
    let mut depth = 0i32;
    let mut any = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
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
            '(' => {
                depth += 1;
                any = true;
            }
            ')' => {
                depth -= 1;
                if depth == 0 && any {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

/// One classified solver response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverResponse {
    Sat,
    Unsat,
    Unknown,
    Model(BTreeMap<String, String>),
    Core(Vec<String>),
    Error(String),
}

/// Parses a whole solver session transcript into classified responses.
/// Banners, blank lines, and `success` echoes are tolerated.
pub fn parse_solver_output(stream: &str) -> Result<Vec<SolverResponse>, DriverError> {
    let mut out = Vec::new();
    let nodes = parse_sexp_stream(stream)?;
    for node in nodes {
        match node {
            SNode::Atom(a) => match a.as_str() {
                "sat" => out.push(SolverResponse::Sat),
                "unsat" => out.push(SolverResponse::Unsat),
                "unknown" => out.push(SolverResponse::Unknown),
                "success" => {}
                other if other.starts_with(';') => {}
                // Banner words and version strings are ignored.
                _ => {}
            },
            SNode::List(items) => match classify_block(&items) {
                Some(resp) => out.push(resp),
                None => {
                    return Err(DriverError::Protocol {
                        detail: "unrecognized response block".into(),
                        raw: render_snode(&SNode::List(items)),
                    })
                }
            },
        }
    }
    Ok(out)
}

fn parse_response_block(text: &str) -> Option<SolverResponse> {
    match parse_solver_output(text) {
        Ok(mut responses) if !responses.is_empty() => Some(responses.remove(0)),
        _ => None,
    }
}

fn classify_block(items: &[SNode]) -> Option<SolverResponse> {
    if let Some(SNode::Atom(head)) = items.first() {
        if head == "error" {
            let msg = items.get(1).map(render_snode).unwrap_or_default();
            return Some(SolverResponse::Error(msg.trim_matches('"').to_string()));
        }
    }
    let is_define_fun = |n: &SNode| matches!(n, SNode::List(xs) if matches!(xs.first(), Some(SNode::Atom(a)) if a == "define-fun"));
    let head_is_model = matches!(items.first(), Some(SNode::Atom(a)) if a == "model");
    if head_is_model || items.iter().any(is_define_fun) {
        let mut bindings = BTreeMap::new();
        for item in items {
            if let SNode::List(xs) = item {
                if let Some((name, value)) = define_fun_binding(xs) {
                    bindings.entry(name).or_insert(value);
                }
            }
        }
        return Some(SolverResponse::Model(bindings));
    }
    // A flat list of symbols is an unsat core (possibly empty).
    let mut names = Vec::new();
    for item in items {
        match item {
            SNode::Atom(a) => names.push(a.clone()),
            SNode::List(_) => return None,
        }
    }
    Some(SolverResponse::Core(names))
}

/// Extracts `(define-fun name () Sort value…)` as a binding; functions
/// with parameters are skipped.
fn define_fun_binding(items: &[SNode]) -> Option<(String, String)> {
    match items {
        [SNode::Atom(kw), SNode::Atom(name), SNode::List(params), _sort, value @ ..]
            if kw == "define-fun" && params.is_empty() && !value.is_empty() =>
        {
            let text = value.iter().map(render_snode).collect::<Vec<_>>().join(" ");
            Some((name.clone(), text))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SNode {
    Atom(String),
    List(Vec<SNode>),
}

fn render_snode(node: &SNode) -> String {
    match node {
        SNode::Atom(a) => a.clone(),
        SNode::List(items) => {
            let inner: Vec<String> = items.iter().map(render_snode).collect();
            format!("({})", inner.join(" "))
        }
    }
}

fn parse_sexp_stream(text: &str) -> Result<Vec<SNode>, DriverError> {
    let mut nodes = Vec::new();
    let mut stack: Vec<Vec<SNode>> = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let items = stack.pop().ok_or_else(|| DriverError::Protocol {
                    detail: "unbalanced `)`".into(),
                    raw: text.to_string(),
                })?;
                let node = SNode::List(items);
                match stack.last_mut() {
                    Some(parent) => parent.push(node),
                    None => nodes.push(node),
                }
            }
            '"' => {
                let mut s = String::from("\"");
                while let Some(c) = chars.next() {
                    if c == '"' {
                        if chars.peek() == Some(&'"') {
                            s.push('"');
                            s.push('"');
                            chars.next();
                        } else {
                            break;
                        }
                    } else {
                        s.push(c);
                    }
                }
                s.push('"');
                let node = SNode::Atom(s);
                match stack.last_mut() {
                    Some(parent) => parent.push(node),
                    None => nodes.push(node),
                }
            }
            c if c.is_whitespace() => {}
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            c => {
                let mut atom = String::new();
                atom.push(c);
                while let Some(&p) = chars.peek() {
                    if p.is_whitespace() || p == '(' || p == ')' || p == '"' {
                        break;
                    }
                    atom.push(p);
                    chars.next();
                }
                let node = SNode::Atom(atom);
                match stack.last_mut() {
                    Some(parent) => parent.push(node),
                    None => nodes.push(node),
                }
            }
        }
    }
    if !stack.is_empty() {
        return Err(DriverError::Protocol {
            detail: "unterminated s-expression".into(),
            raw: text.to_string(),
        });
    }
    Ok(nodes)
}

fn error_message(line: &str) -> String {
    match parse_sexp_stream(line) {
        Ok(nodes) => match nodes.first() {
            Some(SNode::List(items)) if items.len() >= 2 => {
                render_snode(&items[1]).trim_matches('"').to_string()
            }
            _ => line.to_string(),
        },
        Err(_) => line.to_string(),
    }
}

/// Interprets a solver-reported ground term as a [`Value`]. Handles the
/// integer, rational, boolean, and string forms solvers print; anything
/// else (elements of uninterpreted sorts, datatype values) returns
/// `None` and stays verbatim text.
pub fn parse_model_value(text: &str) -> Option<Value> {
    let nodes = parse_sexp_stream(text).ok()?;
    if nodes.len() != 1 {
        return None;
    }
    snode_value(&nodes[0])
}

fn snode_value(node: &SNode) -> Option<Value> {
    match node {
        SNode::Atom(a) => {
            if a == "true" || a == "false" {
                return Some(Value::Bool(a == "true"));
            }
            if let Some(stripped) = a.strip_prefix('"') {
                return Some(Value::Str(
                    stripped.strip_suffix('"')?.replace("\"\"", "\""),
                ));
            }
            if a.contains('.') {
                return crate::elm::decimal_to_rational_text(a).map(Value::Real);
            }
            a.parse::<BigInt>().ok().map(Value::Int)
        }
        SNode::List(items) => match items.split_first() {
            Some((SNode::Atom(op), rest)) if op == "-" && rest.len() == 1 => {
                match snode_value(&rest[0])? {
                    Value::Int(i) => Some(Value::Int(-i)),
                    Value::Real(r) => Some(Value::Real(-r)),
                    _ => None,
                }
            }
            Some((SNode::Atom(op), rest)) if op == "/" && rest.len() == 2 => {
                let to_rational = |v: Value| match v {
                    Value::Int(i) => Some(num_rational::BigRational::from_integer(i)),
                    Value::Real(r) => Some(r),
                    _ => None,
                };
                let n = to_rational(snode_value(&rest[0])?)?;
                let d = to_rational(snode_value(&rest[1])?)?;
                if d == num_rational::BigRational::from_integer(BigInt::from(0)) {
                    return None;
                }
                Some(Value::Real(n / d))
            }
            _ => None,
        },
    }
}
