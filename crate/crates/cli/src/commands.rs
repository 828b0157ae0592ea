use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use clap::{ArgMatches, Parser, Subcommand, ValueEnum};
use reqc_core::agent::AgentBackend;
use reqc_core::dsl::{load_document, LoadError, ValidationReport};
use reqc_core::graph::format_schedule;
use reqc_core::trace::{check_consistency, TraceKey};
use reqc_core::{
    build_graph, compile, CompileConfig, HaltPoint, CompileError, CompileEvent, CompileReport, Phase, PromptSet, RequirementDoc,
    SystemState,
};
use serde_json::json;

use crate::config::Config;
use crate::view::{format_table, load_trace, Snapshot};
use crate::Exit;

/// Stack for the compile thread; the driver recurses once per tree level.
pub const COMPILE_STACK: usize = 64 * 1024 * 1024;

#[derive(Debug, Parser)]
#[command(name = "reqc", version, about = "Requirement compiler")]
pub struct Cli {
    #[command(flatten)]
    pub config: Config,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a document; exit 1 on validation errors, 2 if it cannot be read or parsed.
    Validate {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Print the Red/Green schedule, one `RED <id>` or `GREEN <id>` per line.
    Plan {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Compile a document into the workspace.
    Compile {
        path: PathBuf,
        /// Continue from the workspace checkpoint.
        #[arg(long)]
        resume: bool,
        /// Directory of prompt template overrides (`<id>.md`).
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// `json` streams events as JSON lines on stdout.
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Stop after this many nodes complete (for exercising --resume).
        #[arg(long, hide = true, value_name = "N")]
        halt_after: Option<usize>,
    },
    /// Query or check the workspace trace store.
    Trace {
        /// Tuples for a node or scenario id.
        #[arg(long, value_name = "ID", group = "query")]
        from_req: Option<String>,
        /// Tuples realized by a code artifact.
        #[arg(long, value_name = "ID", group = "query")]
        from_code: Option<String>,
        /// Tuples that include an interface.
        #[arg(long, value_name = "ID", group = "query")]
        interface: Option<String>,
        /// Tuples that include a test case.
        #[arg(long, value_name = "ID", group = "query")]
        test: Option<String>,
        /// Cross-check the store against the compiled system; exit 1 on findings.
        #[arg(long, requires = "doc")]
        check: bool,
        /// Document the workspace was compiled from.
        #[arg(long)]
        doc: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Per-node table: state, interfaces, tests, pass rate.
    Report {
        /// Orders rows by the document and adds names and alignment.
        doc: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Inspect the resolved configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Serve the observer and editor HTTP API for a document.
    Serve { path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print every setting with its origin (flag, env or default).
    Show {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

pub fn dispatch(cli: Cli, matches: &ArgMatches, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let config = cli.config;
    match cli.command {
        Command::Validate { path, format } => validate(&path, format, out, err),
        Command::Plan { path, format } => plan(&path, format, out, err),
        Command::Compile {
            path,
            resume,
            prompts,
            format,
            halt_after,
        } => {
            let options = CompileOptions {
                resume,
                prompts,
                format,
                halt: halt_after.map(HaltPoint::AfterDone),
            };
            cmd_compile(&config, &path, &options, out, err)
        }
        Command::Trace {
            from_req,
            from_code,
            interface,
            test,
            check,
            doc,
            format,
        } => {
            let query = [
                (TraceKey::Requirement, from_req),
                (TraceKey::Code, from_code),
                (TraceKey::Interface, interface),
                (TraceKey::Test, test),
            ]
            .into_iter()
            .find_map(|(k, v)| v.map(|v| (k, v)));
            trace(&config, query, check.then_some(doc).flatten().as_deref(), format, out, err)
        }
        Command::Report { doc, format } => report(&config, doc.as_deref(), format, out, err),
        Command::Config {
            action: ConfigAction::Show { format },
        } => {
            let sub = matches.subcommand_matches("config").and_then(|m| m.subcommand_matches("show"));
            let settings = config.describe(sub.unwrap_or(matches));
            match format {
                Format::Json => {
                    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&settings).unwrap());
                }
                Format::Text => {
                    for s in settings {
                        let _ = writeln!(out, "{:<10} = {:<24} ({})", s.key, s.value, s.origin);
                    }
                }
            }
            Exit::Ok
        }
        Command::Serve { path } => crate::serve::run(&config, &path, err),
    }
}

/// Loads a document, reporting failures in the requested format.
pub fn load(path: &Path, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<RequirementDoc, Exit> {
    load_document(path).map_err(|e| {
        match (format, &e) {
            (Format::Json, LoadError::Parse(p)) => {
                let body = json!({"ok": false, "parse_error": {
                    "line": p.line, "column": p.column, "production": p.production, "message": p.message}});
                let _ = writeln!(out, "{body}");
            }
            (Format::Json, LoadError::Io { .. }) => {
                let _ = writeln!(out, "{}", json!({"ok": false, "io_error": e.to_string()}));
            }
            _ => {
                let _ = writeln!(err, "{}: {e}", path.display());
            }
        }
        Exit::Unreadable
    })
}

fn print_report(report: &ValidationReport, format: Format, out: &mut dyn Write) {
    match format {
        Format::Json => {
            let body = json!({"ok": report.is_ok(), "errors": report.errors, "warnings": report.warnings});
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&body).unwrap());
        }
        Format::Text => {
            for f in &report.errors {
                let _ = writeln!(out, "error: {f}");
            }
            for f in &report.warnings {
                let _ = writeln!(out, "warning: {f}");
            }
        }
    }
}

fn validate(path: &Path, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let doc = match load(path, format, out, err) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let report = reqc_core::validate_document(&doc);
    print_report(&report, format, out);
    if format == Format::Text && report.is_ok() {
        let scenarios = doc.scenarios().count();
        let _ = writeln!(out, "ok: {} nodes, {scenarios} scenarios", doc.nodes().len());
    }
    if report.is_ok() {
        Exit::Ok
    } else {
        Exit::Invalid
    }
}

fn plan(path: &Path, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let doc = match load(path, format, out, err) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let report = reqc_core::validate_document(&doc);
    if !report.is_ok() {
        print_report(&report, format, out);
        return Exit::Invalid;
    }
    let graph = match build_graph(&doc) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return Exit::Invalid;
        }
    };
    let schedule = graph.plan_schedule();
    for violation in graph.dependency_order_check(&schedule) {
        let _ = writeln!(err, "warning: {violation}");
    }
    match format {
        Format::Text => {
            let _ = write!(out, "{}", format_schedule(&schedule));
        }
        Format::Json => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&schedule).unwrap());
        }
    }
    Exit::Ok
}

/// Runs [`compile`] on a thread with a large stack, handing every event to
/// `on_event` on the calling thread as it happens.
pub fn compile_on_thread(
    doc: &RequirementDoc,
    backend: Box<dyn AgentBackend>,
    config: &Config,
    compile_config: &CompileConfig,
    mut on_event: impl FnMut(CompileEvent, &SystemState),
) -> Result<CompileReport, CompileError> {
    let runner = config.runner.build();
    let (tx, rx) = mpsc::channel::<(CompileEvent, SystemState)>();
    std::thread::scope(|scope| {
        let worker = std::thread::Builder::new()
            .name("reqc-compile".into())
            .stack_size(COMPILE_STACK)
            .spawn_scoped(scope, move || {
                let mut observer = |event: &CompileEvent, system: &SystemState| {
                    // Boundary events carry the system; others only need the event.
                    let system = if boundary(event) { system.clone() } else { SystemState::default() };
                    let _ = tx.send((event.clone(), system));
                };
                compile(doc, backend, &runner, compile_config, &mut observer)
            })
            .expect("spawn compile thread");
        for (event, system) in rx {
            on_event(event, &system);
        }
        worker.join().expect("compile thread panicked")
    })
}

/// Events after which the session sits at a node boundary.
pub fn boundary(event: &CompileEvent) -> bool {
    matches!(
        event,
        CompileEvent::Started { .. } | CompileEvent::NodeDone { .. } | CompileEvent::Finished { .. } | CompileEvent::Failed { .. }
    )
}

fn progress_line(event: &CompileEvent) -> Option<String> {
    Some(match event {
        CompileEvent::Started { nodes, resumed } => {
            format!("{} {nodes} nodes", if *resumed { "resuming" } else { "compiling" })
        }
        CompileEvent::Mission { node, phase } => match phase {
            Phase::Red => format!("RED   {node}"),
            Phase::Green => format!("GREEN {node}"),
        },
        CompileEvent::Attempt {
            node,
            attempt,
            budget_remaining,
        } => format!("      {node} attempt {attempt} ({budget_remaining} left)"),
        CompileEvent::Outcome {
            case_id, passed: false, ..
        } => format!("      FAIL {case_id}"),
        CompileEvent::NodeDone {
            node,
            passed: Some(false),
            attempts,
        } => format!("      {node} done with failing tests after {attempts} attempts"),
        _ => return None,
    })
}

struct CompileOptions {
    resume: bool,
    prompts: Option<PathBuf>,
    format: Format,
    halt: Option<HaltPoint>,
}

fn cmd_compile(config: &Config, path: &Path, options: &CompileOptions, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let format = options.format;
    let doc = match load(path, Format::Text, out, err) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let Some(spec) = &config.backend else {
        let _ = writeln!(err, "no backend configured: pass --backend fixture:<path> or --backend http");
        return Exit::Unreadable;
    };
    let prompts = match options.prompts.as_deref().map(PromptSet::with_overrides).transpose() {
        Ok(p) => p.unwrap_or_default(),
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return Exit::Unreadable;
        }
    };
    let backend = match spec.build() {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", e.code());
            return Exit::CompileFailed;
        }
    };
    let mut compile_config = CompileConfig::new(&config.workspace);
    compile_config.budget = config.budget();
    compile_config.resume = options.resume;
    compile_config.halt = options.halt;
    compile_config.prompts = prompts;

    let result = compile_on_thread(&doc, backend, config, &compile_config, |event, _| match format {
        Format::Json => {
            let _ = writeln!(out, "{}", serde_json::to_string(&event).unwrap());
        }
        Format::Text => {
            if let Some(line) = progress_line(&event) {
                let _ = writeln!(err, "{line}");
            }
        }
    });
    match result {
        Ok(report) => {
            let s = &report.summary;
            if format == Format::Text {
                let rate = s.pass_rate.map_or_else(|| "-".to_owned(), |p| p.to_string());
                let _ = writeln!(out, "nodes done:            {}", if s.all_done { "all" } else { "some pending" });
                let _ = writeln!(out, "interfaces:            {}", s.interfaces);
                let _ = writeln!(out, "tests:                 {}", s.tests);
                let _ = writeln!(out, "pass rate:             {rate}");
                let _ = writeln!(out, "alignment:             {:.2}", s.alignment);
                let _ = writeln!(out, "implementation errors: {}", s.error_count);
            }
            if s.all_done && s.error_count == 0 {
                Exit::Ok
            } else {
                Exit::TestsFailing
            }
        }
        Err(e) => {
            let _ = writeln!(err, "compile failed: {e}");
            Exit::CompileFailed
        }
    }
}

fn trace(
    config: &Config,
    query: Option<(TraceKey, String)>,
    check_doc: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Exit {
    let store = match load_trace(&config.workspace) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return Exit::Unreadable;
        }
    };
    if let Some(doc_path) = check_doc {
        let doc = match load(doc_path, Format::Text, out, err) {
            Ok(doc) => doc,
            Err(code) => return code,
        };
        let graph = match build_graph(&doc) {
            Ok(g) => g,
            Err(e) => {
                let _ = writeln!(err, "{e}");
                return Exit::Invalid;
            }
        };
        let snapshot = match Snapshot::load(&config.workspace) {
            Ok(s) => s,
            Err(e) => {
                let _ = writeln!(err, "{e}");
                return Exit::Unreadable;
            }
        };
        let findings = check_consistency(&store, &snapshot.system, &graph, &snapshot.states);
        match format {
            Format::Json => {
                let body = json!({"ok": findings.is_empty(), "findings": findings});
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&body).unwrap());
            }
            Format::Text if findings.is_empty() => {
                let _ = writeln!(out, "ok: {} tuples consistent", store.len());
            }
            Format::Text => {
                for f in &findings {
                    let _ = writeln!(out, "{f}");
                }
            }
        }
        return if findings.is_empty() { Exit::Ok } else { Exit::Invalid };
    }
    let tuples: Vec<_> = match &query {
        Some((key, id)) => store.query(*key, id),
        None => store.tuples().iter().collect(),
    };
    match format {
        Format::Json => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&tuples).unwrap());
        }
        Format::Text => {
            for t in tuples {
                let _ = writeln!(out, "{t}");
            }
        }
    }
    Exit::Ok
}

fn report(config: &Config, doc_path: Option<&Path>, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let doc = match doc_path.map(|p| load(p, Format::Text, out, err)).transpose() {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let snapshot = match Snapshot::load(&config.workspace) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return Exit::Unreadable;
        }
    };
    let rows = snapshot.rows(doc.as_ref());
    let alignment = doc
        .as_ref()
        .and_then(|d| build_graph(d).ok())
        .map(|g| reqc_core::driver::alignment_metric(&snapshot.system, &g));
    let rate = snapshot.pass_rate();
    match format {
        Format::Json => {
            let body = json!({
                "nodes": rows,
                "pass_rate": rate,
                "alignment": alignment,
                "error_count": snapshot.error_count(),
            });
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&body).unwrap());
        }
        Format::Text => {
            let _ = write!(out, "{}", format_table(&rows));
            let _ = writeln!(out);
            let _ = writeln!(out, "pass rate: {}", rate.map_or_else(|| "-".to_owned(), |p| p.to_string()));
            if let Some(a) = alignment {
                let _ = writeln!(out, "alignment: {a:.2}");
            }
            let _ = writeln!(out, "implementation errors: {}", snapshot.error_count());
        }
    }
    Exit::Ok
}
