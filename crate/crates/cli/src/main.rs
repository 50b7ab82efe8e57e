//! `ctt`: index a working tree, watch it, review suggestions, report
//! coverage, run benchmarks and serve the HTTP API.

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! outln {
    ($($arg:tt)*) => {
        $crate::emit(format_args!($($arg)*), true)
    };
}

/// `print!` counterpart of [`outln!`].
macro_rules! out {
    ($($arg:tt)*) => {
        $crate::emit(format_args!($($arg)*), false)
    };
}

mod bench;

use std::fmt;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ctt_core::orchestrator::{CycleReport, Engine, FsSource, Suggestion, SuggestionId, SuggestionStatus, Verdict};
use ctt_core::prompt::TaskKind;
use ctt_core::store::Layout;
use ctt_server::{App, Server};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "ctt", version, about = "Context-graph engine for AI-assisted testing")]
struct Cli {
    /// Repository root for commands that work on existing engine state.
    #[arg(short = 'C', long, global = true, default_value = ".")]
    root: PathBuf,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the code graph for a tree from scratch.
    Index {
        path: Option<PathBuf>,
    },
    /// Keep the graph in sync with the working tree and run the loop.
    Watch {
        path: Option<PathBuf>,
    },
    /// Run a model job on one location right away.
    Suggest {
        #[arg(long)]
        file: String,
        #[arg(long)]
        line: u32,
        /// Force a task instead of letting the engine pick one.
        #[arg(long, value_enum)]
        task: Option<Task>,
        #[arg(long)]
        json: bool,
    },
    /// List, accept or reject suggestions.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Overall and critical coverage.
    Coverage {
        #[arg(long)]
        json: bool,
    },
    /// Synthetic fault corpora and proposed-vs-baseline runs.
    Bench {
        #[command(subcommand)]
        action: bench::BenchAction,
    },
    /// Serve the HTTP/SSE API.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Require this bearer token on every request.
        #[arg(long, env = "CTT_TOKEN")]
        token: Option<String>,
        /// Also watch the working tree for changes.
        #[arg(long)]
        watch: bool,
    },
}

#[derive(Subcommand)]
enum ReviewAction {
    List {
        /// pending, accepted, rejected, superseded or all.
        #[arg(long, default_value = "pending")]
        status: String,
        #[arg(long)]
        json: bool,
    },
    Accept {
        id: String,
    },
    Reject {
        id: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    DetectBugs,
    SuggestFix,
    GenerateTests,
    AnalyzeTestResults,
    CompleteCode,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::DetectBugs => TaskKind::DetectBugs,
            Task::SuggestFix => TaskKind::SuggestFix,
            Task::GenerateTests => TaskKind::GenerateTests,
            Task::AnalyzeTestResults => TaskKind::AnalyzeTestResults,
            Task::CompleteCode => TaskKind::CompleteCode,
        }
    }
}

fn emit(args: fmt::Arguments<'_>, newline: bool) {
    let mut stdout = io::stdout().lock();
    let written = stdout
        .write_fmt(args)
        .and_then(|()| if newline { stdout.write_all(b"\n") } else { Ok(()) })
        .and_then(|()| stdout.flush());
    if let Err(e) = written {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.root;
    match cli.command {
        Command::Index { path } => index(path.as_deref().unwrap_or(&root)),
        Command::Watch { path } => watch(path.as_deref().unwrap_or(&root)),
        Command::Suggest { file, line, task, json } => suggest(&root, &file, line, task.map(Into::into), json),
        Command::Review { action } => review(&root, action),
        Command::Coverage { json } => coverage(&root, json),
        Command::Bench { action } => bench::run(action),
        Command::Serve {
            port,
            host,
            token,
            watch,
        } => serve(&root, SocketAddr::new(host, port), token, watch),
    }
}

fn open(root: &Path) -> Result<Engine> {
    Engine::builder(root)
        .open()
        .with_context(|| format!("cannot open {} (run `ctt index` first?)", root.display()))
}

fn index(root: &Path) -> Result<()> {
    let (engine, warnings) = Engine::builder(root)
        .init()
        .with_context(|| format!("cannot index {}", root.display()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let graph = engine.graph();
    outln!(
        "indexed {} files, {} edges into {}",
        graph.len(),
        graph.edge_count(),
        Layout::new(root).dir.display()
    );
    Ok(())
}

fn print_cycle(engine_suggestions: Option<&[Suggestion]>, report: &CycleReport) {
    for job in &report.jobs {
        match (&job.error, job.task) {
            (Some(error), _) => eprintln!("job on {} failed: {error}", job.path),
            (None, Some(task)) => outln!(
                "{} on {}:{}: {} suggestion(s)",
                task.as_str(),
                job.path,
                job.focus_line,
                job.suggestions.len()
            ),
            (None, None) => {}
        }
    }
    for id in &report.created {
        match engine_suggestions.and_then(|all| all.iter().find(|s| s.id == *id)) {
            Some(s) => outln!("{}", describe(s)),
            None => outln!("created {id}"),
        }
    }
    for id in &report.superseded {
        outln!("superseded {id}");
    }
    for id in &report.accepted {
        outln!("accepted {id}");
    }
    for id in &report.conflicts {
        outln!("conflict {id}");
    }
    for path in &report.stale {
        eprintln!("stale change for {path} ignored");
    }
}

fn describe(s: &Suggestion) -> String {
    let d = &s.draft;
    format!(
        "{}  {:<10} {:<14} {}:{}-{}  {:.2}  {}",
        s.id,
        s.status.as_str(),
        d.kind.as_str(),
        d.path,
        d.line_start,
        d.line_end,
        d.confidence,
        d.explanation
    )
}

fn watch(root: &Path) -> Result<()> {
    let (mut engine, warnings) = Engine::builder(root)
        .open_or_init()
        .with_context(|| format!("cannot start engine in {}", root.display()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let queued = engine.rescan()?;
    let mut source = FsSource::new(root, engine.clock().clone())?;
    let stop = Arc::new(AtomicBool::new(false));
    stop_on_ctrl_c(stop.clone())?;
    outln!("watching {} ({} files, {queued} changes since last run)", root.display(), engine.graph().len());
    engine.watch(&mut source, &stop, &mut |report| {
        print_cycle(None, report);
    })?;
    Ok(())
}

/// Sets `stop` on Ctrl-C from a helper thread.
fn stop_on_ctrl_c(stop: Arc<AtomicBool>) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    std::thread::spawn(move || {
        runtime.block_on(async {
            if tokio::signal::ctrl_c().await.is_ok() {
                stop.store(true, Ordering::Relaxed);
            }
        })
    });
    Ok(())
}

fn suggest(root: &Path, file: &str, line: u32, task: Option<TaskKind>, json: bool) -> Result<()> {
    let mut engine = open(root)?;
    let report = engine.suggest(file, line, task)?;
    engine.flush()?;
    if json {
        let created: Vec<&Suggestion> = report
            .created
            .iter()
            .filter_map(|id| engine.suggestions().get(*id))
            .collect();
        outln!("{}", serde_json::to_string_pretty(&created)?);
        return Ok(());
    }
    let all: Vec<Suggestion> = engine.suggestions().iter().cloned().collect();
    print_cycle(Some(&all), &report);
    if report.created.is_empty() {
        outln!("no suggestions for {file}:{line}");
    }
    Ok(())
}

fn parse_id(raw: &str) -> Result<SuggestionId> {
    raw.parse().with_context(|| format!("{raw:?} is not a suggestion id"))
}

fn review(root: &Path, action: ReviewAction) -> Result<()> {
    let mut engine = open(root)?;
    match action {
        ReviewAction::List { status, json } => {
            let filter = match status.as_str() {
                "all" => None,
                s => Some(s.parse::<SuggestionStatus>().map_err(|_| anyhow::anyhow!("unknown status {s:?}"))?),
            };
            let list: Vec<&Suggestion> = engine
                .suggestions()
                .iter()
                .filter(|s| filter.is_none_or(|f| s.status == f))
                .collect();
            if json {
                outln!("{}", serde_json::to_string_pretty(&list)?);
            } else if list.is_empty() {
                outln!("no {status} suggestions");
            } else {
                for s in list {
                    outln!("{}", describe(s));
                }
            }
        }
        ReviewAction::Accept { id } | ReviewAction::Reject { id } if id.is_empty() => bail!("empty suggestion id"),
        ReviewAction::Accept { id } => {
            let outcome = engine.review(parse_id(&id)?, Verdict::Accept)?;
            outln!("{}", describe(&outcome.suggestion));
            // The patched file is re-triggered; run that cycle now.
            let report = engine.run_cycle()?;
            let all: Vec<Suggestion> = engine.suggestions().iter().cloned().collect();
            print_cycle(Some(&all), &report);
        }
        ReviewAction::Reject { id } => {
            let outcome = engine.review(parse_id(&id)?, Verdict::Reject)?;
            outln!("{}", describe(&outcome.suggestion));
        }
    }
    engine.flush()?;
    Ok(())
}

fn coverage(root: &Path, json: bool) -> Result<()> {
    let engine = open(root)?;
    let report = engine.coverage()?;
    if json {
        outln!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let graph = engine.graph();
    outln!("overall coverage   {:.1}%", report.overall * 100.0);
    outln!("critical coverage  {:.1}%", report.critical * 100.0);
    outln!("critical set ({} files):", report.critical_set.len());
    for id in &report.critical_set {
        let path = graph.node(*id).map_or("?", |n| n.path.as_str());
        let covered = report.per_node_covered.get(id).copied().unwrap_or(false);
        outln!("  {:<6} {:<9} {path}", id.to_string(), if covered { "covered" } else { "uncovered" });
    }
    Ok(())
}

fn serve(root: &Path, addr: SocketAddr, token: Option<String>, watch: bool) -> Result<()> {
    let (mut engine, warnings) = Engine::builder(root)
        .open_or_init()
        .with_context(|| format!("cannot start engine in {}", root.display()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let source = if watch {
        engine.rescan()?;
        Some(FsSource::new(root, engine.clock().clone())?)
    } else {
        None
    };
    let app = App::new(engine, token);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = Server::bind(addr, app.clone()).await?;
        let stop = Arc::new(AtomicBool::new(false));
        let watcher = source.map(|s| app.spawn_watcher(Box::new(s), stop.clone()));
        outln!("serving http://{}/api/v1", server.local_addr()?);
        server
            .run(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        stop.store(true, Ordering::Relaxed);
        if let Some(w) = watcher {
            let _ = w.join();
        }
        Ok::<_, anyhow::Error>(())
    })
}
