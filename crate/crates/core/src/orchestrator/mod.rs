//! The live loop: observed changes are coalesced, applied to the graph one
//! at a time, and each changed node gets a retrieval, prompt and model job.
//! Jobs run in parallel over an immutable graph snapshot; everything that
//! mutates state goes through [`Engine`] methods taking `&mut self`.

mod debounce;
pub mod patch;
mod source;
mod suggestion;
mod task;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::codegraph::{scan_files, Change, ChangeEvent, CodeGraph, GraphRules, IndexWarning, NodeId};
use crate::config::EngineConfig;
use crate::coverage::{coverage_report, CoverageReport};
use crate::embedding::{absorb_feedback, apply_and_propagate, EmbedSettings, Feedback};
use crate::error::{Error, Result};
use crate::gateway::{build_backend, Backend, ModelResponse, SuggestionKind};
use crate::prompt::{aggregate_history, construct_prompt, Focus, HistoryEntry, Interaction, Role, TaskKind};
use crate::retrieval::{focus_snippet, retrieve, ContextMode, QueryContext, RankedSnippet};
use crate::store::{self, Layout, Logs, SuggestionRecord};
use crate::time::{Clock, SystemClock, Timestamp};

pub use debounce::{coalesce, Debouncer, PendingChange};
pub use patch::{apply_unified, deletion_patch, PatchError};
pub use source::{ChangeSource, FsSource, Observation, ScriptedSource, SourceEvent};
pub use suggestion::{ContextRef, Suggestion, SuggestionBook, SuggestionId, SuggestionStatus};
pub use task::{decide_task, signals_for, TaskSignals, TEST_HOPS};

/// Extra cycles `watch` runs back to back while accepted suggestions keep
/// re-triggering their files.
const MAX_FOLLOW_UPS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

/// State changes pushed to the listener, in the order they happen.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EngineNotice {
    GraphUpdated {
        version: u64,
        last_seq: u64,
        changed: Vec<NodeId>,
    },
    SuggestionCreated(Suggestion),
    SuggestionResolved(Suggestion),
    CoverageUpdated(CoverageReport),
}

impl EngineNotice {
    pub fn kind(&self) -> &'static str {
        match self {
            EngineNotice::GraphUpdated { .. } => "graph_updated",
            EngineNotice::SuggestionCreated(_) => "suggestion_created",
            EngineNotice::SuggestionResolved(_) => "suggestion_resolved",
            EngineNotice::CoverageUpdated(_) => "coverage_updated",
        }
    }
}

pub type Listener = Box<dyn Fn(&EngineNotice) + Send + Sync>;

/// A node that gets a model job in the next cycle.
#[derive(Clone, Debug, PartialEq)]
struct Trigger {
    node: NodeId,
    /// Changed lines to pre-scan for markers; `None` scans the whole file.
    region: Option<(u32, u32)>,
    seq: u64,
    task: Option<TaskKind>,
}

fn merge_trigger(into: &mut BTreeMap<NodeId, Trigger>, t: Trigger) {
    match into.get_mut(&t.node) {
        None => {
            into.insert(t.node, t);
        }
        Some(old) => {
            old.region = match (old.region, t.region) {
                (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.max(b.1))),
                _ => None,
            };
            old.seq = old.seq.max(t.seq);
            old.task = t.task.or(old.task);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct JobReport {
    pub node: NodeId,
    pub path: String,
    pub task: Option<TaskKind>,
    pub focus_line: u32,
    /// Paths of the snippets that made it into the prompt.
    pub context: Vec<String>,
    pub suggestions: Vec<SuggestionId>,
    pub error: Option<String>,
    pub prompt_tokens: usize,
    /// Retrieval, prompt assembly and parsing, without the backend call.
    pub pipeline_micros: u64,
    pub backend_micros: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CycleReport {
    /// Sequence numbers of the events applied this cycle.
    pub applied: Vec<u64>,
    /// Changes dropped because their target did not exist.
    pub stale: Vec<String>,
    pub jobs: Vec<JobReport>,
    pub created: Vec<SuggestionId>,
    pub superseded: Vec<SuggestionId>,
    pub accepted: Vec<SuggestionId>,
    pub conflicts: Vec<SuggestionId>,
}

impl CycleReport {
    pub fn model_calls(&self) -> usize {
        self.jobs.iter().filter(|j| j.task.is_some()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReviewOutcome {
    pub suggestion: Suggestion,
    /// The event that applied an accepted suggestion.
    pub event: Option<ChangeEvent>,
}

struct JobOutput {
    seq: u64,
    report: JobReport,
    snippets: Vec<RankedSnippet>,
    response: Option<ModelResponse>,
}

pub struct EngineBuilder {
    root: PathBuf,
    config: Option<EngineConfig>,
    backend: Option<Arc<dyn Backend>>,
    clock: Option<Arc<dyn Clock>>,
    persist: bool,
}

impl EngineBuilder {
    pub fn config(mut self, config: EngineConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn backend(mut self, backend: Arc<dyn Backend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    /// Whether state is written under `.ctt/` (default true).
    pub fn persist(mut self, persist: bool) -> Self {
        self.persist = persist;
        self
    }

    fn build(self, truncate: bool) -> Result<Engine> {
        let config = match self.config {
            Some(c) => {
                c.validate()?;
                c
            }
            None => EngineConfig::load(&self.root)?,
        };
        let backend = match self.backend {
            Some(b) => b,
            None => build_backend(&config.backend)?,
        };
        let layout = Layout::new(&self.root);
        let logs = if self.persist {
            Some(Logs::open(&layout, truncate)?)
        } else {
            None
        };
        Ok(Engine {
            rules: config.graph_rules()?,
            settings: EmbedSettings::from_config(&config),
            root: self.root,
            config,
            graph: Arc::new(CodeGraph::new()),
            book: SuggestionBook::default(),
            history: Vec::new(),
            queue: Vec::new(),
            retrigger: BTreeMap::new(),
            backend,
            clock: self.clock.unwrap_or_else(|| Arc::new(SystemClock)),
            layout,
            logs,
            listener: None,
            counter: 0,
            model_calls: AtomicUsize::new(0),
        })
    }

    /// Indexes the tree from scratch, discarding any previous state.
    pub fn init(self) -> Result<(Engine, Vec<IndexWarning>)> {
        let mut engine = self.build(true)?;
        let (files, warnings) = scan_files(&engine.root, &engine.rules)?;
        let now = engine.clock.now();
        for file in files {
            engine.commit(now, file.path, Change::FileCreated { content: file.content })?;
        }
        engine.save_snapshot()?;
        Ok((engine, warnings))
    }

    /// Rebuilds the engine by replaying the logs under `.ctt/`.
    pub fn open(self) -> Result<Engine> {
        let layout = Layout::new(&self.root);
        if !layout.exists() {
            return Err(Error::NotFound(format!("engine state in {}", layout.dir.display())));
        }
        let events = store::read_events(&layout)?;
        let records = store::read_suggestions(&layout)?;
        let history = store::read_history(&layout)?;
        let mut engine = self.build(false)?;
        engine.replay(&layout, events, records, history)?;
        Ok(engine)
    }

    pub fn open_or_init(self) -> Result<(Engine, Vec<IndexWarning>)> {
        if Layout::new(&self.root).exists() {
            Ok((self.open()?, Vec::new()))
        } else {
            self.init()
        }
    }
}

pub struct Engine {
    root: PathBuf,
    config: EngineConfig,
    rules: GraphRules,
    settings: EmbedSettings,
    graph: Arc<CodeGraph>,
    book: SuggestionBook,
    history: Vec<Interaction>,
    queue: Vec<PendingChange>,
    retrigger: BTreeMap<NodeId, Trigger>,
    backend: Arc<dyn Backend>,
    clock: Arc<dyn Clock>,
    layout: Layout,
    logs: Option<Logs>,
    listener: Option<Listener>,
    counter: u64,
    model_calls: AtomicUsize,
}

impl Engine {
    pub fn builder(root: impl Into<PathBuf>) -> EngineBuilder {
        EngineBuilder {
            root: root.into(),
            config: None,
            backend: None,
            clock: None,
            persist: true,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn rules(&self) -> &GraphRules {
        &self.rules
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// The current graph. The returned snapshot never changes.
    pub fn graph(&self) -> Arc<CodeGraph> {
        Arc::clone(&self.graph)
    }

    pub fn suggestions(&self) -> &SuggestionBook {
        &self.book
    }

    pub fn history(&self) -> &[Interaction] {
        &self.history
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Total backend invocations since the engine was built.
    pub fn model_calls(&self) -> usize {
        self.model_calls.load(Ordering::Relaxed)
    }

    pub fn set_listener(&mut self, listener: Listener) {
        self.listener = Some(listener);
    }

    pub fn coverage(&self) -> Result<CoverageReport> {
        coverage_report(
            &self.graph,
            self.config.critical_fraction,
            self.clock.now(),
            self.config.edit_window_ms(),
        )
    }

    fn notify(&self, notice: EngineNotice) {
        if let Some(listener) = &self.listener {
            listener(&notice);
        }
    }

    fn notify_coverage(&self) {
        if self.listener.is_some() {
            if let Ok(report) = self.coverage() {
                self.notify(EngineNotice::CoverageUpdated(report));
            }
        }
    }

    pub fn save_snapshot(&self) -> Result<()> {
        if self.logs.is_some() {
            store::save_snapshot(&self.graph, &self.layout.graph())?;
        }
        Ok(())
    }

    fn replay(
        &mut self,
        layout: &Layout,
        events: Vec<ChangeEvent>,
        records: Vec<SuggestionRecord>,
        history: Vec<Interaction>,
    ) -> Result<()> {
        let graph = Arc::make_mut(&mut self.graph);
        for (i, event) in events.iter().enumerate() {
            apply_and_propagate(graph, event, &self.rules, &self.settings).map_err(|e| Error::Load {
                path: layout.events(),
                record: format!("line {}", i + 1),
                reason: e.to_string(),
            })?;
        }
        for (i, record) in records.into_iter().enumerate() {
            let result = match record {
                SuggestionRecord::Created { suggestion } => {
                    self.book.insert(suggestion);
                    Ok(())
                }
                SuggestionRecord::Status { id, status, at } => {
                    self.book.transition(id, status, at).map(|_| ())
                }
            };
            result.map_err(|e| Error::Load {
                path: layout.suggestions(),
                record: format!("line {}", i + 1),
                reason: e.to_string(),
            })?;
        }
        self.counter = self.book.len() as u64;
        self.history = history;
        Ok(())
    }

    /// Sequences, applies and logs one event. Stale events leave everything
    /// untouched and do not consume a sequence number.
    fn commit(&mut self, at: Timestamp, path: String, change: Change) -> Result<(ChangeEvent, Vec<NodeId>)> {
        let event = ChangeEvent {
            seq: self.graph.last_seq() + 1,
            at,
            path,
            change,
        };
        let changed = apply_and_propagate(Arc::make_mut(&mut self.graph), &event, &self.rules, &self.settings)?;
        if let Some(logs) = &mut self.logs {
            logs.events.append(&event)?;
        }
        Ok((event, changed.into_iter().collect()))
    }

    fn record_interaction(&mut self, role: Role, content: String, rejected: bool) -> Result<()> {
        let item = Interaction {
            at: self.clock.now(),
            role,
            content,
            rejected,
        };
        if let Some(logs) = &mut self.logs {
            logs.history.append(&item)?;
        }
        self.history.push(item);
        Ok(())
    }

    fn log_suggestion(&mut self, record: &SuggestionRecord) -> Result<()> {
        if let Some(logs) = &mut self.logs {
            logs.suggestions.append(record)?;
        }
        Ok(())
    }

    fn set_status(&mut self, id: SuggestionId, status: SuggestionStatus) -> Result<Suggestion> {
        let at = self.clock.now();
        let updated = self.book.transition(id, status, at)?.clone();
        self.log_suggestion(&SuggestionRecord::Status { id, status, at })?;
        self.notify(EngineNotice::SuggestionResolved(updated.clone()));
        Ok(updated)
    }

    /// Queues a change for the next cycle.
    pub fn submit(&mut self, change: PendingChange) {
        self.queue.push(change);
    }

    pub fn pending_changes(&self) -> usize {
        self.queue.len()
    }

    /// Diffs the file at `path` against the graph and describes what
    /// happened to it, if anything.
    pub fn observe(&self, path: &str, at: Timestamp) -> Option<PendingChange> {
        if path.is_empty() || path.split('/').any(|s| s.starts_with('.')) || !self.rules.is_included(path) {
            return None;
        }
        let on_disk = match fs::read(self.root.join(path)) {
            Ok(bytes) => Some(String::from_utf8(bytes).ok()?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(_) => return None,
        };
        let change = match (self.graph.node_by_path(path), on_disk) {
            (None, Some(content)) => Change::FileCreated { content },
            (Some(node), Some(content)) if node.text != content => {
                let (line_start, line_end) = changed_lines(&node.text, &content);
                Change::FileEdited {
                    content,
                    line_start,
                    line_end,
                }
            }
            (Some(_), None) => Change::FileDeleted,
            _ => return None,
        };
        Some(PendingChange {
            at,
            path: path.to_string(),
            change,
        })
    }

    /// Queues whatever differs between the working tree and the graph.
    pub fn rescan(&mut self) -> Result<usize> {
        let now = self.clock.now();
        let (files, _) = scan_files(&self.root, &self.rules)?;
        let mut paths: Vec<String> = files.into_iter().map(|f| f.path).collect();
        paths.extend(self.graph.nodes().map(|n| n.path.clone()));
        paths.sort();
        paths.dedup();
        let changes: Vec<PendingChange> = paths.iter().filter_map(|p| self.observe(p, now)).collect();
        let n = changes.len();
        self.queue.extend(changes);
        Ok(n)
    }

    /// Moves the cursor to `path:line` and runs a job there right away.
    pub fn suggest(&mut self, path: &str, line: u32, task: Option<TaskKind>) -> Result<CycleReport> {
        let node = self
            .graph
            .id_of(path)
            .ok_or_else(|| Error::NotFound(format!("file {path}")))?;
        let (event, _) = self.commit(self.clock.now(), path.to_string(), Change::CursorMoved { line })?;
        merge_trigger(
            &mut self.retrigger,
            Trigger {
                node,
                region: None,
                seq: event.seq,
                task,
            },
        );
        self.run_cycle()
    }

    /// One pass of the loop over everything queued since the last cycle.
    pub fn run_cycle(&mut self) -> Result<CycleReport> {
        let mut report = CycleReport::default();
        let mut triggers = std::mem::take(&mut self.retrigger);
        let batch = coalesce(std::mem::take(&mut self.queue));
        let mut changed_nodes = Vec::new();

        for pending in batch {
            match self.commit(pending.at, pending.path, pending.change) {
                Ok((event, changed)) => {
                    report.applied.push(event.seq);
                    changed_nodes.extend(changed);
                    if let Some(t) = self.trigger_for(&event) {
                        merge_trigger(&mut triggers, t);
                    }
                }
                Err(e @ Error::StaleEvent { .. }) => {
                    tracing::warn!("{e}");
                    report.stale.push(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        if !report.applied.is_empty() {
            changed_nodes.sort();
            changed_nodes.dedup();
            self.notify(EngineNotice::GraphUpdated {
                version: self.graph.version(),
                last_seq: self.graph.last_seq(),
                changed: changed_nodes,
            });
        }

        triggers.retain(|id, _| self.graph.contains(*id));
        if !triggers.is_empty() {
            let outputs = self.run_jobs(triggers.into_values().collect());
            for output in outputs {
                self.absorb_job(output, &mut report)?;
            }
        }

        if self.config.auto_accept {
            let pending: Vec<SuggestionId> = self
                .book
                .with_status(SuggestionStatus::Pending)
                .map(|s| s.id)
                .collect();
            for id in pending {
                match self.review(id, Verdict::Accept) {
                    Ok(_) => report.accepted.push(id),
                    Err(Error::Conflict { .. }) => report.conflicts.push(id),
                    Err(e) => return Err(e),
                }
            }
        }

        if !report.applied.is_empty() || !report.jobs.is_empty() {
            self.save_snapshot()?;
            self.notify_coverage();
        }
        Ok(report)
    }

    /// Whether accepted suggestions are waiting for their follow-up job.
    pub fn has_follow_ups(&self) -> bool {
        !self.retrigger.is_empty()
    }

    fn trigger_for(&self, event: &ChangeEvent) -> Option<Trigger> {
        let region = match &event.change {
            Change::FileCreated { .. } => None,
            Change::FileEdited {
                line_start,
                line_end,
                ..
            } => Some((*line_start, *line_end)),
            _ => return None,
        };
        Some(Trigger {
            node: self.graph.id_of(&event.path)?,
            region,
            seq: event.seq,
            task: None,
        })
    }

    fn run_jobs(&self, triggers: Vec<Trigger>) -> Vec<JobOutput> {
        let graph = self.graph();
        let history = aggregate_history(&self.history, self.config.prompt.history_entries);
        let changed: std::collections::BTreeSet<NodeId> = triggers.iter().map(|t| t.node).collect();
        let now = self.clock.now();
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<JobOutput>>> = triggers.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.max_parallel_jobs.min(triggers.len()).max(1);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(trigger) = triggers.get(i) else {
                        break;
                    };
                    let output = self.run_job(&graph, trigger, &changed, &history, now);
                    *slots[i].lock().expect("job slot") = Some(output);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("job slot").expect("every job ran"))
            .collect()
    }

    /// Retrieval, prompt and model call for one node. Pure over the snapshot.
    fn run_job(
        &self,
        graph: &CodeGraph,
        trigger: &Trigger,
        changed: &std::collections::BTreeSet<NodeId>,
        history: &[HistoryEntry],
        now: Timestamp,
    ) -> JobOutput {
        let start = Instant::now();
        let node = graph.node(trigger.node).expect("trigger targets a live node");
        let task = trigger
            .task
            .unwrap_or_else(|| decide_task(&signals_for(graph, trigger.node, trigger.region)));
        let focus_line = trigger
            .region
            .map(|r| r.0)
            .or_else(|| node.focus_line())
            .unwrap_or(1);
        let mut report = JobReport {
            node: node.id,
            path: node.path.clone(),
            task: None,
            focus_line,
            ..JobReport::default()
        };
        let fail = |mut report: JobReport, e: Error, snippets| {
            report.error = Some(e.to_string());
            report.pipeline_micros = start.elapsed().as_micros() as u64;
            JobOutput {
                seq: trigger.seq,
                report,
                snippets,
                response: None,
            }
        };

        let retrieval = &self.config.retrieval;
        let snippets = match retrieval.mode {
            ContextMode::Full => {
                let query = QueryContext {
                    focus: node.id,
                    changed: changed.clone(),
                    task,
                    now,
                    edit_window_ms: self.config.edit_window_ms(),
                };
                retrieve(graph, &query, retrieval.k, retrieval.snippet_budget_tokens, retrieval.coeffs)
            }
            ContextMode::FocusOnly => focus_snippet(graph, node.id, retrieval.snippet_budget_tokens),
        };
        let snippets = match snippets {
            Ok(s) => s,
            Err(e) => return fail(report, e, Vec::new()),
        };
        let focus = Focus {
            path: node.path.clone(),
            line: focus_line,
        };
        let prompt = match construct_prompt(
            &snippets,
            history,
            task,
            &focus,
            &self.config.prompt,
            self.config.prompt.total_budget,
        ) {
            Ok(p) => p,
            Err(e) => return fail(report, e, snippets),
        };
        report.task = Some(task);
        report.context = prompt.context.snippets.iter().map(|s| s.path.clone()).collect();
        report.prompt_tokens = prompt.token_estimate();

        self.model_calls.fetch_add(1, Ordering::Relaxed);
        let call = Instant::now();
        let result = self.backend.generate(&prompt);
        let backend_time = call.elapsed();
        report.backend_micros = backend_time.as_micros() as u64;
        let total = start.elapsed().saturating_sub(backend_time);
        report.pipeline_micros = total.as_micros() as u64;
        match result {
            Ok(response) => JobOutput {
                seq: trigger.seq,
                report,
                snippets,
                response: Some(response),
            },
            Err(e) => fail(report, e, snippets),
        }
    }

    /// Serialized tail of a job: persist suggestions, log the exchange and
    /// feed detected bugs back into the graph.
    fn absorb_job(&mut self, output: JobOutput, report: &mut CycleReport) -> Result<()> {
        let JobOutput {
            seq,
            report: mut job,
            snippets,
            response,
        } = output;
        if let Some(task) = job.task {
            self.record_interaction(Role::User, format!("{} {}:{}", task.as_str(), job.path, job.focus_line), false)?;
        }
        let Some(response) = response else {
            if let Some(e) = &job.error {
                tracing::warn!("job for {} failed: {e}", job.path);
            }
            report.jobs.push(job);
            return Ok(());
        };
        let context: Vec<ContextRef> = snippets
            .iter()
            .filter(|s| job.context.contains(&s.path))
            .map(|s| ContextRef {
                node_id: s.node_id,
                path: s.path.clone(),
                line_range: s.line_range,
                score: s.score,
            })
            .collect();
        let task = job.task.expect("a response implies a task");

        for draft in response.suggestions {
            let superseded = self.book.overlapping_pending(&draft);
            let repeat = self.book.repeats_fault(&draft, &superseded);
            for old in &superseded {
                self.set_status(*old, SuggestionStatus::Superseded)?;
                report.superseded.push(*old);
            }
            let now = self.clock.now();
            let suggestion = Suggestion {
                id: SuggestionId::new(now, self.counter),
                draft,
                created_at: now,
                status: SuggestionStatus::Pending,
                source_event_seq: seq,
                task,
                resolved_at: None,
                context: context.clone(),
            };
            self.counter += 1;
            self.book.insert(suggestion.clone());
            self.log_suggestion(&SuggestionRecord::Created {
                suggestion: suggestion.clone(),
            })?;
            job.suggestions.push(suggestion.id);
            report.created.push(suggestion.id);
            self.notify(EngineNotice::SuggestionCreated(suggestion.clone()));

            let draft = &suggestion.draft;
            if draft.kind == SuggestionKind::BugFix && !repeat && self.graph.contains_path(&draft.path) {
                let (event, changed) = self.commit(
                    now,
                    draft.path.clone(),
                    Change::BugDetected {
                        suggestion_id: suggestion.id.to_string(),
                        fault_id: draft.fault_id.clone(),
                    },
                )?;
                self.notify(EngineNotice::GraphUpdated {
                    version: self.graph.version(),
                    last_seq: event.seq,
                    changed,
                });
            }
        }
        self.record_interaction(Role::Copilot, response.raw, false)?;
        report.jobs.push(job);
        Ok(())
    }

    /// Resolves a pending suggestion. Accepting writes the patch (or the new
    /// test file) to the working tree and applies it to the graph; a patch
    /// that no longer applies supersedes the suggestion and reports a
    /// conflict.
    pub fn review(&mut self, id: SuggestionId, verdict: Verdict) -> Result<ReviewOutcome> {
        let suggestion = self
            .book
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("suggestion {id}")))?
            .clone();
        if suggestion.status != SuggestionStatus::Pending {
            return Err(Error::InvalidTransition {
                id: id.to_string(),
                status: suggestion.status.as_str().to_string(),
            });
        }
        let draft = &suggestion.draft;
        if verdict == Verdict::Reject {
            let updated = self.set_status(id, SuggestionStatus::Rejected)?;
            self.record_interaction(
                Role::Copilot,
                format!(
                    "suggestion {id} ({}) for {}:{}: {}",
                    draft.kind.as_str(),
                    draft.path,
                    draft.line_start,
                    draft.explanation
                ),
                true,
            )?;
            return Ok(ReviewOutcome {
                suggestion: updated,
                event: None,
            });
        }

        let conflict = |engine: &mut Engine| -> Result<ReviewOutcome> {
            engine.set_status(id, SuggestionStatus::Superseded)?;
            Err(Error::Conflict {
                id: id.to_string(),
                path: suggestion.draft.path.clone(),
            })
        };
        let file = self.root.join(&draft.path);
        let change = match draft.kind {
            SuggestionKind::TestCase => {
                if self.graph.contains_path(&draft.path) || file.exists() {
                    return conflict(self);
                }
                if let Some(dir) = file.parent() {
                    fs::create_dir_all(dir)?;
                }
                fs::write(&file, &draft.patch)?;
                self.rules
                    .is_included(&draft.path)
                    .then(|| Change::FileCreated {
                        content: draft.patch.clone(),
                    })
            }
            SuggestionKind::BugFix | SuggestionKind::Completion => {
                if !self.graph.contains_path(&draft.path) {
                    return conflict(self);
                }
                let Ok(current) = fs::read_to_string(&file) else {
                    return conflict(self);
                };
                let Ok(patched) = apply_unified(&current, &draft.patch) else {
                    return conflict(self);
                };
                fs::write(&file, &patched)?;
                Some(Change::SuggestionApplied {
                    suggestion_id: id.to_string(),
                    bug_fix: draft.kind == SuggestionKind::BugFix,
                    content: patched,
                    line_start: draft.line_start,
                    line_end: draft.line_end,
                })
            }
        };

        let updated = self.set_status(id, SuggestionStatus::Accepted)?;
        self.record_interaction(
            Role::User,
            format!("accepted suggestion {id} ({}) for {}", draft.kind.as_str(), draft.path),
            false,
        )?;
        let mut applied = None;
        if let Some(change) = change {
            let event = ChangeEvent {
                seq: self.graph.last_seq() + 1,
                at: self.clock.now(),
                path: draft.path.clone(),
                change,
            };
            absorb_feedback(
                Arc::make_mut(&mut self.graph),
                &self.rules,
                &draft.path,
                Feedback::Accepted(&event),
                &self.settings,
            )?;
            if let Some(logs) = &mut self.logs {
                logs.events.append(&event)?;
            }
            let node = self.graph.id_of(&draft.path).expect("applied path exists");
            merge_trigger(
                &mut self.retrigger,
                Trigger {
                    node,
                    region: match event.change {
                        Change::FileCreated { .. } => None,
                        _ => Some((draft.line_start, draft.line_start)),
                    },
                    seq: event.seq,
                    task: None,
                },
            );
            self.notify(EngineNotice::GraphUpdated {
                version: self.graph.version(),
                last_seq: event.seq,
                changed: vec![node],
            });
            applied = Some(event);
        }
        if !self.config.auto_accept {
            self.save_snapshot()?;
            self.notify_coverage();
        }
        Ok(ReviewOutcome {
            suggestion: updated,
            event: applied,
        })
    }

    /// Runs cycles for `batch` plus any follow-ups accepted suggestions ask for.
    fn run_batch(&mut self, batch: Vec<PendingChange>, on_cycle: &mut dyn FnMut(&CycleReport)) -> Result<()> {
        self.queue.extend(batch);
        let report = self.run_cycle()?;
        on_cycle(&report);
        for _ in 0..MAX_FOLLOW_UPS {
            if !self.has_follow_ups() {
                break;
            }
            let report = self.run_cycle()?;
            on_cycle(&report);
        }
        Ok(())
    }

    /// Drives the loop from `source` until it closes or `stop` is set.
    pub fn watch(
        &mut self,
        source: &mut dyn ChangeSource,
        stop: &AtomicBool,
        on_cycle: &mut dyn FnMut(&CycleReport),
    ) -> Result<()> {
        let mut window = Debouncer::new(self.config.debounce_ms);
        let poll = Duration::from_millis(self.config.debounce_ms.clamp(10, 1000));
        while !stop.load(Ordering::Relaxed) {
            match source.next(poll) {
                SourceEvent::Observed(observation) => {
                    if window.closes_at(observation.at()) {
                        if let Some(batch) = window.flush() {
                            self.run_batch(batch, on_cycle)?;
                        }
                    }
                    let change = match observation {
                        Observation::Change(c) => Some(c),
                        Observation::Touched { at, path } => self.observe(&path, at),
                    };
                    if let Some(change) = change {
                        window.push(change);
                    }
                }
                SourceEvent::Idle => {
                    if let Some(batch) = window.ready(self.clock.now()) {
                        self.run_batch(batch, on_cycle)?;
                    } else if self.has_follow_ups() || !self.queue.is_empty() {
                        self.run_batch(Vec::new(), on_cycle)?;
                    }
                }
                SourceEvent::Closed => {
                    let batch = window.flush().unwrap_or_default();
                    if !batch.is_empty() || self.has_follow_ups() || !self.queue.is_empty() {
                        self.run_batch(batch, on_cycle)?;
                    }
                    break;
                }
            }
        }
        self.flush()
    }

    /// Forces the logs to disk and refreshes the graph snapshot.
    pub fn flush(&mut self) -> Result<()> {
        if let Some(logs) = &mut self.logs {
            logs.events.sync()?;
            logs.suggestions.sync()?;
            logs.history.sync()?;
        }
        self.save_snapshot()
    }
}

/// 1-based line range of `new` that differs from `old`, trimming the common
/// head and tail.
pub fn changed_lines(old: &str, new: &str) -> (u32, u32) {
    let a: Vec<&str> = old.lines().collect();
    let b: Vec<&str> = new.lines().collect();
    let head = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let tail = a[head..]
        .iter()
        .rev()
        .zip(b[head..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let start = head + 1;
    let end = (b.len() - tail).max(start);
    (start as u32, end as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn changed_lines_trims_common_parts() {
        assert_eq!(changed_lines("a\nb\nc\n", "a\nX\nc\n"), (2, 2));
        assert_eq!(changed_lines("a\nb\n", "a\nb\nc\nd\n"), (3, 4));
        assert_eq!(changed_lines("a\nb\nc\n", "a\nc\n"), (2, 2));
        assert_eq!(changed_lines("", "x\n"), (1, 1));
    }
}
