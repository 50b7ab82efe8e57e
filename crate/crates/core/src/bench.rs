//! Synthetic corpora with planted faults, and proposed-versus-baseline runs
//! over them with the mock backend.
//!
//! A corpus is a set of Swift-like modules `src/modNNN.swift` whose imports
//! form a random DAG. Faults are marker comments on their own line in front
//! of a code line, optionally alongside a classic mutation of that line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::codegraph::{creation_events, relative_path, Change, CodeGraph, ScannedFile};
use crate::config::EngineConfig;
use crate::coverage::{acceptance_rate, detection_accuracy};
use crate::error::{Error, Result};
use crate::gateway::markers::{cross_file_marker, local_marker};
use crate::gateway::{MockBackend, SuggestionKind};
use crate::orchestrator::{Engine, PendingChange, SuggestionId, SuggestionStatus};
use crate::retrieval::ContextMode;
use crate::time::{ManualClock, Timestamp};

pub const MANIFEST_FILE: &str = "faults.json";
/// Fixed start of the simulated clock so runs are reproducible.
pub const BENCH_EPOCH: Timestamp = Timestamp(1_700_000_000_000);

const FUNCS_PER_FILE: usize = 3;
const SLOTS_PER_FILE: usize = FUNCS_PER_FILE * 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub local: usize,
    pub xfile: usize,
    /// Apply a mutant operator to each faulty line as well.
    #[serde(default)]
    pub mutants: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FaultKind {
    #[serde(rename = "LOCAL")]
    Local,
    #[serde(rename = "XFILE")]
    CrossFile { peer: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutantOp {
    RelationalFlip,
    ConstantShift,
    ConditionNegation,
    ArithmeticSwap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEntry {
    pub fault_id: String,
    pub path: String,
    /// 1-based line of the marker.
    pub line: u32,
    #[serde(flatten)]
    pub kind: FaultKind,
    #[serde(default)]
    pub mutant_op: Option<MutantOp>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultManifest {
    pub seed: u64,
    pub n_files: usize,
    pub spec: FaultSpec,
    pub entries: Vec<FaultEntry>,
}

impl FaultManifest {
    pub fn fault_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.fault_id.as_str())
    }

    pub fn cross_file_ids(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| matches!(e.kind, FaultKind::CrossFile { .. }))
            .map(|e| e.fault_id.as_str())
    }

    pub fn faulty_paths(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.path.as_str()).collect()
    }
}

/// An in-memory corpus: file tree plus its ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub files: BTreeMap<String, String>,
    pub manifest: FaultManifest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SlotKind {
    Condition,
    Accumulate,
    Return,
}

struct Line {
    text: String,
    slot: Option<SlotKind>,
}

fn module_path(i: usize) -> String {
    format!("src/mod{i:03}.swift")
}

fn module_lines(i: usize, imports: &[usize], rng: &mut ChaCha8Rng) -> Vec<Line> {
    let plain = |text: String| Line { text, slot: None };
    let mut lines = vec![plain(format!("// module: mod{i:03}"))];
    lines.extend(imports.iter().map(|m| plain(format!("import mod{m:03}"))));
    for f in 0..FUNCS_PER_FILE {
        let seed_expr = if imports.is_empty() {
            "x".to_string()
        } else {
            let callee = imports[f % imports.len()];
            format!("mod{callee:03}_f{}(x)", rng.gen_range(0..FUNCS_PER_FILE))
        };
        let (c1, c2, c3) = (rng.gen_range(2..20), rng.gen_range(1..9), rng.gen_range(2..5));
        lines.push(plain(String::new()));
        lines.push(plain(format!("func mod{i:03}_f{f}(_ x: Int) -> Int {{")));
        lines.push(plain(format!("    var total = {seed_expr}")));
        lines.push(Line {
            text: format!("    if x < {c1} {{"),
            slot: Some(SlotKind::Condition),
        });
        lines.push(Line {
            text: format!("        total = total + {c2}"),
            slot: Some(SlotKind::Accumulate),
        });
        lines.push(plain("    }".into()));
        lines.push(Line {
            text: format!("    return total * {c3}"),
            slot: Some(SlotKind::Return),
        });
        lines.push(plain("}".into()));
    }
    lines
}

/// Shifts the last integer literal on the line by one.
fn shift_constant(line: &str, rng: &mut ChaCha8Rng) -> String {
    let end = line.rfind(|c: char| c.is_ascii_digit()).expect("slot lines hold a constant");
    let start = line[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |p| p + 1);
    let value: i64 = line[start..=end].parse().expect("digits");
    let shifted = if rng.gen_bool(0.5) { value + 1 } else { (value - 1).max(0) };
    format!("{}{shifted}{}", &line[..start], &line[end + 1..])
}

fn mutate(line: &str, slot: SlotKind, rng: &mut ChaCha8Rng) -> (String, MutantOp) {
    let ops: &[MutantOp] = match slot {
        SlotKind::Condition => &[
            MutantOp::RelationalFlip,
            MutantOp::ConditionNegation,
            MutantOp::ConstantShift,
        ],
        SlotKind::Accumulate | SlotKind::Return => &[MutantOp::ArithmeticSwap, MutantOp::ConstantShift],
    };
    let op = *ops.choose(rng).expect("non-empty");
    let text = match op {
        MutantOp::RelationalFlip => line.replacen(" < ", " <= ", 1),
        MutantOp::ConditionNegation => {
            let cond = line.trim().trim_start_matches("if ").trim_end_matches(" {");
            line.replacen(&format!("if {cond} {{"), &format!("if !({cond}) {{"), 1)
        }
        MutantOp::ArithmeticSwap => {
            if line.contains(" + ") {
                line.replacen(" + ", " - ", 1)
            } else {
                line.replacen(" * ", " / ", 1)
            }
        }
        MutantOp::ConstantShift => shift_constant(line, rng),
    };
    (text, op)
}

struct Planted {
    file: usize,
    slot: usize,
    fault_id: String,
    kind: FaultKind,
}

impl Corpus {
    /// Deterministic in `(seed, n_files, spec)`.
    pub fn generate(seed: u64, n_files: usize, spec: FaultSpec) -> Result<Corpus> {
        let total = spec.local + spec.xfile;
        if n_files == 0 {
            return Err(Error::Spec("a corpus needs at least one file".into()));
        }
        if spec.xfile > 0 && n_files < 2 {
            return Err(Error::Spec("cross-file faults need at least two files".into()));
        }
        if total > n_files * SLOTS_PER_FILE {
            return Err(Error::Spec(format!(
                "{total} faults do not fit in {n_files} files of {SLOTS_PER_FILE} faultable lines"
            )));
        }
        if spec.xfile > (n_files - 1) * SLOTS_PER_FILE {
            return Err(Error::Spec(format!(
                "{} cross-file faults do not fit in the {} files that import anything",
                spec.xfile,
                n_files - 1
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let imports: Vec<Vec<usize>> = (0..n_files)
            .map(|i| {
                if i == 0 {
                    return Vec::new();
                }
                let k = rng.gen_range(1..=3).min(i);
                let mut picked = rand::seq::index::sample(&mut rng, i, k).into_vec();
                picked.sort_unstable();
                picked
            })
            .collect();
        let mut degree = vec![0usize; n_files];
        for (i, deps) in imports.iter().enumerate() {
            degree[i] += deps.len();
            for d in deps {
                degree[*d] += 1;
            }
        }
        let bodies: Vec<Vec<Line>> = imports
            .iter()
            .enumerate()
            .map(|(i, deps)| module_lines(i, deps, &mut rng))
            .collect();

        // Slot visiting order per file.
        let mut free: Vec<Vec<usize>> = (0..n_files)
            .map(|_| {
                let mut s: Vec<usize> = (0..SLOTS_PER_FILE).collect();
                s.shuffle(&mut rng);
                s
            })
            .collect();
        let mut planted = Vec::with_capacity(total);

        // Cross-file hosts: importing files, least connected first.
        let mut hosts: Vec<usize> = (1..n_files).collect();
        hosts.shuffle(&mut rng);
        hosts.sort_by_key(|i| degree[*i]);
        place(&mut planted, &mut free, &hosts, spec.xfile, |n, file, rng| {
            let peer = *imports[file].choose(rng).expect("hosts import something");
            (
                format!("X{n:03}"),
                FaultKind::CrossFile {
                    peer: module_path(peer),
                },
            )
        }, &mut rng)?;

        let mut all: Vec<usize> = (0..n_files).collect();
        all.shuffle(&mut rng);
        place(&mut planted, &mut free, &all, spec.local, |n, _, _| {
            (format!("L{n:03}"), FaultKind::Local)
        }, &mut rng)?;

        // Render files with markers in front of their slot lines.
        let mut by_file: BTreeMap<usize, BTreeMap<usize, &Planted>> = BTreeMap::new();
        for p in &planted {
            by_file.entry(p.file).or_default().insert(p.slot, p);
        }
        let mut files = BTreeMap::new();
        let mut entries = Vec::with_capacity(total);
        for (i, body) in bodies.iter().enumerate() {
            let path = module_path(i);
            let faults = by_file.remove(&i).unwrap_or_default();
            let mut out: Vec<String> = Vec::with_capacity(body.len() + faults.len());
            let mut slot = 0;
            for line in body {
                let Some(kind) = line.slot else {
                    out.push(line.text.clone());
                    continue;
                };
                let here = slot;
                slot += 1;
                let Some(p) = faults.get(&here) else {
                    out.push(line.text.clone());
                    continue;
                };
                let indent = &line.text[..line.text.len() - line.text.trim_start().len()];
                let marker = match &p.kind {
                    FaultKind::Local => local_marker(&p.fault_id),
                    FaultKind::CrossFile { peer } => cross_file_marker(&p.fault_id, peer),
                };
                out.push(format!("{indent}{marker}"));
                let (text, mutant_op) = if spec.mutants {
                    let (t, op) = mutate(&line.text, kind, &mut rng);
                    (t, Some(op))
                } else {
                    (line.text.clone(), None)
                };
                entries.push(FaultEntry {
                    fault_id: p.fault_id.clone(),
                    path: path.clone(),
                    line: out.len() as u32,
                    kind: p.kind.clone(),
                    mutant_op,
                });
                out.push(text);
            }
            let mut text = out.join("\n");
            text.push('\n');
            files.insert(path, text);
        }
        entries.sort_by(|a, b| a.fault_id.cmp(&b.fault_id));
        Ok(Corpus {
            files,
            manifest: FaultManifest {
                seed,
                n_files,
                spec,
                entries,
            },
        })
    }

    /// Checks the ground truth against the tree: unique ids, markers where
    /// the manifest says, and every cross-file peer within two hops of its
    /// host in the dependency graph.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let graph = self.graph()?;
        for e in &self.manifest.entries {
            if !seen.insert(e.fault_id.as_str()) {
                return Err(Error::Spec(format!("duplicate fault id {}", e.fault_id)));
            }
            let text = self
                .files
                .get(&e.path)
                .ok_or_else(|| Error::Spec(format!("{} is not in the corpus", e.path)))?;
            let line = text.lines().nth(e.line as usize - 1).unwrap_or_default();
            if !line.contains(&format!("FAULT:{}:", e.fault_id)) {
                return Err(Error::Spec(format!("no marker for {} at {}:{}", e.fault_id, e.path, e.line)));
            }
            if let FaultKind::CrossFile { peer } = &e.kind {
                let host = graph.id_of(&e.path).expect("corpus file is indexed");
                let peer_id = graph
                    .id_of(peer)
                    .ok_or_else(|| Error::Spec(format!("peer {peer} of {} is not in the corpus", e.fault_id)))?;
                match graph.graph_distance(host, peer_id)? {
                    Some(d) if d <= 2 => {}
                    other => {
                        return Err(Error::Spec(format!(
                            "peer {peer} of {} is at distance {other:?}",
                            e.fault_id
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Dependency graph of the corpus under default rules.
    pub fn graph(&self) -> Result<CodeGraph> {
        let rules = EngineConfig::default().graph_rules()?;
        let files: Vec<ScannedFile> = self
            .files
            .iter()
            .map(|(path, content)| ScannedFile {
                path: path.clone(),
                content: content.clone(),
            })
            .collect();
        let mut graph = CodeGraph::new();
        for event in creation_events(&files, 1, BENCH_EPOCH) {
            graph.apply_change(&event, &rules)?;
        }
        Ok(graph)
    }

    /// Writes the tree and `faults.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (path, text) in &self.files {
            let full = dir.join(path);
            if let Some(parent) = full.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(full, text)?;
        }
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest)? + "\n",
        )?;
        Ok(())
    }

    /// Reads a corpus written by [`Corpus::write_to`].
    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: FaultManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .map_err(|e| Error::Load {
                path: manifest_path.clone(),
                record: "document".into(),
                reason: e.to_string(),
            })?;
        let mut files = BTreeMap::new();
        for entry in WalkDir::new(dir)
            .into_iter()
            .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'))
        {
            let entry = entry.map_err(|e| Error::Spec(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let Some(rel) = relative_path(dir, entry.path()) else {
                continue;
            };
            if rel == MANIFEST_FILE {
                continue;
            }
            files.insert(rel, fs::read_to_string(entry.path())?);
        }
        Ok(Corpus { files, manifest })
    }
}

fn place(
    planted: &mut Vec<Planted>,
    free: &mut [Vec<usize>],
    order: &[usize],
    count: usize,
    mut label: impl FnMut(usize, usize, &mut ChaCha8Rng) -> (String, FaultKind),
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut made = 0;
    let mut cursor = 0;
    let mut idle_rounds = 0;
    while made < count {
        let file = order[cursor % order.len()];
        cursor += 1;
        if let Some(slot) = free[file].pop() {
            made += 1;
            idle_rounds = 0;
            let (fault_id, kind) = label(made, file, rng);
            planted.push(Planted {
                file,
                slot,
                fault_id,
                kind,
            });
        } else {
            idle_rounds += 1;
            if idle_rounds > order.len() {
                return Err(Error::Spec(format!("ran out of faultable lines after {made} faults")));
            }
        }
    }
    Ok(())
}

/// Writes a generated corpus to `dir` and returns its manifest.
pub fn generate_corpus(seed: u64, n_files: usize, spec: FaultSpec, dir: &Path) -> Result<FaultManifest> {
    let corpus = Corpus::generate(seed, n_files, spec)?;
    corpus.validate()?;
    corpus.write_to(dir)?;
    Ok(corpus.manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// Full retrieval.
    WithContext,
    /// Focus file only.
    NoContext,
}

impl BenchMode {
    pub fn config_name(self) -> &'static str {
        match self {
            BenchMode::WithContext => "proposed",
            BenchMode::NoContext => "baseline",
        }
    }
}

/// How per-bug time is measured. `Off` keeps reports byte-reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    Off,
    /// Engine time only, backend latency excluded.
    #[default]
    Pipeline,
    /// Engine time plus backend latency.
    WithBackend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config_name: String,
    pub mode: BenchMode,
    pub detection_accuracy: f64,
    pub cross_file_accuracy: f64,
    pub overall_coverage: f64,
    pub critical_coverage: f64,
    pub median_time_per_bug_ms: Option<f64>,
    pub acceptance_rate: f64,
    pub faults: usize,
    pub detected: usize,
    pub suggestions: usize,
    pub accepted: usize,
    pub cycles: usize,
    pub model_calls: usize,
    /// Set when a backend failure cut the run short.
    pub partial: bool,
    pub warnings: Vec<String>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Runs one configuration over a private copy of the corpus: every faulty
/// file gets a simulated edit in its own debounce window, all suggestions
/// are auto-accepted, and cycles continue until no follow-ups remain.
pub fn run_experiment(
    corpus: &Corpus,
    base: &EngineConfig,
    mode: BenchMode,
    timing: TimingMode,
) -> Result<BenchRow> {
    let work = tempfile::tempdir()?;
    for (path, text) in &corpus.files {
        let full = work.path().join(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(full, text)?;
    }
    let mut config = base.clone();
    config.auto_accept = true;
    config.retrieval.mode = match mode {
        BenchMode::WithContext => ContextMode::Full,
        BenchMode::NoContext => ContextMode::FocusOnly,
    };
    let clock = Arc::new(ManualClock::new(BENCH_EPOCH));
    let (mut engine, _) = Engine::builder(work.path())
        .config(config.clone())
        .backend(Arc::new(MockBackend))
        .clock(clock.clone())
        .persist(false)
        .init()?;

    let step = config.debounce_ms as i64 + 1;
    let mut job_time: BTreeMap<SuggestionId, f64> = BTreeMap::new();
    let mut partial = false;
    let mut warnings = Vec::new();
    let mut cycles = 0;
    let mut record = |report: &crate::orchestrator::CycleReport, partial: &mut bool, warnings: &mut Vec<String>| {
        for job in &report.jobs {
            if let Some(e) = &job.error {
                *partial = true;
                warnings.push(format!("{}: {e}", job.path));
            }
            let micros = match timing {
                TimingMode::Off => 0,
                TimingMode::Pipeline => job.pipeline_micros,
                TimingMode::WithBackend => job.pipeline_micros + job.backend_micros,
            };
            for id in &job.suggestions {
                job_time.insert(*id, micros as f64 / 1000.0);
            }
        }
    };

    for path in corpus.manifest.faulty_paths() {
        let now = clock.advance_millis(step);
        let graph = engine.graph();
        let Some(node) = graph.node_by_path(path) else {
            warnings.push(format!("{path} is not indexed"));
            continue;
        };
        engine.submit(PendingChange {
            at: now,
            path: path.to_string(),
            change: Change::FileEdited {
                content: node.text.clone(),
                line_start: 1,
                line_end: node.line_count.max(1),
            },
        });
        let report = engine.run_cycle()?;
        cycles += 1;
        record(&report, &mut partial, &mut warnings);
        if partial {
            break;
        }
    }
    let max_follow_ups = 4 * corpus.manifest.entries.len() + 16;
    while !partial && engine.has_follow_ups() && cycles < max_follow_ups {
        clock.advance_millis(step);
        let report = engine.run_cycle()?;
        cycles += 1;
        record(&report, &mut partial, &mut warnings);
    }
    if engine.has_follow_ups() {
        warnings.push(format!("follow-ups still pending after {cycles} cycles"));
    }

    let book = engine.suggestions();
    let drafts: Vec<_> = book.iter().map(|s| &s.draft).collect();
    let detection = detection_accuracy(corpus.manifest.fault_ids(), drafts.iter().copied());
    let cross = detection_accuracy(corpus.manifest.cross_file_ids(), drafts.iter().copied());
    warnings.extend(detection.warning.iter().cloned());
    if let Some(w) = &cross.warning {
        warnings.push(format!("cross-file: {w}"));
    }

    // Earliest suggestion per detected fault.
    let mut first: BTreeMap<&str, SuggestionId> = BTreeMap::new();
    for s in book.iter() {
        if s.draft.kind != SuggestionKind::BugFix {
            continue;
        }
        if let Some(fid) = s.draft.fault_id.as_deref() {
            first.entry(fid).or_insert(s.id);
        }
    }
    let truth: BTreeSet<&str> = corpus.manifest.fault_ids().collect();
    first.retain(|fid, _| truth.contains(fid));
    let median_time = match timing {
        TimingMode::Off => None,
        _ => median(first.values().filter_map(|id| job_time.get(id).copied()).collect()),
    };

    let accepted = book.count(SuggestionStatus::Accepted);
    let acceptance = acceptance_rate(accepted, book.len());
    warnings.extend(acceptance.warning.iter().cloned());
    let coverage = engine.coverage()?;
    Ok(BenchRow {
        config_name: mode.config_name().into(),
        mode,
        detection_accuracy: detection.value,
        cross_file_accuracy: cross.value,
        overall_coverage: coverage.overall,
        critical_coverage: coverage.critical,
        median_time_per_bug_ms: median_time,
        acceptance_rate: acceptance.value,
        faults: corpus.manifest.entries.len(),
        detected: first.len(),
        suggestions: book.len(),
        accepted,
        cycles,
        model_calls: engine.model_calls(),
        partial,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub n_files: usize,
    pub spec: FaultSpec,
    pub timing: TimingMode,
    pub rows: Vec<BenchRow>,
}

/// Both configurations over one corpus, proposed first.
pub fn compare(corpus: &Corpus, config: &EngineConfig, timing: TimingMode) -> Result<BenchReport> {
    let rows = [BenchMode::WithContext, BenchMode::NoContext]
        .into_iter()
        .map(|mode| run_experiment(corpus, config, mode, timing))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        seed: corpus.manifest.seed,
        n_files: corpus.manifest.n_files,
        spec: corpus.manifest.spec,
        timing,
        rows,
    })
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

fn delta(a: f64, b: f64) -> String {
    format!("{:+.1}%", (a - b) * 100.0)
}

fn millis(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |ms| format!("{ms:.3} ms"))
}

impl BenchReport {
    pub fn row(&self, mode: BenchMode) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned text table: one line per metric, proposed and baseline
    /// columns and their difference.
    pub fn table(&self) -> String {
        let (Some(p), Some(b)) = (self.row(BenchMode::WithContext), self.row(BenchMode::NoContext)) else {
            return self.single_rows();
        };
        let rows: [(&str, String, String, String); 6] = [
            (
                "Bug Detection Accuracy",
                pct(p.detection_accuracy),
                pct(b.detection_accuracy),
                delta(p.detection_accuracy, b.detection_accuracy),
            ),
            (
                "Overall Test Coverage",
                pct(p.overall_coverage),
                pct(b.overall_coverage),
                delta(p.overall_coverage, b.overall_coverage),
            ),
            (
                "Critical Coverage",
                pct(p.critical_coverage),
                pct(b.critical_coverage),
                delta(p.critical_coverage, b.critical_coverage),
            ),
            (
                "Cross-File Bug Detection",
                pct(p.cross_file_accuracy),
                pct(b.cross_file_accuracy),
                delta(p.cross_file_accuracy, b.cross_file_accuracy),
            ),
            (
                "Execution Time Per Bug",
                millis(p.median_time_per_bug_ms),
                millis(b.median_time_per_bug_ms),
                "-".into(),
            ),
            (
                "Suggestion Acceptance Rate",
                pct(p.acceptance_rate),
                pct(b.acceptance_rate),
                delta(p.acceptance_rate, b.acceptance_rate),
            ),
        ];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>14} {:>22}",
            "Metric", "Proposed Model", "Baseline Model", "Change from Baseline"
        );
        let _ = writeln!(out, "{}", "-".repeat(81));
        for (name, a, bb, d) in rows {
            let _ = writeln!(out, "{name:<28} {a:>14} {bb:>14} {d:>22}");
        }
        for r in [p, b] {
            if r.partial {
                let _ = writeln!(out, "note: {} row is partial", r.config_name);
            }
        }
        out
    }

    fn single_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}: detection {} cross-file {} coverage {} critical {} time {} acceptance {}",
                r.config_name,
                pct(r.detection_accuracy),
                pct(r.cross_file_accuracy),
                pct(r.overall_coverage),
                pct(r.critical_coverage),
                millis(r.median_time_per_bug_ms),
                pct(r.acceptance_rate)
            );
        }
        out
    }
}
