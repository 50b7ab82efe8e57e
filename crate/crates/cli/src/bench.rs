use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Subcommand, ValueEnum};
use ctt_core::bench::{compare, generate_corpus, run_experiment, BenchMode, BenchReport, Corpus, FaultSpec, TimingMode};
use ctt_core::EngineConfig;

#[derive(Subcommand)]
pub enum BenchAction {
    /// Write a synthetic corpus with planted faults.
    Gen {
        /// Output directory.
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        files: usize,
        #[arg(long, default_value_t = 10)]
        local: usize,
        #[arg(long, default_value_t = 10)]
        xfile: usize,
        /// Apply a mutant operator next to every marker.
        #[arg(long)]
        mutants: bool,
    },
    /// Run one or both configurations over a corpus.
    Run {
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "pipeline")]
        timing: Timing,
        /// Engine config; defaults to `ctt.json` in the corpus or built-ins.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print a saved report.
    Report {
        report: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    WithContext,
    NoContext,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Timing {
    Off,
    Pipeline,
    WithBackend,
}

impl From<Timing> for TimingMode {
    fn from(t: Timing) -> Self {
        match t {
            Timing::Off => TimingMode::Off,
            Timing::Pipeline => TimingMode::Pipeline,
            Timing::WithBackend => TimingMode::WithBackend,
        }
    }
}

pub fn run(action: BenchAction) -> Result<()> {
    match action {
        BenchAction::Gen {
            out,
            seed,
            files,
            local,
            xfile,
            mutants,
        } => {
            fs::create_dir_all(&out)?;
            let spec = FaultSpec { local, xfile, mutants };
            let manifest = generate_corpus(seed, files, spec, &out)?;
            outln!(
                "wrote {files} files with {} faults to {}",
                manifest.entries.len(),
                out.display()
            );
            Ok(())
        }
        BenchAction::Run {
            corpus,
            mode,
            timing,
            config,
            out,
            json,
        } => {
            let loaded = Corpus::load(&corpus).with_context(|| format!("cannot load corpus {}", corpus.display()))?;
            loaded.validate()?;
            let config = load_config(config.as_deref(), &corpus)?;
            let timing = timing.into();
            let report = match mode {
                Mode::Both => compare(&loaded, &config, timing)?,
                Mode::WithContext | Mode::NoContext => {
                    let mode = if matches!(mode, Mode::WithContext) {
                        BenchMode::WithContext
                    } else {
                        BenchMode::NoContext
                    };
                    BenchReport {
                        seed: loaded.manifest.seed,
                        n_files: loaded.manifest.n_files,
                        spec: loaded.manifest.spec,
                        timing,
                        rows: vec![run_experiment(&loaded, &config, mode, timing)?],
                    }
                }
            };
            if let Some(path) = out {
                fs::write(&path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
            }
            print_report(&report, json);
            Ok(())
        }
        BenchAction::Report { report, json } => {
            let text = fs::read_to_string(&report).with_context(|| format!("cannot read {}", report.display()))?;
            let parsed: BenchReport =
                serde_json::from_str(&text).with_context(|| format!("{} is not a bench report", report.display()))?;
            print_report(&parsed, json);
            Ok(())
        }
    }
}

fn load_config(explicit: Option<&Path>, corpus: &Path) -> Result<EngineConfig> {
    match explicit {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let config: EngineConfig = serde_json::from_str(&text)?;
            config.validate()?;
            Ok(config)
        }
        None => Ok(EngineConfig::load(corpus)?),
    }
}

fn print_report(report: &BenchReport, json: bool) {
    if json {
        out!("{}", report.to_json());
    } else {
        out!("{}", report.table());
        for row in &report.rows {
            for w in &row.warnings {
                eprintln!("{}: {w}", row.config_name);
            }
        }
    }
}
