//! `hcsp` — corpus ingestion, question synthesis, verification, quality gates
//! and trajectory scoring from one binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 unreadable or malformed
//! input, 4 verification failure.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use hcsp_core::client::{HttpClient, JudgeClient};
use hcsp_core::corpus::{load_corpus, IngestPolicy};
use hcsp_core::dataset::{import_records, stats_report, write_records, Dataset, DatasetHeader, ProbeColumns, QaRecord};
use hcsp_core::gate::{difficulty_filter, verifiability_filter, GateOutcome, DEFAULT_DISTRACTORS, DEFAULT_TRIALS};
use hcsp_core::pipeline::{dataset_header, init_global_pool, naturalize_records, synthesize, verify_records};
use hcsp_core::question::NaturalizeConfig;
use hcsp_core::synth::BuildConfig;
use hcsp_core::synthetic::generate_pages;
use hcsp_core::trajectory::{
    assign_group_advantages, parse_trajectory, read_trajectory_records, score, screen_shortcuts, write_scored,
    TrajectoryVerdict,
};
use hcsp_core::KnowledgeBase;
use serde::Deserialize;
use tracing_subscriber::EnvFilter;

const LLM_ENV: &str = "HCSP_LLM";
const JUDGE_ENV: &str = "HCSP_JUDGE";

#[derive(Debug, Parser)]
#[command(name = "hcsp", version, about = "Hierarchical constraint question synthesis pipeline")]
struct Cli {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corpus file (JSON lines, one page per line).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Number of records to synthesize.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a corpus and print a summary.
    Ingest,
    /// Build question/answer records from the corpus.
    Synthesize {
        /// Rewrite questions through the HCSP_LLM endpoint, if configured.
        #[arg(long)]
        naturalize: bool,
    },
    /// Re-check every record of a dataset against the corpus.
    Verify {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run a quality gate through the HCSP_JUDGE endpoint.
    Gate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        gate: GateArg,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        distractors: Option<usize>,
        /// Per-record verdict file; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-size statistics table.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON object mapping bucket labels to externally measured columns.
        #[arg(long)]
        probes: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Re-export a dataset, optionally adding naturalized questions.
    Export {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        naturalize: bool,
    },
    /// Check trajectory formatting line by line.
    TrajValidate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score trajectories, compute group advantages and optionally screen shortcuts.
    TrajReward {
        #[arg(long)]
        input: PathBuf,
        /// Screen accepted trajectories through the HCSP_JUDGE endpoint.
        #[arg(long)]
        screen: bool,
        /// Dataset supplying question texts for screening.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Write a deterministic synthetic corpus.
    GenCorpus {
        #[arg(long, default_value_t = 1000)]
        pages: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GateArg {
    Difficulty,
    Verifiability,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineConfig {
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    n: Option<usize>,
    ingest: IngestPolicy,
    build: Option<BuildConfig>,
    gate: GateSettings,
    naturalize: Option<NaturalizeConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GateSettings {
    trials: Option<usize>,
    distractors: Option<usize>,
}

/// Resolved settings after merging the config file with flags.
struct Settings {
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: usize,
    n: usize,
    ingest: IngestPolicy,
    build: BuildConfig,
    gate: GateSettings,
    naturalize: NaturalizeConfig,
}

enum Failure {
    Config(anyhow::Error),
    Input(anyhow::Error),
    Verification(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Input(_) => 3,
            Self::Verification(_) => 4,
            Self::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Self::Other(err)
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        Self::Other(err.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn input<E: Into<anyhow::Error>>(err: E) -> Failure {
    Failure::Input(err.into())
}

fn settings(cli: &Cli) -> Result<Settings> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .map_err(Failure::Config)?;
            toml::from_str::<PipelineConfig>(&text)
                .with_context(|| format!("invalid config {}", path.display()))
                .map_err(Failure::Config)?
        }
        None => PipelineConfig::default(),
    };
    let mut build = file.build.unwrap_or_default();
    let seed = cli.seed.or(file.seed);
    if let Some(seed) = seed {
        build.seed = seed;
    }
    build.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(Settings {
        corpus: cli.corpus.clone().or(file.corpus),
        out: cli.out.clone().or(file.out),
        seed,
        workers: cli.workers.or(file.workers).unwrap_or(0),
        n: cli.n.or(file.n).unwrap_or(100),
        ingest: file.ingest,
        build,
        gate: file.gate,
        naturalize: file.naturalize.unwrap_or_default(),
    })
}

impl Settings {
    fn load_kb(&self) -> Result<KnowledgeBase> {
        let path = self
            .corpus
            .as_ref()
            .ok_or_else(|| Failure::Config(anyhow!("no corpus given (--corpus or `corpus` in config)")))?;
        let kb = load_corpus(path, &self.ingest).map_err(input)?;
        tracing::info!(pages = kb.page_count(), claims = kb.claim_count(), "corpus loaded");
        Ok(kb)
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn pool(&self) {
        // Gates and verification run on the global pool; synthesis builds its own.
        if self.workers > 0 {
            if let Err(e) = init_global_pool(self.workers) {
                tracing::warn!(%e, "worker pool already initialised");
            }
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    import_records(path).map_err(input)
}

fn write_dataset(settings: &Settings, header: &DatasetHeader, records: &[QaRecord]) -> Result<()> {
    let mut out = settings.sink()?;
    write_records(&mut out, header, records)?;
    out.flush()?;
    Ok(())
}

fn output_header(base: Option<DatasetHeader>, seed: Option<u64>, count: usize) -> DatasetHeader {
    let mut header = base.unwrap_or_else(|| DatasetHeader::new(seed, count));
    header.record_count = count;
    if header.master_seed.is_none() {
        header.master_seed = seed;
    }
    header
}

fn judge() -> Option<HttpClient> {
    let client = HttpClient::from_env(JUDGE_ENV);
    if client.is_none() {
        tracing::warn!("{JUDGE_ENV}_ENDPOINT not set; judge-dependent stage skipped");
    }
    client
}

fn llm() -> Option<HttpClient> {
    let client = HttpClient::from_env(LLM_ENV);
    if client.is_none() {
        tracing::warn!("{LLM_ENV}_ENDPOINT not set; naturalization skipped");
    }
    client
}

fn naturalize_if_enabled(settings: &Settings, kb: &KnowledgeBase, records: &mut [QaRecord], enabled: bool) {
    if !enabled {
        return;
    }
    if let Some(client) = llm() {
        let summary = naturalize_records(kb, records, &client, &settings.naturalize);
        eprintln!(
            "naturalized {} records ({} kept structured text, {} client errors)",
            summary.rewritten, summary.fallbacks, summary.client_errors
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    let settings = settings(cli)?;
    settings.pool();
    match &cli.command {
        Command::Ingest => {
            let kb = settings.load_kb()?;
            let anchors = kb.valid_anchors(&settings.build.anchor).len();
            let r = kb.report();
            let summary = serde_json::json!({
                "pages": r.pages,
                "claims": r.claims,
                "dangling_links": r.dangling_links,
                "dangling_claims": r.dangling_claims,
                "blank_lines": r.blank_lines,
                "valid_anchors": anchors,
            });
            let mut out = settings.sink()?;
            writeln!(out, "{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?)?;
            out.flush()?;
        }
        Command::Synthesize { naturalize } => {
            let kb = settings.load_kb()?;
            let mut run = synthesize(&kb, &settings.build, settings.n, settings.workers)
                .map_err(|e| Failure::Config(e.into()))?;
            naturalize_if_enabled(&settings, &kb, &mut run.records, *naturalize);
            for a in &run.aborted {
                eprintln!("aborted task {} after {} attempts: {}", a.index, a.attempts, a.reason);
            }
            eprintln!(
                "synthesized {} of {} records (seed {})",
                run.records.len(),
                settings.n,
                settings.build.seed
            );
            write_dataset(&settings, &dataset_header(&settings.build, run.records.len()), &run.records)?;
        }
        Command::Verify { dataset } => {
            let kb = settings.load_kb()?;
            let ds = load_dataset(dataset)?;
            let report = verify_records(&kb, &ds.records);
            for f in &report.failures {
                eprintln!("FAIL {}: {}", f.id, f.reason);
            }
            if let Some(first) = report.failures.first() {
                return Err(Failure::Verification(format!(
                    "{} of {} records failed verification (first: {})",
                    report.failures.len(),
                    report.checked,
                    first.id
                )));
            }
            println!("verified {} records", report.checked);
        }
        Command::Gate {
            dataset,
            gate,
            trials,
            distractors,
            report,
        } => {
            let ds = load_dataset(dataset)?;
            let seed = settings.seed.or(ds.header.as_ref().and_then(|h| h.master_seed));
            let Some(client) = judge() else {
                let header = output_header(ds.header, seed, ds.records.len());
                return write_dataset(&settings, &header, &ds.records);
            };
            let outcome: GateOutcome = match gate {
                GateArg::Difficulty => {
                    let trials = trials.or(settings.gate.trials).unwrap_or(DEFAULT_TRIALS);
                    difficulty_filter(ds.records, &client as &dyn JudgeClient, trials)
                }
                GateArg::Verifiability => {
                    let kb = settings.load_kb()?;
                    let distractors = distractors.or(settings.gate.distractors).unwrap_or(DEFAULT_DISTRACTORS);
                    verifiability_filter(ds.records, &kb, &client, distractors, seed.unwrap_or(0))
                }
            };
            let s = &outcome.report.summary;
            eprintln!("gate kept {} of {} records", outcome.kept.len(), s.total);
            match report {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
                    outcome.report.write_jsonl(&mut w)?;
                    w.flush()?;
                }
                None if settings.out.is_some() => {
                    let mut w = io::stdout().lock();
                    outcome.report.write_jsonl(&mut w)?;
                }
                None => outcome.report.write_jsonl(io::stderr().lock())?,
            }
            let header = output_header(ds.header, seed, outcome.kept.len());
            write_dataset(&settings, &header, &outcome.kept)?;
        }
        Command::Stats { dataset, probes, json } => {
            let ds = load_dataset(dataset)?;
            let mut table = stats_report(&ds.records);
            if let Some(path) = probes {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))
                    .map_err(Failure::Input)?;
                let probes: BTreeMap<String, ProbeColumns> = serde_json::from_str(&text)
                    .with_context(|| format!("invalid probe file {}", path.display()))
                    .map_err(Failure::Input)?;
                table = table.with_probes(&probes);
            }
            let mut out = settings.sink()?;
            if *json {
                writeln!(out, "{}", serde_json::to_string_pretty(&table).map_err(anyhow::Error::from)?)?;
            } else {
                write!(out, "{}", table.render_text())?;
            }
            out.flush()?;
        }
        Command::Export { dataset, naturalize } => {
            let mut ds = load_dataset(dataset)?;
            if *naturalize {
                let kb = settings.load_kb()?;
                naturalize_if_enabled(&settings, &kb, &mut ds.records, true);
            }
            let header = output_header(ds.header, settings.seed, ds.records.len());
            write_dataset(&settings, &header, &ds.records)?;
        }
        Command::TrajValidate { input: path } => {
            let records = read_trajectory_records(path).map_err(input)?;
            let mut out = settings.sink()?;
            let mut invalid = 0;
            for r in &records {
                let line = match parse_trajectory(&r.raw) {
                    Ok(t) => serde_json::json!({"id": r.id, "valid": true, "searches": t.search_count()}),
                    Err(e) => {
                        invalid += 1;
                        serde_json::json!({"id": r.id, "valid": false, "position": e.position, "error": e.message})
                    }
                };
                writeln!(out, "{line}")?;
            }
            out.flush()?;
            eprintln!("{} trajectories, {} malformed", records.len(), invalid);
        }
        Command::TrajReward {
            input: path,
            screen,
            dataset,
        } => {
            let records = read_trajectory_records(path).map_err(input)?;
            let mut scored: Vec<_> = records.iter().map(score).collect();
            assign_group_advantages(&mut scored);
            let accepted = scored.iter().filter(|s| s.verdict == TrajectoryVerdict::Accepted).count();
            let mut summary = serde_json::json!({
                "total": scored.len(),
                "accepted": accepted,
                "format_errors": scored.iter().filter(|s| s.verdict == TrajectoryVerdict::FormatError).count(),
                "wrong_answers": scored.iter().filter(|s| s.verdict == TrajectoryVerdict::WrongAnswer).count(),
            });
            if *screen {
                if let Some(client) = judge() {
                    let questions: HashMap<String, String> = match dataset {
                        Some(p) => load_dataset(p)?
                            .records
                            .into_iter()
                            .map(|r| (r.id.clone(), r.question_text().to_string()))
                            .collect(),
                        None => HashMap::new(),
                    };
                    let candidates = scored.iter().filter(|s| s.verdict == TrajectoryVerdict::Accepted).cloned().collect();
                    let (_, flagged) = screen_shortcuts(candidates, &client, |qid| questions.get(qid).cloned());
                    summary["shortcut_flagged"] = flagged.iter().map(|s| s.record.id.clone()).collect();
                }
            }
            match &settings.out {
                Some(p) => write_scored(p, &scored).with_context(|| format!("cannot write {}", p.display()))?,
                None => {
                    let mut w = io::stdout().lock();
                    for s in &scored {
                        writeln!(w, "{}", serde_json::to_string(s).map_err(anyhow::Error::from)?)?;
                    }
                }
            }
            eprintln!("{summary}");
        }
        Command::GenCorpus { pages } => {
            let seed = settings.seed.unwrap_or(1);
            let kb = KnowledgeBase::from_pages(generate_pages(*pages, seed), &IngestPolicy::default())
                .map_err(anyhow::Error::from)?;
            let mut out = settings.sink()?;
            kb.write_corpus(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let code = failure.code();
            match failure {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Input(e) => eprintln!("input error: {e:#}"),
                Failure::Verification(msg) => eprintln!("verification failed: {msg}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(code)
        }
    }
}
