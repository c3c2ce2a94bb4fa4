//! Batch synthesis and standalone re-verification of records.
//!
//! Every task draws from its own random stream derived from the master seed
//! and the task index, so output is identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::LlmClient;
use crate::corpus::{ClaimObject, KnowledgeBase};
use crate::dataset::{DatasetHeader, QaRecord};
use crate::hcsp::{check_unique, tree_to_hcsp, Verdict};
use crate::question::{naturalize, render_structured, NaturalizeConfig, Naturalized};
use crate::synth::{build_tree, replay, BuildConfig, Outcome};
use crate::tree::ResearchTree;

pub fn task_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

pub fn record_id(index: usize) -> String {
    format!("q{index:06}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortedTask {
    pub index: usize,
    pub attempts: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct SynthesisRun {
    /// Sorted by record id.
    pub records: Vec<QaRecord>,
    pub aborted: Vec<AbortedTask>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::synth::SynthError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Builds `n` trees with `cfg.seed` as master seed on `workers` threads (0 = rayon default).
pub fn synthesize(kb: &KnowledgeBase, cfg: &BuildConfig, n: usize, workers: usize) -> Result<SynthesisRun, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let results: Vec<Result<QaRecord, AbortedTask>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|index| {
                let mut rng = task_rng(cfg.seed, index);
                match build_tree(kb, &mut rng, cfg) {
                    Outcome::Built(built) => QaRecord::from_built(kb, record_id(index), &built).map_err(|e| AbortedTask {
                        index,
                        attempts: 1,
                        reason: e.to_string(),
                    }),
                    Outcome::Aborted { attempts, reason } => Err(AbortedTask { index, attempts, reason }),
                }
            })
            .collect()
    });
    let mut run = SynthesisRun::default();
    for r in results {
        match r {
            Ok(rec) => run.records.push(rec),
            Err(abort) => {
                tracing::debug!(index = abort.index, reason = %abort.reason, "task aborted");
                run.aborted.push(abort);
            }
        }
    }
    Ok(run)
}

pub fn dataset_header(cfg: &BuildConfig, record_count: usize) -> DatasetHeader {
    let mut header = DatasetHeader::new(Some(cfg.seed), record_count);
    header.config = serde_json::to_value(cfg).ok();
    header
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Re-derives everything a record claims from its tree and the corpus.
pub fn verify_record(kb: &KnowledgeBase, record: &QaRecord) -> Result<(), String> {
    let tree = ResearchTree::parse_canonical(&record.tree).map_err(|e| format!("tree: {e}"))?;
    if tree.root_content() != &record.gold {
        return Err("gold differs from tree root".into());
    }
    if kb.surface_form(&record.gold) != record.answer {
        return Err("answer is not the gold surface form".into());
    }
    if tree.vertex_count() != record.metrics.vertex_count || tree.tree_height() != record.metrics.height {
        return Err("metrics do not match tree".into());
    }
    let contents: std::collections::BTreeMap<_, _> = tree.vertices().map(|v| (v.id, v.content)).collect();
    if contents != record.intermediate_answers {
        return Err("intermediate answers do not match tree".into());
    }
    for edge in tree.edges() {
        let parent = tree.content(edge.parent).map_err(|e| e.to_string())?;
        let child = tree.content(edge.child).map_err(|e| e.to_string())?;
        let (subject, object) = if edge.label.inverse { (child, parent) } else { (parent, child) };
        let supported = subject.as_entity().and_then(|s| kb.claims_of(s).ok()).is_some_and(|claims| {
            claims
                .iter()
                .any(|c| c.predicate == edge.label.predicate && &c.object == object && c.evidence == edge.label.evidence)
        });
        if !supported {
            return Err(format!("edge {}->{} has no supporting claim", edge.parent, edge.child));
        }
    }
    let evidence: std::collections::BTreeSet<_> = tree.edges().filter_map(|e| tree.edge_source(e).cloned()).collect();
    if evidence.into_iter().collect::<Vec<_>>() != record.evidence_pages {
        return Err("evidence pages do not match tree".into());
    }
    if !record.action_log.is_empty() {
        let replayed = replay(&record.action_log).map_err(|e| format!("action log: {e}"))?;
        if replayed != tree {
            return Err("action log does not rebuild the tree".into());
        }
    }
    let node = tree_to_hcsp(&tree);
    if render_structured(kb, &node).map_err(|e| e.to_string())? != record.question {
        return Err("question text does not match tree".into());
    }
    match check_unique(kb, &node).map_err(|e| e.to_string())? {
        Verdict::Unique(x) if x == record.gold => Ok(()),
        Verdict::Unique(x) => Err(format!("tree determines {} instead of gold", kb.surface_form(&x))),
        other => Err(format!("tree is not uniquely determined: {other:?}")),
    }
}

pub fn verify_records(kb: &KnowledgeBase, records: &[QaRecord]) -> VerifyReport {
    let failures: Vec<Option<VerifyFailure>> = records
        .par_iter()
        .map(|r| {
            verify_record(kb, r).err().map(|reason| VerifyFailure {
                id: r.id.clone(),
                reason,
            })
        })
        .collect();
    VerifyReport {
        checked: records.len(),
        failures: failures.into_iter().flatten().collect(),
    }
}

/// Helper for callers holding only the gold object.
pub fn gold_surface(kb: &KnowledgeBase, gold: &ClaimObject) -> String {
    kb.surface_form(gold)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaturalizeSummary {
    pub rewritten: usize,
    pub fallbacks: usize,
    pub client_errors: usize,
}

/// Adds a naturalized question to every record; records whose rewrite falls
/// back keep only the structured text.
pub fn naturalize_records(
    kb: &KnowledgeBase,
    records: &mut [QaRecord],
    client: &dyn LlmClient,
    cfg: &NaturalizeConfig,
) -> NaturalizeSummary {
    let outcomes: Vec<Option<Naturalized>> = records
        .par_iter()
        .map(|r| {
            let tree = ResearchTree::parse_canonical(&r.tree).ok()?;
            naturalize(kb, &tree_to_hcsp(&tree), client, cfg).ok()
        })
        .collect();
    let mut summary = NaturalizeSummary::default();
    for (record, outcome) in records.iter_mut().zip(outcomes) {
        match outcome {
            Some(n) if !n.fallback => {
                record.set_natural_question(n.text);
                summary.rewritten += 1;
            }
            Some(n) => {
                summary.fallbacks += 1;
                summary.client_errors += n.client_error.is_some() as usize;
            }
            None => summary.fallbacks += 1,
        }
    }
    summary
}

/// Sizes the global pool used by gates and verification. Only the first call
/// in a process takes effect.
pub fn init_global_pool(workers: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()
}
