//! Post-synthesis quality gates.
//!
//! The difficulty gate drops questions a judge answers closed-book; the
//! verifiability gate keeps only questions a judge can answer uniquely from the
//! evidence pages mixed with distractors. Judges sit behind [`JudgeClient`].

use std::collections::BTreeSet;
use std::io::{self, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{ClientError, JudgeClient};
use crate::corpus::{KnowledgeBase, PageId};
use crate::dataset::QaRecord;

pub const DIFFICULTY_PROMPT: &str = include_str!("../assets/prompts/difficulty_v1.txt");
pub const VERIFIABILITY_PROMPT: &str = include_str!("../assets/prompts/verifiability_v1.txt");
pub const DIFFICULTY_PROMPT_VERSION: &str = "difficulty_v1";
pub const VERIFIABILITY_PROMPT_VERSION: &str = "verifiability_v1";

pub const DEFAULT_TRIALS: usize = 1;
pub const DEFAULT_DISTRACTORS: usize = 9;

/// Normalizes an answer: lowercase, punctuation removed, a leading article
/// dropped and whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut tokens: Vec<&str> = lowered.split_whitespace().collect();
    // A lone article is the whole answer, not a prefix.
    if tokens.len() > 1 && matches!(tokens[0], "a" | "an" | "the") {
        tokens.remove(0);
    }
    tokens.join(" ")
}

/// Exact match after normalization; no partial credit.
pub fn answer_match(prediction: &str, gold_surface: &str) -> bool {
    normalize_answer(prediction) == normalize_answer(gold_surface)
}

/// Pulls the value of a `Key: value` line out of a judge response.
pub fn response_field<'a>(response: &'a str, key: &str) -> Option<&'a str> {
    response.lines().find_map(|line| {
        let line = line.trim();
        let (k, v) = line.split_once(':')?;
        k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Difficulty,
    Verifiability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVerdict {
    Kept,
    RemovedDifficulty,
    RemovedWrong,
    RemovedAmbiguous,
    RemovedUnsolvable,
}

impl GateVerdict {
    pub fn is_kept(self) -> bool {
        self == Self::Kept
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFlag {
    /// The judge could not be reached; the record was kept unprobed.
    Unprobed,
    /// The judge failed or replied off-template; the record was removed.
    JudgeError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateEntry {
    pub record_id: String,
    pub verdict: GateVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<GateFlag>,
    /// Last judge answer or error text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub total: usize,
    pub kept: usize,
    pub removed_difficulty: usize,
    pub removed_wrong: usize,
    pub removed_ambiguous: usize,
    pub removed_unsolvable: usize,
    pub flagged: usize,
    pub kept_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub gate: GateKind,
    pub prompt_version: String,
    /// Sorted by record id.
    pub entries: Vec<GateEntry>,
    pub summary: GateSummary,
}

impl GateReport {
    pub fn new(gate: GateKind, mut entries: Vec<GateEntry>) -> Self {
        entries.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        let mut s = GateSummary {
            total: entries.len(),
            ..Default::default()
        };
        for e in &entries {
            match e.verdict {
                GateVerdict::Kept => s.kept += 1,
                GateVerdict::RemovedDifficulty => s.removed_difficulty += 1,
                GateVerdict::RemovedWrong => s.removed_wrong += 1,
                GateVerdict::RemovedAmbiguous => s.removed_ambiguous += 1,
                GateVerdict::RemovedUnsolvable => s.removed_unsolvable += 1,
            }
            s.flagged += e.flag.is_some() as usize;
        }
        s.kept_rate = if s.total == 0 { 0.0 } else { s.kept as f64 / s.total as f64 };
        let prompt_version = match gate {
            GateKind::Difficulty => DIFFICULTY_PROMPT_VERSION,
            GateKind::Verifiability => VERIFIABILITY_PROMPT_VERSION,
        };
        Self {
            gate,
            prompt_version: prompt_version.to_string(),
            entries,
            summary: s,
        }
    }

    /// One line per record, then a `{"summary": ...}` line.
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "summary": self.summary,
            "gate": self.gate,
            "prompt_version": self.prompt_version,
        });
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        out.flush()
    }

    pub fn verdict_of(&self, record_id: &str) -> Option<GateVerdict> {
        self.entries
            .binary_search_by(|e| e.record_id.as_str().cmp(record_id))
            .ok()
            .map(|i| self.entries[i].verdict)
    }
}

#[derive(Clone, Debug)]
pub struct GateOutcome {
    pub kept: Vec<QaRecord>,
    pub removed: Vec<QaRecord>,
    pub report: GateReport,
}

fn partition(records: Vec<QaRecord>, entries: Vec<GateEntry>, gate: GateKind) -> GateOutcome {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (record, entry) in records.into_iter().zip(&entries) {
        if entry.verdict.is_kept() {
            kept.push(record);
        } else {
            removed.push(record);
        }
    }
    GateOutcome {
        kept,
        removed,
        report: GateReport::new(gate, entries),
    }
}

pub fn difficulty_prompt(record: &QaRecord) -> String {
    DIFFICULTY_PROMPT.replace("{{question}}", record.question_text())
}

fn probe_difficulty(record: &QaRecord, judge: &dyn JudgeClient, trials: usize) -> GateEntry {
    let prompt = difficulty_prompt(record);
    let mut entry = GateEntry {
        record_id: record.id.clone(),
        verdict: GateVerdict::Kept,
        flag: None,
        detail: None,
    };
    for _ in 0..trials {
        match judge.answer(&prompt) {
            Ok(response) => {
                let answer = response_field(&response, "answer").unwrap_or(response.trim());
                entry.detail = Some(answer.to_string());
                if answer_match(answer, &record.answer) {
                    entry.verdict = GateVerdict::RemovedDifficulty;
                    return entry;
                }
            }
            Err(err) => {
                tracing::warn!(record = %record.id, %err, "difficulty probe failed");
                entry.flag = Some(GateFlag::Unprobed);
                entry.detail = Some(err.to_string());
                return entry;
            }
        }
    }
    entry
}

/// Removes a record iff any of `trials` closed-book answers matches gold.
pub fn difficulty_filter(records: Vec<QaRecord>, judge: &dyn JudgeClient, trials: usize) -> GateOutcome {
    let entries: Vec<GateEntry> = records
        .par_iter()
        .map(|r| probe_difficulty(r, judge, trials))
        .collect();
    partition(records, entries, GateKind::Difficulty)
}

/// Evidence pages plus `distractors` uniformly drawn non-evidence pages, shuffled.
pub fn document_set(kb: &KnowledgeBase, record: &QaRecord, distractors: usize, rng: &mut ChaCha8Rng) -> Vec<PageId> {
    let evidence: BTreeSet<&PageId> = record.evidence_pages.iter().collect();
    let pool: Vec<&PageId> = kb.pages().iter().map(|p| &p.id).filter(|id| !evidence.contains(id)).collect();
    let take = distractors.min(pool.len());
    let mut docs: Vec<PageId> = record
        .evidence_pages
        .iter()
        .filter(|id| kb.contains(id))
        .cloned()
        .collect();
    docs.extend(index::sample(rng, pool.len(), take).into_iter().map(|i| pool[i].clone()));
    docs.shuffle(rng);
    docs
}

pub fn verifiability_prompt(kb: &KnowledgeBase, record: &QaRecord, docs: &[PageId]) -> String {
    let documents: Vec<String> = docs
        .iter()
        .enumerate()
        .filter_map(|(i, id)| kb.page(id).map(|p| format!("Document {}: {}\n{}", i + 1, p.title, p.text)))
        .collect();
    VERIFIABILITY_PROMPT
        .replace("{{documents}}", &documents.join("\n\n"))
        .replace("{{question}}", record.question_text())
}

/// Maps a verifiability response to a verdict; `None` when off-template.
pub fn classify_verifiability(response: &str, gold_surface: &str) -> Option<GateVerdict> {
    let answer = response_field(response, "answer")?;
    let count: usize = response_field(response, "count")?.parse().ok()?;
    let verdict = if count == 0 || answer.is_empty() || answer.eq_ignore_ascii_case("unsolvable") {
        GateVerdict::RemovedUnsolvable
    } else if count > 1 {
        GateVerdict::RemovedAmbiguous
    } else if !answer_match(answer, gold_surface) {
        GateVerdict::RemovedWrong
    } else {
        GateVerdict::Kept
    };
    Some(verdict)
}

fn probe_verifiability(kb: &KnowledgeBase, record: &QaRecord, judge: &dyn JudgeClient, docs: &[PageId]) -> GateEntry {
    let prompt = verifiability_prompt(kb, record, docs);
    let judged: Result<(GateVerdict, String), ClientError> = judge.answer(&prompt).and_then(|response| {
        classify_verifiability(&response, &record.answer)
            .map(|v| (v, response.trim().to_string()))
            .ok_or_else(|| ClientError::Decode(format!("off-template response: {}", response.trim())))
    });
    match judged {
        Ok((verdict, detail)) => GateEntry {
            record_id: record.id.clone(),
            verdict,
            flag: None,
            detail: Some(detail),
        },
        Err(err) => {
            tracing::warn!(record = %record.id, %err, "verifiability probe failed");
            GateEntry {
                record_id: record.id.clone(),
                verdict: GateVerdict::RemovedUnsolvable,
                flag: Some(GateFlag::JudgeError),
                detail: Some(err.to_string()),
            }
        }
    }
}

/// Keeps a record iff the judge, shown its evidence pages among distractors,
/// derives the gold answer and asserts it is the only one. Document sampling
/// uses an RNG seeded by `seed` on the stream of the record's input position.
pub fn verifiability_filter(
    records: Vec<QaRecord>,
    kb: &KnowledgeBase,
    judge: &dyn JudgeClient,
    distractors: usize,
    seed: u64,
) -> GateOutcome {
    let entries: Vec<GateEntry> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let docs = document_set(kb, r, distractors, &mut rng);
            probe_verifiability(kb, r, judge, &docs)
        })
        .collect();
    partition(records, entries, GateKind::Verifiability)
}
