//! Tag-formatted agent rollouts: parsing, binary reward, group-normalized
//! advantage and rejection filtering.
//!
//! Grammar: one or more turns of `<think>`, optionally followed by a
//! `<search>`/`<information>` pair, then exactly one `<answer>`. Queries in a
//! search block are newline-separated; each information item is a
//! `Query: <q>` line followed by a `Summary: <s>` block, aligned 1:1 with the
//! preceding search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::JudgeClient;
use crate::gate::{answer_match, response_field};

pub const SHORTCUT_PROMPT: &str = include_str!("../assets/prompts/shortcut_v1.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Think,
    Search,
    Information,
    Answer,
}

impl Tag {
    const ALL: [Tag; 4] = [Tag::Think, Tag::Search, Tag::Information, Tag::Answer];

    fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Search => "search",
            Tag::Information => "information",
            Tag::Answer => "answer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoItem {
    pub query: String,
    pub summary: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Think(String),
    Search(Vec<String>),
    Information(Vec<InfoItem>),
    Answer(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub turns: Vec<Turn>,
    pub raw: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("format error at byte {position}: {message}")]
pub struct FormatError {
    pub position: usize,
    pub message: String,
}

fn err<T>(position: usize, message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError {
        position,
        message: message.into(),
    })
}

/// Splits the text into (tag, content, start offset) blocks.
fn tokenize(text: &str) -> Result<Vec<(Tag, &str, usize)>, FormatError> {
    let mut blocks = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let trimmed = rest.trim_start();
        if trimmed.is_empty() {
            break;
        }
        pos += rest.len() - trimmed.len();
        if !trimmed.starts_with('<') {
            return err(pos, "text outside tags");
        }
        let Some(tag) = Tag::ALL
            .into_iter()
            .find(|t| trimmed.starts_with(&format!("<{}>", t.name())))
        else {
            return err(pos, "unknown or misplaced tag");
        };
        let open_len = tag.name().len() + 2;
        let close = format!("</{}>", tag.name());
        let body_start = pos + open_len;
        let Some(rel_end) = text[body_start..].find(&close) else {
            return err(pos, format!("unclosed <{}>", tag.name()));
        };
        let body = &text[body_start..body_start + rel_end];
        for t in Tag::ALL {
            for marker in [format!("<{}>", t.name()), format!("</{}>", t.name())] {
                if let Some(off) = body.find(&marker) {
                    return err(body_start + off, format!("nested or unbalanced {marker}"));
                }
            }
        }
        blocks.push((tag, body, pos));
        pos = body_start + rel_end + close.len();
    }
    Ok(blocks)
}

fn parse_queries(body: &str, at: usize) -> Result<Vec<String>, FormatError> {
    let queries: Vec<String> = body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if queries.is_empty() {
        return err(at, "empty search");
    }
    let mut seen = BTreeSet::new();
    for q in &queries {
        if !seen.insert(q.as_str()) {
            return err(at, format!("duplicate query {q:?}"));
        }
    }
    Ok(queries)
}

fn parse_information(body: &str, at: usize) -> Result<Vec<InfoItem>, FormatError> {
    let mut items: Vec<InfoItem> = Vec::new();
    let mut expect_summary = false;
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(q) = line.strip_prefix("Query:") {
            if expect_summary {
                return err(at, "query without summary");
            }
            items.push(InfoItem {
                query: q.trim().to_string(),
                summary: String::new(),
            });
            expect_summary = true;
        } else if let Some(s) = line.strip_prefix("Summary:") {
            match items.last_mut() {
                Some(item) if expect_summary => item.summary = s.trim().to_string(),
                _ => return err(at, "summary without query"),
            }
            expect_summary = false;
        } else {
            match items.last_mut() {
                Some(item) if !expect_summary => {
                    item.summary.push('\n');
                    item.summary.push_str(line);
                }
                _ => return err(at, "information items must be Query:/Summary: pairs"),
            }
        }
    }
    if expect_summary {
        return err(at, "query without summary");
    }
    Ok(items)
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory, FormatError> {
    #[derive(PartialEq)]
    enum State {
        Start,
        AfterThink,
        AfterSearch,
        AfterInformation,
        Done,
    }
    let mut state = State::Start;
    let mut turns = Vec::new();
    let mut last_queries: Vec<String> = Vec::new();
    for (tag, body, at) in tokenize(text)? {
        state = match (state, tag) {
            (State::Done, Tag::Answer) => return err(at, "multiple answers"),
            (State::Done, _) => return err(at, "content after answer"),
            (State::Start, Tag::Think) | (State::AfterThink, Tag::Think) | (State::AfterInformation, Tag::Think) => {
                turns.push(Turn::Think(body.trim().to_string()));
                State::AfterThink
            }
            (State::AfterThink, Tag::Search) => {
                last_queries = parse_queries(body, at)?;
                turns.push(Turn::Search(last_queries.clone()));
                State::AfterSearch
            }
            (State::AfterSearch, Tag::Information) => {
                let items = parse_information(body, at)?;
                let aligned = items.len() == last_queries.len()
                    && items.iter().zip(&last_queries).all(|(i, q)| &i.query == q);
                if !aligned {
                    return err(at, "information items do not match the search queries");
                }
                turns.push(Turn::Information(items));
                State::AfterInformation
            }
            (State::AfterThink, Tag::Answer) | (State::AfterInformation, Tag::Answer) => {
                turns.push(Turn::Answer(body.trim().to_string()));
                State::Done
            }
            (State::Start, _) => return err(at, format!("expected <think>, found <{}>", tag.name())),
            (State::AfterSearch, _) => return err(at, format!("expected <information>, found <{}>", tag.name())),
            (_, _) => return err(at, format!("unexpected <{}>", tag.name())),
        };
    }
    if state != State::Done {
        return err(text.len(), "missing answer");
    }
    Ok(Trajectory {
        turns,
        raw: text.to_string(),
    })
}

impl Trajectory {
    pub fn answer(&self) -> &str {
        match self.turns.last() {
            Some(Turn::Answer(a)) => a,
            _ => unreachable!("parsed trajectories end with an answer"),
        }
    }

    pub fn search_count(&self) -> usize {
        self.turns.iter().filter(|t| matches!(t, Turn::Search(_))).count()
    }

    /// Canonical text; parses back to the same turns.
    pub fn render(&self) -> String {
        self.turns.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("\n")
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Turn::Think(t) => write!(f, "<think>{t}</think>"),
            Turn::Search(qs) => write!(f, "<search>\n{}\n</search>", qs.join("\n")),
            Turn::Information(items) => {
                f.write_str("<information>\n")?;
                for item in items {
                    writeln!(f, "Query: {}\nSummary: {}", item.query, item.summary)?;
                }
                f.write_str("</information>")
            }
            Turn::Answer(a) => write!(f, "<answer>{a}</answer>"),
        }
    }
}

/// 1 iff the text parses and its answer matches the gold surface form.
pub fn compute_reward(text: &str, gold_surface: &str) -> u8 {
    match parse_trajectory(text) {
        Ok(t) if answer_match(t.answer(), gold_surface) => 1,
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupRewards(Vec<u8>);

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AdvantageError {
    #[error("group advantage needs at least two rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("reward {0} is not binary")]
    NotBinary(u8),
}

impl GroupRewards {
    pub fn new(values: Vec<u8>) -> Result<Self, AdvantageError> {
        if values.len() < 2 {
            return Err(AdvantageError::GroupTooSmall(values.len()));
        }
        if let Some(&bad) = values.iter().find(|&&v| v > 1) {
            return Err(AdvantageError::NotBinary(bad));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub values: Vec<f64>,
    /// Set when all rewards are equal; values are then all zero.
    pub degenerate: bool,
}

/// (R_i - mean) / std with the population standard deviation.
pub fn group_advantage(rewards: &GroupRewards) -> Advantages {
    let r: Vec<f64> = rewards.0.iter().map(|&v| f64::from(v)).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Advantages {
            values: vec![0.0; r.len()],
            degenerate: true,
        };
    }
    let std = var.sqrt();
    Advantages {
        values: r.iter().map(|x| (x - mean) / std).collect(),
        degenerate: false,
    }
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub question_id: String,
    pub raw: String,
    /// Surface form of the gold answer.
    pub gold: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryVerdict {
    Accepted,
    WrongAnswer,
    FormatError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    #[serde(flatten)]
    pub record: TrajectoryRecord,
    pub reward: u8,
    pub verdict: TrajectoryVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
}

pub fn score(record: &TrajectoryRecord) -> ScoredTrajectory {
    let verdict = match parse_trajectory(&record.raw) {
        Err(_) => TrajectoryVerdict::FormatError,
        Ok(t) if answer_match(t.answer(), &record.gold) => TrajectoryVerdict::Accepted,
        Ok(_) => TrajectoryVerdict::WrongAnswer,
    };
    ScoredTrajectory {
        record: record.clone(),
        reward: u8::from(verdict == TrajectoryVerdict::Accepted),
        verdict,
        advantage: None,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub format_errors: usize,
    pub wrong_answers: usize,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectionOutcome {
    pub accepted: Vec<ScoredTrajectory>,
    pub rejected: Vec<ScoredTrajectory>,
    pub stats: RejectionStats,
}

/// Accepts exactly the trajectories with reward 1. Duplicates are scored independently.
pub fn rejection_filter(records: &[TrajectoryRecord]) -> RejectionOutcome {
    let scored: Vec<ScoredTrajectory> = records.par_iter().map(score).collect();
    let mut stats = RejectionStats {
        total: scored.len(),
        ..Default::default()
    };
    let (accepted, rejected): (Vec<_>, Vec<_>) = scored.into_iter().partition(|s| s.reward == 1);
    stats.accepted = accepted.len();
    stats.rejected = rejected.len();
    for s in &rejected {
        match s.verdict {
            TrajectoryVerdict::FormatError => stats.format_errors += 1,
            _ => stats.wrong_answers += 1,
        }
    }
    stats.acceptance_rate = if stats.total == 0 { 0.0 } else { stats.accepted as f64 / stats.total as f64 };
    RejectionOutcome {
        accepted,
        rejected,
        stats,
    }
}

/// Fills `advantage` per question-id group; groups smaller than two stay `None`.
pub fn assign_group_advantages(scored: &mut [ScoredTrajectory]) {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in scored.iter().enumerate() {
        groups.entry(s.record.question_id.clone()).or_default().push(i);
    }
    for idx in groups.values() {
        let Ok(rewards) = GroupRewards::new(idx.iter().map(|&i| scored[i].reward).collect()) else {
            continue;
        };
        for (&i, a) in idx.iter().zip(group_advantage(&rewards).values) {
            scored[i].advantage = Some(a);
        }
    }
}

pub fn shortcut_prompt(question: &str, trajectory: &str) -> String {
    SHORTCUT_PROMPT
        .replace("{{question}}", question)
        .replace("{{trajectory}}", trajectory)
}

/// Optional screening pass over accepted trajectories. Returns (clean, flagged);
/// judge failures and off-template replies count as flagged.
pub fn screen_shortcuts(
    accepted: Vec<ScoredTrajectory>,
    judge: &dyn JudgeClient,
    question_of: impl Fn(&str) -> Option<String> + Sync,
) -> (Vec<ScoredTrajectory>, Vec<ScoredTrajectory>) {
    let flags: Vec<bool> = accepted
        .par_iter()
        .map(|s| {
            let question = question_of(&s.record.question_id).unwrap_or_default();
            match judge.answer(&shortcut_prompt(&question, &s.record.raw)) {
                Ok(resp) => !matches!(response_field(&resp, "shortcut"), Some(v) if v.eq_ignore_ascii_case("no")),
                Err(e) => {
                    tracing::warn!(id = %s.record.id, %e, "shortcut screen failed");
                    true
                }
            }
        })
        .collect();
    let mut clean = Vec::new();
    let mut flagged = Vec::new();
    for (s, f) in accepted.into_iter().zip(flags) {
        if f {
            flagged.push(s);
        } else {
            clean.push(s);
        }
    }
    (clean, flagged)
}

#[derive(Debug, Error)]
pub enum TrajectoryFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn read_trajectory_records(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>, TrajectoryFileError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TrajectoryFileError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_scored(path: impl AsRef<Path>, scored: &[ScoredTrajectory]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in scored {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
