//! QA record serialization and vertex-bucketed dataset statistics.
//!
//! A dataset file is UTF-8 JSON, one object per line. The first line is a
//! [`DatasetHeader`]; every following line is a [`QaRecord`]. Keys are written
//! in sorted order so equal record lists produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClaimObject, KnowledgeBase, PageId};
use crate::question::{render_structured, RenderError};
use crate::synth::{ActionRecord, BuiltTree};
use crate::tree::VertexId;

pub const SCHEMA: &str = "hcsp-dataset";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: String,
    pub version: u32,
    pub master_seed: Option<u64>,
    pub record_count: usize,
    /// Build configuration the records were synthesized with, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl DatasetHeader {
    pub fn new(master_seed: Option<u64>, record_count: usize) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            version: SCHEMA_VERSION,
            master_seed,
            record_count,
            config: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub vertex_count: usize,
    pub height: usize,
    pub question_tokens: usize,
    pub answer_tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    /// Structured rendering of the question.
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub natural_question: Option<String>,
    /// Surface form of the gold answer.
    pub answer: String,
    pub gold: ClaimObject,
    /// Canonical text of the research tree.
    pub tree: String,
    /// Every vertex's content: the intermediate answers along the reasoning path.
    pub intermediate_answers: BTreeMap<VertexId, ClaimObject>,
    /// Pages whose claims label tree edges (retrieval labels).
    pub evidence_pages: Vec<PageId>,
    pub metrics: RecordMetrics,
    pub action_log: Vec<ActionRecord>,
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

impl QaRecord {
    pub fn from_built(kb: &KnowledgeBase, id: impl Into<String>, built: &BuiltTree) -> Result<Self, RenderError> {
        let question = render_structured(kb, &built.node)?;
        let gold = built.tree.root_content().clone();
        let answer = kb.surface_form(&gold);
        let evidence_pages: BTreeSet<PageId> = built
            .tree
            .edges()
            .filter_map(|e| built.tree.edge_source(e).cloned())
            .collect();
        Ok(Self {
            id: id.into(),
            metrics: RecordMetrics {
                vertex_count: built.tree.vertex_count(),
                height: built.tree.tree_height(),
                question_tokens: whitespace_tokens(&question),
                answer_tokens: whitespace_tokens(&answer),
            },
            question,
            natural_question: None,
            answer,
            gold,
            tree: built.tree.to_canonical(),
            intermediate_answers: built.tree.vertices().map(|v| (v.id, v.content)).collect(),
            evidence_pages: evidence_pages.into_iter().collect(),
            action_log: built.log.clone(),
        })
    }

    /// The text shown to solvers: the natural rewrite when present.
    pub fn question_text(&self) -> &str {
        self.natural_question.as_deref().unwrap_or(&self.question)
    }

    /// Attaches a naturalized question and refreshes the token metric.
    pub fn set_natural_question(&mut self, text: String) {
        self.metrics.question_tokens = whitespace_tokens(&text);
        self.natural_question = Some(text);
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line 1: missing dataset header")]
    MissingHeader,
    #[error("unsupported dataset schema {schema} v{version}")]
    UnsupportedSchema { schema: String, version: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: Option<DatasetHeader>,
    pub records: Vec<QaRecord>,
}

fn canonical_line<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys sorted.
    let value = serde_json::to_value(value).expect("records serialize");
    serde_json::to_string(&value).expect("values serialize")
}

pub fn write_records(mut out: impl Write, header: &DatasetHeader, records: &[QaRecord]) -> io::Result<()> {
    out.write_all(canonical_line(header).as_bytes())?;
    out.write_all(b"\n")?;
    for record in records {
        out.write_all(canonical_line(record).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn export_records(path: impl AsRef<Path>, header: &DatasetHeader, records: &[QaRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_records(BufWriter::new(file), header, records).map_err(io_err)
}

/// Reads a dataset. A zero-byte input is an empty dataset without header.
pub fn read_records(reader: impl BufRead) -> Result<Dataset, DatasetError> {
    let mut header = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if idx == 0 {
            let h: DatasetHeader = serde_json::from_str(&line).map_err(|_| DatasetError::MissingHeader)?;
            if h.schema != SCHEMA || h.version != SCHEMA_VERSION {
                return Err(DatasetError::UnsupportedSchema {
                    schema: h.schema,
                    version: h.version,
                });
            }
            header = Some(h);
            continue;
        }
        let record: QaRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(Dataset { header, records })
}

pub fn import_records(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(BufReader::new(file)).map_err(|err| match err {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Row labels of the statistics table, by vertex count.
pub const BUCKETS: [&str; 5] = ["3", "4", "5", "6", ">=7"];

/// Counts below three share the first bucket.
pub fn bucket_of(vertex_count: usize) -> usize {
    match vertex_count {
        0..=3 => 0,
        4 => 1,
        5 => 2,
        6 => 3,
        _ => 4,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub vertices: String,
    pub count: usize,
    /// Failure rate of an external solver probe, in percent.
    pub failure_pct: Option<f64>,
    /// Curation cost reported by an external probe, in dollars.
    pub cost_usd: Option<f64>,
    pub question_len: f64,
    pub answer_len: f64,
}

/// Externally measured columns for one bucket.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeColumns {
    pub failure_pct: Option<f64>,
    pub cost_usd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

pub fn stats_report(records: &[QaRecord]) -> StatsTable {
    let mut sums = [(0usize, 0usize, 0usize); 5];
    for r in records {
        let b = &mut sums[bucket_of(r.metrics.vertex_count)];
        b.0 += 1;
        b.1 += r.metrics.question_tokens;
        b.2 += r.metrics.answer_tokens;
    }
    let row = |label: &str, (count, q, a): (usize, usize, usize)| StatsRow {
        vertices: label.to_string(),
        count,
        failure_pct: None,
        cost_usd: None,
        question_len: if count == 0 { 0.0 } else { q as f64 / count as f64 },
        answer_len: if count == 0 { 0.0 } else { a as f64 / count as f64 },
    };
    let rows = BUCKETS.iter().zip(sums).map(|(label, s)| row(label, s)).collect();
    let total = sums
        .iter()
        .fold((0, 0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    StatsTable {
        rows,
        total: row("Total", total),
    }
}

impl StatsTable {
    /// Fills the probe columns from external measurements keyed by row label ("Total" included).
    pub fn with_probes(mut self, probes: &BTreeMap<String, ProbeColumns>) -> Self {
        for row in self.rows.iter_mut().chain(std::iter::once(&mut self.total)) {
            if let Some(p) = probes.get(&row.vertices) {
                row.failure_pct = p.failure_pct;
                row.cost_usd = p.cost_usd;
            }
        }
        self
    }

    pub const HEADERS: [&'static str; 6] = [
        "# Vertices",
        "Count",
        "Failure (%)",
        "Cost ($)",
        "Question Len (tok)",
        "Answer Len (tok)",
    ];

    /// Aligned plain-text rendering; unprobed columns are left blank.
    pub fn render_text(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_default();
        let cells = |r: &StatsRow| {
            vec![
                r.vertices.clone(),
                r.count.to_string(),
                fmt_opt(r.failure_pct),
                fmt_opt(r.cost_usd),
                format!("{:.2}", r.question_len),
                format!("{:.2}", r.answer_len),
            ]
        };
        let mut table: Vec<Vec<String>> = vec![Self::HEADERS.iter().map(|s| s.to_string()).collect()];
        table.extend(self.rows.iter().map(cells));
        table.push(cells(&self.total));
        let widths: Vec<usize> = (0..Self::HEADERS.len())
            .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let rule: usize = widths.iter().sum::<usize>() + 3 * (widths.len() - 1);
        for (i, row) in table.iter().enumerate() {
            if i == 1 || i == table.len() - 1 {
                let _ = writeln!(out, "{}", "-".repeat(rule));
            }
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str, vertices: usize, q: usize, a: usize) -> QaRecord {
        QaRecord {
            id: id.into(),
            question: "q".into(),
            natural_question: None,
            answer: "a".into(),
            gold: ClaimObject::entity("A"),
            tree: r#"(v0 E"A")"#.into(),
            intermediate_answers: BTreeMap::from([(VertexId(0), ClaimObject::entity("A"))]),
            evidence_pages: vec![],
            metrics: RecordMetrics {
                vertex_count: vertices,
                height: 0,
                question_tokens: q,
                answer_tokens: a,
            },
            action_log: vec![],
        }
    }

    #[test]
    fn buckets_follow_vertex_counts() {
        let records: Vec<QaRecord> = [3, 4, 4, 7, 9]
            .iter()
            .enumerate()
            .map(|(i, &v)| record(&i.to_string(), v, 10, 2))
            .collect();
        let table = stats_report(&records);
        let counts: Vec<usize> = table.rows.iter().map(|r| r.count).collect();
        assert_eq!(counts, vec![1, 2, 0, 0, 2]);
        assert_eq!(table.total.count, 5);
        assert_eq!(table.rows.iter().map(|r| r.count).sum::<usize>(), table.total.count);
    }

    #[test]
    fn empty_input_gives_zero_table() {
        let table = stats_report(&[]);
        assert_eq!(table.rows.len(), 5);
        assert!(table.rows.iter().all(|r| r.count == 0 && r.question_len == 0.0));
        assert_eq!(table.total.count, 0);
    }

    #[test]
    fn token_means_per_bucket() {
        let table = stats_report(&[record("a", 4, 10, 2), record("b", 4, 20, 3)]);
        assert_eq!(table.rows[1].question_len, 15.0);
        assert_eq!(table.rows[1].answer_len, 2.5);
    }

    #[test]
    fn probe_columns_blank_until_supplied() {
        let table = stats_report(&[record("a", 5, 10, 2)]);
        let text = table.render_text();
        assert!(text.starts_with("# Vertices | Count | Failure (%) | Cost ($) | Question Len (tok) | Answer Len (tok)"));
        let probes = BTreeMap::from([(
            "5".to_string(),
            ProbeColumns {
                failure_pct: Some(91.0),
                cost_usd: Some(160.4),
            },
        )]);
        let probed = table.with_probes(&probes);
        assert_eq!(probed.rows[2].failure_pct, Some(91.0));
        assert!(probed.render_text().contains("160.4"));
    }

    #[test]
    fn vertex_id_map_keys_round_trip() {
        let r = record("x", 1, 1, 1);
        let line = canonical_line(&r);
        assert!(line.contains(r#""intermediate_answers":{"0":{"entity":"A"}}"#));
        let back: QaRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn corrupted_line_is_reported() {
        let mut buf = Vec::new();
        let records = vec![record("a", 4, 1, 1), record("b", 4, 1, 1), record("c", 4, 1, 1)];
        write_records(&mut buf, &DatasetHeader::new(Some(1), 3), &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3][..10].to_string();
        let err = read_records(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Malformed { line: 4, .. }), "{err}");
    }

    #[test]
    fn empty_inputs() {
        let ds = read_records("".as_bytes()).unwrap();
        assert!(ds.header.is_none() && ds.records.is_empty());
        let mut buf = Vec::new();
        write_records(&mut buf, &DatasetHeader::new(None, 0), &[]).unwrap();
        let ds = read_records(buf.as_slice()).unwrap();
        assert!(ds.records.is_empty());
        assert!(matches!(read_records("{}\n".as_bytes()), Err(DatasetError::MissingHeader)));
    }
}
