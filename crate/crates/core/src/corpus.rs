//! Page corpus ingestion and the immutable knowledge base.
//!
//! A corpus file holds one JSON page record per line:
//!
//! ```text
//! {"id":"AlanTuring","title":"Alan Turing","text":"...","links":[{"target":"London","evidence":"..."}],
//!  "claims":[{"subject":"AlanTuring","predicate":"born_in","object":{"entity":"London"},"evidence":"..."}]}
//! ```
//!
//! Claims are pre-annotated: the loader never extracts relations from free
//! text. The knowledge base keeps an inverted `(predicate, object) -> subjects`
//! index so that candidate sets are exact lookups.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hcsp::EntitySet;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(String);

impl PageId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PageId {
    fn from(value: &str) -> Self {
        Self::new(value)
    }
}

/// Relation phrase in canonical form: trimmed and lowercased.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Predicate(String);

impl Predicate {
    pub fn new(raw: &str) -> Self {
        Self(raw.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<String> for Predicate {
    fn from(value: String) -> Self {
        Self::new(&value)
    }
}

impl From<Predicate> for String {
    fn from(value: Predicate) -> Self {
        value.0
    }
}

impl From<&str> for Predicate {
    fn from(value: &str) -> Self {
        Self::new(value)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Object position of a claim: another page, or a literal fact such as a date.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimObject {
    Entity(PageId),
    Literal(String),
}

impl ClaimObject {
    pub fn entity(id: impl Into<String>) -> Self {
        Self::Entity(PageId::new(id))
    }

    pub fn literal(text: impl Into<String>) -> Self {
        Self::Literal(text.into())
    }

    pub fn as_entity(&self) -> Option<&PageId> {
        match self {
            Self::Entity(id) => Some(id),
            Self::Literal(_) => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Self::Literal(_))
    }
}

impl fmt::Display for ClaimObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Entity(id) => write!(f, "entity:{id}"),
            Self::Literal(text) => write!(f, "literal:{text:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub subject: PageId,
    pub predicate: Predicate,
    pub object: ClaimObject,
    pub evidence: String,
}

/// A condition on an unknown entity.
///
/// Forward constraints read "unknown `predicate` object". Inverse constraints
/// read "object `predicate` unknown", i.e. the unknown sits in the object
/// position of a claim stored on `object`'s page.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint {
    pub predicate: Predicate,
    pub object: ClaimObject,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverse: bool,
}

impl Constraint {
    pub fn new(predicate: impl Into<Predicate>, object: ClaimObject) -> Self {
        Self {
            predicate: predicate.into(),
            object,
            inverse: false,
        }
    }

    pub fn inverse(predicate: impl Into<Predicate>, subject: PageId) -> Self {
        Self {
            predicate: predicate.into(),
            object: ClaimObject::Entity(subject),
            inverse: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub target: PageId,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Page {
    pub id: PageId,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub links: Vec<Link>,
    #[serde(default)]
    pub claims: Vec<Claim>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestPolicy {
    /// Reject claims and links whose evidence is not a verbatim substring of the page text.
    pub check_evidence: bool,
}

impl Default for IngestPolicy {
    fn default() -> Self {
        Self {
            check_evidence: true,
        }
    }
}

/// Which pages may be sampled as research anchors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorPolicy {
    pub min_claims: usize,
    pub min_links: usize,
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        Self {
            min_claims: 2,
            min_links: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub pages: usize,
    pub claims: usize,
    pub dangling_links: usize,
    pub dangling_claims: usize,
    pub blank_lines: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate page id {id}")]
    DuplicateId { line: usize, id: PageId },
    #[error("line {line}: duplicate page title {title:?}")]
    DuplicateTitle { line: usize, title: String },
    #[error("unknown page id {0}")]
    UnknownPage(PageId),
    #[error("no page satisfies the anchor policy")]
    NoValidAnchor,
}

/// Immutable store of pages with exact candidate-set lookups.
#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    pages: Vec<Page>,
    by_id: HashMap<PageId, usize>,
    by_title: HashMap<String, usize>,
    index: HashMap<(Predicate, ClaimObject), BTreeSet<PageId>>,
    predicate_subjects: HashMap<Predicate, BTreeSet<PageId>>,
    // (page index, claim index) of every claim whose object is the key entity.
    incoming: HashMap<PageId, Vec<(usize, usize)>>,
    report: LoadReport,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.pages == other.pages
    }
}

impl Eq for KnowledgeBase {}

pub fn load_corpus(path: impl AsRef<Path>, policy: &IngestPolicy) -> Result<KnowledgeBase, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    KnowledgeBase::read(BufReader::new(file), policy).map_err(|err| match err {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

impl KnowledgeBase {
    /// Parses a record-per-line corpus. Blank lines are skipped.
    pub fn read(reader: impl BufRead, policy: &IngestPolicy) -> Result<Self, CorpusError> {
        let mut pages = Vec::new();
        let mut lines = Vec::new();
        let mut blank_lines = 0;
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io {
                path: PathBuf::new(),
                source,
            })?;
            if line.trim().is_empty() {
                blank_lines += 1;
                continue;
            }
            let page: Page = serde_json::from_str(&line).map_err(|err| CorpusError::Malformed {
                line: idx + 1,
                message: err.to_string(),
            })?;
            pages.push(page);
            lines.push(idx + 1);
        }
        let mut kb = Self::build(pages, &lines, policy)?;
        kb.report.blank_lines = blank_lines;
        Ok(kb)
    }

    /// Builds a knowledge base from in-memory pages. Error line numbers are 1-based page positions.
    pub fn from_pages(pages: Vec<Page>, policy: &IngestPolicy) -> Result<Self, CorpusError> {
        let lines: Vec<usize> = (1..=pages.len()).collect();
        Self::build(pages, &lines, policy)
    }

    fn build(mut pages: Vec<Page>, lines: &[usize], policy: &IngestPolicy) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(pages.len());
        let mut by_title = HashMap::with_capacity(pages.len());
        for (pos, page) in pages.iter().enumerate() {
            let line = lines[pos];
            validate_page(page, line, policy)?;
            if by_id.insert(page.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId {
                    line,
                    id: page.id.clone(),
                });
            }
            if by_title.insert(page.title.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateTitle {
                    line,
                    title: page.title.clone(),
                });
            }
        }

        let mut report = LoadReport::default();
        for page in &mut pages {
            let before = page.links.len();
            page.links.retain(|link| by_id.contains_key(&link.target));
            report.dangling_links += before - page.links.len();

            let before = page.claims.len();
            page.claims.retain(|claim| match &claim.object {
                ClaimObject::Entity(target) => by_id.contains_key(target),
                ClaimObject::Literal(_) => true,
            });
            report.dangling_claims += before - page.claims.len();
        }

        let mut index: HashMap<(Predicate, ClaimObject), BTreeSet<PageId>> = HashMap::new();
        let mut predicate_subjects: HashMap<Predicate, BTreeSet<PageId>> = HashMap::new();
        let mut incoming: HashMap<PageId, Vec<(usize, usize)>> = HashMap::new();
        for (pi, page) in pages.iter().enumerate() {
            for (ci, claim) in page.claims.iter().enumerate() {
                index
                    .entry((claim.predicate.clone(), claim.object.clone()))
                    .or_default()
                    .insert(claim.subject.clone());
                predicate_subjects
                    .entry(claim.predicate.clone())
                    .or_default()
                    .insert(claim.subject.clone());
                if let ClaimObject::Entity(target) = &claim.object {
                    incoming.entry(target.clone()).or_default().push((pi, ci));
                }
            }
        }
        report.pages = pages.len();
        report.claims = pages.iter().map(|p| p.claims.len()).sum();

        Ok(Self {
            pages,
            by_id,
            by_title,
            index,
            predicate_subjects,
            incoming,
            report,
        })
    }

    /// Writes the pages back out in the corpus format, one record per line, in corpus order.
    pub fn write_corpus(&self, mut out: impl Write) -> io::Result<()> {
        for page in &self.pages {
            serde_json::to_writer(&mut out, page)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }

    pub fn pages(&self) -> &[Page] {
        &self.pages
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn claim_count(&self) -> usize {
        self.report.claims
    }

    pub fn page(&self, id: &PageId) -> Option<&Page> {
        self.by_id.get(id).map(|&i| &self.pages[i])
    }

    pub fn page_by_title(&self, title: &str) -> Option<&Page> {
        self.by_title.get(title).map(|&i| &self.pages[i])
    }

    pub fn contains(&self, id: &PageId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn title(&self, id: &PageId) -> Option<&str> {
        self.page(id).map(|p| p.title.as_str())
    }

    /// Observable text of an object: a page title or the literal itself.
    pub fn surface_form(&self, object: &ClaimObject) -> String {
        match object {
            ClaimObject::Entity(id) => self.title(id).unwrap_or(id.as_str()).to_string(),
            ClaimObject::Literal(text) => text.clone(),
        }
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.pages.iter().flat_map(|p| p.claims.iter())
    }

    pub fn claims_of(&self, id: &PageId) -> Result<&[Claim], CorpusError> {
        self.page(id)
            .map(|p| p.claims.as_slice())
            .ok_or_else(|| CorpusError::UnknownPage(id.clone()))
    }

    pub fn entity_links(&self, id: &PageId) -> Result<Vec<&Claim>, CorpusError> {
        Ok(self
            .claims_of(id)?
            .iter()
            .filter(|c| matches!(c.object, ClaimObject::Entity(_)))
            .collect())
    }

    /// Claims stored on other pages whose object is `id`, in corpus order.
    pub fn incoming_claims(&self, id: &PageId) -> Result<Vec<&Claim>, CorpusError> {
        if !self.contains(id) {
            return Err(CorpusError::UnknownPage(id.clone()));
        }
        Ok(self
            .incoming
            .get(id)
            .map(|refs| refs.iter().map(|&(pi, ci)| &self.pages[pi].claims[ci]).collect())
            .unwrap_or_default())
    }

    /// Subjects with a claim `(subject, predicate, object)`.
    pub fn subjects(&self, predicate: &Predicate, object: &ClaimObject) -> Option<&BTreeSet<PageId>> {
        self.index.get(&(predicate.clone(), object.clone()))
    }

    /// Subjects carrying at least one claim with `predicate`.
    pub fn subjects_with_predicate(&self, predicate: &Predicate) -> Option<&BTreeSet<PageId>> {
        self.predicate_subjects.get(predicate)
    }

    /// Objects of `subject`'s claims with `predicate`. Unknown subjects yield nothing.
    pub fn objects_of<'a>(&'a self, subject: &PageId, predicate: &'a Predicate) -> impl Iterator<Item = &'a ClaimObject> + 'a {
        self.page(subject)
            .into_iter()
            .flat_map(|p| p.claims.iter())
            .filter(move |c| &c.predicate == predicate)
            .map(|c| &c.object)
    }

    /// Exact candidate set S(c): every entity satisfying the constraint.
    pub fn candidate_set(&self, constraint: &Constraint) -> EntitySet {
        if constraint.inverse {
            let set = match &constraint.object {
                ClaimObject::Entity(subject) => self
                    .objects_of(subject, &constraint.predicate)
                    .cloned()
                    .collect(),
                ClaimObject::Literal(_) => BTreeSet::new(),
            };
            return EntitySet::Finite(set);
        }
        let set = self
            .subjects(&constraint.predicate, &constraint.object)
            .map(|subjects| subjects.iter().cloned().map(ClaimObject::Entity).collect())
            .unwrap_or_default();
        EntitySet::Finite(set)
    }

    pub fn is_valid_anchor(&self, page: &Page, policy: &AnchorPolicy) -> bool {
        let links = page
            .claims
            .iter()
            .filter(|c| matches!(c.object, ClaimObject::Entity(_)))
            .count();
        page.claims.len() >= policy.min_claims && links >= policy.min_links
    }

    pub fn valid_anchors(&self, policy: &AnchorPolicy) -> Vec<&PageId> {
        self.pages
            .iter()
            .filter(|p| self.is_valid_anchor(p, policy))
            .map(|p| &p.id)
            .collect()
    }

    /// Uniformly samples a page that satisfies the anchor policy.
    pub fn sample_anchor(&self, rng: &mut impl Rng, policy: &AnchorPolicy) -> Result<PageId, CorpusError> {
        let anchors = self.valid_anchors(policy);
        if anchors.is_empty() {
            return Err(CorpusError::NoValidAnchor);
        }
        Ok(anchors[rng.random_range(0..anchors.len())].clone())
    }
}

fn validate_page(page: &Page, line: usize, policy: &IngestPolicy) -> Result<(), CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };
    if page.id.as_str().trim().is_empty() {
        return Err(malformed("empty page id".into()));
    }
    if page.title.trim().is_empty() {
        return Err(malformed(format!("page {} has an empty title", page.id)));
    }
    for claim in &page.claims {
        if claim.subject != page.id {
            return Err(malformed(format!(
                "claim subject {} does not match page {}",
                claim.subject, page.id
            )));
        }
        if claim.predicate.is_empty() {
            return Err(malformed(format!("page {} has a claim with an empty predicate", page.id)));
        }
        if let ClaimObject::Literal(text) = &claim.object {
            if text.trim().is_empty() {
                return Err(malformed(format!("page {} has an empty literal object", page.id)));
            }
        }
        if policy.check_evidence && !page.text.contains(&claim.evidence) {
            return Err(malformed(format!(
                "claim evidence {:?} is not part of page {}",
                claim.evidence, page.id
            )));
        }
    }
    if policy.check_evidence {
        if let Some(link) = page.links.iter().find(|l| !page.text.contains(&l.evidence)) {
            return Err(malformed(format!(
                "link evidence {:?} is not part of page {}",
                link.evidence, page.id
            )));
        }
    }
    Ok(())
}
