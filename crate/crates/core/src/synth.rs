//! Research-tree synthesis.
//!
//! A build starts from a sampled anchor (init), then alternates between
//! blurring unresolved vertices with jointly-unique constraints and extending
//! the tree with linked entities, and finally terminates once the vertex
//! budget is met and every hidden vertex is uniquely determined.
//!
//! "Hidden" vertices are the ones the question must not name: the root and
//! every entity introduced by init or extend. They render as sub-questions and
//! therefore have to be pinned down by their own children. Leaves added by
//! blurring are named constraint objects and need no resolution.
//!
//! The planner is deterministic given the random source: unresolved vertices
//! are handled lowest id first, extension is preferred while the tree is below
//! the midpoint of the vertex budget, and a vertex that cannot be blurred is
//! rolled back together with everything added after it.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnchorPolicy, Claim, ClaimObject, Constraint, CorpusError, KnowledgeBase, PageId};
use crate::hcsp::{check_overdetermined, check_unique, subtree_to_hcsp, tree_to_hcsp, HcspError, HcspNode, Verdict};
use crate::question::{render_structured, validate_question, QuestionCheck, RenderError};
use crate::tree::{EdgeLabel, ResearchTree, TreeError, VertexId};

/// Blur candidate subsets examined per subset size before giving up.
const MAX_COMBINATIONS: usize = 512;
/// Planner steps per attempt.
const MAX_STEPS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusiveRange {
    pub min: usize,
    pub max: usize,
}

impl InclusiveRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.min..=self.max).contains(&n)
    }

    pub fn midpoint(&self) -> usize {
        (self.min + self.max) / 2
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub target_vertices: InclusiveRange,
    pub max_height: usize,
    pub blur_k: InclusiveRange,
    pub max_attempts: usize,
    pub seed: u64,
    pub anchor: AnchorPolicy,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            target_vertices: InclusiveRange::new(4, 6),
            max_height: 3,
            blur_k: InclusiveRange::new(2, 4),
            max_attempts: 32,
            seed: 0,
            anchor: AnchorPolicy::default(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if self.target_vertices.min > self.target_vertices.max {
            return bad("target_vertices range is empty");
        }
        if self.blur_k.min > self.blur_k.max {
            return bad("blur_k range is empty");
        }
        if self.blur_k.min < 2 {
            return bad("blur_k lower bound must be at least 2");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Init,
    Blur,
    Extend,
    Terminate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachedEdge {
    pub child: VertexId,
    pub content: ClaimObject,
    pub label: EdgeLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub kind: ActionKind,
    pub target: VertexId,
    /// Sampled root entity; only set on init records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<PageId>,
    pub edges: Vec<AttachedEdge>,
}

impl ActionRecord {
    pub fn evidence(&self) -> Vec<&str> {
        self.edges.iter().map(|e| e.label.evidence.as_str()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid build config: {0}")]
    InvalidConfig(String),
    #[error("no page satisfies the anchor policy")]
    NoValidAnchor,
    #[error("anchor {0} has no usable claim for a first child")]
    NoFirstChild(PageId),
    #[error("vertex {0} is not awaiting resolution")]
    NotUnresolved(VertexId),
    #[error("vertex {0} is not an entity")]
    NotEntity(VertexId),
    #[error("no qualifying claim subset can blur vertex {0}")]
    CannotBlur(VertexId),
    #[error("vertex {0} has no extensible claim")]
    NoExtensibleClaim(VertexId),
    #[error("extending vertex {0} would exceed the height cap")]
    HeightCapReached(VertexId),
    #[error("tree has {vertices} vertices, target is {min}..={max}")]
    ComplexityNotMet { vertices: usize, min: usize, max: usize },
    #[error("vertices still unresolved: {0:?}")]
    UnresolvedVertices(Vec<VertexId>),
    #[error("root is not uniquely determined: {0:?}")]
    NotUnique(Verdict),
    #[error("rendered question rejected: {0:?}")]
    QuestionRejected(QuestionCheck),
    #[error("planner step limit reached")]
    StepLimit,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Hcsp(#[from] HcspError),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl From<CorpusError> for SynthError {
    fn from(err: CorpusError) -> Self {
        match err {
            CorpusError::NoValidAnchor => Self::NoValidAnchor,
            other => Self::Corpus(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildState {
    pub tree: ResearchTree,
    /// Vertices that must be identified by their own children.
    pub hidden: BTreeSet<VertexId>,
    /// Hidden vertices whose subtree does not yet pin them down uniquely.
    pub unresolved: BTreeSet<VertexId>,
    pub action_log: Vec<ActionRecord>,
    /// Entities ruled out after a failed blur.
    pub banned: BTreeSet<PageId>,
}

impl BuildState {
    /// Wraps an existing tree; `hidden` must be entity vertices.
    pub fn from_tree(
        kb: &KnowledgeBase,
        tree: ResearchTree,
        hidden: impl IntoIterator<Item = VertexId>,
    ) -> Result<Self, SynthError> {
        let hidden: BTreeSet<VertexId> = hidden.into_iter().collect();
        for &v in &hidden {
            if tree.content(v)?.is_literal() {
                return Err(SynthError::NotEntity(v));
            }
        }
        let mut state = Self {
            tree,
            hidden,
            unresolved: BTreeSet::new(),
            action_log: Vec::new(),
            banned: BTreeSet::new(),
        };
        state.refresh(kb)?;
        Ok(state)
    }

    pub fn is_resolved(&self, kb: &KnowledgeBase, v: VertexId) -> Result<bool, SynthError> {
        let node = subtree_to_hcsp(&self.tree, v)?;
        Ok(check_unique(kb, &node)? == Verdict::Unique(self.tree.content(v)?.clone()))
    }

    fn refresh(&mut self, kb: &KnowledgeBase) -> Result<(), SynthError> {
        let mut unresolved = BTreeSet::new();
        for &v in &self.hidden {
            if !self.is_resolved(kb, v)? {
                unresolved.insert(v);
            }
        }
        self.unresolved = unresolved;
        Ok(())
    }

    fn hidden_titles<'a>(&self, kb: &'a KnowledgeBase) -> Vec<&'a str> {
        self.hidden
            .iter()
            .filter_map(|&v| self.tree.content(v).ok()?.as_entity())
            .filter_map(|id| kb.title(id))
            .collect()
    }
}

fn mentions(text: &str, title: &str) -> bool {
    text.to_lowercase().contains(&title.to_lowercase())
}

fn entity_of(tree: &ResearchTree, v: VertexId) -> Result<PageId, SynthError> {
    tree.content(v)?.as_entity().cloned().ok_or(SynthError::NotEntity(v))
}

/// Samples an anchor and attaches its first related vertex.
pub fn action_init(kb: &KnowledgeBase, rng: &mut impl Rng, cfg: &BuildConfig) -> Result<BuildState, SynthError> {
    let root = kb.sample_anchor(rng, &cfg.anchor).map_err(|_| SynthError::NoValidAnchor)?;
    let title = kb.title(&root).unwrap_or(root.as_str()).to_string();
    let candidates: Vec<&Claim> = kb
        .claims_of(&root)?
        .iter()
        .filter(|c| c.object.as_entity() != Some(&root))
        .filter(|c| !mentions(&c.evidence, &title) && !mentions(&kb.surface_form(&c.object), &title))
        .collect();
    if candidates.is_empty() {
        return Err(SynthError::NoFirstChild(root));
    }
    let claim = candidates[rng.random_range(0..candidates.len())];
    let mut tree = ResearchTree::new(ClaimObject::Entity(root.clone()))?;
    let label = EdgeLabel::forward(claim.predicate.clone(), claim.evidence.clone());
    let child = tree.attach_child(VertexId::ROOT, claim.object.clone(), label.clone())?;
    let mut hidden = vec![VertexId::ROOT];
    if !claim.object.is_literal() {
        hidden.push(child);
    }
    let mut state = BuildState::from_tree(kb, tree, hidden)?;
    state.action_log.push(ActionRecord {
        kind: ActionKind::Init,
        target: VertexId::ROOT,
        anchor: Some(root),
        edges: vec![AttachedEdge {
            child,
            content: claim.object.clone(),
            label,
        }],
    });
    Ok(state)
}

/// Attaches k claims from `v`'s page that together make `v` the unique answer
/// of its subtree, with every candidate set of size at least two and no
/// inclusion between any pair.
pub fn action_blur(
    kb: &KnowledgeBase,
    state: &BuildState,
    v: VertexId,
    rng: &mut impl Rng,
    cfg: &BuildConfig,
) -> Result<BuildState, SynthError> {
    if !state.unresolved.contains(&v) {
        return Err(SynthError::NotUnresolved(v));
    }
    let page = entity_of(&state.tree, v)?;
    let target = ClaimObject::Entity(page.clone());
    if state.tree.depth(v)? + 1 > cfg.max_height {
        return Err(SynthError::CannotBlur(v));
    }
    let pending_others = state.unresolved.len() - 1;
    let budget = cfg
        .target_vertices
        .max
        .saturating_sub(state.tree.vertex_count() + 2 * pending_others);
    let k_hi = cfg.blur_k.max.min(budget);
    let k_lo = cfg.blur_k.min;
    if k_hi < k_lo {
        return Err(SynthError::CannotBlur(v));
    }

    let title = kb.title(&page).unwrap_or(page.as_str()).to_string();
    let hidden_titles = state.hidden_titles(kb);
    let existing: Vec<(String, ClaimObject)> = state
        .tree
        .children(v)?
        .iter()
        .filter_map(|&c| {
            let edge = state.tree.edge_to(c).ok()??;
            Some((edge.label.predicate.to_string(), state.tree.content(c).ok()?.clone()))
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut candidates: Vec<&Claim> = kb
        .claims_of(&page)?
        .iter()
        .filter(|c| match &c.object {
            ClaimObject::Entity(id) => !state.tree.contains_entity(id) && !state.banned.contains(id),
            ClaimObject::Literal(_) => true,
        })
        .filter(|c| !existing.contains(&(c.predicate.to_string(), c.object.clone())))
        .filter(|c| !mentions(&c.evidence, &title))
        .filter(|c| {
            let surface = kb.surface_form(&c.object);
            !hidden_titles.iter().any(|t| mentions(&surface, t))
        })
        .filter(|c| {
            kb.candidate_set(&Constraint::new(c.predicate.clone(), c.object.clone()))
                .len()
                .is_some_and(|n| n >= 2)
        })
        .filter(|c| seen.insert((c.predicate.clone(), c.object.clone())))
        .collect();
    candidates.shuffle(rng);

    let preferred = rng.random_range(k_lo..=k_hi);
    let sizes = std::iter::once(preferred).chain((k_lo..=k_hi).filter(|&k| k != preferred));
    for k in sizes {
        for combo in candidates.iter().combinations(k).take(MAX_COMBINATIONS) {
            let entities: Vec<&PageId> = combo.iter().filter_map(|c| c.object.as_entity()).collect();
            if entities.iter().collect::<BTreeSet<_>>().len() != entities.len() {
                continue;
            }
            let bundle: Vec<Constraint> = combo
                .iter()
                .map(|c| Constraint::new(c.predicate.clone(), c.object.clone()))
                .collect();
            if !check_overdetermined(kb, &bundle, &target).is_empty() {
                continue;
            }
            let mut tree = state.tree.clone();
            let mut edges = Vec::with_capacity(k);
            for claim in &combo {
                let label = EdgeLabel::forward(claim.predicate.clone(), claim.evidence.clone());
                let child = tree.attach_child(v, claim.object.clone(), label.clone())?;
                edges.push(AttachedEdge {
                    child,
                    content: claim.object.clone(),
                    label,
                });
            }
            let node = subtree_to_hcsp(&tree, v)?;
            if check_unique(kb, &node)? != Verdict::Unique(target.clone()) {
                continue;
            }
            let mut next = state.clone();
            next.tree = tree;
            next.action_log.push(ActionRecord {
                kind: ActionKind::Blur,
                target: v,
                anchor: None,
                edges,
            });
            next.refresh(kb)?;
            return Ok(next);
        }
    }
    Err(SynthError::CannotBlur(v))
}

/// Attaches one linked entity under `v`, deepening the dependency chain.
///
/// Both claims on `v`'s page pointing at another entity and claims on other
/// pages pointing at `v` (marked inverse) are eligible. The new child and `v`
/// itself become hidden.
pub fn action_extend(
    kb: &KnowledgeBase,
    state: &BuildState,
    v: VertexId,
    rng: &mut impl Rng,
    cfg: &BuildConfig,
) -> Result<BuildState, SynthError> {
    let page = entity_of(&state.tree, v)?;
    if state.tree.depth(v)? + 1 > cfg.max_height {
        return Err(SynthError::HeightCapReached(v));
    }
    let title = kb.title(&page).unwrap_or(page.as_str()).to_string();
    let usable = |id: &PageId, evidence: &str| {
        !state.tree.contains_entity(id) && !state.banned.contains(id) && !mentions(evidence, &title)
    };
    let mut candidates: Vec<(PageId, EdgeLabel)> = Vec::new();
    for claim in kb.claims_of(&page)? {
        if let ClaimObject::Entity(id) = &claim.object {
            if usable(id, &claim.evidence) {
                candidates.push((id.clone(), EdgeLabel::forward(claim.predicate.clone(), claim.evidence.clone())));
            }
        }
    }
    for claim in kb.incoming_claims(&page)? {
        if usable(&claim.subject, &claim.evidence) && !candidates.iter().any(|(id, _)| id == &claim.subject) {
            candidates.push((
                claim.subject.clone(),
                EdgeLabel::inverse(claim.predicate.clone(), claim.evidence.clone()),
            ));
        }
    }
    if candidates.is_empty() {
        return Err(SynthError::NoExtensibleClaim(v));
    }
    let (entity, label) = candidates.swap_remove(rng.random_range(0..candidates.len()));
    let content = ClaimObject::Entity(entity);
    let mut next = state.clone();
    let child = next.tree.attach_child(v, content.clone(), label.clone())?;
    next.hidden.insert(v);
    next.hidden.insert(child);
    next.action_log.push(ActionRecord {
        kind: ActionKind::Extend,
        target: v,
        anchor: None,
        edges: vec![AttachedEdge { child, content, label }],
    });
    next.refresh(kb)?;
    Ok(next)
}

/// Finalizes a build: checks the vertex budget, resolution of every hidden
/// vertex, uniqueness of the root and leakage in the rendered question.
pub fn action_terminate(
    kb: &KnowledgeBase,
    state: &BuildState,
    cfg: &BuildConfig,
) -> Result<(ResearchTree, HcspNode), SynthError> {
    let vertices = state.tree.vertex_count();
    if !cfg.target_vertices.contains(vertices) {
        return Err(SynthError::ComplexityNotMet {
            vertices,
            min: cfg.target_vertices.min,
            max: cfg.target_vertices.max,
        });
    }
    if !state.unresolved.is_empty() {
        return Err(SynthError::UnresolvedVertices(state.unresolved.iter().copied().collect()));
    }
    let node = tree_to_hcsp(&state.tree);
    let verdict = check_unique(kb, &node)?;
    if verdict != Verdict::Unique(state.tree.root_content().clone()) {
        return Err(SynthError::NotUnique(verdict));
    }
    let text = render_structured(kb, &node)?;
    let check = validate_question(&text, &node, kb);
    if !check.is_pass() {
        return Err(SynthError::QuestionRejected(check));
    }
    Ok((state.tree.clone(), node))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuiltTree {
    pub tree: ResearchTree,
    pub node: HcspNode,
    pub log: Vec<ActionRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Built(BuiltTree),
    Aborted { attempts: usize, reason: String },
}

/// Grows one research tree. Deterministic for a given random source.
pub fn build_tree(kb: &KnowledgeBase, rng: &mut impl Rng, cfg: &BuildConfig) -> Outcome {
    if let Err(err) = cfg.validate() {
        return Outcome::Aborted {
            attempts: 0,
            reason: err.to_string(),
        };
    }
    let mut failures = 0;
    let mut reason = String::new();
    while failures < cfg.max_attempts {
        match attempt(kb, rng, cfg, &mut failures) {
            Ok(built) => return Outcome::Built(built),
            Err(SynthError::NoValidAnchor) => {
                return Outcome::Aborted {
                    attempts: failures + 1,
                    reason: SynthError::NoValidAnchor.to_string(),
                }
            }
            Err(err) => {
                failures += 1;
                reason = err.to_string();
            }
        }
    }
    Outcome::Aborted {
        attempts: failures,
        reason,
    }
}

fn extend_somewhere(
    kb: &KnowledgeBase,
    state: &BuildState,
    rng: &mut impl Rng,
    cfg: &BuildConfig,
) -> Option<BuildState> {
    // The new child must itself be blurrable below the height cap.
    let mut targets: Vec<(usize, VertexId)> = state
        .hidden
        .iter()
        .filter_map(|&v| Some((state.tree.depth(v).ok()?, v)))
        .filter(|&(depth, _)| depth + 2 <= cfg.max_height)
        .collect();
    targets.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    targets
        .into_iter()
        .find_map(|(_, v)| action_extend(kb, state, v, rng, cfg).ok())
}

fn attempt(kb: &KnowledgeBase, rng: &mut impl Rng, cfg: &BuildConfig, failures: &mut usize) -> Result<BuiltTree, SynthError> {
    let mut state = action_init(kb, rng, cfg)?;
    let init_child = VertexId(1);
    let mut history: Vec<BuildState> = Vec::new();
    let max = cfg.target_vertices.max;
    for _ in 0..MAX_STEPS {
        let count = state.tree.vertex_count();
        if state.unresolved.is_empty() {
            if cfg.target_vertices.contains(count) {
                let (tree, node) = action_terminate(kb, &state, cfg)?;
                let mut log = state.action_log;
                log.push(ActionRecord {
                    kind: ActionKind::Terminate,
                    target: VertexId::ROOT,
                    anchor: None,
                    edges: Vec::new(),
                });
                return Ok(BuiltTree { tree, node, log });
            }
            let below = count < cfg.target_vertices.min;
            match extend_somewhere(kb, &state, rng, cfg).filter(|_| below) {
                Some(next) => {
                    history.push(std::mem::replace(&mut state, next));
                    continue;
                }
                None => {
                    return Err(SynthError::ComplexityNotMet {
                        vertices: count,
                        min: cfg.target_vertices.min,
                        max,
                    })
                }
            }
        }
        let pending = state.unresolved.len();
        if count < cfg.target_vertices.midpoint() && count + 1 + 2 * (pending + 1) <= max {
            if let Some(next) = extend_somewhere(kb, &state, rng, cfg) {
                history.push(std::mem::replace(&mut state, next));
                continue;
            }
        }
        let v = *state.unresolved.first().expect("non-empty");
        match action_blur(kb, &state, v, rng, cfg) {
            Ok(next) => history.push(std::mem::replace(&mut state, next)),
            Err(SynthError::CannotBlur(v)) if v != VertexId::ROOT && v != init_child => {
                *failures += 1;
                if *failures >= cfg.max_attempts {
                    return Err(SynthError::CannotBlur(v));
                }
                let entity = state.tree.content(v)?.as_entity().cloned();
                while let Some(prev) = history.pop() {
                    state = prev;
                    if state.tree.vertex_count() <= v.index() {
                        break;
                    }
                }
                if let Some(entity) = entity {
                    state.banned.insert(entity);
                }
            }
            Err(err) => return Err(err),
        }
    }
    Err(SynthError::StepLimit)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("action log does not start with an init record")]
    MissingInit,
    #[error("record {index}: expected child {expected}, tree assigned {actual}")]
    IdMismatch {
        index: usize,
        expected: VertexId,
        actual: VertexId,
    },
    #[error("record {index}: {source}")]
    Tree {
        index: usize,
        #[source]
        source: TreeError,
    },
}

/// Rebuilds the tree described by an action log.
pub fn replay(log: &[ActionRecord]) -> Result<ResearchTree, ReplayError> {
    let Some(first) = log.first().filter(|r| r.kind == ActionKind::Init) else {
        return Err(ReplayError::MissingInit);
    };
    let anchor = first.anchor.clone().ok_or(ReplayError::MissingInit)?;
    let mut tree = ResearchTree::new(ClaimObject::Entity(anchor)).map_err(|source| ReplayError::Tree { index: 0, source })?;
    for (index, record) in log.iter().enumerate() {
        for edge in &record.edges {
            let actual = tree
                .attach_child(record.target, edge.content.clone(), edge.label.clone())
                .map_err(|source| ReplayError::Tree { index, source })?;
            if actual != edge.child {
                return Err(ReplayError::IdMismatch {
                    index,
                    expected: edge.child,
                    actual,
                });
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Link, Page, Predicate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn page(id: &str, claims: &[(&str, ClaimObject)]) -> Page {
        let evidence: Vec<String> = (0..claims.len()).map(|i| format!("Fact {i} here.")).collect();
        Page {
            id: PageId::new(id),
            title: format!("T-{id}"),
            text: evidence.join(" "),
            links: Vec::<Link>::new(),
            claims: claims
                .iter()
                .zip(&evidence)
                .map(|((p, o), e)| Claim {
                    subject: PageId::new(id),
                    predicate: Predicate::new(p),
                    object: o.clone(),
                    evidence: e.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(BuildConfig::default().validate().is_ok());
        let mut cfg = BuildConfig {
            blur_k: InclusiveRange::new(1, 3),
            ..BuildConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.blur_k = InclusiveRange::new(3, 2);
        assert!(cfg.validate().is_err());
        let cfg = BuildConfig {
            target_vertices: InclusiveRange::new(7, 4),
            ..BuildConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn blur_rejects_only_singleton_claims() {
        let lit = ClaimObject::literal;
        let kb = KnowledgeBase::from_pages(
            vec![
                page("A", &[("p", lit("shared")), ("q", lit("only-a"))]),
                page("B", &[("p", lit("shared"))]),
            ],
            &Default::default(),
        )
        .unwrap();
        let tree = ResearchTree::new(ClaimObject::entity("A")).unwrap();
        let state = BuildState::from_tree(&kb, tree, [VertexId::ROOT]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            action_blur(&kb, &state, VertexId::ROOT, &mut rng, &BuildConfig::default()),
            Err(SynthError::CannotBlur(VertexId::ROOT))
        );
    }

    #[test]
    fn replay_detects_missing_init() {
        assert_eq!(replay(&[]), Err(ReplayError::MissingInit));
    }

    #[test]
    fn inverse_extension_is_eligible() {
        let e = ClaimObject::entity;
        let kb = KnowledgeBase::from_pages(
            vec![
                page("A", &[("x", ClaimObject::literal("1"))]),
                page("B", &[("wrote", e("A"))]),
            ],
            &Default::default(),
        )
        .unwrap();
        let tree = ResearchTree::new(e("A")).unwrap();
        let state = BuildState::from_tree(&kb, tree, [VertexId::ROOT]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = action_extend(&kb, &state, VertexId::ROOT, &mut rng, &BuildConfig::default()).unwrap();
        let edge = next.tree.edge_to(VertexId(1)).unwrap().unwrap();
        assert!(edge.label.inverse);
        assert_eq!(next.tree.edge_source(edge), Some(&PageId::new("B")));
        assert!(next.hidden.contains(&VertexId(1)));
    }
}
