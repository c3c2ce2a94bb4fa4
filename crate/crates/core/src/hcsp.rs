//! Exact semantics of flat constraint problems, multi-hop chains and
//! hierarchical constraint problems over a [`KnowledgeBase`].
//!
//! A node's answer set is the intersection of its constraints' candidate sets
//! and its sub-questions' contributions, with the empty intersection being the
//! universal set. A sub-question answers a different entity than its parent,
//! so its contribution is re-expressed in the parent's domain through the
//! linking predicate: the entities that stand in `predicate` to some member of
//! the sub-question's answer set (or, for inverse links, that some member
//! stands in `predicate` to).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClaimObject, Constraint, KnowledgeBase, Predicate};
use crate::tree::{ResearchTree, TreeError, VertexId};

/// Nodes nested deeper than this are treated as corrupted input.
pub const MAX_DEPTH: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntitySet {
    /// The universal set; never enumerated.
    Universal,
    Finite(BTreeSet<ClaimObject>),
}

impl EntitySet {
    pub fn empty() -> Self {
        Self::Finite(BTreeSet::new())
    }

    pub fn is_universal(&self) -> bool {
        matches!(self, Self::Universal)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Finite(s) if s.is_empty())
    }

    /// `None` for the universal set.
    pub fn len(&self) -> Option<usize> {
        match self {
            Self::Universal => None,
            Self::Finite(s) => Some(s.len()),
        }
    }

    pub fn contains(&self, x: &ClaimObject) -> bool {
        match self {
            Self::Universal => true,
            Self::Finite(s) => s.contains(x),
        }
    }

    pub fn as_finite(&self) -> Option<&BTreeSet<ClaimObject>> {
        match self {
            Self::Universal => None,
            Self::Finite(s) => Some(s),
        }
    }

    /// Subset test with the universal set as top element.
    pub fn is_subset(&self, other: &EntitySet) -> bool {
        match (self, other) {
            (_, Self::Universal) => true,
            (Self::Universal, Self::Finite(_)) => false,
            (Self::Finite(a), Self::Finite(b)) => a.is_subset(b),
        }
    }
}

impl FromIterator<ClaimObject> for EntitySet {
    fn from_iter<T: IntoIterator<Item = ClaimObject>>(iter: T) -> Self {
        Self::Finite(iter.into_iter().collect())
    }
}

pub fn intersect(a: &EntitySet, b: &EntitySet) -> EntitySet {
    match (a, b) {
        (EntitySet::Universal, other) | (other, EntitySet::Universal) => other.clone(),
        (EntitySet::Finite(x), EntitySet::Finite(y)) => EntitySet::Finite(x.intersection(y).cloned().collect()),
    }
}

/// A sub-question together with the predicate linking its answer to the parent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestion {
    pub predicate: Predicate,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverse: bool,
    pub node: HcspNode,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HcspNode {
    /// The vertex this node was built from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<ClaimObject>,
    pub constraints: Vec<Constraint>,
    pub subquestions: Vec<SubQuestion>,
}

impl HcspNode {
    pub fn flat(constraints: Vec<Constraint>) -> Self {
        Self {
            gold: None,
            constraints,
            subquestions: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty() && self.subquestions.is_empty()
    }

    /// Nesting depth; a node without sub-questions has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.subquestions.iter().map(|s| s.node.depth()).max().unwrap_or(0)
    }

    /// Leaf constraints of this node and all nested sub-questions.
    pub fn all_constraints(&self) -> Vec<&Constraint> {
        let mut out: Vec<&Constraint> = self.constraints.iter().collect();
        for sub in &self.subquestions {
            out.extend(sub.node.all_constraints());
        }
        out
    }
}

/// A multi-hop chain: resolve `start`, then follow each hop from subject to object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopSpec {
    pub start: Constraint,
    pub hops: Vec<Predicate>,
}

impl HopSpec {
    /// The equivalent nested node: each hop becomes an inverse-linked sub-question.
    pub fn to_node(&self) -> HcspNode {
        let mut node = HcspNode::flat(vec![self.start.clone()]);
        for hop in &self.hops {
            node = HcspNode {
                gold: None,
                constraints: Vec::new(),
                subquestions: vec![SubQuestion {
                    predicate: hop.clone(),
                    inverse: true,
                    node,
                }],
            };
        }
        node
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HcspError {
    #[error("node nesting depth {0} exceeds the cap of {MAX_DEPTH}")]
    DepthExceeded(usize),
}

pub fn solve_csp(kb: &KnowledgeBase, constraints: &[Constraint]) -> EntitySet {
    let mut acc = EntitySet::Universal;
    for c in constraints {
        acc = intersect(&acc, &kb.candidate_set(c));
        if acc.is_empty() {
            break;
        }
    }
    acc
}

pub fn solve_chain(kb: &KnowledgeBase, spec: &HopSpec) -> EntitySet {
    let mut current = kb.candidate_set(&spec.start);
    for hop in &spec.hops {
        let members = current.as_finite().cloned().unwrap_or_default();
        current = members
            .iter()
            .filter_map(ClaimObject::as_entity)
            .flat_map(|subject| kb.objects_of(subject, hop).cloned().collect::<Vec<_>>())
            .collect();
    }
    current
}

pub fn evaluate(kb: &KnowledgeBase, node: &HcspNode) -> Result<EntitySet, HcspError> {
    let depth = node.depth();
    if depth > MAX_DEPTH {
        return Err(HcspError::DepthExceeded(depth));
    }
    Ok(eval_node(kb, node))
}

fn eval_node(kb: &KnowledgeBase, node: &HcspNode) -> EntitySet {
    let mut acc = solve_csp(kb, &node.constraints);
    for sub in &node.subquestions {
        if acc.is_empty() {
            break;
        }
        let inner = eval_node(kb, &sub.node);
        acc = intersect(&acc, &link(kb, &sub.predicate, sub.inverse, &inner));
    }
    acc
}

/// Maps a sub-question's answer set into the parent's domain.
fn link(kb: &KnowledgeBase, predicate: &Predicate, inverse: bool, inner: &EntitySet) -> EntitySet {
    match (inverse, inner) {
        (false, EntitySet::Universal) => kb
            .subjects_with_predicate(predicate)
            .map(|s| s.iter().cloned().map(ClaimObject::Entity).collect())
            .unwrap_or_else(EntitySet::empty),
        (false, EntitySet::Finite(members)) => members
            .iter()
            .flat_map(|o| kb.subjects(predicate, o).into_iter().flatten().cloned())
            .map(ClaimObject::Entity)
            .collect(),
        (true, EntitySet::Universal) => kb
            .claims()
            .filter(|c| &c.predicate == predicate)
            .map(|c| c.object.clone())
            .collect(),
        (true, EntitySet::Finite(members)) => members
            .iter()
            .filter_map(ClaimObject::as_entity)
            .flat_map(|s| kb.objects_of(s, predicate).cloned().collect::<Vec<_>>())
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinality {
    Finite(usize),
    Infinite,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Unique(ClaimObject),
    Underdetermined(Cardinality),
    Empty,
}

pub fn check_unique(kb: &KnowledgeBase, node: &HcspNode) -> Result<Verdict, HcspError> {
    Ok(match evaluate(kb, node)? {
        EntitySet::Universal => Verdict::Underdetermined(Cardinality::Infinite),
        EntitySet::Finite(set) => match set.len() {
            0 => Verdict::Empty,
            1 => Verdict::Unique(set.into_iter().next().expect("one element")),
            n => Verdict::Underdetermined(Cardinality::Finite(n)),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// The constraint alone leaves at most one candidate.
    Singleton { index: usize, size: usize },
    /// Candidate set of `subset` is contained in that of `superset`.
    Inclusion { subset: usize, superset: usize },
    /// The target does not satisfy the constraint.
    Unsatisfied { index: usize },
}

/// Overdetermination diagnostics for a bundle of constraints describing `target`.
pub fn check_overdetermined(kb: &KnowledgeBase, constraints: &[Constraint], target: &ClaimObject) -> Vec<Violation> {
    let sets: Vec<EntitySet> = constraints.iter().map(|c| kb.candidate_set(c)).collect();
    let mut violations = Vec::new();
    for (index, set) in sets.iter().enumerate() {
        if !set.contains(target) {
            violations.push(Violation::Unsatisfied { index });
        }
        if let Some(size) = set.len().filter(|&n| n <= 1) {
            violations.push(Violation::Singleton { index, size });
        }
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if sets[i].is_subset(&sets[j]) {
                violations.push(Violation::Inclusion { subset: i, superset: j });
            } else if sets[j].is_subset(&sets[i]) {
                violations.push(Violation::Inclusion { subset: j, superset: i });
            }
        }
    }
    violations
}

/// Converts the subtree rooted at `v`: leaf children become constraints and
/// internal children become sub-questions, both in child-id order.
pub fn subtree_to_hcsp(tree: &ResearchTree, v: VertexId) -> Result<HcspNode, TreeError> {
    let mut node = HcspNode {
        gold: Some(tree.content(v)?.clone()),
        constraints: Vec::new(),
        subquestions: Vec::new(),
    };
    for &child in tree.children(v)? {
        let label = &tree.edge_to(child)?.expect("child has an edge").label;
        if tree.is_leaf(child)? {
            node.constraints.push(Constraint {
                predicate: label.predicate.clone(),
                object: tree.content(child)?.clone(),
                inverse: label.inverse,
            });
        } else {
            node.subquestions.push(SubQuestion {
                predicate: label.predicate.clone(),
                inverse: label.inverse,
                node: subtree_to_hcsp(tree, child)?,
            });
        }
    }
    Ok(node)
}

pub fn tree_to_hcsp(tree: &ResearchTree) -> HcspNode {
    subtree_to_hcsp(tree, tree.root()).expect("root exists")
}
