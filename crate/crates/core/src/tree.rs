//! Research trees: rooted, evidence-labelled trees of entities and literal facts.
//!
//! Vertices get dense ids in creation order, so a child's id is always larger
//! than its parent's. Literal vertices are always leaves and an entity may
//! appear at most once per tree.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClaimObject, PageId, Predicate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    pub const ROOT: VertexId = VertexId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub content: ClaimObject,
}

/// Relation carried by an edge, before it is attached to a tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub predicate: Predicate,
    /// The underlying claim is stored on the child's page as `(child, predicate, parent)`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverse: bool,
    pub evidence: String,
}

impl EdgeLabel {
    pub fn forward(predicate: impl Into<Predicate>, evidence: impl Into<String>) -> Self {
        Self {
            predicate: predicate.into(),
            inverse: false,
            evidence: evidence.into(),
        }
    }

    pub fn inverse(predicate: impl Into<Predicate>, evidence: impl Into<String>) -> Self {
        Self {
            predicate: predicate.into(),
            inverse: true,
            evidence: evidence.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub parent: VertexId,
    pub child: VertexId,
    pub label: EdgeLabel,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("the root of a research tree must be an entity")]
    LiteralRoot,
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("vertex {0} is a literal and cannot have children")]
    LiteralParent(VertexId),
    #[error("entity {0} is already in the tree")]
    DuplicateEntity(PageId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Slot {
    content: ClaimObject,
    parent: Option<TreeEdge>,
    children: Vec<VertexId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResearchTree {
    slots: Vec<Slot>,
    entities: HashSet<PageId>,
}

/// (id, parent and incoming label, content, depth) as read from canonical text.
type FlatVertex = (VertexId, Option<(VertexId, EdgeLabel)>, ClaimObject, usize);

impl ResearchTree {
    /// A single root vertex with no edges.
    pub fn new(root: ClaimObject) -> Result<Self, TreeError> {
        let ClaimObject::Entity(id) = &root else {
            return Err(TreeError::LiteralRoot);
        };
        let entities = HashSet::from([id.clone()]);
        Ok(Self {
            slots: vec![Slot {
                content: root,
                parent: None,
                children: Vec::new(),
            }],
            entities,
        })
    }

    pub fn attach_child(&mut self, parent: VertexId, content: ClaimObject, label: EdgeLabel) -> Result<VertexId, TreeError> {
        let slot = self.slot(parent)?;
        if slot.content.is_literal() {
            return Err(TreeError::LiteralParent(parent));
        }
        if let ClaimObject::Entity(id) = &content {
            if self.entities.contains(id) {
                return Err(TreeError::DuplicateEntity(id.clone()));
            }
            self.entities.insert(id.clone());
        }
        let child = VertexId(self.slots.len() as u32);
        self.slots.push(Slot {
            content,
            parent: Some(TreeEdge { parent, child, label }),
            children: Vec::new(),
        });
        self.slots[parent.index()].children.push(child);
        Ok(child)
    }

    fn slot(&self, v: VertexId) -> Result<&Slot, TreeError> {
        self.slots.get(v.index()).ok_or(TreeError::UnknownVertex(v))
    }

    pub fn root(&self) -> VertexId {
        VertexId::ROOT
    }

    pub fn root_content(&self) -> &ClaimObject {
        &self.slots[0].content
    }

    pub fn content(&self, v: VertexId) -> Result<&ClaimObject, TreeError> {
        Ok(&self.slot(v)?.content)
    }

    pub fn children(&self, v: VertexId) -> Result<&[VertexId], TreeError> {
        Ok(&self.slot(v)?.children)
    }

    pub fn parent(&self, v: VertexId) -> Result<Option<VertexId>, TreeError> {
        Ok(self.slot(v)?.parent.as_ref().map(|e| e.parent))
    }

    /// The edge from `v`'s parent to `v`; `None` for the root.
    pub fn edge_to(&self, v: VertexId) -> Result<Option<&TreeEdge>, TreeError> {
        Ok(self.slot(v)?.parent.as_ref())
    }

    pub fn is_leaf(&self, v: VertexId) -> Result<bool, TreeError> {
        Ok(self.slot(v)?.children.is_empty())
    }

    /// Height of the subtree rooted at `v`; leaves have height 0.
    pub fn height(&self, v: VertexId) -> Result<usize, TreeError> {
        let slot = self.slot(v)?;
        let mut best = 0;
        for &child in &slot.children {
            best = best.max(1 + self.height(child)?);
        }
        Ok(best)
    }

    /// Number of edges between the root and `v`.
    pub fn depth(&self, v: VertexId) -> Result<usize, TreeError> {
        let mut depth = 0;
        let mut cur = v;
        while let Some(p) = self.parent(cur)? {
            depth += 1;
            cur = p;
        }
        Ok(depth)
    }

    pub fn vertex_count(&self) -> usize {
        self.slots.len()
    }

    pub fn edge_count(&self) -> usize {
        self.slots.len() - 1
    }

    pub fn tree_height(&self) -> usize {
        self.height(VertexId::ROOT).expect("root exists")
    }

    pub fn contains_entity(&self, id: &PageId) -> bool {
        self.entities.contains(id)
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.slots.len() as u32).map(VertexId)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.slots.iter().enumerate().map(|(i, s)| Vertex {
            id: VertexId(i as u32),
            content: s.content.clone(),
        })
    }

    /// Edges in child-id order.
    pub fn edges(&self) -> impl Iterator<Item = &TreeEdge> {
        self.slots.iter().filter_map(|s| s.parent.as_ref())
    }

    /// Page whose claim labels the edge: the parent's page for forward edges,
    /// the child's page for inverse ones.
    pub fn edge_source(&self, edge: &TreeEdge) -> Option<&PageId> {
        let holder = if edge.label.inverse { edge.child } else { edge.parent };
        self.slots.get(holder.index()).and_then(|s| s.content.as_entity())
    }

    /// Canonical single-line text form. Equal trees serialize to equal bytes.
    ///
    /// ```text
    /// (v0 E"AlanTuring" ["born_in" > "He was born in London." (v1 E"London")])
    /// ```
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        self.write_vertex(VertexId::ROOT, &mut out);
        out
    }

    fn write_vertex(&self, v: VertexId, out: &mut String) {
        let slot = &self.slots[v.index()];
        out.push('(');
        out.push_str(&v.to_string());
        out.push(' ');
        match &slot.content {
            ClaimObject::Entity(id) => {
                out.push('E');
                write_quoted(id.as_str(), out);
            }
            ClaimObject::Literal(text) => {
                out.push('L');
                write_quoted(text, out);
            }
        }
        for &child in &slot.children {
            let label = &self.slots[child.index()].parent.as_ref().expect("child has edge").label;
            out.push_str(" [");
            write_quoted(label.predicate.as_str(), out);
            out.push_str(if label.inverse { " < " } else { " > " });
            write_quoted(&label.evidence, out);
            out.push(' ');
            self.write_vertex(child, out);
            out.push(']');
        }
        out.push(')');
    }

    pub fn parse_canonical(text: &str) -> Result<Self, ParseError> {
        let mut parser = Parser { src: text, pos: 0 };
        let root = parser.vertex()?;
        if parser.pos != text.len() {
            return Err(parser.error("trailing input"));
        }
        if root.id != VertexId::ROOT {
            return Err(ParseError {
                position: 0,
                message: format!("root must be v0, found {}", root.id),
            });
        }
        // Flatten, then rebuild in id order so attach_child reproduces the ids.
        let mut flat: Vec<FlatVertex> = Vec::new();
        let mut stack = vec![(root, None)];
        while let Some((node, edge)) = stack.pop() {
            flat.push((node.id, edge, node.content, node.position));
            for (label, child) in node.children.into_iter().rev() {
                stack.push((child, Some((node.id, label))));
            }
        }
        flat.sort_by_key(|(id, ..)| *id);
        for (expected, (id, _, _, position)) in flat.iter().enumerate() {
            if id.index() != expected {
                return Err(ParseError {
                    position: *position,
                    message: format!("vertex ids must be dense, expected v{expected} found {id}"),
                });
            }
        }
        let mut iter = flat.into_iter();
        let (_, _, root_content, _) = iter.next().expect("root present");
        let mut tree = Self::new(root_content).map_err(|e| ParseError {
            position: 0,
            message: e.to_string(),
        })?;
        for (id, edge, content, position) in iter {
            let (parent, label) = edge.expect("non-root vertices have a parent");
            if parent >= id {
                return Err(ParseError {
                    position,
                    message: format!("child {id} must be created after parent {parent}"),
                });
            }
            tree.attach_child(parent, content, label).map_err(|e| ParseError {
                position,
                message: e.to_string(),
            })?;
        }
        // Child order inside each vertex must be ascending for the text to be canonical.
        if tree.to_canonical() != text {
            return Err(ParseError {
                position: 0,
                message: "tree text is not in canonical form".into(),
            });
        }
        Ok(tree)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("tree text, byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

fn write_quoted(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

struct ParsedVertex {
    id: VertexId,
    content: ClaimObject,
    children: Vec<(EdgeLabel, ParsedVertex)>,
    position: usize,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, lit: &str) -> Result<(), ParseError> {
        if self.src[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.error(&format!("expected {lit:?}")))
        }
    }

    fn vertex(&mut self) -> Result<ParsedVertex, ParseError> {
        let position = self.pos;
        self.expect("(v")?;
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let id: u32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| self.error("expected vertex number"))?;
        self.expect(" ")?;
        let content = match self.peek() {
            Some('E') => {
                self.pos += 1;
                ClaimObject::Entity(PageId::new(self.quoted()?))
            }
            Some('L') => {
                self.pos += 1;
                ClaimObject::Literal(self.quoted()?)
            }
            _ => return Err(self.error("expected E or L content tag")),
        };
        let mut children = Vec::new();
        loop {
            match self.peek() {
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some(' ') => {
                    self.expect(" [")?;
                    let predicate = self.quoted()?;
                    let inverse = match &self.src[self.pos..] {
                        s if s.starts_with(" > ") => false,
                        s if s.starts_with(" < ") => true,
                        _ => return Err(self.error("expected edge direction")),
                    };
                    self.pos += 3;
                    let evidence = self.quoted()?;
                    self.expect(" ")?;
                    let child = self.vertex()?;
                    self.expect("]")?;
                    children.push((
                        EdgeLabel {
                            predicate: Predicate::new(&predicate),
                            inverse,
                            evidence,
                        },
                        child,
                    ));
                }
                _ => return Err(self.error("expected edge or ')'")),
            }
        }
        Ok(ParsedVertex {
            id: VertexId(id),
            content,
            children,
            position,
        })
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        self.expect("\"")?;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error("unterminated string"));
            };
            self.pos += c.len_utf8();
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let Some(esc) = self.peek() else {
                        return Err(self.error("unterminated escape"));
                    };
                    self.pos += 1;
                    match esc {
                        '"' => out.push('"'),
                        '\\' => out.push('\\'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        'u' => {
                            let hex = self
                                .src
                                .get(self.pos..self.pos + 4)
                                .ok_or_else(|| self.error("short unicode escape"))?;
                            let code = u32::from_str_radix(hex, 16).map_err(|_| self.error("bad unicode escape"))?;
                            out.push(char::from_u32(code).ok_or_else(|| self.error("bad unicode escape"))?);
                            self.pos += 4;
                        }
                        _ => return Err(self.error("unknown escape")),
                    }
                }
                c => out.push(c),
            }
        }
    }
}
