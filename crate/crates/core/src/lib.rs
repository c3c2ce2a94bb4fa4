//! Synthesis of hierarchical constraint satisfaction questions from a local
//! knowledge base.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`] loads a page corpus into an immutable [`corpus::KnowledgeBase`]
//!   and answers exact candidate-set queries.
//! - [`tree`] is the evidence-labelled research tree and its canonical text form.
//! - [`hcsp`] evaluates flat, chained and hierarchical constraint problems and
//!   diagnoses under/overdetermination.
//! - [`synth`] grows research trees with the init/blur/extend/terminate actions.
//! - [`question`] renders questions and optionally naturalizes them through an LLM.
//! - [`gate`] runs the difficulty and verifiability filters with pluggable judges.
//! - [`trajectory`] parses tagged agent rollouts, computes rewards and advantages.
//! - [`dataset`] serializes records and produces vertex-bucketed statistics.
//! - [`pipeline`] ties synthesis and verification together for batch runs.

pub mod client;
pub mod corpus;
pub mod dataset;
pub mod gate;
pub mod hcsp;
pub mod pipeline;
pub mod question;
pub mod synth;
pub mod synthetic;
pub mod trajectory;
pub mod tree;

pub use corpus::{Claim, ClaimObject, Constraint, KnowledgeBase, Page, PageId, Predicate};
pub use hcsp::{EntitySet, HcspNode, Verdict};
pub use tree::{ResearchTree, VertexId};
