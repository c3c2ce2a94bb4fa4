//! Question rendering.
//!
//! The structured grammar is deterministic and is the default surface form:
//!
//! ```text
//! Find the entity X such that: X born_in London; X studied_at (the entity Y such that: Y located_in New Jersey; Y founded_in 1746).
//! ```
//!
//! Entity objects render by page title and literals verbatim. Inverse
//! relations put the unknown on the right: `England capital_of X`.
//! An optional LLM pass rewrites the structured text into fluent prose; its
//! output is accepted only if it passes [`validate_question`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, GenerationParams, LlmClient};
use crate::corpus::{Constraint, KnowledgeBase};
use crate::hcsp::{HcspNode, SubQuestion};

pub const NATURALIZE_PROMPT: &str = include_str!("../assets/prompts/naturalize_v1.txt");
pub const NATURALIZE_PROMPT_VERSION: &str = "naturalize_v1";

const VARIABLES: &[&str] = &["X", "Y", "Z", "W", "V", "U", "T", "S", "R", "Q"];

fn variable(depth: usize) -> String {
    VARIABLES
        .get(depth)
        .map(|v| v.to_string())
        .unwrap_or_else(|| format!("X{depth}"))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("cannot render a node without constraints or sub-questions")]
    EmptyNode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedQuestion {
    pub structured_text: String,
    pub natural_text: Option<String>,
    /// Naturalization was attempted but fell back to the structured text.
    pub fallback: bool,
}

pub fn render_structured(kb: &KnowledgeBase, node: &HcspNode) -> Result<String, RenderError> {
    let mut out = String::from("Find the entity X such that: ");
    render_clauses(kb, node, 0, &mut out)?;
    out.push('.');
    Ok(out)
}

fn render_clauses(kb: &KnowledgeBase, node: &HcspNode, depth: usize, out: &mut String) -> Result<(), RenderError> {
    if node.is_empty() {
        return Err(RenderError::EmptyNode);
    }
    let var = variable(depth);
    let mut first = true;
    let mut sep = |out: &mut String| {
        if !first {
            out.push_str("; ");
        }
        first = false;
    };
    for c in &node.constraints {
        sep(out);
        let object = kb.surface_form(&c.object);
        if c.inverse {
            out.push_str(&format!("{object} {} {var}", c.predicate));
        } else {
            out.push_str(&format!("{var} {} {object}", c.predicate));
        }
    }
    for SubQuestion { predicate, inverse, node } in &node.subquestions {
        sep(out);
        let mut inner = format!("(the entity {} such that: ", variable(depth + 1));
        render_clauses(kb, node, depth + 1, &mut inner)?;
        inner.push(')');
        if *inverse {
            out.push_str(&format!("{inner} {predicate} {var}"));
        } else {
            out.push_str(&format!("{var} {predicate} {inner}"));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionCheck {
    Pass,
    /// The answer's surface form appears in the question.
    Leakage { title: String },
    /// A constraint's object is not mentioned.
    MissingConstraint { surface: String },
}

impl QuestionCheck {
    pub fn is_pass(&self) -> bool {
        matches!(self, Self::Pass)
    }
}

/// Checks that the gold answer is not named and every constraint object is mentioned.
pub fn validate_question(text: &str, node: &HcspNode, kb: &KnowledgeBase) -> QuestionCheck {
    let haystack = text.to_lowercase();
    if let Some(gold) = &node.gold {
        let title = kb.surface_form(gold);
        if haystack.contains(&title.to_lowercase()) {
            return QuestionCheck::Leakage { title };
        }
    }
    for c in node.all_constraints() {
        let surface = kb.surface_form(&c.object);
        if !haystack.contains(&surface.to_lowercase()) {
            return QuestionCheck::MissingConstraint { surface };
        }
    }
    QuestionCheck::Pass
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalizeConfig {
    /// Completions requested before falling back to the structured text.
    pub max_attempts: u32,
    pub params: GenerationParams,
}

impl Default for NaturalizeConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            params: GenerationParams {
                max_tokens: 256,
                temperature: 0.7,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Naturalized {
    pub text: String,
    pub fallback: bool,
    pub attempts: u32,
    pub rejections: Vec<QuestionCheck>,
    pub client_error: Option<String>,
}

fn describe(kb: &KnowledgeBase, node: &HcspNode, depth: usize, out: &mut Vec<String>) {
    let var = variable(depth);
    let facts: Vec<String> = node
        .constraints
        .iter()
        .map(|Constraint { predicate, object, inverse }| {
            let object = kb.surface_form(object);
            if *inverse {
                format!("{object} {predicate} {var}")
            } else {
                format!("{var} {predicate} {object}")
            }
        })
        .chain(node.subquestions.iter().map(|s| {
            let sub = variable(depth + 1);
            if s.inverse {
                format!("{sub} {} {var}", s.predicate)
            } else {
                format!("{var} {} {sub}", s.predicate)
            }
        }))
        .collect();
    out.push(format!("- {var}: {}", facts.join("; ")));
    for s in &node.subquestions {
        describe(kb, &s.node, depth + 1, out);
    }
}

pub fn naturalize_prompt(kb: &KnowledgeBase, node: &HcspNode, structured: &str) -> String {
    let mut lines = Vec::new();
    describe(kb, node, 0, &mut lines);
    NATURALIZE_PROMPT
        .replace("{{descriptions}}", &lines.join("\n"))
        .replace("{{structured}}", structured)
}

/// Asks the client for a fluent rewrite, retrying rejected completions.
pub fn naturalize(
    kb: &KnowledgeBase,
    node: &HcspNode,
    client: &dyn LlmClient,
    cfg: &NaturalizeConfig,
) -> Result<Naturalized, RenderError> {
    let structured = render_structured(kb, node)?;
    let prompt = naturalize_prompt(kb, node, &structured);
    let mut rejections = Vec::new();
    let mut attempts = 0;
    let mut client_error: Option<ClientError> = None;
    while attempts < cfg.max_attempts {
        attempts += 1;
        match client.complete(&prompt, &cfg.params) {
            Ok(text) => {
                let text = text.trim().to_string();
                match validate_question(&text, node, kb) {
                    QuestionCheck::Pass if !text.is_empty() => {
                        return Ok(Naturalized {
                            text,
                            fallback: false,
                            attempts,
                            rejections,
                            client_error: None,
                        })
                    }
                    check => rejections.push(check),
                }
            }
            Err(err) => {
                client_error = Some(err);
                break;
            }
        }
    }
    Ok(Naturalized {
        text: structured,
        fallback: true,
        attempts,
        rejections,
        client_error: client_error.map(|e| e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClaimObject, Page, PageId};
    use crate::hcsp::SubQuestion;
    use std::sync::Mutex;

    fn kb() -> KnowledgeBase {
        let page = |id: &str, title: &str| Page {
            id: PageId::new(id),
            title: title.into(),
            text: String::new(),
            links: vec![],
            claims: vec![],
        };
        KnowledgeBase::from_pages(
            vec![
                page("AlanTuring", "Alan Turing"),
                page("London", "London"),
                page("Cambridge", "Cambridge"),
                page("England", "England"),
            ],
            &Default::default(),
        )
        .unwrap()
    }

    fn flat() -> HcspNode {
        HcspNode {
            gold: Some(ClaimObject::entity("AlanTuring")),
            constraints: vec![
                Constraint::new("born_in", ClaimObject::entity("London")),
                Constraint::new("graduated_from", ClaimObject::entity("Cambridge")),
            ],
            subquestions: vec![],
        }
    }

    #[test]
    fn flat_node_renders_with_semicolons() {
        assert_eq!(
            render_structured(&kb(), &flat()).unwrap(),
            "Find the entity X such that: X born_in London; X graduated_from Cambridge."
        );
    }

    #[test]
    fn single_constraint_has_no_separator() {
        let node = HcspNode::flat(vec![Constraint::new("born_on", ClaimObject::literal("1920"))]);
        let text = render_structured(&kb(), &node).unwrap();
        assert_eq!(text, "Find the entity X such that: X born_on 1920.");
        assert!(!text.contains(';'));
    }

    #[test]
    fn nested_and_inverse_clauses() {
        let node = HcspNode {
            gold: None,
            constraints: vec![Constraint::new("graduated_from", ClaimObject::entity("Cambridge"))],
            subquestions: vec![
                SubQuestion {
                    predicate: "born_in".into(),
                    inverse: false,
                    node: HcspNode::flat(vec![Constraint::new("capital_of", ClaimObject::entity("England"))]),
                },
                SubQuestion {
                    predicate: "wrote".into(),
                    inverse: true,
                    node: HcspNode::flat(vec![Constraint::new("genre", ClaimObject::literal("novel"))]),
                },
            ],
        };
        assert_eq!(
            render_structured(&kb(), &node).unwrap(),
            "Find the entity X such that: X graduated_from Cambridge; \
             X born_in (the entity Y such that: Y capital_of England); \
             (the entity Y such that: Y genre novel) wrote X."
        );
    }

    #[test]
    fn empty_nodes_are_rejected() {
        assert_eq!(render_structured(&kb(), &HcspNode::default()), Err(RenderError::EmptyNode));
    }

    #[test]
    fn validation_catches_leakage_and_missing_objects() {
        let kb = kb();
        let node = flat();
        let text = render_structured(&kb, &node).unwrap();
        assert_eq!(validate_question(&text, &node, &kb), QuestionCheck::Pass);
        assert_eq!(
            validate_question("Who was born in London?", &node, &kb),
            QuestionCheck::MissingConstraint {
                surface: "Cambridge".into()
            }
        );
        assert_eq!(
            validate_question("Was ALAN TURING born in London and schooled at Cambridge?", &node, &kb),
            QuestionCheck::Leakage {
                title: "Alan Turing".into()
            }
        );
    }

    struct Scripted(Mutex<Vec<Result<String, ClientError>>>);

    impl LlmClient for Scripted {
        fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, ClientError> {
            self.0.lock().unwrap().remove(0)
        }
    }

    #[test]
    fn naturalize_accepts_valid_rewrite() {
        let client = Scripted(Mutex::new(vec![Ok(
            "Which London-born scientist graduated from Cambridge?".into()
        )]));
        let out = naturalize(&kb(), &flat(), &client, &NaturalizeConfig::default()).unwrap();
        assert!(!out.fallback);
        assert_eq!(out.attempts, 1);
        assert_eq!(out.text, "Which London-born scientist graduated from Cambridge?");
    }

    #[test]
    fn naturalize_retries_after_leak() {
        let client = Scripted(Mutex::new(vec![
            Ok("Was it Alan Turing, born in London, Cambridge graduate?".into()),
            Ok("Who was born in London and graduated from Cambridge?".into()),
        ]));
        let out = naturalize(&kb(), &flat(), &client, &NaturalizeConfig::default()).unwrap();
        assert!(!out.fallback);
        assert_eq!(out.attempts, 2);
        assert!(matches!(out.rejections[0], QuestionCheck::Leakage { .. }));
    }

    #[test]
    fn naturalize_falls_back_on_dead_client() {
        let client = Scripted(Mutex::new(vec![Err(ClientError::Timeout)]));
        let out = naturalize(&kb(), &flat(), &client, &NaturalizeConfig::default()).unwrap();
        assert!(out.fallback);
        assert_eq!(out.text, render_structured(&kb(), &flat()).unwrap());
        assert_eq!(out.client_error.as_deref(), Some("request timed out"));
    }

    #[test]
    fn prompt_carries_descriptions_and_structure() {
        let prompt = naturalize_prompt(&kb(), &flat(), "STRUCT");
        assert!(prompt.contains("- X: X born_in London; X graduated_from Cambridge"));
        assert!(prompt.contains("STRUCT"));
        assert!(!prompt.contains("{{"));
    }
}
