//! Shared test support: an independent brute-force evaluator, random problem
//! generators and scripted judges.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Mutex;

use hcsp_core::client::{ClientError, JudgeClient};
use hcsp_core::corpus::{load_corpus, Claim, IngestPolicy};
use hcsp_core::hcsp::{HopSpec, SubQuestion};
use hcsp_core::{ClaimObject, Constraint, EntitySet, HcspNode, KnowledgeBase, PageId, Predicate};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn turing_kb() -> KnowledgeBase {
    load_corpus(fixture("turing.kb"), &IngestPolicy::default()).expect("turing fixture loads")
}

/// Brute-force evaluator: enumerates every object in the corpus and tests it
/// against the node by scanning raw page claims. Uses no index.
pub struct Oracle<'a> {
    claims: Vec<&'a Claim>,
    by_page: HashMap<&'a PageId, &'a [Claim]>,
    universe: BTreeSet<ClaimObject>,
}

impl<'a> Oracle<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        let claims: Vec<&Claim> = kb.pages().iter().flat_map(|p| p.claims.iter()).collect();
        let mut universe: BTreeSet<ClaimObject> = kb.pages().iter().map(|p| ClaimObject::Entity(p.id.clone())).collect();
        universe.extend(claims.iter().map(|c| c.object.clone()));
        let by_page = kb.pages().iter().map(|p| (&p.id, p.claims.as_slice())).collect();
        Self { claims, by_page, universe }
    }

    fn has(&self, s: &ClaimObject, p: &Predicate, o: &ClaimObject) -> bool {
        let ClaimObject::Entity(s) = s else { return false };
        self.by_page
            .get(s)
            .is_some_and(|claims| claims.iter().any(|c| &c.predicate == p && &c.object == o))
    }

    /// `None` stands for the universal set (an empty node).
    pub fn solve(&self, node: &HcspNode) -> Option<BTreeSet<ClaimObject>> {
        if node.constraints.is_empty() && node.subquestions.is_empty() {
            return None;
        }
        let subs: Vec<(&SubQuestion, Option<BTreeSet<ClaimObject>>)> =
            node.subquestions.iter().map(|s| (s, self.solve(&s.node))).collect();
        let in_set = |set: &Option<BTreeSet<ClaimObject>>, y: &ClaimObject| set.as_ref().is_none_or(|s| s.contains(y));
        let answer = self
            .universe
            .iter()
            .filter(|x| {
                node.constraints.iter().all(|c| {
                    if c.inverse {
                        self.has(&c.object, &c.predicate, x)
                    } else {
                        self.has(x, &c.predicate, &c.object)
                    }
                })
            })
            .filter(|x| {
                subs.iter().all(|(sub, set)| {
                    let linked = |c: &Claim| {
                        let subject = ClaimObject::Entity(c.subject.clone());
                        c.predicate == sub.predicate
                            && if sub.inverse {
                                &c.object == *x && in_set(set, &subject)
                            } else {
                                in_set(set, &c.object)
                            }
                    };
                    match (sub.inverse, x) {
                        (true, _) => self.claims.iter().any(|c| linked(c)),
                        (false, ClaimObject::Entity(id)) => {
                            self.by_page.get(id).is_some_and(|claims| claims.iter().any(linked))
                        }
                        (false, ClaimObject::Literal(_)) => false,
                    }
                })
            })
            .cloned()
            .collect();
        Some(answer)
    }

    pub fn agrees(&self, node: &HcspNode, got: &EntitySet) -> bool {
        match (self.solve(node), got) {
            (None, EntitySet::Universal) => true,
            (Some(want), EntitySet::Finite(have)) => &want == have,
            _ => false,
        }
    }
}

/// Small corpus with few predicates and objects so candidate sets overlap.
pub fn random_kb(rng: &mut impl Rng, pages: usize) -> KnowledgeBase {
    use hcsp_core::corpus::Link;
    let preds = ["p", "q", "r", "s"];
    let lits = ["red", "green", "blue"];
    let mut out = Vec::new();
    for i in 0..pages {
        let mut text = format!("Page number {i}.");
        let mut claims = Vec::new();
        let mut links = Vec::new();
        for j in 0..rng.random_range(0..5) {
            let predicate = Predicate::new(preds[rng.random_range(0..preds.len())]);
            let object = if rng.random_bool(0.6) {
                ClaimObject::entity(format!("n{}", rng.random_range(0..pages)))
            } else {
                ClaimObject::literal(lits[rng.random_range(0..lits.len())])
            };
            let evidence = format!("Fact {j} of {i}.");
            text.push(' ');
            text.push_str(&evidence);
            if let ClaimObject::Entity(t) = &object {
                links.push(Link {
                    target: t.clone(),
                    evidence: evidence.clone(),
                });
            }
            claims.push(Claim {
                subject: PageId::new(format!("n{i}")),
                predicate,
                object,
                evidence,
            });
        }
        out.push(hcsp_core::Page {
            id: PageId::new(format!("n{i}")),
            title: format!("Node {i}"),
            text,
            links,
            claims,
        });
    }
    KnowledgeBase::from_pages(out, &IngestPolicy::default()).expect("random kb is well-formed")
}

fn predicates(kb: &KnowledgeBase) -> Vec<Predicate> {
    kb.claims().map(|c| c.predicate.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// A constraint drawn from a real claim most of the time, arbitrary otherwise.
pub fn random_constraint(kb: &KnowledgeBase, rng: &mut impl Rng) -> Constraint {
    let claims: Vec<&Claim> = kb.claims().collect();
    let pages = kb.pages();
    let c = claims[rng.random_range(0..claims.len())];
    match rng.random_range(0..10) {
        0..=5 => Constraint::new(c.predicate.clone(), c.object.clone()),
        6..=7 => Constraint::inverse(c.predicate.clone(), c.subject.clone()),
        _ => {
            let other = &pages[rng.random_range(0..pages.len())].id;
            Constraint::new(c.predicate.clone(), ClaimObject::Entity(other.clone()))
        }
    }
}

/// Random nested node with at most `budget` vertices (root included).
pub fn random_node(kb: &KnowledgeBase, rng: &mut impl Rng, budget: usize) -> HcspNode {
    let preds = predicates(kb);
    let mut left = budget.saturating_sub(1);
    let mut node = HcspNode::default();
    while left > 0 && rng.random_bool(0.75) {
        if left >= 2 && rng.random_bool(0.35) {
            let size = rng.random_range(1..left.min(4));
            let inner = random_node(kb, rng, size + 1);
            left -= size + 1;
            node.subquestions.push(SubQuestion {
                predicate: preds[rng.random_range(0..preds.len())].clone(),
                inverse: rng.random_bool(0.5),
                node: inner,
            });
        } else {
            node.constraints.push(random_constraint(kb, rng));
            left -= 1;
        }
    }
    node
}

pub fn node_vertices(node: &HcspNode) -> usize {
    1 + node.constraints.len() + node.subquestions.iter().map(|s| node_vertices(&s.node)).sum::<usize>()
}

pub fn random_flat(kb: &KnowledgeBase, rng: &mut impl Rng) -> Vec<Constraint> {
    (0..rng.random_range(1..=4)).map(|_| random_constraint(kb, rng)).collect()
}

pub fn random_chain(kb: &KnowledgeBase, rng: &mut impl Rng) -> HopSpec {
    let preds = predicates(kb);
    let start = random_constraint(kb, rng);
    let hops = (0..rng.random_range(1..=3))
        .map(|_| preds[rng.random_range(0..preds.len())].clone())
        .collect();
    HopSpec { start, hops }
}

/// Judge driven by a closure over the prompt.
pub struct FnJudge<F>(pub F);

impl<F> JudgeClient for FnJudge<F>
where
    F: Fn(&str) -> Result<String, ClientError> + Send + Sync,
{
    fn answer(&self, prompt: &str) -> Result<String, ClientError> {
        (self.0)(prompt)
    }
}

/// Judge that replays canned responses per question text and records prompts.
pub struct ScriptedJudge {
    pub responses: HashMap<String, Result<String, ClientError>>,
    pub default: Result<String, ClientError>,
    pub prompts: Mutex<Vec<String>>,
}

impl ScriptedJudge {
    pub fn new(default: &str) -> Self {
        Self {
            responses: HashMap::new(),
            default: Ok(default.to_string()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn on(mut self, question: &str, response: Result<String, ClientError>) -> Self {
        self.responses.insert(question.to_string(), response);
        self
    }
}

impl JudgeClient for ScriptedJudge {
    fn answer(&self, prompt: &str) -> Result<String, ClientError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let question = prompt.rsplit("Question: ").next().unwrap_or("").trim();
        self.responses.get(question).cloned().unwrap_or_else(|| self.default.clone())
    }
}
