//! Seeded generator for synthetic corpora.
//!
//! Produces a mix of people, cities, countries, organisations and written
//! works with pre-annotated claims. Evidence sentences never name their own
//! subject, so every claim is usable as a blurred constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Claim, ClaimObject, IngestPolicy, KnowledgeBase, Link, Page, PageId, Predicate};

const CONTINENTS: &[&str] = &["Africa", "Asia", "Europe", "North America", "South America", "Oceania"];
const GOVERNMENTS: &[&str] = &["republic", "monarchy", "federation", "commonwealth"];
const LANGUAGES: &[&str] = &["English", "French", "German", "Spanish", "Italian"];
const CLIMATES: &[&str] = &["arid", "temperate", "tropical", "continental", "polar", "mediterranean"];
const FIELDS: &[&str] = &[
    "physics",
    "chemistry",
    "law",
    "medicine",
    "engineering",
    "finance",
    "music",
    "agriculture",
];
const GENRES: &[&str] = &["novel", "poem", "essay", "treatise", "play", "memoir"];
const OCCUPATIONS: &[&str] = &[
    "chemist",
    "painter",
    "architect",
    "botanist",
    "composer",
    "economist",
    "surgeon",
    "astronomer",
    "sculptor",
    "linguist",
    "geologist",
    "diplomat",
    "poet",
    "engineer",
    "historian",
];

fn decades() -> Vec<String> {
    (1850..2000).step_by(10).map(|y| format!("{y}s")).collect()
}

fn centuries() -> Vec<String> {
    (9..20).map(|c| format!("{c}th century")).collect()
}

struct Builder {
    page: Page,
}

impl Builder {
    fn new(id: &str, title: &str, kind: &str) -> Self {
        Self {
            page: Page {
                id: PageId::new(id),
                title: title.to_string(),
                text: format!("{title} is a fictional {kind}."),
                links: Vec::new(),
                claims: Vec::new(),
            },
        }
    }

    fn claim(&mut self, predicate: &str, object: ClaimObject, evidence: String) {
        self.page.text.push(' ');
        self.page.text.push_str(&evidence);
        if let ClaimObject::Entity(target) = &object {
            self.page.links.push(Link {
                target: target.clone(),
                evidence: evidence.clone(),
            });
        }
        self.page.claims.push(Claim {
            subject: self.page.id.clone(),
            predicate: Predicate::new(predicate),
            object,
            evidence,
        });
    }
}

#[derive(Clone)]
struct Named {
    id: String,
    title: String,
}

fn named(prefix: &str, label: &str, count: usize) -> Vec<Named> {
    (0..count)
        .map(|i| Named {
            id: format!("{prefix}_{i:04}"),
            title: format!("{label} {i:04}"),
        })
        .collect()
}

fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Generates `total` pages deterministically from `seed`.
pub fn generate_pages(total: usize, seed: u64) -> Vec<Page> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let countries = named("country", "Country", (total / 50).max(1));
    let cities = named("city", "City", (total / 10).max(1));
    let orgs = named("org", "Institute", (total / 8).max(1));
    let works = named("work", "Work", (total / 10).max(1));
    let used = countries.len() + cities.len() + orgs.len() + works.len();
    let people = named("person", "Person", total.saturating_sub(used));
    let decades = decades();
    let centuries = centuries();

    let mut pages = Vec::with_capacity(total);
    for c in &countries {
        let mut b = Builder::new(&c.id, &c.title, "country");
        let continent = *pick(&mut rng, CONTINENTS);
        b.claim("continent", ClaimObject::literal(continent), format!("The country lies in {continent}."));
        let gov = *pick(&mut rng, GOVERNMENTS);
        b.claim("government", ClaimObject::literal(gov), format!("Its form of government is a {gov}."));
        let lang = *pick(&mut rng, LANGUAGES);
        b.claim("official_language", ClaimObject::literal(lang), format!("The official language there is {lang}."));
        pages.push(b.page);
    }
    for c in &cities {
        let mut b = Builder::new(&c.id, &c.title, "city");
        let country = pick(&mut rng, &countries).clone();
        b.claim(
            "located_in",
            ClaimObject::entity(&country.id),
            format!("The city is located in {}.", country.title),
        );
        let century = pick(&mut rng, &centuries).clone();
        b.claim("founded_in", ClaimObject::literal(&century), format!("The settlement was founded in the {century}."));
        let climate = *pick(&mut rng, CLIMATES);
        b.claim("climate", ClaimObject::literal(climate), format!("Its climate is {climate}."));
        pages.push(b.page);
    }
    for o in &orgs {
        let mut b = Builder::new(&o.id, &o.title, "institute");
        let city = pick(&mut rng, &cities).clone();
        b.claim(
            "headquartered_in",
            ClaimObject::entity(&city.id),
            format!("The institute is headquartered in {}.", city.title),
        );
        let decade = pick(&mut rng, &decades).clone();
        b.claim("founded_in", ClaimObject::literal(&decade), format!("The institute was established in the {decade}."));
        let field = *pick(&mut rng, FIELDS);
        b.claim("field", ClaimObject::literal(field), format!("Its main field of work is {field}."));
        pages.push(b.page);
    }
    let mut authored: Vec<Option<usize>> = vec![None; works.len()];
    for slot in authored.iter_mut() {
        if !people.is_empty() && rng.random_bool(0.8) {
            *slot = Some(rng.random_range(0..people.len()));
        }
    }
    for (w, work) in works.iter().enumerate() {
        let mut b = Builder::new(&work.id, &work.title, "written work");
        let genre = *pick(&mut rng, GENRES);
        b.claim("genre", ClaimObject::literal(genre), format!("The work is a {genre}."));
        let decade = pick(&mut rng, &decades).clone();
        b.claim("published_in", ClaimObject::literal(&decade), format!("It was first published in the {decade}."));
        let lang = *pick(&mut rng, LANGUAGES);
        b.claim("language", ClaimObject::literal(lang), format!("The text was written in {lang}."));
        if let Some(p) = authored[w] {
            let author = &people[p];
            b.claim(
                "written_by",
                ClaimObject::entity(&author.id),
                format!("The work was written by {}.", author.title),
            );
        }
        pages.push(b.page);
    }
    for person in &people {
        let mut b = Builder::new(&person.id, &person.title, "person");
        let city = pick(&mut rng, &cities).clone();
        b.claim("born_in", ClaimObject::entity(&city.id), format!("This person was born in {}.", city.title));
        let occupation = *pick(&mut rng, OCCUPATIONS);
        b.claim("occupation", ClaimObject::literal(occupation), format!("By profession this person was a {occupation}."));
        let decade = pick(&mut rng, &decades).clone();
        b.claim("born_during", ClaimObject::literal(&decade), format!("This person was born in the {decade}."));
        if rng.random_bool(0.7) {
            let org = pick(&mut rng, &orgs).clone();
            b.claim("educated_at", ClaimObject::entity(&org.id), format!("This person studied at {}.", org.title));
        }
        if rng.random_bool(0.6) {
            let country = pick(&mut rng, &countries).clone();
            b.claim(
                "citizen_of",
                ClaimObject::entity(&country.id),
                format!("This person held citizenship of {}.", country.title),
            );
        }
        if rng.random_bool(0.4) {
            let org = pick(&mut rng, &orgs).clone();
            b.claim("member_of", ClaimObject::entity(&org.id), format!("This person was a member of {}.", org.title));
        }
        pages.push(b.page);
    }
    pages
}

pub fn generate_kb(total: usize, seed: u64) -> KnowledgeBase {
    KnowledgeBase::from_pages(generate_pages(total, seed), &IngestPolicy::default())
        .expect("generated corpus is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_sized() {
        let a = generate_pages(1000, 1);
        let b = generate_pages(1000, 1);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        assert_ne!(a, generate_pages(1000, 2));
    }

    #[test]
    fn evidence_never_names_its_subject() {
        for page in generate_pages(300, 9) {
            for claim in &page.claims {
                assert!(!claim.evidence.contains(&page.title), "{}", claim.evidence);
            }
        }
    }

    #[test]
    fn generated_corpus_loads_cleanly() {
        let kb = generate_kb(500, 4);
        assert_eq!(kb.page_count(), 500);
        assert_eq!(kb.report().dangling_links, 0);
        assert_eq!(kb.report().dangling_claims, 0);
    }
}
