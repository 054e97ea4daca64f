//! Keyword grammar for scene instructions.
//!
//! A clause is a chain of noun-phrase groups joined by relation phrases:
//! `two cups and a plate on a table`, `a mug left of a laptop on a desk`.
//! Each relation links every member of the group before it to every member
//! of the group after it. When a chain ends in a support relation, objects
//! earlier in the chain that have no support yet are put on it too.
//!
//! The head noun of a phrase is its last word before a boundary, so unknown
//! nouns pass through unchanged and fail later at retrieval.

use crate::assets::{AssetRequest, ExplicitPlacement, Predicate, SceneDecomposition, SpatialConstraint, SubScene};
use crate::geometry::Vec3;

const SKIPPED: &[&str] = &[
    "place", "put", "set", "add", "arrange", "position", "create", "make", "show", "there", "is", "are", "with",
    "have", "has", "sitting", "standing", "resting", "placed", "lying", "located", "that", "which", "both", "each",
    "please", "should", "be",
];

const RELATIONS: &[(&[&str], Predicate)] = &[
    (&["on", "top", "of"], Predicate::On),
    (&["to", "the", "left", "of"], Predicate::LeftOf),
    (&["on", "the", "left", "of"], Predicate::LeftOf),
    (&["to", "the", "right", "of"], Predicate::RightOf),
    (&["on", "the", "right", "of"], Predicate::RightOf),
    (&["in", "front", "of"], Predicate::InFrontOf),
    (&["in", "back", "of"], Predicate::Behind),
    (&["left", "of"], Predicate::LeftOf),
    (&["right", "of"], Predicate::RightOf),
    (&["next", "to"], Predicate::Near),
    (&["close", "to"], Predicate::Near),
    (&["on"], Predicate::On),
    (&["onto"], Predicate::On),
    (&["atop"], Predicate::On),
    (&["above"], Predicate::Above),
    (&["over"], Predicate::Above),
    (&["behind"], Predicate::Behind),
    (&["near"], Predicate::Near),
    (&["beside"], Predicate::Near),
    (&["by"], Predicate::Near),
    (&["inside"], Predicate::Inside),
    (&["in"], Predicate::Inside),
    (&["within"], Predicate::Inside),
    (&["into"], Predicate::Inside),
];

const NUMBERS: &[&str] = &["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    /// `,` `;` merge like `and` before a relation and split clauses after one.
    Comma,
    /// Sentence end.
    Stop,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for raw in text.to_lowercase().split_whitespace() {
        let mut word = raw;
        let mut trailing = Vec::new();
        loop {
            if let Some(w) = word.strip_suffix([',', ';']) {
                trailing.push(Token::Comma);
                word = w;
            } else if let Some(w) = word.strip_suffix(['.', '!', '?']) {
                trailing.push(Token::Stop);
                word = w;
            } else {
                break;
            }
        }
        let word = word.trim_matches(|ch: char| !(ch.is_alphanumeric() || ch == '.' || ch == '-' || ch == '_'));
        if !word.is_empty() {
            out.push(Token::Word(word.to_string()));
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

pub(crate) fn singular(word: &str) -> String {
    if word == "shelves" {
        return "shelf".into();
    }
    if word.len() > 3 {
        if let Some(stem) = word.strip_suffix("ies") {
            return format!("{stem}y");
        }
        for suffix in ["ches", "shes", "xes", "sses"] {
            if word.ends_with(suffix) {
                return word[..word.len() - 2].to_string();
            }
        }
    }
    if word.ends_with("ss") || word.ends_with("us") || word.len() <= 2 {
        return word.to_string();
    }
    word.strip_suffix('s').unwrap_or(word).to_string()
}

fn count_word(word: &str) -> Option<usize> {
    match word {
        "a" | "an" | "some" | "the" => Some(1),
        _ => NUMBERS.iter().position(|n| *n == word).or_else(|| word.parse().ok()),
    }
}

#[derive(Debug)]
struct Entity {
    noun: String,
    query: String,
    placement: Option<Vec3>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    entities: Vec<Entity>,
    constraints: Vec<(Predicate, usize, usize)>,
}

impl Parser {
    fn word(&self, at: usize) -> Option<&str> {
        match self.tokens.get(at) {
            Some(Token::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn relation_at(&self, at: usize) -> Option<(Predicate, usize)> {
        RELATIONS.iter().find_map(|(phrase, p)| {
            phrase
                .iter()
                .enumerate()
                .all(|(k, w)| self.word(at + k) == Some(w))
                .then_some((*p, phrase.len()))
        })
    }

    fn placement_at(&self, at: usize) -> Option<Vec3> {
        if self.word(at) != Some("at") {
            return None;
        }
        let mut xyz = [0.0; 3];
        for (k, slot) in xyz.iter_mut().enumerate() {
            *slot = self.word(at + 1 + k)?.parse().ok()?;
        }
        Some(Vec3::new(xyz[0], xyz[1], xyz[2]))
    }

    fn is_boundary(&self, at: usize) -> bool {
        match self.tokens.get(at) {
            None | Some(Token::Comma) | Some(Token::Stop) => true,
            Some(Token::Word(w)) => w == "and" || w == "then" || self.relation_at(at).is_some() || self.placement_at(at).is_some(),
        }
    }

    /// Parses one noun phrase and returns the entities it denotes.
    fn noun_phrase(&mut self) -> Vec<usize> {
        let mut count = 1;
        let mut definite = false;
        let mut words = Vec::new();
        while !self.is_boundary(self.pos) {
            let w = self.word(self.pos).unwrap_or_default().to_string();
            self.pos += 1;
            if SKIPPED.contains(&w.as_str()) {
                continue;
            }
            if words.is_empty() {
                if let Some(n) = count_word(&w) {
                    definite |= w == "the";
                    count = n;
                    continue;
                }
            }
            words.push(w);
        }
        let Some(head) = words.pop() else {
            return Vec::new();
        };
        let noun = singular(&head);
        if definite {
            if let Some(i) = self.entities.iter().rposition(|e| e.noun == noun) {
                return vec![i];
            }
        }
        let query = words.iter().map(String::as_str).chain([noun.as_str()]).collect::<Vec<_>>().join(" ");
        (0..count)
            .map(|_| {
                self.entities.push(Entity {
                    noun: noun.clone(),
                    query: query.clone(),
                    placement: None,
                });
                self.entities.len() - 1
            })
            .collect()
    }

    fn clause(&mut self) {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new()];
        let mut relations: Vec<Predicate> = Vec::new();
        loop {
            let found = self.noun_phrase();
            groups.last_mut().expect("one group").extend(found.iter().copied());
            if let Some(target) = self.placement_at(self.pos) {
                for &i in &found {
                    self.entities[i].placement = Some(target);
                }
                self.pos += 4;
            }
            match self.tokens.get(self.pos) {
                None | Some(Token::Stop) => break,
                Some(Token::Comma) => {
                    if !relations.is_empty() {
                        break;
                    }
                    self.pos += 1;
                }
                Some(Token::Word(w)) if w == "and" || w == "then" => {
                    if !relations.is_empty() || w == "then" {
                        break;
                    }
                    self.pos += 1;
                }
                Some(Token::Word(_)) => match self.relation_at(self.pos) {
                    Some((p, len)) => {
                        self.pos += len;
                        relations.push(p);
                        groups.push(Vec::new());
                    }
                    // An `at` without three numbers.
                    None => self.pos += 1,
                },
            }
        }
        // A dangling relation without a reference is dropped.
        while groups.last().is_some_and(Vec::is_empty) && !relations.is_empty() {
            groups.pop();
            relations.pop();
        }
        for (k, p) in relations.iter().enumerate() {
            for &s in &groups[k] {
                for &r in &groups[k + 1] {
                    if s != r {
                        self.constraints.push((*p, s, r));
                    }
                }
            }
        }
        if let (Some(&last), true) = (relations.last(), relations.len() > 1) {
            if last.is_support() {
                let support = groups.len() - 1;
                for group in &groups[..support - 1] {
                    for &s in group {
                        let supported = self.constraints.iter().any(|&(p, x, _)| x == s && p.is_support());
                        if !supported {
                            for &r in &groups[support] {
                                self.constraints.push((last, s, r));
                            }
                        }
                    }
                }
            }
        }
    }

    fn parse(mut self) -> (Vec<Entity>, Vec<(Predicate, usize, usize)>) {
        while self.pos < self.tokens.len() {
            let before = self.pos;
            if matches!(self.tokens[self.pos], Token::Comma | Token::Stop) || self.word(self.pos) == Some("and") || self.word(self.pos) == Some("then") {
                self.pos += 1;
                continue;
            }
            self.clause();
            if self.pos == before {
                self.pos += 1;
            }
        }
        (self.entities, self.constraints)
    }
}

/// Decomposes an instruction into one sub-scene, or explains why nothing was found.
pub fn decompose(text: &str) -> Result<SceneDecomposition, String> {
    let parser = Parser {
        tokens: tokenize(text),
        pos: 0,
        entities: Vec::new(),
        constraints: Vec::new(),
    };
    let (entities, mut constraints) = parser.parse();
    if entities.is_empty() {
        return Err("no objects were recognised in the instruction".into());
    }
    let labels: Vec<String> = {
        let mut seen = std::collections::BTreeMap::<&str, usize>::new();
        entities
            .iter()
            .map(|e| {
                let total = entities.iter().filter(|o| o.noun == e.noun).count();
                let n = seen.entry(&e.noun).or_default();
                *n += 1;
                if total > 1 {
                    format!("{}_{}", e.noun, n)
                } else {
                    e.noun.clone()
                }
            })
            .collect()
    };
    // Supports first so dependents are placed after their support.
    constraints.sort_by_key(|(p, _, _)| !p.is_support());
    let mut seen = std::collections::BTreeSet::new();
    let constraints = constraints
        .into_iter()
        .filter(|c| seen.insert(*c))
        .map(|(p, s, r)| SpatialConstraint::new(p, &labels[s], &labels[r]))
        .collect();
    Ok(SceneDecomposition {
        sub_scenes: vec![SubScene {
            description: text.trim().to_string(),
            requested_assets: entities
                .iter()
                .zip(&labels)
                .map(|(e, l)| AssetRequest {
                    label: l.clone(),
                    query: e.query.clone(),
                    asset_id: None,
                })
                .collect(),
            constraints,
            explicit_placements: entities
                .iter()
                .zip(&labels)
                .filter_map(|(e, l)| {
                    e.placement.map(|target| ExplicitPlacement {
                        label: l.clone(),
                        target,
                    })
                })
                .collect(),
        }],
    })
}
