//! Belief states and system acts with their flat-text grammar.
//!
//! Belief pattern: `[domain_1] slot_11 value_11 slot_12 value_12 [domain_2] ...`
//! Act pattern:    `[domain] [actionType_1] slot_11 slot_12 [actionType_2] ...`
//!
//! Values may span several tokens; slot boundaries are recognized against a
//! closed slot lexicon, which is how the same grammar stays parseable after
//! greedy decoding.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Accumulated slot=value constraints per domain (insertion-ordered).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefState(pub IndexMap<String, IndexMap<String, String>>);

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn domains(&self) -> impl Iterator<Item = (&String, &IndexMap<String, String>)> {
        self.0.iter()
    }

    pub fn domain(&self, name: &str) -> Option<&IndexMap<String, String>> {
        self.0.get(name)
    }

    /// Most recently introduced domain.
    pub fn last_domain(&self) -> Option<&String> {
        self.0.keys().last()
    }

    pub fn insert(&mut self, domain: &str, slot: &str, value: &str) {
        self.0
            .entry(domain.to_string())
            .or_default()
            .insert(slot.to_string(), value.to_string());
    }

    /// Flat-text form, empty string for an empty state.
    pub fn serialize(&self) -> String {
        let mut parts = Vec::new();
        for (domain, slots) in &self.0 {
            parts.push(format!("[{domain}]"));
            for (slot, value) in slots {
                parts.push(slot.clone());
                parts.push(value.clone());
            }
        }
        parts.join(" ")
    }
}

/// Closed set of system act types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ActType {
    Inform,
    Request,
    Recommend,
    Offerbook,
    Bye,
    Reqmore,
}

impl ActType {
    pub const ALL: [ActType; 6] = [
        ActType::Inform,
        ActType::Request,
        ActType::Recommend,
        ActType::Offerbook,
        ActType::Bye,
        ActType::Reqmore,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActType::Inform => "inform",
            ActType::Request => "request",
            ActType::Recommend => "recommend",
            ActType::Offerbook => "offerbook",
            ActType::Bye => "bye",
            ActType::Reqmore => "reqmore",
        }
    }

    pub fn token(&self) -> String {
        format!("[{}]", self.as_str())
    }

    pub fn from_name(name: &str) -> Option<ActType> {
        ActType::ALL.iter().copied().find(|a| a.as_str() == name)
    }
}

/// Structured system act: domain -> act type -> slot names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemAct(pub IndexMap<String, IndexMap<ActType, Vec<String>>>);

impl SystemAct {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, domain: &str, act: ActType, slots: &[&str]) {
        let entry = self
            .0
            .entry(domain.to_string())
            .or_default()
            .entry(act)
            .or_default();
        for s in slots {
            entry.push(s.to_string());
        }
    }

    pub fn domains(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn serialize(&self) -> String {
        let mut parts = Vec::new();
        for (domain, acts) in &self.0 {
            parts.push(format!("[{domain}]"));
            for (act, slots) in acts {
                parts.push(act.token());
                for slot in slots {
                    parts.push(slot.clone());
                }
            }
        }
        parts.join(" ")
    }
}

/// Slot names the grammar recognizes as boundaries inside belief states.
///
/// Covers the synthetic catalog plus the common MultiWOZ slot names so that
/// imported sessions parse with the same grammar.
pub fn default_slot_lexicon() -> HashSet<String> {
    [
        "food",
        "area",
        "pricerange",
        "stars",
        "parking",
        "internet",
        "type",
        "departure",
        "destination",
        "day",
        "name",
        "phone",
        "address",
        "postcode",
        "price",
        "fee",
        "time",
        "id",
        "reference",
        "leave",
        "arrive",
        "leaveat",
        "arriveby",
        "people",
        "stay",
        "department",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn is_bracketed(token: &str) -> bool {
    token.len() > 2 && token.starts_with('[') && token.ends_with(']')
}

fn bracket_name(token: &str) -> &str {
    &token[1..token.len() - 1]
}

/// Parse belief-state tokens. Returns the recovered state plus diagnostics
/// for malformed spans (which are dropped, never fatal).
pub fn parse_belief(tokens: &[&str], lexicon: &HashSet<String>) -> (BeliefState, Vec<String>) {
    let mut state = BeliefState::new();
    let mut diagnostics = Vec::new();
    let mut domain: Option<String> = None;
    let mut slot: Option<String> = None;
    let mut value: Vec<&str> = Vec::new();

    macro_rules! flush_slot {
        () => {
            if let (Some(d), Some(s)) = (domain.as_ref(), slot.take()) {
                if value.is_empty() {
                    diagnostics.push(format!("belief: dangling slot `{s}` in domain `{d}`"));
                } else {
                    state.insert(d, &s, &value.join(" "));
                }
                value.clear();
            }
        };
    }

    for token in tokens {
        if is_bracketed(token) {
            flush_slot!();
            domain = Some(bracket_name(token).to_string());
            state.0.entry(domain.clone().unwrap()).or_default();
        } else if lexicon.contains(*token) {
            flush_slot!();
            if domain.is_none() {
                diagnostics.push(format!("belief: slot `{token}` before any [domain]"));
            } else {
                slot = Some(token.to_string());
            }
        } else if slot.is_some() {
            value.push(token);
        } else {
            diagnostics.push(format!("belief: stray token `{token}`"));
        }
    }
    flush_slot!();
    (state, diagnostics)
}

/// Parse system-act tokens: bracketed act names come from the closed act set,
/// any other bracketed token opens a domain.
pub fn parse_act(tokens: &[&str]) -> (SystemAct, Vec<String>) {
    let mut act = SystemAct::new();
    let mut diagnostics = Vec::new();
    let mut domain: Option<String> = None;
    let mut current: Option<ActType> = None;

    for token in tokens {
        if is_bracketed(token) {
            if let Some(a) = ActType::from_name(bracket_name(token)) {
                match domain.as_ref() {
                    Some(d) => {
                        act.push(d, a, &[]);
                        current = Some(a);
                    }
                    None => diagnostics.push(format!("act: `{token}` before any [domain]")),
                }
            } else {
                domain = Some(bracket_name(token).to_string());
                act.0.entry(domain.clone().unwrap()).or_default();
                current = None;
            }
        } else {
            match (domain.as_ref(), current) {
                (Some(d), Some(a)) => act.push(d, a, &[token]),
                _ => diagnostics.push(format!("act: stray slot `{token}`")),
            }
        }
    }
    (act, diagnostics)
}
