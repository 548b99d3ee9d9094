//! Seeded synthetic corpus generator.
//!
//! Sessions are planned backwards from a target turn count: the final turn is
//! always a goodbye, the remaining turns are split across the goal domains
//! and filled with constraint-informing turns, slot-request turns, and
//! stretch fillers. Goals are derived from a concrete target entity, so gold
//! annotations satisfy the goal by construction and score inform = success =
//! 100%.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::session::{
    CorpusSplit, DialogueSession, DialogueTurn, DomainGoal, SessionGoal,
};
use super::state::{ActType, BeliefState, SystemAct};
use crate::error::{CoreError, Result};
use crate::ontology::{db_for_belief, Entity, EntityDatabase, Ontology};

/// One turn-count bucket with its share of sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnBucket {
    pub min: usize,
    pub max: usize,
    pub share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub multi_domain_fraction: f64,
    pub max_constraints: usize,
    pub max_requests: usize,
    pub turn_buckets: Vec<TurnBucket>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train_size: 800,
            dev_size: 100,
            test_size: 100,
            multi_domain_fraction: 0.65,
            max_constraints: 3,
            max_requests: 3,
            turn_buckets: vec![
                TurnBucket { min: 2, max: 4, share: 0.13 },
                TurnBucket { min: 5, max: 6, share: 0.21 },
                TurnBucket { min: 7, max: 8, share: 0.38 },
                TurnBucket { min: 9, max: 12, share: 0.28 },
            ],
        }
    }
}

impl CorpusConfig {
    fn validate(&self) -> Result<()> {
        if self.train_size == 0 {
            return Err(CoreError::Config("train_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.multi_domain_fraction) {
            return Err(CoreError::Config(
                "multi_domain_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.turn_buckets.is_empty() {
            return Err(CoreError::Config("turn_buckets must be non-empty".into()));
        }
        let share: f64 = self.turn_buckets.iter().map(|b| b.share).sum();
        if (share - 1.0).abs() > 1e-6 {
            return Err(CoreError::Config(format!(
                "turn bucket shares must sum to 1, got {share}"
            )));
        }
        for b in &self.turn_buckets {
            if b.min < 2 || b.max < b.min {
                return Err(CoreError::Config(format!(
                    "bad turn bucket [{}, {}]",
                    b.min, b.max
                )));
            }
        }
        if self.max_constraints == 0 || self.max_requests == 0 {
            return Err(CoreError::Config(
                "max_constraints and max_requests must be positive".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

const INTRO_TEMPLATES: &[&str] = &[
    "i am looking for a {domain} with {cons}",
    "i need a {domain} where {cons}",
    "find me a {domain} with {cons}",
    "hello i am searching for a {domain} with {cons}",
    "can you find a {domain} with {cons}",
    "i would like a {domain} with {cons}",
    "please find a {domain} with {cons}",
    "do you have a {domain} with {cons}",
    "is there a {domain} with {cons}",
    "i want a {domain} with {cons}",
];

const TRANSITION_TEMPLATES: &[&str] = &[
    "thanks . i also need a {domain} with {cons}",
    "great . now find me a {domain} with {cons}",
    "perfect . i am also looking for a {domain} with {cons}",
    "good . next i need a {domain} with {cons}",
    "thanks . could you also find a {domain} with {cons}",
    "nice . i additionally want a {domain} with {cons}",
    "ok . i also require a {domain} with {cons}",
    "thank you . please also find a {domain} with {cons}",
];

const FOLLOWUP_TEMPLATES: &[&str] = &[
    "i would prefer {cons}",
    "make it {cons}",
    "it should have {cons}",
    "i want {cons}",
    "let us say {cons}",
    "preferably {cons}",
    "i would go with {cons}",
    "how about {cons}",
];

const REQUEST_TEMPLATES: &[&str] = &[
    "what is the {req} ?",
    "can i get the {req} ?",
    "could you tell me the {req} ?",
    "may i have the {req} ?",
    "i need the {req} please",
    "please give me the {req}",
    "do you know the {req} ?",
    "tell me the {req}",
    "and what is the {req} ?",
    "what about the {req} ?",
];

const ASK_SLOT_RESPONSES: &[&str] = &[
    "what {slot} do you prefer ?",
    "sure , which {slot} would you like ?",
    "do you have a {slot} in mind ?",
    "certainly . any preference on {slot} ?",
    "of course . what {slot} should it have ?",
    "no problem . which {slot} works for you ?",
    "happy to help . what {slot} do you want ?",
    "ok . please tell me the {slot} you prefer",
];

const RECOMMEND_RESPONSES: &[&str] = &[
    "i recommend [value_name] .",
    "[value_name] is a great choice .",
    "how about [value_name] ?",
    "i suggest [value_name] . it matches your needs .",
    "you could try [value_name] .",
    "[value_name] would suit you well .",
    "my best match is [value_name] .",
    "i found [value_name] for you .",
];

const INFORM_RESPONSES: &[&str] = &[
    "the {slot} is [value_{slot}] .",
    "their {slot} is [value_{slot}] .",
    "it is [value_{slot}] .",
    "sure , the {slot} is [value_{slot}] .",
    "of course , the {slot} is [value_{slot}] .",
    "that would be [value_{slot}] .",
    "the {slot} you asked for is [value_{slot}] .",
    "certainly . the {slot} is [value_{slot}] .",
];

const BYE_USER_TEMPLATES: &[&str] = &[
    "thank you goodbye",
    "thanks that is all",
    "that is everything thanks",
    "great thank you bye",
    "perfect goodbye",
    "thanks for the help bye",
    "that is all i needed thank you",
    "wonderful thanks goodbye",
    "no that is all thank you",
    "thanks so much goodbye",
];

const BYE_RESPONSES: &[&str] = &[
    "you are welcome . goodbye .",
    "glad i could help . goodbye .",
    "happy to help . have a nice day .",
    "you are welcome . enjoy your visit .",
    "my pleasure . goodbye .",
    "thank you for using our service . goodbye .",
];

const BOOK_USER_TEMPLATES: &[&str] = &[
    "can you book it for me ?",
    "please book that for me",
    "i would like to book it",
    "yes book it please",
    "could you make a booking ?",
    "go ahead and book it",
];

const BOOK_RESPONSES: &[&str] = &[
    "booking complete . your reference is [value_reference] .",
    "done . the booking reference is [value_reference] .",
    "all booked . reference number [value_reference] .",
    "your booking succeeded . reference is [value_reference] .",
];

const CONFIRM_USER_TEMPLATES: &[&str] = &[
    "can you confirm the name ?",
    "what was the name again ?",
    "which place was that ?",
    "could you repeat the name ?",
];

const CONFIRM_RESPONSES: &[&str] = &[
    "yes it is [value_name] .",
    "the name is [value_name] .",
    "that was [value_name] .",
    "it is called [value_name] .",
];

const MORE_USER_TEMPLATES: &[&str] = &[
    "are there any other options ?",
    "is there anything else like it ?",
    "do you have more choices ?",
    "any alternatives ?",
];

const MORE_RESPONSES: &[&str] = &[
    "there is also [value_name] if you prefer .",
    "another option is [value_name] .",
    "you might also like [value_name] .",
    "[value_name] is an alternative .",
];

fn pick<'a>(rng: &mut ChaCha8Rng, options: &'a [&'a str]) -> &'a str {
    options[rng.gen_range(0..options.len())]
}

fn cons_phrase(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(s, v)| format!("{s} {v}"))
        .collect::<Vec<_>>()
        .join(" and ")
}

fn req_phrase(slots: &[String]) -> String {
    slots.join(" and the ")
}

// ---------------------------------------------------------------------------
// Session planning
// ---------------------------------------------------------------------------

struct DomainPlan {
    domain: String,
    target: Entity,
    constraints: Vec<(String, String)>,
    requests: Vec<String>,
    turns: usize,
}

enum TurnKind {
    /// Inform a group of constraints; `last` informs trigger the recommend.
    Inform { group: Vec<(String, String)>, next_missing: Option<String> },
    Request { group: Vec<String> },
    Combined,
    FillerBook,
    FillerConfirm,
    FillerMore,
    FillerExtra { slot: String },
    FillerRepeat { slot: String },
}

fn split_groups<T: Clone>(items: &[T], groups: usize) -> Vec<Vec<T>> {
    let groups = groups.clamp(1, items.len().max(1));
    let base = items.len() / groups;
    let extra = items.len() % groups;
    let mut out = Vec::with_capacity(groups);
    let mut idx = 0;
    for gi in 0..groups {
        let size = base + usize::from(gi < extra);
        out.push(items[idx..idx + size].to_vec());
        idx += size;
    }
    out
}

fn plan_turn_kinds(rng: &mut ChaCha8Rng, plan: &DomainPlan, bookable: bool) -> Vec<TurnKind> {
    let len = plan.turns;
    if len == 1 {
        return vec![TurnKind::Combined];
    }
    let n_cons = plan.constraints.len();
    let n_req = plan.requests.len();
    // At least one inform turn and one request turn; grow both before padding.
    let g = n_cons.min(len - 1).max(1);
    let h = n_req.min(len - g).max(1);
    let fillers = len.saturating_sub(g + h);

    let cons_groups = split_groups(&plan.constraints, g);
    let req_groups = split_groups(&plan.requests, h);

    let mut kinds = Vec::with_capacity(len);
    for (i, group) in cons_groups.iter().enumerate() {
        let informed: usize = cons_groups[..=i].iter().map(|c| c.len()).sum();
        let next_missing = plan.constraints.get(informed).map(|(s, _)| s.clone());
        kinds.push(TurnKind::Inform { group: group.clone(), next_missing });
    }
    for group in &req_groups {
        kinds.push(TurnKind::Request { group: group.clone() });
    }

    let extras: Vec<String> = plan
        .target
        .keys()
        .filter(|k| *k != "name" && !plan.requests.contains(k))
        .filter(|k| !plan.constraints.iter().any(|(s, _)| s == *k))
        .cloned()
        .collect();
    let mut booked = false;
    for i in 0..fillers {
        let kind = match i % 4 {
            0 if bookable && !booked => {
                booked = true;
                TurnKind::FillerBook
            }
            0 | 1 if !extras.is_empty() => TurnKind::FillerExtra {
                slot: extras[rng.gen_range(0..extras.len())].clone(),
            },
            2 => TurnKind::FillerRepeat {
                slot: plan.requests[rng.gen_range(0..plan.requests.len())].clone(),
            },
            3 => TurnKind::FillerMore,
            _ => TurnKind::FillerConfirm,
        };
        kinds.push(kind);
    }
    kinds
}

fn render_inform_response(rng: &mut ChaCha8Rng, slots: &[String]) -> (SystemAct, String) {
    let mut sentences = Vec::new();
    for slot in slots {
        let template = pick(rng, INFORM_RESPONSES);
        sentences.push(template.replace("{slot}", slot));
    }
    (SystemAct::new(), sentences.join(" "))
}

struct SessionBuilder<'a> {
    ontology: &'a Ontology,
    db: &'a EntityDatabase,
    belief: BeliefState,
    turns: Vec<DialogueTurn>,
}

impl<'a> SessionBuilder<'a> {
    fn push_turn(&mut self, user: String, act: SystemAct, response: String, domains: Vec<String>) {
        let db = db_for_belief(self.ontology, self.db, &self.belief);
        self.turns.push(DialogueTurn {
            user,
            belief: self.belief.clone(),
            db,
            act,
            response,
            domains,
        });
    }
}

fn generate_session(
    rng: &mut ChaCha8Rng,
    ontology: &Ontology,
    db: &EntityDatabase,
    session_id: String,
    total_turns: usize,
    multi: bool,
    config: &CorpusConfig,
) -> Result<DialogueSession> {
    let table_domains: Vec<&str> = ontology
        .domains
        .iter()
        .filter(|d| db.table(&d.name).map(|t| !t.is_empty()).unwrap_or(false))
        .map(|d| d.name.as_str())
        .collect();
    let needed = if multi { 2 } else { 1 };
    if table_domains.len() < needed {
        return Err(CoreError::Generation {
            domain: table_domains.first().unwrap_or(&"<none>").to_string(),
            reason: format!("need {needed} populated domains, found {}", table_domains.len()),
        });
    }

    let mut pool = table_domains.clone();
    pool.shuffle(rng);
    let chosen: Vec<String> = pool.into_iter().take(needed).map(String::from).collect();

    // Content turns exclude the final goodbye.
    let content = total_turns - 1;
    let mut lens = vec![content];
    if multi {
        let first = rng.gen_range(1..content.max(2));
        lens = vec![first, content - first];
    }

    let mut plans = Vec::new();
    for (domain, len) in chosen.iter().zip(&lens) {
        let spec = ontology.domain(domain).expect("chosen from ontology");
        let table = db.table(domain).expect("table checked above");
        let target = table[rng.gen_range(0..table.len())].clone();

        let mut informables: Vec<String> = spec.informable_slots.keys().cloned().collect();
        informables.shuffle(rng);
        let n_cons = rng.gen_range(1..=config.max_constraints.min(informables.len()));
        let constraints: Vec<(String, String)> = informables
            .into_iter()
            .take(n_cons)
            .map(|s| {
                let v = target[&s].clone();
                (s, v)
            })
            .collect();

        let mut requestables = spec.requestable_slots.clone();
        requestables.shuffle(rng);
        let n_req = rng.gen_range(1..=config.max_requests.min(requestables.len()));
        let requests: Vec<String> = requestables.into_iter().take(n_req).collect();

        plans.push(DomainPlan {
            domain: domain.clone(),
            target,
            constraints,
            requests,
            turns: *len,
        });
    }

    let mut builder = SessionBuilder {
        ontology,
        db,
        belief: BeliefState::new(),
        turns: Vec::new(),
    };

    for (idx, plan) in plans.iter().enumerate() {
        let spec = ontology.domain(&plan.domain).unwrap();
        let kinds = plan_turn_kinds(rng, plan, spec.bookable);
        let mut first_turn_of_domain = true;
        for kind in kinds {
            let d = plan.domain.as_str();
            match kind {
                TurnKind::Inform { group, next_missing } => {
                    let template = if first_turn_of_domain {
                        if idx == 0 {
                            pick(rng, INTRO_TEMPLATES)
                        } else {
                            pick(rng, TRANSITION_TEMPLATES)
                        }
                    } else {
                        pick(rng, FOLLOWUP_TEMPLATES)
                    };
                    let user = template
                        .replace("{domain}", d)
                        .replace("{cons}", &cons_phrase(&group));
                    for (slot, value) in &group {
                        builder.belief.insert(d, slot, value);
                    }
                    let mut act = SystemAct::new();
                    let response = match next_missing {
                        Some(slot) => {
                            act.push(d, ActType::Request, &[slot.as_str()]);
                            pick(rng, ASK_SLOT_RESPONSES).replace("{slot}", &slot)
                        }
                        None => {
                            act.push(d, ActType::Recommend, &["name"]);
                            pick(rng, RECOMMEND_RESPONSES).to_string()
                        }
                    };
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
                TurnKind::Request { group } => {
                    let user = pick(rng, REQUEST_TEMPLATES).replace("{req}", &req_phrase(&group));
                    let (mut act, response) = render_inform_response(rng, &group);
                    let slots: Vec<&str> = group.iter().map(|s| s.as_str()).collect();
                    act.push(d, ActType::Inform, &slots);
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
                TurnKind::Combined => {
                    let template = if idx == 0 {
                        pick(rng, INTRO_TEMPLATES)
                    } else {
                        pick(rng, TRANSITION_TEMPLATES)
                    };
                    let mut user = template
                        .replace("{domain}", d)
                        .replace("{cons}", &cons_phrase(&plan.constraints));
                    user.push_str(&format!(" . what is the {} ?", req_phrase(&plan.requests)));
                    for (slot, value) in &plan.constraints {
                        builder.belief.insert(d, slot, value);
                    }
                    let mut act = SystemAct::new();
                    act.push(d, ActType::Recommend, &["name"]);
                    let slots: Vec<&str> = plan.requests.iter().map(|s| s.as_str()).collect();
                    act.push(d, ActType::Inform, &slots);
                    let mut response = pick(rng, RECOMMEND_RESPONSES).to_string();
                    for slot in &plan.requests {
                        response.push(' ');
                        response.push_str(&pick(rng, INFORM_RESPONSES).replace("{slot}", slot));
                    }
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
                TurnKind::FillerBook => {
                    let user = pick(rng, BOOK_USER_TEMPLATES).to_string();
                    let mut act = SystemAct::new();
                    act.push(d, ActType::Offerbook, &["reference"]);
                    let response = pick(rng, BOOK_RESPONSES).to_string();
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
                TurnKind::FillerConfirm => {
                    let user = pick(rng, CONFIRM_USER_TEMPLATES).to_string();
                    let mut act = SystemAct::new();
                    act.push(d, ActType::Inform, &["name"]);
                    let response = pick(rng, CONFIRM_RESPONSES).to_string();
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
                TurnKind::FillerMore => {
                    let user = pick(rng, MORE_USER_TEMPLATES).to_string();
                    let mut act = SystemAct::new();
                    act.push(d, ActType::Recommend, &["name"]);
                    let response = pick(rng, MORE_RESPONSES).to_string();
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
                TurnKind::FillerExtra { slot } | TurnKind::FillerRepeat { slot } => {
                    let user = pick(rng, REQUEST_TEMPLATES).replace("{req}", &slot);
                    let (mut act, response) = render_inform_response(rng, &[slot.clone()]);
                    act.push(d, ActType::Inform, &[slot.as_str()]);
                    builder.push_turn(user, act, response, vec![d.to_string()]);
                }
            }
            first_turn_of_domain = false;
        }
    }

    // Closing turn.
    let user = pick(rng, BYE_USER_TEMPLATES).to_string();
    let mut act = SystemAct::new();
    act.push("general", ActType::Bye, &[]);
    let response = pick(rng, BYE_RESPONSES).to_string();
    builder.push_turn(user, act, response, vec![]);

    let goal = SessionGoal(
        plans
            .iter()
            .map(|p| {
                (
                    p.domain.clone(),
                    DomainGoal {
                        constraints: p.constraints.iter().cloned().collect(),
                        requests: p.requests.clone(),
                    },
                )
            })
            .collect(),
    );

    debug_assert_eq!(builder.turns.len(), total_turns);
    Ok(DialogueSession {
        session_id,
        goal,
        is_multi_domain: multi,
        turns: builder.turns,
    })
}

/// Deterministic largest-remainder quota for bucket shares.
fn bucket_quotas(buckets: &[TurnBucket], n: usize) -> Vec<usize> {
    let mut quotas: Vec<usize> = buckets
        .iter()
        .map(|b| (b.share * n as f64).floor() as usize)
        .collect();
    let assigned: usize = quotas.iter().sum();
    let mut remainders: Vec<(usize, f64)> = buckets
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.share * n as f64 - quotas[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n.saturating_sub(assigned) {
        quotas[remainders[k % remainders.len()].0] += 1;
    }
    quotas
}

fn plan_split(rng: &mut ChaCha8Rng, n: usize, config: &CorpusConfig) -> Vec<(usize, bool)> {
    let quotas = bucket_quotas(&config.turn_buckets, n);
    let mut turn_counts = Vec::with_capacity(n);
    for (bucket, quota) in config.turn_buckets.iter().zip(&quotas) {
        for _ in 0..*quota {
            turn_counts.push(rng.gen_range(bucket.min..=bucket.max));
        }
    }
    turn_counts.shuffle(rng);

    let multi_count = (config.multi_domain_fraction * n as f64).round() as usize;
    let mut flags = vec![false; n];
    for flag in flags.iter_mut().take(multi_count) {
        *flag = true;
    }
    flags.shuffle(rng);

    // A two-turn session cannot host two domains plus a goodbye.
    let mut plan: Vec<(usize, bool)> = turn_counts.into_iter().zip(flags).collect();
    for i in 0..plan.len() {
        if plan[i].1 && plan[i].0 < 3 {
            if let Some(j) = (0..plan.len()).find(|&j| !plan[j].1 && plan[j].0 >= 3) {
                plan[j].1 = true;
                plan[i].1 = false;
            } else {
                plan[i].1 = false;
            }
        }
    }
    plan
}

/// Generate a deterministic train/dev/test corpus over the given world.
pub fn generate_corpus(
    ontology: &Ontology,
    db: &EntityDatabase,
    seed: u64,
    config: &CorpusConfig,
) -> Result<CorpusSplit> {
    config.validate()?;
    ontology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = 0usize;
    let gen_split = |rng: &mut ChaCha8Rng, n: usize, next_id: &mut usize| -> Result<Vec<DialogueSession>> {
        let plan = plan_split(rng, n, config);
        let mut out = Vec::with_capacity(n);
        for (turns, multi) in plan {
            let id = format!("s{:05}", *next_id);
            *next_id += 1;
            out.push(generate_session(rng, ontology, db, id, turns, multi, config)?);
        }
        Ok(out)
    };
    let split = CorpusSplit {
        train: gen_split(&mut rng, config.train_size, &mut next_id)?,
        dev: gen_split(&mut rng, config.dev_size, &mut next_id)?,
        test: gen_split(&mut rng, config.test_size, &mut next_id)?,
    };
    split.validate()?;
    Ok(split)
}

// ---------------------------------------------------------------------------
// Delexicalization
// ---------------------------------------------------------------------------

/// Replace every occurrence of an entity value with `[value_<slot>]`,
/// longest value first so overlapping values resolve to the longer match.
pub fn delexicalize(text: &str, entity: &IndexMap<String, String>, _domain: &str) -> String {
    let mut pairs: Vec<(&String, &String)> = entity.iter().collect();
    pairs.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    let mut out = text.to_string();
    for (slot, value) in pairs {
        if value.is_empty() {
            continue;
        }
        out = out.replace(value.as_str(), &format!("[value_{slot}]"));
    }
    out
}
