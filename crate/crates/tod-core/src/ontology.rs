//! Multi-domain ontology, entity database, and bucketed belief-state queries.
//!
//! The ontology declares domains with informable slots (constraint slots with
//! closed value sets) and requestable slots (attributes the system can report).
//! The entity database stores one table per domain; domains without a table
//! (taxi-like services) synthesize a single match so the serialization format
//! stays uniform.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{CoreError, Result};

/// Match-count buckets rendered as `<db_0>`..`<db_3>`.
pub const DB_TOKENS: [&str; 4] = ["<db_0>", "<db_1>", "<db_2>", "<db_3>"];

/// Bucket a raw match count: 0 -> 0, 1 -> 1, 2-3 -> 2, >=4 -> 3.
pub fn bucket_for_count(match_count: usize) -> u8 {
    match match_count {
        0 => 0,
        1 => 1,
        2 | 3 => 2,
        _ => 3,
    }
}

/// Token form of a bucket, e.g. `<db_2>`.
pub fn db_token(bucket: u8) -> &'static str {
    DB_TOKENS[bucket as usize]
}

/// Inverse of [`db_token`].
pub fn bucket_from_token(token: &str) -> Option<u8> {
    DB_TOKENS.iter().position(|t| *t == token).map(|i| i as u8)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    /// Slot name -> closed set of values the user may constrain on.
    pub informable_slots: IndexMap<String, Vec<String>>,
    /// Attributes the system can be asked for (always present on entities).
    pub requestable_slots: Vec<String>,
    pub bookable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Ontology {
    pub domains: Vec<DomainSpec>,
}

impl Ontology {
    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> Vec<&str> {
        self.domains.iter().map(|d| d.name.as_str()).collect()
    }

    /// Check structural invariants: >=2 domains, unique lowercase names.
    pub fn validate(&self) -> Result<()> {
        if self.domains.len() < 2 {
            return Err(CoreError::Config(format!(
                "ontology needs at least 2 domains, got {}",
                self.domains.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.domains {
            if d.name != d.name.to_lowercase() {
                return Err(CoreError::Config(format!(
                    "domain name `{}` must be lowercase",
                    d.name
                )));
            }
            if !seen.insert(d.name.clone()) {
                return Err(CoreError::Config(format!("duplicate domain `{}`", d.name)));
            }
        }
        Ok(())
    }
}

/// One entity: slot name -> value. Always carries a `name` identifier.
pub type Entity = IndexMap<String, String>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct EntityDatabase {
    /// Domain -> entity table. Domains absent here are "virtual" (taxi-like).
    pub tables: IndexMap<String, Vec<Entity>>,
}

impl EntityDatabase {
    pub fn table(&self, domain: &str) -> Option<&[Entity]> {
        self.tables.get(domain).map(|v| v.as_slice())
    }
}

/// Result of querying one domain under a set of constraints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DbResult {
    pub domain: String,
    pub match_count: usize,
    pub bucket: u8,
    pub matched_entities: Vec<String>,
}

impl DbResult {
    pub fn empty(domain: &str) -> Self {
        DbResult {
            domain: domain.to_string(),
            match_count: 0,
            bucket: 0,
            matched_entities: Vec::new(),
        }
    }

    pub fn token(&self) -> &'static str {
        db_token(self.bucket)
    }
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Query one domain's table with slot=value constraints.
///
/// Matching is exact string equality after lowercasing and trimming. An empty
/// constraint map returns the whole table. Domains listed in the ontology but
/// absent from the database synthesize a single match (bucket 1).
pub fn query(
    ontology: &Ontology,
    db: &EntityDatabase,
    domain: &str,
    constraints: &IndexMap<String, String>,
) -> Result<DbResult> {
    let spec = ontology
        .domain(domain)
        .ok_or_else(|| CoreError::DomainNotFound(domain.to_string()))?;
    for slot in constraints.keys() {
        if !spec.informable_slots.contains_key(slot) {
            return Err(CoreError::UnknownSlot {
                domain: domain.to_string(),
                slot: slot.clone(),
            });
        }
    }
    let Some(table) = db.table(domain) else {
        // Virtual domain: always one synthesized offer.
        return Ok(DbResult {
            domain: domain.to_string(),
            match_count: 1,
            bucket: 1,
            matched_entities: vec![domain.to_string()],
        });
    };
    let mut matched = Vec::new();
    for entity in table {
        let ok = constraints.iter().all(|(slot, value)| {
            entity
                .get(slot)
                .map(|v| norm(v) == norm(value))
                .unwrap_or(false)
        });
        if ok {
            matched.push(entity.get("name").cloned().unwrap_or_default());
        }
    }
    let match_count = matched.len();
    Ok(DbResult {
        domain: domain.to_string(),
        match_count,
        bucket: bucket_for_count(match_count),
        matched_entities: matched,
    })
}

/// Canonical DB lookup for a (possibly model-predicted) belief state.
///
/// The active domain is the most recently introduced belief domain that the
/// ontology knows; constraints on unknown slots are dropped rather than
/// rejected so that noisy predicted beliefs degrade instead of aborting.
/// Gold generation and end-to-end inference share this rule, so a model that
/// reproduces gold beliefs also reproduces gold DB tokens.
pub fn db_for_belief(
    ontology: &Ontology,
    db: &EntityDatabase,
    belief: &crate::corpus::BeliefState,
) -> DbResult {
    let mut active: Option<(&String, &IndexMap<String, String>)> = None;
    for (domain, slots) in belief.domains() {
        if ontology.domain(domain).is_some() {
            active = Some((domain, slots));
        }
    }
    let Some((domain, slots)) = active else {
        return DbResult::empty("none");
    };
    let spec = ontology.domain(domain).expect("domain checked above");
    let mut constraints = IndexMap::new();
    for (slot, value) in slots {
        if spec.informable_slots.contains_key(slot) {
            constraints.insert(slot.clone(), value.clone());
        }
    }
    query(ontology, db, domain, &constraints).expect("sanitized query cannot fail")
}

// ---------------------------------------------------------------------------
// Synthetic world sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyConfig {
    /// Number of domains to draw from the catalog (>= 2).
    pub domains: usize,
    /// Entities per table domain (>= 3).
    pub entities_per_domain: usize,
    /// Informable slots kept per domain (>= 2).
    pub slots_per_domain: usize,
}

impl Default for OntologyConfig {
    fn default() -> Self {
        OntologyConfig {
            domains: 3,
            entities_per_domain: 12,
            slots_per_domain: 3,
        }
    }
}

struct Archetype {
    name: &'static str,
    informables: &'static [(&'static str, &'static [&'static str])],
    requestables: &'static [&'static str],
    bookable: bool,
    /// None -> virtual domain without an entity table.
    name_pool: Option<(&'static [&'static str], &'static [&'static str])>,
}

const AREAS: &[&str] = &["north", "south", "east", "west", "centre"];
const PRICES: &[&str] = &["cheap", "moderate", "expensive"];
const FOODS: &[&str] = &[
    "italian", "chinese", "indian", "british", "french", "thai", "mexican", "japanese", "turkish",
    "korean",
];
const STARS: &[&str] = &["1", "2", "3", "4", "5"];
const YESNO: &[&str] = &["yes", "no"];
const ATTR_TYPES: &[&str] = &[
    "museum", "park", "cinema", "theatre", "gallery", "pool", "club", "church",
];
const DAYS: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];
const PLACES: &[&str] = &[
    "cambridge",
    "london",
    "norwich",
    "peterborough",
    "stansted",
    "ely",
    "leicester",
    "birmingham",
];

const REST_ADJ: &[&str] = &[
    "golden", "silver", "royal", "old", "little", "blue", "red", "happy", "grand", "corner",
    "lucky", "green",
];
const REST_NOUN: &[&str] = &[
    "palace", "garden", "house", "kitchen", "table", "spoon", "lounge", "bistro", "court", "place",
    "oven", "fork",
];
const HOTEL_ADJ: &[&str] = &[
    "north", "south", "city", "river", "park", "station", "garden", "royal", "crown", "bridge",
    "sunny", "quiet",
];
const HOTEL_NOUN: &[&str] = &[
    "lodge", "inn", "arms", "guesthouse", "rest", "suites", "house", "view", "gate", "court",
    "manor", "stay",
];
const ATTR_ADJ: &[&str] = &[
    "grand", "modern", "ancient", "riverside", "hidden", "central", "famous", "quiet", "royal",
    "painted", "stone", "glass",
];
const ATTR_NOUN: &[&str] = &[
    "hall", "tower", "museum", "grounds", "gallery", "works", "chapel", "corner", "vault",
    "theatre", "arch", "walk",
];

fn catalog() -> Vec<Archetype> {
    vec![
        Archetype {
            name: "restaurant",
            informables: &[("food", FOODS), ("area", AREAS), ("pricerange", PRICES)],
            requestables: &["phone", "address", "postcode", "price"],
            bookable: true,
            name_pool: Some((REST_ADJ, REST_NOUN)),
        },
        Archetype {
            name: "hotel",
            informables: &[
                ("area", AREAS),
                ("pricerange", PRICES),
                ("stars", STARS),
                ("parking", YESNO),
                ("internet", YESNO),
            ],
            requestables: &["phone", "address", "postcode", "price"],
            bookable: true,
            name_pool: Some((HOTEL_ADJ, HOTEL_NOUN)),
        },
        Archetype {
            name: "attraction",
            informables: &[("area", AREAS), ("type", ATTR_TYPES)],
            requestables: &["phone", "address", "postcode", "fee"],
            bookable: false,
            name_pool: Some((ATTR_ADJ, ATTR_NOUN)),
        },
        Archetype {
            name: "train",
            informables: &[
                ("departure", PLACES),
                ("destination", PLACES),
                ("day", DAYS),
            ],
            requestables: &["time", "price"],
            bookable: true,
            name_pool: None, // names are synthesized train ids
        },
        Archetype {
            name: "taxi",
            informables: &[("departure", PLACES), ("destination", PLACES)],
            requestables: &["phone"],
            bookable: true,
            name_pool: None, // virtual: no entity table at all
        },
    ]
}

fn synth_phone(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from("01223");
    for _ in 0..6 {
        s.push(char::from(b'0' + rng.gen_range(0..10u8)));
    }
    s
}

fn synth_postcode(rng: &mut ChaCha8Rng) -> String {
    format!(
        "cb{}{}{}{}",
        rng.gen_range(1..6),
        rng.gen_range(1..10),
        char::from(b'a' + rng.gen_range(0..26u8)),
        char::from(b'a' + rng.gen_range(0..26u8)),
    )
}

const STREETS: &[&str] = &[
    "mill road",
    "king street",
    "station road",
    "high street",
    "bridge street",
    "regent street",
    "castle hill",
    "market square",
];

/// Sample a deterministic synthetic world: ontology plus entity tables.
///
/// The first `config.domains` catalog archetypes are used in a fixed order;
/// the seed drives entity attributes so different seeds give different tables.
pub fn sample_ontology(seed: u64, config: &OntologyConfig) -> Result<(Ontology, EntityDatabase)> {
    let cat = catalog();
    if config.domains < 2 {
        return Err(CoreError::Config(format!(
            "need at least 2 domains, got {}",
            config.domains
        )));
    }
    if config.domains > cat.len() {
        return Err(CoreError::Config(format!(
            "catalog has {} domains, requested {}",
            cat.len(),
            config.domains
        )));
    }
    if config.entities_per_domain < 3 {
        return Err(CoreError::Config(format!(
            "need at least 3 entities per domain, got {}",
            config.entities_per_domain
        )));
    }
    if config.slots_per_domain < 2 {
        return Err(CoreError::Config(format!(
            "need at least 2 informable slots per domain, got {}",
            config.slots_per_domain
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut domains = Vec::new();
    let mut tables: IndexMap<String, Vec<Entity>> = IndexMap::new();

    for arch in cat.into_iter().take(config.domains) {
        let n_slots = config.slots_per_domain.min(arch.informables.len());
        let mut informable_slots = IndexMap::new();
        for (slot, values) in arch.informables.iter().take(n_slots) {
            informable_slots.insert(
                slot.to_string(),
                values.iter().map(|v| v.to_string()).collect(),
            );
        }
        let spec = DomainSpec {
            name: arch.name.to_string(),
            informable_slots: informable_slots.clone(),
            requestable_slots: arch.requestables.iter().map(|r| r.to_string()).collect(),
            bookable: arch.bookable,
        };

        let is_virtual = arch.name == "taxi";
        if !is_virtual {
            let names = entity_names(arch.name, arch.name_pool, config.entities_per_domain, &mut rng)?;
            let mut table = Vec::new();
            for name in names {
                let mut entity: Entity = IndexMap::new();
                entity.insert("name".into(), name);
                for (slot, values) in &informable_slots {
                    let v = values[rng.gen_range(0..values.len())].clone();
                    entity.insert(slot.clone(), v);
                }
                for req in &spec.requestable_slots {
                    let v = match req.as_str() {
                        "phone" => synth_phone(&mut rng),
                        "postcode" => synth_postcode(&mut rng),
                        "address" => format!(
                            "{} {}",
                            rng.gen_range(1..40),
                            STREETS[rng.gen_range(0..STREETS.len())]
                        ),
                        "price" => format!("{} pounds", rng.gen_range(5..60)),
                        "fee" => {
                            if rng.gen_bool(0.4) {
                                "free".to_string()
                            } else {
                                format!("{} pounds", rng.gen_range(1..12))
                            }
                        }
                        "time" => format!("{:02}:{:02}", rng.gen_range(5..23), 5 * rng.gen_range(0..12)),
                        _ => format!("{}", rng.gen_range(1..100)),
                    };
                    entity.insert(req.clone(), v);
                }
                table.push(entity);
            }
            tables.insert(arch.name.to_string(), table);
        }
        domains.push(spec);
    }

    let ontology = Ontology { domains };
    ontology.validate()?;
    let db = EntityDatabase { tables };
    Ok((ontology, db))
}

fn entity_names(
    domain: &str,
    pool: Option<(&[&str], &[&str])>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    match pool {
        Some((adjs, nouns)) => {
            let mut combos: Vec<String> = Vec::with_capacity(adjs.len() * nouns.len());
            for a in adjs {
                for n in nouns {
                    combos.push(format!("{a} {n}"));
                }
            }
            if count > combos.len() {
                return Err(CoreError::Config(format!(
                    "domain `{domain}` can name at most {} entities, requested {count}",
                    combos.len()
                )));
            }
            combos.shuffle(rng);
            combos.truncate(count);
            Ok(combos)
        }
        None => {
            // Train-style synthetic ids, unique by construction.
            let mut ids = std::collections::HashSet::new();
            let mut out = Vec::new();
            while out.len() < count {
                let id = format!("tr{:04}", rng.gen_range(0..10000));
                if ids.insert(id.clone()) {
                    out.push(id);
                }
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Persistence: single JSON document {"domains": [...], "entities": {...}}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WorldDoc {
    domains: Vec<DomainSpec>,
    entities: IndexMap<String, Vec<Entity>>,
}

pub fn save_world(path: &Path, ontology: &Ontology, db: &EntityDatabase) -> Result<()> {
    let doc = WorldDoc {
        domains: ontology.domains.clone(),
        entities: db.tables.clone(),
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<(Ontology, EntityDatabase)> {
    let text = std::fs::read_to_string(path)?;
    let doc: WorldDoc = serde_json::from_str(&text)?;
    let ontology = Ontology {
        domains: doc.domains,
    };
    ontology.validate()?;
    Ok((ontology, EntityDatabase { tables: doc.entities }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_world() -> (Ontology, EntityDatabase) {
        let ontology = Ontology {
            domains: vec![
                DomainSpec {
                    name: "restaurant".into(),
                    informable_slots: IndexMap::from([
                        (
                            "food".to_string(),
                            vec!["italian".to_string(), "chinese".to_string(), "thai".to_string()],
                        ),
                        (
                            "area".to_string(),
                            vec!["north".to_string(), "south".to_string()],
                        ),
                    ]),
                    requestable_slots: vec!["phone".into()],
                    bookable: true,
                },
                DomainSpec {
                    name: "taxi".into(),
                    informable_slots: IndexMap::from([(
                        "departure".to_string(),
                        vec!["centre".to_string()],
                    )]),
                    requestable_slots: vec!["phone".into()],
                    bookable: true,
                },
            ],
        };
        let mk = |name: &str, food: &str| -> Entity {
            IndexMap::from([
                ("name".to_string(), name.to_string()),
                ("food".to_string(), food.to_string()),
                ("area".to_string(), "north".to_string()),
                ("phone".to_string(), "01223111222".to_string()),
            ])
        };
        let db = EntityDatabase {
            tables: IndexMap::from([(
                "restaurant".to_string(),
                vec![mk("golden palace", "italian"), mk("blue spoon", "italian"), mk("red court", "chinese")],
            )]),
        };
        (ontology, db)
    }

    fn constraints(pairs: &[(&str, &str)]) -> IndexMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    /// Brute-force oracle: re-scan the table independently of `query`.
    fn brute_force(db: &EntityDatabase, domain: &str, cons: &IndexMap<String, String>) -> Vec<String> {
        db.table(domain)
            .unwrap_or(&[])
            .iter()
            .filter(|e| {
                cons.iter().all(|(s, v)| {
                    e.get(s).map(|ev| ev.trim().to_lowercase() == v.trim().to_lowercase()) == Some(true)
                })
            })
            .map(|e| e.get("name").cloned().unwrap_or_default())
            .collect()
    }

    #[test]
    fn query_counts_and_buckets() {
        let (ont, db) = tiny_world();
        // 2 of 3 restaurants serve italian.
        let r = query(&ont, &db, "restaurant", &constraints(&[("food", "italian")])).unwrap();
        assert_eq!(r.match_count, 2);
        assert_eq!(r.bucket, 2);
        assert_eq!(r.matched_entities.len(), r.match_count);

        // Empty constraints match the whole table.
        let r = query(&ont, &db, "restaurant", &IndexMap::new()).unwrap();
        assert_eq!(r.match_count, 3);
        assert_eq!(r.bucket, 2);

        // No thai restaurant.
        let r = query(&ont, &db, "restaurant", &constraints(&[("food", "thai")])).unwrap();
        assert_eq!(r.match_count, 0);
        assert_eq!(r.bucket, 0);
    }

    #[test]
    fn query_matches_brute_force_and_is_monotone() {
        let (ont, db) = tiny_world();
        let cases = [
            constraints(&[]),
            constraints(&[("food", "italian")]),
            constraints(&[("food", "italian"), ("area", "north")]),
            constraints(&[("food", "chinese"), ("area", "south")]),
        ];
        let mut prev_count = usize::MAX;
        for cons in &cases {
            let got = query(&ont, &db, "restaurant", cons).unwrap();
            let mut expect = brute_force(&db, "restaurant", cons);
            expect.sort();
            let mut got_names = got.matched_entities.clone();
            got_names.sort();
            assert_eq!(got_names, expect);
            // Soundness: every returned entity satisfies all constraints.
            for name in &got.matched_entities {
                let e = db.table("restaurant").unwrap().iter().find(|e| e["name"] == *name).unwrap();
                for (s, v) in cons {
                    assert_eq!(&e[s.as_str()].to_lowercase(), v);
                }
            }
            prev_count = prev_count.min(got.match_count);
        }
        // Adding a constraint never increases the count (first three cases nest).
        let c0 = query(&ont, &db, "restaurant", &cases[0]).unwrap().match_count;
        let c1 = query(&ont, &db, "restaurant", &cases[1]).unwrap().match_count;
        let c2 = query(&ont, &db, "restaurant", &cases[2]).unwrap().match_count;
        assert!(c1 <= c0 && c2 <= c1);
    }

    #[test]
    fn query_errors() {
        let (ont, db) = tiny_world();
        assert!(matches!(
            query(&ont, &db, "hospital", &IndexMap::new()),
            Err(CoreError::DomainNotFound(_))
        ));
        assert!(matches!(
            query(&ont, &db, "restaurant", &constraints(&[("wifi", "yes")])),
            Err(CoreError::UnknownSlot { .. })
        ));
    }

    #[test]
    fn virtual_domain_synthesizes_one_match() {
        let (ont, db) = tiny_world();
        let r = query(&ont, &db, "taxi", &constraints(&[("departure", "centre")])).unwrap();
        assert_eq!(r.match_count, 1);
        assert_eq!(r.bucket, 1);
        assert_eq!(r.token(), "<db_1>");
    }

    #[test]
    fn bucket_function() {
        assert_eq!(bucket_for_count(0), 0);
        assert_eq!(bucket_for_count(1), 1);
        assert_eq!(bucket_for_count(2), 2);
        assert_eq!(bucket_for_count(3), 2);
        assert_eq!(bucket_for_count(4), 3);
        assert_eq!(bucket_for_count(40), 3);
        assert_eq!(bucket_from_token("<db_3>"), Some(3));
        assert_eq!(bucket_from_token("<db_9>"), None);
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let cfg = OntologyConfig::default();
        let (o1, d1) = sample_ontology(7, &cfg).unwrap();
        let (o2, d2) = sample_ontology(7, &cfg).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(d1, d2);
        let (_, d3) = sample_ontology(8, &cfg).unwrap();
        assert_ne!(d1, d3);
    }

    #[test]
    fn sampling_rejects_bad_configs() {
        let mut cfg = OntologyConfig::default();
        cfg.domains = 0;
        assert!(matches!(sample_ontology(1, &cfg), Err(CoreError::Config(_))));
        let mut cfg = OntologyConfig::default();
        cfg.entities_per_domain = 2;
        assert!(sample_ontology(1, &cfg).is_err());
        let mut cfg = OntologyConfig::default();
        cfg.entities_per_domain = 100_000;
        assert!(sample_ontology(1, &cfg).is_err());
    }

    #[test]
    fn sampled_world_satisfies_invariants() {
        let cfg = OntologyConfig {
            domains: 5,
            entities_per_domain: 10,
            slots_per_domain: 3,
        };
        let (ont, db) = sample_ontology(3, &cfg).unwrap();
        ont.validate().unwrap();
        for spec in &ont.domains {
            let Some(table) = db.table(&spec.name) else {
                assert_eq!(spec.name, "taxi");
                continue;
            };
            let mut names = std::collections::HashSet::new();
            for e in table {
                assert!(names.insert(e["name"].clone()), "duplicate entity name");
                for (slot, values) in &spec.informable_slots {
                    assert!(values.contains(&e[slot.as_str()]));
                }
                for req in &spec.requestable_slots {
                    assert!(e.contains_key(req.as_str()), "missing requestable {req}");
                }
            }
        }
    }

    #[test]
    fn world_roundtrips_through_json() {
        let (ont, db) = sample_ontology(5, &OntologyConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.json");
        save_world(&path, &ont, &db).unwrap();
        let (ont2, db2) = load_world(&path).unwrap();
        assert_eq!(ont, ont2);
        assert_eq!(db, db2);
    }
}
