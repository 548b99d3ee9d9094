//! Best-effort importer for MultiWOZ-style `data.json` dumps.
//!
//! Converts the raw schema (per-dialogue `goal` + `log` alternating user and
//! system turns, belief annotations under `metadata`, act annotations under
//! `dialog_act`) into [`DialogueSession`]s. Dialogues with missing or
//! malformed annotations are skipped and counted, never fatal. Split
//! assignment follows `valListFile`/`testListFile` when given, else a
//! deterministic 80/10/10 hash split on the dialogue id.

use indexmap::IndexMap;
use serde::Serialize;
use serde_json::Value;
use std::collections::HashSet;
use std::path::Path;

use super::generate::delexicalize;
use super::session::{CorpusSplit, DialogueSession, DialogueTurn, DomainGoal, SessionGoal};
use super::state::{ActType, BeliefState, SystemAct};
use crate::error::{CoreError, Result};
use crate::ontology::{bucket_for_count, DbResult};

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImportReport {
    pub imported: usize,
    pub skipped: usize,
    pub skip_reasons: Vec<String>,
}

fn json_error_offset(text: &str, err: &serde_json::Error) -> usize {
    let (line, column) = (err.line(), err.column());
    let mut offset = 0;
    for (i, l) in text.lines().enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

fn normalize_text(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// MultiWOZ act names -> the closed act set used by the serialization.
fn map_act_type(raw: &str) -> Option<ActType> {
    match raw.to_lowercase().as_str() {
        "inform" | "nooffer" | "nobook" | "offerbooked" | "book" => Some(ActType::Inform),
        "request" => Some(ActType::Request),
        "recommend" | "select" | "offer" => Some(ActType::Recommend),
        "offerbook" => Some(ActType::Offerbook),
        "bye" | "greet" | "welcome" | "thank" => Some(ActType::Bye),
        "reqmore" => Some(ActType::Reqmore),
        _ => None,
    }
}

fn belief_from_metadata(metadata: &Value) -> Option<BeliefState> {
    let mut belief = BeliefState::new();
    let obj = metadata.as_object()?;
    for (domain, entry) in obj {
        let semi = entry.get("semi").and_then(|v| v.as_object());
        if let Some(semi) = semi {
            for (slot, value) in semi {
                let Some(v) = value.as_str() else { continue };
                let v = normalize_text(v);
                if v.is_empty() || v == "not mentioned" || v == "none" || v == "dontcare" {
                    continue;
                }
                belief.insert(&domain.to_lowercase(), &slot.to_lowercase(), &v);
            }
        }
    }
    Some(belief)
}

/// Parse `dialog_act`: {"Domain-Act": [[slot, value], ...], ...}.
/// Returns the structured act plus slot->value pairs for delexicalization.
fn act_from_annotation(annotation: &Value) -> (SystemAct, IndexMap<String, String>) {
    let mut act = SystemAct::new();
    let mut values = IndexMap::new();
    let Some(obj) = annotation.as_object() else {
        return (act, values);
    };
    for (key, pairs) in obj {
        let mut parts = key.splitn(2, '-');
        let domain = parts.next().unwrap_or("general").to_lowercase();
        let raw_act = parts.next().unwrap_or("inform");
        let Some(act_type) = map_act_type(raw_act) else {
            continue;
        };
        let mut slots = Vec::new();
        if let Some(list) = pairs.as_array() {
            for pair in list {
                let slot = pair
                    .get(0)
                    .and_then(|v| v.as_str())
                    .unwrap_or("none")
                    .to_lowercase();
                let value = pair.get(1).and_then(|v| v.as_str()).unwrap_or("?");
                if slot != "none" {
                    slots.push(slot.clone());
                    let value = normalize_text(value);
                    if !value.is_empty() && value != "?" && value != "none" {
                        values.insert(slot, value);
                    }
                }
            }
        }
        let slot_refs: Vec<&str> = slots.iter().map(|s| s.as_str()).collect();
        act.push(&domain, act_type, &slot_refs);
    }
    (act, values)
}

fn goal_from_value(goal: &Value) -> SessionGoal {
    let mut out = SessionGoal::default();
    let Some(obj) = goal.as_object() else { return out };
    for (domain, entry) in obj {
        let Some(entry) = entry.as_object() else { continue };
        if entry.is_empty() {
            continue;
        }
        let mut dg = DomainGoal::default();
        if let Some(info) = entry.get("info").and_then(|v| v.as_object()) {
            for (slot, value) in info {
                if let Some(v) = value.as_str() {
                    dg.constraints
                        .insert(slot.to_lowercase(), normalize_text(v));
                }
            }
        }
        if let Some(reqt) = entry.get("reqt").and_then(|v| v.as_array()) {
            for slot in reqt {
                if let Some(s) = slot.as_str() {
                    dg.requests.push(s.to_lowercase());
                }
            }
        }
        if !dg.constraints.is_empty() || !dg.requests.is_empty() {
            out.0.insert(domain.to_lowercase(), dg);
        }
    }
    out
}

fn convert_dialogue(id: &str, dialogue: &Value) -> std::result::Result<DialogueSession, String> {
    let log = dialogue
        .get("log")
        .and_then(|v| v.as_array())
        .ok_or("missing log")?;
    if log.len() < 2 || log.len() % 2 != 0 {
        return Err(format!("log must hold user/system pairs, got {}", log.len()));
    }
    let goal = goal_from_value(dialogue.get("goal").unwrap_or(&Value::Null));
    let mut turns = Vec::new();
    let mut prev_belief = BeliefState::new();
    for pair in log.chunks(2) {
        let user = pair[0]
            .get("text")
            .and_then(|v| v.as_str())
            .ok_or("user turn missing text")?;
        let system = &pair[1];
        let response_raw = system
            .get("text")
            .and_then(|v| v.as_str())
            .ok_or("system turn missing text")?;
        let metadata = system.get("metadata").ok_or("system turn missing metadata")?;
        let belief = belief_from_metadata(metadata).ok_or("metadata not an object")?;
        let (act, act_values) = act_from_annotation(
            system.get("dialog_act").unwrap_or(&Value::Null),
        );
        let response = delexicalize(&normalize_text(response_raw), &act_values, "");

        // Active domains: domains whose belief entries changed this turn,
        // else the act's non-general domains.
        let mut domains: Vec<String> = belief
            .domains()
            .filter(|(d, slots)| prev_belief.domain(d) != Some(*slots))
            .map(|(d, _)| d.clone())
            .collect();
        if domains.is_empty() {
            domains = act
                .domains()
                .filter(|d| d.as_str() != "general")
                .cloned()
                .collect();
        }

        // No entity database ships with the importer; synthesize a bucket
        // from belief presence so the serialization format stays uniform.
        let db = match belief.last_domain() {
            Some(domain) => DbResult {
                domain: domain.clone(),
                match_count: 1,
                bucket: bucket_for_count(1),
                matched_entities: Vec::new(),
            },
            None => DbResult::empty("none"),
        };

        prev_belief = belief.clone();
        turns.push(DialogueTurn {
            user: normalize_text(user),
            belief,
            db,
            act,
            response,
            domains,
        });
    }
    let mut session = DialogueSession {
        session_id: id.to_string(),
        goal,
        is_multi_domain: false,
        turns,
    };
    session.is_multi_domain = session.active_domains().len() >= 2;
    Ok(session)
}

fn read_list_file(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn fnv1a(s: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Import a MultiWOZ `data.json`. Optional val/test list files pin the split;
/// otherwise dialogue ids are hash-assigned 80/10/10.
pub fn import_multiwoz(
    data_path: &Path,
    val_list: Option<&Path>,
    test_list: Option<&Path>,
) -> Result<(CorpusSplit, ImportReport)> {
    let text = std::fs::read_to_string(data_path)?;
    let data: Value = serde_json::from_str(&text).map_err(|e| CoreError::Import {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
        offset: json_error_offset(&text, &e),
    })?;
    let obj = data.as_object().ok_or_else(|| CoreError::Import {
        message: "top level must be an object of dialogues".into(),
        line: 1,
        column: 1,
        offset: 0,
    })?;

    let val_ids = val_list.map(read_list_file).transpose()?;
    let test_ids = test_list.map(read_list_file).transpose()?;

    let mut split = CorpusSplit::default();
    let mut report = ImportReport::default();
    for (id, dialogue) in obj {
        match convert_dialogue(id, dialogue) {
            Ok(session) => {
                report.imported += 1;
                let in_val = val_ids.as_ref().map(|s| s.contains(id)).unwrap_or(false);
                let in_test = test_ids.as_ref().map(|s| s.contains(id)).unwrap_or(false);
                if in_val {
                    split.dev.push(session);
                } else if in_test {
                    split.test.push(session);
                } else if val_ids.is_some() || test_ids.is_some() {
                    split.train.push(session);
                } else {
                    match fnv1a(id) % 10 {
                        8 => split.dev.push(session),
                        9 => split.test.push(session),
                        _ => split.train.push(session),
                    }
                }
            }
            Err(reason) => {
                report.skipped += 1;
                report.skip_reasons.push(format!("{id}: {reason}"));
            }
        }
    }
    Ok((split, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dialogue_list_imports_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        std::fs::write(&path, "{}").unwrap();
        let (split, report) = import_multiwoz(&path, None, None).unwrap();
        assert_eq!(split.train.len() + split.dev.len() + split.test.len(), 0);
        assert_eq!(report.skipped, 0);
        assert_eq!(report.imported, 0);
    }

    #[test]
    fn ill_formed_json_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        std::fs::write(&path, "{\n  \"a\": [,]\n}").unwrap();
        match import_multiwoz(&path, None, None) {
            Err(CoreError::Import { line, offset, .. }) => {
                assert_eq!(line, 2);
                assert!(offset > 0);
            }
            other => panic!("expected import error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_dialogue_is_skipped_with_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        let fixture = serde_json::json!({
            "good1.json": fixture_dialogue(),
            "bad.json": {"log": "not a list"},
            "good2.json": fixture_dialogue(),
        });
        std::fs::write(&path, serde_json::to_string(&fixture).unwrap()).unwrap();
        let (split, report) = import_multiwoz(&path, None, None).unwrap();
        assert_eq!(report.imported, 2);
        assert_eq!(report.skipped, 1);
        assert_eq!(split.train.len() + split.dev.len() + split.test.len(), 2);
    }

    fn fixture_dialogue() -> serde_json::Value {
        serde_json::json!({
            "goal": {
                "restaurant": {
                    "info": {"food": "italian"},
                    "reqt": ["phone"]
                }
            },
            "log": [
                {"text": "I want an Italian restaurant.", "metadata": {}},
                {
                    "text": "Luigi House is a nice Italian place.",
                    "metadata": {"restaurant": {"semi": {"food": "italian"}}},
                    "dialog_act": {"Restaurant-Recommend": [["Name", "Luigi House"]]}
                },
                {"text": "What is their phone number?", "metadata": {}},
                {
                    "text": "The phone number is 01223350420.",
                    "metadata": {"restaurant": {"semi": {"food": "italian"}}},
                    "dialog_act": {"Restaurant-Inform": [["Phone", "01223350420"]]}
                }
            ]
        })
    }

    #[test]
    fn fixture_converts_to_expected_session() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        let fixture = serde_json::json!({"demo.json": fixture_dialogue()});
        std::fs::write(&path, serde_json::to_string(&fixture).unwrap()).unwrap();
        let (split, report) = import_multiwoz(&path, None, None).unwrap();
        assert_eq!(report.imported, 1);
        let all: Vec<_> = split
            .train
            .iter()
            .chain(&split.dev)
            .chain(&split.test)
            .collect();
        assert_eq!(all.len(), 1);
        let s = all[0];
        assert_eq!(s.turns.len(), 2);
        assert_eq!(
            s.turns[0].belief.domain("restaurant").unwrap()["food"],
            "italian"
        );
        assert_eq!(s.turns[1].response, "the phone number is [value_phone].");
        assert!(!s.is_multi_domain);
        assert_eq!(s.goal.0["restaurant"].requests, vec!["phone"]);
    }

    #[test]
    fn list_files_pin_split_assignment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        let fixture = serde_json::json!({
            "a.json": fixture_dialogue(),
            "b.json": fixture_dialogue(),
            "c.json": fixture_dialogue(),
        });
        std::fs::write(&path, serde_json::to_string(&fixture).unwrap()).unwrap();
        let val = dir.path().join("valListFile.txt");
        let test = dir.path().join("testListFile.txt");
        std::fs::write(&val, "b.json\n").unwrap();
        std::fs::write(&test, "c.json\n").unwrap();
        let (split, _) = import_multiwoz(&path, Some(&val), Some(&test)).unwrap();
        assert_eq!(split.train.len(), 1);
        assert_eq!(split.dev.len(), 1);
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.dev[0].session_id, "b.json");
    }
}
