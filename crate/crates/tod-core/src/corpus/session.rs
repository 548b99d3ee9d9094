//! Dialogue sessions and the flat special-token serialization.
//!
//! A session serializes as
//! `<sos_u> U_0 <eos_u> <sos_b> B_0 <eos_b> <sos_db> DB_0 <eos_db>
//!  <sos_a> A_0 <eos_a> <sos_r> R_0 <eos_r> <sos_u> U_1 ...`
//! with single spaces between tokens.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::state::{BeliefState, SystemAct};
use crate::error::Result;
use crate::ontology::DbResult;

pub const SOS_U: &str = "<sos_u>";
pub const EOS_U: &str = "<eos_u>";
pub const SOS_B: &str = "<sos_b>";
pub const EOS_B: &str = "<eos_b>";
pub const SOS_DB: &str = "<sos_db>";
pub const EOS_DB: &str = "<eos_db>";
pub const SOS_A: &str = "<sos_a>";
pub const EOS_A: &str = "<eos_a>";
pub const SOS_R: &str = "<sos_r>";
pub const EOS_R: &str = "<eos_r>";

/// Turn components in serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Component {
    User,
    Belief,
    Db,
    Act,
    Response,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::User,
        Component::Belief,
        Component::Db,
        Component::Act,
        Component::Response,
    ];

    pub fn delimiters(&self) -> (&'static str, &'static str) {
        match self {
            Component::User => (SOS_U, EOS_U),
            Component::Belief => (SOS_B, EOS_B),
            Component::Db => (SOS_DB, EOS_DB),
            Component::Act => (SOS_A, EOS_A),
            Component::Response => (SOS_R, EOS_R),
        }
    }

    pub fn from_sos(token: &str) -> Option<Component> {
        Component::ALL.iter().copied().find(|c| c.delimiters().0 == token)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub user: String,
    pub belief: BeliefState,
    pub db: DbResult,
    pub act: SystemAct,
    pub response: String,
    /// Real ontology domains this turn engages (empty for closing turns).
    pub domains: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainGoal {
    pub constraints: IndexMap<String, String>,
    pub requests: Vec<String>,
}

/// Per-domain constraints and requested slots for one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionGoal(pub IndexMap<String, DomainGoal>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub session_id: String,
    pub goal: SessionGoal,
    pub is_multi_domain: bool,
    pub turns: Vec<DialogueTurn>,
}

impl DialogueSession {
    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    /// Union of active domains over all turns.
    pub fn active_domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.turns {
            for d in &t.domains {
                if !out.contains(d) {
                    out.push(d.clone());
                }
            }
        }
        out
    }
}

fn push_component(parts: &mut Vec<String>, component: Component, turn: &DialogueTurn) {
    let (sos, eos) = component.delimiters();
    parts.push(sos.to_string());
    let body = match component {
        Component::User => turn.user.clone(),
        Component::Belief => turn.belief.serialize(),
        Component::Db => turn.db.token().to_string(),
        Component::Act => turn.act.serialize(),
        Component::Response => turn.response.clone(),
    };
    if !body.is_empty() {
        parts.push(body);
    }
    parts.push(eos.to_string());
}

/// Serialize up to (and including) `upto_component` of turn `upto_turn`.
///
/// Panics if `upto_turn` is out of range; use [`serialize_session_full`] for
/// whole sessions.
pub fn serialize_session(
    session: &DialogueSession,
    upto_turn: usize,
    upto_component: Component,
) -> String {
    assert!(upto_turn < session.turns.len(), "turn index out of range");
    let mut parts = Vec::new();
    for (i, turn) in session.turns.iter().enumerate().take(upto_turn + 1) {
        for component in Component::ALL {
            if i == upto_turn && component > upto_component {
                break;
            }
            push_component(&mut parts, component, turn);
        }
    }
    parts.join(" ")
}

pub fn serialize_session_full(session: &DialogueSession) -> String {
    serialize_session(session, session.turns.len() - 1, Component::Response)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<DialogueSession>,
    pub dev: Vec<DialogueSession>,
    pub test: Vec<DialogueSession>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub total: usize,
    pub single_domain: usize,
    pub multi_domain: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: SplitCounts,
    pub dev: SplitCounts,
    pub test: SplitCounts,
}

fn counts(sessions: &[DialogueSession]) -> SplitCounts {
    let multi = sessions.iter().filter(|s| s.is_multi_domain).count();
    SplitCounts {
        total: sessions.len(),
        single_domain: sessions.len() - multi,
        multi_domain: multi,
    }
}

impl CorpusSplit {
    pub fn stats(&self) -> SplitStats {
        SplitStats {
            train: counts(&self.train),
            dev: counts(&self.dev),
            test: counts(&self.test),
        }
    }

    /// Session ids must be disjoint across splits.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for s in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !seen.insert(s.session_id.clone()) {
                return Err(crate::CoreError::Config(format!(
                    "duplicate session id across splits: {}",
                    s.session_id
                )));
            }
        }
        Ok(())
    }

    /// Write `train.jsonl`, `dev.jsonl`, `test.jsonl` and `stats.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_sessions(&dir.join("train.jsonl"), &self.train)?;
        save_sessions(&dir.join("dev.jsonl"), &self.dev)?;
        save_sessions(&dir.join("test.jsonl"), &self.test)?;
        let stats = serde_json::to_string_pretty(&self.stats())?;
        std::fs::write(dir.join("stats.json"), stats)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<CorpusSplit> {
        Ok(CorpusSplit {
            train: load_sessions(&dir.join("train.jsonl"))?,
            dev: load_sessions(&dir.join("dev.jsonl"))?,
            test: load_sessions(&dir.join("test.jsonl"))?,
        })
    }
}

/// JSON-lines persistence: one session per line.
pub fn save_sessions(path: &Path, sessions: &[DialogueSession]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for s in sessions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_sessions(path: &Path) -> Result<Vec<DialogueSession>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::state::ActType;

    pub(crate) fn demo_session() -> DialogueSession {
        let mut belief0 = BeliefState::new();
        belief0.insert("restaurant", "food", "italian");
        let mut act0 = SystemAct::new();
        act0.push("restaurant", ActType::Request, &["area"]);
        let mut belief1 = belief0.clone();
        belief1.insert("restaurant", "area", "north");
        let mut act1 = SystemAct::new();
        act1.push("restaurant", ActType::Recommend, &["name"]);
        let goal = SessionGoal(IndexMap::from([(
            "restaurant".to_string(),
            DomainGoal {
                constraints: IndexMap::from([
                    ("food".to_string(), "italian".to_string()),
                    ("area".to_string(), "north".to_string()),
                ]),
                requests: vec!["phone".into()],
            },
        )]));
        DialogueSession {
            session_id: "s00001".into(),
            goal,
            is_multi_domain: false,
            turns: vec![
                DialogueTurn {
                    user: "i am looking for an italian restaurant".into(),
                    belief: belief0,
                    db: DbResult {
                        domain: "restaurant".into(),
                        match_count: 2,
                        bucket: 2,
                        matched_entities: vec!["golden palace".into(), "blue spoon".into()],
                    },
                    act: act0,
                    response: "what area do you prefer ?".into(),
                    domains: vec!["restaurant".into()],
                },
                DialogueTurn {
                    user: "the north please".into(),
                    belief: belief1,
                    db: DbResult {
                        domain: "restaurant".into(),
                        match_count: 1,
                        bucket: 1,
                        matched_entities: vec!["golden palace".into()],
                    },
                    act: act1,
                    response: "i recommend [value_name] .".into(),
                    domains: vec!["restaurant".into()],
                },
            ],
        }
    }

    #[test]
    fn serialize_truncates_after_component() {
        let s = demo_session();
        let text = serialize_session(&s, 0, Component::User);
        assert!(text.ends_with(EOS_U));
        let specials = text
            .split_whitespace()
            .filter(|t| t.starts_with("<sos") || t.starts_with("<eos"))
            .count();
        assert_eq!(specials, 2);
    }

    #[test]
    fn full_two_turn_session_has_twenty_delimiters() {
        let s = demo_session();
        let text = serialize_session_full(&s);
        let specials = text
            .split_whitespace()
            .filter(|t| t.starts_with("<sos_") || t.starts_with("<eos_"))
            .count();
        assert_eq!(specials, 20);
        // Every <sos_x> has a matching <eos_x>.
        for c in Component::ALL {
            let (sos, eos) = c.delimiters();
            let n_sos = text.split_whitespace().filter(|t| *t == sos).count();
            let n_eos = text.split_whitespace().filter(|t| *t == eos).count();
            assert_eq!(n_sos, n_eos);
        }
    }

    #[test]
    fn jsonl_roundtrip_is_byte_stable() {
        let s = demo_session();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        save_sessions(&p1, &[s.clone()]).unwrap();
        let loaded = load_sessions(&p1).unwrap();
        assert_eq!(loaded, vec![s]);
        save_sessions(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
