//! Parser for (possibly truncated) serialized sessions.
//!
//! Recovery rules: a trailing component without its closing delimiter is
//! returned raw with an `incomplete` flag; malformed content inside a
//! component produces a per-component diagnostic, never a global failure.

use super::session::Component;
use super::state::{default_slot_lexicon, parse_act, parse_belief, BeliefState, SystemAct};
use crate::ontology::bucket_from_token;

/// Components recovered for one turn. `None` means the component was absent
/// (truncated input); raw token strings are kept for the db component.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTurn {
    pub user: Option<String>,
    pub belief: Option<BeliefState>,
    pub db_bucket: Option<u8>,
    pub act: Option<SystemAct>,
    pub response: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionFragment {
    pub turns: Vec<ParsedTurn>,
    /// Trailing component without a closing delimiter: (component, raw text).
    pub incomplete: Option<(Component, String)>,
    pub diagnostics: Vec<String>,
}

impl SessionFragment {
    pub fn is_empty(&self) -> bool {
        self.turns.is_empty() && self.incomplete.is_none()
    }
}

fn turn_has(turn: &ParsedTurn, c: Component) -> bool {
    match c {
        Component::User => turn.user.is_some(),
        Component::Belief => turn.belief.is_some(),
        Component::Db => turn.db_bucket.is_some(),
        Component::Act => turn.act.is_some(),
        Component::Response => turn.response.is_some(),
    }
}

fn set_component(
    fragment: &mut SessionFragment,
    component: Component,
    body: &[&str],
    turn_index: usize,
) {
    if fragment.turns.is_empty() || turn_has(fragment.turns.last().unwrap(), component) {
        fragment.turns.push(ParsedTurn::default());
    }
    let turn = fragment.turns.last_mut().unwrap();
    match component {
        Component::User => turn.user = Some(body.join(" ")),
        Component::Response => turn.response = Some(body.join(" ")),
        Component::Belief => {
            let (belief, diags) = parse_belief(body, &default_slot_lexicon());
            for d in diags {
                fragment.diagnostics.push(format!("turn {turn_index}: {d}"));
            }
            turn.belief = Some(belief);
        }
        Component::Act => {
            let (act, diags) = parse_act(body);
            for d in diags {
                fragment.diagnostics.push(format!("turn {turn_index}: {d}"));
            }
            turn.act = Some(act);
        }
        Component::Db => match body {
            [token] => match bucket_from_token(token) {
                Some(b) => turn.db_bucket = Some(b),
                None => {
                    fragment
                        .diagnostics
                        .push(format!("turn {turn_index}: db: unknown token `{token}`"));
                    turn.db_bucket = Some(0);
                }
            },
            _ => {
                fragment.diagnostics.push(format!(
                    "turn {turn_index}: db: expected one bucket token, got {}",
                    body.len()
                ));
                turn.db_bucket = Some(0);
            }
        },
    }
}

/// Parse a serialized session (or any prefix of one). Empty input yields an
/// empty fragment.
pub fn parse_session(text: &str) -> SessionFragment {
    let mut fragment = SessionFragment::default();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut i = 0;
    while i < tokens.len() {
        let token = tokens[i];
        let Some(component) = Component::from_sos(token) else {
            fragment
                .diagnostics
                .push(format!("stray token outside components: `{token}`"));
            i += 1;
            continue;
        };
        let (_, eos) = component.delimiters();
        let mut j = i + 1;
        let mut closed = false;
        while j < tokens.len() {
            if tokens[j] == eos {
                closed = true;
                break;
            }
            // A fresh opener before the closer means the closer was lost.
            if Component::from_sos(tokens[j]).is_some() {
                break;
            }
            j += 1;
        }
        let body = &tokens[i + 1..j];
        if closed {
            let turn_index = fragment.turns.len();
            set_component(&mut fragment, component, body, turn_index);
            i = j + 1;
        } else if j == tokens.len() {
            fragment.incomplete = Some((component, body.join(" ")));
            break;
        } else {
            fragment.diagnostics.push(format!(
                "component {:?} missing closing `{eos}`, skipped",
                component
            ));
            let turn_index = fragment.turns.len();
            set_component(&mut fragment, component, body, turn_index);
            i = j;
        }
    }
    fragment
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_fragment() {
        let f = parse_session("");
        assert!(f.is_empty());
        assert!(f.diagnostics.is_empty());
    }

    #[test]
    fn belief_component_parses() {
        let f = parse_session("<sos_b> [restaurant] food italian <eos_b>");
        assert_eq!(f.turns.len(), 1);
        let b = f.turns[0].belief.as_ref().unwrap();
        assert_eq!(b.domain("restaurant").unwrap()["food"], "italian");
        assert!(f.diagnostics.is_empty());
    }

    #[test]
    fn dangling_slot_recovers_with_diagnostic() {
        let f = parse_session("<sos_b> [restaurant] food <eos_b>");
        assert_eq!(f.turns.len(), 1);
        let b = f.turns[0].belief.as_ref().unwrap();
        assert!(b.domain("restaurant").unwrap().is_empty());
        assert_eq!(f.diagnostics.len(), 1);
        assert!(f.diagnostics[0].contains("dangling slot"));
    }

    #[test]
    fn truncated_tail_is_flagged_incomplete() {
        let f = parse_session("<sos_u> hello there <eos_u> <sos_b> [restaurant] food");
        assert_eq!(f.turns.len(), 1);
        assert_eq!(f.turns[0].user.as_deref(), Some("hello there"));
        let (c, raw) = f.incomplete.clone().unwrap();
        assert_eq!(c, Component::Belief);
        assert_eq!(raw, "[restaurant] food");
    }

    #[test]
    fn new_user_component_starts_new_turn() {
        let f = parse_session("<sos_u> a <eos_u> <sos_r> b <eos_r> <sos_u> c <eos_u>");
        assert_eq!(f.turns.len(), 2);
        assert_eq!(f.turns[1].user.as_deref(), Some("c"));
    }

    #[test]
    fn full_turn_roundtrip() {
        use crate::corpus::session::tests::demo_session;
        use crate::corpus::session::serialize_session_full;
        let s = demo_session();
        let f = parse_session(&serialize_session_full(&s));
        assert!(f.incomplete.is_none());
        assert!(f.diagnostics.is_empty());
        assert_eq!(f.turns.len(), s.turns.len());
        for (parsed, gold) in f.turns.iter().zip(&s.turns) {
            assert_eq!(parsed.user.as_deref(), Some(gold.user.as_str()));
            assert_eq!(parsed.belief.as_ref().unwrap(), &gold.belief);
            assert_eq!(parsed.db_bucket, Some(gold.db.bucket));
            assert_eq!(parsed.act.as_ref().unwrap(), &gold.act);
            assert_eq!(parsed.response.as_deref(), Some(gold.response.as_str()));
        }
    }
}
