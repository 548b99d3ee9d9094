//! Dialogue sessions: gold data structures, the flat special-token
//! serialization, its parser, the synthetic generator, and the
//! MultiWOZ-schema importer.

mod generate;
mod multiwoz;
mod parse;
mod session;
mod state;

pub use generate::{delexicalize, generate_corpus, CorpusConfig, TurnBucket};
pub use multiwoz::{import_multiwoz, ImportReport};
pub use parse::{parse_session, ParsedTurn, SessionFragment};
pub use session::{
    load_sessions, save_sessions, serialize_session, serialize_session_full, Component,
    CorpusSplit, DialogueSession, DialogueTurn, DomainGoal, SessionGoal, SplitCounts, SplitStats,
    EOS_A, EOS_B, EOS_DB, EOS_R, EOS_U, SOS_A, SOS_B, SOS_DB, SOS_R, SOS_U,
};
pub use state::{default_slot_lexicon, ActType, BeliefState, SystemAct};
