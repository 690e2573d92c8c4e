//! The bundled example: a two-round session on the query
//! "return stream from generator in Java", replayed from a fixed script.

use std::sync::Arc;

use crate::llm::ScriptedBackend;
use crate::path_store::PathStore;
use crate::prompt::PromptEngine;
use crate::session::{Engine, SessionConfig, SessionError, SessionTranscript};
use crate::variant::Variant;

/// Single-record path table with the three-round `java.util.Random.ints` path.
pub const SAMPLE_TABLE_JSONL: &str = include_str!("../fixtures/sample_table.jsonl");
/// Scripted backend responses for both demo rounds.
pub const DEMO_SCRIPT_JSONL: &str = include_str!("../fixtures/demo_script.jsonl");
pub const DEMO_QUERY: &str = "return stream from generator in Java";
/// The user's answers. The second is typed freely rather than picked from
/// the offered options.
pub const DEMO_ANSWERS: [&str; 2] = ["java.util.Random", "pseudorandom double values"];

pub fn sample_table() -> PathStore {
    PathStore::from_jsonl_reader(SAMPLE_TABLE_JSONL.as_bytes()).expect("bundled table is valid")
}

pub fn demo_backend() -> ScriptedBackend {
    ScriptedBackend::from_jsonl_reader(DEMO_SCRIPT_JSONL.as_bytes()).expect("bundled script is valid")
}

pub fn demo_engine() -> Engine {
    Engine::new(&sample_table(), PromptEngine::bundled(), Arc::new(demo_backend()))
}

/// Runs the whole two-round dialogue and returns the closed transcript.
pub fn run_demo(engine: &Engine) -> Result<SessionTranscript, SessionError> {
    let mut session = engine.start_session(DEMO_QUERY, Variant::Full, SessionConfig::default())?;
    for answer in DEMO_ANSWERS {
        engine.next_question(&mut session)?;
        engine.submit_answer(&mut session, answer)?;
    }
    Ok(engine.end_session(&mut session))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_places_next_double_first_in_round_two() {
        let t = run_demo(&demo_engine()).unwrap();
        assert_eq!(t.rounds.len(), 2);
        assert_eq!(t.rounds[0].aspect.as_str(), "type");
        assert_eq!(t.rounds[0].question, "What type of generator is being used?");
        assert_eq!(t.rounds[0].options.len(), 5);
        assert_ne!(t.rounds[0].recommendations.as_ref().unwrap().first(), Some("java.util.Random.nextDouble"));
        let r2 = t.rounds[1].recommendations.as_ref().unwrap();
        assert_eq!(r2.first(), Some("java.util.Random.nextDouble"));
        assert_eq!(r2.len(), 7);
        // free-text answer, not one of the offered options
        assert!(!t.rounds[1].options.as_slice().iter().any(|o| o == DEMO_ANSWERS[1]));
    }
}
