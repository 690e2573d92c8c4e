//! One live session against an OpenAI-compatible chat-completion endpoint.
//! Picks the first offered option in each round.
//!
//! ```text
//! LLM_API_KEY=... cargo run --example remote_backend -- "return stream from generator in Java"
//! ```
//!
//! `LLM_ENDPOINT` and `LLM_MODEL` override the defaults.

use std::sync::Arc;

use kgclarify::demo;
use kgclarify::llm::{RemoteBackend, RemoteConfig, API_KEY_ENV};
use kgclarify::prompt::PromptEngine;
use kgclarify::session::{Engine, SessionConfig};
use kgclarify::variant::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if std::env::var_os(API_KEY_ENV).is_none() {
        eprintln!("set {API_KEY_ENV} to run this example");
        return Ok(());
    }
    let endpoint = std::env::var("LLM_ENDPOINT").unwrap_or_else(|_| "https://api.openai.com/v1/chat/completions".into());
    let model = std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into());
    let query = std::env::args().nth(1).unwrap_or_else(|| demo::DEMO_QUERY.to_string());

    let backend = RemoteBackend::new(RemoteConfig::new(endpoint, model))?;
    let engine = Engine::new(&demo::sample_table(), PromptEngine::bundled(), Arc::new(backend));
    let mut session = engine.start_session(&query, Variant::Full, SessionConfig { max_rounds: 2, ..SessionConfig::default() })?;
    while session.can_ask() {
        let asked = engine.next_question(&mut session)?;
        let answer = asked.options.as_slice()[0].clone();
        println!("[{}] {}\n> {answer}", asked.aspect, asked.question);
        let out = engine.submit_answer(&mut session, &answer)?;
        println!("{}\n{:#?}\n", out.extended_query, out.recommendations.as_slice());
    }
    Ok(())
}
