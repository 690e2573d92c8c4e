//! Drive a two-round clarification session step by step against a scripted
//! backend, recording every prompt the engine sends.
//!
//! ```text
//! cargo run --example scripted_session
//! ```

use std::sync::Arc;

use kgclarify::demo;
use kgclarify::llm::RecordingBackend;
use kgclarify::prompt::PromptEngine;
use kgclarify::session::{Engine, SessionConfig};
use kgclarify::variant::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let backend = Arc::new(RecordingBackend::new(demo::demo_backend()));
    let engine = Engine::new(&demo::sample_table(), PromptEngine::bundled(), backend.clone());
    let mut session = engine.start_session(demo::DEMO_QUERY, Variant::Full, SessionConfig::default())?;
    println!("query: {}", session.query());

    for answer in demo::DEMO_ANSWERS {
        let asked = engine.next_question(&mut session)?;
        println!("\n[{}] {}", asked.aspect, asked.question);
        for (i, option) in asked.options.as_slice().iter().enumerate() {
            println!("   {}. {option}", i + 1);
        }
        println!("> {answer}");
        let out = engine.submit_answer(&mut session, answer)?;
        println!("extended query: {}", out.extended_query);
        for (i, api) in out.recommendations.as_slice().iter().enumerate() {
            println!("   {}. {api}", i + 1);
        }
    }

    let transcript = engine.end_session(&mut session);
    println!("\n{} prompts sent; transcript:", backend.prompts().len());
    println!("{}", serde_json::to_string_pretty(&transcript)?);
    Ok(())
}
