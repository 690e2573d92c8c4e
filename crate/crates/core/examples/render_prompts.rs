//! Render every prompt unit with the bundled templates, or with a template
//! registry given on the command line.
//!
//! ```text
//! cargo run --example render_prompts [path/to/registry.toml]
//! ```

use kgclarify::aspect::AspectKind;
use kgclarify::demo;
use kgclarify::path_store::NONE_ANSWER;
use kgclarify::prompt::PromptEngine;
use kgclarify::retrieval::{find_examples, RetrievalConfig};
use kgclarify::variant::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prompts = match std::env::args_os().nth(1) {
        Some(registry) => PromptEngine::from_registry(registry, None)?,
        None => PromptEngine::bundled(),
    };
    let query = demo::DEMO_QUERY;
    let units = demo::sample_table().flatten();
    let cfg = RetrievalConfig { top_fraction: 1.0, ..RetrievalConfig::default() };
    let examples = find_examples(&units, query, NONE_ANSWER, &cfg)?;
    let question = "What type of generator is being used?";
    let history = [(question.to_string(), "java.util.Random".to_string())];

    let rendered = [
        prompts.render_best_aspect(query, NONE_ANSWER, &examples, Variant::Full)?,
        prompts.render_best_aspect(query, NONE_ANSWER, &examples, Variant::NoK)?,
        prompts.render_clarify_question(query, AspectKind::Type, &[]),
        prompts.render_options(question, query, 5)?,
        prompts.render_query_extension(query, &history)?,
        prompts.render_api_recommendation("return an int stream from java.util.Random", 7)?,
    ];
    for p in rendered {
        println!("===== {} (inputs {})\n{}\n", p.unit, p.inputs_digest, p.text);
    }
    Ok(())
}
