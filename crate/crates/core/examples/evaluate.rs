//! Evaluate the bundled three-case dataset with a scripted backend and
//! print per-round metrics and a results table.
//!
//! ```text
//! cargo run --example evaluate
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use kgclarify::demo;
use kgclarify::eval::{load_dataset, run_eval, write_table_csv, AnswerPolicy};
use kgclarify::llm::ScriptedBackend;
use kgclarify::prompt::PromptEngine;
use kgclarify::session::{Engine, SessionConfig};
use kgclarify::variant::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/eval");
    let dataset = load_dataset(dir.join("cases.jsonl"))?;

    let mut reports = Vec::new();
    for policy in [AnswerPolicy::Scripted, AnswerPolicy::Oracle] {
        // the script is consumed as the run goes, so each run gets a fresh one
        let backend = ScriptedBackend::load(dir.join("script.jsonl"))?;
        let engine = Engine::new(&demo::sample_table(), PromptEngine::bundled(), Arc::new(backend));
        let report = run_eval(&engine, "fixture", &dataset, Variant::Full, policy, 3, SessionConfig::default())?;

        println!("policy {policy:?}: {} case(s), {} failed", report.cases.len(), report.failed_cases);
        println!("  round   MRR     MAP     P       R");
        for m in &report.rounds {
            println!("  {}       {:.4}  {:.4}  {:.4}  {:.4}", m.round, m.mrr, m.map, m.precision, m.recall);
        }
        reports.push(report);
    }

    println!();
    write_table_csv(&reports[..1], &[], std::io::stdout())?;
    Ok(())
}
