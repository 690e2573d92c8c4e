//! Load a CSV path table, inspect it, flatten it into retrieval units and
//! write it back out as JSONL.
//!
//! ```text
//! cargo run --example load_table [path/to/table.csv]
//! ```

use std::path::PathBuf;

use kgclarify::path_store::{load_table, TableFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample_table.csv"));
    let store = load_table(&path, TableFormat::from_path(&path))?;
    println!("{} record(s) from {}", store.len(), path.display());

    for record in store.records() {
        println!("\n{} -> {}", record.query, record.api);
        for (i, round) in record.rounds.iter().enumerate() {
            println!("  round {}: [{}] {} => {}", i + 1, round.aspect, round.question, round.option);
        }
    }

    println!("\nretrieval units:");
    for unit in store.flatten() {
        println!("  {} prev_answer={:?} aspect={} option={:?}", unit.source_index, unit.prev_answer, unit.aspect, unit.option);
    }

    println!("\nas JSONL:\n{}", store.to_jsonl_string());
    Ok(())
}
