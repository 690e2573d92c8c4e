//! Two-stage path retrieval: query similarity first, then similarity
//! between the previous answer and each path option.
//!
//! ```text
//! cargo run --example retrieve_paths
//! ```

use kgclarify::aspect::AspectKind;
use kgclarify::path_store::{PathRecord, PathRound, PathStore, NONE_ANSWER};
use kgclarify::retrieval::{find_examples, rank_records_by_query, score, PathfindingMode, RetrievalConfig};

fn record(query: &str, api: &str, rounds: &[(AspectKind, &str)]) -> PathRecord {
    PathRecord {
        query: query.into(),
        api: api.into(),
        rounds: rounds
            .iter()
            .map(|(aspect, option)| PathRound { aspect: *aspect, question: format!("Which {aspect}?"), option: option.to_string() })
            .collect(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use AspectKind::*;
    let store = PathStore::new(vec![
        record("return stream from generator in Java", "java.util.Random.ints", &[(Event, "return stream"), (Purpose, "of int value")]),
        record("generate random double", "java.util.Random.nextDouble", &[(Type, "double value"), (Status, "between zero and one")]),
        record("read lines from a file", "java.nio.file.Files.lines", &[(Event, "read lines"), (Type, "text file")]),
        record("stream of random numbers", "java.util.Random.doubles", &[(Type, "double value"), (Condition, "unbounded")]),
    ])?;
    let units = store.flatten();
    let query = "random number stream in Java";

    println!("records by query similarity:");
    for (record, s) in rank_records_by_query(&store, query)? {
        println!("  {s}  {}", record.query);
    }

    let cfg = RetrievalConfig { top_fraction: 0.5, ..RetrievalConfig::default() };
    for prev_answer in [NONE_ANSWER, "double value"] {
        for mode in [PathfindingMode::Full, PathfindingMode::NoKps] {
            let examples = find_examples(&units, query, prev_answer, &RetrievalConfig { mode, ..cfg })?;
            println!("\nprev_answer={prev_answer:?} mode={mode:?}");
            for e in examples {
                let stage2 = e.stage2_score.map_or("-".into(), |s| s.to_string());
                println!("  {:<9} stage1={} stage2={stage2:<6} {} | {}", e.aspect.as_str(), e.stage1_score, e.source_index, e.query);
            }
        }
    }

    println!("\nscore(\"return stream from generator\", \"return stream of pseudorandom double values\") = {}",
        score("return stream from generator", "return stream of pseudorandom double values"));
    Ok(())
}
