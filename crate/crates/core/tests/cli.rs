use std::path::{Path, PathBuf};

use kgclarify::cli::{run, EXIT_BACKEND, EXIT_DATA, EXIT_USAGE};
use kgclarify::eval::{read_table_csv, EvalReport};
use kgclarify::path_store::{load_table, TableFormat};
use kgclarify::demo;

fn fixture(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel).to_string_lossy().into_owned()
}

fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("kgclarify").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let table_path = dir.path().join("table.csv");
    let baselines = dir.path().join("baselines.csv");
    std::fs::write(&baselines, "Dataset,Metrics,Approaches,Round 1,Round 2,Round 3\ncases,MRR,other,0.1,0.2,0.3\n").unwrap();

    let (code, _) = cli(&[
        "eval",
        "--dataset", &fixture("eval/cases.jsonl"),
        "--script", &fixture("eval/script.jsonl"),
        "--out", path(&report_path),
        "--table-csv", path(&table_path),
        "--baselines", path(&baselines),
    ]);
    assert_eq!(code, 0);
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.dataset, "cases");
    assert_eq!(report.rounds.len(), 3);
    assert!((report.rounds[0].mrr - 5.0 / 18.0).abs() < 1e-9);
    assert!((report.rounds[1].map - 17.0 / 27.0).abs() < 1e-9);
    assert!((report.rounds[2].precision - 0.75).abs() < 1e-9);

    let csv = std::fs::read_to_string(&table_path).unwrap();
    assert!(csv.starts_with("Dataset,Metrics,Approaches,Round 1,Round 2,Round 3\n"), "{csv}");
    let rows = read_table_csv(csv.as_bytes()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!((rows[0].metric.as_str(), rows[0].approach.as_str()), ("MRR", "full"));
    assert_eq!((rows[1].metric.as_str(), rows[1].approach.as_str()), ("MRR", "other"));
    assert_eq!(rows[1].values, [0.1, 0.2, 0.3]);
}

#[test]
fn eval_prints_report_with_variant_name() {
    let (code, out) = cli(&[
        "eval",
        "--dataset", &fixture("eval/cases.jsonl"),
        "--script", &fixture("eval/script.jsonl"),
        "--variant", "no-kps",
        "--rounds", "2",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["variant"], "no_kps");
    assert_eq!(report["policy"], "scripted");
    assert_eq!(report["rounds"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let (code, _) = cli(&["eval", "--dataset", path(&missing), "--script", &fixture("eval/script.jsonl")]);
    assert_eq!(code, EXIT_DATA);

    let (code, _) = cli(&["eval", "--dataset", &fixture("eval/cases.jsonl"), "--script", path(&missing)]);
    assert_eq!(code, EXIT_DATA);

    let (code, _) = cli(&["eval", "--dataset", &fixture("eval/cases.jsonl")]);
    assert_eq!(code, EXIT_USAGE, "scripted backend without a script");

    let (code, _) = cli(&["eval", "--dataset", &fixture("eval/cases.jsonl"), "--policy", "sometimes"]);
    assert_eq!(code, EXIT_USAGE);

    let (code, _) = cli(&[
        "eval",
        "--dataset", &fixture("eval/cases.jsonl"),
        "--backend", "remote",
        "--endpoint", "http://127.0.0.1:1/v1/chat/completions",
        "--max-retries", "0",
    ]);
    assert_eq!(code, EXIT_BACKEND);
}

#[test]
fn retrieve_lists_examples() {
    let (code, out) = cli(&["retrieve", "--table", &fixture("sample_table.jsonl"), "--query", demo::DEMO_QUERY, "--top-fraction", "1"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    assert!(lines[0].starts_with("1\taspect=event\tstage1=1.0000\tstage2=0.0000\tsource=(0,0)"), "{}", lines[0]);

    let (code, out) = cli(&[
        "retrieve",
        "--table", &fixture("sample_table.csv"),
        "--query", demo::DEMO_QUERY,
        "--prev-answer", "of int value",
        "--variant", "no-kps",
    ]);
    assert_eq!(code, 0);
    assert!(out.lines().all(|l| l.contains("stage2=-")), "{out}");
}

#[test]
fn retrieve_on_empty_sample_tables_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let (code, _) = cli(&["retrieve", "--table", path(&empty), "--query", "q"]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn import_table_converts_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("table.jsonl");
    let (code, out) = cli(&["import-table", "--csv", &fixture("sample_table.csv"), "--out", path(&out_path)]);
    assert_eq!(code, 0);
    assert!(out.contains("wrote 1 records"));
    let imported = load_table(&out_path, TableFormat::Jsonl).unwrap();
    assert_eq!(imported, demo::sample_table());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "query,round,aspect,cq,option,api\nq,1,colour,Q?,o,a.B\n").unwrap();
    let (code, _) = cli(&["import-table", "--csv", path(&bad), "--out", path(&out_path)]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn demo_prints_both_rounds() {
    let (code, out) = cli(&["demo"]);
    assert_eq!(code, 0);
    assert!(out.starts_with(&format!("Query: {}", demo::DEMO_QUERY)));
    assert!(out.contains("Round 1\n  aspect:   type\n  question: What type of generator is being used?"));
    assert!(out.contains("Round 2"));
    assert!(out.contains("  answer:   pseudorandom double values"));
    let round2 = &out[out.find("Round 2").unwrap()..];
    assert!(round2.contains("    1. java.util.Random.nextDouble\n"), "{round2}");
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(cli(&["retrieve", "--table", "t.jsonl"]).0, EXIT_USAGE);
    assert_eq!(cli(&["retrieve", "--table", &fixture("sample_table.jsonl"), "--query", "q", "--top-fraction", "0"]).0, EXIT_USAGE);
    assert_eq!(cli(&["--help"]).0, 0);
}
