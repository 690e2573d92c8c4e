//! Evaluation of clarification sessions with MRR, MAP, precision and recall.
//!
//! A dataset is a JSONL file of [`EvalCase`]s. [`run_eval`] drives one
//! session per case for a fixed number of rounds, answering each question
//! either from the case's stored answers or with a lexical oracle, and
//! scores the recommendation list produced after every round.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::is_qualified_name;
use crate::retrieval::score;
use crate::session::{Engine, SessionConfig, SessionError};
use crate::variant::Variant;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no cases to evaluate")]
    EmptyCases,
    #[error("ranked list of case {0} is empty")]
    EmptyRanked(usize),
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("case {case}: {message}")]
    PolicyDataMissing { case: usize, message: String },
    #[error("case {case}: {message}")]
    InvalidCase { case: usize, message: String },
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("reading dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn normalized_truth(truth: &[String]) -> HashSet<&str> {
    truth.iter().map(|t| t.trim()).collect()
}

/// Reciprocal rank of the first ground-truth item, 0 when none is present.
pub fn reciprocal_rank(ranked: &[String], truth: &[String]) -> f64 {
    let truth = normalized_truth(truth);
    ranked
        .iter()
        .position(|r| truth.contains(r.trim()))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// Mean reciprocal rank over `(ranked list, ground truth)` cases.
pub fn mrr(cases: &[(Vec<String>, Vec<String>)]) -> Result<f64, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyCases);
    }
    let mut total = 0.0;
    for (i, (ranked, truth)) in cases.iter().enumerate() {
        if ranked.is_empty() {
            return Err(EvalError::EmptyRanked(i));
        }
        total += reciprocal_rank(ranked, truth);
    }
    Ok(total / cases.len() as f64)
}

/// Sum over hit positions k of (hits so far)/k, divided by |truth|. A repeated
/// item only counts at its first position.
pub fn average_precision(ranked: &[String], truth: &[String]) -> Result<f64, EvalError> {
    let truth = normalized_truth(truth);
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let mut found = HashSet::new();
    let mut sum = 0.0;
    for (k, item) in ranked.iter().enumerate() {
        let item = item.trim();
        if truth.contains(item) && found.insert(item) {
            sum += found.len() as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / truth.len() as f64)
}

/// `(|ranked ∩ truth| / |ranked|, |ranked ∩ truth| / |truth|)` with exact
/// matching after trimming.
pub fn precision_recall(ranked: &[String], truth: &[String]) -> Result<(f64, f64), EvalError> {
    if ranked.is_empty() {
        return Err(EvalError::EmptyRanked(0));
    }
    let truth = normalized_truth(truth);
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let hits: HashSet<&str> = ranked
        .iter()
        .map(|r| r.trim())
        .filter(|r| truth.contains(r))
        .collect();
    Ok((
        hits.len() as f64 / ranked.len() as f64,
        hits.len() as f64 / truth.len() as f64,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub query: String,
    pub ground_truth_apis: Vec<String>,
    #[serde(default)]
    pub answers: Option<Vec<String>>,
    #[serde(default)]
    pub truth_description: Option<String>,
}

pub fn load_dataset_reader(reader: impl Read) -> Result<Vec<EvalCase>, EvalError> {
    let mut cases = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: EvalCase = serde_json::from_str(&line)
            .map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() })?;
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalCase>, EvalError> {
    load_dataset_reader(std::fs::File::open(path)?)
}

/// How simulated users answer clarification questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerPolicy {
    /// Replay `answers[r - 1]` in round r.
    Scripted,
    /// Pick the offered option most similar to `truth_description`; ties go
    /// to the higher-ranked option.
    Oracle,
}

impl FromStr for AnswerPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scripted" => Ok(AnswerPolicy::Scripted),
            "oracle" => Ok(AnswerPolicy::Oracle),
            other => Err(format!("unknown answer policy {other:?}")),
        }
    }
}

/// Option the oracle policy picks: highest similarity to `description`,
/// earliest option on ties.
pub fn oracle_answer<'a>(options: &'a [String], description: &str) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for o in options {
        let s = score(o, description).value();
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((o, s));
        }
    }
    best.map(|(o, _)| o)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub mrr: f64,
    pub map: f64,
    pub precision: f64,
    pub recall: f64,
    /// Cases that produced a recommendation list in this round.
    pub n_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRound {
    pub round: usize,
    pub answer: String,
    pub ranked: Vec<String>,
    pub reciprocal_rank: f64,
    pub average_precision: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub index: usize,
    pub query: String,
    pub ground_truth_apis: Vec<String>,
    pub rounds: Vec<CaseRound>,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: Variant,
    pub policy: AnswerPolicy,
    pub rounds: Vec<RoundMetrics>,
    pub failed_cases: usize,
    pub cases: Vec<CaseReport>,
}

impl EvalReport {
    pub fn write_json(&self, out: impl Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(out, self)
    }
}

fn validate(dataset: &[EvalCase], policy: AnswerPolicy, rounds: usize) -> Result<(), EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if rounds == 0 {
        return Err(EvalError::NoRounds);
    }
    for (case, c) in dataset.iter().enumerate() {
        if c.ground_truth_apis.is_empty() {
            return Err(EvalError::InvalidCase { case, message: "ground_truth_apis is empty".into() });
        }
        if let Some(bad) = c.ground_truth_apis.iter().find(|a| !is_qualified_name(a.trim())) {
            return Err(EvalError::InvalidCase {
                case,
                message: format!("{bad:?} is not a qualified API name"),
            });
        }
        match policy {
            AnswerPolicy::Scripted => {
                let have = c.answers.as_ref().map_or(0, Vec::len);
                if have < rounds {
                    return Err(EvalError::PolicyDataMissing {
                        case,
                        message: format!("scripted policy needs {rounds} answers, found {have}"),
                    });
                }
            }
            AnswerPolicy::Oracle => {
                if c.truth_description.as_deref().is_none_or(|d| d.trim().is_empty()) {
                    return Err(EvalError::PolicyDataMissing {
                        case,
                        message: "oracle policy needs truth_description".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn run_case(
    engine: &Engine,
    index: usize,
    case: &EvalCase,
    variant: Variant,
    policy: AnswerPolicy,
    cfg: SessionConfig,
) -> CaseReport {
    let mut report = CaseReport {
        index,
        query: case.query.clone(),
        ground_truth_apis: case.ground_truth_apis.clone(),
        rounds: Vec::new(),
        failed: false,
        error: None,
    };
    let outcome = (|| -> Result<(), EvalError> {
        let mut session = engine.start_session(&case.query, variant, cfg)?;
        for round in 1..=cfg.max_rounds {
            let asked = engine.next_question(&mut session)?;
            let answer = match policy {
                AnswerPolicy::Scripted => case.answers.as_ref().expect("validated")[round - 1].clone(),
                AnswerPolicy::Oracle => oracle_answer(
                    asked.options.as_slice(),
                    case.truth_description.as_deref().expect("validated"),
                )
                .expect("parsed options are non-empty")
                .to_string(),
            };
            let out = engine.submit_answer(&mut session, &answer)?;
            let ranked = out.recommendations.into_vec();
            let (precision, recall) = precision_recall(&ranked, &case.ground_truth_apis)?;
            report.rounds.push(CaseRound {
                round,
                answer,
                reciprocal_rank: reciprocal_rank(&ranked, &case.ground_truth_apis),
                average_precision: average_precision(&ranked, &case.ground_truth_apis)?,
                precision,
                recall,
                ranked,
            });
        }
        engine.end_session(&mut session);
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("case {index} failed: {e}");
        report.failed = true;
        report.error = Some(e.to_string());
    }
    report
}

/// Aggregates per-case rows into per-round means. Round r only uses the
/// rows recorded for round r; failed cases are left out entirely.
pub fn aggregate(cases: &[CaseReport], rounds: usize) -> Vec<RoundMetrics> {
    (1..=rounds)
        .map(|round| {
            let rows: Vec<&CaseRound> = cases
                .iter()
                .filter(|c| !c.failed)
                .filter_map(|c| c.rounds.iter().find(|r| r.round == round))
                .collect();
            let n = rows.len();
            let mean = |f: fn(&CaseRound) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            RoundMetrics {
                round,
                mrr: mean(|r| r.reciprocal_rank),
                map: mean(|r| r.average_precision),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                n_cases: n,
            }
        })
        .collect()
}

/// Runs every case for `rounds` rounds and scores each round's
/// recommendations. Cases are evaluated in dataset order; a case whose
/// session fails keeps its completed rounds in the case rows, is left out
/// of the means and is counted in `failed_cases`.
pub fn run_eval(
    engine: &Engine,
    dataset_id: &str,
    dataset: &[EvalCase],
    variant: Variant,
    policy: AnswerPolicy,
    rounds: usize,
    cfg: SessionConfig,
) -> Result<EvalReport, EvalError> {
    validate(dataset, policy, rounds)?;
    let cfg = SessionConfig { max_rounds: rounds, ..cfg };
    cfg.validate()?;
    let cases: Vec<CaseReport> = dataset
        .iter()
        .enumerate()
        .map(|(i, c)| run_case(engine, i, c, variant, policy, cfg))
        .collect();
    Ok(EvalReport {
        dataset: dataset_id.to_string(),
        variant,
        policy,
        rounds: aggregate(&cases, rounds),
        failed_cases: cases.iter().filter(|c| c.failed).count(),
        cases,
    })
}

/// One row of a results table: a metric for one approach on one dataset,
/// with a value per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub metric: String,
    pub approach: String,
    pub values: Vec<f64>,
}

pub const METRIC_NAMES: [&str; 4] = ["MRR", "MAP", "Precision", "Recall"];

impl EvalReport {
    pub fn table_rows(&self) -> Vec<TableRow> {
        METRIC_NAMES
            .iter()
            .map(|metric| TableRow {
                dataset: self.dataset.clone(),
                metric: metric.to_string(),
                approach: self.variant.as_str().to_string(),
                values: self
                    .rounds
                    .iter()
                    .map(|r| match *metric {
                        "MRR" => r.mrr,
                        "MAP" => r.map,
                        "Precision" => r.precision,
                        _ => r.recall,
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Reads externally supplied rows in the same CSV layout written by
/// [`write_table_csv`].
pub fn read_table_csv(reader: impl Read) -> Result<Vec<TableRow>, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(3)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push(TableRow {
            dataset: rec.get(0).unwrap_or_default().to_string(),
            metric: rec.get(1).unwrap_or_default().to_string(),
            approach: rec.get(2).unwrap_or_default().to_string(),
            values,
        });
    }
    Ok(rows)
}

/// Writes `Dataset,Metrics,Approaches,Round 1..Round n`, grouped by dataset
/// then metric, our rows before any baseline rows for the same cell.
pub fn write_table_csv(
    reports: &[EvalReport],
    baselines: &[TableRow],
    out: impl Write,
) -> Result<(), csv::Error> {
    let mut rows: Vec<TableRow> = reports.iter().flat_map(EvalReport::table_rows).collect();
    rows.extend(baselines.iter().cloned());
    let mut datasets: Vec<&str> = Vec::new();
    for r in &rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let metric_pos = |m: &str| METRIC_NAMES.iter().position(|n| n.eq_ignore_ascii_case(m)).unwrap_or(4);
    let mut ordered: Vec<&TableRow> = rows.iter().collect();
    // stable: keeps report rows ahead of baselines within a cell
    ordered.sort_by_key(|r| {
        (datasets.iter().position(|d| *d == r.dataset).unwrap_or(0), metric_pos(&r.metric))
    });

    let width = rows.iter().map(|r| r.values.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Dataset".to_string(), "Metrics".to_string(), "Approaches".to_string()];
    header.extend((1..=width).map(|i| format!("Round {i}")));
    w.write_record(&header)?;
    for r in ordered {
        let mut rec = vec![r.dataset.clone(), r.metric.clone(), r.approach.clone()];
        rec.extend((0..width).map(|i| r.values.get(i).map_or(String::new(), |v| format!("{v:.3}"))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
