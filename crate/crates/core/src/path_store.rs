//! The best-questioning-path table exported from the API knowledge graph.
//!
//! Each [`PathRecord`] is one recorded clarification route: the query it
//! starts from, the ordered rounds of (aspect, question, selected option),
//! and the API the route ends at. The canonical on-disk form is JSONL with
//! one record per line:
//!
//! ```text
//! {"query": "...", "api": "java.util.Random.ints", "rounds": [{"aspect": "event", "question": "...", "option": "..."}]}
//! ```
//!
//! A CSV import (`query,round,aspect,cq,option,api`, one row per round) is
//! accepted as well; rows are grouped into records by `(query, api)`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::AspectKind;

/// Literal previous-answer value used on the first round.
pub const NONE_ANSWER: &str = "None";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Jsonl,
    Csv,
}

impl TableFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Jsonl,
        }
    }
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(TableFormat::Jsonl),
            "csv" => Ok(TableFormat::Csv),
            other => Err(format!("unknown table format {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("reading path table: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {record}: {invariant}")]
    Validation {
        record: usize,
        invariant: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRound {
    pub aspect: AspectKind,
    pub question: String,
    pub option: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub query: String,
    pub api: String,
    pub rounds: Vec<PathRound>,
}

impl PathRecord {
    fn validate(&self, record: usize) -> Result<(), StoreError> {
        let fail = |invariant| Err(StoreError::Validation { record, invariant });
        if self.query.trim().is_empty() {
            return fail("query is non-empty");
        }
        if self.api.trim().is_empty() {
            return fail("api is non-empty");
        }
        if self.rounds.is_empty() {
            return fail("rounds is non-empty");
        }
        for round in &self.rounds {
            if round.question.trim().is_empty() {
                return fail("question is non-empty");
            }
            if round.option.trim().is_empty() {
                return fail("option is non-empty");
            }
        }
        if self.rounds.windows(2).any(|w| w[0].aspect == w[1].aspect) {
            return fail("consecutive rounds have distinct aspects");
        }
        Ok(())
    }
}

/// Position of a retrieval unit in its store: `(record index, round index)`,
/// both zero-based. Orders lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceIndex {
    pub record: usize,
    pub round: usize,
}

impl fmt::Display for SourceIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.record, self.round)
    }
}

/// One round of one record, flattened for similarity ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalUnit {
    pub query: String,
    pub prev_answer: String,
    pub aspect: AspectKind,
    pub question: String,
    pub option: String,
    pub api: String,
    pub source_index: SourceIndex,
}

/// Immutable, validated collection of path records in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathStore {
    records: Vec<PathRecord>,
}

impl PathStore {
    pub fn new(records: Vec<PathRecord>) -> Result<Self, StoreError> {
        for (i, r) in records.iter().enumerate() {
            r.validate(i)?;
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[PathRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn from_jsonl_reader(reader: impl Read) -> Result<Self, StoreError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PathRecord =
                serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        Self::new(records)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self, StoreError> {
        #[derive(Deserialize)]
        struct Row {
            query: String,
            round: String,
            aspect: String,
            cq: String,
            option: String,
            api: String,
        }

        // (query, api, [(round number, round)])
        type Group = (String, String, Vec<(usize, PathRound)>);
        let mut groups: Vec<Group> = Vec::new();
        let mut index: HashMap<(String, String), usize> = HashMap::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            // header is line 1
            let line = i + 2;
            let parse_err = |message: String| StoreError::Parse { line, message };
            let row = row.map_err(|e| parse_err(e.to_string()))?;
            let round: usize = row
                .round
                .parse()
                .ok()
                .filter(|r| *r >= 1)
                .ok_or_else(|| parse_err(format!("round {:?} is not a 1-based integer", row.round)))?;
            let aspect: AspectKind = row.aspect.parse().map_err(|e| parse_err(format!("{e}")))?;
            let key = (row.query.clone(), row.api.clone());
            let slot = *index.entry(key).or_insert_with(|| {
                groups.push((row.query.clone(), row.api.clone(), Vec::new()));
                groups.len() - 1
            });
            groups[slot].2.push((
                round,
                PathRound {
                    aspect,
                    question: row.cq,
                    option: row.option,
                },
            ));
        }

        let mut records = Vec::with_capacity(groups.len());
        for (record, (query, api, mut rounds)) in groups.into_iter().enumerate() {
            rounds.sort_by_key(|(n, _)| *n);
            if rounds.iter().enumerate().any(|(k, (n, _))| *n != k + 1) {
                return Err(StoreError::Validation {
                    record,
                    invariant: "round numbers run 1..n without gaps or repeats",
                });
            }
            records.push(PathRecord {
                query,
                api,
                rounds: rounds.into_iter().map(|(_, r)| r).collect(),
            });
        }
        Self::new(records)
    }

    /// Writes the canonical JSONL form.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// One unit per (record, round), ordered by record then round.
    pub fn flatten(&self) -> Vec<RetrievalUnit> {
        let mut units = Vec::with_capacity(self.records.iter().map(|r| r.rounds.len()).sum());
        for (ri, record) in self.records.iter().enumerate() {
            for (k, round) in record.rounds.iter().enumerate() {
                let prev_answer = if k == 0 {
                    NONE_ANSWER.to_string()
                } else {
                    record.rounds[k - 1].option.clone()
                };
                units.push(RetrievalUnit {
                    query: record.query.clone(),
                    prev_answer,
                    aspect: round.aspect,
                    question: round.question.clone(),
                    option: round.option.clone(),
                    api: record.api.clone(),
                    source_index: SourceIndex { record: ri, round: k },
                });
            }
        }
        units
    }
}

/// Loads and validates a path table from disk.
pub fn load_table(path: impl AsRef<Path>, format: TableFormat) -> Result<PathStore, StoreError> {
    let file = std::fs::File::open(path)?;
    match format {
        TableFormat::Jsonl => PathStore::from_jsonl_reader(file),
        TableFormat::Csv => PathStore::from_csv_reader(file),
    }
}

pub fn flatten(store: &PathStore) -> Vec<RetrievalUnit> {
    store.flatten()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE_TABLE_CSV: &str = "\
query,round,aspect,cq,option,api
return stream from generator in Java,1,event,What do you what to do?,return stream,java.util.Random.ints
return stream from generator in Java,2,purpose,Which one are you interested in return stream?,of int value,java.util.Random.ints
return stream from generator in Java,3,status,Which one is the status of stream?,producing the given streamsize number of pseudorandom int value,java.util.Random.ints
";

    fn rec(query: &str, api: &str, rounds: &[(AspectKind, &str)]) -> PathRecord {
        PathRecord {
            query: query.into(),
            api: api.into(),
            rounds: rounds
                .iter()
                .map(|(a, o)| PathRound {
                    aspect: *a,
                    question: format!("q about {a}?"),
                    option: (*o).into(),
                })
                .collect(),
        }
    }

    #[test]
    fn sample_table_csv_loads_as_one_record() {
        let store = PathStore::from_csv_reader(SAMPLE_TABLE_CSV.as_bytes()).unwrap();
        assert_eq!(store.len(), 1);
        let r = &store.records()[0];
        assert_eq!(r.api, "java.util.Random.ints");
        assert_eq!(r.rounds.len(), 3);
        assert_eq!(
            r.rounds.iter().map(|r| r.aspect).collect::<Vec<_>>(),
            vec![AspectKind::Event, AspectKind::Purpose, AspectKind::Status]
        );
    }

    #[test]
    fn csv_rows_out_of_order_are_sorted_by_round() {
        let mut lines: Vec<&str> = SAMPLE_TABLE_CSV.lines().collect();
        lines.swap(1, 3);
        let store = PathStore::from_csv_reader(lines.join("\n").as_bytes()).unwrap();
        assert_eq!(store.records()[0].rounds[0].option, "return stream");
    }

    #[test]
    fn csv_round_gap_is_rejected() {
        let text = "query,round,aspect,cq,option,api\nq,1,event,Q?,a,x.y\nq,3,type,Q?,b,x.y\n";
        let err = PathStore::from_csv_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::Validation { record: 0, .. }));
    }

    #[test]
    fn csv_bad_aspect_reports_line() {
        let text = "query,round,aspect,cq,option,api\nq,1,event,Q?,a,x.y\nq,2,colour,Q?,b,x.y\n";
        match PathStore::from_csv_reader(text.as_bytes()).unwrap_err() {
            StoreError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_gives_empty_store() {
        assert!(PathStore::from_jsonl_reader(&b""[..]).unwrap().is_empty());
        assert!(PathStore::from_csv_reader(&b"query,round,aspect,cq,option,api\n"[..])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn blank_api_fails_validation() {
        let text = "query,round,aspect,cq,option,api\nq,1,event,Q?,a,\n";
        match PathStore::from_csv_reader(text.as_bytes()).unwrap_err() {
            StoreError::Validation { record, invariant } => {
                assert_eq!(record, 0);
                assert_eq!(invariant, "api is non-empty");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let good = r#"{"query":"q","api":"a.b","rounds":[{"aspect":"event","question":"Q?","option":"o"}]}"#;
        let text = format!("{good}\n\n{{not json}}\n");
        match PathStore::from_jsonl_reader(text.as_bytes()).unwrap_err() {
            StoreError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn repeated_aspect_in_a_row_is_rejected() {
        let r = rec("q", "a.b", &[(AspectKind::Type, "x"), (AspectKind::Type, "y")]);
        let err = PathStore::new(vec![r]).unwrap_err();
        assert!(matches!(
            err,
            StoreError::Validation { invariant: "consecutive rounds have distinct aspects", .. }
        ));
        // non-adjacent repeats are fine
        let ok = rec(
            "q",
            "a.b",
            &[(AspectKind::Type, "x"), (AspectKind::Event, "y"), (AspectKind::Type, "z")],
        );
        assert!(PathStore::new(vec![ok]).is_ok());
    }

    #[test]
    fn blank_question_or_option_rejected() {
        let mut r = rec("q", "a.b", &[(AspectKind::Type, "x")]);
        r.rounds[0].option = "  ".into();
        assert!(PathStore::new(vec![r.clone()]).is_err());
        r.rounds[0].option = "x".into();
        r.rounds[0].question = "".into();
        assert!(PathStore::new(vec![r]).is_err());
    }

    #[test]
    fn duplicates_are_kept() {
        let r = rec("q", "a.b", &[(AspectKind::Type, "x")]);
        let store = PathStore::new(vec![r.clone(), r]).unwrap();
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn flatten_sample_table_chains_prev_answers() {
        let store = PathStore::from_csv_reader(SAMPLE_TABLE_CSV.as_bytes()).unwrap();
        let units = store.flatten();
        let prev: Vec<_> = units.iter().map(|u| u.prev_answer.as_str()).collect();
        assert_eq!(prev, vec!["None", "return stream", "of int value"]);
    }

    #[test]
    fn flatten_two_by_two_has_distinct_sources() {
        let store = PathStore::new(vec![
            rec("a", "x.y", &[(AspectKind::Event, "1"), (AspectKind::Type, "2")]),
            rec("b", "x.z", &[(AspectKind::Purpose, "3"), (AspectKind::Status, "4")]),
        ])
        .unwrap();
        let units = store.flatten();
        assert_eq!(units.len(), 4);
        let mut idx: Vec<_> = units.iter().map(|u| u.source_index).collect();
        idx.dedup();
        assert_eq!(idx.len(), 4);
        assert!(units.windows(2).all(|w| w[0].source_index < w[1].source_index));
        assert!(PathStore::default().flatten().is_empty());
    }

    #[test]
    fn jsonl_round_trip_matches_csv_import() {
        let store = PathStore::from_csv_reader(SAMPLE_TABLE_CSV.as_bytes()).unwrap();
        let text = store.to_jsonl_string();
        let back = PathStore::from_jsonl_reader(text.as_bytes()).unwrap();
        assert_eq!(store, back);
    }
}
