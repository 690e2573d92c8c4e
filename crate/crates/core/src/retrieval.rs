//! Knowledge-guided pathfinding over the flattened path table.
//!
//! Retrieval runs in two stages. Stage 1 scores every unit's query against
//! the user's query and keeps the top fraction. Stage 2 re-ranks the kept
//! units by how similar their selected option is to the user's previous
//! answer. The ranked list is then walked once, taking at most one example
//! per aspect.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::AspectKind;
use crate::path_store::{PathRecord, PathStore, RetrievalUnit, SourceIndex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("retrieval needs at least one path unit")]
    EmptyUnits,
    #[error("path store is empty")]
    EmptyStore,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(&'static str),
}

/// Cosine similarity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);

    pub fn new(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    fn cmp_desc(self, other: Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

impl fmt::Display for SimilarityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Whether the second (previous-answer) stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathfindingMode {
    #[default]
    Full,
    NoKps,
}

impl FromStr for PathfindingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(PathfindingMode::Full),
            "no_kps" => Ok(PathfindingMode::NoKps),
            other => Err(format!("unknown pathfinding mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_fraction: f64,
    pub max_examples: usize,
    pub mode: PathfindingMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_fraction: 0.10,
            max_examples: 5,
            mode: PathfindingMode::Full,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(RetrievalError::InvalidConfig("top_fraction must be in (0, 1]"));
        }
        if self.max_examples == 0 {
            return Err(RetrievalError::InvalidConfig("max_examples must be at least 1"));
        }
        Ok(())
    }

    /// Number of units stage 1 keeps out of `n`: `ceil(top_fraction * n)`,
    /// at least one and at most `n`.
    pub fn stage1_keep(&self, n: usize) -> usize {
        // 0.1 * 30 is 3.0000000000000004 in f64; shave the rounding noise
        // before taking the ceiling.
        let raw = self.top_fraction * n as f64;
        let kept = (raw - 1e-9).ceil().max(1.0) as usize;
        kept.min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathExample {
    pub query: String,
    pub prev_answer: String,
    pub aspect: AspectKind,
    pub stage1_score: SimilarityScore,
    /// `None` when stage 2 was skipped.
    pub stage2_score: Option<SimilarityScore>,
    pub source_index: SourceIndex,
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn term_frequencies(text: &str) -> HashMap<String, u32> {
    let mut tf = HashMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_insert(0) += 1;
    }
    tf
}

fn cosine(a: &HashMap<String, u32>, b: &HashMap<String, u32>) -> SimilarityScore {
    if a.is_empty() || b.is_empty() {
        return SimilarityScore::ZERO;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: u64 = small
        .iter()
        .filter_map(|(t, x)| large.get(t).map(|y| u64::from(*x) * u64::from(*y)))
        .sum();
    let norm = |v: &HashMap<String, u32>| v.values().map(|x| u64::from(*x).pow(2)).sum::<u64>();
    // sqrt of the product keeps identical inputs at exactly 1.0
    let denom = ((norm(a) as f64) * (norm(b) as f64)).sqrt();
    SimilarityScore::new(dot as f64 / denom)
}

/// Term-frequency cosine similarity over [`tokenize`]d text.
pub fn score(a: &str, b: &str) -> SimilarityScore {
    cosine(&term_frequencies(a), &term_frequencies(b))
}

/// Retrieves up to `cfg.max_examples` path examples with pairwise distinct
/// aspects for the given query and previous answer.
pub fn find_examples(
    units: &[RetrievalUnit],
    query: &str,
    prev_answer: &str,
    cfg: &RetrievalConfig,
) -> Result<Vec<PathExample>, RetrievalError> {
    if units.is_empty() {
        return Err(RetrievalError::EmptyUnits);
    }
    cfg.validate()?;

    let query_tf = term_frequencies(query);
    let mut ranked: Vec<(&RetrievalUnit, SimilarityScore, Option<SimilarityScore>)> = units
        .iter()
        .map(|u| (u, cosine(&query_tf, &term_frequencies(&u.query)), None))
        .collect();
    ranked.sort_by(|x, y| {
        x.1.cmp_desc(y.1)
            .then_with(|| x.0.source_index.cmp(&y.0.source_index))
    });
    ranked.truncate(cfg.stage1_keep(units.len()));

    if cfg.mode == PathfindingMode::Full {
        let answer_tf = term_frequencies(prev_answer);
        for entry in &mut ranked {
            entry.2 = Some(cosine(&answer_tf, &term_frequencies(&entry.0.option)));
        }
        ranked.sort_by(|x, y| {
            x.2.unwrap_or_default()
                .cmp_desc(y.2.unwrap_or_default())
                .then_with(|| x.1.cmp_desc(y.1))
                .then_with(|| x.0.source_index.cmp(&y.0.source_index))
        });
    }

    let mut seen = [false; 5];
    let mut out = Vec::with_capacity(cfg.max_examples);
    for (unit, s1, s2) in ranked {
        if out.len() == cfg.max_examples {
            break;
        }
        let slot = &mut seen[unit.aspect as usize];
        if *slot {
            continue;
        }
        *slot = true;
        out.push(PathExample {
            query: unit.query.clone(),
            prev_answer: unit.prev_answer.clone(),
            aspect: unit.aspect,
            stage1_score: s1,
            stage2_score: s2,
            source_index: unit.source_index,
        });
    }
    Ok(out)
}

/// Record-level view of stage 1: every record ranked by query similarity,
/// ties in file order.
pub fn rank_records_by_query<'a>(
    store: &'a PathStore,
    query: &str,
) -> Result<Vec<(&'a PathRecord, SimilarityScore)>, RetrievalError> {
    if store.is_empty() {
        return Err(RetrievalError::EmptyStore);
    }
    let query_tf = term_frequencies(query);
    let mut ranked: Vec<_> = store
        .records()
        .iter()
        .map(|r| (r, cosine(&query_tf, &term_frequencies(&r.query))))
        .collect();
    // stable sort keeps file order on ties
    ranked.sort_by(|x, y| x.1.cmp_desc(y.1));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_store::{PathRound, NONE_ANSWER};

    fn unit(i: usize, query: &str, aspect: AspectKind, option: &str) -> RetrievalUnit {
        RetrievalUnit {
            query: query.into(),
            prev_answer: NONE_ANSWER.into(),
            aspect,
            question: "Q?".into(),
            option: option.into(),
            api: "a.b".into(),
            source_index: SourceIndex { record: i, round: 0 },
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("return stream from generator in Java."),
            vec!["return", "stream", "from", "generator", "in", "java"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("java.util.Random.ints"), vec!["java", "util", "random", "ints"]);
        assert_eq!(tokenize("  --a__B  "), vec!["a", "b"]);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score("return stream", "return stream").value(), 1.0);
        assert_eq!(score("alpha beta", "gamma delta").value(), 0.0);
        assert_eq!(score("", "anything").value(), 0.0);
        assert_eq!(score("...", "...").value(), 0.0);
        let s = score(
            "return stream from generator",
            "return stream of pseudorandom double values",
        );
        assert!((s.value() - 0.408_248_290_463_863).abs() < 1e-12);
    }

    #[test]
    fn repeated_terms_weigh_in() {
        // [2,0]·[1,1] / (2 * sqrt 2)
        let s = score("a a", "a b").value();
        assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stage1_keep_rounding() {
        let cfg = RetrievalConfig::default();
        assert_eq!(cfg.stage1_keep(30), 3);
        assert_eq!(cfg.stage1_keep(31), 4);
        assert_eq!(cfg.stage1_keep(3), 1);
        assert_eq!(cfg.stage1_keep(1), 1);
        assert_eq!(cfg.stage1_keep(6000), 600);
        let all = RetrievalConfig { top_fraction: 1.0, ..cfg };
        assert_eq!(all.stage1_keep(7), 7);
    }

    #[test]
    fn stage1_keeps_three_of_thirty() {
        let units: Vec<_> = (0..30)
            .map(|i| unit(i, &format!("q{i}"), AspectKind::ALL[i % 5], "o"))
            .collect();
        let out = find_examples(&units, "q7", NONE_ANSWER, &RetrievalConfig::default()).unwrap();
        // 3 kept units, all different aspects given i % 5 on the tie order
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].source_index.record, 7);
    }

    #[test]
    fn duplicate_aspect_dropped() {
        let aspects = [AspectKind::Purpose, AspectKind::Purpose, AspectKind::Type, AspectKind::Status];
        let units: Vec<_> = aspects
            .iter()
            .enumerate()
            .map(|(i, a)| unit(i, "same", *a, "same"))
            .collect();
        let cfg = RetrievalConfig { top_fraction: 1.0, ..Default::default() };
        let out = find_examples(&units, "same", "same", &cfg).unwrap();
        let got: Vec<_> = out.iter().map(|e| e.aspect).collect();
        assert_eq!(got, vec![AspectKind::Purpose, AspectKind::Type, AspectKind::Status]);
        assert_eq!(out[0].source_index.record, 0);
    }

    #[test]
    fn sample_table_exact_query_scores_one() {
        let store = PathStore::new(vec![PathRecord {
            query: "return stream from generator in Java".into(),
            api: "java.util.Random.ints".into(),
            rounds: vec![
                PathRound { aspect: AspectKind::Event, question: "What do you what to do?".into(), option: "return stream".into() },
                PathRound { aspect: AspectKind::Purpose, question: "Which one are you interested in return stream?".into(), option: "of int value".into() },
                PathRound { aspect: AspectKind::Status, question: "Which one is the status of stream?".into(), option: "producing the given streamsize number of pseudorandom int value".into() },
            ],
        }])
        .unwrap();
        let cfg = RetrievalConfig { top_fraction: 1.0, ..Default::default() };
        let out = find_examples(&store.flatten(), "return stream from generator in Java", NONE_ANSWER, &cfg)
            .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].stage1_score.value(), 1.0);
        // "None" matches no option, so stage-1 order survives
        assert_eq!(out[0].aspect, AspectKind::Event);
    }

    #[test]
    fn stage2_reorders_by_previous_answer() {
        let units = vec![
            unit(0, "read file", AspectKind::Event, "open stream"),
            unit(1, "read file", AspectKind::Type, "text lines"),
        ];
        let cfg = RetrievalConfig { top_fraction: 1.0, ..Default::default() };
        let full = find_examples(&units, "read file", "text lines", &cfg).unwrap();
        assert_eq!(full[0].aspect, AspectKind::Type);
        let no_kps = RetrievalConfig { mode: PathfindingMode::NoKps, ..cfg };
        let plain = find_examples(&units, "read file", "text lines", &no_kps).unwrap();
        assert_eq!(plain[0].aspect, AspectKind::Event);
        assert!(plain.iter().all(|e| e.stage2_score.is_none()));
    }

    #[test]
    fn errors() {
        assert_eq!(
            find_examples(&[], "q", NONE_ANSWER, &RetrievalConfig::default()),
            Err(RetrievalError::EmptyUnits)
        );
        let units = vec![unit(0, "q", AspectKind::Event, "o")];
        let bad = RetrievalConfig { top_fraction: 0.0, ..Default::default() };
        assert!(find_examples(&units, "q", NONE_ANSWER, &bad).is_err());
        let bad = RetrievalConfig { max_examples: 0, ..Default::default() };
        assert!(find_examples(&units, "q", NONE_ANSWER, &bad).is_err());
        assert_eq!(
            rank_records_by_query(&PathStore::default(), "q").unwrap_err(),
            RetrievalError::EmptyStore
        );
    }

    fn one_round(query: &str) -> PathRecord {
        PathRecord {
            query: query.into(),
            api: "a.b".into(),
            rounds: vec![PathRound { aspect: AspectKind::Event, question: "Q?".into(), option: "o".into() }],
        }
    }

    #[test]
    fn rank_records() {
        let single = PathStore::new(vec![one_round("unrelated words")]).unwrap();
        let r = rank_records_by_query(&single, "query").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].1.value(), 0.0);

        let store = PathStore::new(vec![
            one_round("alpha beta"),
            one_round("return stream of pseudorandom double values"),
            one_round("return stream from generator"),
        ])
        .unwrap();
        let r = rank_records_by_query(&store, "return stream from generator").unwrap();
        assert_eq!(r[0].0.query, "return stream from generator");
        assert_eq!(r[0].1.value(), 1.0);
        assert!((r[1].1.value() - 2.0 / (2.0 * 6f64.sqrt())).abs() < 1e-9);
        assert_eq!(r[2].1.value(), 0.0);
    }
}
