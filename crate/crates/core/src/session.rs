//! The clarification chain and its multi-round session state.
//!
//! A round runs in two halves. [`Engine::next_question`] retrieves path
//! examples, asks the backend for the best aspect, a clarification question
//! and candidate options. [`Engine::submit_answer`] records the user's
//! answer (any free text, not only an offered option), extends the query
//! over the whole Q&A history and asks for ranked API recommendations.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::AspectKind;
use crate::llm::{
    parse_apis, parse_aspect, parse_options, Backend, GatewayError, ParseError, ParsedApis,
    ParsedOptions,
};
use crate::path_store::{PathStore, RetrievalUnit, NONE_ANSWER};
use crate::prompt::{PromptEngine, PromptError};
use crate::retrieval::{find_examples, PathExample, RetrievalConfig, RetrievalError};
use crate::variant::Variant;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("answer must not be empty")]
    EmptyAnswer,
    #[error("a clarification question is already waiting for an answer")]
    PendingQuestion,
    #[error("there is no clarification question waiting for an answer")]
    NoPendingQuestion,
    #[error("session reached its limit of {0} rounds")]
    RoundLimit(usize),
    #[error("session is closed")]
    Closed,
    #[error("invalid session config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl SessionError {
    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            SessionError::EmptyQuery => "empty-query",
            SessionError::EmptyAnswer => "empty-answer",
            SessionError::PendingQuestion => "pending-question",
            SessionError::NoPendingQuestion => "no-pending-question",
            SessionError::RoundLimit(_) => "round-limit",
            SessionError::Closed => "session-closed",
            SessionError::InvalidConfig(_) => "invalid-config",
            SessionError::Retrieval(_) => "retrieval",
            SessionError::Prompt(_) => "prompt",
            SessionError::Gateway(e) => e.kind(),
            SessionError::Parse(e) => e.kind(),
        }
    }

    /// True when the error came from the LLM backend or its output.
    pub fn is_backend(&self) -> bool {
        matches!(self, SessionError::Gateway(_) | SessionError::Parse(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub retrieval: RetrievalConfig,
    pub n_options: usize,
    pub n_apis: usize,
    pub max_rounds: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            n_options: 5,
            n_apis: 7,
            max_rounds: 3,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        self.retrieval.validate()?;
        if self.n_options == 0 {
            return Err(SessionError::InvalidConfig("n_options must be at least 1"));
        }
        if self.n_apis == 0 {
            return Err(SessionError::InvalidConfig("n_apis must be at least 1"));
        }
        if self.max_rounds == 0 {
            return Err(SessionError::InvalidConfig("max_rounds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutput {
    pub aspect: AspectKind,
    pub question: String,
    pub options: ParsedOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOutput {
    pub extended_query: String,
    pub recommendations: ParsedApis,
}

/// Input digests of the prompts sent in one round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDigests {
    pub best_aspect: String,
    pub clarify_question: String,
    pub options: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_extension: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_recommendation: Option<String>,
}

/// One clarification round as recorded in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub prev_answer: String,
    pub examples: Vec<PathExample>,
    pub aspect: AspectKind,
    pub question: String,
    pub options: ParsedOptions,
    pub answer: Option<String>,
    pub extended_query: Option<String>,
    pub recommendations: Option<ParsedApis>,
    pub prompt_digests: PromptDigests,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub session_id: String,
    pub query: String,
    pub variant: Variant,
    pub round: usize,
    pub closed: bool,
    /// Answered rounds, in order.
    pub rounds: Vec<RoundRecord>,
    /// A question asked but not answered yet.
    pub pending: Option<RoundRecord>,
    pub extended_query: Option<String>,
    pub recommendations: Option<ParsedApis>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    query: String,
    variant: Variant,
    cfg: SessionConfig,
    history_questions: Vec<String>,
    history_answers: Vec<String>,
    last_options: Option<ParsedOptions>,
    extended_query: Option<String>,
    recommendations: Option<ParsedApis>,
    records: Vec<RoundRecord>,
    closed: bool,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Number of answered rounds.
    pub fn round(&self) -> usize {
        self.history_answers.len()
    }

    pub fn history_questions(&self) -> &[String] {
        &self.history_questions
    }

    pub fn history_answers(&self) -> &[String] {
        &self.history_answers
    }

    pub fn has_pending_question(&self) -> bool {
        self.history_questions.len() > self.history_answers.len()
    }

    pub fn last_options(&self) -> Option<&ParsedOptions> {
        self.last_options.as_ref()
    }

    pub fn extended_query(&self) -> Option<&str> {
        self.extended_query.as_deref()
    }

    pub fn recommendations(&self) -> Option<&ParsedApis> {
        self.recommendations.as_ref()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Whether another question may be asked.
    pub fn can_ask(&self) -> bool {
        !self.closed && !self.has_pending_question() && self.round() < self.cfg.max_rounds
    }

    pub fn transcript(&self) -> SessionTranscript {
        let answered = self.round();
        SessionTranscript {
            session_id: self.id.clone(),
            query: self.query.clone(),
            variant: self.variant,
            round: answered,
            closed: self.closed,
            rounds: self.records[..answered].to_vec(),
            pending: self.records.get(answered).cloned(),
            extended_query: self.extended_query.clone(),
            recommendations: self.recommendations.clone(),
        }
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        if self.closed {
            Err(SessionError::Closed)
        } else {
            Ok(())
        }
    }
}

/// Shared, immutable pieces of the chain: the flattened path table, the
/// prompt templates and the LLM backend. Any number of sessions may use one
/// engine concurrently.
#[derive(Clone)]
pub struct Engine {
    units: Arc<Vec<RetrievalUnit>>,
    prompts: Arc<PromptEngine>,
    backend: Arc<dyn Backend>,
}

impl Engine {
    pub fn new(store: &PathStore, prompts: PromptEngine, backend: Arc<dyn Backend>) -> Self {
        Self {
            units: Arc::new(store.flatten()),
            prompts: Arc::new(prompts),
            backend,
        }
    }

    pub fn units(&self) -> &[RetrievalUnit] {
        &self.units
    }

    pub fn prompts(&self) -> &PromptEngine {
        &self.prompts
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn start_session(
        &self,
        query: &str,
        variant: Variant,
        cfg: SessionConfig,
    ) -> Result<Session, SessionError> {
        if query.trim().is_empty() {
            return Err(SessionError::EmptyQuery);
        }
        cfg.validate()?;
        Ok(Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            query: query.to_string(),
            variant,
            cfg,
            history_questions: Vec::new(),
            history_answers: Vec::new(),
            last_options: None,
            extended_query: None,
            recommendations: None,
            records: Vec::new(),
            closed: false,
        })
    }

    /// Runs aspect, question and option generation for the next round.
    /// On error the session is left unchanged.
    pub fn next_question(&self, s: &mut Session) -> Result<RoundOutput, SessionError> {
        s.ensure_open()?;
        if s.has_pending_question() {
            return Err(SessionError::PendingQuestion);
        }
        if s.round() >= s.cfg.max_rounds {
            return Err(SessionError::RoundLimit(s.cfg.max_rounds));
        }

        let prev_answer = s
            .history_answers
            .last()
            .cloned()
            .unwrap_or_else(|| NONE_ANSWER.to_string());
        let examples = if s.variant.uses_examples() {
            let cfg = RetrievalConfig {
                mode: s.variant.pathfinding_mode(),
                ..s.cfg.retrieval
            };
            find_examples(&self.units, &s.query, &prev_answer, &cfg)?
        } else {
            Vec::new()
        };

        let aspect_prompt =
            self.prompts
                .render_best_aspect(&s.query, &prev_answer, &examples, s.variant)?;
        // one retry on an unparseable aspect, then the round fails
        let aspect = match parse_aspect(&self.backend.complete(&aspect_prompt)?) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("{e}; asking for the best aspect once more");
                parse_aspect(&self.backend.complete(&aspect_prompt)?)?
            }
        };

        let question_prompt =
            self.prompts
                .render_clarify_question(&s.query, aspect, &s.history_answers);
        let question = self.backend.complete(&question_prompt)?.raw_text.trim().to_string();

        let options_prompt = self.prompts.render_options(&question, &s.query, s.cfg.n_options)?;
        let options = parse_options(&self.backend.complete(&options_prompt)?)?;

        s.history_questions.push(question.clone());
        s.last_options = Some(options.clone());
        s.records.push(RoundRecord {
            round: s.round() + 1,
            prev_answer,
            examples,
            aspect,
            question: question.clone(),
            options: options.clone(),
            answer: None,
            extended_query: None,
            recommendations: None,
            prompt_digests: PromptDigests {
                best_aspect: aspect_prompt.inputs_digest,
                clarify_question: question_prompt.inputs_digest,
                options: options_prompt.inputs_digest,
                query_extension: None,
                api_recommendation: None,
            },
        });
        Ok(RoundOutput { aspect, question, options })
    }

    /// Records the answer to the pending question, then extends the query
    /// and recommends APIs. On error the session is left unchanged and the
    /// question stays pending.
    pub fn submit_answer(&self, s: &mut Session, answer: &str) -> Result<AnswerOutput, SessionError> {
        s.ensure_open()?;
        if !s.has_pending_question() {
            return Err(SessionError::NoPendingQuestion);
        }
        let answer = answer.trim();
        if answer.is_empty() {
            return Err(SessionError::EmptyAnswer);
        }

        let history_qa: Vec<(String, String)> = s
            .history_questions
            .iter()
            .cloned()
            .zip(s.history_answers.iter().cloned().chain(std::iter::once(answer.to_string())))
            .collect();
        let ext_prompt = self.prompts.render_query_extension(&s.query, &history_qa)?;
        let extended_query = self.backend.complete(&ext_prompt)?.raw_text.trim().to_string();
        let api_prompt = self
            .prompts
            .render_api_recommendation(&extended_query, s.cfg.n_apis)?;
        let recommendations = parse_apis(&self.backend.complete(&api_prompt)?)?;

        s.history_answers.push(answer.to_string());
        s.extended_query = Some(extended_query.clone());
        s.recommendations = Some(recommendations.clone());
        let record = s.records.last_mut().expect("a pending question has a record");
        record.answer = Some(answer.to_string());
        record.extended_query = Some(extended_query.clone());
        record.recommendations = Some(recommendations.clone());
        record.prompt_digests.query_extension = Some(ext_prompt.inputs_digest);
        record.prompt_digests.api_recommendation = Some(api_prompt.inputs_digest);
        Ok(AnswerOutput { extended_query, recommendations })
    }

    /// Closes the session and returns its final transcript.
    pub fn end_session(&self, s: &mut Session) -> SessionTranscript {
        s.closed = true;
        s.transcript()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CannedBackend, RecordingBackend};
    use crate::path_store::{PathRecord, PathRound};
    use crate::prompt::{UnitKind, EXAMPLES_DELIMITER};

    fn store() -> PathStore {
        PathStore::new(vec![PathRecord {
            query: "return stream from generator in Java".into(),
            api: "java.util.Random.ints".into(),
            rounds: vec![
                PathRound { aspect: AspectKind::Event, question: "What do you what to do?".into(), option: "return stream".into() },
                PathRound { aspect: AspectKind::Purpose, question: "Which one are you interested in return stream?".into(), option: "of int value".into() },
            ],
        }])
        .unwrap()
    }

    fn canned() -> CannedBackend {
        CannedBackend::new()
            .with(UnitKind::BestAspect, "type")
            .with(UnitKind::ClarifyQuestion, "What type of generator is being used?")
            .with(UnitKind::Options, "1. java.util.Random\n2. java.security.SecureRandom")
            .with(UnitKind::QueryExtension, "return stream of doubles from java.util.Random")
            .with(UnitKind::ApiRecommendation, "1. java.util.Random.doubles\n2. java.util.Random.nextDouble")
    }

    fn engine_with(backend: Arc<dyn Backend>) -> Engine {
        Engine::new(&store(), PromptEngine::bundled(), backend)
    }

    #[test]
    fn start_validates_query() {
        let e = engine_with(Arc::new(canned()));
        assert!(matches!(
            e.start_session("  ", Variant::Full, SessionConfig::default()),
            Err(SessionError::EmptyQuery)
        ));
        let a = e.start_session("q", Variant::Full, SessionConfig::default()).unwrap();
        let b = e.start_session("q", Variant::Full, SessionConfig::default()).unwrap();
        assert_ne!(a.id(), b.id());
        assert_eq!(a.round(), 0);
        assert!(!a.has_pending_question());
    }

    #[test]
    fn full_round_trip() {
        let e = engine_with(Arc::new(canned()));
        let mut s = e.start_session("return stream from generator in Java", Variant::Full, SessionConfig::default()).unwrap();
        let out = e.next_question(&mut s).unwrap();
        assert_eq!(out.aspect, AspectKind::Type);
        assert_eq!(out.options.len(), 2);
        assert!(matches!(e.next_question(&mut s), Err(SessionError::PendingQuestion)));
        let ans = e.submit_answer(&mut s, "pseudorandom double values").unwrap();
        assert_eq!(ans.recommendations.first(), Some("java.util.Random.doubles"));
        assert_eq!(s.round(), 1);
        assert!(matches!(e.submit_answer(&mut s, "x"), Err(SessionError::NoPendingQuestion)));
        let t = e.end_session(&mut s);
        assert_eq!(t.rounds.len(), 1);
        assert_eq!(t.rounds[0].answer.as_deref(), Some("pseudorandom double values"));
        assert!(matches!(e.next_question(&mut s), Err(SessionError::Closed)));
        assert!(matches!(e.submit_answer(&mut s, "x"), Err(SessionError::Closed)));
    }

    #[test]
    fn round_limit_and_empty_answer() {
        let e = engine_with(Arc::new(canned()));
        let cfg = SessionConfig { max_rounds: 1, ..Default::default() };
        let mut s = e.start_session("q", Variant::Full, cfg).unwrap();
        e.next_question(&mut s).unwrap();
        assert!(matches!(e.submit_answer(&mut s, "  "), Err(SessionError::EmptyAnswer)));
        e.submit_answer(&mut s, "a").unwrap();
        assert!(matches!(e.next_question(&mut s), Err(SessionError::RoundLimit(1))));
    }

    #[test]
    fn no_k_sends_no_examples() {
        let rec = Arc::new(RecordingBackend::new(canned()));
        let e = engine_with(rec.clone());
        let mut s = e.start_session("q", Variant::NoK, SessionConfig::default()).unwrap();
        e.next_question(&mut s).unwrap();
        let sent = rec.prompts_for(UnitKind::BestAspect);
        assert_eq!(sent.len(), 1);
        assert!(!sent[0].text.contains(EXAMPLES_DELIMITER));

        let mut s = e.start_session("q", Variant::Full, SessionConfig::default()).unwrap();
        e.next_question(&mut s).unwrap();
        assert!(rec.prompts_for(UnitKind::BestAspect)[1].text.contains(EXAMPLES_DELIMITER));
    }

    #[test]
    fn aspect_parse_retried_once() {
        use crate::llm::{ScriptEntry, ScriptedBackend};
        let entry = |unit, r: &str| ScriptEntry { unit, inputs_digest: None, response: r.into() };
        let backend = ScriptedBackend::new(vec![
            entry(UnitKind::BestAspect, "hmm"),
            entry(UnitKind::BestAspect, "purpose"),
            entry(UnitKind::ClarifyQuestion, "Why?"),
            entry(UnitKind::Options, "1. a"),
            entry(UnitKind::BestAspect, "nope"),
            entry(UnitKind::BestAspect, "still nope"),
            entry(UnitKind::BestAspect, "event"),
        ]);
        let e = engine_with(Arc::new(backend));
        let mut s = e.start_session("q", Variant::Full, SessionConfig::default()).unwrap();
        assert_eq!(e.next_question(&mut s).unwrap().aspect, AspectKind::Purpose);

        let mut s2 = e.start_session("q", Variant::Full, SessionConfig::default()).unwrap();
        let err = e.next_question(&mut s2).unwrap_err();
        assert_eq!(err.kind(), "unparseable-aspect");
        assert!(!s2.has_pending_question());
    }

    #[test]
    fn failed_extension_keeps_question_pending() {
        let backend = CannedBackend::new()
            .with(UnitKind::BestAspect, "type")
            .with(UnitKind::ClarifyQuestion, "Q?")
            .with(UnitKind::Options, "1. a");
        let e = engine_with(Arc::new(backend));
        let mut s = e.start_session("q", Variant::Full, SessionConfig::default()).unwrap();
        e.next_question(&mut s).unwrap();
        let err = e.submit_answer(&mut s, "a").unwrap_err();
        assert_eq!(err.kind(), "scripted-miss");
        assert!(s.has_pending_question());
        assert_eq!(s.round(), 0);
        assert_eq!(s.transcript().pending.unwrap().question, "Q?");
    }

    #[test]
    fn second_round_uses_previous_answer_and_history() {
        let rec = Arc::new(RecordingBackend::new(canned()));
        let e = engine_with(rec.clone());
        let mut s = e.start_session("return stream from generator in Java", Variant::Full, SessionConfig::default()).unwrap();
        e.next_question(&mut s).unwrap();
        e.submit_answer(&mut s, "return stream").unwrap();
        e.next_question(&mut s).unwrap();
        let t = s.transcript();
        assert_eq!(t.rounds[0].prev_answer, "None");
        assert_eq!(t.pending.as_ref().unwrap().prev_answer, "return stream");
        let q2 = &rec.prompts_for(UnitKind::ClarifyQuestion)[1];
        assert!(q2.text.contains("- return stream\n"));
        e.submit_answer(&mut s, "of double value").unwrap();
        let ext = &rec.prompts_for(UnitKind::QueryExtension)[1];
        assert!(ext.text.contains("A1: return stream"));
        assert!(ext.text.contains("A2: of double value"));
    }
}
