//! Prompt templates for the five AI units and their deterministic rendering.
//!
//! Templates are plain UTF-8 text with `{name}` placeholders. Each unit has a
//! closed set of placeholders it may use; anything else, including a stray
//! brace, is rejected when the template is loaded, so a rendered prompt never
//! carries an unbound marker.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aspect::{AspectKind, AspectMeanings, RegistryError};
use crate::retrieval::PathExample;
use crate::variant::Variant;

/// Header line that opens the examples block of the best-aspect prompt.
pub const EXAMPLES_DELIMITER: &str = "### Examples";

/// The five AI units of the clarification chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    BestAspect,
    ClarifyQuestion,
    Options,
    QueryExtension,
    ApiRecommendation,
}

impl UnitKind {
    pub const ALL: [UnitKind; 5] = [
        UnitKind::BestAspect,
        UnitKind::ClarifyQuestion,
        UnitKind::Options,
        UnitKind::QueryExtension,
        UnitKind::ApiRecommendation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::BestAspect => "best_aspect",
            UnitKind::ClarifyQuestion => "clarify_question",
            UnitKind::Options => "options",
            UnitKind::QueryExtension => "query_extension",
            UnitKind::ApiRecommendation => "api_recommendation",
        }
    }

    /// Placeholders a template for this unit may reference.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            UnitKind::BestAspect => &["aspect_meanings", "examples", "query", "prev_answer"],
            UnitKind::ClarifyQuestion => &["query", "aspect", "aspect_meaning", "history_answers"],
            UnitKind::Options => &["question", "query", "n_options"],
            UnitKind::QueryExtension => &["query", "history_qa"],
            UnitKind::ApiRecommendation => &["extended_query", "n_apis"],
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UnitKind::ALL
            .into_iter()
            .find(|u| u.as_str() == s.trim())
            .ok_or_else(|| format!("unknown AI unit {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template for {unit}: {message}")]
    Template { unit: UnitKind, message: String },
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("template registry is not valid TOML: {0}")]
    Registry(#[from] toml::de::Error),
    #[error("template registry has no entry for {0}")]
    MissingTemplate(UnitKind),
    #[error(transparent)]
    Aspects(#[from] RegistryError),
    #[error("the best-aspect prompt needs at least one path example unless knowledge guidance is off")]
    NoExamples,
    #[error("at most {max} path examples fit in the best-aspect prompt, got {got}")]
    TooManyExamples { max: usize, got: usize },
    #[error("query extension needs at least one answered question")]
    EmptyHistory,
    #[error("{0} must be at least 1")]
    InvalidCount(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    unit: UnitKind,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(unit: UnitKind, body: &str) -> Result<Self, PromptError> {
        let err = |message: String| PromptError::Template { unit, message };
        let allowed = unit.placeholders();
        let mut segments = Vec::new();
        let mut rest = body;
        while let Some(open) = rest.find(['{', '}']) {
            if rest.as_bytes()[open] == b'}' {
                return Err(err(format!("stray '}}' at byte {}", body.len() - rest.len() + open)));
            }
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            let after = &rest[open + 1..];
            let close = after
                .find('}')
                .ok_or_else(|| err("unterminated placeholder".to_string()))?;
            let name = &after[..close];
            let slot = allowed
                .iter()
                .copied()
                .find(|p| *p == name)
                .ok_or_else(|| err(format!("placeholder {{{name}}} is not allowed here")))?;
            segments.push(Segment::Slot(slot));
            rest = &after[close + 1..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        Ok(Self { unit, segments })
    }

    pub fn unit(&self) -> UnitKind {
        self.unit
    }

    fn render(&self, bindings: &BTreeMap<&'static str, String>) -> RenderedPrompt {
        let mut text = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => text.push_str(t),
                Segment::Slot(name) => text.push_str(
                    bindings
                        .get(name)
                        .expect("every unit placeholder is bound by its renderer"),
                ),
            }
        }
        RenderedPrompt {
            unit: self.unit,
            text,
            inputs_digest: inputs_digest(self.unit, bindings),
        }
    }
}

/// Final prompt text for one unit plus a digest of the inputs it was
/// rendered from. The digest does not depend on template wording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub unit: UnitKind,
    pub text: String,
    pub inputs_digest: String,
}

fn inputs_digest(unit: UnitKind, bindings: &BTreeMap<&'static str, String>) -> String {
    let mut h = Sha256::new();
    h.update(unit.as_str().as_bytes());
    for (k, v) in bindings {
        h.update([0x1e]);
        h.update(k.as_bytes());
        h.update([0x1f]);
        h.update(v.as_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

const BUNDLED: [(UnitKind, &str); 5] = [
    (UnitKind::BestAspect, include_str!("../assets/templates/best_aspect.txt")),
    (UnitKind::ClarifyQuestion, include_str!("../assets/templates/clarify_question.txt")),
    (UnitKind::Options, include_str!("../assets/templates/options.txt")),
    (UnitKind::QueryExtension, include_str!("../assets/templates/query_extension.txt")),
    (UnitKind::ApiRecommendation, include_str!("../assets/templates/api_recommendation.txt")),
];

/// Largest number of path examples the best-aspect prompt accepts.
pub const MAX_EXAMPLES: usize = 5;

/// Renders prompts for all five units from a template set and an aspect
/// meaning registry.
#[derive(Debug, Clone)]
pub struct PromptEngine {
    templates: [PromptTemplate; 5],
    meanings: AspectMeanings,
}

impl PromptEngine {
    pub fn new(templates: [PromptTemplate; 5], meanings: AspectMeanings) -> Result<Self, PromptError> {
        for (i, t) in templates.iter().enumerate() {
            if t.unit != UnitKind::ALL[i] {
                return Err(PromptError::Template {
                    unit: t.unit,
                    message: format!("expected in slot {}", UnitKind::ALL[i]),
                });
            }
        }
        Ok(Self { templates, meanings })
    }

    /// Templates and aspect meanings shipped with the crate.
    pub fn bundled() -> Self {
        let templates = BUNDLED.map(|(unit, body)| {
            PromptTemplate::parse(unit, body).expect("bundled templates are valid")
        });
        Self {
            templates,
            meanings: AspectMeanings::bundled().clone(),
        }
    }

    /// Loads templates through a `registry.toml` mapping unit names to file
    /// paths (relative to the registry's directory). When `meanings` is
    /// `None` the bundled aspect registry is used.
    pub fn from_registry(
        registry: impl AsRef<Path>,
        meanings: Option<&Path>,
    ) -> Result<Self, PromptError> {
        let registry = registry.as_ref();
        let base = registry.parent().map(Path::to_path_buf).unwrap_or_default();
        let table: BTreeMap<String, PathBuf> = toml::from_str(&std::fs::read_to_string(registry)?)?;
        let mut loaded = Vec::with_capacity(5);
        for unit in UnitKind::ALL {
            let rel = table.get(unit.as_str()).ok_or(PromptError::MissingTemplate(unit))?;
            let body = std::fs::read_to_string(base.join(rel))?;
            loaded.push(PromptTemplate::parse(unit, &body)?);
        }
        let meanings = match meanings {
            Some(p) => AspectMeanings::load(p)?,
            None => AspectMeanings::bundled().clone(),
        };
        let templates: [PromptTemplate; 5] = loaded.try_into().expect("five units loaded");
        Self::new(templates, meanings)
    }

    /// Same templates, different aspect meanings.
    pub fn with_meanings(mut self, meanings: AspectMeanings) -> Self {
        self.meanings = meanings;
        self
    }

    pub fn meanings(&self) -> &AspectMeanings {
        &self.meanings
    }

    fn template(&self, unit: UnitKind) -> &PromptTemplate {
        &self.templates[unit as usize]
    }

    /// The examples block as it appears in the best-aspect prompt, or an
    /// empty string for no examples.
    pub fn examples_block(examples: &[PathExample]) -> String {
        if examples.is_empty() {
            return String::new();
        }
        let mut block = format!("{EXAMPLES_DELIMITER}\n");
        for e in examples {
            block.push_str(&format!(
                "Query: {} | Previous answer: {} -> Aspect: {}\n",
                e.query, e.prev_answer, e.aspect
            ));
        }
        block.push('\n');
        block
    }

    pub fn render_best_aspect(
        &self,
        query: &str,
        prev_answer: &str,
        examples: &[PathExample],
        variant: Variant,
    ) -> Result<RenderedPrompt, PromptError> {
        if examples.len() > MAX_EXAMPLES {
            return Err(PromptError::TooManyExamples { max: MAX_EXAMPLES, got: examples.len() });
        }
        let examples = if variant.uses_examples() {
            if examples.is_empty() {
                return Err(PromptError::NoExamples);
            }
            examples
        } else {
            &[]
        };
        let meanings = AspectKind::ALL
            .iter()
            .map(|a| format!("- {a}: {}", self.meanings.meaning(*a)))
            .collect::<Vec<_>>()
            .join("\n");
        let bindings = BTreeMap::from([
            ("aspect_meanings", meanings),
            ("examples", Self::examples_block(examples)),
            ("query", query.to_string()),
            ("prev_answer", prev_answer.to_string()),
        ]);
        Ok(self.template(UnitKind::BestAspect).render(&bindings))
    }

    pub fn render_clarify_question(
        &self,
        query: &str,
        aspect: AspectKind,
        history_answers: &[String],
    ) -> RenderedPrompt {
        let known: String = history_answers.iter().map(|a| format!("- {a}\n")).collect();
        let bindings = BTreeMap::from([
            ("query", query.to_string()),
            ("aspect", aspect.to_string()),
            ("aspect_meaning", self.meanings.meaning(aspect).to_string()),
            ("history_answers", known),
        ]);
        self.template(UnitKind::ClarifyQuestion).render(&bindings)
    }

    pub fn render_options(
        &self,
        question: &str,
        query: &str,
        n_options: usize,
    ) -> Result<RenderedPrompt, PromptError> {
        if n_options == 0 {
            return Err(PromptError::InvalidCount("n_options"));
        }
        let bindings = BTreeMap::from([
            ("question", question.to_string()),
            ("query", query.to_string()),
            ("n_options", n_options.to_string()),
        ]);
        Ok(self.template(UnitKind::Options).render(&bindings))
    }

    /// `history_qa` is rendered in the given order, one `Qn:`/`An:` pair per
    /// round.
    pub fn render_query_extension(
        &self,
        query: &str,
        history_qa: &[(String, String)],
    ) -> Result<RenderedPrompt, PromptError> {
        if history_qa.is_empty() {
            return Err(PromptError::EmptyHistory);
        }
        let qa = history_qa
            .iter()
            .enumerate()
            .map(|(i, (q, a))| format!("Q{n}: {q}\nA{n}: {a}\n", n = i + 1))
            .collect::<String>();
        let bindings = BTreeMap::from([("query", query.to_string()), ("history_qa", qa)]);
        Ok(self.template(UnitKind::QueryExtension).render(&bindings))
    }

    pub fn render_api_recommendation(
        &self,
        extended_query: &str,
        n_apis: usize,
    ) -> Result<RenderedPrompt, PromptError> {
        if n_apis == 0 {
            return Err(PromptError::InvalidCount("n_apis"));
        }
        let bindings = BTreeMap::from([
            ("extended_query", extended_query.to_string()),
            ("n_apis", n_apis.to_string()),
        ]);
        Ok(self.template(UnitKind::ApiRecommendation).render(&bindings))
    }
}

impl Default for PromptEngine {
    fn default() -> Self {
        Self::bundled()
    }
}
