//! Knowledge-guided query clarification for API recommendation.
//!
//! A developer's under-specified query is clarified over several rounds by a
//! chain of five LLM calls: best questioning aspect, clarification question,
//! candidate options, query extension and API recommendation. The first call
//! is steered by path examples retrieved from a table of recorded
//! clarification paths exported from an API knowledge graph.
//!
//! The main entry points:
//!
//! - [`path_store`]: load and flatten the path table
//! - [`retrieval`]: two-stage pathfinding over the flattened table
//! - [`prompt`]: templates and rendering for the five units
//! - [`llm`]: remote and scripted backends, output parsers
//! - [`session`]: the multi-round session state machine
//! - [`eval`]: MRR / MAP / precision / recall harness
//! - [`service`]: HTTP API over sessions
//!
//! ```
//! use kgclarify::demo;
//!
//! let transcript = demo::run_demo(&demo::demo_engine()).unwrap();
//! assert_eq!(transcript.rounds.len(), 2);
//! ```

pub mod aspect;
pub mod cli;
pub mod demo;
pub mod eval;
pub mod llm;
pub mod path_store;
pub mod prompt;
pub mod retrieval;
pub mod service;
pub mod session;
pub mod variant;

pub use aspect::{aspect_meaning, AspectKind, AspectMeanings};
pub use eval::{run_eval, AnswerPolicy, EvalCase, EvalReport, RoundMetrics};
pub use llm::{Backend, BackendConfig, Completion, GatewayError, ParsedApis, ParsedOptions, RemoteConfig, ScriptedBackend};
pub use path_store::{load_table, PathRecord, PathRound, PathStore, RetrievalUnit, TableFormat};
pub use prompt::{PromptEngine, RenderedPrompt, UnitKind};
pub use retrieval::{find_examples, score, tokenize, PathExample, RetrievalConfig, SimilarityScore};
pub use session::{Engine, Session, SessionConfig, SessionError, SessionTranscript};
pub use variant::Variant;
