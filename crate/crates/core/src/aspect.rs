//! Clarification aspects and their meaning registry.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_MEANINGS: &str = include_str!("../assets/aspects.toml");

/// The facet of an under-specified query that a clarification round targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectKind {
    Event,
    Purpose,
    Type,
    Status,
    Condition,
}

impl AspectKind {
    pub const ALL: [AspectKind; 5] = [
        AspectKind::Event,
        AspectKind::Purpose,
        AspectKind::Type,
        AspectKind::Status,
        AspectKind::Condition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AspectKind::Event => "event",
            AspectKind::Purpose => "purpose",
            AspectKind::Type => "type",
            AspectKind::Status => "status",
            AspectKind::Condition => "condition",
        }
    }

    /// Meaning string from the bundled registry.
    pub fn meaning(self) -> &'static str {
        AspectMeanings::bundled().meaning(self)
    }
}

impl fmt::Display for AspectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown aspect {0:?}; expected one of event, purpose, type, status, condition")]
pub struct UnknownAspect(pub String);

impl FromStr for AspectKind {
    type Err = UnknownAspect;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        AspectKind::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownAspect(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reading aspect registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("aspect registry is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("aspect registry: {0}")]
    Unknown(#[from] UnknownAspect),
    #[error("aspect registry has no meaning for {0}")]
    Missing(AspectKind),
    #[error("aspect registry has an empty meaning for {0}")]
    Empty(AspectKind),
}

/// Registry mapping each aspect to the one-sentence meaning used in prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectMeanings {
    meanings: [String; 5],
}

impl AspectMeanings {
    /// Parses a TOML table of `aspect = "meaning"` entries. All five aspects
    /// must be present with non-empty meanings.
    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let table: BTreeMap<String, String> = toml::from_str(text)?;
        let mut slots: [Option<String>; 5] = Default::default();
        for (key, value) in table {
            let aspect: AspectKind = key.parse()?;
            slots[aspect as usize] = Some(value.trim().to_string());
        }
        let mut meanings: [String; 5] = Default::default();
        for aspect in AspectKind::ALL {
            let m = slots[aspect as usize]
                .take()
                .ok_or(RegistryError::Missing(aspect))?;
            if m.is_empty() {
                return Err(RegistryError::Empty(aspect));
            }
            meanings[aspect as usize] = m;
        }
        Ok(Self { meanings })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> &'static AspectMeanings {
        static BUNDLED: OnceLock<AspectMeanings> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            AspectMeanings::from_toml_str(BUNDLED_MEANINGS).expect("bundled aspect registry is valid")
        })
    }

    pub fn meaning(&self, aspect: AspectKind) -> &str {
        &self.meanings[aspect as usize]
    }
}

impl Default for AspectMeanings {
    fn default() -> Self {
        Self::bundled().clone()
    }
}

/// Registered meaning string for `aspect` in the bundled registry.
pub fn aspect_meaning(aspect: AspectKind) -> &'static str {
    aspect.meaning()
}
