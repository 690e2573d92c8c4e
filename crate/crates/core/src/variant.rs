use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::retrieval::PathfindingMode;

/// Which parts of the knowledge guidance a session uses.
///
/// `NoK` drops the retrieved path examples from the aspect prompt entirely.
/// `NoKps` keeps the examples but ranks them by query similarity alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    NoK,
    NoKps,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoK, Variant::NoKps];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoK => "no_k",
            Variant::NoKps => "no_kps",
        }
    }

    pub fn uses_examples(self) -> bool {
        self != Variant::NoK
    }

    pub fn pathfinding_mode(self) -> PathfindingMode {
        match self {
            Variant::NoKps => PathfindingMode::NoKps,
            _ => PathfindingMode::Full,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    /// Accepts both `no_kps` and `no-kps` spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(Variant::Full),
            "no_k" => Ok(Variant::NoK),
            "no_kps" => Ok(Variant::NoKps),
            other => Err(format!("unknown variant {other:?}; expected full, no-k or no-kps")),
        }
    }
}
