//! Core types and homogeneous stage configurations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Cluster a core belongs to. `Big` sorts before `Small`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoreType {
    #[serde(rename = "B", alias = "big", alias = "Big")]
    Big,
    #[serde(rename = "s", alias = "small", alias = "Small")]
    Small,
}

impl CoreType {
    pub const ALL: [CoreType; 2] = [CoreType::Big, CoreType::Small];

    pub fn symbol(self) -> &'static str {
        match self {
            CoreType::Big => "B",
            CoreType::Small => "s",
        }
    }
}

impl fmt::Display for CoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for CoreType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "B" | "b" | "big" | "Big" | "BIG" => Ok(CoreType::Big),
            "s" | "S" | "small" | "Small" | "SMALL" | "little" | "LITTLE" => Ok(CoreType::Small),
            other => Err(format!("unknown core type `{other}`")),
        }
    }
}

/// A pipeline stage built from `count` cores of one type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StageConfig {
    #[serde(rename = "type")]
    pub core_type: CoreType,
    pub count: u32,
}

impl StageConfig {
    pub fn new(core_type: CoreType, count: u32) -> Self {
        debug_assert!(count >= 1);
        Self { core_type, count }
    }

    pub fn big(count: u32) -> Self {
        Self::new(CoreType::Big, count)
    }

    pub fn small(count: u32) -> Self {
        Self::new(CoreType::Small, count)
    }
}

impl fmt::Display for StageConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.core_type, self.count)
    }
}

impl FromStr for StageConfig {
    type Err = String;

    /// Parses the compact `B4` / `s2` notation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| format!("stage `{s}` has no core count"))?;
        let core_type = s[..split].parse()?;
        let count: u32 = s[split..].parse().map_err(|e| format!("stage `{s}`: {e}"))?;
        if count == 0 {
            return Err(format!("stage `{s}` has zero cores"));
        }
        Ok(Self { core_type, count })
    }
}
