//! The two application scenarios and their bundled rule files.

pub mod industry;
pub mod recodex;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsl::Schema;
use crate::eval::Value;

pub use industry::IndustryInput;
pub use recodex::JobInput;

/// One environment sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Industry(IndustryInput),
    Recodex(JobInput),
}

impl Input {
    pub fn scenario(&self) -> Scenario {
        match self {
            Input::Industry(_) => Scenario::Industry,
            Input::Recodex(_) => Scenario::Recodex,
        }
    }

    /// Root values for the strict evaluator.
    pub fn bind(&self) -> Vec<Value> {
        match self {
            Input::Industry(r) => industry::bind(r),
            Input::Recodex(r) => recodex::bind(r),
        }
    }

    pub fn industry(&self) -> Option<&IndustryInput> {
        match self {
            Input::Industry(r) => Some(r),
            _ => None,
        }
    }

    pub fn job(&self) -> Option<&JobInput> {
        match self {
            Input::Recodex(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Industry,
    Recodex,
}

impl Scenario {
    pub fn schema(self) -> Schema {
        match self {
            Scenario::Industry => industry::schema(),
            Scenario::Recodex => recodex::schema(),
        }
    }

    /// The strict rule file used as labeling oracle.
    pub fn oracle_source(self) -> &'static str {
        match self {
            Scenario::Industry => rules::ACCESS_STRICT,
            Scenario::Recodex => rules::IS_SLOW,
        }
    }

    /// Name of the rule or entry predicate the oracle evaluates.
    pub fn oracle_name(self) -> &'static str {
        match self {
            Scenario::Industry => "AccessToWorkplace",
            Scenario::Recodex => "isSlow",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Industry => "industry",
            Scenario::Recodex => "recodex",
        }
    }

    /// Guesses the scenario from the names a rule file refers to.
    pub fn detect(src: &str) -> Scenario {
        if src.contains("job") && !src.contains("worker") {
            Scenario::Recodex
        } else {
            Scenario::Industry
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "industry" => Ok(Scenario::Industry),
            "recodex" => Ok(Scenario::Recodex),
            _ => Err(format!("unknown scenario `{s}` (expected industry or recodex)")),
        }
    }
}

/// Relaxation levels of the access rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relaxation {
    Strict,
    TimeAb,
    TimeRight,
    All,
}

impl Relaxation {
    pub const ALL: [Relaxation; 4] = [
        Relaxation::Strict,
        Relaxation::TimeAb,
        Relaxation::TimeRight,
        Relaxation::All,
    ];

    pub fn source(self) -> &'static str {
        match self {
            Relaxation::Strict => rules::ACCESS_STRICT,
            Relaxation::TimeAb => rules::ACCESS_TIME_AB,
            Relaxation::TimeRight => rules::ACCESS_TIME_RIGHT,
            Relaxation::All => rules::ACCESS_ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relaxation::Strict => "strict",
            Relaxation::TimeAb => "time-ab",
            Relaxation::TimeRight => "time-right",
            Relaxation::All => "all",
        }
    }

    /// Column heading used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Relaxation::Strict => "strict",
            Relaxation::TimeAb => "time(A&B)",
            Relaxation::TimeRight => "time(right)",
            Relaxation::All => "all",
        }
    }
}

impl fmt::Display for Relaxation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relaxation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Relaxation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown relaxation `{s}` (expected strict, time-ab, time-right or all)"))
    }
}

pub mod rules {
    pub const ACCESS_STRICT: &str = include_str!("../../rules/access_strict.rules");
    pub const ACCESS_TIME_AB: &str = include_str!("../../rules/access_time_ab.rules");
    pub const ACCESS_TIME_RIGHT: &str = include_str!("../../rules/access_time_right.rules");
    pub const ACCESS_ALL: &str = include_str!("../../rules/access_all.rules");
    pub const IS_SLOW: &str = include_str!("../../rules/is_slow.rules");
    pub const IS_SLOW_RELAXED: &str = include_str!("../../rules/is_slow_relaxed.rules");
}
