//! Turning rules into trainable models.

pub mod blocks;
pub mod compile;
pub mod features;
pub mod model;

use serde::{Deserialize, Serialize};

pub use compile::{
    compile_rule, site_param_count, CompiledRule, EncodeError, FuzzError, RulePlan, SiteInfo, Slot, SlotKind, Target,
};
pub use features::Features;
pub use model::{DiffModel, Head, ModelDoc, ModelError, ModelSpec, Threshold};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuPlacement {
    #[default]
    Grid,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    /// Connective and threshold steepness.
    pub p: f64,
    pub mu_placement: MuPlacement,
    /// Half-width of the uniform initialization of linear weights.
    pub init_range: f64,
    /// Initial hidden bias of categorical blocks; keeps ReLUs alive at start.
    pub hidden_bias_init: f64,
    pub seed: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            p: 10.0,
            mu_placement: MuPlacement::Grid,
            init_range: 0.1,
            hidden_bias_init: 0.1,
            seed: 1,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.p > 1.0) {
            return Err(format!("connective strength p must exceed 1, got {}", self.p));
        }
        if !(self.init_range >= 0.0) {
            return Err(format!("init range must be non-negative, got {}", self.init_range));
        }
        Ok(())
    }
}
