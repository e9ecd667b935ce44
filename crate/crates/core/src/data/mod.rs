//! Labelled datasets: generation, splitting, batching and JSON Lines files.

mod gen;
mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{self, TypedRuleFile};
use crate::eval::{EvalError, Evaluator};
use crate::scenario::recodex;
use crate::scenario::{Input, Scenario};

pub use gen::{gen_combined, gen_random_industry, gen_recodex, GenSpec, DEFAULT_SIZE, FALSE_STRATA, MIN_SIZE};
pub use io::{read_jsonl, read_jsonl_str, write_jsonl, write_jsonl_string, Header, DATASET_FORMAT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Random,
    Combined,
    Recodex,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Random => "random",
            Provenance::Combined => "combined",
            Provenance::Recodex => "recodex",
        }
    }

    pub fn scenario(self) -> Scenario {
        match self {
            Provenance::Recodex => Scenario::Recodex,
            _ => Scenario::Industry,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Provenance::Random),
            "combined" => Ok(Provenance::Combined),
            "recodex" => Ok(Provenance::Recodex),
            _ => Err(format!("unknown dataset kind `{s}` (expected random, combined or recodex)")),
        }
    }
}

/// One labelled sample. Binary labels are 0/1; job labels are worker indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub label: usize,
    /// Conjunct outcomes of the oracle as a bit string.
    pub stratum: String,
    pub input: Input,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub provenance: Provenance,
    pub seed: u64,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn strata(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.stratum.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.label == 1).count()
    }

    fn with_records(&self, records: Vec<Record>) -> Dataset {
        Dataset {
            scenario: self.scenario,
            provenance: self.provenance,
            seed: self.seed,
            records,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: stored label {stored} but the oracle says {oracle}")]
    LabelMismatch { line: usize, stored: usize, oracle: usize },
    #[error("stratum {stratum} unreachable within {attempts} attempts")]
    Unreachable { stratum: String, attempts: usize },
    #[error("dataset size {n} is below the minimum of {min} (one sample per stratum)")]
    TooSmall { n: usize, min: usize },
    #[error("oracle failed: {0}")]
    Oracle(#[from] EvalError),
    #[error("{0}")]
    Invalid(String),
}

/// Strict rule evaluation used to label records.
pub struct Oracle {
    scenario: Scenario,
    typed: TypedRuleFile,
}

impl Oracle {
    pub fn new(scenario: Scenario) -> Oracle {
        let typed = dsl::compile(scenario.oracle_source(), &scenario.schema())
            .unwrap_or_else(|ds| panic!("bundled oracle rule does not compile: {}", ds[0]));
        Oracle { scenario, typed }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Label and stratum of a record. For jobs the stratum is the rule's
    /// verdict and the label the worker the assignment policy picks.
    pub fn label(&self, input: &Input) -> Result<(usize, String), EvalError> {
        if input.scenario() != self.scenario {
            return Err(EvalError::Schema(format!(
                "{} record given to the {} oracle",
                input.scenario(),
                self.scenario
            )));
        }
        let globals = input.bind();
        let ev = Evaluator::new(&self.typed, &globals);
        match input {
            Input::Industry(_) => {
                let rule = self.typed.rule(self.scenario.oracle_name()).expect("oracle rule present");
                let d = ev.eval_rule(rule)?;
                Ok((d.fired as usize, d.stratum()))
            }
            Input::Recodex(j) => {
                let slow = ev.eval_entry(self.scenario.oracle_name())?;
                let stratum = if slow { "1" } else { "0" };
                Ok((recodex::assign(slow, &j.queues), stratum.to_string()))
            }
        }
    }

    /// Builds a record whose label and stratum come from the oracle.
    pub fn record(&self, input: Input) -> Result<Record, EvalError> {
        let (label, stratum) = self.label(&input)?;
        Ok(Record { label, stratum, input })
    }
}

/// Deterministic shuffle, then the first `fraction` of records go to the
/// training part.
pub fn split(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (d.len() as f64 * fraction).round() as usize;
    let pick = |ix: &[usize]| ix.iter().map(|&i| d.records[i].clone()).collect();
    Ok((d.with_records(pick(&idx[..n_train])), d.with_records(pick(&idx[n_train..]))))
}

/// Index batches of one epoch; the last batch may be short.
pub fn batches(n: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_counts() {
        assert_eq!(batches(9000, 100, 3).len(), 90);
        let b = batches(950, 100, 3);
        assert_eq!(b.len(), 10);
        assert_eq!(b[9].len(), 50);
        assert_eq!(batches(950, 100, 3), b);
        assert_ne!(batches(950, 100, 4), b);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let d = gen_random_industry(&GenSpec::new(10_000, 5)).unwrap();
        let (a, b) = split(&d, 0.9, 1).unwrap();
        assert_eq!((a.len(), b.len()), (9000, 1000));
        let mut all: Vec<String> = a
            .records
            .iter()
            .chain(&b.records)
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let mut orig: Vec<String> = d.records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(split(&d, 0.9, 1).unwrap().1, b);
        assert!(split(&d, 1.0, 1).is_err());
    }
}
