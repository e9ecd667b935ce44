//! Accuracy comparison of the baseline and the rule models over repeated
//! seeds.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainError, TrainReport};
use crate::data::{gen_combined, gen_random_industry, split, DataError, Dataset, GenSpec, Provenance};
use crate::fuzzify::{DiffModel, FuzzConfig, ModelSpec};
use crate::scenario::{Relaxation, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Baseline,
    Rules(Relaxation),
}

impl ModelKind {
    /// Table column order.
    pub const TABLE: [ModelKind; 4] = [
        ModelKind::Baseline,
        ModelKind::Rules(Relaxation::TimeAb),
        ModelKind::Rules(Relaxation::TimeRight),
        ModelKind::Rules(Relaxation::All),
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Rules(r) => r.label(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Rules(r) => r.name(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "baseline" {
            return Ok(ModelKind::Baseline);
        }
        s.parse().map(ModelKind::Rules)
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub models: Vec<ModelKind>,
    pub datasets: Vec<Provenance>,
    pub repeats: usize,
    pub n: usize,
    pub data_seed: u64,
    pub epochs: usize,
    /// Epochs for the baseline when it should differ from `epochs`.
    pub baseline_epochs: Option<usize>,
    pub baseline_depth: usize,
    pub baseline_width: usize,
    pub p: f64,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            models: ModelKind::TABLE.to_vec(),
            datasets: vec![Provenance::Random, Provenance::Combined],
            repeats: 5,
            n: crate::data::DEFAULT_SIZE,
            data_seed: 1,
            epochs: 100,
            baseline_epochs: None,
            baseline_depth: 2,
            baseline_width: 256,
            p: 10.0,
        }
    }
}

impl MatrixConfig {
    pub fn spec(&self, kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Baseline => ModelSpec::Dense {
                scenario: Scenario::Industry,
                depth: self.baseline_depth,
                width: self.baseline_width,
            },
            ModelKind::Rules(r) => ModelSpec::rules(Scenario::Industry, r.source()),
        }
    }

    /// Training seeds `1..=repeats`.
    pub fn seeds(&self) -> Vec<u64> {
        (1..=self.repeats as u64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub model: ModelKind,
    pub label: String,
    pub dataset: Provenance,
    pub params: usize,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
    pub runs: Vec<TrainReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: MatrixConfig,
    pub cells: Vec<ReportCell>,
    pub notes: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl Report {
    pub fn cell(&self, model: ModelKind, dataset: Provenance) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.model == model && c.dataset == dataset)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Aligned table: one row per dataset, one column per model, cells as
    /// `mean% ± std`, followed by the parameter counts.
    pub fn to_text(&self) -> String {
        let cols = &self.config.models;
        let w = 20;
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "");
        for m in cols {
            let _ = write!(s, "{:>w$}", m.label());
        }
        s.push('\n');
        for d in &self.config.datasets {
            let _ = write!(s, "{:<12}", d.name());
            for m in cols {
                match self.cell(*m, *d) {
                    Some(c) => {
                        let _ = write!(s, "{:>w$}", format!("{:.3}% ± {:.3}", 100.0 * c.mean, 100.0 * c.std));
                    }
                    None => {
                        let _ = write!(s, "{:>w$}", "-");
                    }
                }
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<12}", "parameters");
        for m in cols {
            let p = self.cells.iter().find(|c| c.model == *m).map(|c| c.params);
            let _ = write!(s, "{:>w$}", p.map_or("-".to_string(), |p| p.to_string()));
        }
        s.push('\n');
        let _ = writeln!(s, "(mean over {} seeds; ± is the sample standard deviation)", self.config.repeats);
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn generate(kind: Provenance, n: usize, seed: u64) -> Result<Dataset, DataError> {
    let spec = GenSpec::new(n, seed);
    match kind {
        Provenance::Random => gen_random_industry(&spec),
        Provenance::Combined => gen_combined(&spec),
        Provenance::Recodex => crate::data::gen_recodex(&spec),
    }
}

/// Trains every (dataset, model, seed) combination. Runs are sequential and
/// aggregated in a fixed order.
pub fn run_matrix(cfg: &MatrixConfig, progress: &mut dyn FnMut(&str)) -> Result<Report, ReportError> {
    let mut cells = vec![];
    for &kind in &cfg.datasets {
        let data = generate(kind, cfg.n, cfg.data_seed)?;
        let (tr, va) = split(&data, 0.9, cfg.data_seed)?;
        for &m in &cfg.models {
            let spec = cfg.spec(m);
            let mut runs = vec![];
            let mut params = 0;
            for seed in cfg.seeds() {
                let fuzz = FuzzConfig {
                    p: cfg.p,
                    seed,
                    ..FuzzConfig::default()
                };
                let mut model = DiffModel::build(spec.clone(), fuzz).map_err(TrainError::from)?;
                params = model.param_count();
                let mut tc = TrainConfig::for_spec(&spec, seed);
                tc.epochs = match m {
                    ModelKind::Baseline => cfg.baseline_epochs.unwrap_or(cfg.epochs),
                    _ => cfg.epochs,
                };
                let r = train(&mut model, &tr, &va, &tc)?;
                progress(&format!(
                    "{:<9} {:<12} seed {seed}: {:.3}%",
                    kind.name(),
                    m.label(),
                    100.0 * r.final_accuracy
                ));
                runs.push(r);
            }
            let accuracies: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
            let (mean, std) = mean_std(&accuracies);
            cells.push(ReportCell {
                model: m,
                label: m.label().to_string(),
                dataset: kind,
                params,
                mean,
                std,
                accuracies,
                runs,
            });
        }
    }
    let mut notes = vec![];
    if let Some(c) = cells.iter().find(|c| c.model == ModelKind::Rules(Relaxation::All)) {
        notes.push(format!(
            "all-relaxed model: {} parameters = 21 (time) + 3 x 401 (gate per workplace) + 5 (headgear); \
             the figure of 1227 quoted elsewhere for this model is not reproducible from the block formulas",
            c.params
        ));
    }
    Ok(Report {
        config: cfg.clone(),
        cells,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_is_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn model_kind_names_round_trip() {
        for k in ModelKind::TABLE {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        let json = serde_json::to_string(&ModelKind::Rules(Relaxation::TimeAb)).unwrap();
        assert_eq!(json, "\"time-ab\"");
    }

    #[test]
    fn small_matrix_report() {
        let cfg = MatrixConfig {
            models: vec![ModelKind::Rules(Relaxation::Strict), ModelKind::Rules(Relaxation::TimeAb)],
            datasets: vec![Provenance::Random],
            repeats: 1,
            n: 400,
            epochs: 2,
            ..MatrixConfig::default()
        };
        let r = run_matrix(&cfg, &mut |_| {}).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[0].mean, 1.0);
        let text = r.to_text();
        assert!(text.contains("time(A&B)"), "{text}");
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
