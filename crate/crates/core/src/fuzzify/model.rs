//! Trainable models: compiled rules, dense baselines and the gated
//! classifier, plus their JSON form.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blocks::classify_head;
use super::compile::{compile_rule, EncodeError, FuzzError, RulePlan, SiteInfo, Target};
use super::features::Features;
use super::FuzzConfig;
use crate::autodiff::{grad_check, GradCheck, Graph, GraphError, NodeId, ParamRef, ParamStore, Workspace};
use crate::dsl::{self, TrainableKind};
use crate::scenario::recodex::{N_FAST, N_SLOW, N_WORKERS};
use crate::scenario::{rules, Input, Scenario};

/// What a model is built from. Together with a [`FuzzConfig`] this fully
/// determines the graph and the initial parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Rules {
        scenario: Scenario,
        source: String,
        target: Target,
    },
    /// ReLU layers of equal width; sigmoid output for the access scenario,
    /// softmax over workers for job scheduling.
    Dense {
        scenario: Scenario,
        depth: usize,
        width: usize,
    },
    /// Dense job classifier whose logits are adjusted by a relaxed rule gate.
    Gated {
        width: usize,
        source: String,
        gate: String,
    },
}

impl ModelSpec {
    pub fn scenario(&self) -> Scenario {
        match self {
            ModelSpec::Rules { scenario, .. } | ModelSpec::Dense { scenario, .. } => *scenario,
            ModelSpec::Gated { .. } => Scenario::Recodex,
        }
    }

    pub fn rules(scenario: Scenario, source: impl Into<String>) -> Self {
        ModelSpec::Rules {
            scenario,
            source: source.into(),
            target: match scenario {
                Scenario::Industry => Target::Rule(scenario.oracle_name().into()),
                Scenario::Recodex => Target::Entry(scenario.oracle_name().into()),
            },
        }
    }

    pub fn gated(width: usize) -> Self {
        ModelSpec::Gated {
            width,
            source: rules::IS_SLOW_RELAXED.into(),
            gate: Scenario::Recodex.oracle_name().into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    /// One sigmoid output; `> 0.5` means true.
    Binary,
    Softmax { classes: usize },
    /// Softmax over fast classes followed by slow classes.
    Gated { fast: usize, slow: usize },
}

impl Head {
    pub fn outputs(&self) -> usize {
        match *self {
            Head::Binary => 1,
            Head::Softmax { classes } => classes,
            Head::Gated { fast, slow } => fast + slow,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("rule file does not compile:\n{0}")]
    Front(String),
    #[error(transparent)]
    Fuzz(#[from] FuzzError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("model expects {expected} records, got {got}")]
    ScenarioMismatch { expected: Scenario, got: Scenario },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct DiffModel {
    pub spec: ModelSpec,
    pub config: FuzzConfig,
    pub graph: Graph,
    pub params: ParamStore,
    pub plan: Option<RulePlan>,
    pub features: Option<Features>,
    pub feature_offset: usize,
    pub input_width: usize,
    pub head: Head,
    pub sites: Vec<SiteInfo>,
    /// Connective nodes in the compiled rule.
    pub connectives: usize,
}

impl DiffModel {
    pub fn build(spec: ModelSpec, config: FuzzConfig) -> Result<DiffModel, ModelError> {
        config.validate().map_err(ModelError::Invalid)?;
        let mut g = Graph::new();
        let mut params = ParamStore::new();
        let mut plan = None;
        let mut sites = vec![];
        let mut connectives = 0;
        let mut features = None;
        let mut feature_offset = 0;

        let (output, head) = match &spec {
            ModelSpec::Rules {
                scenario,
                source,
                target,
            } => {
                let c = compile_for(*scenario, source, target.clone(), &config, &mut g, &mut params, 0)?;
                feature_offset = c.plan.width;
                plan = Some(c.plan);
                sites = c.sites;
                connectives = c.connectives;
                (c.output, Head::Binary)
            }
            ModelSpec::Dense { scenario, depth, width } => {
                if *depth == 0 || *width == 0 {
                    return Err(ModelError::Invalid("dense model needs depth and width of at least 1".into()));
                }
                let f = Features::for_scenario(*scenario);
                features = Some(f);
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let x = g.input(0, f.width());
                let h = hidden_stack(&mut g, &mut params, &mut rng, &config, x, f.width(), *depth, *width);
                match scenario {
                    Scenario::Industry => {
                        let o = dense(&mut g, &mut params, &mut rng, &config, h, *width, 1, "out");
                        (g.sigmoid(o), Head::Binary)
                    }
                    Scenario::Recodex => {
                        let o = dense(&mut g, &mut params, &mut rng, &config, h, *width, N_WORKERS, "out");
                        (g.softmax(o), Head::Softmax { classes: N_WORKERS })
                    }
                }
            }
            ModelSpec::Gated { width, source, gate } => {
                if *width == 0 {
                    return Err(ModelError::Invalid("gated model needs width of at least 1".into()));
                }
                let c = compile_for(
                    Scenario::Recodex,
                    source,
                    Target::Entry(gate.clone()),
                    &config,
                    &mut g,
                    &mut params,
                    0,
                )?;
                feature_offset = c.plan.width;
                let f = Features::Job;
                features = Some(f);
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
                let x = g.input(feature_offset, f.width());
                let h = hidden_stack(&mut g, &mut params, &mut rng, &config, x, f.width(), 1, *width);
                let fast = dense(&mut g, &mut params, &mut rng, &config, h, *width, N_FAST, "fast");
                let slow = dense(&mut g, &mut params, &mut rng, &config, h, *width, N_SLOW, "slow");
                let out = classify_head(&mut g, slow, fast, c.output);
                plan = Some(c.plan);
                sites = c.sites;
                connectives = c.connectives;
                (out, Head::Gated { fast: N_FAST, slow: N_SLOW })
            }
        };
        g.set_output(output);
        let input_width = feature_offset + features.map_or(0, |f| f.width());
        Ok(DiffModel {
            spec,
            config,
            graph: g,
            params,
            plan,
            features,
            feature_offset,
            input_width,
            head,
            sites,
            connectives,
        })
    }

    /// Model from one of the bundled access rule files.
    pub fn from_relaxation(r: crate::scenario::Relaxation, config: FuzzConfig) -> Result<DiffModel, ModelError> {
        DiffModel::build(ModelSpec::rules(Scenario::Industry, r.source()), config)
    }

    pub fn scenario(&self) -> Scenario {
        self.spec.scenario()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Closed-form count from the site descriptors, for cross-checking.
    pub fn site_param_count(&self) -> usize {
        self.sites
            .iter()
            .map(|s| super::compile::site_param_count(&s.descr, s.qualifier_values.len()))
            .sum()
    }

    pub fn workspace(&self) -> Workspace<f64> {
        Workspace::new(&self.graph)
    }

    /// Fills `out` (length `input_width`). Returns `false` when the rule's
    /// selection bindings find nothing, so the rule cannot fire.
    pub fn encode(&self, input: &Input, out: &mut [f64]) -> Result<bool, ModelError> {
        if input.scenario() != self.scenario() {
            return Err(ModelError::ScenarioMismatch {
                expected: self.scenario(),
                got: input.scenario(),
            });
        }
        let mut ok = true;
        if let Some(plan) = &self.plan {
            ok = plan.encode(&input.bind(), &mut out[..self.feature_offset])?;
        }
        if let Some(f) = self.features {
            f.encode(input, &mut out[self.feature_offset..]);
        }
        Ok(ok)
    }

    /// Runs an encoded input through the graph.
    pub fn forward<'w>(&self, ws: &'w mut Workspace<f64>, x: &[f64]) -> Result<&'w [f64], ModelError> {
        self.graph.forward(ws, x, &self.params.values)?;
        Ok(self.graph.output_values(ws))
    }

    /// Output for one record: a probability for binary heads, class
    /// probabilities otherwise. A rule that cannot bind outputs 0.
    pub fn predict(&self, ws: &mut Workspace<f64>, input: &Input) -> Result<Vec<f64>, ModelError> {
        let mut x = vec![0.0; self.input_width];
        if !self.encode(input, &mut x)? {
            return Ok(vec![0.0; self.head.outputs()]);
        }
        Ok(self.forward(ws, &x)?.to_vec())
    }

    /// Largest relative gradient error over `inputs`, each evaluated at a
    /// fresh random perturbation of the parameters. `None` when the model has
    /// nothing to train.
    pub fn grad_check(
        &self,
        inputs: &[Input],
        seed: u64,
        tamper: Option<&dyn Fn(&mut [f64])>,
    ) -> Result<Option<GradCheck>, ModelError> {
        if self.params.is_empty() {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: Option<GradCheck> = None;
        let mut x = vec![0.0; self.input_width];
        for input in inputs {
            if !self.encode(input, &mut x)? {
                continue;
            }
            let mut p = self.params.clone();
            for v in &mut p.values {
                *v += rng.random_range(-0.5..0.5);
            }
            p.apply_clamps();
            let upstream: Vec<f64> = (0..self.head.outputs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = grad_check(&self.graph, &x, &p.values, &upstream, GRADCHECK_STEP, tamper)?;
            if worst.is_none_or(|w| r.max_rel_error > w.max_rel_error) {
                worst = Some(r);
            }
        }
        Ok(worst)
    }

    /// Learned decision boundaries of the threshold sites, in raw units.
    pub fn thresholds(&self) -> Vec<Threshold> {
        let mut out = vec![];
        for s in &self.sites {
            let d = &s.descr;
            if !matches!(d.kind, TrainableKind::AboveThreshold | TrainableKind::BelowThreshold) {
                continue;
            }
            let (Some(lo), Some(hi)) = (d.min, d.max) else { continue };
            let (lo, hi) = (lo.components()[0], hi.components()[0]);
            for (k, &start) in s.sets.iter().enumerate() {
                let w_t = self.params.values[start];
                out.push(Threshold {
                    site_id: d.site_id.clone(),
                    qualifier: s.qualifier_values.get(k).cloned(),
                    w_t,
                    boundary: lo + w_t * (hi - lo),
                    min: lo,
                    max: hi,
                });
            }
        }
        out
    }

    pub fn export(&self) -> ModelDoc {
        let sites = self
            .sites
            .iter()
            .map(|s| SiteDoc {
                kind: s.descr.kind,
                site_id: s.descr.site_id.clone(),
                min: s.descr.min.map(|b| b.components()),
                max: s.descr.max.map(|b| b.components()),
                capacity: s.descr.capacity,
                mu_x: s.mu_x.clone(),
                mu_y: s.mu_y.clone(),
                sigma: s.sigma,
                qualifier_values: s.qualifier_values.clone(),
                params: s
                    .sets
                    .iter()
                    .map(|&start| self.params.values[start..start + s.per_set].to_vec())
                    .collect(),
            })
            .collect();
        ModelDoc {
            format: MODEL_FORMAT.into(),
            spec: self.spec.clone(),
            config: self.config.clone(),
            head: self.head.clone(),
            param_count: self.param_count(),
            sites,
            params: self.params.values.clone(),
        }
    }

    pub fn import(doc: ModelDoc) -> Result<DiffModel, ModelError> {
        if doc.format != MODEL_FORMAT {
            return Err(ModelError::Invalid(format!("unsupported format `{}`", doc.format)));
        }
        let mut m = DiffModel::build(doc.spec, doc.config)?;
        if doc.params.len() != m.param_count() || doc.param_count != m.param_count() {
            return Err(ModelError::Invalid(format!(
                "model has {} parameters, document carries {}",
                m.param_count(),
                doc.params.len()
            )));
        }
        if m.head != doc.head {
            return Err(ModelError::Invalid("head type does not match the spec".into()));
        }
        if doc.sites.len() != m.sites.len() {
            return Err(ModelError::Invalid(format!(
                "model has {} trainable sites, document lists {}",
                m.sites.len(),
                doc.sites.len()
            )));
        }
        // The stored qualifier list is authoritative: values it omits were
        // never seen in training and are refused at encode time.
        for (d, s) in doc.sites.iter().zip(&m.sites) {
            if d.qualifier_values == s.qualifier_values {
                continue;
            }
            let key = s.descr.qualifier_key.clone().unwrap_or_default();
            let ok = m.plan.as_mut().is_some_and(|p| p.restrict_qualifier(&key, &d.qualifier_values));
            if !ok {
                return Err(ModelError::Invalid(format!(
                    "site {} lists qualifier values outside the {key} domain",
                    d.site_id
                )));
            }
        }
        m.params.values = doc.params;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.export()).expect("model documents always serialize")
    }

    pub fn from_json(s: &str) -> Result<DiffModel, ModelError> {
        let doc: ModelDoc = serde_json::from_str(s).map_err(|e| ModelError::Invalid(e.to_string()))?;
        DiffModel::import(doc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub site_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qualifier: Option<String>,
    pub w_t: f64,
    pub boundary: f64,
    pub min: f64,
    pub max: f64,
}

pub const MODEL_FORMAT: &str = "rulefuzz-model/1";
/// Central-difference step used by [`DiffModel::grad_check`].
pub const GRADCHECK_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteDoc {
    pub kind: TrainableKind,
    pub site_id: String,
    pub min: Option<Vec<f64>>,
    pub max: Option<Vec<f64>>,
    pub capacity: u32,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub mu_x: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub mu_y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub qualifier_values: Vec<String>,
    /// One array per qualifier value (a single array when unqualified).
    pub params: Vec<Vec<f64>>,
}

/// Serialized model. `params` is authoritative; the per-site arrays are a
/// readable view of the same values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format: String,
    pub spec: ModelSpec,
    pub config: FuzzConfig,
    pub head: Head,
    pub param_count: usize,
    pub sites: Vec<SiteDoc>,
    pub params: Vec<f64>,
}

fn compile_for(
    scenario: Scenario,
    source: &str,
    target: Target,
    config: &FuzzConfig,
    g: &mut Graph,
    params: &mut ParamStore,
    base: usize,
) -> Result<super::CompiledRule, ModelError> {
    let typed = dsl::compile(source, &scenario.schema()).map_err(|ds| {
        ModelError::Front(ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
    })?;
    Ok(compile_rule(Arc::new(typed), target, config, g, params, base)?)
}

#[allow(clippy::too_many_arguments)]
fn hidden_stack(
    g: &mut Graph,
    params: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    config: &FuzzConfig,
    x: NodeId,
    input_width: usize,
    depth: usize,
    width: usize,
) -> NodeId {
    let mut h = x;
    let mut w_in = input_width;
    for layer in 0..depth {
        let z = dense(g, params, rng, config, h, w_in, width, &format!("hidden{layer}"));
        h = g.relu(z);
        w_in = width;
    }
    h
}

/// Affine layer `W x + b`; weights uniform in `±init_range`, biases zero.
#[allow(clippy::too_many_arguments)]
fn dense(
    g: &mut Graph,
    params: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    config: &FuzzConfig,
    x: NodeId,
    n_in: usize,
    n_out: usize,
    name: &str,
) -> NodeId {
    let r = config.init_range;
    let w: Vec<f64> = (0..n_in * n_out).map(|_| rng.random_range(-r..=r)).collect();
    let ws = params.alloc(&format!("{name}.w"), &w, None);
    let bs = params.alloc(&format!("{name}.b"), &vec![0.0; n_out], None);
    let wn = g.param(single(ws), n_in * n_out);
    let bn = g.param(single(bs), n_out);
    let z = g.matvec(wn, x, n_out, n_in);
    g.add(z, bn)
}

fn single(start: usize) -> ParamRef {
    ParamRef {
        sets: vec![start],
        selector: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Relaxation;

    fn count(r: Relaxation) -> usize {
        DiffModel::from_relaxation(r, FuzzConfig::default()).unwrap().param_count()
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(count(Relaxation::Strict), 0);
        assert_eq!(count(Relaxation::TimeAb), 2);
        assert_eq!(count(Relaxation::TimeRight), 21);
        assert_eq!(count(Relaxation::All), 1229);
        let all = DiffModel::from_relaxation(Relaxation::All, FuzzConfig::default()).unwrap();
        assert_eq!(all.site_param_count(), 1229);
    }

    #[test]
    fn baseline_counts() {
        let dense = |depth, width| {
            DiffModel::build(
                ModelSpec::Dense {
                    scenario: Scenario::Industry,
                    depth,
                    width,
                },
                FuzzConfig::default(),
            )
            .unwrap()
            .param_count()
        };
        assert_eq!(dense(2, 256), 68_353);
        assert_eq!(dense(1, 128), 1_281);
        assert!(DiffModel::build(
            ModelSpec::Dense {
                scenario: Scenario::Industry,
                depth: 0,
                width: 8
            },
            FuzzConfig::default()
        )
        .is_err());
    }

    #[test]
    fn strict_model_has_one_gate_and_no_connectives() {
        let m = DiffModel::from_relaxation(Relaxation::Strict, FuzzConfig::default()).unwrap();
        assert_eq!(m.connectives, 0);
        assert_eq!(m.input_width, 1);
    }

    #[test]
    fn sites_are_one_per_descriptor() {
        let m = DiffModel::from_relaxation(Relaxation::All, FuzzConfig::default()).unwrap();
        let typed = dsl::compile(Relaxation::All.source(), &Scenario::Industry.schema()).unwrap();
        let mut ids: Vec<_> = m.sites.iter().map(|s| s.descr.site_id.clone()).collect();
        let mut want: Vec<_> = typed.trainables.iter().map(|d| d.site_id.clone()).collect();
        ids.sort();
        want.sort();
        assert_eq!(ids, want);
        assert_eq!(m.sites.iter().find(|s| !s.qualifier_values.is_empty()).unwrap().sets.len(), 3);
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let mut m = DiffModel::from_relaxation(Relaxation::All, FuzzConfig::default()).unwrap();
        for (i, v) in m.params.values.iter_mut().enumerate() {
            *v = (i as f64 * 0.7311).sin() / 3.0;
        }
        let back = DiffModel::from_json(&m.to_json()).unwrap();
        let a: Vec<u64> = m.params.values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.to_json(), m.to_json());
    }

    #[test]
    fn relaxed_models_pass_gradcheck() {
        let d = crate::data::gen_random_industry(&crate::data::GenSpec::new(8, 5)).unwrap();
        let inputs: Vec<Input> = d.records.iter().map(|r| r.input.clone()).collect();
        for r in [Relaxation::TimeAb, Relaxation::TimeRight, Relaxation::All] {
            let m = DiffModel::from_relaxation(r, FuzzConfig::default()).unwrap();
            let g = m.grad_check(&inputs, 3, None).unwrap().unwrap();
            assert!(g.max_rel_error < 1e-4, "{r}: {g:?}");
        }
        let strict = DiffModel::from_relaxation(Relaxation::Strict, FuzzConfig::default()).unwrap();
        assert_eq!(strict.grad_check(&inputs, 3, None).unwrap(), None);
        let m = DiffModel::from_relaxation(Relaxation::TimeRight, FuzzConfig::default()).unwrap();
        let bad = m.grad_check(&inputs, 3, Some(&|g: &mut [f64]| g[0] += 1.0)).unwrap().unwrap();
        assert!(bad.max_rel_error > 1e-4);
    }

    #[test]
    fn gated_model_shape() {
        let m = DiffModel::build(ModelSpec::gated(128), FuzzConfig::default()).unwrap();
        assert_eq!(m.head.outputs(), 4);
        // two thresholds plus 10x128 hidden and two 128x2 output layers
        assert_eq!(m.param_count(), 2 + 10 * 128 + 128 + 2 * (128 * 2 + 2));
    }
}
