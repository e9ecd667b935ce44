//! Compilation of a typed rule into a graph plus an input-encoding plan.
//!
//! Subtrees without trainable predicates are evaluated strictly at encoding
//! time and enter the graph as 0/1 gates. Predicate calls that reach a
//! trainable site are inlined; each inlined call gets a frame whose
//! arguments are evaluated strictly in the caller's frame.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blocks::*;
use super::FuzzConfig;
use super::MuPlacement;
use crate::autodiff::{Graph, NodeId, ParamRef, ParamStore};
use crate::dsl::typeck::{TKind, TrainableDescr, TrainableKind, TypedExpr, TypedRuleFile};
use crate::eval::{EvalError, Evaluator, Value};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FuzzError {
    #[error("no rule or predicate named `{0}`")]
    UnknownTarget(String),
    #[error("{span}: {what} cannot be relaxed")]
    Unsupported { span: String, what: String },
    #[error("{0}")]
    Front(String),
}

/// What the compiled graph computes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Rule(String),
    /// A predicate evaluated with parameters bound to schema roots.
    Entry(String),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Rule(n) | Target::Entry(n) => n,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameSpec {
    pub parent: usize,
    pub instance: usize,
    pub args: Vec<TypedExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlotKind {
    /// Strict truth value, 0 or 1.
    Gate,
    Scalar,
    Vec2,
    /// One-hot rows of `m_cat` for each of `seq_len` list positions; missing
    /// positions stay all-zero.
    Categories {
        seq_len: usize,
        m_cat: usize,
        field: Option<usize>,
    },
    /// Index of the qualifier value. `known[i]` is false for values the
    /// model must refuse (see [`RulePlan::restrict_qualifier`]).
    Qualifier {
        values: Vec<String>,
        key: String,
        known: Vec<bool>,
    },
}

impl SlotKind {
    pub fn width(&self) -> usize {
        match self {
            SlotKind::Gate | SlotKind::Scalar | SlotKind::Qualifier { .. } => 1,
            SlotKind::Vec2 => 2,
            SlotKind::Categories { seq_len, m_cat, .. } => seq_len * m_cat,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Slot {
    pub kind: SlotKind,
    pub frame: usize,
    pub expr: TypedExpr,
    pub offset: usize,
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum EncodeError {
    #[error("record does not fit the rule: {0}")]
    Eval(#[from] EvalError),
    #[error("unseen qualifier value `{value}` for {key}")]
    UnseenQualifier { key: String, value: String },
}

/// How to turn a record into the input vector of a compiled rule.
#[derive(Clone, Debug)]
pub struct RulePlan {
    pub typed: Arc<TypedRuleFile>,
    pub target: Target,
    /// Frame 0 is the target's own frame; the `parent` of entry 0 is unused.
    pub frames: Vec<FrameSpec>,
    pub slots: Vec<Slot>,
    pub width: usize,
}

impl RulePlan {
    /// Limits the qualifier values accepted for `key` to `allowed`; records
    /// carrying any other value fail to encode. Returns false if some
    /// allowed value is not in the domain.
    pub fn restrict_qualifier(&mut self, key: &str, allowed: &[String]) -> bool {
        for s in &mut self.slots {
            if let SlotKind::Qualifier { values, key: k, known } = &mut s.kind {
                if k != key {
                    continue;
                }
                if allowed.iter().any(|a| !values.contains(a)) {
                    return false;
                }
                for (v, flag) in values.iter().zip(known.iter_mut()) {
                    *flag = allowed.contains(v);
                }
            }
        }
        true
    }

    /// Writes slot values into `out[..width]`. Returns `false` when the
    /// rule's selection bindings find nothing, in which case the rule cannot
    /// fire and the model output is defined as 0.
    pub fn encode(&self, globals: &[Value], out: &mut [f64]) -> Result<bool, EncodeError> {
        let ev = Evaluator::new(&self.typed, globals);
        let mut frames: Vec<Vec<Value>> = Vec::with_capacity(self.frames.len());
        match &self.target {
            Target::Rule(name) => {
                let rule = self.typed.rule(name).expect("target checked at compile time");
                match ev.rule_frame(rule)? {
                    Some(f) => frames.push(f),
                    None => return Ok(false),
                }
            }
            Target::Entry(name) => {
                let e = self.typed.entry(name).expect("target checked at compile time");
                let inst = &self.typed.instances[e.instance];
                let mut f = vec![Value::Bool(false); inst.frame_size];
                for (i, (_, root)) in e.params.iter().enumerate() {
                    f[i] = globals[*root].clone();
                }
                frames.push(f);
            }
        }
        for spec in &self.frames[1..] {
            let f = ev.call_frame(spec.instance, &spec.args, &mut frames[spec.parent])?;
            frames.push(f);
        }
        for s in &self.slots {
            let frame = &mut frames[s.frame];
            let o = s.offset;
            match &s.kind {
                SlotKind::Gate => {
                    let v = match ev.eval(&s.expr, frame) {
                        Ok(v) => v.as_bool(),
                        Err(EvalError::EmptyPipeline) => false,
                        Err(e) => return Err(e.into()),
                    };
                    out[o] = if v { 1.0 } else { 0.0 };
                }
                SlotKind::Scalar => out[o] = ev.eval(&s.expr, frame)?.as_num(),
                SlotKind::Vec2 => match ev.eval(&s.expr, frame)? {
                    Value::Vec2(x, y) => {
                        out[o] = x;
                        out[o + 1] = y;
                    }
                    other => return Err(EvalError::Schema(format!("position expected, got {other:?}")).into()),
                },
                SlotKind::Categories { seq_len, m_cat, field } => {
                    let Value::List(items) = ev.eval(&s.expr, frame)? else {
                        return Err(EvalError::Schema("list expected".into()).into());
                    };
                    out[o..o + seq_len * m_cat].fill(0.0);
                    for (t, it) in items.iter().take(*seq_len).enumerate() {
                        let cat = match (it, field) {
                            (Value::Enum(i), None) => *i,
                            (Value::Record(fs), Some(f)) => match &fs[*f] {
                                Value::Enum(i) => *i,
                                other => {
                                    return Err(EvalError::Schema(format!("category expected, got {other:?}")).into())
                                }
                            },
                            (other, _) => {
                                return Err(EvalError::Schema(format!("category expected, got {other:?}")).into())
                            }
                        };
                        out[o + t * m_cat + cat] = 1.0;
                    }
                }
                SlotKind::Qualifier { values, key, known } => match ev.eval(&s.expr, frame)? {
                    Value::Enum(i) if known.get(i) == Some(&true) => out[o] = i as f64,
                    Value::Enum(i) => {
                        return Err(EncodeError::UnseenQualifier {
                            key: key.clone(),
                            value: values.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
                        })
                    }
                    other => return Err(EvalError::Schema(format!("qualifier expected, got {other:?}")).into()),
                },
            }
        }
        Ok(true)
    }
}

/// Parameters and constants of one trainable site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteInfo {
    pub descr: TrainableDescr,
    /// First parameter index of each set (one per qualifier value).
    pub sets: Vec<usize>,
    pub per_set: usize,
    pub qualifier_values: Vec<String>,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma: Option<f64>,
}

/// The part of a model produced from a rule.
#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub plan: RulePlan,
    pub output: NodeId,
    pub sites: Vec<SiteInfo>,
    /// Connective nodes created (one per AST `&&`, `||` or `!`).
    pub connectives: usize,
}

/// Compiles `target` into `g`, allocating parameters in `params`. Slot
/// offsets start at `input_base`.
pub fn compile_rule(
    typed: Arc<TypedRuleFile>,
    target: Target,
    config: &FuzzConfig,
    g: &mut Graph,
    params: &mut ParamStore,
    input_base: usize,
) -> Result<CompiledRule, FuzzError> {
    let root_expr = match &target {
        Target::Rule(name) => {
            typed
                .rule(name)
                .ok_or_else(|| FuzzError::UnknownTarget(name.clone()))?
                .condition
                .clone()
        }
        Target::Entry(name) => {
            let e = typed
                .entry(name)
                .ok_or_else(|| FuzzError::UnknownTarget(name.clone()))?;
            typed.instances[e.instance].body.clone()
        }
    };
    let mut c = Compiler {
        typed: &typed,
        g,
        params,
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        frames: vec![FrameSpec {
            parent: 0,
            instance: usize::MAX,
            args: vec![],
        }],
        slots: vec![],
        width: input_base,
        base: input_base,
        sites: vec![],
        site_index: HashMap::new(),
        connectives: 0,
    };
    let output = c.expr(&root_expr, 0)?;
    let Compiler {
        frames,
        slots,
        width,
        sites,
        connectives,
        ..
    } = c;
    let plan = RulePlan {
        typed: typed.clone(),
        target,
        frames,
        slots,
        width: width - input_base,
    };
    Ok(CompiledRule {
        plan,
        output,
        sites,
        connectives,
    })
}

struct Compiler<'a> {
    typed: &'a TypedRuleFile,
    g: &'a mut Graph,
    params: &'a mut ParamStore,
    config: &'a FuzzConfig,
    rng: ChaCha8Rng,
    frames: Vec<FrameSpec>,
    slots: Vec<Slot>,
    width: usize,
    base: usize,
    sites: Vec<SiteInfo>,
    site_index: HashMap<usize, usize>,
    connectives: usize,
}

impl Compiler<'_> {
    fn slot(&mut self, kind: SlotKind, frame: usize, expr: &TypedExpr) -> NodeId {
        let len = kind.width();
        let offset = self.width;
        self.width += len;
        self.slots.push(Slot {
            kind,
            frame,
            expr: expr.clone(),
            offset: offset - self.base,
        });
        self.g.input(offset, len)
    }

    fn unsupported<T>(&self, e: &TypedExpr, what: &str) -> Result<T, FuzzError> {
        Err(FuzzError::Unsupported {
            span: e.span.to_string(),
            what: what.to_string(),
        })
    }

    fn expr(&mut self, e: &TypedExpr, frame: usize) -> Result<NodeId, FuzzError> {
        if !e.contains_trainable(self.typed) {
            let x = self.slot(SlotKind::Gate, frame, e);
            return Ok(t_strict_gate(self.g, x));
        }
        let p = self.config.p;
        match &e.kind {
            TKind::And(xs) | TKind::Or(xs) => {
                let children = xs
                    .iter()
                    .map(|x| self.expr(x, frame))
                    .collect::<Result<Vec<_>, _>>()?;
                self.connectives += 1;
                Ok(if matches!(e.kind, TKind::And(_)) {
                    t_conj(self.g, &children, p)
                } else {
                    t_disj(self.g, &children, p)
                })
            }
            TKind::Not(x) => {
                let c = self.expr(x, frame)?;
                self.connectives += 1;
                Ok(t_neg(self.g, c))
            }
            TKind::Call { instance, args } => {
                if args.iter().any(|a| a.contains_trainable(self.typed)) {
                    return self.unsupported(e, "a trainable predicate inside a call argument");
                }
                self.frames.push(FrameSpec {
                    parent: frame,
                    instance: *instance,
                    args: args.clone(),
                });
                let callee = self.frames.len() - 1;
                let body = self.typed.instances[*instance].body.clone();
                self.expr(&body, callee)
            }
            TKind::Trainable {
                site,
                value,
                qualifier,
                category_field,
            } => self.trainable(e, *site, value, qualifier.as_deref(), *category_field, frame),
            _ => self.unsupported(e, "a trainable predicate nested in a comparison or value"),
        }
    }

    fn uniform(&mut self, n: usize) -> Vec<f64> {
        let r = self.config.init_range;
        (0..n).map(|_| self.rng.random_range(-r..r)).collect()
    }

    fn trainable(
        &mut self,
        e: &TypedExpr,
        site: usize,
        value: &TypedExpr,
        qualifier: Option<&TypedExpr>,
        category_field: Option<usize>,
        frame: usize,
    ) -> Result<NodeId, FuzzError> {
        if value.contains_trainable(self.typed) || qualifier.is_some_and(|q| q.contains_trainable(self.typed)) {
            return self.unsupported(e, "a trainable predicate inside a trainable argument");
        }
        let descr = self.typed.trainables[site].clone();

        let (selector, qualifier_values) = match (qualifier, descr.qualifier_enum) {
            (Some(q), Some(domain)) => {
                let values = self.typed.schema.enums[domain].values.clone();
                let key = descr.qualifier_key.clone().unwrap_or_default();
                let node = self.slot(
                    SlotKind::Qualifier {
                        known: vec![true; values.len()],
                        values: values.clone(),
                        key,
                    },
                    frame,
                    q,
                );
                let offset = match self.g.nodes()[node].op {
                    crate::autodiff::Op::Input(o) => o,
                    _ => unreachable!(),
                };
                (Some(offset), values)
            }
            _ => (None, vec![]),
        };

        let info_idx = match self.site_index.get(&site) {
            Some(&i) => i,
            None => {
                let info = self.allocate(&descr, &qualifier_values)?;
                self.sites.push(info);
                self.site_index.insert(site, self.sites.len() - 1);
                self.sites.len() - 1
            }
        };
        let info = self.sites[info_idx].clone();
        let pref = |off: usize| ParamRef {
            sets: info.sets.iter().map(|s| s + off).collect(),
            selector,
        };
        let p = self.config.p;
        let c = descr.capacity as usize;
        let bounds = |b: &Option<crate::dsl::typeck::Bound>| b.map(|b| b.components()).unwrap_or_default();
        let (min, max) = (bounds(&descr.min), bounds(&descr.max));

        Ok(match descr.kind {
            TrainableKind::AboveThreshold | TrainableKind::BelowThreshold => {
                let x = self.slot(SlotKind::Scalar, frame, value);
                let xh = normalize(self.g, x, &min, &max);
                let wt = self.g.param(pref(0), 1);
                if descr.kind == TrainableKind::AboveThreshold {
                    t_above(self.g, xh, wt, p)
                } else {
                    t_below(self.g, xh, wt, p)
                }
            }
            TrainableKind::RightValue1D => {
                let x = self.slot(SlotKind::Scalar, frame, value);
                let xh = normalize(self.g, x, &min, &max);
                let wa = self.g.param(pref(0), c);
                let wb = self.g.param(pref(c), 1);
                t_rbf1d(self.g, xh, &info.mu_x, info.sigma.unwrap(), wa, wb)
            }
            TrainableKind::RightValue2D => {
                let x = self.slot(SlotKind::Vec2, frame, value);
                let xh = normalize(self.g, x, &min, &max);
                // split the normalized pair into scalars
                let (xs, ys) = self.split2(xh);
                let wa = self.g.param(pref(0), c * c);
                let wb = self.g.param(pref(c * c), 1);
                t_rbf2d(self.g, xs, ys, &info.mu_x, &info.mu_y, info.sigma.unwrap(), wa, wb)
            }
            TrainableKind::RightCategories => {
                let seq_len = descr.seq_len.unwrap_or(1);
                let m_cat = descr.categories.unwrap_or(1) as usize;
                let x = self.slot(
                    SlotKind::Categories {
                        seq_len,
                        m_cat,
                        field: category_field,
                    },
                    frame,
                    value,
                );
                let m = seq_len * m_cat;
                let wh = self.g.param(pref(0), c * m);
                let bh = self.g.param(pref(c * m), c);
                let wo = self.g.param(pref(c * m + c), c);
                let bo = self.g.param(pref(c * m + 2 * c), 1);
                t_categories(self.g, x, m, c, wh, bh, wo, bo)
            }
        })
    }

    /// Picks the two components of a length-2 node via masked sums.
    fn split2(&mut self, v: NodeId) -> (NodeId, NodeId) {
        let mx = self.g.constant(&[1.0, 0.0]);
        let my = self.g.constant(&[0.0, 1.0]);
        let a = self.g.mul(v, mx);
        let b = self.g.mul(v, my);
        (self.g.sum(a), self.g.sum(b))
    }

    fn allocate(&mut self, d: &TrainableDescr, qualifier_values: &[String]) -> Result<SiteInfo, FuzzError> {
        let c = d.capacity as usize;
        let n_sets = qualifier_values.len().max(1);
        let (mut mu_x, mut mu_y, mut sigma) = (vec![], vec![], None);
        match d.kind {
            TrainableKind::RightValue1D => {
                mu_x = match self.config.mu_placement {
                    MuPlacement::Grid => mu_grid(c),
                    MuPlacement::Random => (0..c).map(|_| self.rng.random::<f64>()).collect(),
                };
                sigma = Some(rbf_sigma(c));
            }
            TrainableKind::RightValue2D => {
                (mu_x, mu_y) = match self.config.mu_placement {
                    MuPlacement::Grid => mu_grid_2d(c),
                    MuPlacement::Random => (0..c * c)
                        .map(|_| (self.rng.random::<f64>(), self.rng.random::<f64>()))
                        .unzip(),
                };
                sigma = Some(rbf_sigma(c));
            }
            _ => {}
        }
        let mut sets = Vec::with_capacity(n_sets);
        let mut per_set = 0;
        for k in 0..n_sets {
            let name = match qualifier_values.get(k) {
                Some(q) => format!("{}[{q}]", d.site_id),
                None => d.site_id.clone(),
            };
            let (init, clamp): (Vec<f64>, _) = match d.kind {
                TrainableKind::AboveThreshold | TrainableKind::BelowThreshold => (vec![0.5], Some((0.0, 1.0))),
                TrainableKind::RightValue1D => {
                    let mut w = self.uniform(c);
                    w.push(0.0);
                    (w, None)
                }
                TrainableKind::RightValue2D => {
                    let mut w = self.uniform(c * c);
                    w.push(0.0);
                    (w, None)
                }
                TrainableKind::RightCategories => {
                    let m = d.category_width();
                    let mut w = self.uniform(c * m);
                    w.extend(std::iter::repeat_n(self.config.hidden_bias_init, c));
                    // positive output weights: a negative start drives the hidden
                    // units below zero before the sign can flip
                    w.extend(self.uniform(c).into_iter().map(f64::abs));
                    w.push(0.0);
                    (w, None)
                }
            };
            per_set = init.len();
            sets.push(self.params.alloc(&name, &init, clamp));
        }
        Ok(SiteInfo {
            descr: d.clone(),
            sets,
            per_set,
            qualifier_values: qualifier_values.to_vec(),
            mu_x,
            mu_y,
            sigma,
        })
    }
}

/// Closed-form parameter count of one site.
pub fn site_param_count(d: &TrainableDescr, qualifier_values: usize) -> usize {
    let c = d.capacity as usize;
    let per = match d.kind {
        TrainableKind::AboveThreshold | TrainableKind::BelowThreshold => 1,
        TrainableKind::RightValue1D => c + 1,
        TrainableKind::RightValue2D => c * c + 1,
        TrainableKind::RightCategories => categories_param_count(d.category_width(), c),
    };
    per * qualifier_values.max(1)
}
