//! Strict interpreter: evaluates type-checked rules exactly as written.

use std::cell::Cell;
use std::cmp::Ordering;
use std::rc::Rc;

use crate::dsl::ast::ActionDescr;
use crate::dsl::typeck::{
    ArithOp, BindingValue, CmpOp, TKind, TStage, TypedExpr, TypedRule, TypedRuleFile,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Vec2(f64, f64),
    Enum(usize),
    EnumSet(Rc<[usize]>),
    Record(Rc<Vec<Value>>),
    List(Rc<Vec<Value>>),
}

impl Value {
    pub fn record(fields: Vec<Value>) -> Self {
        Value::Record(Rc::new(fields))
    }

    pub fn list(items: Vec<Value>) -> Self {
        Value::List(Rc::new(items))
    }

    pub fn as_bool(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            other => panic!("type checker admitted non-Bool value {other:?}"),
        }
    }

    pub fn as_num(&self) -> f64 {
        match self {
            Value::Num(v) => *v,
            other => panic!("type checker admitted non-numeric value {other:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("first() applied to an empty list")]
    EmptyPipeline,
    #[error("trainable predicate `{0}` has no strict meaning")]
    Trainable(String),
    #[error("record does not match schema: {0}")]
    Schema(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub fired: bool,
    pub action: Option<ActionDescr>,
    /// Truth value of each top-level conjunct of the condition.
    pub conjunct_bits: Vec<bool>,
}

impl Decision {
    /// Bits rendered as a string of `0`/`1`, most significant first.
    pub fn stratum(&self) -> String {
        self.conjunct_bits
            .iter()
            .map(|b| if *b { '1' } else { '0' })
            .collect()
    }
}

/// The top-level conjuncts of a condition.
pub fn conjuncts(cond: &TypedExpr) -> &[TypedExpr] {
    match &cond.kind {
        TKind::And(xs) => xs,
        _ => std::slice::from_ref(cond),
    }
}

pub struct Evaluator<'a> {
    file: &'a TypedRuleFile,
    globals: &'a [Value],
    empty_pipelines: Cell<u64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(file: &'a TypedRuleFile, globals: &'a [Value]) -> Self {
        Evaluator {
            file,
            globals,
            empty_pipelines: Cell::new(0),
        }
    }

    /// How many empty `first()` results were turned into `false`.
    pub fn empty_pipeline_count(&self) -> u64 {
        self.empty_pipelines.get()
    }

    fn absorb_empty(&self, r: Result<Value, EvalError>) -> Result<Value, EvalError> {
        match r {
            Err(EvalError::EmptyPipeline) => {
                self.empty_pipelines.set(self.empty_pipelines.get() + 1);
                Ok(Value::Bool(false))
            }
            other => other,
        }
    }

    /// Sets up the rule frame: parameters and bindings. Returns `None` when a
    /// selection binding finds no element.
    pub fn rule_frame(&self, rule: &TypedRule) -> Result<Option<Vec<Value>>, EvalError> {
        let mut frame = vec![Value::Bool(false); rule.frame_size];
        for (i, (_, root)) in rule.params.iter().enumerate() {
            frame[i] = self.globals[*root].clone();
        }
        for b in &rule.bindings {
            let v = match &b.value {
                BindingValue::Expr(e) => self.eval(e, &mut frame)?,
                BindingValue::Select { source, cond } => {
                    let Value::List(items) = self.eval(source, &mut frame)? else {
                        return Err(EvalError::Schema("selection source is not a list".into()));
                    };
                    let mut found = None;
                    for item in items.iter() {
                        frame[b.slot] = item.clone();
                        let hit = self.absorb_empty(self.eval(cond, &mut frame))?.as_bool();
                        if hit {
                            found = Some(item.clone());
                            break;
                        }
                    }
                    match found {
                        Some(v) => v,
                        None => return Ok(None),
                    }
                }
            };
            frame[b.slot] = v;
        }
        Ok(Some(frame))
    }

    pub fn eval_rule(&self, rule: &TypedRule) -> Result<Decision, EvalError> {
        let parts = conjuncts(&rule.condition);
        let Some(mut frame) = self.rule_frame(rule)? else {
            return Ok(Decision {
                fired: false,
                action: None,
                conjunct_bits: vec![false; parts.len()],
            });
        };
        let mut bits = Vec::with_capacity(parts.len());
        for c in parts {
            bits.push(self.absorb_empty(self.eval(c, &mut frame))?.as_bool());
        }
        let fired = bits.iter().all(|b| *b);
        Ok(Decision {
            fired,
            action: fired.then(|| rule.action.clone()),
            conjunct_bits: bits,
        })
    }

    /// Evaluates an uncalled predicate entry point.
    pub fn eval_entry(&self, name: &str) -> Result<bool, EvalError> {
        let entry = self
            .file
            .entry(name)
            .ok_or_else(|| EvalError::Schema(format!("no predicate `{name}`")))?;
        let inst = &self.file.instances[entry.instance];
        let mut frame = vec![Value::Bool(false); inst.frame_size];
        for (i, (_, root)) in entry.params.iter().enumerate() {
            frame[i] = self.globals[*root].clone();
        }
        Ok(self.absorb_empty(self.eval(&inst.body, &mut frame))?.as_bool())
    }

    /// Builds the callee frame for a predicate call evaluated in `frame`.
    pub fn call_frame(
        &self,
        instance: usize,
        args: &[TypedExpr],
        frame: &mut [Value],
    ) -> Result<Vec<Value>, EvalError> {
        let inst = &self.file.instances[instance];
        let mut callee = vec![Value::Bool(false); inst.frame_size];
        for (i, a) in args.iter().enumerate() {
            callee[i] = self.eval(a, frame)?;
        }
        Ok(callee)
    }

    pub fn eval(&self, e: &TypedExpr, frame: &mut [Value]) -> Result<Value, EvalError> {
        Ok(match &e.kind {
            TKind::Num(v) => Value::Num(*v),
            TKind::EnumLit(v) => Value::Enum(*v),
            TKind::EnumSet(vs) => Value::EnumSet(vs.as_slice().into()),
            TKind::Local(slot) => frame[*slot].clone(),
            TKind::Global(idx) => self.globals[*idx].clone(),
            TKind::Field(base, idx) => match self.eval(base, frame)? {
                Value::Record(fields) => fields
                    .get(*idx)
                    .cloned()
                    .ok_or_else(|| EvalError::Schema(format!("record lacks field #{idx}")))?,
                other => return Err(EvalError::Schema(format!("field access on {other:?}"))),
            },
            TKind::Neg(x) => Value::Num(-self.num(x, frame)?),
            TKind::Not(x) => Value::Bool(!self.boolean(x, frame)?),
            TKind::Arith(op, a, b) => {
                let (a, b) = (self.num(a, frame)?, self.num(b, frame)?);
                Value::Num(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => a / b,
                })
            }
            TKind::Pow(x, n) => Value::Num(self.num(x, frame)?.powi(*n as i32)),
            TKind::Sqrt(x) => Value::Num(self.num(x, frame)?.sqrt()),
            TKind::Cmp(op, a, b) => {
                let (a, b) = (self.num(a, frame)?, self.num(b, frame)?);
                Value::Bool(match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Gt => a > b,
                    CmpOp::Le => a <= b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Eq => a == b,
                })
            }
            TKind::EnumEq(a, b) => {
                let (a, b) = (self.eval(a, frame)?, self.eval(b, frame)?);
                Value::Bool(match (&a, &b) {
                    (Value::Enum(x), Value::Enum(y)) => x == y,
                    (Value::Enum(x), Value::EnumSet(s)) | (Value::EnumSet(s), Value::Enum(x)) => {
                        s.contains(x)
                    }
                    _ => return Err(EvalError::Schema("enum comparison on non-enum".into())),
                })
            }
            TKind::In(a, b) => {
                let a = self.eval(a, frame)?;
                let Value::List(items) = self.eval(b, frame)? else {
                    return Err(EvalError::Schema("`in` on non-list".into()));
                };
                Value::Bool(items.iter().any(|x| *x == a))
            }
            TKind::And(xs) => {
                for x in xs {
                    if !self.boolean(x, frame)? {
                        return Ok(Value::Bool(false));
                    }
                }
                Value::Bool(true)
            }
            TKind::Or(xs) => {
                for x in xs {
                    if self.boolean(x, frame)? {
                        return Ok(Value::Bool(true));
                    }
                }
                Value::Bool(false)
            }
            TKind::Call { instance, args } => {
                let mut callee = self.call_frame(*instance, args, frame)?;
                let body = &self.file.instances[*instance].body;
                return self.absorb_empty(self.eval(body, &mut callee));
            }
            TKind::Trainable { site, .. } => {
                return Err(EvalError::Trainable(self.file.trainables[*site].kind.intrinsic_name().into()))
            }
            TKind::Pipeline { source, stages } => {
                let Value::List(items) = self.eval(source, frame)? else {
                    return Err(EvalError::Schema("pipeline over non-list".into()));
                };
                let mut items: Vec<Value> = items.as_ref().clone();
                for st in stages {
                    match st {
                        TStage::Filter { slot, body } => {
                            let mut kept = Vec::with_capacity(items.len());
                            for it in items {
                                frame[*slot] = it.clone();
                                if self.boolean(body, frame)? {
                                    kept.push(it);
                                }
                            }
                            items = kept;
                        }
                        TStage::SortDesc { slot, key } => {
                            let mut keyed = Vec::with_capacity(items.len());
                            for it in items {
                                frame[*slot] = it.clone();
                                keyed.push((self.num(key, frame)?, it));
                            }
                            // stable: equal keys keep input order
                            keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
                            items = keyed.into_iter().map(|(_, v)| v).collect();
                        }
                        TStage::Take(n) => items.truncate(*n),
                        TStage::First => {
                            return items.into_iter().next().ok_or(EvalError::EmptyPipeline)
                        }
                    }
                }
                Value::list(items)
            }
        })
    }

    fn num(&self, e: &TypedExpr, frame: &mut [Value]) -> Result<f64, EvalError> {
        match self.eval(e, frame)? {
            Value::Num(v) => Ok(v),
            other => Err(EvalError::Schema(format!("number expected, got {other:?}"))),
        }
    }

    fn boolean(&self, e: &TypedExpr, frame: &mut [Value]) -> Result<bool, EvalError> {
        match self.eval(e, frame)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::Schema(format!("Bool expected, got {other:?}"))),
        }
    }
}
