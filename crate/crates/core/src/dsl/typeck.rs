//! Name resolution and type checking.
//!
//! Predicates have untyped parameters. Each distinct combination of argument
//! types at a call site produces one [`PredInstance`]; predicates that are
//! never called are checked as entry points with parameters resolved by name
//! against the schema roots.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{self, ActionDescr, BinOp, Expr, ExprKind, RuleFile, Span, Stage, UnOp};
use super::schema::{EnumId, Schema, Type, Unit};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub span: Span,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for TypeError {}

fn err<T>(span: Span, message: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError {
        span,
        message: message.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainableKind {
    AboveThreshold,
    BelowThreshold,
    RightValue1D,
    RightValue2D,
    RightCategories,
}

impl TrainableKind {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "isAboveThreshold" => TrainableKind::AboveThreshold,
            "isBelowThreshold" => TrainableKind::BelowThreshold,
            "hasRightValue1D" => TrainableKind::RightValue1D,
            "hasRightValue2D" => TrainableKind::RightValue2D,
            "hasRightCategories" => TrainableKind::RightCategories,
            _ => return None,
        })
    }

    pub fn intrinsic_name(self) -> &'static str {
        match self {
            TrainableKind::AboveThreshold => "isAboveThreshold",
            TrainableKind::BelowThreshold => "isBelowThreshold",
            TrainableKind::RightValue1D => "hasRightValue1D",
            TrainableKind::RightValue2D => "hasRightValue2D",
            TrainableKind::RightCategories => "hasRightCategories",
        }
    }
}

impl fmt::Display for TrainableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainableKind::AboveThreshold => "AboveThreshold",
            TrainableKind::BelowThreshold => "BelowThreshold",
            TrainableKind::RightValue1D => "RightValue1D",
            TrainableKind::RightValue2D => "RightValue2D",
            TrainableKind::RightCategories => "RightCategories",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    Pair(f64, f64),
}

impl Bound {
    pub fn components(&self) -> Vec<f64> {
        match *self {
            Bound::Scalar(v) => vec![v],
            Bound::Pair(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Scalar(v) => write!(f, "{v}"),
            Bound::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// One trainable-intrinsic call site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainableDescr {
    pub kind: TrainableKind,
    pub min: Option<Bound>,
    pub max: Option<Bound>,
    pub capacity: u32,
    pub categories: Option<u32>,
    /// Static list length for `RightCategories` (the `take(n)` bound).
    pub seq_len: Option<usize>,
    pub qualifier_key: Option<String>,
    #[serde(skip)]
    pub qualifier_enum: Option<EnumId>,
    pub unit: Option<Unit>,
    pub site_id: String,
    #[serde(skip)]
    pub span: Span,
}

impl TrainableDescr {
    /// Input width of the categorical encoding.
    pub fn category_width(&self) -> usize {
        self.seq_len.unwrap_or(0) * self.categories.unwrap_or(0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct TypedExpr {
    pub kind: TKind,
    pub ty: Type,
    pub unit: Option<Unit>,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum TKind {
    Num(f64),
    EnumLit(usize),
    EnumSet(Vec<usize>),
    Local(usize),
    Global(usize),
    Field(Box<TypedExpr>, usize),
    Neg(Box<TypedExpr>),
    Not(Box<TypedExpr>),
    Arith(ArithOp, Box<TypedExpr>, Box<TypedExpr>),
    Pow(Box<TypedExpr>, u32),
    Sqrt(Box<TypedExpr>),
    Cmp(CmpOp, Box<TypedExpr>, Box<TypedExpr>),
    /// Enum equality; either side may be an enum set (membership).
    EnumEq(Box<TypedExpr>, Box<TypedExpr>),
    In(Box<TypedExpr>, Box<TypedExpr>),
    And(Vec<TypedExpr>),
    Or(Vec<TypedExpr>),
    Call {
        instance: usize,
        args: Vec<TypedExpr>,
    },
    Trainable {
        site: usize,
        value: Box<TypedExpr>,
        qualifier: Option<Box<TypedExpr>>,
        /// For categorical inputs over records: which field holds the category.
        category_field: Option<usize>,
    },
    Pipeline {
        source: Box<TypedExpr>,
        stages: Vec<TStage>,
    },
}

#[derive(Clone, Debug)]
pub enum TStage {
    Filter { slot: usize, body: TypedExpr },
    SortDesc { slot: usize, key: TypedExpr },
    First,
    Take(usize),
}

impl TypedExpr {
    /// True when evaluation of this expression can reach a trainable site.
    pub fn contains_trainable(&self, file: &TypedRuleFile) -> bool {
        match &self.kind {
            TKind::Trainable { .. } => true,
            TKind::Call { instance, args } => {
                file.instances[*instance].has_trainable
                    || args.iter().any(|a| a.contains_trainable(file))
            }
            TKind::Num(_)
            | TKind::EnumLit(_)
            | TKind::EnumSet(_)
            | TKind::Local(_)
            | TKind::Global(_) => false,
            TKind::Field(e, _) | TKind::Neg(e) | TKind::Not(e) | TKind::Pow(e, _) | TKind::Sqrt(e) => {
                e.contains_trainable(file)
            }
            TKind::Arith(_, a, b) | TKind::Cmp(_, a, b) | TKind::EnumEq(a, b) | TKind::In(a, b) => {
                a.contains_trainable(file) || b.contains_trainable(file)
            }
            TKind::And(xs) | TKind::Or(xs) => xs.iter().any(|x| x.contains_trainable(file)),
            TKind::Pipeline { source, stages } => {
                source.contains_trainable(file)
                    || stages.iter().any(|s| match s {
                        TStage::Filter { body, .. } => body.contains_trainable(file),
                        TStage::SortDesc { key, .. } => key.contains_trainable(file),
                        _ => false,
                    })
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredInstance {
    pub name: String,
    pub param_types: Vec<Type>,
    pub body: TypedExpr,
    pub frame_size: usize,
    pub has_trainable: bool,
}

#[derive(Clone, Debug)]
pub enum BindingValue {
    Expr(TypedExpr),
    /// `x = xs.filter(cond)` with a non-lambda condition: `x` names the
    /// element inside `cond` and the binding selects the first match.
    Select { source: TypedExpr, cond: TypedExpr },
}

#[derive(Clone, Debug)]
pub struct TypedBinding {
    pub name: String,
    pub slot: usize,
    pub value: BindingValue,
}

#[derive(Clone, Debug)]
pub struct TypedRule {
    pub name: String,
    /// Parameter name and the schema root it is bound to.
    pub params: Vec<(String, usize)>,
    pub bindings: Vec<TypedBinding>,
    pub condition: TypedExpr,
    pub action: ActionDescr,
    pub frame_size: usize,
}

/// A predicate checked as a standalone entry point.
#[derive(Clone, Debug)]
pub struct EntryPred {
    pub name: String,
    pub params: Vec<(String, usize)>,
    pub instance: usize,
}

#[derive(Clone, Debug)]
pub struct TypedRuleFile {
    pub schema: Schema,
    pub rules: Vec<TypedRule>,
    pub entries: Vec<EntryPred>,
    pub instances: Vec<PredInstance>,
    pub trainables: Vec<TrainableDescr>,
}

impl TypedRuleFile {
    pub fn rule(&self, name: &str) -> Option<&TypedRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn entry(&self, name: &str) -> Option<&EntryPred> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Trainable sites in source order.
pub fn list_trainables(typed: &TypedRuleFile) -> Vec<TrainableDescr> {
    let mut out = typed.trainables.clone();
    out.sort_by_key(|d| d.span);
    out
}

pub fn typecheck(file: &RuleFile, schema: &Schema) -> Result<TypedRuleFile, Vec<TypeError>> {
    let mut errors = Vec::new();
    let mut names = HashSet::new();
    for p in &file.preds {
        if !names.insert(p.name.as_str()) {
            errors.push(TypeError {
                span: p.span,
                message: format!("predicate `{}` is defined more than once", p.name),
            });
        }
        if TrainableKind::from_name(&p.name).is_some() || p.name == "sqrt" {
            errors.push(TypeError {
                span: p.span,
                message: format!("`{}` is a built-in and cannot be redefined", p.name),
            });
        }
    }
    let mut rule_names = HashSet::new();
    for r in &file.rules {
        if !rule_names.insert(r.name.as_str()) {
            errors.push(TypeError {
                span: r.span,
                message: format!("rule `{}` is defined more than once", r.name),
            });
        }
    }
    if let Err(e) = check_acyclic(file) {
        errors.push(e);
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut cx = Checker {
        file,
        schema,
        instances: Vec::new(),
        instance_keys: HashMap::new(),
        trainables: Vec::new(),
        site_by_span: HashMap::new(),
    };

    let mut rules = Vec::new();
    for r in &file.rules {
        match cx.check_rule(r) {
            Ok(tr) => rules.push(tr),
            Err(e) => errors.push(e),
        }
    }

    let mut called = HashSet::new();
    let mut note_call = |c: &ast::Call, _| {
        called.insert(c.name.clone());
    };
    for r in &file.rules {
        r.condition.for_each_call(&mut note_call);
        for b in &r.bindings {
            b.value.for_each_call(&mut note_call);
        }
    }
    for p in &file.preds {
        p.body.for_each_call(&mut note_call);
    }

    let mut entries = Vec::new();
    for p in &file.preds {
        if called.contains(&p.name) {
            continue;
        }
        match cx.check_entry(p) {
            Ok(e) => entries.push(e),
            Err(e) => errors.push(e),
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.span);
        return Err(errors);
    }
    Ok(TypedRuleFile {
        schema: schema.clone(),
        rules,
        entries,
        instances: cx.instances,
        trainables: cx.trainables,
    })
}

fn check_acyclic(file: &RuleFile) -> Result<(), TypeError> {
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in &file.preds {
        let mut targets = Vec::new();
        p.body.for_each_call(&mut |c: &ast::Call, _| targets.push(c.name.as_str()));
        edges.insert(p.name.as_str(), targets);
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit<'a>(
        n: &'a str,
        edges: &BTreeMap<&'a str, Vec<&'a str>>,
        marks: &mut HashMap<&'a str, Mark>,
        file: &RuleFile,
    ) -> Result<(), TypeError> {
        match marks.get(n) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => {
                let span = file.pred(n).map(|p| p.span).unwrap_or_default();
                return err(span, format!("predicate `{n}` is recursive"));
            }
            None => {}
        }
        marks.insert(n, Mark::Active);
        for &t in edges.get(n).into_iter().flatten() {
            if edges.contains_key(t) {
                visit(t, edges, marks, file)?;
            }
        }
        marks.insert(n, Mark::Done);
        Ok(())
    }
    let mut marks = HashMap::new();
    for &n in edges.keys() {
        visit(n, &edges, &mut marks, file)?;
    }
    Ok(())
}

struct Scope {
    vars: Vec<(String, Type, Option<Unit>, usize)>,
    next_slot: usize,
    max_slot: usize,
    owner: String,
}

impl Scope {
    fn new(owner: &str) -> Self {
        Scope {
            vars: Vec::new(),
            next_slot: 0,
            max_slot: 0,
            owner: owner.to_string(),
        }
    }

    fn push(&mut self, name: &str, ty: Type, unit: Option<Unit>) -> usize {
        let slot = self.next_slot;
        self.next_slot += 1;
        self.max_slot = self.max_slot.max(self.next_slot);
        self.vars.push((name.to_string(), ty, unit, slot));
        slot
    }

    fn pop(&mut self) {
        self.vars.pop();
        self.next_slot -= 1;
    }

    fn lookup(&self, name: &str) -> Option<(Type, Option<Unit>, usize)> {
        self.vars
            .iter()
            .rev()
            .find(|(n, ..)| n == name)
            .map(|(_, t, u, s)| (t.clone(), *u, *s))
    }
}

struct Checker<'a> {
    file: &'a RuleFile,
    schema: &'a Schema,
    instances: Vec<PredInstance>,
    instance_keys: HashMap<(String, Vec<Type>), usize>,
    trainables: Vec<TrainableDescr>,
    site_by_span: HashMap<Span, usize>,
}

fn typed(kind: TKind, ty: Type, unit: Option<Unit>, span: Span) -> TypedExpr {
    TypedExpr {
        kind,
        ty,
        unit,
        span,
    }
}

fn const_num(e: &Expr) -> Option<f64> {
    match &e.kind {
        ExprKind::Number(v) => Some(*v),
        ExprKind::Unary(UnOp::Neg, inner) => const_num(inner).map(|v| -v),
        ExprKind::Binary(op, a, b) => {
            let (a, b) = (const_num(a)?, const_num(b)?);
            match op {
                BinOp::Add => Some(a + b),
                BinOp::Sub => Some(a - b),
                BinOp::Mul => Some(a * b),
                BinOp::Div if b != 0.0 => Some(a / b),
                _ => None,
            }
        }
        _ => None,
    }
}

fn const_bound(e: &Expr) -> Option<Bound> {
    match &e.kind {
        ExprKind::Tuple(a, b) => Some(Bound::Pair(const_num(a)?, const_num(b)?)),
        _ => const_num(e).map(Bound::Scalar),
    }
}

fn path_string(e: &Expr) -> String {
    super::pretty::expr_to_string(e)
}

impl<'a> Checker<'a> {
    fn type_name(&self, t: &Type) -> String {
        self.schema.type_name(t)
    }

    fn root_params(&self, params: &[String], span: Span, what: &str) -> Result<Vec<(String, usize)>, TypeError> {
        params
            .iter()
            .map(|p| match self.schema.root(p) {
                Some((idx, _)) => Ok((p.clone(), idx)),
                None => err(
                    span,
                    format!("cannot infer the type of parameter `{p}` of {what}: no schema root of that name"),
                ),
            })
            .collect()
    }

    fn check_rule(&mut self, r: &ast::RuleDef) -> Result<TypedRule, TypeError> {
        let params = self.root_params(&r.params, r.span, &format!("rule `{}`", r.name))?;
        let mut scope = Scope::new(&r.name);
        for (name, root) in &params {
            let f = &self.schema.roots[*root];
            scope.push(name, f.ty.clone(), f.unit);
        }
        let mut bindings = Vec::new();
        for b in &r.bindings {
            let (value, ty, unit) = match &b.value.kind {
                ExprKind::Pipeline(src, stages)
                    if stages.len() == 1
                        && matches!(&stages[0], Stage::Filter(f) if !matches!(f.kind, ExprKind::Lambda(..))) =>
                {
                    let Stage::Filter(cond) = &stages[0] else {
                        unreachable!()
                    };
                    let source = self.check(src, &mut scope)?;
                    let Type::List(elem) = source.ty.clone() else {
                        return err(src.span, "filter source must be a list");
                    };
                    let slot = scope.push(&b.name, (*elem).clone(), None);
                    let cond = self.check(cond, &mut scope)?;
                    scope.pop();
                    if cond.ty != Type::Bool {
                        return err(cond.span, "Bool expected in filter condition");
                    }
                    debug_assert_eq!(slot, scope.next_slot);
                    (BindingValue::Select { source, cond }, *elem, None)
                }
                _ => {
                    let e = self.check(&b.value, &mut scope)?;
                    let (ty, unit) = (e.ty.clone(), e.unit);
                    (BindingValue::Expr(e), ty, unit)
                }
            };
            let slot = scope.push(&b.name, ty, unit);
            bindings.push(TypedBinding {
                name: b.name.clone(),
                slot,
                value,
            });
        }
        let condition = self.check(&r.condition, &mut scope)?;
        if condition.ty != Type::Bool {
            return err(
                r.condition.span,
                format!("Bool expected for rule condition, found {}", self.type_name(&condition.ty)),
            );
        }
        // action arguments are opaque; only the callee names are kept
        Ok(TypedRule {
            name: r.name.clone(),
            params,
            bindings,
            condition,
            action: r.action.clone(),
            frame_size: scope.max_slot,
        })
    }

    fn check_entry(&mut self, p: &ast::PredDef) -> Result<EntryPred, TypeError> {
        let params = self.root_params(&p.params, p.span, &format!("uncalled predicate `{}`", p.name))?;
        let types: Vec<Type> = params
            .iter()
            .map(|(_, r)| self.schema.roots[*r].ty.clone())
            .collect();
        let instance = self.instantiate(p, types, p.span)?;
        Ok(EntryPred {
            name: p.name.clone(),
            params,
            instance,
        })
    }

    fn instantiate(&mut self, p: &ast::PredDef, types: Vec<Type>, _at: Span) -> Result<usize, TypeError> {
        let key = (p.name.clone(), types.clone());
        if let Some(&idx) = self.instance_keys.get(&key) {
            return Ok(idx);
        }
        let mut scope = Scope::new(&p.name);
        for (name, ty) in p.params.iter().zip(&types) {
            let unit = None;
            scope.push(name, ty.clone(), unit);
        }
        let body = self.check(&p.body, &mut scope)?;
        if body.ty != Type::Bool {
            return err(
                p.body.span,
                format!(
                    "Bool expected for body of predicate `{}`, found {}",
                    p.name,
                    self.type_name(&body.ty)
                ),
            );
        }
        let mut inst = PredInstance {
            name: p.name.clone(),
            param_types: types,
            body,
            frame_size: scope.max_slot,
            has_trainable: false,
        };
        let idx = self.instances.len();
        self.instances.push(inst.clone());
        let tmp = TypedRuleFile {
            schema: Schema::default(),
            rules: Vec::new(),
            entries: Vec::new(),
            instances: self.instances.clone(),
            trainables: Vec::new(),
        };
        inst.has_trainable = inst.body.contains_trainable(&tmp);
        self.instances[idx] = inst;
        self.instance_keys.insert(key, idx);
        Ok(idx)
    }

    fn expect_bool(&self, e: &TypedExpr, ctx: &str) -> Result<(), TypeError> {
        if e.ty != Type::Bool {
            return err(
                e.span,
                format!("Bool expected {ctx}, found {}", self.type_name(&e.ty)),
            );
        }
        Ok(())
    }

    fn expect_num(&self, e: &TypedExpr, ctx: &str) -> Result<(), TypeError> {
        if e.ty != Type::Num {
            return err(
                e.span,
                format!("Number expected {ctx}, found {}", self.type_name(&e.ty)),
            );
        }
        Ok(())
    }

    fn check(&mut self, e: &Expr, scope: &mut Scope) -> Result<TypedExpr, TypeError> {
        let span = e.span;
        match &e.kind {
            ExprKind::Number(v) => Ok(typed(TKind::Num(*v), Type::Num, None, span)),
            ExprKind::Path(parts) => self.check_path(parts, span, scope),
            ExprKind::Field(base, name) => {
                let base = self.check(base, scope)?;
                self.field_access(base, name, span)
            }
            ExprKind::Unary(UnOp::Neg, inner) => {
                let inner = self.check(inner, scope)?;
                self.expect_num(&inner, "after unary `-`")?;
                let unit = inner.unit;
                Ok(typed(TKind::Neg(Box::new(inner)), Type::Num, unit, span))
            }
            ExprKind::Unary(UnOp::Not, inner) => {
                let inner = self.check(inner, scope)?;
                self.expect_bool(&inner, "after `!`")?;
                Ok(typed(TKind::Not(Box::new(inner)), Type::Bool, None, span))
            }
            ExprKind::Binary(op, a, b) => self.check_binary(*op, a, b, span, scope),
            ExprKind::Call(c) => self.check_call(c, span, scope),
            ExprKind::Pipeline(src, stages) => self.check_pipeline(src, stages, span, scope),
            ExprKind::Lambda(..) => err(span, "lambda is only allowed as a filter or sortDesc argument"),
            ExprKind::Tuple(..) => err(
                span,
                "tuples are only allowed as min/max bounds of 2D trainable predicates",
            ),
        }
    }

    fn check_path(&mut self, parts: &[String], span: Span, scope: &mut Scope) -> Result<TypedExpr, TypeError> {
        let head = &parts[0];
        let mut cur = if let Some((ty, unit, slot)) = scope.lookup(head) {
            typed(TKind::Local(slot), ty, unit, span)
        } else if let Some((idx, f)) = self.schema.root(head) {
            typed(TKind::Global(idx), f.ty.clone(), f.unit, span)
        } else {
            match self.schema.enum_literal(head) {
                Ok(Some((domain, value))) if parts.len() == 1 => {
                    return Ok(typed(TKind::EnumLit(value), Type::Enum(domain), None, span))
                }
                Err(msg) => return err(span, msg),
                _ => {
                    return err(
                        span,
                        format!("unresolved name `{head}` in `{}`", scope.owner),
                    )
                }
            }
        };
        for name in &parts[1..] {
            cur = self.field_access(cur, name, span)?;
        }
        Ok(cur)
    }

    fn field_access(&mut self, base: TypedExpr, name: &str, span: Span) -> Result<TypedExpr, TypeError> {
        let Type::Record(rid) = base.ty else {
            return err(
                span,
                format!("unresolved path: {} has no field `{name}`", self.type_name(&base.ty)),
            );
        };
        let rec = &self.schema.records[rid];
        let Some((idx, f)) = rec.field(name) else {
            return err(
                span,
                format!("unresolved path: record {} has no field `{name}`", rec.name),
            );
        };
        Ok(typed(
            TKind::Field(Box::new(base), idx),
            f.ty.clone(),
            f.unit,
            span,
        ))
    }

    fn check_binary(
        &mut self,
        op: BinOp,
        a: &Expr,
        b: &Expr,
        span: Span,
        scope: &mut Scope,
    ) -> Result<TypedExpr, TypeError> {
        let ta = self.check(a, scope)?;
        let tb = self.check(b, scope)?;
        match op {
            BinOp::And | BinOp::Or => {
                if let (Type::Enum(_) | Type::EnumSet(_), Type::Enum(_) | Type::EnumSet(_)) = (&ta.ty, &tb.ty) {
                    if op == BinOp::Or {
                        return self.enum_alternatives(ta, tb, span);
                    }
                }
                let sym = op.symbol();
                self.expect_bool(&ta, &format!("as left operand of `{sym}`"))?;
                self.expect_bool(&tb, &format!("as right operand of `{sym}`"))?;
                let mut items = Vec::new();
                for t in [ta, tb] {
                    match (op, t.kind) {
                        (BinOp::And, TKind::And(xs)) | (BinOp::Or, TKind::Or(xs)) => items.extend(xs),
                        (_, kind) => items.push(typed(kind, t.ty, t.unit, t.span)),
                    }
                }
                let kind = if op == BinOp::And {
                    TKind::And(items)
                } else {
                    TKind::Or(items)
                };
                Ok(typed(kind, Type::Bool, None, span))
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                let sym = op.symbol();
                self.expect_num(&ta, &format!("as left operand of `{sym}`"))?;
                self.expect_num(&tb, &format!("as right operand of `{sym}`"))?;
                let (aop, unit) = match op {
                    BinOp::Add => (ArithOp::Add, ta.unit.or(tb.unit)),
                    BinOp::Sub => (ArithOp::Sub, ta.unit.or(tb.unit)),
                    BinOp::Mul => (ArithOp::Mul, None),
                    _ => (ArithOp::Div, None),
                };
                Ok(typed(TKind::Arith(aop, Box::new(ta), Box::new(tb)), Type::Num, unit, span))
            }
            BinOp::Pow => {
                self.expect_num(&ta, "as base of `^`")?;
                let exp = match tb.kind {
                    TKind::Num(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => v as u32,
                    _ => return err(tb.span, "exponent of `^` must be a positive integer literal"),
                };
                Ok(typed(TKind::Pow(Box::new(ta), exp), Type::Num, None, span))
            }
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq => {
                if op == BinOp::Eq {
                    if let (Type::Enum(da) | Type::EnumSet(da), Type::Enum(db) | Type::EnumSet(db)) = (&ta.ty, &tb.ty) {
                        if da != db {
                            return err(span, "`==` compares values of different enum domains");
                        }
                        if matches!((&ta.ty, &tb.ty), (Type::EnumSet(_), Type::EnumSet(_))) {
                            return err(span, "`==` between two enum sets is not supported");
                        }
                        return Ok(typed(TKind::EnumEq(Box::new(ta), Box::new(tb)), Type::Bool, None, span));
                    }
                }
                let sym = op.symbol();
                self.expect_num(&ta, &format!("as left operand of `{sym}`"))?;
                self.expect_num(&tb, &format!("as right operand of `{sym}`"))?;
                let cop = match op {
                    BinOp::Lt => CmpOp::Lt,
                    BinOp::Gt => CmpOp::Gt,
                    BinOp::Le => CmpOp::Le,
                    BinOp::Ge => CmpOp::Ge,
                    _ => CmpOp::Eq,
                };
                Ok(typed(TKind::Cmp(cop, Box::new(ta), Box::new(tb)), Type::Bool, None, span))
            }
            BinOp::In => {
                let Type::List(elem) = &tb.ty else {
                    return err(tb.span, format!("list expected after `in`, found {}", self.type_name(&tb.ty)));
                };
                if **elem != ta.ty {
                    return err(
                        span,
                        format!(
                            "`in` tests a {} against a list of {}",
                            self.type_name(&ta.ty),
                            self.type_name(elem)
                        ),
                    );
                }
                Ok(typed(TKind::In(Box::new(ta), Box::new(tb)), Type::Bool, None, span))
            }
        }
    }

    fn enum_alternatives(&self, a: TypedExpr, b: TypedExpr, span: Span) -> Result<TypedExpr, TypeError> {
        let mut domain = None;
        let mut values = Vec::new();
        for t in [a, b] {
            let d = match t.ty {
                Type::Enum(d) | Type::EnumSet(d) => d,
                _ => unreachable!(),
            };
            if domain.is_some_and(|x| x != d) {
                return err(span, "`||` alternatives come from different enum domains");
            }
            domain = Some(d);
            match t.kind {
                TKind::EnumLit(v) => values.push(v),
                TKind::EnumSet(vs) => values.extend(vs),
                _ => return err(t.span, "`||` over enum values requires enum literals"),
            }
        }
        values.sort_unstable();
        values.dedup();
        let d = domain.expect("two operands");
        Ok(typed(TKind::EnumSet(values), Type::EnumSet(d), None, span))
    }

    fn check_pipeline(
        &mut self,
        src: &Expr,
        stages: &[Stage],
        span: Span,
        scope: &mut Scope,
    ) -> Result<TypedExpr, TypeError> {
        let source = self.check(src, scope)?;
        let Type::List(elem) = source.ty.clone() else {
            return err(src.span, format!("pipeline source must be a list, found {}", self.type_name(&source.ty)));
        };
        let elem = *elem;
        let mut ty = Type::List(Box::new(elem.clone()));
        let mut out = Vec::new();
        for (i, st) in stages.iter().enumerate() {
            if !matches!(ty, Type::List(_)) {
                return err(span, "pipeline stage applied after `first()`");
            }
            match st {
                Stage::Filter(f) | Stage::SortDesc(f) => {
                    let ExprKind::Lambda(param, body) = &f.kind else {
                        return err(f.span, "filter/sortDesc expect a lambda `x -> ...`");
                    };
                    let slot = scope.push(param, elem.clone(), None);
                    let body = self.check(body, scope)?;
                    scope.pop();
                    if matches!(st, Stage::Filter(_)) {
                        self.expect_bool(&body, "in filter lambda")?;
                        out.push(TStage::Filter { slot, body });
                    } else {
                        self.expect_num(&body, "as sortDesc key")?;
                        out.push(TStage::SortDesc { slot, key: body });
                    }
                }
                Stage::First => {
                    out.push(TStage::First);
                    ty = elem.clone();
                }
                Stage::Take(n) => {
                    if *n == 0 {
                        return err(span, "take(n) requires n >= 1");
                    }
                    out.push(TStage::Take(*n));
                }
            }
            let _ = i;
        }
        Ok(typed(
            TKind::Pipeline {
                source: Box::new(source),
                stages: out,
            },
            ty,
            None,
            span,
        ))
    }

    fn check_call(&mut self, c: &ast::Call, span: Span, scope: &mut Scope) -> Result<TypedExpr, TypeError> {
        if let Some(kind) = TrainableKind::from_name(&c.name) {
            return self.check_trainable(kind, c, span, scope);
        }
        if c.qualifier.is_some() {
            return err(span, format!("qualifier on non-trainable call `{}`", c.name));
        }
        if !c.named.is_empty() {
            return err(span, format!("`{}` does not take named arguments", c.name));
        }
        if c.name == "sqrt" {
            if c.args.len() != 1 {
                return err(span, "sqrt takes one argument");
            }
            let a = self.check(&c.args[0], scope)?;
            self.expect_num(&a, "as argument of sqrt")?;
            return Ok(typed(TKind::Sqrt(Box::new(a)), Type::Num, None, span));
        }
        let Some(pred) = self.file.pred(&c.name) else {
            return err(span, format!("call to unknown predicate `{}`", c.name));
        };
        if pred.params.len() != c.args.len() {
            return err(
                span,
                format!(
                    "`{}` expects {} argument(s), found {}",
                    c.name,
                    pred.params.len(),
                    c.args.len()
                ),
            );
        }
        let args = c
            .args
            .iter()
            .map(|a| self.check(a, scope))
            .collect::<Result<Vec<_>, _>>()?;
        let types = args.iter().map(|a| a.ty.clone()).collect();
        let instance = self.instantiate(pred, types, span)?;
        Ok(typed(TKind::Call { instance, args }, Type::Bool, None, span))
    }

    fn check_trainable(
        &mut self,
        kind: TrainableKind,
        c: &ast::Call,
        span: Span,
        scope: &mut Scope,
    ) -> Result<TypedExpr, TypeError> {
        if c.args.len() != 1 {
            return err(span, format!("`{}` takes exactly one positional argument", c.name));
        }
        let mut named: HashMap<&str, &Expr> = HashMap::new();
        for (k, v) in &c.named {
            if !["min", "max", "capacity", "categories"].contains(&k.as_str()) {
                return err(v.span, format!("unknown named argument `{k}`"));
            }
            if named.insert(k.as_str(), v).is_some() {
                return err(v.span, format!("duplicate named argument `{k}`"));
            }
        }
        let allowed: &[&str] = match kind {
            TrainableKind::AboveThreshold | TrainableKind::BelowThreshold => &["min", "max"],
            TrainableKind::RightValue1D | TrainableKind::RightValue2D => &["min", "max", "capacity"],
            TrainableKind::RightCategories => &["categories", "capacity"],
        };
        for k in named.keys() {
            if !allowed.contains(k) {
                return err(span, format!("`{}` does not accept `{k}`", c.name));
            }
        }
        let value = self.check(&c.args[0], scope)?;
        let positive_int = |key: &str| -> Result<Option<u32>, TypeError> {
            match named.get(key) {
                None => Ok(None),
                Some(e) => match const_num(e) {
                    Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(Some(v as u32)),
                    _ => err(e.span, format!("`{key}` must be a positive integer constant")),
                },
            }
        };
        let capacity = positive_int("capacity")?;
        let categories = positive_int("categories")?;

        let mut min = None;
        let mut max = None;
        if allowed.contains(&"min") {
            for (key, slot) in [("min", &mut min), ("max", &mut max)] {
                let Some(e) = named.get(key) else {
                    return err(span, format!("`{}` requires `{key}`", c.name));
                };
                let Some(bound) = const_bound(e) else {
                    return err(e.span, format!("`{key}` must be a numeric constant"));
                };
                *slot = Some(bound);
            }
            let want_pair = kind == TrainableKind::RightValue2D;
            for b in [min.unwrap(), max.unwrap()] {
                if matches!(b, Bound::Pair(..)) != want_pair {
                    return err(
                        span,
                        if want_pair {
                            "2D bounds must be written as (x, y)"
                        } else {
                            "tuple bounds are only allowed for hasRightValue2D"
                        },
                    );
                }
            }
            let ok = min
                .unwrap()
                .components()
                .iter()
                .zip(max.unwrap().components())
                .all(|(lo, hi)| *lo < hi);
            if !ok {
                return err(span, "min must be strictly below max (componentwise)");
            }
        }

        let mut seq_len = None;
        let mut category_field = None;
        match kind {
            TrainableKind::AboveThreshold | TrainableKind::BelowThreshold | TrainableKind::RightValue1D => {
                self.expect_num(&value, &format!("as argument of `{}`", c.name))?;
            }
            TrainableKind::RightValue2D => {
                if value.ty != Type::Vec2 {
                    return err(
                        value.span,
                        format!("Position2D expected as argument of `{}`, found {}", c.name, self.type_name(&value.ty)),
                    );
                }
            }
            TrainableKind::RightCategories => {
                let Some(m_cat) = categories else {
                    return err(span, "`hasRightCategories` requires `categories`");
                };
                let Type::List(elem) = &value.ty else {
                    return err(value.span, "hasRightCategories expects a list of categorical values");
                };
                let domain = match elem.as_ref() {
                    Type::Enum(d) => *d,
                    Type::Record(r) => {
                        let rec = &self.schema.records[*r];
                        let Some((fi, f)) = rec.fields.iter().enumerate().find(|(_, f)| matches!(f.ty, Type::Enum(_))) else {
                            return err(value.span, format!("record {} has no categorical field", rec.name));
                        };
                        category_field = Some(fi);
                        match f.ty {
                            Type::Enum(d) => d,
                            _ => unreachable!(),
                        }
                    }
                    other => {
                        return err(
                            value.span,
                            format!("list of categorical values expected, found List<{}>", self.type_name(other)),
                        )
                    }
                };
                let size = self.schema.enums[domain].values.len() as u32;
                if m_cat < size {
                    return err(
                        span,
                        format!("categories={m_cat} is smaller than the {size} values of {}", self.schema.enums[domain].name),
                    );
                }
                match &value.kind {
                    TKind::Pipeline { stages, .. } => match stages.last() {
                        Some(TStage::Take(n)) => seq_len = Some(*n),
                        _ => return err(value.span, "categorical input must end with take(n) to fix its length"),
                    },
                    _ => return err(value.span, "categorical input must end with take(n) to fix its length"),
                }
            }
        }

        let (qualifier, qualifier_key, qualifier_enum) = match &c.qualifier {
            None => (None, None, None),
            Some(q) => {
                let tq = self.check(q, scope)?;
                let Type::Enum(d) = tq.ty else {
                    return err(q.span, "qualifier must be an enum-valued path");
                };
                (Some(Box::new(tq)), Some(path_string(q)), Some(d))
            }
        };

        let descr = TrainableDescr {
            kind,
            min,
            max,
            capacity: match kind {
                TrainableKind::AboveThreshold | TrainableKind::BelowThreshold => 1,
                _ => capacity.unwrap_or(1),
            },
            categories,
            seq_len,
            qualifier_key,
            qualifier_enum,
            unit: value.unit,
            site_id: format!("{}@{}", scope.owner, span),
            span,
        };
        let site = match self.site_by_span.get(&span) {
            Some(&idx) => {
                if self.trainables[idx] != descr {
                    return err(span, "trainable site instantiated with conflicting types");
                }
                idx
            }
            None => {
                self.trainables.push(descr);
                self.site_by_span.insert(span, self.trainables.len() - 1);
                self.trainables.len() - 1
            }
        };
        Ok(typed(
            TKind::Trainable {
                site,
                value: Box::new(value),
                qualifier,
                category_field,
            },
            Type::Bool,
            None,
            span,
        ))
    }
}
