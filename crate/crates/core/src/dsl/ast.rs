//! Untyped syntax tree produced by the parser.

use std::fmt;

/// Start position of a syntax element (1-based line and column).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleFile {
    pub rules: Vec<RuleDef>,
    pub preds: Vec<PredDef>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleDef {
    pub name: String,
    pub params: Vec<String>,
    pub bindings: Vec<Binding>,
    pub condition: Expr,
    pub action: ActionDescr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

/// Contents of an `action { ... }` block. Stored verbatim, never executed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActionDescr {
    pub calls: Vec<ActionCall>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionCall {
    pub callee: String,
    pub args: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    In,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::In => "in",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::In
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Number(f64),
    /// Identifier or dotted path; resolved to a variable, global or enum
    /// literal during type checking.
    Path(Vec<String>),
    /// Field access on something that is not a plain path, e.g. `.first().type`.
    Field(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Call),
    Pipeline(Box<Expr>, Vec<Stage>),
    Lambda(String, Box<Expr>),
    Tuple(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Call {
    pub name: String,
    pub qualifier: Option<Box<Expr>>,
    pub args: Vec<Expr>,
    pub named: Vec<(String, Expr)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Filter(Expr),
    SortDesc(Expr),
    First,
    Take(usize),
}

impl RuleFile {
    /// Resets every span to the default position so that two trees can be
    /// compared structurally.
    pub fn clear_spans(&mut self) {
        for r in &mut self.rules {
            r.span = Span::default();
            for b in &mut r.bindings {
                b.span = Span::default();
                b.value.clear_spans();
            }
            r.condition.clear_spans();
            for c in &mut r.action.calls {
                for a in &mut c.args {
                    a.clear_spans();
                }
            }
        }
        for p in &mut self.preds {
            p.span = Span::default();
            p.body.clear_spans();
        }
    }

    pub fn pred(&self, name: &str) -> Option<&PredDef> {
        self.preds.iter().find(|p| p.name == name)
    }

    pub fn rule(&self, name: &str) -> Option<&RuleDef> {
        self.rules.iter().find(|r| r.name == name)
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn clear_spans(&mut self) {
        self.span = Span::default();
        match &mut self.kind {
            ExprKind::Number(_) | ExprKind::Path(_) => {}
            ExprKind::Field(e, _) | ExprKind::Unary(_, e) | ExprKind::Lambda(_, e) => {
                e.clear_spans()
            }
            ExprKind::Binary(_, a, b) | ExprKind::Tuple(a, b) => {
                a.clear_spans();
                b.clear_spans();
            }
            ExprKind::Call(c) => {
                if let Some(q) = &mut c.qualifier {
                    q.clear_spans();
                }
                c.args.iter_mut().for_each(Expr::clear_spans);
                c.named.iter_mut().for_each(|(_, e)| e.clear_spans());
            }
            ExprKind::Pipeline(src, stages) => {
                src.clear_spans();
                for s in stages {
                    match s {
                        Stage::Filter(e) | Stage::SortDesc(e) => e.clear_spans(),
                        Stage::First | Stage::Take(_) => {}
                    }
                }
            }
        }
    }

    /// Visits every call name reachable from this expression.
    pub fn for_each_call<'a>(&'a self, f: &mut impl FnMut(&'a Call, Span)) {
        match &self.kind {
            ExprKind::Number(_) | ExprKind::Path(_) => {}
            ExprKind::Field(e, _) | ExprKind::Unary(_, e) | ExprKind::Lambda(_, e) => {
                e.for_each_call(f)
            }
            ExprKind::Binary(_, a, b) | ExprKind::Tuple(a, b) => {
                a.for_each_call(f);
                b.for_each_call(f);
            }
            ExprKind::Call(c) => {
                f(c, self.span);
                if let Some(q) = &c.qualifier {
                    q.for_each_call(f);
                }
                for a in &c.args {
                    a.for_each_call(f);
                }
                for (_, a) in &c.named {
                    a.for_each_call(f);
                }
            }
            ExprKind::Pipeline(src, stages) => {
                src.for_each_call(f);
                for s in stages {
                    if let Stage::Filter(e) | Stage::SortDesc(e) = s {
                        e.for_each_call(f);
                    }
                }
            }
        }
    }
}
