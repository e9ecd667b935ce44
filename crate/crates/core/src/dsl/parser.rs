//! Recursive-descent parser for rule files.
//!
//! Operator precedence, loosest first: `||`, `&&`, `!`, comparisons
//! (`< > <= >= == in`, non-associative), `+ -`, `* /`, `^`
//! (right-associative), unary minus, postfix (field access, pipeline
//! stages, calls).

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

const STAGES: [&str; 4] = ["filter", "sortDesc", "first", "take"];

pub fn parse(src: &str) -> Result<RuleFile, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    p.file()
}

/// Parses a single expression (used by tests and tooling).
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let t = &self.tokens[self.pos];
        ParseError {
            line: t.span.line,
            col: t.span.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&[&tok.to_string()]))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.span();
                self.bump();
                Ok((name, span))
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn file(&mut self) -> Result<RuleFile, ParseError> {
        let mut file = RuleFile::default();
        loop {
            match self.peek() {
                Tok::Rule => file.rules.push(self.rule_def()?),
                Tok::Pred => file.preds.push(self.pred_def()?),
                Tok::Eof => return Ok(file),
                _ => return Err(self.error(&["`rule`", "`pred`", "end of input"])),
            }
        }
    }

    fn params(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(params);
        }
        loop {
            params.push(self.ident()?.0);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen)?;
            return Ok(params);
        }
    }

    fn pred_def(&mut self) -> Result<PredDef, ParseError> {
        let span = self.expect(Tok::Pred)?.span;
        let (name, _) = self.ident()?;
        let params = self.params()?;
        self.expect(Tok::LBrace)?;
        let body = self.expr()?;
        self.eat(&Tok::Semi);
        self.expect(Tok::RBrace)?;
        Ok(PredDef {
            name,
            params,
            body,
            span,
        })
    }

    fn rule_def(&mut self) -> Result<RuleDef, ParseError> {
        let span = self.expect(Tok::Rule)?.span;
        let (name, _) = self.ident()?;
        let params = self.params()?;
        self.expect(Tok::LBrace)?;
        let mut bindings = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            let (bname, bspan) = self.ident()?;
            self.expect(Tok::Assign)?;
            let value = self.expr()?;
            self.eat(&Tok::Semi);
            bindings.push(Binding {
                name: bname,
                value,
                span: bspan,
            });
        }
        if *self.peek() != Tok::Condition {
            return Err(self.error(&["identifier", "`condition`"]));
        }
        self.bump();
        self.expect(Tok::LBrace)?;
        let condition = self.expr()?;
        self.eat(&Tok::Semi);
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Action)?;
        self.expect(Tok::LBrace)?;
        let mut action = ActionDescr::default();
        while let Tok::Ident(_) = self.peek() {
            let (callee, _) = self.ident()?;
            self.expect(Tok::LParen)?;
            let mut args = Vec::new();
            if !self.eat(&Tok::RParen) {
                loop {
                    args.push(self.expr()?);
                    if self.eat(&Tok::Comma) {
                        continue;
                    }
                    self.expect(Tok::RParen)?;
                    break;
                }
            }
            self.eat(&Tok::Semi);
            action.calls.push(ActionCall { callee, args });
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::RBrace)?;
        Ok(RuleDef {
            name,
            params,
            bindings,
            condition,
            action,
            span,
        })
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::OrOr {
            let span = self.bump().span;
            let rhs = self.and_expr()?;
            lhs = Expr::new(ExprKind::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while *self.peek() == Tok::AndAnd {
            let span = self.bump().span;
            let rhs = self.not_expr()?;
            lhs = Expr::new(ExprKind::Binary(BinOp::And, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Bang {
            let span = self.bump().span;
            let inner = self.not_expr()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(inner)), span));
        }
        self.comparison()
    }

    fn comparison_op(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Gt => BinOp::Gt,
            Tok::Le => BinOp::Le,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::In => BinOp::In,
            _ => return None,
        })
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let Some(op) = self.comparison_op() else {
            return Ok(lhs);
        };
        let span = self.bump().span;
        let rhs = self.additive()?;
        if self.comparison_op().is_some() {
            return Err(self.error(&["`&&`", "`||`", "`)`"]));
        }
        Ok(Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.multiplicative()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.power()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if *self.peek() == Tok::Caret {
            let span = self.bump().span;
            let exp = self.power()?;
            return Ok(Expr::new(
                ExprKind::Binary(BinOp::Pow, Box::new(base), Box::new(exp)),
                span,
            ));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            let span = self.bump().span;
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(inner)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::Dot {
            self.bump();
            let (name, span) = self.ident()?;
            if *self.peek() == Tok::LParen && STAGES.contains(&name.as_str()) {
                let stage = self.stage(&name)?;
                e = match e.kind {
                    ExprKind::Pipeline(src, mut stages) => {
                        stages.push(stage);
                        Expr::new(ExprKind::Pipeline(src, stages), e.span)
                    }
                    _ => {
                        let start = e.span;
                        Expr::new(ExprKind::Pipeline(Box::new(e), vec![stage]), start)
                    }
                };
                continue;
            }
            e = match e.kind {
                ExprKind::Path(mut parts) => {
                    parts.push(name);
                    Expr::new(ExprKind::Path(parts), e.span)
                }
                _ => Expr::new(ExprKind::Field(Box::new(e), name), span),
            };
        }
        Ok(e)
    }

    fn stage(&mut self, name: &str) -> Result<Stage, ParseError> {
        self.expect(Tok::LParen)?;
        let stage = match name {
            "filter" => Stage::Filter(self.lambda_or_expr()?),
            "sortDesc" => Stage::SortDesc(self.lambda_or_expr()?),
            "first" => Stage::First,
            "take" => match self.peek().clone() {
                Tok::Number(v) if v.fract() == 0.0 && v >= 0.0 => {
                    self.bump();
                    Stage::Take(v as usize)
                }
                _ => return Err(self.error(&["integer"])),
            },
            _ => unreachable!("caller checks stage names"),
        };
        self.expect(Tok::RParen)?;
        Ok(stage)
    }

    fn lambda_or_expr(&mut self) -> Result<Expr, ParseError> {
        if let (Tok::Ident(param), Tok::Arrow) = (self.peek().clone(), self.peek_at(1).clone()) {
            let span = self.span();
            self.bump();
            self.bump();
            let body = self.expr()?;
            return Ok(Expr::new(ExprKind::Lambda(param, Box::new(body)), span));
        }
        self.expr()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Number(v), span))
            }
            Tok::Ident(name) => {
                self.bump();
                match self.peek() {
                    Tok::LParen | Tok::LBracket | Tok::At => self.call(name, span),
                    _ => Ok(Expr::new(ExprKind::Path(vec![name]), span)),
                }
            }
            Tok::LParen => {
                self.bump();
                let first = self.expr()?;
                if self.eat(&Tok::Comma) {
                    let second = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::new(
                        ExprKind::Tuple(Box::new(first), Box::new(second)),
                        span,
                    ));
                }
                self.expect(Tok::RParen)?;
                Ok(first)
            }
            _ => Err(self.error(&["number", "identifier", "`(`", "`-`", "`!`"])),
        }
    }

    fn call(&mut self, name: String, span: Span) -> Result<Expr, ParseError> {
        let mut qualifier = None;
        if *self.peek() == Tok::At {
            self.bump();
            if *self.peek() != Tok::LBracket {
                return Err(self.error(&["`[`"]));
            }
        }
        if self.eat(&Tok::LBracket) {
            qualifier = Some(Box::new(self.expr()?));
            self.expect(Tok::RBracket)?;
        }
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        let mut named = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                if let (Tok::Ident(key), Tok::Assign) = (self.peek().clone(), self.peek_at(1)) {
                    self.bump();
                    self.bump();
                    named.push((key, self.expr()?));
                } else if !named.is_empty() {
                    return Err(self.error(&["named argument"]));
                } else {
                    args.push(self.expr()?);
                }
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen)?;
                break;
            }
        }
        Ok(Expr::new(
            ExprKind::Call(Call {
                name,
                qualifier,
                args,
                named,
            }),
            span,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(parts: &[&str]) -> ExprKind {
        ExprKind::Path(parts.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn empty_file() {
        let f = parse("").unwrap();
        assert!(f.rules.is_empty() && f.preds.is_empty());
        let f = parse("  // only a comment\n").unwrap();
        assert!(f.rules.is_empty() && f.preds.is_empty());
    }

    #[test]
    fn dangling_comparison_reports_closing_brace() {
        let err = parse("pred p() { 1 < }").unwrap_err();
        assert_eq!((err.line, err.col), (1, 16));
        assert_eq!(err.found, "`}`");
        assert!(err.expected.iter().any(|e| e == "number"));
    }

    #[test]
    fn precedence_chain() {
        let e = parse_expr("a || b && !c < d + e * f ^ 2").unwrap();
        let ExprKind::Binary(BinOp::Or, _, rhs) = e.kind else {
            panic!("expected ||")
        };
        let ExprKind::Binary(BinOp::And, _, rhs) = rhs.kind else {
            panic!("expected &&")
        };
        let ExprKind::Unary(UnOp::Not, cmp) = rhs.kind else {
            panic!("expected !")
        };
        let ExprKind::Binary(BinOp::Lt, _, sum) = cmp.kind else {
            panic!("expected <")
        };
        let ExprKind::Binary(BinOp::Add, _, prod) = sum.kind else {
            panic!("expected +")
        };
        let ExprKind::Binary(BinOp::Mul, _, pow) = prod.kind else {
            panic!("expected *")
        };
        assert!(matches!(pow.kind, ExprKind::Binary(BinOp::Pow, _, _)));
    }

    #[test]
    fn unary_minus_binds_tighter_than_power() {
        let e = parse_expr("-x ^ 2").unwrap();
        let ExprKind::Binary(BinOp::Pow, base, _) = e.kind else {
            panic!()
        };
        assert!(matches!(base.kind, ExprKind::Unary(UnOp::Neg, _)));
    }

    #[test]
    fn comparisons_do_not_chain() {
        assert!(parse_expr("a < b < c").is_err());
    }

    #[test]
    fn pipeline_with_trailing_field() {
        let e = parse_expr("w.events.filter(e -> e.time > 0).sortDesc(e -> e.time).first().type")
            .unwrap();
        let ExprKind::Field(inner, field) = e.kind else {
            panic!()
        };
        assert_eq!(field, "type");
        let ExprKind::Pipeline(src, stages) = inner.kind else {
            panic!()
        };
        assert_eq!(src.kind, path(&["w", "events"]));
        assert_eq!(stages.len(), 3);
        assert_eq!(stages[2], Stage::First);
    }

    #[test]
    fn qualified_call_both_spellings() {
        for src in ["f[w.id](x, min=0, max=1)", "f@[w.id](x, min=0, max=1)"] {
            let e = parse_expr(src).unwrap();
            let ExprKind::Call(c) = e.kind else { panic!() };
            assert_eq!(c.qualifier.unwrap().kind, path(&["w", "id"]));
            assert_eq!(c.args.len(), 1);
            assert_eq!(c.named.len(), 2);
        }
    }

    #[test]
    fn positional_after_named_is_rejected() {
        assert!(parse_expr("f(min=0, x)").is_err());
    }

    #[test]
    fn tuple_literal() {
        let e = parse_expr("(0, 177.5)").unwrap();
        assert!(matches!(e.kind, ExprKind::Tuple(_, _)));
    }
}
