//! Canonical source rendering. Output reparses to the same tree.

use std::fmt::Write;

use super::ast::*;

pub fn pretty(file: &RuleFile) -> String {
    let mut out = String::new();
    for r in &file.rules {
        let _ = writeln!(out, "rule {}({}) {{", r.name, r.params.join(", "));
        for b in &r.bindings {
            let _ = writeln!(out, "    {} = {}", b.name, expr_to_string(&b.value));
        }
        let _ = writeln!(out, "    condition {{");
        let _ = writeln!(out, "        {}", expr_to_string(&r.condition));
        let _ = writeln!(out, "    }}");
        let calls: Vec<String> = r
            .action
            .calls
            .iter()
            .map(|c| {
                let args: Vec<String> = c.args.iter().map(expr_to_string).collect();
                format!("{}({})", c.callee, args.join(", "))
            })
            .collect();
        let _ = writeln!(out, "    action {{ {} }}", calls.join("; "));
        let _ = writeln!(out, "}}\n");
    }
    for p in &file.preds {
        let _ = writeln!(out, "pred {}({}) {{", p.name, p.params.join(", "));
        let _ = writeln!(out, "    {}", expr_to_string(&p.body));
        let _ = writeln!(out, "}}\n");
    }
    out
}

// Binding strength; larger binds tighter.
const OR: u8 = 1;
const AND: u8 = 2;
const NOT: u8 = 3;
const CMP: u8 = 4;
const ADD: u8 = 5;
const MUL: u8 = 6;
const POW: u8 = 7;
const NEG: u8 = 8;
const POSTFIX: u8 = 9;

fn binop_prec(op: BinOp) -> u8 {
    match op {
        BinOp::Or => OR,
        BinOp::And => AND,
        BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::In => CMP,
        BinOp::Add | BinOp::Sub => ADD,
        BinOp::Mul | BinOp::Div => MUL,
        BinOp::Pow => POW,
    }
}

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => binop_prec(*op),
        ExprKind::Unary(UnOp::Not, _) => NOT,
        ExprKind::Unary(UnOp::Neg, _) => NEG,
        // lambdas only appear as stage arguments
        ExprKind::Lambda(_, _) => 0,
        _ => POSTFIX,
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_child(out: &mut String, e: &Expr, min_prec: u8) {
    if prec(e) < min_prec {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_number(out: &mut String, v: f64) {
    let _ = write!(out, "{v}");
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Number(v) => write_number(out, *v),
        ExprKind::Path(parts) => out.push_str(&parts.join(".")),
        ExprKind::Field(base, name) => {
            write_child(out, base, POSTFIX);
            out.push('.');
            out.push_str(name);
        }
        ExprKind::Unary(UnOp::Not, inner) => {
            out.push('!');
            write_child(out, inner, NOT);
        }
        ExprKind::Unary(UnOp::Neg, inner) => {
            out.push('-');
            write_child(out, inner, NEG);
        }
        ExprKind::Binary(op, a, b) => {
            let p = binop_prec(*op);
            let (lmin, rmin) = match op {
                BinOp::Pow => (p + 1, p),
                _ if op.is_comparison() => (p + 1, p + 1),
                _ => (p, p + 1),
            };
            write_child(out, a, lmin);
            let _ = write!(out, " {} ", op.symbol());
            write_child(out, b, rmin);
        }
        ExprKind::Call(c) => {
            out.push_str(&c.name);
            if let Some(q) = &c.qualifier {
                out.push('[');
                write_expr(out, q);
                out.push(']');
            }
            out.push('(');
            let mut first = true;
            for a in &c.args {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                write_expr(out, a);
            }
            for (k, a) in &c.named {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                out.push_str(k);
                out.push('=');
                write_expr(out, a);
            }
            out.push(')');
        }
        ExprKind::Pipeline(src, stages) => {
            write_child(out, src, POSTFIX);
            for s in stages {
                match s {
                    Stage::Filter(f) => {
                        out.push_str(".filter(");
                        write_expr(out, f);
                        out.push(')');
                    }
                    Stage::SortDesc(f) => {
                        out.push_str(".sortDesc(");
                        write_expr(out, f);
                        out.push(')');
                    }
                    Stage::First => out.push_str(".first()"),
                    Stage::Take(n) => {
                        let _ = write!(out, ".take({n})");
                    }
                }
            }
        }
        ExprKind::Lambda(param, body) => {
            out.push_str(param);
            out.push_str(" -> ");
            write_expr(out, body);
        }
        ExprKind::Tuple(a, b) => {
            out.push('(');
            write_expr(out, a);
            out.push_str(", ");
            write_expr(out, b);
            out.push(')');
        }
    }
}
