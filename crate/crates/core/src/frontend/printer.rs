//! Canonical pretty-printer. Re-parsing the output yields a structurally
//! equal model (spans aside).

use std::fmt::Write;

use super::ast::*;
use super::parser::OPERATION_NAME;

pub fn print_model(m: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "MACHINE {}", m.name);
    let section = |out: &mut String, title: &str, decls: &[VarDecl]| {
        if decls.is_empty() {
            return;
        }
        let _ = writeln!(out, "{title}");
        for (i, d) in decls.iter().enumerate() {
            let sep = if i + 1 == decls.len() { "" } else { "," };
            let init = d
                .init
                .as_ref()
                .map(|e| format!(" := {}", print_expr(e)))
                .unwrap_or_default();
            let _ = writeln!(out, "  {} : {}{}{}", d.name, print_type(&d.ty), init, sep);
        }
    };
    if !m.constants.is_empty() {
        let _ = writeln!(out, "CONSTANTS");
        for c in &m.constants {
            let _ = writeln!(out, "  {} = {};", c.name, c.value);
        }
    }
    section(&mut out, "INPUTS", &m.inputs);
    section(&mut out, "OUTPUTS", &m.outputs);
    section(&mut out, "STATE", &m.state);
    if let Some(inv) = &m.invariant {
        let _ = writeln!(out, "INVARIANT\n  {}", print_expr(inv));
    }
    let _ = writeln!(out, "OPERATION {OPERATION_NAME}\nBEGIN");
    print_stmts(&mut out, &m.body, 1);
    let _ = writeln!(out, "END");
    out
}

pub fn print_type(t: &Type) -> String {
    fn scalar(s: &ScalarType) -> String {
        match s {
            ScalarType::Bool => "BOOL".into(),
            ScalarType::Int { lo, hi } => format!("INT({lo}..{hi})"),
        }
    }
    match t {
        Type::Scalar(s) => scalar(s),
        Type::Array { len, elem } => format!("ARRAY {len} OF {}", scalar(elem)),
    }
}

fn print_stmts(out: &mut String, body: &[Stmt], depth: usize) {
    for (i, s) in body.iter().enumerate() {
        let sep = if i + 1 == body.len() { "" } else { ";" };
        print_stmt(out, s, depth);
        out.push_str(sep);
        out.push('\n');
    }
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "  ".repeat(depth);
    match s {
        Stmt::Assign { target, value, .. } => {
            let _ = write!(out, "{pad}{}", target.name);
            if let Some(i) = &target.index {
                let _ = write!(out, "({})", print_expr(i));
            }
            let _ = write!(out, " := {}", print_expr(value));
        }
        Stmt::If {
            arms, otherwise, ..
        } => {
            for (i, (cond, body)) in arms.iter().enumerate() {
                let kw = if i == 0 { "IF" } else { "ELSIF" };
                let lead = if i == 0 { pad.as_str() } else { "" };
                let _ = writeln!(out, "{lead}{kw} {} THEN", print_expr(cond));
                print_stmts(out, body, depth + 1);
                if i + 1 < arms.len() {
                    out.push_str(&pad);
                }
            }
            if !otherwise.is_empty() {
                let _ = writeln!(out, "{pad}ELSE");
                print_stmts(out, otherwise, depth + 1);
            }
            let _ = write!(out, "{pad}END");
        }
        Stmt::For {
            var, from, to, body, ..
        } => {
            let _ = writeln!(
                out,
                "{pad}FOR {var} FROM {} TO {} DO",
                print_expr(from),
                print_expr(to)
            );
            print_stmts(out, body, depth + 1);
            let _ = write!(out, "{pad}END");
        }
    }
}

/// Binary operations are fully parenthesised so precedence never matters.
pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Bool(true) => "TRUE".into(),
        ExprKind::Bool(false) => "FALSE".into(),
        ExprKind::Int(v) if *v < 0 => format!("({v})"),
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Var(n) => n.clone(),
        ExprKind::Index(n, i) => format!("{n}({})", print_expr(i)),
        ExprKind::Unary(UnOp::Not, a) => format!("(NOT {})", print_expr(a)),
        ExprKind::Unary(UnOp::Neg, a) => format!("(-({}))", print_expr(a)),
        ExprKind::Binary(op, a, b) => {
            format!("({} {} {})", print_expr(a), op.symbol(), print_expr(b))
        }
    }
}
