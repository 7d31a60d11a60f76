//! Recursive-descent parser for B0-lite.

use std::collections::HashMap;

use super::ast::*;
use super::diag::{DiagCode, Diagnostic};
use super::lexer::{describe, lex, Kw, Tok, Token};

pub const OPERATION_NAME: &str = "user_logic";

/// Parses a model. Never panics; every rejection carries at least one
/// diagnostic with a span.
pub fn parse(source: &str) -> Result<Model, Vec<Diagnostic>> {
    let tokens = lex(source).map_err(|d| vec![d])?;
    let mut p = Parser {
        tokens,
        pos: 0,
        diags: Vec::new(),
    };
    match p.model() {
        Ok(model) => {
            check_unique(&model, &mut p.diags);
            if p.diags.is_empty() {
                Ok(model)
            } else {
                Err(p.diags)
            }
        }
        Err(d) => {
            p.diags.push(d);
            Err(p.diags)
        }
    }
}

fn check_unique(model: &Model, diags: &mut Vec<Diagnostic>) {
    let mut seen: HashMap<&str, Span> = HashMap::new();
    let names = model
        .inputs
        .iter()
        .chain(&model.outputs)
        .chain(&model.state)
        .map(|d| (d.name.as_str(), d.span))
        .chain(model.constants.iter().map(|c| (c.name.as_str(), c.span)))
        .chain(std::iter::once((model.name.as_str(), model.span)));
    for (name, span) in names {
        if let Some(first) = seen.get(name) {
            diags.push(Diagnostic::error(
                DiagCode::DuplicateIdentifier,
                span,
                format!("`{name}` is already declared at {first}"),
            ));
        } else {
            seen.insert(name, span);
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
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

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::error(
            DiagCode::Syntax,
            self.span(),
            format!("expected {what}, found {}", describe(self.peek())),
        )
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&describe(&tok)))
        }
    }

    fn kw(&mut self, kw: Kw) -> PResult<Span> {
        self.expect(Tok::Keyword(kw))
    }

    fn is_kw(&self, kw: Kw) -> bool {
        *self.peek() == Tok::Keyword(kw)
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            Tok::Keyword(k) => Err(Diagnostic::error(
                DiagCode::ReservedWord,
                self.span(),
                format!("`{}` is a reserved word", k.as_str()),
            )),
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    fn model(&mut self) -> PResult<Model> {
        let span = self.kw(Kw::MACHINE)?;
        let (name, _) = self.ident()?;
        let mut model = Model {
            name,
            inputs: Vec::new(),
            outputs: Vec::new(),
            state: Vec::new(),
            constants: Vec::new(),
            invariant: None,
            body: Vec::new(),
            span,
        };
        let mut seen: Vec<Kw> = Vec::new();
        let mut have_operation = false;
        loop {
            let span = self.span();
            let kw = match self.peek().clone() {
                Tok::Eof => break,
                Tok::Keyword(
                    k @ (Kw::INPUTS
                    | Kw::OUTPUTS
                    | Kw::STATE
                    | Kw::CONSTANTS
                    | Kw::INVARIANT
                    | Kw::OPERATION),
                ) => k,
                Tok::Ident(word) => {
                    return Err(Diagnostic::error(
                        DiagCode::UnknownSection,
                        span,
                        format!("unknown section `{word}`"),
                    ))
                }
                _ => return Err(self.unexpected("a section keyword")),
            };
            self.bump();
            if seen.contains(&kw) {
                self.diags.push(Diagnostic::error(
                    DiagCode::DuplicateSection,
                    span,
                    format!("section {} appears more than once", kw.as_str()),
                ));
            }
            seen.push(kw);
            match kw {
                Kw::INPUTS => model.inputs.extend(self.decls(false)?),
                Kw::OUTPUTS => model.outputs.extend(self.decls(false)?),
                Kw::STATE => model.state.extend(self.decls(true)?),
                Kw::CONSTANTS => {
                    while let Tok::Ident(_) = self.peek() {
                        let (name, span) = self.ident()?;
                        self.expect(Tok::Eq)?;
                        let value = self.signed_int()?;
                        self.expect(Tok::Semi)?;
                        model.constants.push(ConstDecl { name, value, span });
                    }
                }
                Kw::INVARIANT => model.invariant = Some(self.expr()?),
                Kw::OPERATION => {
                    let (op, op_span) = self.ident()?;
                    if op != OPERATION_NAME {
                        self.diags.push(Diagnostic::error(
                            DiagCode::OperationName,
                            op_span,
                            format!("operation must be named {OPERATION_NAME}, found `{op}`"),
                        ));
                    }
                    self.kw(Kw::BEGIN)?;
                    model.body = self.stmts()?;
                    self.kw(Kw::END)?;
                    have_operation = true;
                }
                _ => unreachable!(),
            }
        }
        if !have_operation {
            self.diags.push(Diagnostic::error(
                DiagCode::MissingOperation,
                self.span(),
                format!("model has no OPERATION {OPERATION_NAME}"),
            ));
        }
        Ok(model)
    }

    fn decls(&mut self, with_init: bool) -> PResult<Vec<VarDecl>> {
        let mut out = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            let (name, span) = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            let init = if with_init && self.eat(&Tok::Assign) {
                Some(self.expr()?)
            } else {
                None
            };
            out.push(VarDecl {
                name,
                ty,
                init,
                span,
            });
            if !self.eat(&Tok::Comma) {
                self.eat(&Tok::Semi);
            }
        }
        Ok(out)
    }

    fn scalar(&mut self) -> PResult<ScalarType> {
        let span = self.span();
        match self.peek() {
            Tok::Keyword(Kw::BOOL) => {
                self.bump();
                Ok(ScalarType::Bool)
            }
            Tok::Keyword(Kw::INT) => {
                self.bump();
                self.expect(Tok::LParen)?;
                let lo = self.signed_int()?;
                self.expect(Tok::DotDot)?;
                let hi = self.signed_int()?;
                self.expect(Tok::RParen)?;
                let i32_range = i32::MIN as i64..=i32::MAX as i64;
                if lo > hi || !i32_range.contains(&lo) || !i32_range.contains(&hi) {
                    return Err(Diagnostic::error(
                        DiagCode::BadType,
                        span,
                        format!("INT({lo}..{hi}) must satisfy lo <= hi within signed 32-bit"),
                    ));
                }
                Ok(ScalarType::Int { lo, hi })
            }
            _ => Err(self.unexpected("BOOL or INT")),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        let span = self.span();
        if self.eat(&Tok::Keyword(Kw::ARRAY)) {
            let len = match *self.peek() {
                Tok::Int(v) => {
                    self.bump();
                    v
                }
                _ => return Err(self.unexpected("array length")),
            };
            if !(1..=65536).contains(&len) {
                return Err(Diagnostic::error(
                    DiagCode::BadType,
                    span,
                    format!("array length {len} outside 1..65536"),
                ));
            }
            self.kw(Kw::OF)?;
            let elem = self.scalar()?;
            Ok(Type::Array {
                len: len as u32,
                elem,
            })
        } else {
            Ok(Type::Scalar(self.scalar()?))
        }
    }

    fn stmts(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::Ident(_) | Tok::Keyword(Kw::IF) | Tok::Keyword(Kw::FOR) => {
                    out.push(self.stmt()?);
                    if !self.eat(&Tok::Semi) {
                        break;
                    }
                }
                _ => break,
            }
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Keyword(Kw::IF) => {
                self.bump();
                let mut arms = Vec::new();
                let cond = self.expr()?;
                self.kw(Kw::THEN)?;
                arms.push((cond, self.stmts()?));
                let mut otherwise = Vec::new();
                loop {
                    if self.eat(&Tok::Keyword(Kw::ELSIF)) {
                        let cond = self.expr()?;
                        self.kw(Kw::THEN)?;
                        arms.push((cond, self.stmts()?));
                    } else if self.eat(&Tok::Keyword(Kw::ELSE)) {
                        otherwise = self.stmts()?;
                        self.kw(Kw::END)?;
                        break;
                    } else {
                        self.kw(Kw::END)?;
                        break;
                    }
                }
                Ok(Stmt::If {
                    arms,
                    otherwise,
                    span,
                })
            }
            Tok::Keyword(Kw::FOR) => {
                self.bump();
                let (var, _) = self.ident()?;
                self.kw(Kw::FROM)?;
                let from = self.expr()?;
                self.kw(Kw::TO)?;
                let to = self.expr()?;
                self.kw(Kw::DO)?;
                let body = self.stmts()?;
                self.kw(Kw::END)?;
                Ok(Stmt::For {
                    var,
                    from,
                    to,
                    body,
                    span,
                })
            }
            Tok::Ident(_) => {
                let (name, lspan) = self.ident()?;
                let index = if self.eat(&Tok::LParen) {
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Some(e)
                } else {
                    None
                };
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                Ok(Stmt::Assign {
                    target: LValue {
                        name,
                        index,
                        span: lspan,
                    },
                    value,
                    span,
                })
            }
            _ => Err(self.unexpected("statement")),
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Keyword(Kw::OR) => BinOp::Or,
                Tok::Keyword(Kw::XOR) => BinOp::Xor,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.and_expr()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.is_kw(Kw::AND) {
            let span = self.bump().span;
            let rhs = self.not_expr()?;
            lhs = Expr::new(
                ExprKind::Binary(BinOp::And, Box::new(lhs), Box::new(rhs)),
                span,
            );
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_kw(Kw::NOT) {
            let span = self.bump().span;
            let e = self.not_expr()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), span));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        let span = self.bump().span;
        let rhs = self.sum()?;
        Ok(Expr::new(
            ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
            span,
        ))
    }

    fn sum(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Keyword(Kw::MOD) => BinOp::Mod,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let span = self.bump().span;
            // `-` directly on a literal is a negative literal.
            if let Tok::Int(v) = *self.peek() {
                self.bump();
                return Ok(Expr::new(ExprKind::Int(-v), span));
            }
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Int(v), span))
            }
            Tok::Keyword(Kw::TRUE) => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(true), span))
            }
            Tok::Keyword(Kw::FALSE) => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(false), span))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let idx = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::new(ExprKind::Index(name, Box::new(idx)), span))
                } else {
                    Ok(Expr::new(ExprKind::Var(name), span))
                }
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_model() {
        let m = parse("MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END")
            .unwrap();
        assert_eq!(m.inputs.len(), 1);
        assert_eq!(m.outputs.len(), 1);
        assert!(m.state.is_empty());
        assert_eq!(m.body.len(), 1);
    }

    #[test]
    fn twenty_inputs_eight_outputs() {
        let ins: Vec<String> = (0..20).map(|i| format!("i{i}:BOOL")).collect();
        let outs: Vec<String> = (0..8).map(|i| format!("o{i}:BOOL")).collect();
        let body: Vec<String> = (0..8).map(|i| format!("o{i} := i{i}")).collect();
        let src = format!(
            "MACHINE SK INPUTS {} OUTPUTS {} OPERATION user_logic BEGIN {} END",
            ins.join(", "),
            outs.join(", "),
            body.join("; ")
        );
        let m = parse(&src).unwrap();
        assert_eq!(m.inputs.len(), 20);
        assert_eq!(m.outputs.len(), 8);
    }

    #[test]
    fn operation_must_be_user_logic() {
        let diags = parse("MACHINE M OPERATION main BEGIN END").unwrap_err();
        assert!(diags.iter().any(|d| d.code == DiagCode::OperationName));
        assert_eq!(diags[0].span, Span::new(1, 21));
    }

    #[test]
    fn duplicate_identifier() {
        let diags =
            parse("MACHINE M INPUTS a:BOOL OUTPUTS a:BOOL OPERATION user_logic BEGIN END")
                .unwrap_err();
        assert_eq!(diags[0].code, DiagCode::DuplicateIdentifier);
        assert_eq!(diags[0].span.line, 1);
    }

    #[test]
    fn unknown_section() {
        let diags = parse("MACHINE M SETS x OPERATION user_logic BEGIN END").unwrap_err();
        assert_eq!(diags[0].code, DiagCode::UnknownSection);
    }

    #[test]
    fn syntax_error_has_span() {
        let diags = parse("MACHINE M\nOPERATION user_logic BEGIN o := END").unwrap_err();
        assert_eq!(diags[0].code, DiagCode::Syntax);
        assert_eq!(diags[0].span, Span::new(2, 33));
    }

    #[test]
    fn while_is_not_a_statement() {
        let diags =
            parse("MACHINE M STATE x:BOOL OPERATION user_logic BEGIN WHILE x DO x := FALSE END END")
                .unwrap_err();
        assert_eq!(diags[0].code, DiagCode::Syntax);
    }

    #[test]
    fn precedence() {
        let m = parse(
            "MACHINE M OUTPUTS o:BOOL OPERATION user_logic BEGIN o := 1 + 2 * 3 = 7 AND NOT FALSE OR TRUE END",
        )
        .unwrap();
        let Stmt::Assign { value, .. } = &m.body[0] else {
            panic!()
        };
        // top is OR
        assert!(matches!(value.kind, ExprKind::Binary(BinOp::Or, _, _)));
    }

    #[test]
    fn garbage_never_panics() {
        for src in ["", "MACHINE", "MACHINE M INPUTS x : ARRAY 0 OF BOOL", "(((", "é", "MACHINE M CONSTANTS a = ;"] {
            assert!(parse(src).is_err());
        }
    }
}
