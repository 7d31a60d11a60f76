//! Name resolution, typing, constant folding of loop bounds and inits.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::diag::{DiagCode, Diagnostic};

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Input,
    Output,
    State,
    Loop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub kind: VarKind,
    pub ty: Type,
    /// Initial (state) or fail-safe reset (outputs) value of every cell.
    pub init: i64,
    /// Offset of the first cell in the flat cell store.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Int,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TExprKind {
    Const(i64),
    Load(VarId),
    LoadIndex(VarId, Box<TExpr>),
    Unary(UnOp, Box<TExpr>),
    Binary(BinOp, Box<TExpr>, Box<TExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TExpr {
    pub kind: TExprKind,
    pub ty: Ty,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TStmt {
    Assign {
        var: VarId,
        index: Option<TExpr>,
        value: TExpr,
        span: Span,
    },
    If {
        arms: Vec<(TExpr, Vec<TStmt>)>,
        otherwise: Vec<TStmt>,
        span: Span,
    },
    For {
        var: VarId,
        lo: i64,
        hi: i64,
        body: Vec<TStmt>,
        span: Span,
    },
}

impl TStmt {
    pub fn span(&self) -> Span {
        match self {
            TStmt::Assign { span, .. } | TStmt::If { span, .. } | TStmt::For { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedModel {
    pub name: String,
    pub vars: Vec<VarInfo>,
    pub inputs: Vec<VarId>,
    pub outputs: Vec<VarId>,
    pub state: Vec<VarId>,
    pub loops: Vec<VarId>,
    pub invariant: Option<TExpr>,
    pub body: Vec<TStmt>,
    /// Total number of cells across every variable (loop counters included).
    pub cells: usize,
    pub source: Model,
}

impl TypedModel {
    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id]
    }

    pub fn cells_of(&self, ids: &[VarId]) -> usize {
        ids.iter().map(|&v| self.vars[v].ty.cells() as usize).sum()
    }

    pub fn input_cells(&self) -> usize {
        self.cells_of(&self.inputs)
    }

    pub fn output_cells(&self) -> usize {
        self.cells_of(&self.outputs)
    }

    pub fn state_cells(&self) -> usize {
        self.cells_of(&self.state)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|&v| self.vars[v].name == name)
    }
}

pub fn typecheck(model: &Model) -> Result<TypedModel, Vec<Diagnostic>> {
    let mut cx = Checker {
        vars: Vec::new(),
        scope: HashMap::new(),
        constants: HashMap::new(),
        diags: Vec::new(),
        offset: 0,
    };
    for c in &model.constants {
        cx.check_literal(c.value, c.span);
        cx.constants.insert(c.name.clone(), c.value);
    }
    let ids = |cx: &mut Checker, decls: &[VarDecl], kind: VarKind| -> Vec<VarId> {
        decls
            .iter()
            .map(|d| {
                let init = match (&d.init, kind) {
                    (Some(e), VarKind::State) => match cx.const_eval(e) {
                        Some(v) if d.ty.elem().contains(v) => v,
                        Some(v) => {
                            cx.error(
                                DiagCode::InitRange,
                                e.span,
                                format!("initial value {v} outside the type of `{}`", d.name),
                            );
                            d.ty.elem().default_value()
                        }
                        None => d.ty.elem().default_value(),
                    },
                    _ => d.ty.elem().default_value(),
                };
                cx.declare(&d.name, kind, d.ty, init)
            })
            .collect()
    };
    let inputs = ids(&mut cx, &model.inputs, VarKind::Input);
    let outputs = ids(&mut cx, &model.outputs, VarKind::Output);
    let state = ids(&mut cx, &model.state, VarKind::State);

    let invariant = model.invariant.as_ref().and_then(|e| {
        let t = cx.expr(e)?;
        if t.ty != Ty::Bool {
            cx.error(DiagCode::TypeMismatch, e.span, "invariant must be BOOL");
        }
        cx.check_invariant_scope(&t);
        Some(t)
    });

    let body = cx.stmts(&model.body);
    if !cx.diags.is_empty() {
        return Err(cx.diags);
    }
    let loops = cx
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Loop)
        .map(|(i, _)| i)
        .collect();
    Ok(TypedModel {
        name: model.name.clone(),
        cells: cx.offset,
        vars: cx.vars,
        inputs,
        outputs,
        state,
        loops,
        invariant,
        body,
        source: model.clone(),
    })
}

struct Checker {
    vars: Vec<VarInfo>,
    scope: HashMap<String, VarId>,
    constants: HashMap<String, i64>,
    diags: Vec<Diagnostic>,
    offset: usize,
}

impl Checker {
    fn error(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn declare(&mut self, name: &str, kind: VarKind, ty: Type, init: i64) -> VarId {
        let id = self.vars.len();
        self.vars.push(VarInfo {
            name: name.to_string(),
            kind,
            ty,
            init,
            offset: self.offset,
        });
        self.offset += ty.cells() as usize;
        self.scope.insert(name.to_string(), id);
        id
    }

    fn check_literal(&mut self, v: i64, span: Span) {
        if v < i32::MIN as i64 || v > i32::MAX as i64 {
            self.error(
                DiagCode::LiteralRange,
                span,
                format!("literal {v} outside signed 32-bit"),
            );
        }
    }

    /// Folds a constant expression; reports and returns None otherwise.
    fn const_eval(&mut self, e: &Expr) -> Option<i64> {
        let r = match &e.kind {
            ExprKind::Int(v) => {
                self.check_literal(*v, e.span);
                Some(*v)
            }
            ExprKind::Var(n) => match self.constants.get(n) {
                Some(v) => Some(*v),
                None => {
                    let code = if self.scope.contains_key(n) {
                        DiagCode::NonConstantBound
                    } else {
                        DiagCode::UnknownIdentifier
                    };
                    self.error(code, e.span, format!("`{n}` is not a constant"));
                    return None;
                }
            },
            ExprKind::Bool(b) => Some(*b as i64),
            ExprKind::Unary(UnOp::Neg, a) => self.const_eval(a)?.checked_neg(),
            ExprKind::Unary(UnOp::Not, a) => Some((self.const_eval(a)? == 0) as i64),
            ExprKind::Binary(op, a, b) if op.is_arithmetic() => {
                let (x, y) = (self.const_eval(a)?, self.const_eval(b)?);
                match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Mul => x.checked_mul(y),
                    BinOp::Div => x.checked_div(y),
                    BinOp::Mod => x.checked_rem(y),
                    _ => unreachable!(),
                }
            }
            _ => {
                self.error(
                    DiagCode::NonConstantBound,
                    e.span,
                    "expression is not constant",
                );
                return None;
            }
        };
        if r.is_none() {
            self.error(
                DiagCode::NonConstantBound,
                e.span,
                "constant expression overflows or divides by zero",
            );
        }
        r
    }

    fn lookup(&mut self, name: &str, span: Span) -> Option<VarId> {
        let id = self.scope.get(name).copied();
        if id.is_none() && !self.constants.contains_key(name) {
            self.error(
                DiagCode::UnknownIdentifier,
                span,
                format!("unknown identifier `{name}`"),
            );
        }
        id
    }

    fn expr(&mut self, e: &Expr) -> Option<TExpr> {
        let (kind, ty) = match &e.kind {
            ExprKind::Bool(b) => (TExprKind::Const(*b as i64), Ty::Bool),
            ExprKind::Int(v) => {
                self.check_literal(*v, e.span);
                (TExprKind::Const(*v), Ty::Int)
            }
            ExprKind::Var(n) => {
                if let Some(v) = self.constants.get(n) {
                    (TExprKind::Const(*v), Ty::Int)
                } else {
                    let id = self.lookup(n, e.span)?;
                    let ty = self.vars[id].ty;
                    if ty.is_array() {
                        self.error(
                            DiagCode::ArrayAsValue,
                            e.span,
                            format!("array `{n}` must be indexed"),
                        );
                        return None;
                    }
                    (TExprKind::Load(id), scalar_ty(ty.elem()))
                }
            }
            ExprKind::Index(n, idx) => {
                let id = self.lookup(n, e.span);
                let idx = self.expr(idx);
                let id = id?;
                let ty = self.vars[id].ty;
                if !ty.is_array() {
                    self.error(
                        DiagCode::NotAnArray,
                        e.span,
                        format!("`{n}` is not an array"),
                    );
                    return None;
                }
                let idx = idx?;
                if idx.ty != Ty::Int {
                    self.error(DiagCode::IndexType, idx.span, "array index must be INT");
                    return None;
                }
                (
                    TExprKind::LoadIndex(id, Box::new(idx)),
                    scalar_ty(ty.elem()),
                )
            }
            ExprKind::Unary(op, a) => {
                let a = self.expr(a)?;
                let want = match op {
                    UnOp::Not => Ty::Bool,
                    UnOp::Neg => Ty::Int,
                };
                if a.ty != want {
                    self.error(
                        DiagCode::TypeMismatch,
                        e.span,
                        format!("operand of {op:?} must be {want:?}"),
                    );
                    return None;
                }
                (TExprKind::Unary(*op, Box::new(a)), want)
            }
            ExprKind::Binary(op, a, b) => {
                let a = self.expr(a);
                let b = self.expr(b);
                let (a, b) = (a?, b?);
                let (operand, result) = if op.is_logical() {
                    (Some(Ty::Bool), Ty::Bool)
                } else if matches!(op, BinOp::Eq | BinOp::Ne) {
                    (None, Ty::Bool)
                } else if op.is_comparison() {
                    (Some(Ty::Int), Ty::Bool)
                } else {
                    (Some(Ty::Int), Ty::Int)
                };
                let ok = match operand {
                    Some(t) => a.ty == t && b.ty == t,
                    None => a.ty == b.ty,
                };
                if !ok {
                    self.error(
                        DiagCode::TypeMismatch,
                        e.span,
                        format!(
                            "operands of `{}` have types {:?} and {:?}",
                            op.symbol(),
                            a.ty,
                            b.ty
                        ),
                    );
                    return None;
                }
                (TExprKind::Binary(*op, Box::new(a), Box::new(b)), result)
            }
        };
        Some(TExpr {
            kind,
            ty,
            span: e.span,
        })
    }

    fn check_invariant_scope(&mut self, e: &TExpr) {
        match &e.kind {
            TExprKind::Const(_) => {}
            TExprKind::Load(v) | TExprKind::LoadIndex(v, _) => {
                if matches!(self.vars[*v].kind, VarKind::Input | VarKind::Loop) {
                    let name = self.vars[*v].name.clone();
                    self.error(
                        DiagCode::InvariantScope,
                        e.span,
                        format!("invariant may only mention state and outputs, not `{name}`"),
                    );
                }
                if let TExprKind::LoadIndex(_, i) = &e.kind {
                    self.check_invariant_scope(i);
                }
            }
            TExprKind::Unary(_, a) => self.check_invariant_scope(a),
            TExprKind::Binary(_, a, b) => {
                self.check_invariant_scope(a);
                self.check_invariant_scope(b);
            }
        }
    }

    fn stmts(&mut self, body: &[Stmt]) -> Vec<TStmt> {
        body.iter().filter_map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, s: &Stmt) -> Option<TStmt> {
        match s {
            Stmt::Assign {
                target,
                value,
                span,
            } => {
                let value = self.expr(value);
                let index = target.index.as_ref().map(|i| self.expr(i));
                if self.constants.contains_key(&target.name) {
                    self.error(
                        DiagCode::AssignToConstant,
                        target.span,
                        format!("cannot assign to constant `{}`", target.name),
                    );
                    return None;
                }
                let var = self.lookup(&target.name, target.span)?;
                let info = self.vars[var].clone();
                match info.kind {
                    VarKind::Input => {
                        self.error(
                            DiagCode::AssignToInput,
                            target.span,
                            format!("cannot assign to input `{}`", info.name),
                        );
                        return None;
                    }
                    VarKind::Loop => {
                        self.error(
                            DiagCode::AssignToLoopVar,
                            target.span,
                            format!("cannot assign to loop index `{}`", info.name),
                        );
                        return None;
                    }
                    _ => {}
                }
                let index = match (index, info.ty.is_array()) {
                    (None, true) => {
                        self.error(
                            DiagCode::ArrayAsValue,
                            target.span,
                            format!("array `{}` can only be assigned element-wise", info.name),
                        );
                        return None;
                    }
                    (Some(_), false) => {
                        self.error(
                            DiagCode::NotAnArray,
                            target.span,
                            format!("`{}` is not an array", info.name),
                        );
                        return None;
                    }
                    (Some(i), true) => {
                        let i = i?;
                        if i.ty != Ty::Int {
                            self.error(DiagCode::IndexType, i.span, "array index must be INT");
                            return None;
                        }
                        Some(i)
                    }
                    (None, false) => None,
                };
                let value = value?;
                let want = scalar_ty(info.ty.elem());
                if value.ty != want {
                    self.error(
                        DiagCode::TypeMismatch,
                        *span,
                        format!(
                            "cannot assign {:?} to `{}` of type {:?}",
                            value.ty, info.name, want
                        ),
                    );
                    return None;
                }
                Some(TStmt::Assign {
                    var,
                    index,
                    value,
                    span: *span,
                })
            }
            Stmt::If {
                arms,
                otherwise,
                span,
            } => {
                let mut typed = Vec::new();
                for (c, b) in arms {
                    let c = self.expr(c);
                    let b = self.stmts(b);
                    if let Some(c) = c {
                        if c.ty != Ty::Bool {
                            self.error(DiagCode::TypeMismatch, c.span, "condition must be BOOL");
                        }
                        typed.push((c, b));
                    }
                }
                let otherwise = self.stmts(otherwise);
                Some(TStmt::If {
                    arms: typed,
                    otherwise,
                    span: *span,
                })
            }
            Stmt::For {
                var,
                from,
                to,
                body,
                span,
            } => {
                let lo = self.const_eval(from);
                let hi = self.const_eval(to);
                if self.scope.contains_key(var) || self.constants.contains_key(var) {
                    self.error(
                        DiagCode::DuplicateIdentifier,
                        *span,
                        format!("loop index `{var}` shadows an existing name"),
                    );
                    return None;
                }
                let (lo, hi) = (lo?, hi?);
                for (v, e) in [(lo, from), (hi, to)] {
                    if v < i32::MIN as i64 || v > i32::MAX as i64 {
                        self.error(DiagCode::LiteralRange, e.span, "loop bound outside 32-bit");
                        return None;
                    }
                }
                let range = ScalarType::Int {
                    lo,
                    hi: hi.max(lo),
                };
                let id = self.declare(var, VarKind::Loop, Type::Scalar(range), lo);
                let body = self.stmts(body);
                self.scope.remove(var);
                Some(TStmt::For {
                    var: id,
                    lo,
                    hi,
                    body,
                    span: *span,
                })
            }
        }
    }
}

fn scalar_ty(s: ScalarType) -> Ty {
    match s {
        ScalarType::Bool => Ty::Bool,
        ScalarType::Int { .. } => Ty::Int,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn check(src: &str) -> Result<TypedModel, Vec<Diagnostic>> {
        typecheck(&parse(src).expect("parses"))
    }

    fn first_code(src: &str) -> DiagCode {
        check(src).unwrap_err()[0].code
    }

    #[test]
    fn bool_copy_is_well_typed() {
        let t = check("MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END")
            .unwrap();
        assert_eq!(t.body.len(), 1);
    }

    #[test]
    fn bool_into_int_is_rejected() {
        assert_eq!(
            first_code("MACHINE M INPUTS b:BOOL STATE n:INT(0..9) OPERATION user_logic BEGIN n := b END"),
            DiagCode::TypeMismatch
        );
    }

    #[test]
    fn loop_bound_must_be_constant() {
        assert_eq!(
            first_code("MACHINE M STATE n:INT(0..9), s:INT(0..100) OPERATION user_logic BEGIN FOR k FROM 0 TO n DO s := s + 1 END END"),
            DiagCode::NonConstantBound
        );
    }

    #[test]
    fn constants_fold_into_bounds() {
        let t = check("MACHINE M CONSTANTS N = 3; STATE s:INT(0..100) OPERATION user_logic BEGIN FOR k FROM 0 TO N - 1 DO s := s + k END END").unwrap();
        let TStmt::For { lo, hi, .. } = &t.body[0] else {
            panic!()
        };
        assert_eq!((*lo, *hi), (0, 2));
    }

    #[test]
    fn write_restrictions() {
        assert_eq!(
            first_code("MACHINE M INPUTS i:BOOL OPERATION user_logic BEGIN i := TRUE END"),
            DiagCode::AssignToInput
        );
        assert_eq!(
            first_code("MACHINE M STATE s:INT(0..9) OPERATION user_logic BEGIN FOR k FROM 0 TO 3 DO k := 1 END END"),
            DiagCode::AssignToLoopVar
        );
        assert_eq!(
            first_code("MACHINE M STATE a:ARRAY 4 OF BOOL OPERATION user_logic BEGIN a(TRUE) := FALSE END"),
            DiagCode::IndexType
        );
        assert_eq!(
            first_code("MACHINE M STATE a:ARRAY 4 OF BOOL OPERATION user_logic BEGIN a := FALSE END"),
            DiagCode::ArrayAsValue
        );
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            first_code("MACHINE M OUTPUTS o:BOOL OPERATION user_logic BEGIN o := x END"),
            DiagCode::UnknownIdentifier
        );
    }

    #[test]
    fn init_out_of_range() {
        assert_eq!(
            first_code("MACHINE M STATE c:INT(0..3) := 7 OPERATION user_logic BEGIN END"),
            DiagCode::InitRange
        );
    }

    #[test]
    fn invariant_cannot_read_inputs() {
        assert_eq!(
            first_code("MACHINE M INPUTS i:BOOL STATE s:BOOL INVARIANT i OPERATION user_logic BEGIN s := i END"),
            DiagCode::InvariantScope
        );
    }

    #[test]
    fn sequential_loops_may_reuse_index_name() {
        check("MACHINE M STATE s:INT(0..100) OPERATION user_logic BEGIN FOR k FROM 0 TO 1 DO s := k END; FOR k FROM 0 TO 1 DO s := k END END").unwrap();
        assert_eq!(
            first_code("MACHINE M STATE s:INT(0..100) OPERATION user_logic BEGIN FOR k FROM 0 TO 1 DO FOR k FROM 0 TO 1 DO s := k END END END"),
            DiagCode::DuplicateIdentifier
        );
    }

    #[test]
    fn cell_offsets_are_contiguous() {
        let t = check("MACHINE M INPUTS i:BOOL OUTPUTS o:ARRAY 3 OF INT(1..5) STATE s:BOOL OPERATION user_logic BEGIN END").unwrap();
        let offs: Vec<usize> = t.vars.iter().map(|v| v.offset).collect();
        assert_eq!(offs, vec![0, 1, 4]);
        assert_eq!(t.vars[1].init, 1);
        assert_eq!(t.cells, 5);
    }
}
