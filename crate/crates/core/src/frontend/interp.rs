//! Reference interpreter: the semantic oracle both backends are checked
//! against.

use std::fmt;

use serde::Serialize;

use super::ast::{BinOp, ScalarType, Type, UnOp};
use super::cost::LOOP_OVERHEAD;
use super::typeck::{TExpr, TExprKind, TStmt, TypedModel, VarId, VarKind};

/// Runtime error of a user function. Every backend must trap on exactly
/// the same cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "trap", rename_all = "snake_case")]
pub enum Trap {
    RangeViolation { var: String, value: i64 },
    DivByZero,
    Overflow,
    IndexOutOfBounds { var: String, index: i64 },
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trap::RangeViolation { var, value } => {
                write!(f, "range violation: {var} := {value}")
            }
            Trap::DivByZero => write!(f, "division by zero"),
            Trap::Overflow => write!(f, "arithmetic overflow"),
            Trap::IndexOutOfBounds { var, index } => {
                write!(f, "index out of bounds: {var}({index})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InputError {
    #[error("expected {expected} input cells, got {got}")]
    Length { expected: usize, got: usize },
    #[error("input `{name}` cell {cell}: value {value} outside its type")]
    Range {
        name: String,
        cell: usize,
        value: i64,
    },
}

/// Checks a flattened input vector (cells in declaration order).
pub fn validate_inputs(model: &TypedModel, inputs: &[i64]) -> Result<(), InputError> {
    let expected = model.input_cells();
    if inputs.len() != expected {
        return Err(InputError::Length {
            expected,
            got: inputs.len(),
        });
    }
    let mut at = 0;
    for &id in &model.inputs {
        let v = model.var(id);
        for cell in 0..v.ty.cells() as usize {
            let value = inputs[at];
            if !v.ty.elem().contains(value) {
                return Err(InputError::Range {
                    name: v.name.clone(),
                    cell,
                    value,
                });
            }
            at += 1;
        }
    }
    Ok(())
}

/// Initial contents of every cell: state inits, output resets, input and
/// loop defaults.
pub fn initial_cells(model: &TypedModel) -> Vec<i64> {
    let mut cells = vec![0; model.cells];
    for v in &model.vars {
        for c in 0..v.ty.cells() as usize {
            cells[v.offset + c] = v.init;
        }
    }
    cells
}

#[derive(Debug, Clone)]
pub struct Interpreter<'m> {
    model: &'m TypedModel,
    cells: Vec<i64>,
    ops: u64,
}

impl<'m> Interpreter<'m> {
    pub fn new(model: &'m TypedModel) -> Self {
        Interpreter {
            model,
            cells: initial_cells(model),
            ops: 0,
        }
    }

    pub fn model(&self) -> &'m TypedModel {
        self.model
    }

    /// Runs one cycle and returns the dynamic operation count under the
    /// cost table. Inputs must already be valid.
    pub fn cycle(&mut self, inputs: &[i64]) -> Result<u64, Trap> {
        let m = self.model;
        let mut at = 0;
        for &id in &m.inputs {
            let v = m.var(id);
            let n = v.ty.cells() as usize;
            self.cells[v.offset..v.offset + n].copy_from_slice(&inputs[at..at + n]);
            at += n;
        }
        for &id in &m.outputs {
            let v = m.var(id);
            let n = v.ty.cells() as usize;
            self.cells[v.offset..v.offset + n].fill(v.init);
        }
        self.ops = 0;
        self.stmts(&m.body)?;
        Ok(self.ops)
    }

    fn section(&self, ids: &[VarId]) -> Vec<i64> {
        ids.iter()
            .flat_map(|&id| {
                let v = self.model.var(id);
                self.cells[v.offset..v.offset + v.ty.cells() as usize].iter().copied()
            })
            .collect()
    }

    pub fn outputs(&self) -> Vec<i64> {
        self.section(&self.model.outputs)
    }

    pub fn state(&self) -> Vec<i64> {
        self.section(&self.model.state)
    }

    /// Replaces the state cells (used by the exhaustive checker).
    pub fn set_state(&mut self, state: &[i64]) {
        let mut at = 0;
        for &id in &self.model.state {
            let v = self.model.var(id);
            let n = v.ty.cells() as usize;
            self.cells[v.offset..v.offset + n].copy_from_slice(&state[at..at + n]);
            at += n;
        }
    }

    /// Evaluates the invariant against the current state and outputs.
    pub fn invariant_holds(&mut self) -> Result<bool, Trap> {
        match &self.model.invariant {
            Some(inv) => Ok(self.eval(inv)? != 0),
            None => Ok(true),
        }
    }

    fn stmts(&mut self, body: &[TStmt]) -> Result<(), Trap> {
        for s in body {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &TStmt) -> Result<(), Trap> {
        match s {
            TStmt::Assign {
                var, index, value, ..
            } => {
                let slot = match index {
                    Some(i) => {
                        let i = self.eval(i)?;
                        self.element(*var, i)?
                    }
                    None => self.model.var(*var).offset,
                };
                let v = self.eval(value)?;
                self.ops += 1;
                let info = self.model.var(*var);
                if let ScalarType::Int { lo, hi } = info.ty.elem() {
                    if v < lo || v > hi {
                        return Err(Trap::RangeViolation {
                            var: info.name.clone(),
                            value: v,
                        });
                    }
                }
                self.cells[slot] = v;
                Ok(())
            }
            TStmt::If {
                arms, otherwise, ..
            } => {
                for (cond, body) in arms {
                    if self.eval(cond)? != 0 {
                        return self.stmts(body);
                    }
                }
                self.stmts(otherwise)
            }
            TStmt::For {
                var, lo, hi, body, ..
            } => {
                let slot = self.model.var(*var).offset;
                for k in *lo..=*hi {
                    self.cells[slot] = k;
                    self.ops += LOOP_OVERHEAD;
                    self.stmts(body)?;
                }
                Ok(())
            }
        }
    }

    fn element(&self, var: VarId, index: i64) -> Result<usize, Trap> {
        let info = self.model.var(var);
        let Type::Array { len, .. } = info.ty else {
            unreachable!("typechecked index on scalar")
        };
        if index < 0 || index >= len as i64 {
            return Err(Trap::IndexOutOfBounds {
                var: info.name.clone(),
                index,
            });
        }
        Ok(info.offset + index as usize)
    }

    fn eval(&mut self, e: &TExpr) -> Result<i64, Trap> {
        self.ops += 1;
        Ok(match &e.kind {
            TExprKind::Const(v) => *v,
            TExprKind::Load(id) => self.cells[self.model.var(*id).offset],
            TExprKind::LoadIndex(id, i) => {
                let i = self.eval(i)?;
                self.cells[self.element(*id, i)?]
            }
            TExprKind::Unary(UnOp::Not, a) => (self.eval(a)? == 0) as i64,
            TExprKind::Unary(UnOp::Neg, a) => self.eval(a)?.checked_neg().ok_or(Trap::Overflow)?,
            TExprKind::Binary(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                binary(*op, x, y)?
            }
        })
    }
}

/// Shared arithmetic contract: 64-bit checked, truncating division.
pub fn binary(op: BinOp, x: i64, y: i64) -> Result<i64, Trap> {
    Ok(match op {
        BinOp::Or => ((x != 0) || (y != 0)) as i64,
        BinOp::Xor => ((x != 0) != (y != 0)) as i64,
        BinOp::And => ((x != 0) && (y != 0)) as i64,
        BinOp::Eq => (x == y) as i64,
        BinOp::Ne => (x != y) as i64,
        BinOp::Lt => (x < y) as i64,
        BinOp::Le => (x <= y) as i64,
        BinOp::Gt => (x > y) as i64,
        BinOp::Ge => (x >= y) as i64,
        BinOp::Add => x.checked_add(y).ok_or(Trap::Overflow)?,
        BinOp::Sub => x.checked_sub(y).ok_or(Trap::Overflow)?,
        BinOp::Mul => x.checked_mul(y).ok_or(Trap::Overflow)?,
        BinOp::Div | BinOp::Mod if y == 0 => return Err(Trap::DivByZero),
        BinOp::Div => x.checked_div(y).ok_or(Trap::Overflow)?,
        BinOp::Mod => x.checked_rem(y).ok_or(Trap::Overflow)?,
    })
}

/// Variables of `kind`, in declaration order.
pub fn vars_of(model: &TypedModel, kind: VarKind) -> impl Iterator<Item = VarId> + '_ {
    model
        .vars
        .iter()
        .enumerate()
        .filter(move |(_, v)| v.kind == kind)
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{complexity_check, parse, typecheck};

    fn model(src: &str) -> TypedModel {
        typecheck(&parse(src).unwrap()).unwrap()
    }

    #[test]
    fn copy_and_reset() {
        let m = model("MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL, p:INT(3..7) OPERATION user_logic BEGIN IF i THEN o := i; p := 5 END END");
        let mut it = Interpreter::new(&m);
        assert_eq!(it.cycle(&[1]).unwrap(), 5);
        assert_eq!(it.outputs(), vec![1, 5]);
        it.cycle(&[0]).unwrap();
        assert_eq!(it.outputs(), vec![0, 3]);
    }

    #[test]
    fn truncating_division() {
        assert_eq!(binary(BinOp::Div, -7, 2), Ok(-3));
        assert_eq!(binary(BinOp::Mod, -7, 2), Ok(-1));
        assert_eq!(binary(BinOp::Div, 7, -2), Ok(-3));
        assert_eq!(binary(BinOp::Div, 1, 0), Err(Trap::DivByZero));
        assert_eq!(binary(BinOp::Div, i64::MIN, -1), Err(Trap::Overflow));
        assert_eq!(binary(BinOp::Mul, i64::MAX, 2), Err(Trap::Overflow));
    }

    #[test]
    fn range_trap() {
        let m = model("MACHINE M STATE c:INT(0..3) OPERATION user_logic BEGIN c := c + 1 END");
        let mut it = Interpreter::new(&m);
        for _ in 0..3 {
            it.cycle(&[]).unwrap();
        }
        assert_eq!(
            it.cycle(&[]),
            Err(Trap::RangeViolation {
                var: "c".into(),
                value: 4
            })
        );
    }

    #[test]
    fn index_trap() {
        let m = model("MACHINE M INPUTS j:INT(0..9) STATE a:ARRAY 4 OF BOOL OPERATION user_logic BEGIN a(j) := TRUE END");
        let mut it = Interpreter::new(&m);
        it.cycle(&[3]).unwrap();
        assert!(matches!(it.cycle(&[4]), Err(Trap::IndexOutOfBounds { index: 4, .. })));
    }

    #[test]
    fn loop_counts_match_bound() {
        let m = model("MACHINE M STATE s:INT(0..1000) OPERATION user_logic BEGIN FOR k FROM 0 TO 9 DO s := s + 1 END END");
        let mut it = Interpreter::new(&m);
        assert_eq!(it.cycle(&[]).unwrap(), complexity_check(&m).max_ops);
        assert_eq!(it.state(), vec![10]);
    }

    #[test]
    fn input_validation() {
        let m = model("MACHINE M INPUTS a:BOOL, n:INT(0..3) OPERATION user_logic BEGIN END");
        assert!(validate_inputs(&m, &[1, 3]).is_ok());
        assert!(matches!(validate_inputs(&m, &[1]), Err(InputError::Length { .. })));
        assert!(matches!(validate_inputs(&m, &[2, 0]), Err(InputError::Range { .. })));
    }
}
