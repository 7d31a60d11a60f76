//! Linear three-address IR, the first half of the I1 chain.
//!
//! Temporaries are single-assignment and each is consumed exactly once,
//! in last-defined-first-used order; `emit_a` relies on that to map them
//! onto the operand stack.

use std::fmt;

use crate::frontend::ast::{BinOp, ScalarType, UnOp};
use crate::frontend::cost::trip_count;
use crate::frontend::typeck::{TExpr, TExprKind, TStmt, TypedModel, VarKind};
use crate::image::{CodegenError, DataLayout, Endian, LayoutBuilder};
use crate::mcu::map::{MemoryMap, RegionId};

pub type Temp = u32;
pub type Label = u32;
/// Index into the program's data layout.
pub type Sym = usize;

/// Loops with at most this many iterations are unrolled.
pub const UNROLL_LIMIT: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ir {
    Const { dst: Temp, value: i64 },
    Load { dst: Temp, sym: Sym },
    LoadIndexed { dst: Temp, sym: Sym, index: Temp },
    Input { dst: Temp, port: u16 },
    InputIndexed { dst: Temp, port: u16, max: u16, index: Temp },
    Store { sym: Sym, src: Temp },
    StoreIndexed { sym: Sym, index: Temp, src: Temp },
    Unary { dst: Temp, op: UnOp, src: Temp },
    Binary { dst: Temp, op: BinOp, lhs: Temp, rhs: Temp },
    /// Traps unless `lo <= src <= hi`; does not consume `src`.
    RangeCheck { src: Temp, lo: i64, hi: i64 },
    /// Sets every cell of `sym` to `value` (output reset prologue).
    Reset { sym: Sym, value: i64 },
    Label(Label),
    Jump(Label),
    JumpIfZero { cond: Temp, target: Label },
    /// `sym := sym + 1`, then back to `target` while `sym <= hi`.
    LoopNext { sym: Sym, hi: i64, target: Label },
    Return,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrProgram {
    pub code: Vec<Ir>,
    /// Symbol table: every non-input variable with its DATA_A address.
    pub layout: DataLayout,
    pub input_cells: u32,
    pub labels: u32,
}

pub fn lower(model: &TypedModel, map: &MemoryMap) -> Result<IrProgram, CodegenError> {
    map.validate()?;
    let mut lb = LayoutBuilder::new(map.data_a, RegionId::DataA, Endian::Little);
    let mut sym = vec![usize::MAX; model.vars.len()];
    for kind in [VarKind::Output, VarKind::State, VarKind::Loop] {
        for (id, v) in model.vars.iter().enumerate() {
            if v.kind == kind {
                sym[id] = lb.var(v)?;
            }
        }
    }
    let mut port = vec![0u32; model.vars.len()];
    let mut next_port = 0u32;
    for &id in &model.inputs {
        port[id] = next_port;
        next_port += model.var(id).ty.cells();
    }
    if next_port > u16::MAX as u32 + 1 {
        return Err(CodegenError::ArrayTooLong("inputs".into()));
    }
    let mut cx = Lower {
        model,
        sym,
        port,
        code: Vec::new(),
        temps: 0,
        labels: 0,
    };
    for &id in &model.outputs {
        cx.code.push(Ir::Reset {
            sym: cx.sym[id],
            value: model.var(id).init,
        });
    }
    cx.stmts(&model.body)?;
    cx.code.push(Ir::Return);
    Ok(IrProgram {
        code: cx.code,
        layout: lb.finish(),
        input_cells: next_port,
        labels: cx.labels,
    })
}

struct Lower<'m> {
    model: &'m TypedModel,
    sym: Vec<Sym>,
    port: Vec<u32>,
    code: Vec<Ir>,
    temps: u32,
    labels: u32,
}

fn max_index(model: &TypedModel, id: usize) -> Result<u16, CodegenError> {
    let v = model.var(id);
    u16::try_from(v.ty.cells() - 1).map_err(|_| CodegenError::ArrayTooLong(v.name.clone()))
}

impl Lower<'_> {
    fn temp(&mut self) -> Temp {
        self.temps += 1;
        self.temps - 1
    }

    fn label(&mut self) -> Label {
        self.labels += 1;
        self.labels - 1
    }

    fn expr(&mut self, e: &TExpr) -> Result<Temp, CodegenError> {
        let ins = match &e.kind {
            TExprKind::Const(v) => Ir::Const {
                dst: self.temp(),
                value: *v,
            },
            TExprKind::Load(id) if self.model.var(*id).kind == VarKind::Input => Ir::Input {
                dst: self.temp(),
                port: self.port[*id] as u16,
            },
            TExprKind::Load(id) => Ir::Load {
                dst: self.temp(),
                sym: self.sym[*id],
            },
            TExprKind::LoadIndex(id, i) => {
                let index = self.expr(i)?;
                if self.model.var(*id).kind == VarKind::Input {
                    Ir::InputIndexed {
                        dst: self.temp(),
                        port: self.port[*id] as u16,
                        max: max_index(self.model, *id)?,
                        index,
                    }
                } else {
                    max_index(self.model, *id)?;
                    Ir::LoadIndexed {
                        dst: self.temp(),
                        sym: self.sym[*id],
                        index,
                    }
                }
            }
            TExprKind::Unary(op, a) => {
                let src = self.expr(a)?;
                Ir::Unary {
                    dst: self.temp(),
                    op: *op,
                    src,
                }
            }
            TExprKind::Binary(op, a, b) => {
                let lhs = self.expr(a)?;
                let rhs = self.expr(b)?;
                Ir::Binary {
                    dst: self.temp(),
                    op: *op,
                    lhs,
                    rhs,
                }
            }
        };
        let dst = match ins {
            Ir::Const { dst, .. }
            | Ir::Load { dst, .. }
            | Ir::LoadIndexed { dst, .. }
            | Ir::Input { dst, .. }
            | Ir::InputIndexed { dst, .. }
            | Ir::Unary { dst, .. }
            | Ir::Binary { dst, .. } => dst,
            _ => unreachable!(),
        };
        self.code.push(ins);
        Ok(dst)
    }

    fn stmts(&mut self, body: &[TStmt]) -> Result<(), CodegenError> {
        body.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &TStmt) -> Result<(), CodegenError> {
        match s {
            TStmt::Assign {
                var, index, value, ..
            } => {
                let index = index.as_ref().map(|i| self.expr(i)).transpose()?;
                let src = self.expr(value)?;
                if let ScalarType::Int { lo, hi } = self.model.var(*var).ty.elem() {
                    self.code.push(Ir::RangeCheck { src, lo, hi });
                }
                let sym = self.sym[*var];
                self.code.push(match index {
                    Some(index) => {
                        max_index(self.model, *var)?;
                        Ir::StoreIndexed { sym, index, src }
                    }
                    None => Ir::Store { sym, src },
                });
            }
            TStmt::If {
                arms, otherwise, ..
            } => {
                let end = self.label();
                for (i, (cond, body)) in arms.iter().enumerate() {
                    let last = i + 1 == arms.len() && otherwise.is_empty();
                    let cond = self.expr(cond)?;
                    let next = if last { end } else { self.label() };
                    self.code.push(Ir::JumpIfZero { cond, target: next });
                    self.stmts(body)?;
                    if !last {
                        self.code.push(Ir::Jump(end));
                        self.code.push(Ir::Label(next));
                    }
                }
                self.stmts(otherwise)?;
                self.code.push(Ir::Label(end));
            }
            TStmt::For {
                var, lo, hi, body, ..
            } => {
                let sym = self.sym[*var];
                let trips = trip_count(*lo, *hi);
                if trips == 0 {
                    return Ok(());
                }
                if trips <= UNROLL_LIMIT {
                    for k in *lo..=*hi {
                        let t = self.temp();
                        self.code.push(Ir::Const { dst: t, value: k });
                        self.code.push(Ir::Store { sym, src: t });
                        self.stmts(body)?;
                    }
                } else {
                    let t = self.temp();
                    self.code.push(Ir::Const { dst: t, value: *lo });
                    self.code.push(Ir::Store { sym, src: t });
                    let top = self.label();
                    self.code.push(Ir::Label(top));
                    self.stmts(body)?;
                    self.code.push(Ir::LoopNext {
                        sym,
                        hi: *hi,
                        target: top,
                    });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Ir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ir::Const { dst, value } => write!(f, "t{dst} = {value}"),
            Ir::Load { dst, sym } => write!(f, "t{dst} = load @{sym}"),
            Ir::LoadIndexed { dst, sym, index } => write!(f, "t{dst} = load @{sym}[t{index}]"),
            Ir::Input { dst, port } => write!(f, "t{dst} = in {port}"),
            Ir::InputIndexed {
                dst, port, index, ..
            } => write!(f, "t{dst} = in {port}[t{index}]"),
            Ir::Store { sym, src } => write!(f, "store @{sym} = t{src}"),
            Ir::StoreIndexed { sym, index, src } => write!(f, "store @{sym}[t{index}] = t{src}"),
            Ir::Unary { dst, op, src } => {
                let sym = if *op == UnOp::Not { "NOT " } else { "-" };
                write!(f, "t{dst} = {sym}t{src}")
            }
            Ir::Binary { dst, op, lhs, rhs } => {
                write!(f, "t{dst} = t{lhs} {} t{rhs}", op.symbol())
            }
            Ir::RangeCheck { src, lo, hi } => write!(f, "check t{src} in {lo}..{hi}"),
            Ir::Reset { sym, value } => write!(f, "reset @{sym} = {value}"),
            Ir::Label(l) => write!(f, "L{l}:"),
            Ir::Jump(l) => write!(f, "goto L{l}"),
            Ir::JumpIfZero { cond, target } => write!(f, "ifnot t{cond} goto L{target}"),
            Ir::LoopNext { sym, hi, target } => write!(f, "loop @{sym} <= {hi} goto L{target}"),
            Ir::Return => write!(f, "return"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile;

    fn ir(src: &str) -> IrProgram {
        lower(&compile(src).unwrap(), &MemoryMap::default()).unwrap()
    }

    #[test]
    fn copy_has_reset_prologue() {
        let p = ir("MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END");
        assert_eq!(
            p.code,
            vec![
                Ir::Reset { sym: 0, value: 0 },
                Ir::Input { dst: 0, port: 0 },
                Ir::Store { sym: 0, src: 0 },
                Ir::Return
            ]
        );
    }

    #[test]
    fn ranged_add_is_checked() {
        let p = ir("MACHINE C STATE c:INT(0..3) OPERATION user_logic BEGIN c := c + 1 END");
        assert_eq!(
            &p.code[..4],
            &[
                Ir::Load { dst: 0, sym: 0 },
                Ir::Const { dst: 1, value: 1 },
                Ir::Binary {
                    dst: 2,
                    op: BinOp::Add,
                    lhs: 0,
                    rhs: 1
                },
                Ir::RangeCheck {
                    src: 2,
                    lo: 0,
                    hi: 3
                },
            ]
        );
    }

    #[test]
    fn empty_body_is_prologue_only() {
        let p = ir("MACHINE E OUTPUTS a:BOOL, b:INT(2..5) OPERATION user_logic BEGIN END");
        assert_eq!(
            p.code,
            vec![
                Ir::Reset { sym: 0, value: 0 },
                Ir::Reset { sym: 1, value: 2 },
                Ir::Return
            ]
        );
    }

    #[test]
    fn loops_unroll_up_to_the_limit() {
        let short = ir("MACHINE L STATE s:INT(0..100) OPERATION user_logic BEGIN FOR k FROM 1 TO 8 DO s := k END END");
        assert!(!short.code.iter().any(|i| matches!(i, Ir::LoopNext { .. })));
        assert_eq!(
            short.code.iter().filter(|i| matches!(i, Ir::Store { sym: 0, .. })).count(),
            8
        );
        let long = ir("MACHINE L STATE s:INT(0..100) OPERATION user_logic BEGIN FOR k FROM 1 TO 9 DO s := k END END");
        assert_eq!(
            long.code.iter().filter(|i| matches!(i, Ir::LoopNext { hi: 9, .. })).count(),
            1
        );
    }

    #[test]
    fn layout_orders_outputs_state_loops() {
        let p = ir("MACHINE L INPUTS i:BOOL OUTPUTS o:BOOL STATE n:INT(0..9) OPERATION user_logic BEGIN FOR k FROM 0 TO 1 DO o := i END END");
        let names: Vec<&str> = p.layout.vars.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["o", "n", "k"]);
        assert_eq!(p.layout.vars[0].addr, 0x8000);
        assert_eq!(p.layout.vars[1].addr, 0x8004);
    }

    #[test]
    fn oversized_data_is_a_region_overflow() {
        let src = "MACHINE B STATE a:ARRAY 5000 OF INT(0..1) OPERATION user_logic BEGIN END";
        assert!(matches!(
            lower(&compile(src).unwrap(), &MemoryMap::default()),
            Err(CodegenError::RegionOverflow {
                region: RegionId::DataA,
                ..
            })
        ));
    }
}
