//! IR to VM-A bytecode.

use serde::{Deserialize, Serialize};

use super::ir::{Ir, IrProgram, Temp};
use super::isa::{InstrA, OpA};
use crate::frontend::ast::{BinOp, UnOp};
use crate::image::{initial_data, CodegenError, DataLayout};
use crate::mcu::map::{MemoryMap, RegionId};

pub const STACK_CAPACITY: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageA {
    #[serde(skip)]
    pub code: Vec<u8>,
    pub code_base: u16,
    pub entry: u16,
    pub stack_depth: u32,
    pub layout: DataLayout,
    #[serde(with = "hex::serde")]
    pub data_init: Vec<u8>,
    pub input_cells: u32,
}

fn alu(op: BinOp) -> OpA {
    match op {
        BinOp::Add => OpA::Add,
        BinOp::Sub => OpA::Sub,
        BinOp::Mul => OpA::Mul,
        BinOp::Div => OpA::Div,
        BinOp::Mod => OpA::Mod,
        BinOp::Eq => OpA::Eq,
        BinOp::Ne => OpA::Ne,
        BinOp::Lt => OpA::Lt,
        BinOp::Le => OpA::Le,
        BinOp::Gt => OpA::Gt,
        BinOp::Ge => OpA::Ge,
        BinOp::And => OpA::And,
        BinOp::Or => OpA::Or,
        BinOp::Xor => OpA::Xor,
    }
}

fn imm(v: i64) -> Result<i32, CodegenError> {
    i32::try_from(v).map_err(|_| CodegenError::Constant(v))
}

/// Simulated operand stack used to check the IR's LIFO discipline.
struct Stack {
    temps: Vec<Temp>,
    high: u32,
}

impl Stack {
    fn push(&mut self, t: Temp) {
        self.temps.push(t);
        self.high = self.high.max(self.temps.len() as u32);
    }

    fn pop(&mut self, want: Temp) -> Result<(), CodegenError> {
        match self.temps.pop() {
            Some(t) if t == want => Ok(()),
            other => Err(CodegenError::Internal(format!(
                "temporary t{want} used out of stack order (top {other:?})"
            ))),
        }
    }

    fn top(&self, want: Temp) -> Result<(), CodegenError> {
        match self.temps.last() {
            Some(&t) if t == want => Ok(()),
            other => Err(CodegenError::Internal(format!(
                "temporary t{want} is not on top (top {other:?})"
            ))),
        }
    }
}

pub fn emit_a(ir: &IrProgram, map: &MemoryMap) -> Result<ImageA, CodegenError> {
    map.validate()?;
    let base = map.code_a.base;
    let slot = |sym: usize| &ir.layout.vars[sym];
    let max_of = |sym: usize| (slot(sym).cells - 1) as u16;

    // Instruction selection with symbolic jump targets (label ids).
    let mut stack = Stack {
        temps: Vec::new(),
        high: 0,
    };
    let mut prog: Vec<(InstrA, Option<u32>)> = Vec::new();
    let mut labels = vec![None; ir.labels as usize];
    let mut offset = 0usize;
    for ins in &ir.code {
        let mut target = None;
        let sel = match *ins {
            Ir::Const { dst, value } => {
                stack.push(dst);
                InstrA::Push(imm(value)?)
            }
            Ir::Load { dst, sym } => {
                stack.push(dst);
                match slot(sym).width {
                    1 => InstrA::Ldb(slot(sym).addr),
                    _ => InstrA::Ldw(slot(sym).addr),
                }
            }
            Ir::LoadIndexed { dst, sym, index } => {
                stack.pop(index)?;
                stack.push(dst);
                let (addr, max) = (slot(sym).addr, max_of(sym));
                match slot(sym).width {
                    1 => InstrA::Ldbx { addr, max },
                    _ => InstrA::Ldwx { addr, max },
                }
            }
            Ir::Input { dst, port } => {
                stack.push(dst);
                InstrA::In(port)
            }
            Ir::InputIndexed {
                dst,
                port,
                max,
                index,
            } => {
                stack.pop(index)?;
                stack.push(dst);
                InstrA::Inx { port, max }
            }
            Ir::Store { sym, src } => {
                stack.pop(src)?;
                match slot(sym).width {
                    1 => InstrA::Stb(slot(sym).addr),
                    _ => InstrA::Stw(slot(sym).addr),
                }
            }
            Ir::StoreIndexed { sym, index, src } => {
                stack.pop(src)?;
                stack.pop(index)?;
                let (addr, max) = (slot(sym).addr, max_of(sym));
                match slot(sym).width {
                    1 => InstrA::Stbx { addr, max },
                    _ => InstrA::Stwx { addr, max },
                }
            }
            Ir::Unary { dst, op, src } => {
                stack.pop(src)?;
                stack.push(dst);
                InstrA::Alu(match op {
                    UnOp::Not => OpA::Not,
                    UnOp::Neg => OpA::Neg,
                })
            }
            Ir::Binary { dst, op, lhs, rhs } => {
                stack.pop(rhs)?;
                stack.pop(lhs)?;
                stack.push(dst);
                InstrA::Alu(alu(op))
            }
            Ir::RangeCheck { src, lo, hi } => {
                stack.top(src)?;
                InstrA::RangeChk {
                    lo: imm(lo)?,
                    hi: imm(hi)?,
                }
            }
            Ir::Reset { sym, value } => {
                let s = slot(sym);
                let (addr, count, value) = (s.addr, s.cells as u16, imm(value)?);
                match s.width {
                    1 => InstrA::Fillb { addr, count, value },
                    _ => InstrA::Fillw { addr, count, value },
                }
            }
            Ir::Label(l) => {
                if !stack.temps.is_empty() {
                    return Err(CodegenError::Internal(format!(
                        "label L{l} reached with a non-empty stack"
                    )));
                }
                labels[l as usize] = Some(offset);
                continue;
            }
            Ir::Jump(l) => {
                target = Some(l);
                InstrA::Jmp(0)
            }
            Ir::JumpIfZero { cond, target: l } => {
                stack.pop(cond)?;
                target = Some(l);
                InstrA::Jz(0)
            }
            Ir::LoopNext { sym, hi, target: l } => {
                target = Some(l);
                InstrA::Loop {
                    addr: slot(sym).addr,
                    hi: imm(hi)?,
                    target: 0,
                }
            }
            Ir::Return => InstrA::Halt,
        };
        offset += sel.len();
        prog.push((sel, target));
    }
    if stack.high > STACK_CAPACITY {
        return Err(CodegenError::StackDepth {
            needed: stack.high,
            capacity: STACK_CAPACITY,
        });
    }
    if offset as u64 > map.code_a.size as u64 {
        return Err(CodegenError::RegionOverflow {
            region: RegionId::CodeA,
            needed: offset as u64,
            size: map.code_a.size,
        });
    }

    let mut code = Vec::with_capacity(offset);
    for (mut ins, target) in prog {
        if let Some(l) = target {
            let at = labels[l as usize]
                .ok_or_else(|| CodegenError::Internal(format!("undefined label L{l}")))?;
            let abs = (base as usize + at) as u16;
            match &mut ins {
                InstrA::Jmp(t) | InstrA::Jz(t) => *t = abs,
                InstrA::Loop { target, .. } => *target = abs,
                _ => unreachable!(),
            }
        }
        ins.encode(&mut code);
    }
    Ok(ImageA {
        code,
        code_base: base,
        entry: base,
        stack_depth: stack.high,
        data_init: initial_data(&ir.layout),
        layout: ir.layout.clone(),
        input_cells: ir.input_cells,
    })
}
