//! VM-A execution engine. Instructions are decoded from the code bytes at
//! every step, so a flipped code bit takes effect on the next fetch.

use super::{Faults, RunStats, VmTrap};
use crate::codegen_a::isa::{decode_at, InstrA, OpA};
use crate::codegen_a::STACK_CAPACITY;

pub struct MemA<'a> {
    pub code: &'a [u8],
    pub code_base: u16,
    pub data: &'a mut [u8],
    pub data_base: u16,
    pub inputs: &'a [i64],
}

impl MemA<'_> {
    #[inline]
    fn offset(&self, addr: u32, width: u32) -> Result<usize, VmTrap> {
        let off = addr.wrapping_sub(self.data_base as u32);
        if addr < self.data_base as u32 || off as u64 + width as u64 > self.data.len() as u64 {
            return Err(VmTrap::MemoryFault { addr });
        }
        Ok(off as usize)
    }

    #[inline]
    fn load(&self, addr: u32, width: u32) -> Result<i64, VmTrap> {
        let at = self.offset(addr, width)?;
        Ok(match width {
            1 => self.data[at] as i64,
            _ => i32::from_le_bytes(self.data[at..at + 4].try_into().unwrap()) as i64,
        })
    }

    #[inline]
    fn store(&mut self, addr: u32, width: u32, v: i64) -> Result<(), VmTrap> {
        let at = self.offset(addr, width)?;
        match width {
            1 => self.data[at] = v as u8,
            _ => self.data[at..at + 4].copy_from_slice(&(v as i32).to_le_bytes()),
        }
        Ok(())
    }

    #[inline]
    fn input(&self, port: u32) -> Result<i64, VmTrap> {
        self.inputs
            .get(port as usize)
            .copied()
            .ok_or(VmTrap::InputPort { port })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuA {
    pub pc: u16,
    pub stack: Vec<i64>,
    pub high_water: u32,
}

impl CpuA {
    pub fn new(entry: u16) -> Self {
        CpuA {
            pc: entry,
            stack: Vec::with_capacity(STACK_CAPACITY as usize),
            high_water: 0,
        }
    }

    #[inline]
    fn push(&mut self, v: i64) -> Result<(), VmTrap> {
        if self.stack.len() >= STACK_CAPACITY as usize {
            return Err(VmTrap::StackOverflow);
        }
        self.stack.push(v);
        self.high_water = self.high_water.max(self.stack.len() as u32);
        Ok(())
    }

    #[inline]
    fn pop(&mut self) -> Result<i64, VmTrap> {
        self.stack.pop().ok_or(VmTrap::StackUnderflow)
    }

    /// Executes one instruction; returns true on HALT.
    pub fn step(&mut self, mem: &mut MemA, faults: Faults) -> Result<bool, VmTrap> {
        let at = (self.pc as usize)
            .checked_sub(mem.code_base as usize)
            .filter(|&a| a < mem.code.len())
            .ok_or(VmTrap::PcOutOfRange { pc: self.pc as u32 })?;
        let ins = decode_at(mem.code, at).map_err(|_| VmTrap::Decode { pc: self.pc as u32 })?;
        let op = ins.op();
        let bad = faults.hit(op.index());
        let next = self.pc.wrapping_add(ins.len() as u16);
        self.pc = next;
        // Corrupted semantics: loaded or stored values and logic results
        // get bit 0 flipped, arithmetic results are off by one.
        let flip = |v: i64| if bad { v ^ 1 } else { v };
        let bump = |v: i64| if bad { v.wrapping_add(1) } else { v };
        let bounds = |i: i64, max: u16| {
            if i < 0 || i > max as i64 {
                Err(VmTrap::Bounds { index: i })
            } else {
                Ok(i as u32)
            }
        };
        match ins {
            InstrA::Push(v) => self.push(flip(v as i64))?,
            InstrA::Ldb(a) => self.push(flip(mem.load(a as u32, 1)?))?,
            InstrA::Ldw(a) => self.push(flip(mem.load(a as u32, 4)?))?,
            InstrA::Stb(a) => {
                let v = self.pop()?;
                mem.store(a as u32, 1, flip(v))?
            }
            InstrA::Stw(a) => {
                let v = self.pop()?;
                mem.store(a as u32, 4, flip(v))?
            }
            InstrA::Ldbx { addr, max } | InstrA::Ldwx { addr, max } => {
                let w = if op == OpA::Ldbx { 1 } else { 4 };
                let i = bounds(self.pop()?, max)?;
                self.push(flip(mem.load(addr as u32 + w * i, w)?))?
            }
            InstrA::Stbx { addr, max } | InstrA::Stwx { addr, max } => {
                let w = if op == OpA::Stbx { 1 } else { 4 };
                let v = self.pop()?;
                let i = bounds(self.pop()?, max)?;
                mem.store(addr as u32 + w * i, w, flip(v))?
            }
            InstrA::In(p) => self.push(flip(mem.input(p as u32)?))?,
            InstrA::Inx { port, max } => {
                let i = bounds(self.pop()?, max)?;
                self.push(flip(mem.input(port as u32 + i)?))?
            }
            InstrA::Alu(OpA::Neg) => {
                let x = self.pop()?;
                self.push(bump(x.checked_neg().ok_or(VmTrap::Overflow)?))?
            }
            InstrA::Alu(OpA::Not) => {
                let x = self.pop()?;
                self.push(flip((x == 0) as i64))?
            }
            InstrA::Alu(op) => {
                let y = self.pop()?;
                let x = self.pop()?;
                let r = match op {
                    OpA::Add => bump(x.checked_add(y).ok_or(VmTrap::Overflow)?),
                    OpA::Sub => bump(x.checked_sub(y).ok_or(VmTrap::Overflow)?),
                    OpA::Mul => bump(x.checked_mul(y).ok_or(VmTrap::Overflow)?),
                    OpA::Div | OpA::Mod if y == 0 => return Err(VmTrap::DivByZero),
                    OpA::Div => bump(x.checked_div(y).ok_or(VmTrap::Overflow)?),
                    OpA::Mod => bump(x.checked_rem(y).ok_or(VmTrap::Overflow)?),
                    OpA::Eq => flip((x == y) as i64),
                    OpA::Ne => flip((x != y) as i64),
                    OpA::Lt => flip((x < y) as i64),
                    OpA::Le => flip((x <= y) as i64),
                    OpA::Gt => flip((x > y) as i64),
                    OpA::Ge => flip((x >= y) as i64),
                    OpA::And => flip((x != 0 && y != 0) as i64),
                    OpA::Or => flip((x != 0 || y != 0) as i64),
                    OpA::Xor => flip(((x != 0) != (y != 0)) as i64),
                    _ => unreachable!("operand-free opcodes only"),
                };
                self.push(r)?
            }
            InstrA::RangeChk { lo, hi } => {
                let v = *self.stack.last().ok_or(VmTrap::StackUnderflow)?;
                let inside = v >= lo as i64 && v <= hi as i64;
                if inside == bad {
                    return Err(VmTrap::Range { value: v });
                }
            }
            InstrA::Jmp(t) => {
                if !bad {
                    self.pc = t
                }
            }
            InstrA::Jz(t) => {
                if (self.pop()? == 0) != bad {
                    self.pc = t
                }
            }
            InstrA::Loop { addr, hi, target } => {
                let w = mem.load(addr as u32, 4)? + if bad { 2 } else { 1 };
                if w <= hi as i64 {
                    mem.store(addr as u32, 4, w)?;
                    self.pc = target;
                }
            }
            InstrA::Fillb { addr, count, value } | InstrA::Fillw { addr, count, value } => {
                let w = if op == OpA::Fillb { 1 } else { 4 };
                for i in 0..count as u32 {
                    mem.store(addr as u32 + w * i, w, flip(value as i64))?;
                }
            }
            InstrA::Halt => return Ok(!bad),
        }
        Ok(false)
    }
}

/// Runs from the entry point to HALT under a step budget.
pub fn run(
    mem: &mut MemA,
    entry: u16,
    budget: u64,
    faults: Faults,
) -> Result<RunStats, VmTrap> {
    let mut cpu = CpuA::new(entry);
    let mut steps = 0u64;
    loop {
        if steps >= budget {
            return Err(VmTrap::Budget { steps });
        }
        steps += 1;
        if cpu.step(mem, faults)? {
            return Ok(RunStats {
                steps,
                high_water: cpu.high_water,
            });
        }
    }
}
