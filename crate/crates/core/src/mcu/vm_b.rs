//! VM-B execution engine: fetches a big-endian word per step.

use super::{Faults, RunStats, VmTrap};
use crate::codegen_b::isa::{InstrB, OpB};

pub struct MemB<'a> {
    /// Code bytes as loaded into CODE_B (four per instruction).
    pub code: &'a [u8],
    pub data: &'a mut [u8],
    pub data_base: u16,
}

impl MemB<'_> {
    #[inline]
    fn offset(&self, addr: u64, width: u64) -> Result<usize, VmTrap> {
        let base = self.data_base as u64;
        if addr < base || addr - base + width > self.data.len() as u64 {
            return Err(VmTrap::MemoryFault { addr: addr as u32 });
        }
        Ok((addr - base) as usize)
    }

    #[inline]
    fn load(&self, addr: u64, width: u64) -> Result<i64, VmTrap> {
        let at = self.offset(addr, width)?;
        Ok(match width {
            1 => self.data[at] as i64,
            4 => i32::from_be_bytes(self.data[at..at + 4].try_into().unwrap()) as i64,
            _ => i64::from_be_bytes(self.data[at..at + 8].try_into().unwrap()),
        })
    }

    #[inline]
    fn store(&mut self, addr: u64, width: u64, v: i64) -> Result<(), VmTrap> {
        let at = self.offset(addr, width)?;
        match width {
            1 => self.data[at] = v as u8,
            4 => self.data[at..at + 4].copy_from_slice(&(v as i32).to_be_bytes()),
            _ => self.data[at..at + 8].copy_from_slice(&v.to_be_bytes()),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuB {
    /// Word index from the code base.
    pub pc: u32,
    pub regs: [i64; 16],
}

impl CpuB {
    pub fn new() -> Self {
        CpuB {
            pc: 0,
            regs: [0; 16],
        }
    }

    #[inline]
    fn get(&self, r: u8) -> i64 {
        self.regs[r as usize]
    }

    #[inline]
    fn set(&mut self, r: u8, v: i64) {
        if r != 0 {
            self.regs[r as usize] = v;
        }
    }

    /// Executes one instruction; returns true on HALT.
    pub fn step(&mut self, mem: &mut MemB, faults: Faults) -> Result<bool, VmTrap> {
        let at = self.pc as usize * 4;
        let raw = mem
            .code
            .get(at..at + 4)
            .ok_or(VmTrap::PcOutOfRange { pc: self.pc })?;
        let word = u32::from_be_bytes(raw.try_into().unwrap());
        let ins = InstrB::decode(word, self.pc as usize)
            .map_err(|_| VmTrap::Decode { pc: self.pc })?;
        let bad = faults.hit(ins.op.index());
        self.pc += 1;
        let flip = |v: i64| if bad { v ^ 1 } else { v };
        let bump = |v: i64| if bad { v.wrapping_add(1) } else { v };
        let (rd, rs, rt) = (ins.rd, ins.rs, ins.rt);
        let addr = ins.imm as u64;
        use OpB::*;
        match ins.op {
            Li => self.set(rd, flip(ins.simm())),
            Addi => {
                let v = self.get(rs).checked_add(ins.simm()).ok_or(VmTrap::Overflow)?;
                self.set(rd, bump(v))
            }
            Xori => self.set(rd, flip(self.get(rs) ^ ins.imm as i64)),
            Ld => self.set(rd, flip(mem.load(addr, 8)?)),
            Lb => self.set(rd, flip(mem.load(addr, 1)?)),
            Lw => self.set(rd, flip(mem.load(addr, 4)?)),
            Sd => mem.store(addr, 8, flip(self.get(rd)))?,
            Sb => mem.store(addr, 1, flip(self.get(rd)))?,
            Sw => mem.store(addr, 4, flip(self.get(rd)))?,
            Lbx | Lwx => {
                let w = if ins.op == Lbx { 1 } else { 4 };
                let a = (addr as i64).wrapping_add(self.get(rs).wrapping_mul(w as i64));
                let v = mem.load(a as u64, w)?;
                self.set(rd, flip(v))
            }
            Sbx | Swx => {
                let w = if ins.op == Sbx { 1 } else { 4 };
                let a = (addr as i64).wrapping_add(self.get(rs).wrapping_mul(w as i64));
                mem.store(a as u64, w, flip(self.get(rd)))?
            }
            Add | Sub | Mul | Div | Rem => {
                let (x, y) = (self.get(rs), self.get(rt));
                let v = match ins.op {
                    Add => x.checked_add(y),
                    Sub => x.checked_sub(y),
                    Mul => x.checked_mul(y),
                    // Without a preceding TRAPZ a zero divisor yields 0.
                    Div if y == 0 => Some(0),
                    Rem if y == 0 => Some(0),
                    Div => x.checked_div(y),
                    _ => x.checked_rem(y),
                }
                .ok_or(VmTrap::Overflow)?;
                self.set(rd, bump(v))
            }
            Seq | Sne | Slt | Sle | And | Or | Xor => {
                let (x, y) = (self.get(rs), self.get(rt));
                let v = match ins.op {
                    Seq => (x == y) as i64,
                    Sne => (x != y) as i64,
                    Slt => (x < y) as i64,
                    Sle => (x <= y) as i64,
                    And => x & y,
                    Or => x | y,
                    _ => x ^ y,
                };
                self.set(rd, flip(v))
            }
            Trapz => {
                if (self.get(rs) == 0) != bad {
                    return Err(VmTrap::DivByZero);
                }
            }
            Chk => {
                let v = self.get(rs);
                let lo = mem.load(addr, 4)?;
                let hi = mem.load(addr + 4, 4)?;
                if (v >= lo && v <= hi) == bad {
                    return Err(VmTrap::Range { value: v });
                }
            }
            Bchk => {
                let v = self.get(rs);
                if (v >= 0 && v <= ins.imm as i64) == bad {
                    return Err(VmTrap::Bounds { index: v });
                }
            }
            Beqz => {
                if (self.get(rs) == 0) != bad {
                    self.pc = ins.imm
                }
            }
            Bnez => {
                if (self.get(rs) != 0) != bad {
                    self.pc = ins.imm
                }
            }
            J => {
                if !bad {
                    self.pc = ins.imm
                }
            }
            Halt => return Ok(!bad),
            Fillb | Fillw => {
                let w = if ins.op == Fillb { 1 } else { 4 };
                let count = self.get(rs);
                if !(0..=u16::MAX as i64 + 1).contains(&count) {
                    return Err(VmTrap::MemoryFault { addr: addr as u32 });
                }
                let v = flip(self.get(rd));
                for i in 0..count as u64 {
                    mem.store(addr + w * i, w, v)?;
                }
            }
        }
        Ok(false)
    }
}

impl Default for CpuB {
    fn default() -> Self {
        Self::new()
    }
}

pub fn run(mem: &mut MemB, budget: u64, faults: Faults) -> Result<RunStats, VmTrap> {
    let mut cpu = CpuB::new();
    let mut steps = 0u64;
    loop {
        if steps >= budget {
            return Err(VmTrap::Budget { steps });
        }
        steps += 1;
        if cpu.step(mem, faults)? {
            return Ok(RunStats {
                steps,
                high_water: 0,
            });
        }
    }
}
