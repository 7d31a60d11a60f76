//! Instruction oracle. Every opcode of both machines has one frozen vector:
//! a pre-state, exactly one instruction, and the expected post-state. The
//! vectors run in a scratch context that shares nothing with the loaded
//! images, under the same opcode fault mask as user code.

use serde::Serialize;

use super::vm_a::{CpuA, MemA};
use super::vm_b::{CpuB, MemB};
use super::{Faults, Vm};
use crate::codegen_a::isa::{InstrA, OpA};
use crate::codegen_b::isa::{InstrB, OpB};

pub const OPCODES_PER_VM: usize = 34;

const SCRATCH_A: u16 = 0x0100;
const SCRATCH_B: u16 = 0x0200;

/// Little-endian: word0 = 5, word1 = -2, byte 8 = 42.
const MEM_A: [u8; 16] = [
    5, 0, 0, 0, 0xFE, 0xFF, 0xFF, 0xFF, 42, 0, 0, 0, 0, 0, 0, 0,
];
/// Big-endian: word0 = 5, word1 = -2, byte 8 = 42, bounds pair 0..9 at 16.
const MEM_B: [u8; 24] = [
    0, 0, 0, 5, 0xFF, 0xFF, 0xFF, 0xFE, 42, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 9,
];
const INPUTS_A: [i64; 3] = [7, -3, 12];
/// r1 = 7, r2 = 5, r3 = -6, r5 = 1, r7 = 8, r8 = 3.
const REGS_B: [i64; 16] = [0, 7, 5, -6, 0, 1, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SelfTestFail {
    pub vm: Vm,
    pub opcode: &'static str,
}

enum Effect {
    None,
    Stack(&'static [i64]),
    Reg(u8, i64),
    Mem(&'static [(usize, u8)]),
    Pc(u32),
    Halt,
}

struct VecA {
    ins: InstrA,
    stack: &'static [i64],
    expect: Effect,
    /// Stack left after a memory or control effect.
    rest: &'static [i64],
}

struct VecB {
    ins: InstrB,
    expect: Effect,
}

fn va(ins: InstrA, stack: &'static [i64], expect: Effect) -> VecA {
    VecA {
        ins,
        stack,
        expect,
        rest: &[],
    }
}

fn vectors_a() -> Vec<VecA> {
    use Effect::*;
    use InstrA as I;
    let m = SCRATCH_A;
    vec![
        va(I::Push(9), &[], Stack(&[9])),
        va(I::Ldb(m + 8), &[], Stack(&[42])),
        va(I::Ldw(m + 4), &[], Stack(&[-2])),
        va(I::Stb(m + 12), &[0x37], Mem(&[(12, 0x37)])),
        va(I::Stw(m + 12), &[-5], Mem(&[(12, 0xFB), (13, 0xFF), (14, 0xFF), (15, 0xFF)])),
        va(I::Ldbx { addr: m, max: 15 }, &[8], Stack(&[42])),
        va(I::Ldwx { addr: m, max: 3 }, &[1], Stack(&[-2])),
        va(I::Stbx { addr: m, max: 15 }, &[13, 0x66], Mem(&[(13, 0x66)])),
        va(I::Stwx { addr: m, max: 3 }, &[3, 300], Mem(&[(12, 0x2C), (13, 0x01)])),
        va(I::In(1), &[], Stack(&[-3])),
        va(I::Inx { port: 0, max: 2 }, &[2], Stack(&[12])),
        va(I::Alu(OpA::Add), &[7, 5], Stack(&[12])),
        va(I::Alu(OpA::Sub), &[7, 5], Stack(&[2])),
        va(I::Alu(OpA::Mul), &[7, -6], Stack(&[-42])),
        va(I::Alu(OpA::Div), &[-7, 2], Stack(&[-3])),
        va(I::Alu(OpA::Mod), &[-7, 2], Stack(&[-1])),
        va(I::Alu(OpA::Neg), &[9], Stack(&[-9])),
        va(I::Alu(OpA::Eq), &[4, 4], Stack(&[1])),
        va(I::Alu(OpA::Ne), &[4, 4], Stack(&[0])),
        va(I::Alu(OpA::Lt), &[3, 4], Stack(&[1])),
        va(I::Alu(OpA::Le), &[5, 4], Stack(&[0])),
        va(I::Alu(OpA::Gt), &[5, 4], Stack(&[1])),
        va(I::Alu(OpA::Ge), &[3, 4], Stack(&[0])),
        va(I::Alu(OpA::And), &[1, 1], Stack(&[1])),
        va(I::Alu(OpA::Or), &[0, 0], Stack(&[0])),
        va(I::Alu(OpA::Xor), &[1, 0], Stack(&[1])),
        va(I::Alu(OpA::Not), &[0], Stack(&[1])),
        VecA {
            ins: I::RangeChk { lo: 0, hi: 9 },
            stack: &[4],
            expect: None,
            rest: &[4],
        },
        va(I::Jmp(0x40), &[], Pc(0x40)),
        va(I::Jz(0x40), &[0], Pc(0x40)),
        va(
            I::Loop {
                addr: m,
                hi: 9,
                target: 0x40,
            },
            &[],
            Mem(&[(0, 6)]),
        ),
        va(
            I::Fillb {
                addr: m + 12,
                count: 3,
                value: 1,
            },
            &[],
            Mem(&[(12, 1), (13, 1), (14, 1)]),
        ),
        va(
            I::Fillw {
                addr: m + 12,
                count: 1,
                value: 7,
            },
            &[],
            Mem(&[(12, 7)]),
        ),
        va(I::Halt, &[], Halt),
    ]
}

fn vectors_b() -> Vec<VecB> {
    use Effect::*;
    use OpB::*;
    let m = SCRATCH_B;
    let v = |ins, expect| VecB { ins, expect };
    vec![
        v(InstrB::i(Li, 6, 0, (-5i16) as u16), Reg(6, -5)),
        v(InstrB::i(Addi, 6, 1, 3), Reg(6, 10)),
        v(InstrB::i(Xori, 6, 2, 1), Reg(6, 4)),
        v(InstrB::i(Ld, 6, 0, m), Reg(6, 25_769_803_774)),
        v(
            InstrB::i(Sd, 3, 0, m + 8),
            Mem(&[
                (8, 0xFF),
                (9, 0xFF),
                (10, 0xFF),
                (11, 0xFF),
                (12, 0xFF),
                (13, 0xFF),
                (14, 0xFF),
                (15, 0xFA),
            ]),
        ),
        v(InstrB::i(Lb, 6, 0, m + 8), Reg(6, 42)),
        v(InstrB::i(Lw, 6, 0, m + 4), Reg(6, -2)),
        v(InstrB::i(Sb, 1, 0, m + 12), Mem(&[(12, 7)])),
        v(
            InstrB::i(Sw, 3, 0, m + 12),
            Mem(&[(12, 0xFF), (13, 0xFF), (14, 0xFF), (15, 0xFA)]),
        ),
        v(InstrB::i(Lbx, 6, 7, m), Reg(6, 42)),
        v(InstrB::i(Lwx, 6, 5, m), Reg(6, -2)),
        v(InstrB::i(Sbx, 1, 7, m), Mem(&[(8, 7)])),
        v(InstrB::i(Swx, 3, 5, m), Mem(&[(7, 0xFA)])),
        v(InstrB::r(Add, 6, 1, 2), Reg(6, 12)),
        v(InstrB::r(Sub, 6, 1, 2), Reg(6, 2)),
        v(InstrB::r(Mul, 6, 1, 3), Reg(6, -42)),
        v(InstrB::r(Div, 6, 1, 3), Reg(6, -1)),
        v(InstrB::r(Rem, 6, 1, 3), Reg(6, 1)),
        v(InstrB::r(Seq, 6, 1, 1), Reg(6, 1)),
        v(InstrB::r(Sne, 6, 1, 2), Reg(6, 1)),
        v(InstrB::r(Slt, 6, 3, 1), Reg(6, 1)),
        v(InstrB::r(Sle, 6, 1, 2), Reg(6, 0)),
        v(InstrB::r(And, 6, 1, 2), Reg(6, 5)),
        v(InstrB::r(Or, 6, 1, 2), Reg(6, 7)),
        v(InstrB::r(Xor, 6, 1, 2), Reg(6, 2)),
        v(InstrB::i(Trapz, 0, 1, 0), None),
        v(InstrB::i(Chk, 0, 1, m + 16), None),
        v(InstrB::i(Bchk, 0, 1, 9), None),
        v(InstrB::i(Beqz, 0, 4, 12), Pc(12)),
        v(InstrB::i(Bnez, 0, 1, 12), Pc(12)),
        v(InstrB::j(J, 12), Pc(12)),
        v(InstrB::j(OpB::Halt, 0), Effect::Halt),
        v(
            InstrB::i(Fillb, 1, 8, m + 12),
            Mem(&[(12, 7), (13, 7), (14, 7)]),
        ),
        v(
            InstrB::i(Fillw, 3, 5, m + 12),
            Mem(&[(12, 0xFF), (13, 0xFF), (14, 0xFF), (15, 0xFA)]),
        ),
    ]
}

fn patched<const N: usize>(base: [u8; N], effect: &Effect) -> [u8; N] {
    let mut out = base;
    if let Effect::Mem(patch) = effect {
        for &(at, b) in patch.iter() {
            out[at] = b;
        }
    }
    out
}

fn check_a(v: &VecA, faults: Faults) -> bool {
    let mut code = Vec::new();
    v.ins.encode(&mut code);
    let mut data = MEM_A;
    let mut mem = MemA {
        code: &code,
        code_base: 0,
        data: &mut data,
        data_base: SCRATCH_A,
        inputs: &INPUTS_A,
    };
    let mut cpu = CpuA::new(0);
    cpu.stack.extend_from_slice(v.stack);
    let Ok(halted) = cpu.step(&mut mem, faults) else {
        return false;
    };
    let (stack, pc) = match v.expect {
        Effect::Stack(s) => (s, code.len() as u32),
        Effect::Pc(t) => (v.rest, t),
        Effect::Mem(_) if matches!(v.ins, InstrA::Loop { .. }) => (v.rest, 0x40),
        _ => (v.rest, code.len() as u32),
    };
    halted == matches!(v.expect, Effect::Halt)
        && cpu.stack == stack
        && cpu.pc as u32 == pc
        && data == patched(MEM_A, &v.expect)
}

fn check_b(v: &VecB, faults: Faults) -> bool {
    let code = v.ins.encode().to_be_bytes();
    let mut data = MEM_B;
    let mut mem = MemB {
        code: &code,
        data: &mut data,
        data_base: SCRATCH_B,
    };
    let mut cpu = CpuB::new();
    cpu.regs = REGS_B;
    let Ok(halted) = cpu.step(&mut mem, faults) else {
        return false;
    };
    let mut regs = REGS_B;
    if let Effect::Reg(r, x) = v.expect {
        regs[r as usize] = x;
    }
    let pc = match v.expect {
        Effect::Pc(t) => t,
        _ => 1,
    };
    halted == matches!(v.expect, Effect::Halt)
        && cpu.regs == regs
        && cpu.pc == pc
        && data == patched(MEM_B, &v.expect)
}

/// The frozen vectors of both machines, in opcode-index order.
pub struct Oracle {
    a: Vec<VecA>,
    b: Vec<VecB>,
}

impl Oracle {
    pub fn new() -> Self {
        let a = vectors_a();
        let b = vectors_b();
        debug_assert!(a.iter().enumerate().all(|(i, v)| v.ins.op() == OpA::ALL[i]));
        debug_assert!(b.iter().enumerate().all(|(i, v)| v.ins.op == OpB::ALL[i]));
        Oracle { a, b }
    }

    /// Runs the vector of opcode `index` on `vm`.
    pub fn check(&self, vm: Vm, index: usize, faults: Faults) -> Result<(), SelfTestFail> {
        let ok = match vm {
            Vm::A => check_a(&self.a[index], faults),
            Vm::B => check_b(&self.b[index], faults),
        };
        if ok {
            Ok(())
        } else {
            Err(SelfTestFail {
                vm,
                opcode: match vm {
                    Vm::A => OpA::ALL[index].mnemonic(),
                    Vm::B => OpB::ALL[index].mnemonic(),
                },
            })
        }
    }
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new()
    }
}

/// Rotation state: one cursor per machine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Cursor {
    pub a: usize,
    pub b: usize,
}

impl Cursor {
    /// Tests the next `k` opcodes of each machine (VM-A first), advancing
    /// both cursors cyclically. `k` above the opcode count is a full pass.
    pub fn slice(
        &mut self,
        oracle: &Oracle,
        k: usize,
        faults_a: Faults,
        faults_b: Faults,
    ) -> Result<(), SelfTestFail> {
        let k = k.min(OPCODES_PER_VM);
        for (vm, cur, faults) in [(Vm::A, &mut self.a, faults_a), (Vm::B, &mut self.b, faults_b)] {
            for _ in 0..k {
                let at = *cur;
                *cur = (*cur + 1) % OPCODES_PER_VM;
                oracle.check(vm, at, faults)?;
            }
        }
        Ok(())
    }
}

/// Full pass over both machines, as run once at the start of a reboot.
pub fn full_pass(oracle: &Oracle, faults_a: Faults, faults_b: Faults) -> Result<(), SelfTestFail> {
    Cursor::default().slice(oracle, OPCODES_PER_VM, faults_a, faults_b)
}
