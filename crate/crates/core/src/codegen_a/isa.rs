//! VM-A instruction set: an operand-stack machine with variable-length
//! encoding. One opcode byte, then operands in little-endian order:
//! addresses, ports, lengths and jump targets are 16-bit, values 32-bit.
//!
//! | opcode      | mnemonic  | operands               | effect                                   |
//! |-------------|-----------|------------------------|------------------------------------------|
//! | 01          | PUSH      | v:i32                  | push v                                   |
//! | 02 / 03     | LDB / LDW | a                      | push byte / word at a                    |
//! | 04 / 05     | STB / STW | a                      | pop into byte / word at a                |
//! | 06 / 07     | LDBX/LDWX | a, max                 | pop i; trap unless 0<=i<=max; push a[i]  |
//! | 08 / 09     | STBX/STWX | a, max                 | pop v, pop i; bounds check; a[i] := v    |
//! | 0A          | IN        | port                   | push input cell                          |
//! | 0B          | INX       | port, max              | pop i; bounds check; push input port+i   |
//! | 10..1F      | ADD..NOT  |                        | stack arithmetic, logic, comparison      |
//! | 20          | RANGECHK  | lo:i32, hi:i32         | trap unless lo <= top <= hi (no pop)     |
//! | 21          | JMP       | t                      | pc := t                                  |
//! | 22          | JZ        | t                      | pop c; if c = 0 then pc := t             |
//! | 23          | LOOP      | a, hi:i32, t           | w := word(a)+1; if w <= hi: store, jump  |
//! | 24 / 25     | FILLB/W   | a, n, v:i32            | n cells from a := v                      |
//! | 2F          | HALT      |                        | end of cycle                             |

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum OpA {
    Push = 0x01,
    Ldb = 0x02,
    Ldw = 0x03,
    Stb = 0x04,
    Stw = 0x05,
    Ldbx = 0x06,
    Ldwx = 0x07,
    Stbx = 0x08,
    Stwx = 0x09,
    In = 0x0A,
    Inx = 0x0B,
    Add = 0x10,
    Sub = 0x11,
    Mul = 0x12,
    Div = 0x13,
    Mod = 0x14,
    Neg = 0x15,
    Eq = 0x16,
    Ne = 0x17,
    Lt = 0x18,
    Le = 0x19,
    Gt = 0x1A,
    Ge = 0x1B,
    And = 0x1C,
    Or = 0x1D,
    Xor = 0x1E,
    Not = 0x1F,
    RangeChk = 0x20,
    Jmp = 0x21,
    Jz = 0x22,
    Loop = 0x23,
    Fillb = 0x24,
    Fillw = 0x25,
    Halt = 0x2F,
}

impl OpA {
    pub const ALL: [OpA; 34] = [
        OpA::Push,
        OpA::Ldb,
        OpA::Ldw,
        OpA::Stb,
        OpA::Stw,
        OpA::Ldbx,
        OpA::Ldwx,
        OpA::Stbx,
        OpA::Stwx,
        OpA::In,
        OpA::Inx,
        OpA::Add,
        OpA::Sub,
        OpA::Mul,
        OpA::Div,
        OpA::Mod,
        OpA::Neg,
        OpA::Eq,
        OpA::Ne,
        OpA::Lt,
        OpA::Le,
        OpA::Gt,
        OpA::Ge,
        OpA::And,
        OpA::Or,
        OpA::Xor,
        OpA::Not,
        OpA::RangeChk,
        OpA::Jmp,
        OpA::Jz,
        OpA::Loop,
        OpA::Fillb,
        OpA::Fillw,
        OpA::Halt,
    ];

    #[inline]
    pub fn from_byte(b: u8) -> Option<OpA> {
        match BYTE_TO_INDEX[b as usize] {
            0xFF => None,
            i => Some(OpA::ALL[i as usize]),
        }
    }

    /// Position in `ALL`; the bit used by opcode fault masks.
    #[inline]
    pub fn index(self) -> usize {
        BYTE_TO_INDEX[self as usize] as usize
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpA::Push => "PUSH",
            OpA::Ldb => "LDB",
            OpA::Ldw => "LDW",
            OpA::Stb => "STB",
            OpA::Stw => "STW",
            OpA::Ldbx => "LDBX",
            OpA::Ldwx => "LDWX",
            OpA::Stbx => "STBX",
            OpA::Stwx => "STWX",
            OpA::In => "IN",
            OpA::Inx => "INX",
            OpA::Add => "ADD",
            OpA::Sub => "SUB",
            OpA::Mul => "MUL",
            OpA::Div => "DIV",
            OpA::Mod => "MOD",
            OpA::Neg => "NEG",
            OpA::Eq => "EQ",
            OpA::Ne => "NE",
            OpA::Lt => "LT",
            OpA::Le => "LE",
            OpA::Gt => "GT",
            OpA::Ge => "GE",
            OpA::And => "AND",
            OpA::Or => "OR",
            OpA::Xor => "XOR",
            OpA::Not => "NOT",
            OpA::RangeChk => "RANGECHK",
            OpA::Jmp => "JMP",
            OpA::Jz => "JZ",
            OpA::Loop => "LOOP",
            OpA::Fillb => "FILLB",
            OpA::Fillw => "FILLW",
            OpA::Halt => "HALT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<OpA> {
        OpA::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    /// Encoded length in bytes, opcode included.
    pub fn len(self) -> usize {
        use OpA::*;
        match self {
            Push => 5,
            Ldb | Ldw | Stb | Stw | In | Jmp | Jz => 3,
            Ldbx | Ldwx | Stbx | Stwx | Inx => 5,
            RangeChk => 9,
            Loop => 9,
            Fillb | Fillw => 9,
            _ => 1,
        }
    }
}

const BYTE_TO_INDEX: [u8; 256] = {
    let mut t = [0xFF; 256];
    let mut i = 0;
    while i < OpA::ALL.len() {
        t[OpA::ALL[i] as usize] = i as u8;
        i += 1;
    }
    t
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrA {
    Push(i32),
    Ldb(u16),
    Ldw(u16),
    Stb(u16),
    Stw(u16),
    Ldbx { addr: u16, max: u16 },
    Ldwx { addr: u16, max: u16 },
    Stbx { addr: u16, max: u16 },
    Stwx { addr: u16, max: u16 },
    In(u16),
    Inx { port: u16, max: u16 },
    /// Any operand-free stack operation (`ADD` through `NOT`).
    Alu(OpA),
    RangeChk { lo: i32, hi: i32 },
    Jmp(u16),
    Jz(u16),
    Loop { addr: u16, hi: i32, target: u16 },
    Fillb { addr: u16, count: u16, value: i32 },
    Fillw { addr: u16, count: u16, value: i32 },
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("invalid opcode {byte:#04X} at offset {at:#06X}")]
    Opcode { at: usize, byte: u8 },
    #[error("instruction at offset {at:#06X} runs past the end of the code")]
    Truncated { at: usize },
}

impl InstrA {
    pub fn op(&self) -> OpA {
        match self {
            InstrA::Push(_) => OpA::Push,
            InstrA::Ldb(_) => OpA::Ldb,
            InstrA::Ldw(_) => OpA::Ldw,
            InstrA::Stb(_) => OpA::Stb,
            InstrA::Stw(_) => OpA::Stw,
            InstrA::Ldbx { .. } => OpA::Ldbx,
            InstrA::Ldwx { .. } => OpA::Ldwx,
            InstrA::Stbx { .. } => OpA::Stbx,
            InstrA::Stwx { .. } => OpA::Stwx,
            InstrA::In(_) => OpA::In,
            InstrA::Inx { .. } => OpA::Inx,
            InstrA::Alu(op) => *op,
            InstrA::RangeChk { .. } => OpA::RangeChk,
            InstrA::Jmp(_) => OpA::Jmp,
            InstrA::Jz(_) => OpA::Jz,
            InstrA::Loop { .. } => OpA::Loop,
            InstrA::Fillb { .. } => OpA::Fillb,
            InstrA::Fillw { .. } => OpA::Fillw,
            InstrA::Halt => OpA::Halt,
        }
    }

    pub fn len(&self) -> usize {
        self.op().len()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.op() as u8);
        let w16 = |out: &mut Vec<u8>, v: u16| out.extend_from_slice(&v.to_le_bytes());
        let w32 = |out: &mut Vec<u8>, v: i32| out.extend_from_slice(&v.to_le_bytes());
        match *self {
            InstrA::Push(v) => w32(out, v),
            InstrA::Ldb(a) | InstrA::Ldw(a) | InstrA::Stb(a) | InstrA::Stw(a) => w16(out, a),
            InstrA::In(p) | InstrA::Jmp(p) | InstrA::Jz(p) => w16(out, p),
            InstrA::Ldbx { addr, max }
            | InstrA::Ldwx { addr, max }
            | InstrA::Stbx { addr, max }
            | InstrA::Stwx { addr, max }
            | InstrA::Inx { port: addr, max } => {
                w16(out, addr);
                w16(out, max);
            }
            InstrA::RangeChk { lo, hi } => {
                w32(out, lo);
                w32(out, hi);
            }
            InstrA::Loop { addr, hi, target } => {
                w16(out, addr);
                w32(out, hi);
                w16(out, target);
            }
            InstrA::Fillb { addr, count, value } | InstrA::Fillw { addr, count, value } => {
                w16(out, addr);
                w16(out, count);
                w32(out, value);
            }
            InstrA::Alu(_) | InstrA::Halt => {}
        }
    }
}

/// Decodes the instruction at byte offset `at`.
#[inline]
pub fn decode_at(code: &[u8], at: usize) -> Result<InstrA, DecodeError> {
    let byte = *code.get(at).ok_or(DecodeError::Truncated { at })?;
    let op = OpA::from_byte(byte).ok_or(DecodeError::Opcode { at, byte })?;
    let ops = code
        .get(at + 1..at + op.len())
        .ok_or(DecodeError::Truncated { at })?;
    let u16_at = |i: usize| u16::from_le_bytes([ops[i], ops[i + 1]]);
    let i32_at = |i: usize| i32::from_le_bytes([ops[i], ops[i + 1], ops[i + 2], ops[i + 3]]);
    Ok(match op {
        OpA::Push => InstrA::Push(i32_at(0)),
        OpA::Ldb => InstrA::Ldb(u16_at(0)),
        OpA::Ldw => InstrA::Ldw(u16_at(0)),
        OpA::Stb => InstrA::Stb(u16_at(0)),
        OpA::Stw => InstrA::Stw(u16_at(0)),
        OpA::Ldbx => InstrA::Ldbx {
            addr: u16_at(0),
            max: u16_at(2),
        },
        OpA::Ldwx => InstrA::Ldwx {
            addr: u16_at(0),
            max: u16_at(2),
        },
        OpA::Stbx => InstrA::Stbx {
            addr: u16_at(0),
            max: u16_at(2),
        },
        OpA::Stwx => InstrA::Stwx {
            addr: u16_at(0),
            max: u16_at(2),
        },
        OpA::In => InstrA::In(u16_at(0)),
        OpA::Inx => InstrA::Inx {
            port: u16_at(0),
            max: u16_at(2),
        },
        OpA::RangeChk => InstrA::RangeChk {
            lo: i32_at(0),
            hi: i32_at(4),
        },
        OpA::Jmp => InstrA::Jmp(u16_at(0)),
        OpA::Jz => InstrA::Jz(u16_at(0)),
        OpA::Loop => InstrA::Loop {
            addr: u16_at(0),
            hi: i32_at(2),
            target: u16_at(6),
        },
        OpA::Fillb => InstrA::Fillb {
            addr: u16_at(0),
            count: u16_at(2),
            value: i32_at(4),
        },
        OpA::Fillw => InstrA::Fillw {
            addr: u16_at(0),
            count: u16_at(2),
            value: i32_at(4),
        },
        OpA::Halt => InstrA::Halt,
        alu => InstrA::Alu(alu),
    })
}

/// Decodes a whole code image into `(offset, instruction)` pairs.
pub fn decode_all(code: &[u8]) -> Result<Vec<(usize, InstrA)>, DecodeError> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < code.len() {
        let ins = decode_at(code, at)?;
        out.push((at, ins));
        at += ins.len();
    }
    Ok(out)
}

impl fmt::Display for InstrA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.op().mnemonic();
        match *self {
            InstrA::Push(v) => write!(f, "{m} {v}"),
            InstrA::Ldb(a) | InstrA::Ldw(a) | InstrA::Stb(a) | InstrA::Stw(a) => {
                write!(f, "{m} {a:#06X}")
            }
            InstrA::In(p) => write!(f, "{m} {p}"),
            InstrA::Jmp(t) | InstrA::Jz(t) => write!(f, "{m} {t:#06X}"),
            InstrA::Ldbx { addr, max }
            | InstrA::Ldwx { addr, max }
            | InstrA::Stbx { addr, max }
            | InstrA::Stwx { addr, max } => write!(f, "{m} {addr:#06X}, {max}"),
            InstrA::Inx { port, max } => write!(f, "{m} {port}, {max}"),
            InstrA::RangeChk { lo, hi } => write!(f, "{m} {lo}, {hi}"),
            InstrA::Loop { addr, hi, target } => write!(f, "{m} {addr:#06X}, {hi}, {target:#06X}"),
            InstrA::Fillb { addr, count, value } | InstrA::Fillw { addr, count, value } => {
                write!(f, "{m} {addr:#06X}, {count}, {value}")
            }
            InstrA::Alu(_) | InstrA::Halt => f.write_str(m),
        }
    }
}

/// One line per instruction: absolute address, raw bytes, disassembly.
pub fn listing(code: &[u8], base: u16) -> Result<String, DecodeError> {
    let mut out = String::new();
    for (at, ins) in decode_all(code)? {
        let raw: Vec<String> = code[at..at + ins.len()]
            .iter()
            .map(|b| format!("{b:02X}"))
            .collect();
        out.push_str(&format!(
            "{:04X}  {:<26} {}\n",
            base as usize + at,
            raw.join(" "),
            ins
        ));
    }
    Ok(out)
}
