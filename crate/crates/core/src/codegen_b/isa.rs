//! VM-B instruction set: sixteen 64-bit registers (`r0` reads as zero),
//! fixed 32-bit big-endian instruction words in three formats.
//!
//! ```text
//! R  | op:8 | rd:4 | rs:4 | rt:4 | 0:12   |
//! I  | op:8 | rd:4 | rs:4 | imm:16        |
//! J  | op:8 | target:24                   |
//! ```
//!
//! Fields an instruction does not use must be zero; the decoder rejects
//! anything else. Branch targets are word indices from the code base.
//! Memory operands are absolute data addresses; the `X` forms add the
//! index register, scaled by the access width. `LD`/`SD` move a full
//! 64-bit register and exist for spill slots.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    R,
    I,
    J,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum OpB {
    Li = 0x81,
    Addi = 0x84,
    Xori = 0x85,
    Ld = 0x86,
    Sd = 0x87,
    Lb = 0x88,
    Lw = 0x89,
    Sb = 0x8A,
    Sw = 0x8B,
    Lbx = 0x8C,
    Lwx = 0x8D,
    Sbx = 0x8E,
    Swx = 0x8F,
    Add = 0x90,
    Sub = 0x91,
    Mul = 0x92,
    Div = 0x93,
    Rem = 0x94,
    Seq = 0x95,
    Sne = 0x96,
    Slt = 0x97,
    Sle = 0x98,
    And = 0x99,
    Or = 0x9A,
    Xor = 0x9B,
    Trapz = 0xA0,
    Chk = 0xA1,
    Bchk = 0xA2,
    Beqz = 0xA8,
    Bnez = 0xA9,
    J = 0xAA,
    Halt = 0xAB,
    Fillb = 0xB0,
    Fillw = 0xB1,
}

/// Which of the three register fields an opcode reads or writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operands {
    pub writes_rd: bool,
    pub reads_rd: bool,
    pub reads_rs: bool,
    pub reads_rt: bool,
    pub has_imm: bool,
}

impl OpB {
    pub const ALL: [OpB; 34] = [
        OpB::Li,
        OpB::Addi,
        OpB::Xori,
        OpB::Ld,
        OpB::Sd,
        OpB::Lb,
        OpB::Lw,
        OpB::Sb,
        OpB::Sw,
        OpB::Lbx,
        OpB::Lwx,
        OpB::Sbx,
        OpB::Swx,
        OpB::Add,
        OpB::Sub,
        OpB::Mul,
        OpB::Div,
        OpB::Rem,
        OpB::Seq,
        OpB::Sne,
        OpB::Slt,
        OpB::Sle,
        OpB::And,
        OpB::Or,
        OpB::Xor,
        OpB::Trapz,
        OpB::Chk,
        OpB::Bchk,
        OpB::Beqz,
        OpB::Bnez,
        OpB::J,
        OpB::Halt,
        OpB::Fillb,
        OpB::Fillw,
    ];

    #[inline]
    pub fn from_byte(b: u8) -> Option<OpB> {
        match BYTE_TO_INDEX[b as usize] {
            0xFF => None,
            i => Some(OpB::ALL[i as usize]),
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        BYTE_TO_INDEX[self as usize] as usize
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpB::Li => "LI",
            OpB::Addi => "ADDI",
            OpB::Xori => "XORI",
            OpB::Ld => "LD",
            OpB::Sd => "SD",
            OpB::Lb => "LB",
            OpB::Lw => "LW",
            OpB::Sb => "SB",
            OpB::Sw => "SW",
            OpB::Lbx => "LBX",
            OpB::Lwx => "LWX",
            OpB::Sbx => "SBX",
            OpB::Swx => "SWX",
            OpB::Add => "ADD",
            OpB::Sub => "SUB",
            OpB::Mul => "MUL",
            OpB::Div => "DIV",
            OpB::Rem => "REM",
            OpB::Seq => "SEQ",
            OpB::Sne => "SNE",
            OpB::Slt => "SLT",
            OpB::Sle => "SLE",
            OpB::And => "AND",
            OpB::Or => "OR",
            OpB::Xor => "XOR",
            OpB::Trapz => "TRAPZ",
            OpB::Chk => "CHK",
            OpB::Bchk => "BCHK",
            OpB::Beqz => "BEQZ",
            OpB::Bnez => "BNEZ",
            OpB::J => "J",
            OpB::Halt => "HALT",
            OpB::Fillb => "FILLB",
            OpB::Fillw => "FILLW",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<OpB> {
        OpB::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    pub fn format(self) -> Format {
        use OpB::*;
        match self {
            Add | Sub | Mul | Div | Rem | Seq | Sne | Slt | Sle | And | Or | Xor => Format::R,
            J | Halt => Format::J,
            _ => Format::I,
        }
    }

    pub fn operands(self) -> Operands {
        use OpB::*;
        let o = |writes_rd, reads_rd, reads_rs, reads_rt, has_imm| Operands {
            writes_rd,
            reads_rd,
            reads_rs,
            reads_rt,
            has_imm,
        };
        match self {
            Li | Ld | Lb | Lw => o(true, false, false, false, true),
            Addi | Xori | Lbx | Lwx => o(true, false, true, false, true),
            Sd | Sb | Sw => o(false, true, false, false, true),
            Sbx | Swx | Fillb | Fillw => o(false, true, true, false, true),
            Trapz => o(false, false, true, false, false),
            Chk | Bchk | Beqz | Bnez => o(false, false, true, false, true),
            J => o(false, false, false, false, true),
            Halt => o(false, false, false, false, false),
            _ => o(true, false, true, true, false),
        }
    }

    pub fn is_branch(self) -> bool {
        matches!(self, OpB::Beqz | OpB::Bnez | OpB::J)
    }
}

const BYTE_TO_INDEX: [u8; 256] = {
    let mut t = [0xFF; 256];
    let mut i = 0;
    while i < OpB::ALL.len() {
        t[OpB::ALL[i] as usize] = i as u8;
        i += 1;
    }
    t
};

/// A decoded instruction. `imm` holds the raw 16-bit immediate (I format)
/// or the 24-bit target (J format); fields an opcode ignores are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstrB {
    pub op: OpB,
    pub rd: u8,
    pub rs: u8,
    pub rt: u8,
    pub imm: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("word {index}: invalid opcode {byte:#04X}")]
    Opcode { index: usize, byte: u8 },
    #[error("word {index}: {mnemonic} has a nonzero reserved field ({word:#010X})")]
    Reserved {
        index: usize,
        mnemonic: &'static str,
        word: u32,
    },
    #[error("code length {0} is not a multiple of 4")]
    Length(usize),
}

impl InstrB {
    pub fn r(op: OpB, rd: u8, rs: u8, rt: u8) -> Self {
        InstrB {
            op,
            rd,
            rs,
            rt,
            imm: 0,
        }
    }

    pub fn i(op: OpB, rd: u8, rs: u8, imm: u16) -> Self {
        InstrB {
            op,
            rd,
            rs,
            rt: 0,
            imm: imm as u32,
        }
    }

    pub fn j(op: OpB, target: u32) -> Self {
        InstrB {
            op,
            rd: 0,
            rs: 0,
            rt: 0,
            imm: target,
        }
    }

    /// Sign-extended 16-bit immediate.
    #[inline]
    pub fn simm(&self) -> i64 {
        self.imm as u16 as i16 as i64
    }

    pub fn encode(&self) -> u32 {
        let op = (self.op as u32) << 24;
        match self.op.format() {
            Format::R => {
                op | (self.rd as u32) << 20 | (self.rs as u32) << 16 | (self.rt as u32) << 12
            }
            Format::I => op | (self.rd as u32) << 20 | (self.rs as u32) << 16 | (self.imm & 0xFFFF),
            Format::J => op | (self.imm & 0xFF_FFFF),
        }
    }

    #[inline]
    pub fn decode(word: u32, index: usize) -> Result<InstrB, DecodeError> {
        let byte = (word >> 24) as u8;
        let op = OpB::from_byte(byte).ok_or(DecodeError::Opcode { index, byte })?;
        let rd = ((word >> 20) & 0xF) as u8;
        let rs = ((word >> 16) & 0xF) as u8;
        let ins = match op.format() {
            Format::R => {
                if word & 0xFFF != 0 {
                    return Err(reserved(op, index, word));
                }
                InstrB::r(op, rd, rs, ((word >> 12) & 0xF) as u8)
            }
            Format::I => InstrB::i(op, rd, rs, word as u16),
            Format::J => InstrB::j(op, word & 0xFF_FFFF),
        };
        let use_ = op.operands();
        let rd_used = use_.writes_rd || use_.reads_rd;
        let bad = (!rd_used && op.format() != Format::J && ins.rd != 0)
            || (!use_.reads_rs && op.format() != Format::J && ins.rs != 0)
            || (!use_.has_imm && ins.imm != 0);
        if bad {
            return Err(reserved(op, index, word));
        }
        Ok(ins)
    }
}

fn reserved(op: OpB, index: usize, word: u32) -> DecodeError {
    DecodeError::Reserved {
        index,
        mnemonic: op.mnemonic(),
        word,
    }
}

pub fn words_from_bytes(code: &[u8]) -> Result<Vec<u32>, DecodeError> {
    if code.len() % 4 != 0 {
        return Err(DecodeError::Length(code.len()));
    }
    Ok(code
        .chunks(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn bytes_from_words(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_be_bytes()).collect()
}

pub fn decode_all(words: &[u32]) -> Result<Vec<InstrB>, DecodeError> {
    words
        .iter()
        .enumerate()
        .map(|(i, &w)| InstrB::decode(w, i))
        .collect()
}

impl InstrB {
    /// Assembly text; branch targets are rendered by `target`.
    pub fn render(&self, target: &dyn Fn(u32) -> String) -> String {
        use OpB::*;
        let m = self.op.mnemonic();
        let (rd, rs, rt) = (self.rd, self.rs, self.rt);
        match self.op {
            Li => format!("{m} r{rd}, {}", self.simm()),
            Addi => format!("{m} r{rd}, r{rs}, {}", self.simm()),
            Xori => format!("{m} r{rd}, r{rs}, {}", self.imm),
            Ld | Sd | Lb | Lw | Sb | Sw => format!("{m} r{rd}, [{:#06X}]", self.imm),
            Lbx | Lwx | Sbx | Swx => format!("{m} r{rd}, [{:#06X} + r{rs}]", self.imm),
            Trapz => format!("{m} r{rs}"),
            Chk => format!("{m} r{rs}, [{:#06X}]", self.imm),
            Bchk => format!("{m} r{rs}, {}", self.imm),
            Beqz | Bnez => format!("{m} r{rs}, {}", target(self.imm)),
            J => format!("{m} {}", target(self.imm)),
            Halt => m.to_string(),
            Fillb | Fillw => format!("{m} [{:#06X}], r{rs}, r{rd}", self.imm),
            _ => format!("{m} r{rd}, r{rs}, r{rt}"),
        }
    }
}

impl fmt::Display for InstrB {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|t| t.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_words() {
        assert_eq!(InstrB::i(OpB::Li, 1, 0, (-5i16) as u16).encode(), 0x8110_FFFB);
        assert_eq!(InstrB::r(OpB::Add, 3, 1, 2).encode(), 0x9031_2000);
        assert_eq!(InstrB::i(OpB::Lw, 1, 0, 0xC000).encode(), 0x8910_C000);
        assert_eq!(InstrB::j(OpB::J, 7).encode(), 0xAA00_0007);
        assert_eq!(InstrB::j(OpB::Halt, 0).encode(), 0xAB00_0000);
        assert_eq!(
            bytes_from_words(&[0x8110_FFFB]),
            [0x81, 0x10, 0xFF, 0xFB],
            "big-endian word order"
        );
    }

    #[test]
    fn opcode_table_is_consistent() {
        for (i, op) in OpB::ALL.iter().enumerate() {
            assert_eq!(op.index(), i);
            assert_eq!(OpB::from_byte(*op as u8), Some(*op));
            assert_eq!(OpB::from_mnemonic(op.mnemonic()), Some(*op));
        }
    }

    #[test]
    fn reserved_fields_are_rejected() {
        // ADD with a nonzero pad.
        assert!(matches!(
            InstrB::decode(0x9031_2001, 0),
            Err(DecodeError::Reserved { .. })
        ));
        // HALT with a target.
        assert!(InstrB::decode(0xAB00_0001, 0).is_err());
        // LI with a base register.
        assert!(InstrB::decode(0x8112_0001, 0).is_err());
        assert_eq!(
            InstrB::decode(0x0100_0000, 3),
            Err(DecodeError::Opcode { index: 3, byte: 1 })
        );
    }

    #[test]
    fn decode_inverts_encode() {
        let all = [
            InstrB::i(OpB::Li, 2, 0, 300),
            InstrB::i(OpB::Addi, 2, 3, 0xFFFF),
            InstrB::i(OpB::Swx, 4, 5, 0xC010),
            InstrB::i(OpB::Trapz, 0, 6, 0),
            InstrB::i(OpB::Chk, 0, 6, 0xC100),
            InstrB::i(OpB::Beqz, 0, 1, 12),
            InstrB::i(OpB::Fillw, 2, 3, 0xC000),
            InstrB::r(OpB::Sle, 1, 2, 3),
            InstrB::j(OpB::J, 0x1234),
        ];
        for ins in all {
            assert_eq!(InstrB::decode(ins.encode(), 0), Ok(ins));
        }
    }

    #[test]
    fn text_forms() {
        assert_eq!(InstrB::i(OpB::Li, 1, 0, (-5i16) as u16).to_string(), "LI r1, -5");
        assert_eq!(InstrB::i(OpB::Lw, 1, 0, 0xC000).to_string(), "LW r1, [0xC000]");
        assert_eq!(
            InstrB::i(OpB::Lwx, 1, 2, 0xC000).to_string(),
            "LWX r1, [0xC000 + r2]"
        );
        assert_eq!(InstrB::i(OpB::Trapz, 0, 2, 0).to_string(), "TRAPZ r2");
    }
}
