//! Assembly text for VM-B: one instruction per line, `name:` labels,
//! `;` comments. Every instruction line assembles to exactly one word.

use std::collections::HashMap;
use std::fmt;

use super::isa::{InstrB, OpB};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Label(String),
    Index(u32),
}

/// An instruction whose branch target may still be symbolic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmInstr {
    pub ins: InstrB,
    pub target: Option<Target>,
}

impl AsmInstr {
    pub fn plain(ins: InstrB) -> Self {
        AsmInstr { ins, target: None }
    }

    pub fn branch(ins: InstrB, label: impl Into<String>) -> Self {
        AsmInstr {
            ins,
            target: Some(Target::Label(label.into())),
        }
    }
}

impl fmt::Display for AsmInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = self.ins.render(&|t| match &self.target {
            Some(Target::Label(l)) => l.clone(),
            _ => t.to_string(),
        });
        f.write_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmLine {
    Label(String),
    /// `note` is rendered as a trailing comment (source span, purpose).
    Instr { instr: AsmInstr, note: Option<String> },
}

impl fmt::Display for AsmLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmLine::Label(l) => write!(f, "{l}:"),
            AsmLine::Instr { instr, note: None } => write!(f, "    {instr}"),
            AsmLine::Instr {
                instr,
                note: Some(n),
            } => write!(f, "    {:<32}; {n}", instr.to_string()),
        }
    }
}

pub fn render(lines: &[AsmLine]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

pub fn instruction_count(lines: &[AsmLine]) -> usize {
    lines
        .iter()
        .filter(|l| matches!(l, AsmLine::Instr { .. }))
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: label `{label}` redefined")]
    LabelRedefined { line: usize, label: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: branch target {target} out of range")]
    BranchOutOfRange { line: usize, target: u64 },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn syntax(line: usize, message: impl Into<String>) -> AsmError {
    AsmError::Syntax {
        line,
        message: message.into(),
    }
}

/// Resolves labels and encodes. Line numbers in errors are 1-based
/// positions in `lines`.
pub fn assemble_lines(lines: &[AsmLine]) -> Result<Vec<u32>, AsmError> {
    let mut labels = HashMap::new();
    let mut index = 0u64;
    for (n, l) in lines.iter().enumerate() {
        match l {
            AsmLine::Label(name) => {
                if labels.insert(name.as_str(), index).is_some() {
                    return Err(AsmError::LabelRedefined {
                        line: n + 1,
                        label: name.clone(),
                    });
                }
            }
            AsmLine::Instr { .. } => index += 1,
        }
    }
    let mut words = Vec::with_capacity(index as usize);
    for (n, l) in lines.iter().enumerate() {
        let AsmLine::Instr { instr, .. } = l else {
            continue;
        };
        let mut ins = instr.ins;
        if let Some(t) = &instr.target {
            let at = match t {
                Target::Index(i) => *i as u64,
                Target::Label(name) => {
                    *labels
                        .get(name.as_str())
                        .ok_or_else(|| AsmError::UndefinedLabel {
                            line: n + 1,
                            label: name.clone(),
                        })?
                }
            };
            let limit = if ins.op == OpB::J { 1 << 24 } else { 1 << 16 };
            if at >= limit {
                return Err(AsmError::BranchOutOfRange {
                    line: n + 1,
                    target: at,
                });
            }
            ins.imm = at as u32;
        }
        words.push(ins.encode());
    }
    Ok(words)
}

/// Line-equivalent listing: synthesized `L<index>:` labels at every
/// branch target.
pub fn disassemble(words: &[u32]) -> Result<Vec<AsmLine>, super::isa::DecodeError> {
    let decoded = super::isa::decode_all(words)?;
    let mut targets: Vec<u32> = decoded
        .iter()
        .filter(|i| i.op.is_branch())
        .map(|i| i.imm)
        .collect();
    targets.sort_unstable();
    targets.dedup();
    let mut out = Vec::new();
    for (at, ins) in decoded.into_iter().enumerate() {
        if targets.binary_search(&(at as u32)).is_ok() {
            out.push(AsmLine::Label(format!("L{at}")));
        }
        let instr = if ins.op.is_branch() {
            AsmInstr::branch(ins, format!("L{}", ins.imm))
        } else {
            AsmInstr::plain(ins)
        };
        out.push(AsmLine::Instr { instr, note: None });
    }
    // Targets past the last instruction still need a label to stay
    // assemblable.
    for t in targets {
        if t as usize >= words.len() {
            out.push(AsmLine::Label(format!("L{t}")));
        }
    }
    Ok(out)
}

fn parse_number(s: &str, line: usize) -> Result<i64, AsmError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = match body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        Some(h) => i64::from_str_radix(h, 16),
        None => body.parse::<i64>(),
    }
    .map_err(|_| syntax(line, format!("bad number `{s}`")))?;
    Ok(if neg { -v } else { v })
}

fn parse_reg(s: &str, line: usize) -> Result<u8, AsmError> {
    s.strip_prefix('r')
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|&n| n < 16)
        .ok_or_else(|| syntax(line, format!("bad register `{s}`")))
}

fn imm16(v: i64, signed: bool, line: usize) -> Result<u16, AsmError> {
    let ok = if signed {
        (i16::MIN as i64..=i16::MAX as i64).contains(&v)
    } else {
        (0..=u16::MAX as i64).contains(&v)
    };
    if ok {
        Ok(v as u16)
    } else {
        Err(syntax(line, format!("immediate {v} out of range")))
    }
}

/// `[addr]` or `[addr + rN]`.
fn parse_mem(s: &str, line: usize) -> Result<(u16, Option<u8>), AsmError> {
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| syntax(line, format!("expected memory operand, got `{s}`")))?;
    let mut parts = inner.split('+').map(str::trim);
    let addr = imm16(parse_number(parts.next().unwrap_or(""), line)?, false, line)?;
    let reg = parts.next().map(|r| parse_reg(r, line)).transpose()?;
    if parts.next().is_some() {
        return Err(syntax(line, "too many terms in memory operand"));
    }
    Ok((addr, reg))
}

fn parse_target(s: &str, line: usize) -> Result<Target, AsmError> {
    if s.starts_with(|c: char| c.is_ascii_digit()) {
        Ok(Target::Index(parse_number(s, line)? as u32))
    } else if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(Target::Label(s.to_string()))
    } else {
        Err(syntax(line, format!("bad branch target `{s}`")))
    }
}

/// Splits operands on top-level commas (commas never occur inside `[]`).
fn operands(rest: &str) -> Vec<&str> {
    if rest.trim().is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    }
}

pub fn parse_asm(text: &str) -> Result<Vec<AsmLine>, AsmError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let (code, note) = match raw.split_once(';') {
            Some((c, comment)) => (c.trim(), Some(comment.trim().to_string())),
            None => (raw.trim(), None),
        };
        if code.is_empty() {
            continue;
        }
        if let Some(label) = code.strip_suffix(':') {
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(line, format!("bad label `{label}`")));
            }
            out.push(AsmLine::Label(label.to_string()));
            continue;
        }
        let (mnemonic, rest) = code.split_once(char::is_whitespace).unwrap_or((code, ""));
        let op = OpB::from_mnemonic(mnemonic).ok_or_else(|| AsmError::UnknownMnemonic {
            line,
            mnemonic: mnemonic.to_string(),
        })?;
        let args = operands(rest);
        let want = |k: usize| -> Result<(), AsmError> {
            if args.len() == k {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    format!("{mnemonic} takes {k} operands, got {}", args.len()),
                ))
            }
        };
        use OpB::*;
        let instr = match op {
            Li => {
                want(2)?;
                let v = imm16(parse_number(args[1], line)?, true, line)?;
                AsmInstr::plain(InstrB::i(op, parse_reg(args[0], line)?, 0, v))
            }
            Addi | Xori => {
                want(3)?;
                let v = imm16(parse_number(args[2], line)?, op == Addi, line)?;
                AsmInstr::plain(InstrB::i(
                    op,
                    parse_reg(args[0], line)?,
                    parse_reg(args[1], line)?,
                    v,
                ))
            }
            Ld | Sd | Lb | Lw | Sb | Sw | Lbx | Lwx | Sbx | Swx => {
                want(2)?;
                let (addr, idx) = parse_mem(args[1], line)?;
                let indexed = matches!(op, Lbx | Lwx | Sbx | Swx);
                if indexed != idx.is_some() {
                    return Err(syntax(line, format!("{mnemonic}: wrong addressing form")));
                }
                AsmInstr::plain(InstrB::i(
                    op,
                    parse_reg(args[0], line)?,
                    idx.unwrap_or(0),
                    addr,
                ))
            }
            Trapz => {
                want(1)?;
                AsmInstr::plain(InstrB::i(op, 0, parse_reg(args[0], line)?, 0))
            }
            Chk => {
                want(2)?;
                let (addr, idx) = parse_mem(args[1], line)?;
                if idx.is_some() {
                    return Err(syntax(line, "CHK takes an absolute pool address"));
                }
                AsmInstr::plain(InstrB::i(op, 0, parse_reg(args[0], line)?, addr))
            }
            Bchk => {
                want(2)?;
                let v = imm16(parse_number(args[1], line)?, false, line)?;
                AsmInstr::plain(InstrB::i(op, 0, parse_reg(args[0], line)?, v))
            }
            Beqz | Bnez => {
                want(2)?;
                AsmInstr {
                    ins: InstrB::i(op, 0, parse_reg(args[0], line)?, 0),
                    target: Some(parse_target(args[1], line)?),
                }
            }
            J => {
                want(1)?;
                AsmInstr {
                    ins: InstrB::j(op, 0),
                    target: Some(parse_target(args[0], line)?),
                }
            }
            Halt => {
                want(0)?;
                AsmInstr::plain(InstrB::j(op, 0))
            }
            Fillb | Fillw => {
                want(3)?;
                let (addr, idx) = parse_mem(args[0], line)?;
                if idx.is_some() {
                    return Err(syntax(line, "FILL takes an absolute address"));
                }
                AsmInstr::plain(InstrB::i(
                    op,
                    parse_reg(args[2], line)?,
                    parse_reg(args[1], line)?,
                    addr,
                ))
            }
            _ => {
                want(3)?;
                AsmInstr::plain(InstrB::r(
                    op,
                    parse_reg(args[0], line)?,
                    parse_reg(args[1], line)?,
                    parse_reg(args[2], line)?,
                ))
            }
        };
        out.push(AsmLine::Instr { instr, note });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROGRAM: &str = "\
; fingerprint 00ff
    LB r1, [0xC000]      ; 1:40
    BEQZ r1, skip
    LI r2, -5
    ADDI r2, r2, 7
    SW r2, [0xC004]
    LWX r3, [0xC010 + r2]
    FILLB [0xC020], r2, r0
    TRAPZ r3
    DIV r4, r2, r3
    CHK r4, [0xC100]
skip:
    J end
end:
    HALT
";

    #[test]
    fn two_instruction_listing_gives_two_words() {
        let lines = parse_asm("LW r1, [0xC000]\nSW r1, [0xC001]\n").unwrap();
        assert_eq!(assemble_lines(&lines).unwrap(), vec![0x8910_C000, 0x8B10_C001]);
    }

    #[test]
    fn word_count_equals_instruction_lines() {
        let lines = parse_asm(PROGRAM).unwrap();
        let words = assemble_lines(&lines).unwrap();
        assert_eq!(words.len(), instruction_count(&lines));
        assert_eq!(words.len(), 12);
    }

    #[test]
    fn assemble_disassemble_assemble_is_identity() {
        let words = assemble_lines(&parse_asm(PROGRAM).unwrap()).unwrap();
        let text = render(&disassemble(&words).unwrap());
        let again = assemble_lines(&parse_asm(&text).unwrap()).unwrap();
        assert_eq!(words, again);
    }

    #[test]
    fn errors() {
        assert_eq!(
            parse_asm("  FROB r1\n"),
            Err(AsmError::UnknownMnemonic {
                line: 1,
                mnemonic: "FROB".into()
            })
        );
        let undefined = parse_asm("J nowhere\n").unwrap();
        assert_eq!(
            assemble_lines(&undefined),
            Err(AsmError::UndefinedLabel {
                line: 1,
                label: "nowhere".into()
            })
        );
        let twice = parse_asm("a:\nHALT\na:\n").unwrap();
        assert!(matches!(
            assemble_lines(&twice),
            Err(AsmError::LabelRedefined { line: 3, .. })
        ));
        let far = parse_asm("BEQZ r1, 70000\n").unwrap();
        assert!(matches!(
            assemble_lines(&far),
            Err(AsmError::BranchOutOfRange { target: 70000, .. })
        ));
        assert!(parse_asm("LI r1, 40000\n").is_err());
        assert!(parse_asm("LW r1, [0xC000 + r2]\n").is_err());
        assert!(parse_asm("ADD r1, r2\n").is_err());
        assert!(parse_asm("ADD r1, r2, r16\n").is_err());
    }
}
