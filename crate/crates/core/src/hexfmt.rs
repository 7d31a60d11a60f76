//! HEX image records: `:LLAAAATT<data>CC`, data (00) and end-of-file (01)
//! record types only, 16-bit addressing, uppercase digits, `\n` newlines.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("image of {len} bytes at {base:#06X} exceeds the 64 KiB address space")]
    AddressOverflow { base: u16, len: usize },
    #[error("bytes per record must be in 1..=32, got {0}")]
    RecordSize(usize),
    #[error("line {line}: checksum mismatch (expected {expected:02X}, found {found:02X})")]
    Checksum { line: usize, expected: u8, found: u8 },
    #[error("line {line}: bad character at column {column}")]
    BadCharacter { line: usize, column: usize },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: &'static str },
    #[error("line {line}: unsupported record type {rectype:02X}")]
    RecordType { line: usize, rectype: u8 },
    #[error("missing end-of-file record")]
    MissingEof,
    #[error("line {line}: content after end-of-file record")]
    AfterEof { line: usize },
    #[error("line {line}: record overlaps bytes already defined")]
    Overlap { line: usize },
    #[error("line {line}: gap before record; image must be contiguous")]
    Gap { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordType {
    Data = 0x00,
    Eof = 0x01,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexRecord {
    pub address: u16,
    pub rectype: RecordType,
    pub payload: Vec<u8>,
}

impl HexRecord {
    /// Two's complement of the byte sum of everything before the checksum.
    pub fn checksum(&self) -> u8 {
        checksum(&self.header_and_payload())
    }

    fn header_and_payload(&self) -> Vec<u8> {
        let mut bytes = vec![
            self.payload.len() as u8,
            (self.address >> 8) as u8,
            self.address as u8,
            self.rectype as u8,
        ];
        bytes.extend_from_slice(&self.payload);
        bytes
    }

    pub fn to_line(&self) -> String {
        let mut line = String::with_capacity(11 + 2 * self.payload.len());
        line.push(':');
        for b in self.header_and_payload() {
            let _ = write!(line, "{b:02X}");
        }
        let _ = write!(line, "{:02X}", self.checksum());
        line
    }
}

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes
        .iter()
        .fold(0u8, |acc, b| acc.wrapping_add(*b))
        .wrapping_neg()
}

pub fn encode(image: &[u8], base: u16, bytes_per_record: usize) -> Result<String, HexError> {
    if !(1..=32).contains(&bytes_per_record) {
        return Err(HexError::RecordSize(bytes_per_record));
    }
    if base as usize + image.len() > 0x1_0000 {
        return Err(HexError::AddressOverflow {
            base,
            len: image.len(),
        });
    }
    let mut out = String::new();
    for (i, chunk) in image.chunks(bytes_per_record).enumerate() {
        let rec = HexRecord {
            address: base + (i * bytes_per_record) as u16,
            rectype: RecordType::Data,
            payload: chunk.to_vec(),
        };
        out.push_str(&rec.to_line());
        out.push('\n');
    }
    let eof = HexRecord {
        address: 0,
        rectype: RecordType::Eof,
        payload: Vec::new(),
    };
    out.push_str(&eof.to_line());
    out.push('\n');
    Ok(out)
}

fn nibble(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

/// Parses one record line (without newline). `line` is 1-based, for errors.
pub fn parse_record(text: &str, line: usize) -> Result<HexRecord, HexError> {
    let raw = text.as_bytes();
    if raw.first() != Some(&b':') {
        return Err(HexError::BadCharacter { line, column: 1 });
    }
    let digits = &raw[1..];
    if let Some(pos) = digits.iter().position(|&c| nibble(c).is_none()) {
        return Err(HexError::BadCharacter {
            line,
            column: pos + 2,
        });
    }
    if digits.len() % 2 != 0 || digits.len() < 10 {
        return Err(HexError::Malformed {
            line,
            reason: "odd or short digit count",
        });
    }
    let bytes: Vec<u8> = digits
        .chunks(2)
        .map(|p| (nibble(p[0]).unwrap() << 4) | nibble(p[1]).unwrap())
        .collect();
    let (body, found) = bytes.split_at(bytes.len() - 1);
    let expected = checksum(body);
    if expected != found[0] {
        return Err(HexError::Checksum {
            line,
            expected,
            found: found[0],
        });
    }
    let len = body[0] as usize;
    if body.len() != 4 + len {
        return Err(HexError::Malformed {
            line,
            reason: "length field disagrees with payload size",
        });
    }
    let address = u16::from_be_bytes([body[1], body[2]]);
    let rectype = match body[3] {
        0x00 => RecordType::Data,
        0x01 => RecordType::Eof,
        other => return Err(HexError::RecordType { line, rectype: other }),
    };
    if rectype == RecordType::Eof && (len != 0 || address != 0) {
        return Err(HexError::Malformed {
            line,
            reason: "end-of-file record must be :00000001FF",
        });
    }
    Ok(HexRecord {
        address,
        rectype,
        payload: body[4..].to_vec(),
    })
}

/// Decodes a HEX text into `(base address, contiguous bytes)`. Data
/// records may appear in any order but must tile one contiguous range.
pub fn decode(text: &str) -> Result<(u16, Vec<u8>), HexError> {
    decode_records(text).and_then(|recs| assemble(&recs))
}

/// Parses every record; the returned list excludes the EOF record and
/// carries each record's 1-based line number.
pub fn decode_records(text: &str) -> Result<Vec<(usize, HexRecord)>, HexError> {
    let mut records = Vec::new();
    let mut eof_seen = false;
    for (i, raw) in text.split('\n').enumerate() {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        if eof_seen {
            return Err(HexError::AfterEof { line });
        }
        let rec = parse_record(raw, line)?;
        match rec.rectype {
            RecordType::Eof => eof_seen = true,
            RecordType::Data => records.push((line, rec)),
        }
    }
    if !eof_seen {
        return Err(HexError::MissingEof);
    }
    Ok(records)
}

fn assemble(records: &[(usize, HexRecord)]) -> Result<(u16, Vec<u8>), HexError> {
    let mut sorted: Vec<&(usize, HexRecord)> =
        records.iter().filter(|(_, r)| !r.payload.is_empty()).collect();
    sorted.sort_by_key(|(line, r)| (r.address, *line));
    let Some((_, first)) = sorted.first() else {
        return Ok((0, Vec::new()));
    };
    let base = first.address;
    let mut bytes = Vec::new();
    for (line, rec) in sorted {
        let next = base as usize + bytes.len();
        let at = rec.address as usize;
        if at < next {
            return Err(HexError::Overlap { line: *line });
        }
        if at > next {
            return Err(HexError::Gap { line: *line });
        }
        if at + rec.payload.len() > 0x1_0000 {
            return Err(HexError::AddressOverflow {
                base,
                len: bytes.len() + rec.payload.len(),
            });
        }
        bytes.extend_from_slice(&rec.payload);
    }
    Ok((base, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_record() {
        // 03 + 00 + 30 + 00 + 02 + 33 + 7A = 0xE2; 0x100 - 0xE2 = 0x1E
        let text = encode(&[0x02, 0x33, 0x7A], 0x0030, 16).unwrap();
        assert_eq!(text, ":0300300002337A1E\n:00000001FF\n");
    }

    #[test]
    fn empty_image_is_eof_only() {
        assert_eq!(encode(&[], 0, 16).unwrap(), ":00000001FF\n");
        assert_eq!(decode(":00000001FF\n").unwrap(), (0, vec![]));
    }

    #[test]
    fn record_arithmetic() {
        let text = encode(&[0; 8], 0x100, 4).unwrap();
        assert_eq!(text.lines().count(), 3);
        let text = encode(&[0; 9], 0x100, 4).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn checksum_off_by_one() {
        assert_eq!(
            decode(":0300300002337A1F\n:00000001FF\n"),
            Err(HexError::Checksum {
                line: 1,
                expected: 0x1E,
                found: 0x1F
            })
        );
    }

    #[test]
    fn missing_eof() {
        assert_eq!(decode(":0300300002337A1E\n"), Err(HexError::MissingEof));
    }

    #[test]
    fn overlap_and_gap() {
        let a = HexRecord {
            address: 0x10,
            rectype: RecordType::Data,
            payload: vec![1, 2, 3, 4],
        };
        let overlapping = HexRecord {
            address: 0x12,
            ..a.clone()
        };
        let gapped = HexRecord {
            address: 0x20,
            ..a.clone()
        };
        let eof = ":00000001FF";
        let text = format!("{}\n{}\n{eof}\n", a.to_line(), overlapping.to_line());
        assert_eq!(decode(&text), Err(HexError::Overlap { line: 2 }));
        let text = format!("{}\n{}\n{eof}\n", a.to_line(), gapped.to_line());
        assert_eq!(decode(&text), Err(HexError::Gap { line: 2 }));
    }

    #[test]
    fn address_overflow() {
        assert!(matches!(
            encode(&[0; 16], 0xFFF8, 16),
            Err(HexError::AddressOverflow { .. })
        ));
        assert!(encode(&[0; 8], 0xFFF8, 16).is_ok());
    }

    #[test]
    fn bad_character_and_lowercase() {
        assert_eq!(
            decode(":0300300002337a1E\n:00000001FF\n"),
            Err(HexError::BadCharacter { line: 1, column: 15 })
        );
        assert!(matches!(
            decode("0300300002337A1E\n:00000001FF\n"),
            Err(HexError::BadCharacter { line: 1, column: 1 })
        ));
    }

    #[test]
    fn every_single_digit_substitution_is_rejected() {
        let good = ":0300300002337A1E";
        let digits = b"0123456789ABCDEF";
        let mut tried = 0;
        for pos in 1..good.len() {
            for &d in digits {
                if good.as_bytes()[pos] == d {
                    continue;
                }
                let mut bad = good.as_bytes().to_vec();
                bad[pos] = d;
                let line = String::from_utf8(bad).unwrap();
                assert!(
                    decode(&format!("{line}\n:00000001FF\n")).is_err(),
                    "accepted corrupted record {line}"
                );
                tried += 1;
            }
        }
        assert_eq!(tried, 16 * 15);
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..2048),
                      base in 0u16..0x8000, per in 1usize..=32) {
            let text = encode(&bytes, base, per).unwrap();
            let (b, decoded) = decode(&text).unwrap();
            prop_assert_eq!(&decoded, &bytes);
            if !bytes.is_empty() {
                prop_assert_eq!(b, base);
            }
        }
    }
}
