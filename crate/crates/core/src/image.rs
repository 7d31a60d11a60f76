//! Data-region layout shared by both executable images, and the canonical
//! serialization the safety runtime digests and compares.

use serde::{Deserialize, Serialize};

use crate::frontend::ast::ScalarType;
use crate::frontend::typeck::VarInfo;
use crate::frontend::VarKind;
use crate::mcu::map::{MapError, Region, RegionId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodegenError {
    #[error("invalid memory map: {0}")]
    Map(#[from] MapError),
    #[error("{region} overflow: {needed} bytes needed, region holds {size}")]
    RegionOverflow {
        region: RegionId,
        needed: u64,
        size: u32,
    },
    #[error("operand stack depth {needed} exceeds capacity {capacity}")]
    StackDepth { needed: u32, capacity: u32 },
    #[error("constant {0} does not fit a 32-bit immediate")]
    Constant(i64),
    #[error("register spills need {needed} scratch slots, only {slots} reserved")]
    SpillOverflow { needed: u32, slots: u32 },
    #[error("array `{0}` is too long for the index encoding")]
    ArrayTooLong(String),
    #[error("internal code generator error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSlot {
    pub name: String,
    pub kind: VarKind,
    /// Absolute address of cell 0.
    pub addr: u16,
    /// Bytes per cell: 1 for BOOL, 4 for INT.
    pub width: u8,
    pub cells: u32,
    pub init: i64,
}

impl VarSlot {
    pub fn bytes(&self) -> u32 {
        self.width as u32 * self.cells
    }

    pub fn cell_addr(&self, i: u32) -> u32 {
        self.addr as u32 + i * self.width as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataLayout {
    pub base: u16,
    /// Bytes used from `base` (variables, scratch, constant pool).
    pub size: u32,
    pub endian: Endian,
    pub vars: Vec<VarSlot>,
}

impl DataLayout {
    pub fn of_kind(&self, kind: VarKind) -> impl Iterator<Item = &VarSlot> {
        self.vars.iter().filter(move |v| v.kind == kind)
    }

    pub fn slot(&self, name: &str) -> Option<&VarSlot> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// Reads one cell from a data-region snapshot starting at `base`.
    pub fn read_cell(&self, data: &[u8], slot: &VarSlot, i: u32) -> i64 {
        let at = (slot.cell_addr(i) - self.base as u32) as usize;
        match slot.width {
            1 => data[at] as i64,
            _ => {
                let b = [data[at], data[at + 1], data[at + 2], data[at + 3]];
                match self.endian {
                    Endian::Little => i32::from_le_bytes(b) as i64,
                    Endian::Big => i32::from_be_bytes(b) as i64,
                }
            }
        }
    }

    pub fn write_cell(&self, data: &mut [u8], slot: &VarSlot, i: u32, value: i64) {
        let at = (slot.cell_addr(i) - self.base as u32) as usize;
        match slot.width {
            1 => data[at] = value as u8,
            _ => {
                let b = match self.endian {
                    Endian::Little => (value as i32).to_le_bytes(),
                    Endian::Big => (value as i32).to_be_bytes(),
                };
                data[at..at + 4].copy_from_slice(&b);
            }
        }
    }

    /// Flattened cell values of every variable of `kind`, declaration order.
    pub fn cells(&self, data: &[u8], kind: VarKind) -> Vec<i64> {
        self.of_kind(kind)
            .flat_map(|s| (0..s.cells).map(move |i| (s, i)))
            .map(|(s, i)| self.read_cell(data, s, i))
            .collect()
    }

    /// Overwrites every variable of `kind` from flattened cells.
    pub fn install(&self, data: &mut [u8], kind: VarKind, values: &[i64]) {
        let mut at = 0;
        let slots: Vec<&VarSlot> = self.of_kind(kind).collect();
        for s in slots {
            for i in 0..s.cells {
                self.write_cell(data, s, i, values[at]);
                at += 1;
            }
        }
    }
}

/// Places variables and reserved areas inside one data region.
pub struct LayoutBuilder {
    region: Region,
    id: RegionId,
    endian: Endian,
    next: u32,
    vars: Vec<VarSlot>,
}

impl LayoutBuilder {
    pub fn new(region: Region, id: RegionId, endian: Endian) -> Self {
        LayoutBuilder {
            region,
            id,
            endian,
            next: region.base as u32,
            vars: Vec::new(),
        }
    }

    /// Reserves `bytes` at `align`, returning the absolute address.
    pub fn reserve(&mut self, bytes: u64, align: u32) -> Result<u16, CodegenError> {
        let at = self.next.div_ceil(align) * align;
        let end = at as u64 + bytes;
        if end > self.region.end() as u64 {
            return Err(CodegenError::RegionOverflow {
                region: self.id,
                needed: end - self.region.base as u64,
                size: self.region.size,
            });
        }
        self.next = end as u32;
        Ok(at as u16)
    }

    pub fn var(&mut self, v: &VarInfo) -> Result<usize, CodegenError> {
        let width: u8 = match v.ty.elem() {
            ScalarType::Bool => 1,
            ScalarType::Int { .. } => 4,
        };
        let cells = v.ty.cells();
        let addr = self.reserve(width as u64 * cells as u64, width as u32)?;
        self.vars.push(VarSlot {
            name: v.name.clone(),
            kind: v.kind,
            addr,
            width,
            cells,
            init: v.init,
        });
        Ok(self.vars.len() - 1)
    }

    pub fn vars(&self) -> &[VarSlot] {
        &self.vars
    }

    pub fn finish(self) -> DataLayout {
        DataLayout {
            base: self.region.base,
            size: self.next - self.region.base as u32,
            endian: self.endian,
            vars: self.vars,
        }
    }
}

/// Initial bytes of the used part of a data region: every variable at its
/// init value, everything else zero.
pub fn initial_data(layout: &DataLayout) -> Vec<u8> {
    let mut data = vec![0u8; layout.size as usize];
    for slot in &layout.vars {
        for i in 0..slot.cells {
            layout.write_cell(&mut data, slot, i, slot.init);
        }
    }
    data
}

/// Canonical serialization: cells in declaration order, each as 32-bit
/// little-endian two's complement (booleans 0/1 as stored).
pub fn canonical_bytes(cells: &[i64]) -> Vec<u8> {
    cells
        .iter()
        .flat_map(|&v| (v as i32).to_le_bytes())
        .collect()
}

/// CRC-32 (poly 0x04C11DB7 reflected, init and final xor 0xFFFFFFFF).
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn digest(cells: &[i64]) -> u32 {
    crc32(&canonical_bytes(cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bitwise reference for the CRC parameters, kept independent of the
    /// table-driven crate implementation.
    fn crc32_bitwise(bytes: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &b in bytes {
            crc ^= b as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 {
                    (crc >> 1) ^ 0xEDB8_8320
                } else {
                    crc >> 1
                };
            }
        }
        crc ^ 0xFFFF_FFFF
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        for data in [&b""[..], b"a", b"duplex", &[0xA5, 0, 1, 2, 3, 255]] {
            assert_eq!(crc32(data), crc32_bitwise(data));
        }
    }

    #[test]
    fn canonical_form() {
        assert_eq!(canonical_bytes(&[1, -2]), vec![1, 0, 0, 0, 0xFE, 0xFF, 0xFF, 0xFF]);
    }

    #[test]
    fn endian_round_trip() {
        for endian in [Endian::Little, Endian::Big] {
            let layout = DataLayout {
                base: 0x100,
                size: 9,
                endian,
                vars: vec![
                    VarSlot {
                        name: "b".into(),
                        kind: VarKind::State,
                        addr: 0x100,
                        width: 1,
                        cells: 1,
                        init: 0,
                    },
                    VarSlot {
                        name: "n".into(),
                        kind: VarKind::State,
                        addr: 0x104,
                        width: 4,
                        cells: 2,
                        init: 0,
                    },
                ],
            };
            let mut data = vec![0u8; 12];
            layout.install(&mut data, VarKind::State, &[1, -7, 300]);
            assert_eq!(layout.cells(&data, VarKind::State), vec![1, -7, 300]);
            let first_word = &data[4..8];
            match endian {
                Endian::Little => assert_eq!(first_word, &(-7i32).to_le_bytes()),
                Endian::Big => assert_eq!(first_word, &(-7i32).to_be_bytes()),
            }
        }
    }
}
