//! Injectable faults. Memory bit flips force the bit to the inverse of its
//! value at injection time for every active cycle; a one-cycle fault is a
//! single upset, a permanent one a stuck cell that survives reloads.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::codegen_a::OpA;
use crate::codegen_b::OpB;
use crate::mcu::map::{RegionId, Region};
use crate::mcu::{McuId, Program, Vm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Duration {
    Cycles(u64),
    #[default]
    Permanent,
}

impl Duration {
    pub fn covers(self, at: u64, cycle: u64) -> bool {
        cycle >= at
            && match self {
                Duration::Permanent => true,
                Duration::Cycles(n) => cycle - at < n,
            }
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Duration::Cycles(n) => s.serialize_u64(*n),
            Duration::Permanent => s.serialize_str("permanent"),
        }
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(Duration::Cycles(n)),
            Repr::S(s) if s == "permanent" => Ok(Duration::Permanent),
            Repr::S(s) => Err(de::Error::custom(format!(
                "duration must be a cycle count or \"permanent\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultKind {
    CodeBitflip { mcu: McuId, vm: Vm, address: u16, bit: u8 },
    DataBitflip { mcu: McuId, vm: Vm, address: u16, bit: u8 },
    OpcodeSemantics { mcu: McuId, vm: Vm, opcode: String },
    /// Frames sent by `mcu` are lost.
    FrameDrop { mcu: McuId },
    /// Frames sent by `mcu` arrive with one bit inverted.
    FrameCorrupt {
        mcu: McuId,
        #[serde(default)]
        bit: u8,
    },
    /// Line `output` of `mcu` (power for MCU1, command for MCU2) is stuck.
    OutputStuck { mcu: McuId, output: usize, value: u8 },
    McuKill { mcu: McuId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(flatten)]
    pub kind: FaultKind,
    pub at_cycle: u64,
    #[serde(default)]
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("address {address:#06X} is outside {region} ({base:#06X}, {size} bytes)")]
    Address {
        address: u16,
        region: RegionId,
        base: u16,
        size: u32,
    },
    #[error("bit index {0} out of range")]
    Bit(u32),
    #[error("{vm} has no opcode {name}")]
    Opcode { vm: Vm, name: String },
    #[error("output index {index} out of range ({lines} lines)")]
    Output { index: usize, lines: usize },
    #[error("stuck value must be 0 or 1, got {0}")]
    StuckValue(u8),
}

pub fn code_region(vm: Vm) -> RegionId {
    match vm {
        Vm::A => RegionId::CodeA,
        Vm::B => RegionId::CodeB,
    }
}

pub fn data_region(vm: Vm) -> RegionId {
    match vm {
        Vm::A => RegionId::DataA,
        Vm::B => RegionId::DataB,
    }
}

/// Opcode index for the fault mask of `vm`.
pub fn opcode_index(vm: Vm, name: &str) -> Option<usize> {
    let upper = name.to_ascii_uppercase();
    match vm {
        Vm::A => OpA::from_mnemonic(&upper).map(OpA::index),
        Vm::B => OpB::from_mnemonic(&upper).map(OpB::index),
    }
}

fn check_address(r: Region, id: RegionId, address: u16) -> Result<(), InjectError> {
    if r.contains(address as u32) {
        Ok(())
    } else {
        Err(InjectError::Address {
            address,
            region: id,
            base: r.base,
            size: r.size,
        })
    }
}

impl FaultSpec {
    pub fn mcu(&self) -> McuId {
        match &self.kind {
            FaultKind::CodeBitflip { mcu, .. }
            | FaultKind::DataBitflip { mcu, .. }
            | FaultKind::OpcodeSemantics { mcu, .. }
            | FaultKind::FrameDrop { mcu }
            | FaultKind::FrameCorrupt { mcu, .. }
            | FaultKind::OutputStuck { mcu, .. }
            | FaultKind::McuKill { mcu } => *mcu,
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            FaultKind::CodeBitflip { .. } => "code_bitflip",
            FaultKind::DataBitflip { .. } => "data_bitflip",
            FaultKind::OpcodeSemantics { .. } => "opcode_semantics",
            FaultKind::FrameDrop { .. } => "frame_drop",
            FaultKind::FrameCorrupt { .. } => "frame_corrupt",
            FaultKind::OutputStuck { .. } => "output_stuck",
            FaultKind::McuKill { .. } => "mcu_kill",
        }
    }

    pub fn active(&self, cycle: u64) -> bool {
        self.duration.covers(self.at_cycle, cycle)
    }

    pub fn validate(&self, program: &Program) -> Result<(), InjectError> {
        let map = &program.map;
        match &self.kind {
            FaultKind::CodeBitflip { vm, address, bit, .. }
            | FaultKind::DataBitflip { vm, address, bit, .. } => {
                let id = match self.kind {
                    FaultKind::CodeBitflip { .. } => code_region(*vm),
                    _ => data_region(*vm),
                };
                check_address(map.region(id), id, *address)?;
                if *bit > 7 {
                    return Err(InjectError::Bit(*bit as u32));
                }
            }
            FaultKind::OpcodeSemantics { vm, opcode, .. } => {
                if opcode_index(*vm, opcode).is_none() {
                    return Err(InjectError::Opcode {
                        vm: *vm,
                        name: opcode.clone(),
                    });
                }
            }
            FaultKind::FrameCorrupt { bit, .. } => {
                if *bit as usize >= super::frame::FRAME_LEN * 8 {
                    return Err(InjectError::Bit(*bit as u32));
                }
            }
            FaultKind::OutputStuck { output, value, .. } => {
                let lines = program.output_lines();
                if *output >= lines {
                    return Err(InjectError::Output {
                        index: *output,
                        lines,
                    });
                }
                if *value > 1 {
                    return Err(InjectError::StuckValue(*value));
                }
            }
            FaultKind::FrameDrop { .. } | FaultKind::McuKill { .. } => {}
        }
        Ok(())
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_forms() {
        let s: FaultSpec = serde_json::from_str(
            r#"{"kind":"code_bitflip","mcu":"MCU1","vm":"A","address":16,"bit":3,"at_cycle":5,"duration":1}"#,
        )
        .unwrap();
        assert_eq!(s.duration, Duration::Cycles(1));
        assert_eq!(s.mcu(), McuId::Mcu1);
        let k: FaultSpec =
            serde_json::from_str(r#"{"kind":"mcu_kill","mcu":"MCU2","at_cycle":7}"#).unwrap();
        assert_eq!(k.duration, Duration::Permanent);
        let back: FaultSpec = serde_json::from_str(&k.to_string()).unwrap();
        assert_eq!(back, k);
        let o: FaultSpec = serde_json::from_str(
            r#"{"kind":"opcode_semantics","mcu":"MCU2","vm":"VM-B","opcode":"add","at_cycle":0,"duration":"permanent"}"#,
        )
        .unwrap();
        assert!(matches!(o.kind, FaultKind::OpcodeSemantics { vm: Vm::B, .. }));
        assert!(serde_json::from_str::<FaultSpec>(r#"{"kind":"meteor","at_cycle":0}"#).is_err());
        assert!(serde_json::from_str::<FaultSpec>(
            r#"{"kind":"mcu_kill","mcu":"MCU2","at_cycle":0,"duration":"soon"}"#
        )
        .is_err());
    }

    #[test]
    fn activity_window() {
        let d = Duration::Cycles(2);
        assert!(!d.covers(5, 4));
        assert!(d.covers(5, 5) && d.covers(5, 6));
        assert!(!d.covers(5, 7));
        assert!(Duration::Permanent.covers(5, 1_000_000));
    }

    #[test]
    fn opcode_names_resolve_per_machine() {
        assert_eq!(opcode_index(Vm::B, "ADD"), Some(OpB::Add.index()));
        assert_eq!(opcode_index(Vm::A, "RANGECHK"), Some(OpA::RangeChk.index()));
        assert_eq!(opcode_index(Vm::A, "TRAPZ"), None);
        assert_eq!(opcode_index(Vm::B, "RANGECHK"), None);
    }
}
