//! The four memory regions of one controller and their load-time checks.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const ADDRESS_SPACE: u32 = 0x1_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionId {
    CodeA,
    CodeB,
    DataA,
    DataB,
}

impl RegionId {
    pub const ALL: [RegionId; 4] = [
        RegionId::CodeA,
        RegionId::CodeB,
        RegionId::DataA,
        RegionId::DataB,
    ];
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionId::CodeA => "CODE_A",
            RegionId::CodeB => "CODE_B",
            RegionId::DataA => "DATA_A",
            RegionId::DataB => "DATA_B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub base: u16,
    pub size: u32,
}

impl Region {
    pub const fn new(base: u16, size: u32) -> Self {
        Region { base, size }
    }

    pub fn end(&self) -> u32 {
        self.base as u32 + self.size
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base as u32 && addr < self.end()
    }

    /// True when `[addr, addr + len)` lies inside the region.
    pub fn contains_range(&self, addr: u32, len: u32) -> bool {
        addr >= self.base as u32 && addr as u64 + len as u64 <= self.end() as u64
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        (self.base as u32) < other.end() && (other.base as u32) < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MapError {
    #[error("region {0} is empty")]
    Empty(RegionId),
    #[error("region {region} ends at {end:#X}, beyond the address space")]
    OutOfRange { region: RegionId, end: u32 },
    #[error("regions {0} and {1} overlap")]
    Overlap(RegionId, RegionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub struct MemoryMap {
    pub code_a: Region,
    pub code_b: Region,
    pub data_a: Region,
    pub data_b: Region,
}

impl Default for MemoryMap {
    /// Four 16 KiB quarters of the address space.
    fn default() -> Self {
        MemoryMap {
            code_a: Region::new(0x0000, 0x4000),
            code_b: Region::new(0x4000, 0x4000),
            data_a: Region::new(0x8000, 0x4000),
            data_b: Region::new(0xC000, 0x4000),
        }
    }
}

impl MemoryMap {
    pub fn region(&self, id: RegionId) -> Region {
        match id {
            RegionId::CodeA => self.code_a,
            RegionId::CodeB => self.code_b,
            RegionId::DataA => self.data_a,
            RegionId::DataB => self.data_b,
        }
    }

    /// Every region non-empty, inside the address space, pairwise disjoint.
    pub fn validate(&self) -> Result<(), MapError> {
        self.validate_within(ADDRESS_SPACE)
    }

    /// Same checks against a smaller address space of `space` bytes.
    pub fn validate_within(&self, space: u32) -> Result<(), MapError> {
        for id in RegionId::ALL {
            let r = self.region(id);
            if r.size == 0 {
                return Err(MapError::Empty(id));
            }
            if r.end() > space {
                return Err(MapError::OutOfRange {
                    region: id,
                    end: r.end(),
                });
            }
        }
        for (i, &a) in RegionId::ALL.iter().enumerate() {
            for &b in &RegionId::ALL[i + 1..] {
                if self.region(a).overlaps(&self.region(b)) {
                    return Err(MapError::Overlap(a, b));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(regions: [(u16, u32); 4]) -> MemoryMap {
        MemoryMap {
            code_a: Region::new(regions[0].0, regions[0].1),
            code_b: Region::new(regions[1].0, regions[1].1),
            data_a: Region::new(regions[2].0, regions[2].1),
            data_b: Region::new(regions[3].0, regions[3].1),
        }
    }

    #[test]
    fn default_is_valid() {
        assert_eq!(MemoryMap::default().validate(), Ok(()));
    }

    #[test]
    fn load_examples() {
        let ok = map([(0, 4096), (4096, 4096), (8192, 4096), (12288, 4096)]);
        assert_eq!(ok.validate(), Ok(()));
        let overlap = map([(0, 4096), (4095, 4096), (8192, 4096), (12288, 4096)]);
        assert_eq!(
            overlap.validate(),
            Err(MapError::Overlap(RegionId::CodeA, RegionId::CodeB))
        );
        let out = map([(0, 4096), (4096, 4096), (8192, 4096), (65000, 1000)]);
        assert_eq!(
            out.validate(),
            Err(MapError::OutOfRange {
                region: RegionId::DataB,
                end: 66000
            })
        );
    }

    #[test]
    fn touching_regions_are_disjoint() {
        let a = Region::new(0x100, 0x100);
        assert!(!a.overlaps(&Region::new(0x200, 0x10)));
        assert!(a.overlaps(&Region::new(0x1FF, 0x10)));
        assert!(a.contains_range(0x1FC, 4));
        assert!(!a.contains_range(0x1FD, 4));
    }
}
