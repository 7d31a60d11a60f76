//! Inter-controller message: 20 bytes, little-endian, CRC-32 trailer.
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 1    | sync 0xA5    |
//! | 1      | 2    | seq          |
//! | 3      | 4    | cycle        |
//! | 7      | 4    | out_digest   |
//! | 11     | 4    | state_digest |
//! | 15     | 1    | status       |
//! | 16     | 4    | crc          |

use crate::image::crc32;

pub const SYNC: u8 = 0xA5;
pub const FRAME_LEN: usize = 20;

pub const ALIVE: u8 = 0b001;
pub const REBOOTING: u8 = 0b010;
pub const RESYNC_REQUEST: u8 = 0b100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub seq: u16,
    pub cycle: u32,
    pub out_digest: u32,
    pub state_digest: u32,
    pub status: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("frame is {0} bytes, expected 20")]
    Length(usize),
    #[error("bad sync byte {0:#04X}")]
    Sync(u8),
    #[error("crc mismatch")]
    Crc,
}

impl Frame {
    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut b = [0u8; FRAME_LEN];
        b[0] = SYNC;
        b[1..3].copy_from_slice(&self.seq.to_le_bytes());
        b[3..7].copy_from_slice(&self.cycle.to_le_bytes());
        b[7..11].copy_from_slice(&self.out_digest.to_le_bytes());
        b[11..15].copy_from_slice(&self.state_digest.to_le_bytes());
        b[15] = self.status;
        let crc = crc32(&b[..16]);
        b[16..].copy_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Frame, FrameError> {
        if b.len() != FRAME_LEN {
            return Err(FrameError::Length(b.len()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        if crc32(&b[..16]) != u32_at(16) {
            return Err(FrameError::Crc);
        }
        if b[0] != SYNC {
            return Err(FrameError::Sync(b[0]));
        }
        Ok(Frame {
            seq: u16::from_le_bytes([b[1], b[2]]),
            cycle: u32_at(3),
            out_digest: u32_at(7),
            state_digest: u32_at(11),
            status: b[15],
        })
    }

    /// Running with a completed, locally agreed cycle.
    pub fn carries_digests(&self) -> bool {
        self.status == ALIVE
    }
}
