//! Instance I2 chain: typed model to register-machine assembly text, then
//! to fixed-width words, one word per instruction line.

pub mod asm;
pub mod emit;
pub mod isa;

pub use asm::{assemble_lines, disassemble, parse_asm, AsmError, AsmLine};
pub use emit::{assemble, emit_asm, AsmListing, ImageB, SCRATCH_SLOTS};
pub use isa::{InstrB, OpB};
