//! Instance I1 chain: typed model to linear IR, IR to stack bytecode.

pub mod emit;
pub mod ir;
pub mod isa;

pub use emit::{emit_a, ImageA, STACK_CAPACITY};
pub use ir::{lower, Ir, IrProgram};
pub use isa::{InstrA, OpA};

use crate::frontend::TypedModel;
use crate::image::CodegenError;
use crate::mcu::map::MemoryMap;

pub fn compile_a(model: &TypedModel, map: &MemoryMap) -> Result<ImageA, CodegenError> {
    emit_a(&lower(model, map)?, map)
}
