pub mod codegen_a;
pub mod codegen_b;
pub mod duplex;
pub mod frontend;
pub mod harness;
pub mod hexfmt;
pub mod image;
pub mod mcu;
pub mod relay;
pub mod trace;
