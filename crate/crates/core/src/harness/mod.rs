//! Command implementations behind the CLI: model generation, builds,
//! differential fuzzing, the throughput bench and invariant checks.

pub mod artifacts;
pub mod bench;
pub mod check;
pub mod fuzz;
pub mod gen;

pub use artifacts::{fingerprint, load_dir, Artifacts, BuildFailure, LoadFailure, Loaded};
pub use bench::{bench, bench_model, bench_source, BenchError, BenchReport};
pub use check::{check_report, DEFAULT_MAX_STATES};
pub use fuzz::{fuzz, run_program, FuzzConfig, FuzzFailure, FuzzReport, Mutation};
pub use gen::{gen_program, gen_source, GenConfig, Weights};
