//! Interlocking-style throughput benchmark.
//!
//! `n` Boolean equations are laid out as FOR loops over BOOL state
//! arrays: a loop of `L` iterations with one assignment in its body
//! evaluates `L` equations per cycle. Ten arrays of at most 1000 cells
//! keep even n = 50000 inside one 16 KiB data region. Each equation is
//! a random AND/OR/NOT network over input contacts and the previous
//! values of other arrays.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::artifacts::{Artifacts, BuildFailure, DEFAULT_RECORD_BYTES_B};
use super::fuzz::random_inputs;
use crate::duplex::{Sim, SimConfig};
use crate::frontend::{parse, Model};
use crate::mcu::map::MemoryMap;

pub const MAX_ARRAY: u64 = 1000;
pub const MAX_ARRAYS: u64 = 10;
pub const INPUT_CONTACTS: u64 = 64;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("equation count must be at least 1")]
    Empty,
    #[error(transparent)]
    Build(#[from] BuildFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub equations: u64,
    pub seed: u64,
    pub fingerprint: String,
    pub cycles: u64,
    pub seconds: f64,
    /// Full duplex cycles: four instances, frames and comparisons.
    pub cycles_per_sec: f64,
    pub equations_per_sec: f64,
    /// Equation evaluations summed over the four instances.
    pub evaluations_per_sec: f64,
    /// Anomaly events seen while timing; a healthy run has none.
    pub anomalies: usize,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "bench: {} equations, model {}\n\
             {} duplex cycles in {:.3} s: {:.1} cycles/s\n\
             {:.0} equations/s per instance, {:.0} evaluations/s across 4 instances\n\
             anomaly events: {}\n",
            self.equations,
            &self.fingerprint[..16],
            self.cycles,
            self.seconds,
            self.cycles_per_sec,
            self.equations_per_sec,
            self.evaluations_per_sec,
            self.anomalies
        )
    }
}

pub fn bench_source(n: u64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n.clamp(1, MAX_ARRAY);
    let loops = n.div_ceil(len);
    let arrays = loops.clamp(1, MAX_ARRAYS);
    let mut s = format!("MACHINE Bench{n}\nINPUTS\n  x : ARRAY {INPUT_CONTACTS} OF BOOL\nOUTPUTS\n  y : BOOL\nSTATE\n");
    let decls: Vec<String> = (0..arrays)
        .map(|a| format!("  r{a} : ARRAY {len} OF BOOL := FALSE"))
        .collect();
    s.push_str(&decls.join(",\n"));
    s.push_str("\nOPERATION user_logic\nBEGIN\n");
    let literal = |rng: &mut ChaCha8Rng| {
        let atom = if rng.gen_bool(0.5) {
            format!("x({})", rng.gen_range(0..INPUT_CONTACTS))
        } else {
            format!("r{}(k)", rng.gen_range(0..arrays))
        };
        if rng.gen_bool(0.3) {
            format!("(NOT {atom})")
        } else {
            atom
        }
    };
    let mut stmts = Vec::new();
    for j in 0..loops {
        let trip = if j + 1 == loops { n - j * len } else { len };
        let a = literal(&mut rng);
        let b = literal(&mut rng);
        let c = literal(&mut rng);
        let (op1, op2) = (
            *["AND", "OR"].choose(&mut rng).unwrap(),
            *["AND", "OR"].choose(&mut rng).unwrap(),
        );
        stmts.push(format!(
            "  FOR k FROM 0 TO {} DO\n    r{}(k) := (({a} {op1} {b}) {op2} {c})\n  END",
            trip - 1,
            j % arrays
        ));
    }
    stmts.push("  y := r0(0)".into());
    s.push_str(&stmts.join(";\n"));
    s.push_str("\nEND\n");
    s
}

pub fn bench_model(n: u64, seed: u64) -> Model {
    parse(&bench_source(n, seed)).expect("bench text is well formed")
}

/// Builds the bench model and times duplex cycles until both
/// `min_cycles` and `min_seconds` are reached.
pub fn bench(n: u64, seed: u64, min_cycles: u64, min_seconds: f64) -> Result<BenchReport, BenchError> {
    if n == 0 {
        return Err(BenchError::Empty);
    }
    let model = bench_model(n, seed);
    let art = Artifacts::build("bench", &model, MemoryMap::default(), DEFAULT_RECORD_BYTES_B)?;
    let program = Arc::new(art.program);
    let mut sim = Sim::new(program.clone(), SimConfig::with_budget(art.budget)).expect("default map loads");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBE4C);
    let inputs: Vec<Vec<i64>> = (0..64).map(|_| random_inputs(&mut rng, &program.inputs)).collect();
    // One untimed cycle settles allocations.
    sim.step(&inputs[0]);
    let start = Instant::now();
    let mut cycles = 0u64;
    let mut anomalies = 0usize;
    loop {
        let step = sim.step(&inputs[cycles as usize % inputs.len()]);
        anomalies += step.events.iter().filter(|e| e.kind.is_anomaly()).count();
        cycles += 1;
        let seconds = start.elapsed().as_secs_f64();
        if cycles >= min_cycles && seconds >= min_seconds {
            let cps = cycles as f64 / seconds;
            return Ok(BenchReport {
                equations: n,
                seed,
                fingerprint: art.fingerprint,
                cycles,
                seconds,
                cycles_per_sec: cps,
                equations_per_sec: cps * n as f64,
                evaluations_per_sec: 4.0 * cps * n as f64,
                anomalies,
            });
        }
    }
}
