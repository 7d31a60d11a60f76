//! Scenario files and the JSONL trace of a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::fault::{FaultSpec, InjectError};
use super::sim::Sim;
use crate::mcu::{Port, Program};
use crate::trace::TraceEvent;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputValue {
    Bool(bool),
    Int(i64),
}

impl InputValue {
    pub fn as_i64(self) -> i64 {
        match self {
            InputValue::Bool(b) => b as i64,
            InputValue::Int(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputChange {
    pub at: u64,
    /// `name` for scalars, `name(i)` for one array cell.
    pub set: BTreeMap<String, InputValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub inputs: Vec<InputChange>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub cycles: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario is not valid JSON: {0}")]
    Json(String),
    #[error("input change at cycle {at}: unknown input `{name}`")]
    UnknownInput { at: u64, name: String },
    #[error("input change at cycle {at}: `{name}` = {value} is outside {lo}..{hi}")]
    Range {
        at: u64,
        name: String,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("fault {index}: {error}")]
    Fault { index: usize, error: InjectError },
}

/// Resolves `name` or `name(i)` to a flat input cell index.
fn cell_of<'p>(ports: &'p [Port], key: &str) -> Option<(usize, &'p Port)> {
    let (name, index) = match key.strip_suffix(')').and_then(|k| k.split_once('(')) {
        Some((n, i)) => (n.trim(), Some(i.trim().parse::<u32>().ok()?)),
        None => (key.trim(), None),
    };
    let mut at = 0usize;
    for p in ports {
        if p.name == name {
            return match index {
                None if p.cells == 1 => Some((at, p)),
                Some(i) if i < p.cells => Some((at + i as usize, p)),
                _ => None,
            };
        }
        at += p.cells as usize;
    }
    None
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))
    }

    /// Checks every input name, value and fault target before cycle 0 and
    /// expands the timeline into one input vector per cycle. Inputs hold
    /// their last value; before any change they sit at their minimum.
    pub fn input_vectors(&self, program: &Program, cycles: u64) -> Result<Vec<Vec<i64>>, ScenarioError> {
        let mut changes: BTreeMap<u64, Vec<(usize, i64)>> = BTreeMap::new();
        for ch in &self.inputs {
            for (name, v) in &ch.set {
                let (cell, port) =
                    cell_of(&program.inputs, name).ok_or_else(|| ScenarioError::UnknownInput {
                        at: ch.at,
                        name: name.clone(),
                    })?;
                let value = v.as_i64();
                if value < port.lo || value > port.hi {
                    return Err(ScenarioError::Range {
                        at: ch.at,
                        name: name.clone(),
                        value,
                        lo: port.lo,
                        hi: port.hi,
                    });
                }
                changes.entry(ch.at).or_default().push((cell, value));
            }
        }
        for (index, f) in self.faults.iter().enumerate() {
            f.validate(program)
                .map_err(|error| ScenarioError::Fault { index, error })?;
        }
        let mut current: Vec<i64> = program
            .inputs
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.lo, p.cells as usize))
            .collect();
        let mut out = Vec::with_capacity(cycles as usize);
        for c in 0..cycles {
            if let Some(ch) = changes.get(&c) {
                for &(cell, v) in ch {
                    current[cell] = v;
                }
            }
            out.push(current.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: Value,
    pub events: Vec<TraceEvent>,
    /// Board outputs after every cycle.
    pub board: Vec<Vec<bool>>,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("events serialize"));
            s.push('\n');
        }
        s
    }
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes[..n].iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of everything a run depends on.
pub fn config_hash(sim: &Sim, scenario: &Scenario, cycles: u64) -> String {
    let blob = json!({
        "program": sim.program(),
        "code_a": hex::encode(&sim.program().image_a.code),
        "code_b": hex::encode(sim.program().image_b.code_bytes()),
        "config": sim.config,
        "scenario": scenario,
        "cycles": cycles,
    });
    let h = Sha256::digest(blob.to_string().as_bytes());
    hex_prefix(&h, 16)
}

/// Runs a scenario from cycle 0. `cycles` overrides the scenario's count.
pub fn run(mut sim: Sim, scenario: &Scenario, cycles: Option<u64>) -> Result<Trace, ScenarioError> {
    let cycles = cycles.unwrap_or(scenario.cycles);
    let vectors = scenario.input_vectors(sim.program(), cycles)?;
    for (index, f) in scenario.faults.iter().enumerate() {
        sim.inject(f.clone())
            .map_err(|error| ScenarioError::Fault { index, error })?;
    }
    let header = json!({
        "trace": "duplex",
        "version": TRACE_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": config_hash(&sim, scenario, cycles),
        "seed": scenario.seed,
        "cycles": cycles,
        "outputs": sim.program().outputs.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
    });
    let mut events = Vec::new();
    let mut board = Vec::with_capacity(cycles as usize);
    for v in &vectors {
        let step = sim.step(v);
        events.extend(step.events);
        board.push(step.board);
    }
    Ok(Trace {
        header,
        events,
        board,
    })
}
