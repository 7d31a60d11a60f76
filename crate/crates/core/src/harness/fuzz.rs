//! Differential fuzzing: random models run in the duplex simulator and
//! compared cycle by cycle against the reference interpreter.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::artifacts::{Artifacts, DEFAULT_RECORD_BYTES_B};
use super::gen::{gen_program, GenConfig};
use crate::duplex::{Duration, FaultKind, FaultSpec, Sim, SimConfig};
use crate::frontend::{print_model, typecheck, Interpreter};
use crate::mcu::map::MemoryMap;
use crate::mcu::{Cells, McuId, Outcome, Port, Vm};

/// A deliberately broken toolchain, to show the campaign has teeth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mutation {
    /// VM-B's ADD returns one more than the sum on both controllers.
    BrokenAddB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FuzzConfig {
    pub programs: u64,
    pub cycles: u64,
    pub seed: u64,
    pub mutation: Option<Mutation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FuzzFailure {
    pub seed: u64,
    pub cycle: Option<u64>,
    /// Anomaly kinds the simulator raised on the failing cycle.
    pub events: Vec<String>,
    /// Some instance disagreed with the reference interpreter.
    pub mismatch: bool,
    pub reason: String,
    pub repro: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgramResult {
    pub seed: u64,
    /// The model contains at least one `+`.
    pub uses_add: bool,
    /// Cycles on which VM-A, VM-B and the interpreter agreed on both
    /// controllers.
    pub agreed_cycles: u64,
    pub anomalies: BTreeMap<String, u64>,
    pub failure: Option<FuzzFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FuzzReport {
    pub config: FuzzConfig,
    pub results: Vec<ProgramResult>,
}

/// Seed of the `i`th program of a campaign.
pub fn program_seed(campaign: u64, i: u64) -> u64 {
    campaign.wrapping_add(i)
}

pub fn repro_command(seed: u64, cycles: u64, mutation: Option<Mutation>) -> String {
    let extra = match mutation {
        Some(Mutation::BrokenAddB) => " --break-add",
        None => "",
    };
    format!("duplex fuzz --programs 1 --cycles {cycles} --seed {seed}{extra}")
}

/// Uniform values within each input cell's declared range.
pub fn random_inputs(rng: &mut impl Rng, ports: &[Port]) -> Vec<i64> {
    ports
        .iter()
        .flat_map(|p| (0..p.cells).map(|_| rng.gen_range(p.lo..=p.hi)).collect::<Vec<_>>())
        .collect()
}

/// Input stream of a program seed, shared with the fault campaigns.
pub fn input_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x1A9_0C7E)
}

fn describe(o: &Outcome) -> String {
    match o {
        Ok(c) => format!("outputs {:?} state {:?}", c.outputs, c.state),
        Err(t) => format!("trap {t}"),
    }
}

pub fn run_program(seed: u64, cycles: u64, mutation: Option<Mutation>) -> ProgramResult {
    let model = gen_program(&GenConfig::fuzz(seed));
    let uses_add = print_model(&model).contains(" + ");
    let mut result = ProgramResult {
        seed,
        uses_add,
        agreed_cycles: 0,
        anomalies: BTreeMap::new(),
        failure: None,
    };
    let fail = |cycle: Option<u64>, reason: String| FuzzFailure {
        seed,
        cycle,
        events: Vec::new(),
        mismatch: false,
        reason,
        repro: repro_command(seed, cycles, mutation),
    };
    let typed = match typecheck(&model) {
        Ok(t) => t,
        Err(d) => {
            result.failure = Some(fail(None, format!("generated model rejected: {d:?}")));
            return result;
        }
    };
    let art = match Artifacts::build("generated", &model, MemoryMap::default(), DEFAULT_RECORD_BYTES_B) {
        Ok(a) => a,
        Err(e) => {
            result.failure = Some(fail(None, format!("build failed: {e}")));
            return result;
        }
    };
    let mut config = SimConfig::with_budget(art.budget);
    if mutation.is_some() {
        // The self-test would flag the broken opcode on its own; switch
        // it off so only the differential comparison is measured.
        config.mcu.selftest_k = 0;
    }
    let program = Arc::new(art.program);
    let mut sim = Sim::new(program.clone(), config).expect("default map loads");
    if let Some(Mutation::BrokenAddB) = mutation {
        for mcu in [McuId::Mcu1, McuId::Mcu2] {
            sim.inject(FaultSpec {
                kind: FaultKind::OpcodeSemantics {
                    mcu,
                    vm: Vm::B,
                    opcode: "ADD".into(),
                },
                at_cycle: 0,
                duration: Duration::Permanent,
            })
            .expect("ADD exists");
        }
    }
    let mut interp = Interpreter::new(&typed);
    let mut rng = input_rng(seed);
    for cycle in 0..cycles {
        let inputs = random_inputs(&mut rng, &program.inputs);
        if let Err(t) = interp.cycle(&inputs) {
            result.failure = Some(fail(Some(cycle), format!("reference interpreter trapped: {t}")));
            return result;
        }
        let reference = Cells {
            outputs: interp.outputs(),
            state: interp.state(),
        };
        let step = sim.step(&inputs);
        let mut first_anomaly = None;
        let mut kinds = Vec::new();
        for e in step.events.iter().filter(|e| e.kind.is_anomaly()) {
            *result.anomalies.entry(e.kind.as_str().to_string()).or_default() += 1;
            first_anomaly.get_or_insert_with(|| format!("{} on {}", e.kind.as_str(), e.source));
            kinds.push(e.kind.as_str().to_string());
        }
        let mut disagreements = Vec::new();
        for id in [McuId::Mcu1, McuId::Mcu2] {
            match &sim.mcu(id).last {
                Some((a, b)) => {
                    for (vm, o) in [("VM-A", a), ("VM-B", b)] {
                        if o.as_ref() != Ok(&reference) {
                            disagreements.push(format!("{id} {vm}: {}", describe(o)));
                        }
                    }
                }
                None => disagreements.push(format!("{id} did not run")),
            }
        }
        if !disagreements.is_empty() || first_anomaly.is_some() {
            let mut reason = String::new();
            if let Some(a) = first_anomaly {
                let _ = write!(reason, "{a}; ");
            }
            if disagreements.is_empty() {
                reason.push_str("all instances agree with the reference");
            } else {
                let _ = write!(
                    reason,
                    "reference {}; {}",
                    describe(&Ok(reference)),
                    disagreements.join("; ")
                );
            }
            result.failure = Some(FuzzFailure {
                events: kinds,
                mismatch: !disagreements.is_empty(),
                ..fail(Some(cycle), reason)
            });
            return result;
        }
        result.agreed_cycles += 1;
    }
    result
}

pub fn fuzz(config: FuzzConfig) -> FuzzReport {
    let mut results: Vec<ProgramResult> = (0..config.programs)
        .into_par_iter()
        .map(|i| run_program(program_seed(config.seed, i), config.cycles, config.mutation))
        .collect();
    results.sort_by_key(|r| r.seed);
    FuzzReport { config, results }
}

impl FuzzReport {
    pub fn failures(&self) -> impl Iterator<Item = &FuzzFailure> {
        self.results.iter().filter_map(|r| r.failure.as_ref())
    }

    pub fn anomalies(&self) -> BTreeMap<String, u64> {
        let mut total = BTreeMap::new();
        for r in &self.results {
            for (k, v) in &r.anomalies {
                *total.entry(k.clone()).or_default() += v;
            }
        }
        total
    }

    pub fn agreed_cycles(&self) -> u64 {
        self.results.iter().map(|r| r.agreed_cycles).sum()
    }

    pub fn render(&self) -> String {
        let c = &self.config;
        let failures: Vec<&FuzzFailure> = self.failures().collect();
        let mut s = format!(
            "fuzz: {} programs x {} cycles from seed {}{}\n",
            c.programs,
            c.cycles,
            c.seed,
            if c.mutation.is_some() { " (VM-B ADD broken)" } else { "" }
        );
        let _ = writeln!(
            s,
            "three-way agreement on {} of {} program-cycles",
            self.agreed_cycles(),
            c.programs * c.cycles
        );
        let anomalies = self.anomalies();
        if anomalies.is_empty() {
            s.push_str("anomaly events: none\n");
        } else {
            let list: Vec<String> = anomalies.iter().map(|(k, v)| format!("{k} {v}")).collect();
            let _ = writeln!(s, "anomaly events: {}", list.join(", "));
        }
        let _ = writeln!(s, "failures: {}", failures.len());
        for f in failures {
            let at = f.cycle.map(|c| format!(" cycle {c}")).unwrap_or_default();
            let _ = writeln!(s, "  seed {}{at}: {}\n    reproduce: {}", f.seed, f.reason, f.repro);
        }
        s
    }
}
