//! One simulated controller and its fixed safety sequencer: self-test
//! slice, both instances in sequence, local comparison, digests, output
//! readback, reboot and halt. Nothing here is generated from the model.

pub mod map;
pub mod selftest;
pub mod vm_a;
pub mod vm_b;

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::codegen_a::{compile_a, ImageA};
use crate::codegen_b::{assemble, emit_asm, AsmError, ImageB};
use crate::frontend::ast::ScalarType;
use crate::frontend::typeck::VarInfo;
use crate::frontend::{TypedModel, VarKind};
use crate::image::{digest, CodegenError, DataLayout};
use crate::trace::{EventKind, Source, TraceEvent};
use map::{MapError, MemoryMap, Region, RegionId};
use selftest::{Cursor, Oracle, SelfTestFail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vm {
    #[serde(rename = "A", alias = "VM-A")]
    A,
    #[serde(rename = "B", alias = "VM-B")]
    B,
}

impl fmt::Display for Vm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Vm::A => "VM-A",
            Vm::B => "VM-B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum McuId {
    #[serde(rename = "MCU1")]
    Mcu1,
    #[serde(rename = "MCU2")]
    Mcu2,
}

impl McuId {
    pub fn source(self) -> Source {
        match self {
            McuId::Mcu1 => Source::Mcu1,
            McuId::Mcu2 => Source::Mcu2,
        }
    }

    pub fn partner(self) -> McuId {
        match self {
            McuId::Mcu1 => McuId::Mcu2,
            McuId::Mcu2 => McuId::Mcu1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for McuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.source().fmt(f)
    }
}

/// The two instances of the user function hosted by every controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InstanceId {
    I1,
    I2,
}

impl InstanceId {
    pub fn vm(self) -> Vm {
        match self {
            InstanceId::I1 => Vm::A,
            InstanceId::I2 => Vm::B,
        }
    }
}

/// Opcode fault mask, one bit per opcode index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Faults(pub u64);

impl Faults {
    pub const NONE: Faults = Faults(0);

    pub fn opcode(index: usize) -> Faults {
        Faults(1 << index)
    }

    #[inline]
    pub fn hit(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub steps: u64,
    /// Operand-stack high-water mark (VM-A only).
    pub high_water: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "trap", rename_all = "snake_case")]
pub enum VmTrap {
    #[error("memory access outside the data region at {addr:#06X}")]
    MemoryFault { addr: u32 },
    #[error("input port {port} does not exist")]
    InputPort { port: u32 },
    #[error("operand stack overflow")]
    StackOverflow,
    #[error("operand stack underflow")]
    StackUnderflow,
    #[error("program counter {pc:#X} outside the code region")]
    PcOutOfRange { pc: u32 },
    #[error("undecodable instruction at {pc:#X}")]
    Decode { pc: u32 },
    #[error("arithmetic overflow")]
    Overflow,
    #[error("division by zero")]
    DivByZero,
    #[error("range violation: {value}")]
    Range { value: i64 },
    #[error("index {index} out of bounds")]
    Bounds { index: i64 },
    #[error("instruction budget exhausted after {steps} steps")]
    Budget { steps: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Running,
    /// `remaining` counts down to 0, where the controller waits for resync.
    Rebooting { remaining: u32 },
    Halted,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Running => "RUNNING",
            Mode::Rebooting { .. } => "REBOOTING",
            Mode::Halted => "HALTED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McuConfig {
    /// Reboot duration R in cycles.
    pub reboot_cycles: u32,
    /// Reboots tolerated inside one window before the controller halts.
    pub storm_limit: usize,
    pub storm_window: u64,
    /// Opcodes self-tested per machine per cycle; 0 disables the slice.
    pub selftest_k: usize,
    /// Steps each instance may take per cycle.
    pub budget: u64,
}

impl McuConfig {
    pub fn with_budget(budget: u64) -> Self {
        McuConfig {
            reboot_cycles: 5,
            storm_limit: 3,
            storm_window: 100,
            selftest_k: 4,
            budget,
        }
    }
}

/// One input or output variable as seen from outside the controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub cells: u32,
    pub lo: i64,
    pub hi: i64,
}

impl Port {
    fn of(v: &VarInfo) -> Port {
        let (lo, hi) = match v.ty.elem() {
            ScalarType::Bool => (0, 1),
            ScalarType::Int { lo, hi } => (lo, hi),
        };
        Port {
            name: v.name.clone(),
            cells: v.ty.cells(),
            lo,
            hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Asm(#[from] AsmError),
}

/// Both images, the map they were built for, and the model's interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub image_a: ImageA,
    pub image_b: ImageB,
    pub map: MemoryMap,
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
}

impl Program {
    /// Runs both code generators on one model.
    pub fn build(model: &TypedModel, map: MemoryMap) -> Result<Program, BuildError> {
        let image_a = compile_a(model, &map)?;
        let listing = emit_asm(model, &map)?;
        let image_b = assemble(&listing)?;
        Ok(Program {
            image_a,
            image_b,
            map,
            inputs: model.inputs.iter().map(|&v| Port::of(model.var(v))).collect(),
            outputs: model.outputs.iter().map(|&v| Port::of(model.var(v))).collect(),
        })
    }

    pub fn output_lines(&self) -> usize {
        self.image_a
            .layout
            .of_kind(VarKind::Output)
            .map(|s| s.cells as usize)
            .sum()
    }

    pub fn input_cells(&self) -> usize {
        self.image_a.input_cells as usize
    }

    pub fn state_cells(&self) -> usize {
        self.image_a
            .layout
            .of_kind(VarKind::State)
            .map(|s| s.cells as usize)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{region} image is {needed} bytes, region holds {size}")]
    ImageTooLarge {
        region: RegionId,
        needed: usize,
        size: u32,
    },
    #[error("{region} image was built for base {built:#06X}, map places it at {mapped:#06X}")]
    BaseMismatch {
        region: RegionId,
        built: u16,
        mapped: u16,
    },
}

/// Outputs and state of one instance after a completed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cells {
    pub outputs: Vec<i64>,
    pub state: Vec<i64>,
}

pub type Outcome = Result<Cells, VmTrap>;

#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    /// One value per output cell; all false unless `drive` is set.
    pub lines: Vec<bool>,
    pub drive: bool,
    pub out_digest: u32,
    pub state_digest: u32,
    /// Both instances completed and agreed.
    pub agreed: bool,
    pub events: Vec<TraceEvent>,
}

fn oracle() -> &'static Oracle {
    static ORACLE: OnceLock<Oracle> = OnceLock::new();
    ORACLE.get_or_init(Oracle::new)
}

#[derive(Debug, Clone)]
pub struct McuState {
    pub id: McuId,
    program: Arc<Program>,
    pub config: McuConfig,
    code_a: Vec<u8>,
    code_b: Vec<u8>,
    data_a: Vec<u8>,
    data_b: Vec<u8>,
    pub mode: Mode,
    pub reboot_count: u64,
    reboot_starts: VecDeque<u64>,
    pub cursor: Cursor,
    pub faults_a: Faults,
    pub faults_b: Faults,
    /// Per-instance results of the most recent executed cycle.
    pub last: Option<(Outcome, Outcome)>,
    pub high_water: u32,
}

fn region_image(region: Region, id: RegionId, bytes: &[u8]) -> Result<Vec<u8>, LoadError> {
    if bytes.len() > region.size as usize {
        return Err(LoadError::ImageTooLarge {
            region: id,
            needed: bytes.len(),
            size: region.size,
        });
    }
    let mut mem = vec![0u8; region.size as usize];
    mem[..bytes.len()].copy_from_slice(bytes);
    Ok(mem)
}

impl McuState {
    pub fn load(
        id: McuId,
        program: Arc<Program>,
        config: McuConfig,
    ) -> Result<McuState, LoadError> {
        let map = program.map;
        map.validate()?;
        let bases = [
            (RegionId::CodeA, program.image_a.code_base),
            (RegionId::CodeB, program.image_b.code_base),
            (RegionId::DataA, program.image_a.layout.base),
            (RegionId::DataB, program.image_b.layout.base),
        ];
        for (region, built) in bases {
            let mapped = map.region(region).base;
            if built != mapped {
                return Err(LoadError::BaseMismatch {
                    region,
                    built,
                    mapped,
                });
            }
        }
        let (code_a, code_b, data_a, data_b) = Self::fresh_memory(&program)?;
        Ok(McuState {
            id,
            program,
            config,
            code_a,
            code_b,
            data_a,
            data_b,
            mode: Mode::Running,
            reboot_count: 0,
            reboot_starts: VecDeque::new(),
            cursor: Cursor::default(),
            faults_a: Faults::NONE,
            faults_b: Faults::NONE,
            last: None,
            high_water: 0,
        })
    }

    #[allow(clippy::type_complexity)]
    fn fresh_memory(p: &Program) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>), LoadError> {
        Ok((
            region_image(p.map.code_a, RegionId::CodeA, &p.image_a.code)?,
            region_image(p.map.code_b, RegionId::CodeB, &p.image_b.code_bytes())?,
            region_image(p.map.data_a, RegionId::DataA, &p.image_a.data_init)?,
            region_image(p.map.data_b, RegionId::DataB, &p.image_b.data_init)?,
        ))
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn source(&self) -> Source {
        self.id.source()
    }

    fn event(&self, cycle: u64, kind: EventKind) -> TraceEvent {
        TraceEvent::new(cycle, self.source(), kind)
    }

    /// Raw contents of one region, for fault injection and inspection.
    pub fn region_mut(&mut self, id: RegionId) -> &mut [u8] {
        match id {
            RegionId::CodeA => &mut self.code_a,
            RegionId::CodeB => &mut self.code_b,
            RegionId::DataA => &mut self.data_a,
            RegionId::DataB => &mut self.data_b,
        }
    }

    pub fn region(&self, id: RegionId) -> &[u8] {
        match id {
            RegionId::CodeA => &self.code_a,
            RegionId::CodeB => &self.code_b,
            RegionId::DataA => &self.data_a,
            RegionId::DataB => &self.data_b,
        }
    }

    fn layout(&self, vm: Vm) -> &DataLayout {
        match vm {
            Vm::A => &self.program.image_a.layout,
            Vm::B => &self.program.image_b.layout,
        }
    }

    /// State cells as seen by one instance.
    pub fn state_cells(&self, vm: Vm) -> Vec<i64> {
        let data = match vm {
            Vm::A => &self.data_a,
            Vm::B => &self.data_b,
        };
        self.layout(vm).cells(data, VarKind::State)
    }

    pub fn self_test_slice(&mut self, k: usize) -> Result<(), SelfTestFail> {
        self.cursor.slice(oracle(), k, self.faults_a, self.faults_b)
    }

    fn run_a(&mut self, inputs: &[i64]) -> Outcome {
        let p = &self.program.image_a;
        let mut mem = vm_a::MemA {
            code: &self.code_a,
            code_base: p.code_base,
            data: &mut self.data_a,
            data_base: p.layout.base,
            inputs,
        };
        let stats = vm_a::run(&mut mem, p.entry, self.config.budget, self.faults_a)?;
        self.high_water = self.high_water.max(stats.high_water);
        Ok(Cells {
            outputs: p.layout.cells(&self.data_a, VarKind::Output),
            state: p.layout.cells(&self.data_a, VarKind::State),
        })
    }

    fn run_b(&mut self, inputs: &[i64]) -> Outcome {
        let p = &self.program.image_b;
        p.layout.install(&mut self.data_b, VarKind::Input, inputs);
        let mut mem = vm_b::MemB {
            code: &self.code_b,
            data: &mut self.data_b,
            data_base: p.layout.base,
        };
        vm_b::run(&mut mem, self.config.budget, self.faults_b)?;
        Ok(Cells {
            outputs: p.layout.cells(&self.data_b, VarKind::Output),
            state: p.layout.cells(&self.data_b, VarKind::State),
        })
    }

    fn idle(&self, events: Vec<TraceEvent>) -> CycleResult {
        CycleResult {
            lines: vec![false; self.program.output_lines()],
            drive: false,
            out_digest: 0,
            state_digest: 0,
            agreed: false,
            events,
        }
    }

    fn halt(&mut self, cycle: u64, reason: &str, events: &mut Vec<TraceEvent>) {
        self.mode = Mode::Halted;
        events.push(self.event(cycle, EventKind::Halt).with("reason", reason));
    }

    /// Starts a reboot unless the storm threshold is reached, in which case
    /// the controller halts instead.
    pub fn enter_reboot(&mut self, cycle: u64, reason: &str, events: &mut Vec<TraceEvent>) {
        let window = self.config.storm_window;
        while self
            .reboot_starts
            .front()
            .is_some_and(|&s| cycle.saturating_sub(s) >= window)
        {
            self.reboot_starts.pop_front();
        }
        if self.reboot_starts.len() >= self.config.storm_limit {
            self.halt(cycle, "reboot storm", events);
            return;
        }
        self.reboot_starts.push_back(cycle);
        self.reboot_count += 1;
        self.mode = Mode::Rebooting {
            remaining: self.config.reboot_cycles,
        };
        events.push(
            self.event(cycle, EventKind::RebootStart)
                .with("reason", reason)
                .with("reboot_count", self.reboot_count),
        );
    }

    /// The sequencer for one cycle in RUNNING mode.
    pub fn run_cycle(&mut self, cycle: u64, inputs: &[i64]) -> CycleResult {
        let mut events = Vec::new();
        if self.mode != Mode::Running {
            return self.idle(events);
        }
        assert_eq!(inputs.len(), self.program.input_cells(), "input vector length");

        if self.config.selftest_k > 0 {
            if let Err(fail) = self.self_test_slice(self.config.selftest_k) {
                events.push(
                    self.event(cycle, EventKind::SelftestFail)
                        .with("opcode", fail.opcode)
                        .with("vm", fail.vm.to_string()),
                );
                self.halt(cycle, "self-test failure", &mut events);
                self.last = None;
                return self.idle(events);
            }
        }

        let a = self.run_a(inputs);
        let b = self.run_b(inputs);
        let verdict = match (&a, &b) {
            (Ok(x), Ok(y)) if x == y => Ok(()),
            (Ok(x), Ok(y)) => Err(self
                .event(cycle, EventKind::LocalDivergence)
                .with("reason", "mismatch")
                .with("out_digest_a", digest(&x.outputs))
                .with("out_digest_b", digest(&y.outputs))
                .with("state_digest_a", digest(&x.state))
                .with("state_digest_b", digest(&y.state))),
            _ => {
                let mut e = self
                    .event(cycle, EventKind::LocalDivergence)
                    .with("reason", "trap");
                for (vm, r) in [(Vm::A, &a), (Vm::B, &b)] {
                    if let Err(t) = r {
                        e = e.with(&format!("trap_{}", vm.to_string().to_lowercase()), t.to_string());
                    }
                }
                Err(e)
            }
        };
        let result = match verdict {
            Ok(()) => {
                let cells = a.as_ref().unwrap();
                let out_digest = digest(&cells.outputs);
                let state_digest = digest(&cells.state);
                events.push(
                    self.event(cycle, EventKind::CycleOk)
                        .with("out_digest", out_digest)
                        .with("state_digest", state_digest),
                );
                CycleResult {
                    lines: cells.outputs.iter().map(|&v| v != 0).collect(),
                    drive: true,
                    out_digest,
                    state_digest,
                    agreed: true,
                    events,
                }
            }
            Err(e) => {
                events.push(e);
                self.enter_reboot(cycle, "local divergence", &mut events);
                self.idle(events)
            }
        };
        self.last = Some((a, b));
        result
    }

    /// Compares this controller's sensed lines with what it commanded.
    pub fn readback_check(
        &mut self,
        cycle: u64,
        driven: &[bool],
        sensed: &[bool],
    ) -> (Result<(), usize>, Vec<TraceEvent>) {
        let mut events = Vec::new();
        match driven.iter().zip(sensed).position(|(d, s)| d != s) {
            None => (Ok(()), events),
            Some(i) => {
                events.push(
                    self.event(cycle, EventKind::ReadbackFail)
                        .with("output", i)
                        .with("driven", driven[i])
                        .with("sensed", sensed[i]),
                );
                self.halt(cycle, "output readback failure", &mut events);
                (Err(i), events)
            }
        }
    }

    /// One cycle of reboot countdown. The first cycle runs a full power-on
    /// self-test; the last reloads both images. Returns true once the
    /// controller waits for state resync.
    pub fn reboot_step(&mut self, cycle: u64) -> (bool, Vec<TraceEvent>) {
        let mut events = Vec::new();
        let Mode::Rebooting { remaining } = self.mode else {
            return (false, events);
        };
        if remaining == 0 {
            return (true, events);
        }
        if remaining == self.config.reboot_cycles {
            if let Err(fail) = selftest::full_pass(oracle(), self.faults_a, self.faults_b) {
                events.push(
                    self.event(cycle, EventKind::SelftestFail)
                        .with("opcode", fail.opcode)
                        .with("vm", fail.vm.to_string())
                        .with("phase", "power-on"),
                );
                self.halt(cycle, "self-test failure", &mut events);
                return (false, events);
            }
        }
        let remaining = remaining - 1;
        self.mode = Mode::Rebooting { remaining };
        if remaining == 0 {
            let (ca, cb, da, db) =
                Self::fresh_memory(&self.program).expect("images were checked at load");
            self.code_a = ca;
            self.code_b = cb;
            self.data_a = da;
            self.data_b = db;
            self.cursor = Cursor::default();
            self.last = None;
        }
        (remaining == 0, events)
    }

    pub fn awaiting_resync(&self) -> bool {
        self.mode == Mode::Rebooting { remaining: 0 }
    }

    /// Installs the partner's canonical state into both data regions and
    /// resumes.
    pub fn install_state(&mut self, cycle: u64, state: &[i64]) -> Vec<TraceEvent> {
        let la = &self.program.image_a.layout;
        let lb = &self.program.image_b.layout;
        la.install(&mut self.data_a, VarKind::State, state);
        lb.install(&mut self.data_b, VarKind::State, state);
        self.mode = Mode::Running;
        vec![
            self.event(cycle, EventKind::Resync)
                .with("result", "ok")
                .with("cells", state.len()),
            self.event(cycle, EventKind::RebootDone),
        ]
    }

    /// Partner could not serve a resync: start another reboot.
    pub fn resync_refused(&mut self, cycle: u64) -> Vec<TraceEvent> {
        let mut events = vec![self.event(cycle, EventKind::Resync).with("result", "refused")];
        self.enter_reboot(cycle, "resync refused", &mut events);
        events
    }

    /// Power-off: the controller stops without events of its own.
    pub fn power_on(&mut self, cycle: u64) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        if self.mode != Mode::Halted {
            self.enter_reboot(cycle, "power on", &mut events);
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{compile, complexity_check};

    fn program(src: &str, map: MemoryMap) -> (Arc<Program>, u64) {
        let m = compile(src).unwrap();
        let budget = complexity_check(&m).instruction_budget();
        (Arc::new(Program::build(&m, map).unwrap()), budget)
    }

    const COPY: &str = "MACHINE M INPUTS i:BOOL OUTPUTS o:BOOL OPERATION user_logic BEGIN o := i END";

    fn mcu(src: &str) -> McuState {
        let (p, budget) = program(src, MemoryMap::default());
        McuState::load(McuId::Mcu1, p, McuConfig::with_budget(budget)).unwrap()
    }

    #[test]
    fn healthy_copy_drives_its_line() {
        let mut m = mcu(COPY);
        let r = m.run_cycle(0, &[1]);
        assert!(r.drive && r.agreed);
        assert_eq!(r.lines, vec![true]);
        assert_eq!(r.out_digest, digest(&[1]));
        assert_eq!(r.events[0].kind, EventKind::CycleOk);
    }

    #[test]
    fn load_checks_the_map() {
        let quarter = |b| Region::new(b, 4096);
        let ok = MemoryMap {
            code_a: quarter(0),
            code_b: quarter(4096),
            data_a: quarter(8192),
            data_b: quarter(12288),
        };
        let (p, _) = program(COPY, ok);
        assert!(McuState::load(McuId::Mcu1, p.clone(), McuConfig::with_budget(10)).is_ok());

        let mut bad = (*p).clone();
        bad.map.code_b = Region::new(4095, 4096);
        let e = McuState::load(McuId::Mcu1, Arc::new(bad), McuConfig::with_budget(10));
        assert!(matches!(e, Err(LoadError::Map(MapError::Overlap(..)))));

        let mut bad = (*p).clone();
        bad.map.data_b = Region::new(65000, 1000);
        let e = McuState::load(McuId::Mcu1, Arc::new(bad), McuConfig::with_budget(10));
        assert!(matches!(e, Err(LoadError::Map(MapError::OutOfRange { .. }))));
    }

    #[test]
    fn image_too_large_is_rejected() {
        let (p, _) = program(COPY, MemoryMap::default());
        let mut big = (*p).clone();
        big.map.code_a = Region::new(0, 4);
        let e = McuState::load(McuId::Mcu1, Arc::new(big), McuConfig::with_budget(10));
        assert!(matches!(e, Err(LoadError::ImageTooLarge { region: RegionId::CodeA, .. })));
    }

    #[test]
    fn budget_exhaustion_reboots() {
        let src = "MACHINE M STATE s:INT(0..100) := 0 OUTPUTS o:BOOL OPERATION user_logic BEGIN \
                   FOR k FROM 0 TO 9 DO s := s + 1; s := s - 1 END END";
        let mut m = mcu(src);
        m.config.budget = 10;
        let r = m.run_cycle(0, &[]);
        assert!(!r.drive);
        assert!(matches!(m.mode, Mode::Rebooting { remaining: 5 }));
        let d = &r.events[0];
        assert_eq!(d.kind, EventKind::LocalDivergence);
        assert!(d.detail("trap_vm-a").unwrap().as_str().unwrap().contains("budget"));
    }

    #[test]
    fn code_bit_flip_in_store_address_diverges() {
        let mut m = mcu(COPY);
        // The STB that writes o is the last instruction before HALT.
        let code = m.program().image_a.code.clone();
        let ins = crate::codegen_a::isa::decode_all(&code).unwrap();
        let (at, _) = ins
            .iter()
            .rev()
            .find(|(_, i)| matches!(i, InstrA::Stb(_)))
            .copied()
            .unwrap();
        m.region_mut(RegionId::CodeA)[at + 1] ^= 0x01;
        let r = m.run_cycle(3, &[1]);
        assert!(!r.drive);
        assert_eq!(r.events[0].kind, EventKind::LocalDivergence);
        assert_eq!(r.events[1].kind, EventKind::RebootStart);
    }

    use crate::codegen_a::isa::InstrA;

    #[test]
    fn reboot_countdown_and_resync() {
        let mut m = mcu(COPY);
        let mut ev = Vec::new();
        m.enter_reboot(10, "test", &mut ev);
        let mut ready_at = None;
        for c in 11..=15 {
            let (ready, _) = m.reboot_step(c);
            if ready && ready_at.is_none() {
                ready_at = Some(c);
            }
        }
        assert_eq!(ready_at, Some(15));
        m.install_state(15, &[]);
        assert_eq!(m.mode, Mode::Running);
        assert!(m.run_cycle(15, &[0]).agreed);
    }

    #[test]
    fn storm_threshold() {
        let mut m = mcu(COPY);
        let mut ev = Vec::new();
        for c in [10, 15] {
            m.enter_reboot(c, "t", &mut ev);
        }
        assert!(matches!(m.mode, Mode::Rebooting { .. }));
        m.enter_reboot(20, "t", &mut ev);
        assert!(matches!(m.mode, Mode::Rebooting { .. }));
        assert_eq!(m.reboot_count, 3);
        m.enter_reboot(25, "t", &mut ev);
        assert_eq!(m.mode, Mode::Halted);

        // Reboots spread beyond the window never accumulate.
        let mut m = mcu(COPY);
        for c in [0, 100, 200, 300, 400] {
            m.enter_reboot(c, "t", &mut ev);
            assert!(matches!(m.mode, Mode::Rebooting { .. }));
        }
    }

    #[test]
    fn readback_rules() {
        let mut m = mcu(COPY);
        assert_eq!(m.readback_check(0, &[true], &[true]).0, Ok(()));
        let mut m8 = mcu(COPY);
        let driven = [false, false, false, false];
        let sensed = [false, false, false, true];
        assert_eq!(m8.readback_check(0, &driven, &sensed).0, Err(3));
        assert_eq!(m8.mode, Mode::Halted);
        assert_eq!(m.readback_check(1, &[true], &[true]).0, Ok(()));
    }

    #[test]
    fn corrupted_add_on_b_fails_self_test() {
        let mut m = mcu(COPY);
        m.faults_b = Faults::opcode(crate::codegen_b::OpB::Add.index());
        let k = 4;
        let bound = selftest::OPCODES_PER_VM.div_ceil(k) as u64;
        m.config.selftest_k = k;
        let mut hit = None;
        for c in 0..bound {
            let r = m.run_cycle(c, &[0]);
            if let Some(e) = r.events.iter().find(|e| e.kind == EventKind::SelftestFail) {
                assert_eq!(e.detail("opcode").unwrap(), "ADD");
                assert_eq!(e.detail("vm").unwrap(), "VM-B");
                hit = Some(c);
                break;
            }
        }
        assert!(hit.is_some());
        assert_eq!(m.mode, Mode::Halted);
    }

    #[test]
    fn halted_is_absorbing() {
        let mut m = mcu(COPY);
        let mut ev = Vec::new();
        m.halt(0, "t", &mut ev);
        for c in 1..5 {
            let r = m.run_cycle(c, &[1]);
            assert!(!r.drive && r.lines == vec![false]);
            assert_eq!(m.mode, Mode::Halted);
            assert!(!m.reboot_step(c).0);
        }
        assert!(m.power_on(9).is_empty());
    }
}
