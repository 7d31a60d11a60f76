//! Two controllers in lockstep: frame exchange, cross comparison,
//! heartbeat supervision, permissive output resolution, readback and
//! resync.

use std::sync::Arc;

use super::fault::{code_region, data_region, opcode_index, FaultKind, FaultSpec, InjectError};
use super::frame::{self, Frame, FRAME_LEN};
use crate::mcu::{CycleResult, LoadError, McuConfig, McuId, McuState, Mode, Program, Vm};
use crate::trace::{sort_events, EventKind, Source, TraceEvent};

pub const HEARTBEAT_LIMIT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub mcu: McuConfig,
    /// Consecutive missing or invalid frames before the partner is
    /// presumed dead.
    pub heartbeat_limit: u32,
}

impl SimConfig {
    pub fn with_budget(budget: u64) -> Self {
        SimConfig {
            mcu: McuConfig::with_budget(budget),
            heartbeat_limit: HEARTBEAT_LIMIT,
        }
    }
}

#[derive(Debug, Clone)]
struct Armed {
    spec: FaultSpec,
    /// Value a forced memory bit takes, captured at injection.
    forced: Option<bool>,
    announced: bool,
}

/// Per-controller link bookkeeping, seen from the receiving side.
#[derive(Debug, Clone, Default)]
struct Link {
    next_seq: u16,
    last_seen: Option<u16>,
    missed: u32,
    partner_lost: bool,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub board: Vec<bool>,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResyncResult {
    Ok,
    Refused,
}

#[derive(Debug, Clone)]
pub struct Sim {
    program: Arc<Program>,
    pub config: SimConfig,
    mcus: [McuState; 2],
    dead: [bool; 2],
    links: [Link; 2],
    faults: Vec<Armed>,
    board: Vec<bool>,
    /// Lines each controller commanded in the last cycle.
    lines: [Vec<bool>; 2],
    cycle: u64,
}

fn ids() -> [McuId; 2] {
    [McuId::Mcu1, McuId::Mcu2]
}

impl Sim {
    pub fn new(program: Arc<Program>, config: SimConfig) -> Result<Sim, LoadError> {
        let m1 = McuState::load(McuId::Mcu1, program.clone(), config.mcu)?;
        let m2 = McuState::load(McuId::Mcu2, program.clone(), config.mcu)?;
        let n = program.output_lines();
        Ok(Sim {
            program,
            config,
            mcus: [m1, m2],
            dead: [false; 2],
            links: Default::default(),
            faults: Vec::new(),
            board: vec![false; n],
            lines: [vec![false; n], vec![false; n]],
            cycle: 0,
        })
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn mcu(&self, id: McuId) -> &McuState {
        &self.mcus[id.index()]
    }

    pub fn mcu_mut(&mut self, id: McuId) -> &mut McuState {
        &mut self.mcus[id.index()]
    }

    pub fn board(&self) -> &[bool] {
        &self.board
    }

    /// Lines commanded by one controller in the last cycle.
    pub fn lines(&self, id: McuId) -> &[bool] {
        &self.lines[id.index()]
    }

    pub fn is_dead(&self, id: McuId) -> bool {
        self.dead[id.index()]
    }

    pub fn inject(&mut self, spec: FaultSpec) -> Result<(), InjectError> {
        spec.validate(&self.program)?;
        self.faults.push(Armed {
            spec,
            forced: None,
            announced: false,
        });
        Ok(())
    }

    /// Serves a state resync for `requester` from its partner.
    pub fn resync(&mut self, requester: McuId) -> (ResyncResult, Vec<TraceEvent>) {
        let p = requester.partner();
        let cycle = self.cycle;
        if self.dead[p.index()] || self.mcus[p.index()].mode != Mode::Running {
            let ev = self.mcus[requester.index()].resync_refused(cycle);
            return (ResyncResult::Refused, ev);
        }
        let state = self.mcus[p.index()].state_cells(Vm::A);
        let ev = self.mcus[requester.index()].install_state(cycle, &state);
        (ResyncResult::Ok, ev)
    }

    fn apply_faults(&mut self, events: &mut Vec<TraceEvent>) {
        let cycle = self.cycle;
        let mut masks = [[0u64; 2]; 2];
        let mut kill = [false; 2];
        for f in &mut self.faults {
            if !f.spec.active(cycle) {
                continue;
            }
            if !f.announced {
                f.announced = true;
                let spec = serde_json::to_value(&f.spec).expect("fault specs serialize");
                events.push(
                    TraceEvent::new(cycle, Source::Harness, EventKind::FaultInjected)
                        .with("fault", f.spec.name())
                        .with("spec", spec),
                );
            }
            let m = f.spec.mcu().index();
            match &f.spec.kind {
                FaultKind::CodeBitflip { vm, address, bit, .. }
                | FaultKind::DataBitflip { vm, address, bit, .. } => {
                    let id = match f.spec.kind {
                        FaultKind::CodeBitflip { .. } => code_region(*vm),
                        _ => data_region(*vm),
                    };
                    let base = self.program.map.region(id).base;
                    let mem = self.mcus[m].region_mut(id);
                    let at = (*address - base) as usize;
                    let mask = 1u8 << bit;
                    let value = *f.forced.get_or_insert(mem[at] & mask == 0);
                    if value {
                        mem[at] |= mask;
                    } else {
                        mem[at] &= !mask;
                    }
                }
                FaultKind::OpcodeSemantics { vm, opcode, .. } => {
                    let i = opcode_index(*vm, opcode).expect("validated at inject");
                    masks[m][(*vm == Vm::B) as usize] |= 1 << i;
                }
                FaultKind::McuKill { .. } => kill[m] = true,
                _ => {}
            }
        }
        for id in ids() {
            let i = id.index();
            self.mcus[i].faults_a.0 = masks[i][0];
            self.mcus[i].faults_b.0 = masks[i][1];
            if self.dead[i] && !kill[i] {
                // Power returns: a cold start through the reboot path.
                self.links[i] = Link::default();
                events.extend(self.mcus[i].power_on(cycle));
            }
            self.dead[i] = kill[i];
        }
    }

    fn frame_fault(&self, sender: McuId) -> Option<Option<u8>> {
        self.faults
            .iter()
            .filter(|f| f.spec.active(self.cycle) && f.spec.mcu() == sender)
            .find_map(|f| match f.spec.kind {
                FaultKind::FrameDrop { .. } => Some(None),
                FaultKind::FrameCorrupt { bit, .. } => Some(Some(bit)),
                _ => None,
            })
    }

    fn stuck(&self, id: McuId, line: usize) -> Option<bool> {
        self.faults
            .iter()
            .filter(|f| f.spec.active(self.cycle))
            .find_map(|f| match f.spec.kind {
                FaultKind::OutputStuck { mcu, output, value } if mcu == id && output == line => {
                    Some(value == 1)
                }
                _ => None,
            })
    }

    fn alive(&self, id: McuId) -> bool {
        !self.dead[id.index()] && self.mcus[id.index()].mode != Mode::Halted
    }

    /// Advances both controllers and the board by one cycle.
    pub fn step(&mut self, inputs: &[i64]) -> Step {
        let cycle = self.cycle;
        let mut events = Vec::new();
        self.apply_faults(&mut events);

        // Heartbeat supervision looks at the frames of earlier cycles.
        for id in ids() {
            let limit = self.config.heartbeat_limit;
            let alive = self.alive(id);
            let link = &mut self.links[id.index()];
            if alive && link.missed >= limit && !link.partner_lost {
                link.partner_lost = true;
                events.push(
                    TraceEvent::new(cycle, id.source(), EventKind::HeartbeatTimeout)
                        .with("missed", link.missed),
                );
            }
        }

        // Reboot countdowns and resync happen before either controller
        // runs, so a resynced controller starts from the partner's
        // pre-cycle state.
        for id in ids() {
            if self.dead[id.index()] {
                continue;
            }
            let (ready, ev) = self.mcus[id.index()].reboot_step(cycle);
            events.extend(ev);
            if ready {
                let (_, ev) = self.resync(id);
                events.extend(ev);
            }
        }

        let mut results: [Option<CycleResult>; 2] = [None, None];
        for id in ids() {
            let m = &mut self.mcus[id.index()];
            m.last = None;
            if !self.dead[id.index()] && m.mode == Mode::Running {
                let r = m.run_cycle(cycle, inputs);
                events.extend(r.events.iter().cloned());
                results[id.index()] = Some(r);
            }
        }

        // Frame exchange.
        let mut wire: [Option<[u8; FRAME_LEN]>; 2] = [None, None];
        for id in ids() {
            if !self.alive(id) {
                continue;
            }
            let m = &self.mcus[id.index()];
            let r = results[id.index()].as_ref().filter(|r| r.agreed);
            let status = frame::ALIVE
                | match m.mode {
                    Mode::Rebooting { .. } => frame::REBOOTING,
                    _ => 0,
                }
                | if m.awaiting_resync() { frame::RESYNC_REQUEST } else { 0 };
            let link = &mut self.links[id.index()];
            let f = Frame {
                seq: link.next_seq,
                cycle: cycle as u32,
                out_digest: r.map_or(0, |r| r.out_digest),
                state_digest: r.map_or(0, |r| r.state_digest),
                status,
            };
            link.next_seq = link.next_seq.wrapping_add(1);
            let mut bytes = f.encode();
            match self.frame_fault(id) {
                Some(None) => continue,
                Some(Some(bit)) => bytes[bit as usize / 8] ^= 1 << (bit % 8),
                None => {}
            }
            wire[id.index()] = Some(bytes);
        }

        let mut drive = [false; 2];
        for id in ids() {
            let i = id.index();
            if !self.alive(id) {
                continue;
            }
            let received = wire[id.partner().index()]
                .and_then(|b| Frame::decode(&b).ok())
                .filter(|f| f.cycle == cycle as u32 && Some(f.seq) != self.links[i].last_seen);
            let link = &mut self.links[i];
            match received {
                None => link.missed += 1,
                Some(f) => {
                    link.missed = 0;
                    link.last_seen = Some(f.seq);
                    link.partner_lost = false;
                }
            }
            let Some(r) = results[i].as_ref().filter(|r| r.agreed) else {
                continue;
            };
            if let Some(f) = received.filter(|f| f.carries_digests()) {
                if (f.out_digest, f.state_digest) != (r.out_digest, r.state_digest) {
                    let mut ev = vec![TraceEvent::new(cycle, id.source(), EventKind::CrossDivergence)
                        .with("own_out", r.out_digest)
                        .with("own_state", r.state_digest)
                        .with("partner_out", f.out_digest)
                        .with("partner_state", f.state_digest)];
                    // Both sides agree locally: the faulty side cannot be
                    // identified, so neither may keep its outputs.
                    self.mcus[i].mode = Mode::Halted;
                    ev.push(
                        TraceEvent::new(cycle, id.source(), EventKind::Halt)
                            .with("reason", "cross divergence"),
                    );
                    events.extend(ev);
                    continue;
                }
            }
            drive[i] = r.drive && !self.links[i].partner_lost;
        }

        // Permissive resolution: MCU1 powers, MCU2 commands.
        let n = self.board.len();
        for id in ids() {
            let i = id.index();
            self.lines[i] = match (&results[i], drive[i]) {
                (Some(r), true) => r.lines.clone(),
                _ => vec![false; n],
            };
        }
        let sensed: [Vec<bool>; 2] = [0, 1].map(|i| {
            (0..n)
                .map(|k| self.stuck(ids()[i], k).unwrap_or(self.lines[i][k]))
                .collect()
        });
        let board: Vec<bool> = (0..n).map(|k| sensed[0][k] && sensed[1][k]).collect();
        if board != self.board {
            let changed: Vec<usize> = (0..n).filter(|&k| board[k] != self.board[k]).collect();
            let bits: String = board.iter().map(|&b| if b { '1' } else { '0' }).collect();
            events.push(
                TraceEvent::new(cycle, Source::Board, EventKind::OutputChange)
                    .with("outputs", bits)
                    .with("changed", changed),
            );
            self.board = board;
        }

        // Each running controller reads back its own lines.
        for id in ids() {
            let i = id.index();
            if self.dead[i] || self.mcus[i].mode != Mode::Running {
                continue;
            }
            let driven = self.lines[i].clone();
            let (r, ev) = self.mcus[i].readback_check(cycle, &driven, &sensed[i]);
            events.extend(ev);
            if r.is_err() {
                self.lines[i] = vec![false; n];
            }
        }

        sort_events(&mut events);
        self.cycle += 1;
        Step {
            board: self.board.clone(),
            events,
        }
    }
}
