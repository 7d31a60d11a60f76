//! Acceptance suite: one PASS/FAIL line per criterion. Thresholds are the
//! constants below; a failing criterion makes the binary exit nonzero.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use duplex_core::codegen_a::OpA;
use duplex_core::codegen_b::OpB;
use duplex_core::duplex::{run, Duration, FaultKind, FaultSpec, Scenario, Sim, SimConfig};
use duplex_core::frontend::{compile, complexity_check};
use duplex_core::harness::fuzz::{input_rng, program_seed, random_inputs};
use duplex_core::harness::{bench, fuzz, gen_program, load_dir, Artifacts, FuzzConfig, GenConfig};
use duplex_core::hexfmt;
use duplex_core::mcu::map::{MemoryMap, Region};
use duplex_core::mcu::{McuId, Outcome, Program, Vm};
use duplex_core::relay;
use duplex_core::trace::{EventKind, Source, TraceEvent};

const FUZZ_PROGRAMS: u64 = 1000;
const FUZZ_CYCLES: u64 = 100;
const BITFLIP_FAULTS: u64 = 600;
const BITFLIP_MIN: u64 = 500;
const BITFLIP_CYCLES: u64 = 80;
const KILL_TRIALS: u64 = 40;
const HEARTBEAT_DELAY: u64 = 3;
const STUCK_DEENERGIZE: u64 = 4;
const OPCODES: usize = 34;
const MAP_SPACE: u32 = 4096;
const MAP_STEP: u32 = 256;
const MAP_SIZES: [u32; 4] = [256, 512, 768, 1024];
const BENCH_EQUATIONS: u64 = 50_000;
const BENCH_MIN_CYCLES_PER_SEC: f64 = 1.0;
const HEX_ROUND_TRIPS: u64 = 10_000;
const CORPUS_RECORD_BYTES: usize = 4;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn build(src: &str) -> (Arc<Program>, SimConfig) {
    let m = compile(src).expect("fixture compiles");
    let budget = complexity_check(&m).instruction_budget();
    (
        Arc::new(Program::build(&m, MemoryMap::default()).unwrap()),
        SimConfig::with_budget(budget),
    )
}

fn fuzz_program(seed: u64) -> (Arc<Program>, SimConfig) {
    let m = gen_program(&GenConfig::fuzz(seed));
    let art = Artifacts::build("generated", &m, MemoryMap::default(), 4).unwrap();
    (Arc::new(art.program), SimConfig::with_budget(art.budget))
}

const SEAL_IN: &str = "MACHINE SealIn INPUTS start : BOOL, stop : BOOL OUTPUTS motor : BOOL \
                       STATE k : BOOL := FALSE OPERATION user_logic BEGIN \
                       k := (start OR k) AND NOT stop; motor := k END";

const COPY3: &str = "MACHINE Copy INPUTS x0 : BOOL, x1 : BOOL, x2 : BOOL \
                     OUTPUTS y0 : BOOL, y1 : BOOL, y2 : BOOL \
                     OPERATION user_logic BEGIN y0 := x0; y1 := x1; y2 := x2 END";

/// Everything observable from one cycle of a simulator run.
struct Observed {
    board: Vec<bool>,
    lines: [Vec<bool>; 2],
    /// Both instance outcomes of each controller, if it ran the program.
    last: [Option<(Outcome, Outcome)>; 2],
    events: Vec<TraceEvent>,
}

fn observe(sim: &mut Sim, inputs: &[Vec<i64>]) -> Vec<Observed> {
    inputs
        .iter()
        .map(|i| {
            let step = sim.step(i);
            Observed {
                board: step.board,
                lines: [McuId::Mcu1, McuId::Mcu2].map(|id| sim.lines(id).to_vec()),
                last: [McuId::Mcu1, McuId::Mcu2].map(|id| sim.mcu(id).last.clone()),
                events: step.events,
            }
        })
        .collect()
}

fn has(events: &[TraceEvent], source: Source, kind: EventKind) -> bool {
    events.iter().any(|e| e.source == source && e.kind == kind)
}

fn differential_agreement() -> Verdict {
    let report = fuzz(FuzzConfig {
        programs: FUZZ_PROGRAMS,
        cycles: FUZZ_CYCLES,
        seed: 0,
        mutation: None,
    });
    let total = FUZZ_PROGRAMS * FUZZ_CYCLES;
    if let Some(f) = report.failures().next() {
        return Err(format!("seed {}: {} ({})", f.seed, f.reason, f.repro));
    }
    ensure(report.anomalies().is_empty(), || format!("anomalies {:?}", report.anomalies()))?;
    ensure(report.agreed_cycles() == total, || {
        format!("{}/{total} cycles agreed", report.agreed_cycles())
    })?;
    Ok(format!("{total}/{total} cycles three-way equal over {FUZZ_PROGRAMS} programs, no anomaly events"))
}

fn bitflip_detection() -> Verdict {
    let results: Vec<Result<bool, String>> = (0..BITFLIP_FAULTS)
        .into_par_iter()
        .map(|i| {
            let seed = 70_000 + i;
            let (program, config) = fuzz_program(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut irng = input_rng(seed);
            let inputs: Vec<Vec<i64>> =
                (0..BITFLIP_CYCLES).map(|_| random_inputs(&mut irng, &program.inputs)).collect();

            let mcu = if rng.gen() { McuId::Mcu1 } else { McuId::Mcu2 };
            let vm = if rng.gen() { Vm::A } else { Vm::B };
            // Aim at the bytes the image actually occupies.
            let code = rng.gen_bool(0.5);
            let (lo, len) = match (code, vm) {
                (true, Vm::A) => (program.image_a.code_base, program.image_a.code.len()),
                (true, Vm::B) => (program.image_b.code_base, program.image_b.code.len() * 4),
                (false, Vm::A) => (program.image_a.layout.base, program.image_a.layout.size as usize),
                (false, Vm::B) => (program.image_b.layout.base, program.image_b.layout.size as usize),
            };
            let address = lo + rng.gen_range(0..len) as u16;
            let bit = rng.gen_range(0..8);
            let kind = if code {
                FaultKind::CodeBitflip { mcu, vm, address, bit }
            } else {
                FaultKind::DataBitflip { mcu, vm, address, bit }
            };
            let duration = match rng.gen_range(0..3) {
                0 => Duration::Cycles(1),
                1 => Duration::Cycles(5),
                _ => Duration::Permanent,
            };
            let spec = FaultSpec {
                kind,
                at_cycle: rng.gen_range(0..BITFLIP_CYCLES / 2),
                duration,
            };

            let reference = observe(&mut Sim::new(program.clone(), config).unwrap(), &inputs);
            let mut sim = Sim::new(program, config).unwrap();
            sim.inject(spec.clone()).map_err(|e| format!("seed {seed}: {e}"))?;
            let faulted = observe(&mut sim, &inputs);

            let m = mcu.index();
            let mut effective = false;
            for (c, (r, f)) in reference.iter().zip(&faulted).enumerate() {
                for k in 0..r.board.len() {
                    if f.board[k] && !r.board[k] {
                        return Err(format!("seed {seed} {spec:?}: board {k} energized at cycle {c}"));
                    }
                }
                for id in 0..2 {
                    if f.lines[id].iter().any(|&l| l) && f.lines[id] != r.lines[id] {
                        return Err(format!("seed {seed} {spec:?}: MCU{} drove wrong lines at {c}", id + 1));
                    }
                }
                if effective {
                    continue;
                }
                let Some((a, b)) = &f.last[m] else { continue };
                let (expected, _) = r.last[m].as_ref().expect("reference always runs");
                if a != expected || b != expected {
                    effective = true;
                    let flagged = f.events.iter().any(|e| {
                        matches!(e.kind, EventKind::LocalDivergence | EventKind::CrossDivergence)
                    });
                    if !flagged {
                        return Err(format!("seed {seed} {spec:?}: cycle {c} differs without a divergence event"));
                    }
                }
            }
            Ok(effective)
        })
        .collect();
    let mut effective = 0;
    for r in results {
        effective += r? as u64;
    }
    ensure(BITFLIP_FAULTS >= BITFLIP_MIN, || "too few faults".into())?;
    Ok(format!(
        "{BITFLIP_FAULTS} single bit flips, {effective} changed an instance outcome, all flagged on that cycle; board never energized beyond the fault-free run"
    ))
}

fn kill_timeout() -> Verdict {
    let (program, config) = build(SEAL_IN);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cycles = 80;
    for _ in 0..KILL_TRIALS {
        let k = rng.gen_range(1..60u64);
        let victim = if rng.gen() { McuId::Mcu1 } else { McuId::Mcu2 };
        let survivor = victim.partner().source();
        let mut sim = Sim::new(program.clone(), config).unwrap();
        sim.inject(FaultSpec {
            kind: FaultKind::McuKill { mcu: victim },
            at_cycle: k,
            duration: Duration::Permanent,
        })
        .unwrap();
        let run = observe(&mut sim, &vec![vec![1, 0]; cycles]);
        for (c, o) in run.iter().enumerate() {
            let c = c as u64;
            let expect = c < k;
            ensure(o.board == [expect], || format!("kill {victim:?} at {k}: board {:?} at cycle {c}", o.board))?;
        }
        let timeouts: Vec<(u64, Source)> = run
            .iter()
            .flat_map(|o| &o.events)
            .filter(|e| e.kind == EventKind::HeartbeatTimeout)
            .map(|e| (e.cycle, e.source))
            .collect();
        ensure(timeouts == [(k + HEARTBEAT_DELAY, survivor)], || {
            format!("kill {victim:?} at {k}: timeouts {timeouts:?}")
        })?;
    }
    Ok(format!(
        "{KILL_TRIALS} random kills: board off from the kill cycle, survivor timeout at exactly kill+{HEARTBEAT_DELAY}"
    ))
}

fn output_stuck() -> Verdict {
    let (program, config) = build(COPY3);
    let mut irng = ChaCha8Rng::seed_from_u64(4);
    let cycles = 40u64;
    let inputs: Vec<Vec<i64>> = (0..cycles).map(|_| (0..3).map(|_| irng.gen_range(0..2)).collect()).collect();
    let mut trials = 0;
    for mcu in [McuId::Mcu1, McuId::Mcu2] {
        for output in 0..3 {
            for value in [0u8, 1] {
                for at in [0u64, 7, 13] {
                    let mut sim = Sim::new(program.clone(), config).unwrap();
                    sim.inject(FaultSpec {
                        kind: FaultKind::OutputStuck { mcu, output, value },
                        at_cycle: at,
                        duration: Duration::Permanent,
                    })
                    .unwrap();
                    let run = observe(&mut sim, &inputs);
                    // Copy model: every controller commands exactly its inputs.
                    let first = (at..cycles)
                        .find(|&t| inputs[t as usize][output] != value as i64)
                        .expect("inputs toggle");
                    let tag = format!("{mcu:?} line {output} stuck {value} at {at}");
                    for (c, o) in run.iter().enumerate() {
                        let fails: Vec<&TraceEvent> =
                            o.events.iter().filter(|e| e.kind == EventKind::ReadbackFail).collect();
                        if (c as u64) == first {
                            ensure(
                                fails.len() == 1
                                    && fails[0].source == mcu.source()
                                    && fails[0].detail("output") == Some(&output.into()),
                                || format!("{tag}: readback events {fails:?} at {c}"),
                            )?;
                            ensure(has(&o.events, mcu.source(), EventKind::Halt), || format!("{tag}: no halt"))?;
                        } else {
                            ensure(fails.is_empty(), || format!("{tag}: readback at {c}, expected {first}"))?;
                        }
                        for (k, (&live, &want)) in o.board.iter().zip(&inputs[c]).enumerate() {
                            ensure(!live || want == 1, || format!("{tag}: board {k} wrong at {c}"))?;
                        }
                        if c as u64 >= first + STUCK_DEENERGIZE {
                            ensure(o.board.iter().all(|&b| !b), || format!("{tag}: board live at {c}"))?;
                        }
                    }
                    trials += 1;
                }
            }
        }
    }
    Ok(format!(
        "{trials} stuck lines: readback_fail and halt at the first contradicting command, board off within {STUCK_DEENERGIZE} cycles"
    ))
}

fn opcode_corruption() -> Verdict {
    let (program, base) = build(SEAL_IN);
    let names: Vec<(Vm, &str)> = OpA::ALL
        .iter()
        .map(|o| (Vm::A, o.mnemonic()))
        .chain(OpB::ALL.iter().map(|o| (Vm::B, o.mnemonic())))
        .collect();
    ensure(names.len() == 2 * OPCODES, || format!("{} opcodes", names.len()))?;
    let mut worst = Vec::new();
    for k in [1usize, 4, OPCODES] {
        let window = OPCODES.div_ceil(k) as u64;
        let mut slowest = 0;
        for (n, &(vm, opcode)) in names.iter().enumerate() {
            let mcu = if n % 2 == 0 { McuId::Mcu1 } else { McuId::Mcu2 };
            let at = 3 + (n as u64 % 11);
            let mut config = base;
            config.mcu.selftest_k = k;
            let mut sim = Sim::new(program.clone(), config).unwrap();
            sim.inject(FaultSpec {
                kind: FaultKind::OpcodeSemantics { mcu, vm, opcode: opcode.into() },
                at_cycle: at,
                duration: Duration::Permanent,
            })
            .unwrap();
            let run = observe(&mut sim, &vec![vec![1, 0]; (at + window + 2) as usize]);
            let hit = run
                .iter()
                .flat_map(|o| &o.events)
                .find(|e| e.kind == EventKind::SelftestFail)
                .ok_or_else(|| format!("k={k}: {vm} {opcode} never flagged"))?;
            ensure(
                hit.source == mcu.source()
                    && hit.detail("opcode") == Some(&opcode.into())
                    && hit.detail("vm") == Some(&vm.to_string().into()),
                || format!("k={k}: {vm} {opcode} flagged as {hit:?}"),
            )?;
            let delay = hit.cycle - at;
            ensure(delay < window, || format!("k={k}: {vm} {opcode} took {} cycles", delay + 1))?;
            slowest = slowest.max(delay + 1);
        }
        worst.push(format!("k={k}: {slowest}/{window}"));
    }
    Ok(format!(
        "all {} opcodes of both machines flagged by the owning controller within ceil({OPCODES}/k) cycles ({})",
        2 * OPCODES,
        worst.join(", ")
    ))
}

fn map_grid() -> Verdict {
    let cells = MAP_SPACE / MAP_STEP;
    let regions: Vec<(u32, u32)> = (0..cells)
        .flat_map(|b| MAP_SIZES.iter().map(move |&s| (b * MAP_STEP, s)))
        .collect();
    let n = regions.len();
    // Bitmap oracle: one bit per 256-byte cell; out of range when a
    // region runs past the last cell.
    let mask = |(base, size): (u32, u32)| -> Option<u64> {
        let (from, to) = (base / MAP_STEP, (base + size) / MAP_STEP);
        (to <= cells).then(|| ((1u64 << to) - 1) & !((1u64 << from) - 1))
    };
    let (accepted, mismatches) = (0..n * n)
        .into_par_iter()
        .map(|ab| {
            let mut accepted = 0u64;
            let mut bad = 0u64;
            let (a, b) = (regions[ab / n], regions[ab % n]);
            for &c in &regions {
                for &d in &regions {
                    let quad = [a, b, c, d];
                    let mut used = 0u64;
                    let mut ok = true;
                    for r in quad {
                        match mask(r) {
                            Some(m) if m & used == 0 => used |= m,
                            _ => ok = false,
                        }
                    }
                    let [a, b, c, d] = quad.map(|(base, size)| Region::new(base as u16, size));
                    let map = MemoryMap { code_a: a, code_b: b, data_a: c, data_b: d };
                    let verdict = map.validate_within(MAP_SPACE).is_ok();
                    accepted += verdict as u64;
                    bad += (verdict != ok) as u64;
                }
            }
            (accepted, bad)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let total = (n as u64).pow(4);
    ensure(mismatches == 0, || format!("{mismatches} of {total} maps disagree with the bitmap oracle"))?;
    ensure(accepted > 0, || "no map accepted".into())?;
    Ok(format!("{total} maps in a {MAP_SPACE}-byte space, {accepted} accepted, all verdicts match the oracle"))
}

fn throughput() -> Verdict {
    let r = bench(BENCH_EQUATIONS, 1, 5, 2.0).map_err(|e| e.to_string())?;
    ensure(r.anomalies == 0, || format!("{} anomaly events", r.anomalies))?;
    ensure(r.cycles_per_sec >= BENCH_MIN_CYCLES_PER_SEC, || {
        format!("{:.2} cycles/s < {BENCH_MIN_CYCLES_PER_SEC}", r.cycles_per_sec)
    })?;
    Ok(format!(
        "{} equations: {:.1} duplex cycles/s (>= {BENCH_MIN_CYCLES_PER_SEC}), {:.0} equations/s per instance",
        r.equations, r.cycles_per_sec, r.equations_per_sec
    ))
}

fn hex_round_trip() -> Verdict {
    let golden = hexfmt::encode(&[0x02, 0x33, 0x7A], 0x0030, 16).map_err(|e| e.to_string())?;
    ensure(golden == ":0300300002337A1E\n:00000001FF\n", || format!("golden encoded as {golden:?}"))?;
    // Checksum by hand: two's complement of the byte sum.
    let sum: u32 = [0x03u32, 0x00, 0x30, 0x00, 0x02, 0x33, 0x7A].iter().sum();
    ensure((256 - sum % 256) % 256 == 0x1E, || "hand checksum".into())?;
    ensure(hexfmt::decode(&golden) == Ok((0x0030, vec![0x02, 0x33, 0x7A])), || "golden decode".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..HEX_ROUND_TRIPS {
        let len = rng.gen_range(0..600usize);
        let image: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let base = rng.gen_range(0..=(0x1_0000 - len)) as u16;
        let per = rng.gen_range(1..=32);
        let text = hexfmt::encode(&image, base, per).map_err(|e| format!("#{i}: {e}"))?;
        let back = hexfmt::decode(&text).map_err(|e| format!("#{i}: {e}"))?;
        ensure(back.1 == image && (image.is_empty() || back.0 == base), || format!("#{i}: round trip differs"))?;
    }
    Ok(format!("golden record and EOF exact, {HEX_ROUND_TRIPS} random images round-trip"))
}

fn seal_in_pipeline() -> Verdict {
    let sch = relay::parse_schematic("INPUT start, stop;\nCOIL K = (start | K) & !stop;\nOUTPUT motor = K;\n")
        .map_err(|d| format!("{d:?}"))?;
    let text = relay::translate_source(&sch, "SealIn");
    let model = duplex_core::frontend::parse(&text).map_err(|d| format!("{d:?}"))?;
    let art = Artifacts::build("seal_in", &model, MemoryMap::default(), 4).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    art.write(dir.path()).map_err(|e| e.to_string())?;
    let loaded = load_dir(dir.path()).map_err(|e| e.to_string())?;
    let sim = Sim::new(loaded.program, SimConfig::with_budget(loaded.budget)).map_err(|e| e.to_string())?;
    let scenario = Scenario::parse(
        r#"{"inputs":[{"at":0,"set":{"start":1,"stop":0}},{"at":1,"set":{"start":0}},{"at":2,"set":{"stop":1}}],"cycles":3}"#,
    )
    .map_err(|e| e.to_string())?;
    let trace = run(sim, &scenario, None).map_err(|e| e.to_string())?;
    let motor: Vec<u8> = trace.board.iter().map(|b| b[0] as u8).collect();
    ensure(motor == [1, 1, 0], || format!("motor {motor:?}"))?;
    ensure(!trace.events.iter().any(|e| e.kind.is_anomaly()), || "anomaly events".into())?;
    Ok("netlist -> model -> HEX images -> duplex run: motor 1, 1, 0".into())
}

fn record_per_instruction() -> Verdict {
    let bad: Vec<String> = (0..FUZZ_PROGRAMS)
        .into_par_iter()
        .filter_map(|i| {
            let seed = program_seed(0, i);
            let m = gen_program(&GenConfig::fuzz(seed));
            let art = Artifacts::build("generated", &m, MemoryMap::default(), CORPUS_RECORD_BYTES).unwrap();
            let records = art.image_b_hex.lines().filter(|l| l.get(7..9) == Some("00")).count();
            let instructions = art
                .listing_b
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with(';') && !l.ends_with(':'))
                .count();
            (records != instructions).then(|| format!("seed {seed}: {records} records, {instructions} instructions"))
        })
        .collect();
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(format!(
        "{FUZZ_PROGRAMS} corpus programs: VM-B data records == listing instructions at {CORPUS_RECORD_BYTES} bytes per record"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("differential agreement", differential_agreement),
        ("bit-flip detection", bitflip_detection),
        ("controller kill", kill_timeout),
        ("stuck output", output_stuck),
        ("opcode corruption", opcode_corruption),
        ("memory map validation", map_grid),
        ("throughput", throughput),
        ("HEX format", hex_round_trip),
        ("relay seal-in", seal_in_pipeline),
        ("record per instruction", record_per_instruction),
    ];
    // Quiet default hook: a panicking criterion is reported as a FAIL line.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", n + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
