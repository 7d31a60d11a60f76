use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use duplex_core::duplex::{run, FaultSpec, Scenario, Sim, SimConfig, Trace};
use duplex_core::frontend::{self, diag, parse, InvariantReport};
use duplex_core::harness::{
    artifacts::DEFAULT_RECORD_BYTES_B, bench, check_report, fuzz, load_dir, Artifacts, FuzzConfig, Mutation,
    DEFAULT_MAX_STATES,
};
use duplex_core::mcu::map::MemoryMap;
use duplex_core::mcu::Program;
use duplex_core::relay;

const VERIFY_FAILED: u8 = 1;
const INPUT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "duplex", version, about = "Diverse double compilation and 2oo2 lockstep simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model into both images, listings, map and fingerprint.
    Build {
        model: PathBuf,
        #[arg(long, default_value = "build")]
        out: PathBuf,
        /// Payload bytes per VM-B HEX record.
        #[arg(long, default_value_t = DEFAULT_RECORD_BYTES_B)]
        record_bytes: usize,
    },
    /// Translate a relay netlist into model text.
    Relay {
        netlist: PathBuf,
        /// Write the model here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a model or build directory in the duplex simulator.
    Run {
        target: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run with extra faults given inline as JSON objects.
    Inject {
        target: PathBuf,
        #[arg(long = "fault", required = true)]
        faults: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exhaustively check the model's invariant.
    Check {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: u64,
    },
    /// Differential fuzzing of random models against the reference interpreter.
    Fuzz {
        #[arg(long, default_value_t = 100)]
        programs: u64,
        #[arg(long, default_value_t = 100)]
        cycles: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Break VM-B's ADD on both controllers (self-test off).
        #[arg(long, hide = true)]
        break_add: bool,
    },
    /// Time full duplex cycles of an interlocking-style model.
    Bench {
        #[arg(long, default_value_t = 50_000)]
        equations: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Minimum timed cycles.
        #[arg(long, default_value_t = 10)]
        cycles: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario's cycle count.
    #[arg(long)]
    cycles: Option<u64>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSONL trace here instead of standard output.
    #[arg(long)]
    trace: Option<PathBuf>,
}

/// A failure already reported to the user, carrying the exit code.
struct Exit(u8);

fn input_error(msg: impl std::fmt::Display) -> Exit {
    eprintln!("error: {msg}");
    Exit(INPUT_ERROR)
}

fn read(path: &Path) -> Result<String, Exit> {
    fs::read_to_string(path).map_err(|e| input_error(format_args!("{}: {e}", path.display())))
}

fn build_from_source(path: &Path, record_bytes: usize) -> Result<Artifacts, Exit> {
    let name = path.display().to_string();
    let model = parse(&read(path)?).map_err(|d| {
        eprint!("{}", diag::render(&name, &d));
        Exit(INPUT_ERROR)
    })?;
    Artifacts::build(&name, &model, MemoryMap::default(), record_bytes).map_err(|e| {
        eprintln!("{e}");
        Exit(INPUT_ERROR)
    })
}

fn load_target(path: &Path) -> Result<(Arc<Program>, u64), Exit> {
    if path.is_dir() {
        let l = load_dir(path).map_err(input_error)?;
        Ok((l.program, l.budget))
    } else {
        let art = build_from_source(path, DEFAULT_RECORD_BYTES_B)?;
        Ok((Arc::new(art.program), art.budget))
    }
}

fn simulate(target: &Path, args: &RunArgs, extra: &[String]) -> Result<(), Exit> {
    let (program, budget) = load_target(target)?;
    let mut scenario = match &args.scenario {
        Some(p) => Scenario::parse(&read(p)?).map_err(|e| input_error(format_args!("{}: {e}", p.display())))?,
        None => Scenario::default(),
    };
    for f in extra {
        let spec: FaultSpec =
            serde_json::from_str(f).map_err(|e| input_error(format_args!("--fault {f}: {e}")))?;
        scenario.faults.push(spec);
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let sim = Sim::new(program, SimConfig::with_budget(budget)).map_err(input_error)?;
    let trace: Trace = run(sim, &scenario, args.cycles).map_err(input_error)?;
    let jsonl = trace.to_jsonl();
    match &args.trace {
        Some(p) => {
            fs::write(p, &jsonl).map_err(|e| input_error(format_args!("{}: {e}", p.display())))?;
            let anomalies: Vec<String> = trace
                .events
                .iter()
                .filter(|e| e.kind.is_anomaly())
                .map(|e| format!("cycle {} {} {}", e.cycle, e.source, e.kind.as_str()))
                .collect();
            println!("{} cycles, {} events written to {}", trace.board.len(), trace.events.len(), p.display());
            for a in anomalies {
                println!("  {a}");
            }
        }
        None => print!("{jsonl}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Exit> {
    match cli.command {
        Command::Build { model, out, record_bytes } => {
            let art = build_from_source(&model, record_bytes)?;
            art.write(&out).map_err(|e| input_error(format_args!("{}: {e}", out.display())))?;
            println!("built {} into {}", model.display(), out.display());
            println!("fingerprint {}", art.fingerprint);
        }
        Command::Relay { netlist, out } => {
            let name = netlist.display().to_string();
            let sch = relay::parse_schematic(&read(&netlist)?).map_err(|d| {
                eprint!("{}", diag::render(&name, &d));
                Exit(INPUT_ERROR)
            })?;
            let stem = netlist
                .file_stem()
                .and_then(|s| s.to_str())
                .filter(|s| s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
                .filter(|s| s.starts_with(|c: char| c.is_ascii_alphabetic()))
                .unwrap_or("Relays");
            let text = relay::translate_source(&sch, stem);
            if let Err(d) = frontend::compile(&text) {
                // Names that are fine in a netlist may still clash with the
                // model language; surface that instead of writing bad text.
                eprint!("{}", diag::render(&name, &d));
                return Err(Exit(INPUT_ERROR));
            }
            match out {
                Some(p) => fs::write(&p, text).map_err(|e| input_error(format_args!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
        }
        Command::Run { target, run } => simulate(&target, &run, &[])?,
        Command::Inject { target, faults, run } => simulate(&target, &run, &faults)?,
        Command::Check { model, max_states } => {
            let name = model.display().to_string();
            let typed = frontend::compile(&read(&model)?).map_err(|d| {
                eprint!("{}", diag::render(&name, &d));
                Exit(INPUT_ERROR)
            })?;
            let (text, report) = check_report(&typed, max_states);
            print!("{text}");
            match report {
                InvariantReport::Holds { .. } => {}
                InvariantReport::Violated { .. } => return Err(Exit(VERIFY_FAILED)),
                InvariantReport::TooLarge { .. } => return Err(Exit(INPUT_ERROR)),
            }
        }
        Command::Fuzz { programs, cycles, seed, break_add } => {
            let report = fuzz(FuzzConfig {
                programs,
                cycles,
                seed,
                mutation: break_add.then_some(Mutation::BrokenAddB),
            });
            print!("{}", report.render());
            if report.failures().next().is_some() {
                return Err(Exit(VERIFY_FAILED));
            }
        }
        Command::Bench { equations, seed, cycles } => {
            let report = bench(equations, seed, cycles, 1.0).map_err(input_error)?;
            print!("{}", report.render());
            if report.anomalies > 0 {
                return Err(Exit(VERIFY_FAILED));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code)) => ExitCode::from(code),
    }
}
