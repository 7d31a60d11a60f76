//! The six files of one build and their consistency checks on reload.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codegen_a::isa::decode_all;
use crate::codegen_b::emit_asm;
use crate::codegen_b::isa::words_from_bytes;
use crate::frontend::{complexity_check, diag, print_model, typecheck, Diagnostic, Model};
use crate::hexfmt::{self, HexError};
use crate::mcu::map::MemoryMap;
use crate::mcu::{BuildError, Program};

pub const RECORD_BYTES_A: usize = 16;
pub const DEFAULT_RECORD_BYTES_B: usize = 4;

pub const FILES: [&str; 6] = [
    "image_a.hex",
    "image_b.hex",
    "listing_a.txt",
    "listing_b.asm",
    "map.json",
    "fingerprint.txt",
];

#[derive(Debug, thiserror::Error)]
pub enum BuildFailure {
    #[error("{}", diag::render(.file, .diagnostics).trim_end())]
    Frontend {
        file: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{file}: {error}")]
    Codegen { file: String, error: BuildError },
    #[error("{file}: {error}")]
    Hex { file: String, error: HexError },
}

#[derive(Debug, thiserror::Error)]
pub enum LoadFailure {
    #[error("{file}: {error}")]
    Io { file: String, error: io::Error },
    #[error("map.json: {0}")]
    Json(String),
    #[error("{file}: {error}")]
    Hex { file: String, error: HexError },
    #[error("{file}: {reason}")]
    Inconsistent { file: String, reason: String },
}

/// Contents of `map.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapFile {
    pub fingerprint: String,
    /// Instruction budget per instance and cycle.
    pub budget: u64,
    pub program: Program,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub fingerprint: String,
    pub budget: u64,
    pub program: Program,
    pub image_a_hex: String,
    pub image_b_hex: String,
    pub listing_a: String,
    pub listing_b: String,
    pub map_json: String,
}

/// SHA-256 of the canonical printed model.
pub fn fingerprint(model: &Model) -> String {
    hex::encode(Sha256::digest(print_model(model).as_bytes()))
}

fn listing_a(program: &Program, fp: &str) -> String {
    let img = &program.image_a;
    let mut s = format!("# fingerprint {fp}\n");
    let _ = writeln!(s, "# entry {:#06X}, stack depth {}", img.entry, img.stack_depth);
    for (at, ins) in decode_all(&img.code).expect("emitted code decodes") {
        let _ = writeln!(s, "{:04X}  {ins}", img.code_base as usize + at);
    }
    s
}

impl Artifacts {
    pub fn build(file: &str, model: &Model, map: MemoryMap, record_bytes_b: usize) -> Result<Artifacts, BuildFailure> {
        let typed = typecheck(model).map_err(|diagnostics| BuildFailure::Frontend {
            file: file.to_string(),
            diagnostics,
        })?;
        let codegen = |error: BuildError| BuildFailure::Codegen {
            file: file.to_string(),
            error,
        };
        let program = Program::build(&typed, map).map_err(codegen)?;
        let listing = emit_asm(&typed, &map).map_err(|e| codegen(e.into()))?;
        let fp = fingerprint(model);
        let budget = complexity_check(&typed).instruction_budget();
        let hex = |error| BuildFailure::Hex {
            file: file.to_string(),
            error,
        };
        let image_a_hex =
            hexfmt::encode(&program.image_a.code, program.image_a.code_base, RECORD_BYTES_A).map_err(hex)?;
        let image_b_hex = hexfmt::encode(
            &program.image_b.code_bytes(),
            program.image_b.code_base,
            record_bytes_b,
        )
        .map_err(hex)?;
        let listing_b = format!("; fingerprint {fp}\n{}", listing.text());
        let map_file = MapFile {
            fingerprint: fp.clone(),
            budget,
            program: program.clone(),
        };
        let map_json = serde_json::to_string_pretty(&map_file).expect("map serializes") + "\n";
        Ok(Artifacts {
            listing_a: listing_a(&program, &fp),
            fingerprint: fp,
            budget,
            program,
            image_a_hex,
            image_b_hex,
            listing_b,
            map_json,
        })
    }

    pub fn files(&self) -> [(&'static str, String); 6] {
        [
            (FILES[0], self.image_a_hex.clone()),
            (FILES[1], self.image_b_hex.clone()),
            (FILES[2], self.listing_a.clone()),
            (FILES[3], self.listing_b.clone()),
            (FILES[4], self.map_json.clone()),
            (FILES[5], format!("{}\n", self.fingerprint)),
        ]
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, text) in self.files() {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

/// A build directory reloaded for execution.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub program: Arc<Program>,
    pub budget: u64,
    pub fingerprint: String,
}

fn header_fingerprint(text: &str, prefix: &str) -> Option<String> {
    text.lines()
        .next()?
        .strip_prefix(prefix)
        .map(|s| s.trim().to_string())
}

/// Reads a build directory back, checking that every file belongs to the
/// same build and that the images sit where the map says.
pub fn load_dir(dir: &Path) -> Result<Loaded, LoadFailure> {
    let read = |name: &str| {
        fs::read_to_string(dir.join(name)).map_err(|error| LoadFailure::Io {
            file: dir.join(name).display().to_string(),
            error,
        })
    };
    let inconsistent = |file: &str, reason: String| LoadFailure::Inconsistent {
        file: file.to_string(),
        reason,
    };
    let map: MapFile = serde_json::from_str(&read("map.json")?).map_err(|e| LoadFailure::Json(e.to_string()))?;
    let fp = map.fingerprint.clone();
    let mut program = map.program;

    let stored = read("fingerprint.txt")?;
    if stored.trim() != fp {
        return Err(inconsistent("fingerprint.txt", format!("{} differs from map.json's {fp}", stored.trim())));
    }
    for (file, prefix) in [("listing_a.txt", "# fingerprint "), ("listing_b.asm", "; fingerprint ")] {
        match header_fingerprint(&read(file)?, prefix) {
            Some(f) if f == fp => {}
            other => {
                return Err(inconsistent(file, format!("fingerprint {other:?} differs from map.json's {fp}")))
            }
        }
    }

    let decode = |file: &str| -> Result<(u16, Vec<u8>), LoadFailure> {
        hexfmt::decode(&read(file)?).map_err(|error| LoadFailure::Hex {
            file: file.to_string(),
            error,
        })
    };
    let (base_a, code_a) = decode("image_a.hex")?;
    if base_a != program.image_a.code_base {
        return Err(inconsistent(
            "image_a.hex",
            format!("loads at {base_a:#06X}, map.json expects {:#06X}", program.image_a.code_base),
        ));
    }
    let (base_b, code_b) = decode("image_b.hex")?;
    if base_b != program.image_b.code_base {
        return Err(inconsistent(
            "image_b.hex",
            format!("loads at {base_b:#06X}, map.json expects {:#06X}", program.image_b.code_base),
        ));
    }
    program.image_a.code = code_a;
    program.image_b.code =
        words_from_bytes(&code_b).map_err(|e| inconsistent("image_b.hex", e.to_string()))?;
    Ok(Loaded {
        program: Arc::new(program),
        budget: map.budget,
        fingerprint: fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    const SEAL_IN: &str = "MACHINE SealIn
INPUTS start : BOOL, stop : BOOL
OUTPUTS motor : BOOL
STATE k : BOOL := FALSE
OPERATION user_logic BEGIN
  k := (start OR k) AND NOT stop;
  motor := k
END";

    #[test]
    fn six_files_round_trip() {
        let m = parse(SEAL_IN).unwrap();
        let art = Artifacts::build("seal.b0", &m, MemoryMap::default(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        art.write(dir.path()).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 6);
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(*back.program, art.program);
        assert_eq!(back.budget, art.budget);
        assert_eq!(back.fingerprint.len(), 64);
    }

    #[test]
    fn rebuild_is_identical() {
        let m = parse(SEAL_IN).unwrap();
        let a = Artifacts::build("x", &m, MemoryMap::default(), 4).unwrap();
        let b = Artifacts::build("x", &parse(SEAL_IN).unwrap(), MemoryMap::default(), 4).unwrap();
        assert_eq!(a, b);
        // Spans and whitespace do not enter the fingerprint.
        let spaced = SEAL_IN.replace('\n', "\n\n  ");
        assert_eq!(fingerprint(&parse(&spaced).unwrap()), a.fingerprint);
    }

    #[test]
    fn type_errors_name_the_file_and_line() {
        let m = parse("MACHINE M\nINPUTS b : BOOL\nOUTPUTS n : INT(0..9)\nOPERATION user_logic BEGIN\n  n := b\nEND").unwrap();
        let err = Artifacts::build("bad.b0", &m, MemoryMap::default(), 4).unwrap_err();
        assert!(err.to_string().starts_with("bad.b0:5:"), "{err}");
    }

    #[test]
    fn mixed_builds_are_refused() {
        let one = Artifacts::build("x", &parse(SEAL_IN).unwrap(), MemoryMap::default(), 4).unwrap();
        let other = parse(&SEAL_IN.replace("motor := k", "motor := NOT k")).unwrap();
        let two = Artifacts::build("x", &other, MemoryMap::default(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        one.write(dir.path()).unwrap();
        fs::write(dir.path().join("listing_b.asm"), &two.listing_b).unwrap();
        assert!(matches!(load_dir(dir.path()), Err(LoadFailure::Inconsistent { .. })));
    }
}
