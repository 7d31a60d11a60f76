//! Random well-typed models for differential testing.
//!
//! Soundness is by construction rather than by rejection sampling:
//! every leaf is bounded by 100 in magnitude and integer expressions
//! nest at most three operators deep, so no intermediate can exceed
//! 200^8 < 2^63. Ranged assignments go through a modular wrap or a
//! clamp, array indices are literals, loop variables over a short
//! enough trip, or wrapped, and division only appears under a
//! divisor-nonzero guard.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frontend::{parse, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weights {
    pub boolean: u32,
    pub integer: u32,
    pub array: u32,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            boolean: 3,
            integer: 3,
            array: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    /// Statement count, nested statements included.
    pub budget: usize,
    pub weights: Weights,
    pub inputs: usize,
    pub outputs: usize,
}

impl GenConfig {
    /// The fuzz campaign's shape: sizes drawn from the seed itself.
    pub fn fuzz(seed: u64) -> GenConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F022);
        GenConfig {
            seed,
            budget: rng.gen_range(3..=14),
            weights: Weights::default(),
            inputs: rng.gen_range(1..=4),
            outputs: rng.gen_range(1..=3),
        }
    }
}

const LEAF_MAX: i64 = 100;
const MAX_INT_DEPTH: u32 = 3;
const MAX_NEST: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Elem {
    Bool,
    Int { lo: i64, hi: i64 },
}

#[derive(Debug, Clone)]
struct Var {
    name: String,
    elem: Elem,
    len: Option<u32>,
}

impl Var {
    fn decl(&self) -> String {
        let scalar = match self.elem {
            Elem::Bool => "BOOL".to_string(),
            Elem::Int { lo, hi } => format!("INT({lo}..{hi})"),
        };
        match self.len {
            Some(n) => format!("{} : ARRAY {n} OF {scalar}", self.name),
            None => format!("{} : {scalar}", self.name),
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    weights: Weights,
    inputs: Vec<Var>,
    outputs: Vec<Var>,
    state: Vec<Var>,
    consts: Vec<(String, i64)>,
    /// Enclosing loop variables with their trip counts.
    loops: Vec<(String, u32)>,
    next_loop: usize,
}

fn wrap(e: &str, lo: i64, hi: i64) -> String {
    let n = hi - lo + 1;
    format!("((((({e}) MOD {n}) + {n}) MOD {n}) + {})", lit(lo))
}

fn lit(v: i64) -> String {
    if v < 0 {
        format!("({v})")
    } else {
        v.to_string()
    }
}

impl Gen {
    fn var(&mut self, prefix: &str, i: usize) -> Var {
        let w = self.weights;
        let total = (w.boolean + w.integer + w.array).max(1);
        let pick = self.rng.gen_range(0..total);
        let int = |rng: &mut ChaCha8Rng| {
            // At least three values so the wrap never degenerates.
            let lo = rng.gen_range(-LEAF_MAX..=LEAF_MAX - 2);
            let hi = rng.gen_range(lo + 2..=LEAF_MAX.min(lo + 60));
            Elem::Int { lo, hi }
        };
        let (elem, len) = if pick < w.boolean {
            (Elem::Bool, None)
        } else if pick < w.boolean + w.integer {
            (int(&mut self.rng), None)
        } else {
            let elem = if self.rng.gen_bool(0.5) { Elem::Bool } else { int(&mut self.rng) };
            (elem, Some(self.rng.gen_range(2..=4)))
        };
        Var {
            name: format!("{prefix}{i}"),
            elem,
            len,
        }
    }

    fn readable(&self) -> impl Iterator<Item = &Var> {
        self.inputs.iter().chain(&self.state)
    }

    fn index(&mut self, len: u32, depth: u32) -> String {
        let fitting: Vec<String> = self
            .loops
            .iter()
            .filter(|(_, trip)| *trip <= len)
            .map(|(k, _)| k.clone())
            .collect();
        match self.rng.gen_range(0..3) {
            0 if !fitting.is_empty() => fitting.choose(&mut self.rng).unwrap().clone(),
            1 if depth < MAX_INT_DEPTH => {
                let e = self.int_expr(1);
                let n = len as i64;
                format!("((({e}) MOD {n}) + {n}) MOD {n}")
            }
            _ => self.rng.gen_range(0..len).to_string(),
        }
    }

    fn read(&mut self, v: &Var, depth: u32) -> String {
        match v.len {
            Some(n) => format!("{}({})", v.name, self.index(n, depth)),
            None => v.name.clone(),
        }
    }

    fn int_leaf(&mut self, depth: u32) -> String {
        let vars: Vec<Var> = self
            .readable()
            .filter(|v| matches!(v.elem, Elem::Int { .. }))
            .cloned()
            .collect();
        match self.rng.gen_range(0..5) {
            0 | 1 if !vars.is_empty() => {
                let v = vars.choose(&mut self.rng).unwrap().clone();
                self.read(&v, depth)
            }
            2 if !self.consts.is_empty() => self.consts.choose(&mut self.rng).unwrap().0.clone(),
            3 if !self.loops.is_empty() => self.loops.choose(&mut self.rng).unwrap().0.clone(),
            _ => lit(self.rng.gen_range(-20..=20)),
        }
    }

    /// `depth` counts the operator levels still allowed below this node.
    fn int_expr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.3) {
            return self.int_leaf(MAX_INT_DEPTH);
        }
        match self.rng.gen_range(0..7) {
            0 => format!("(-({}))", self.int_expr(depth - 1)),
            k => {
                let op = ["+", "-", "*", "+", "-", "*"][k - 1];
                let a = self.int_expr(depth - 1);
                let b = self.int_expr(depth - 1);
                format!("({a} {op} {b})")
            }
        }
    }

    fn bool_leaf(&mut self) -> String {
        let vars: Vec<Var> = self
            .readable()
            .filter(|v| v.elem == Elem::Bool)
            .cloned()
            .collect();
        match self.rng.gen_range(0..6) {
            0..=2 if !vars.is_empty() => {
                let v = vars.choose(&mut self.rng).unwrap().clone();
                self.read(&v, MAX_INT_DEPTH)
            }
            0..=3 => {
                let op = ["=", "/=", "<", "<=", ">", ">="].choose(&mut self.rng).unwrap();
                let a = self.int_expr(2);
                let b = self.int_expr(1);
                format!("({a} {op} {b})")
            }
            4 => "TRUE".into(),
            _ => "FALSE".into(),
        }
    }

    fn bool_expr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.3) {
            return self.bool_leaf();
        }
        match self.rng.gen_range(0..4) {
            0 => format!("(NOT {})", self.bool_expr(depth - 1)),
            k => {
                let op = ["AND", "OR", "XOR"][k - 1];
                let a = self.bool_expr(depth - 1);
                let b = self.bool_expr(depth - 1);
                format!("({a} {op} {b})")
            }
        }
    }

    fn target(&mut self) -> Option<(Var, String)> {
        let all: Vec<Var> = self.outputs.iter().chain(&self.state).cloned().collect();
        let v = all.choose(&mut self.rng)?.clone();
        let lv = self.read(&v, 1);
        Some((v, lv))
    }

    fn assign(&mut self, pad: &str) -> String {
        let Some((v, lv)) = self.target() else {
            return String::new();
        };
        match v.elem {
            Elem::Bool => format!("{pad}{lv} := {}", self.bool_expr(2)),
            Elem::Int { lo, hi } => {
                let e = self.int_expr(MAX_INT_DEPTH);
                if self.rng.gen_bool(0.75) {
                    format!("{pad}{lv} := {}", wrap(&e, lo, hi))
                } else {
                    format!(
                        "{pad}IF {e} < {lo} THEN\n{pad}  {lv} := {lo}\n{pad}ELSIF {e} > {hi} THEN\n\
                         {pad}  {lv} := {hi}\n{pad}ELSE\n{pad}  {lv} := {e}\n{pad}END",
                        lo = lit(lo),
                        hi = lit(hi)
                    )
                }
            }
        }
    }

    fn guarded_division(&mut self, pad: &str) -> Option<String> {
        let ints: Vec<Var> = self
            .outputs
            .iter()
            .chain(&self.state)
            .filter(|v| matches!(v.elem, Elem::Int { .. }))
            .cloned()
            .collect();
        let v = ints.choose(&mut self.rng)?.clone();
        let Elem::Int { lo, hi } = v.elem else { unreachable!() };
        let lv = self.read(&v, 1);
        let d = self.int_expr(1);
        let a = self.int_expr(2);
        let op = if self.rng.gen_bool(0.5) { "/" } else { "MOD" };
        Some(format!(
            "{pad}IF ({d}) /= 0 THEN\n{pad}  {lv} := {}\n{pad}END",
            wrap(&format!("({a}) {op} ({d})"), lo, hi)
        ))
    }

    /// Emits statements until `budget` is spent; returns them and the
    /// number consumed.
    fn stmts(&mut self, budget: &mut usize, nest: u32, indent: usize, max: usize) -> Vec<String> {
        let pad = "  ".repeat(indent);
        let mut out = Vec::new();
        while *budget > 0 && out.len() < max {
            *budget -= 1;
            let kind = if nest >= MAX_NEST || *budget == 0 { 0 } else { self.rng.gen_range(0..6) };
            let s = match kind {
                2 => self.if_stmt(budget, nest, indent),
                3 => self.for_stmt(budget, nest, indent),
                4 => self.guarded_division(&pad).unwrap_or_else(|| self.assign(&pad)),
                _ => self.assign(&pad),
            };
            if !s.is_empty() {
                out.push(s);
            }
        }
        out
    }

    fn block(&mut self, budget: &mut usize, nest: u32, indent: usize) -> String {
        let max = self.rng.gen_range(1..=3);
        let body = self.stmts(budget, nest + 1, indent + 1, max);
        if body.is_empty() {
            // Every branch needs at least a harmless statement.
            let pad = "  ".repeat(indent + 1);
            match self.assign(&pad) {
                s if !s.is_empty() => s,
                _ => String::new(),
            }
        } else {
            body.join(";\n")
        }
    }

    fn if_stmt(&mut self, budget: &mut usize, nest: u32, indent: usize) -> String {
        let pad = "  ".repeat(indent);
        let mut s = format!("{pad}IF {} THEN\n{}\n", self.bool_expr(2), self.block(budget, nest, indent));
        if self.rng.gen_bool(0.3) {
            let c = self.bool_expr(1);
            let b = self.block(budget, nest, indent);
            s.push_str(&format!("{pad}ELSIF {c} THEN\n{b}\n"));
        }
        if self.rng.gen_bool(0.5) {
            let b = self.block(budget, nest, indent);
            s.push_str(&format!("{pad}ELSE\n{b}\n"));
        }
        s.push_str(&format!("{pad}END"));
        s
    }

    fn for_stmt(&mut self, budget: &mut usize, nest: u32, indent: usize) -> String {
        let pad = "  ".repeat(indent);
        let k = format!("k{}", self.next_loop);
        self.next_loop += 1;
        let trip = self.rng.gen_range(1..=4u32);
        self.loops.push((k.clone(), trip));
        let body = self.block(budget, nest, indent);
        self.loops.pop();
        format!("{pad}FOR {k} FROM 0 TO {} DO\n{body}\n{pad}END", trip - 1)
    }

    fn init(&mut self, v: &Var) -> String {
        let value = match v.elem {
            Elem::Bool => if self.rng.gen_bool(0.5) { "TRUE" } else { "FALSE" }.to_string(),
            Elem::Int { lo, hi } => lit(self.rng.gen_range(lo..=hi)),
        };
        // Array initialisers are a single value for every element.
        format!("{} := {value}", v.decl())
    }
}

/// Model text for `config`; identical configs give identical text.
pub fn gen_source(config: &GenConfig) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        weights: config.weights,
        inputs: Vec::new(),
        outputs: Vec::new(),
        state: Vec::new(),
        consts: Vec::new(),
        loops: Vec::new(),
        next_loop: 0,
    };
    g.inputs = (0..config.inputs).map(|i| g.var("i", i)).collect();
    g.outputs = (0..config.outputs).map(|i| g.var("o", i)).collect();
    let n_state = g.rng.gen_range(1..=3);
    g.state = (0..n_state).map(|i| g.var("s", i)).collect();
    let n_const = g.rng.gen_range(0..=2);
    g.consts = (0..n_const)
        .map(|i| (format!("c{i}"), g.rng.gen_range(-20..=20)))
        .collect();

    let mut s = format!("MACHINE Gen{}\n", config.seed);
    if !g.consts.is_empty() {
        s.push_str("CONSTANTS\n");
        for (n, v) in &g.consts {
            s.push_str(&format!("  {n} = {v};\n"));
        }
    }
    let section = |title: &str, decls: Vec<String>| {
        if decls.is_empty() {
            String::new()
        } else {
            format!("{title}\n  {}\n", decls.join(",\n  "))
        }
    };
    s.push_str(&section("INPUTS", g.inputs.iter().map(Var::decl).collect()));
    s.push_str(&section("OUTPUTS", g.outputs.iter().map(Var::decl).collect()));
    let state = g.state.clone();
    let inits = state.iter().map(|v| g.init(v)).collect();
    s.push_str(&section("STATE", inits));
    let mut budget = config.budget;
    let body = g.stmts(&mut budget, 0, 1, usize::MAX);
    s.push_str("OPERATION user_logic\nBEGIN\n");
    if !body.is_empty() {
        s.push_str(&body.join(";\n"));
        s.push('\n');
    }
    s.push_str("END\n");
    s
}

pub fn gen_program(config: &GenConfig) -> Model {
    let src = gen_source(config);
    parse(&src).unwrap_or_else(|d| panic!("generator produced unparsable text: {d:?}\n{src}"))
}
