//! Typed model to VM-B assembly, and assembly to ImageB.
//!
//! Code is first generated over single-assignment virtual registers,
//! then mapped onto r1..r13 by linear scan. Intervals that lose the scan
//! live in 64-bit scratch slots; r14 and r15 carry their reloads.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::asm::{assemble_lines, instruction_count, AsmError, AsmInstr, AsmLine};
use super::isa::{InstrB, OpB};
use crate::frontend::ast::{BinOp, ScalarType, UnOp};
use crate::frontend::cost::trip_count;
use crate::frontend::typeck::{TExpr, TExprKind, TStmt, TypedModel, VarKind};
use crate::image::{initial_data, CodegenError, DataLayout, Endian, LayoutBuilder};
use crate::mcu::map::{MemoryMap, RegionId};

pub const SCRATCH_SLOTS: u32 = 32;
pub const ALLOCATABLE: u8 = 13;
const RELOAD: [u8; 2] = [14, 15];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmListing {
    pub lines: Vec<AsmLine>,
    pub layout: DataLayout,
    pub data_init: Vec<u8>,
    pub input_cells: u32,
    pub code_base: u16,
    /// Bit n set when register rn appears in the code.
    pub registers_used: u16,
}

impl AsmListing {
    pub fn text(&self) -> String {
        super::asm::render(&self.lines)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageB {
    #[serde(skip)]
    pub code: Vec<u32>,
    pub code_base: u16,
    pub entry: u16,
    pub layout: DataLayout,
    #[serde(with = "hex::serde")]
    pub data_init: Vec<u8>,
    pub input_cells: u32,
    pub registers_used: u16,
}

impl ImageB {
    pub fn code_bytes(&self) -> Vec<u8> {
        super::isa::bytes_from_words(&self.code)
    }
}

pub fn assemble(listing: &AsmListing) -> Result<ImageB, AsmError> {
    Ok(ImageB {
        code: assemble_lines(&listing.lines)?,
        code_base: listing.code_base,
        entry: listing.code_base,
        layout: listing.layout.clone(),
        data_init: listing.data_init.clone(),
        input_cells: listing.input_cells,
        registers_used: listing.registers_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum R {
    Zero,
    V(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PoolEntry {
    Word(i32),
    Pair(i32, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Imm {
    Raw(u16),
    Pool(usize),
    Label(u32),
}

#[derive(Debug, Clone)]
enum V {
    Label(u32),
    Ins {
        op: OpB,
        rd: R,
        rs: R,
        rt: R,
        imm: Imm,
        note: Option<String>,
    },
}

struct Gen<'m> {
    model: &'m TypedModel,
    slot: Vec<usize>,
    layout: Vec<(u16, u8, u32)>,
    code: Vec<V>,
    vregs: u32,
    labels: u32,
    pool: Vec<PoolEntry>,
    pool_index: HashMap<PoolEntry, usize>,
    note: Option<String>,
}

fn i32_of(v: i64) -> Result<i32, CodegenError> {
    i32::try_from(v).map_err(|_| CodegenError::Constant(v))
}

impl Gen<'_> {
    fn vreg(&mut self) -> R {
        self.vregs += 1;
        R::V(self.vregs - 1)
    }

    fn label(&mut self) -> u32 {
        self.labels += 1;
        self.labels - 1
    }

    fn ins(&mut self, op: OpB, rd: R, rs: R, rt: R, imm: Imm) {
        self.code.push(V::Ins {
            op,
            rd,
            rs,
            rt,
            imm,
            note: self.note.clone(),
        });
    }

    fn pool(&mut self, e: PoolEntry) -> Imm {
        let next = self.pool.len();
        let i = *self.pool_index.entry(e).or_insert(next);
        if i == next {
            self.pool.push(e);
        }
        Imm::Pool(i)
    }

    fn constant(&mut self, v: i64) -> Result<R, CodegenError> {
        if v == 0 {
            return Ok(R::Zero);
        }
        let d = self.vreg();
        if let Ok(small) = i16::try_from(v) {
            self.ins(OpB::Li, d, R::Zero, R::Zero, Imm::Raw(small as u16));
        } else {
            let imm = self.pool(PoolEntry::Word(i32_of(v)?));
            self.ins(OpB::Lw, d, R::Zero, R::Zero, imm);
        }
        Ok(d)
    }

    fn var(&self, id: usize) -> (u16, u8, u32) {
        self.layout[self.slot[id]]
    }

    fn max_index(&self, id: usize) -> Result<u16, CodegenError> {
        let v = self.model.var(id);
        u16::try_from(v.ty.cells() - 1).map_err(|_| CodegenError::ArrayTooLong(v.name.clone()))
    }

    fn expr(&mut self, e: &TExpr) -> Result<R, CodegenError> {
        Ok(match &e.kind {
            TExprKind::Const(v) => self.constant(*v)?,
            TExprKind::Load(id) => {
                let (addr, width, _) = self.var(*id);
                let d = self.vreg();
                let op = if width == 1 { OpB::Lb } else { OpB::Lw };
                self.ins(op, d, R::Zero, R::Zero, Imm::Raw(addr));
                d
            }
            TExprKind::LoadIndex(id, i) => {
                let ri = self.expr(i)?;
                let max = self.max_index(*id)?;
                self.ins(OpB::Bchk, R::Zero, ri, R::Zero, Imm::Raw(max));
                let (addr, width, _) = self.var(*id);
                let d = self.vreg();
                let op = if width == 1 { OpB::Lbx } else { OpB::Lwx };
                self.ins(op, d, ri, R::Zero, Imm::Raw(addr));
                d
            }
            TExprKind::Unary(UnOp::Not, a) => {
                let ra = self.expr(a)?;
                let d = self.vreg();
                self.ins(OpB::Xori, d, ra, R::Zero, Imm::Raw(1));
                d
            }
            TExprKind::Unary(UnOp::Neg, a) => {
                let ra = self.expr(a)?;
                let d = self.vreg();
                self.ins(OpB::Sub, d, R::Zero, ra, Imm::Raw(0));
                d
            }
            TExprKind::Binary(op, a, b) => {
                let ra = self.expr(a)?;
                let rb = self.expr(b)?;
                let d = self.vreg();
                let (code, x, y) = match op {
                    BinOp::Add => (OpB::Add, ra, rb),
                    BinOp::Sub => (OpB::Sub, ra, rb),
                    BinOp::Mul => (OpB::Mul, ra, rb),
                    BinOp::Div | BinOp::Mod => {
                        self.ins(OpB::Trapz, R::Zero, rb, R::Zero, Imm::Raw(0));
                        let code = if *op == BinOp::Div { OpB::Div } else { OpB::Rem };
                        (code, ra, rb)
                    }
                    BinOp::Eq => (OpB::Seq, ra, rb),
                    BinOp::Ne => (OpB::Sne, ra, rb),
                    BinOp::Lt => (OpB::Slt, ra, rb),
                    BinOp::Le => (OpB::Sle, ra, rb),
                    BinOp::Gt => (OpB::Slt, rb, ra),
                    BinOp::Ge => (OpB::Sle, rb, ra),
                    BinOp::And => (OpB::And, ra, rb),
                    BinOp::Or => (OpB::Or, ra, rb),
                    BinOp::Xor => (OpB::Xor, ra, rb),
                };
                self.ins(code, d, x, y, Imm::Raw(0));
                d
            }
        })
    }

    fn stmts(&mut self, body: &[TStmt]) -> Result<(), CodegenError> {
        body.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &TStmt) -> Result<(), CodegenError> {
        self.note = Some(s.span().to_string());
        match s {
            TStmt::Assign {
                var, index, value, ..
            } => {
                let idx = match index {
                    Some(i) => {
                        let r = self.expr(i)?;
                        let max = self.max_index(*var)?;
                        self.ins(OpB::Bchk, R::Zero, r, R::Zero, Imm::Raw(max));
                        Some(r)
                    }
                    None => None,
                };
                let v = self.expr(value)?;
                if let ScalarType::Int { lo, hi } = self.model.var(*var).ty.elem() {
                    let pair = self.pool(PoolEntry::Pair(i32_of(lo)?, i32_of(hi)?));
                    self.ins(OpB::Chk, R::Zero, v, R::Zero, pair);
                }
                let (addr, width, _) = self.var(*var);
                match idx {
                    Some(r) => {
                        let op = if width == 1 { OpB::Sbx } else { OpB::Swx };
                        self.ins(op, v, r, R::Zero, Imm::Raw(addr));
                    }
                    None => {
                        let op = if width == 1 { OpB::Sb } else { OpB::Sw };
                        self.ins(op, v, R::Zero, R::Zero, Imm::Raw(addr));
                    }
                }
            }
            TStmt::If {
                arms, otherwise, ..
            } => {
                let end = self.label();
                for (i, (cond, body)) in arms.iter().enumerate() {
                    let last = i + 1 == arms.len() && otherwise.is_empty();
                    let c = self.expr(cond)?;
                    let next = if last { end } else { self.label() };
                    self.ins(OpB::Beqz, R::Zero, c, R::Zero, Imm::Label(next));
                    self.stmts(body)?;
                    if !last {
                        self.ins(OpB::J, R::Zero, R::Zero, R::Zero, Imm::Label(end));
                        self.code.push(V::Label(next));
                    }
                }
                self.stmts(otherwise)?;
                self.code.push(V::Label(end));
            }
            TStmt::For {
                var, lo, hi, body, ..
            } => {
                let (addr, _, _) = self.var(*var);
                let trips = trip_count(*lo, *hi);
                if trips == 0 {
                    return Ok(());
                }
                let store_k = |g: &mut Self, k: i64| -> Result<(), CodegenError> {
                    let r = g.constant(k)?;
                    g.ins(OpB::Sw, r, R::Zero, R::Zero, Imm::Raw(addr));
                    Ok(())
                };
                if trips <= crate::codegen_a::ir::UNROLL_LIMIT {
                    for k in *lo..=*hi {
                        store_k(self, k)?;
                        self.stmts(body)?;
                    }
                } else {
                    store_k(self, *lo)?;
                    let top = self.label();
                    self.code.push(V::Label(top));
                    self.stmts(body)?;
                    self.note = Some(s.span().to_string());
                    let r = self.vreg();
                    self.ins(OpB::Lw, r, R::Zero, R::Zero, Imm::Raw(addr));
                    let r2 = self.vreg();
                    self.ins(OpB::Addi, r2, r, R::Zero, Imm::Raw(1));
                    self.ins(OpB::Sw, r2, R::Zero, R::Zero, Imm::Raw(addr));
                    let t = self.vreg();
                    let stop = -(*hi + 1);
                    match i16::try_from(stop) {
                        Ok(small) => self.ins(OpB::Addi, t, r2, R::Zero, Imm::Raw(small as u16)),
                        Err(_) => {
                            let h = self.constant(*hi + 1)?;
                            self.ins(OpB::Sub, t, r2, h, Imm::Raw(0));
                        }
                    }
                    self.ins(OpB::Bnez, R::Zero, t, R::Zero, Imm::Label(top));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Reg(u8),
    Slot(u32),
}

/// Linear scan over live intervals `[def, last use]` in code order.
/// Returns the location of every virtual register and the slot count.
fn allocate(code: &[V], vregs: u32) -> (Vec<Loc>, u32) {
    let mut start = vec![usize::MAX; vregs as usize];
    let mut end = vec![0usize; vregs as usize];
    for (pos, v) in code.iter().enumerate() {
        if let V::Ins { op, rd, rs, rt, .. } = v {
            let use_ = op.operands();
            for (r, read, write) in [
                (rd, use_.reads_rd, use_.writes_rd),
                (rs, use_.reads_rs, false),
                (rt, use_.reads_rt, false),
            ] {
                if let R::V(n) = r {
                    let n = *n as usize;
                    if write {
                        start[n] = start[n].min(pos);
                    }
                    if read || write {
                        end[n] = end[n].max(pos);
                    }
                }
            }
        }
    }
    let mut order: Vec<u32> = (0..vregs).filter(|&v| start[v as usize] != usize::MAX).collect();
    order.sort_by_key(|&v| (start[v as usize], v));

    let mut loc = vec![Loc::Slot(u32::MAX); vregs as usize];
    let mut free: BTreeSet<u8> = (1..=ALLOCATABLE).collect();
    let mut active: Vec<u32> = Vec::new();
    let mut spilled: Vec<u32> = Vec::new();
    for &v in &order {
        let s = start[v as usize];
        active.retain(|&a| {
            if end[a as usize] <= s {
                if let Loc::Reg(r) = loc[a as usize] {
                    free.insert(r);
                }
                false
            } else {
                true
            }
        });
        if let Some(&r) = free.iter().next() {
            free.remove(&r);
            loc[v as usize] = Loc::Reg(r);
            active.push(v);
            continue;
        }
        let victim = *active
            .iter()
            .max_by_key(|&&a| (end[a as usize], a))
            .expect("no free register implies active intervals");
        if end[victim as usize] > end[v as usize] {
            loc[v as usize] = loc[victim as usize];
            active.retain(|&a| a != victim);
            active.push(v);
            spilled.push(victim);
        } else {
            spilled.push(v);
        }
    }

    // Slots for spilled intervals, reused once an interval has ended.
    spilled.sort_by_key(|&v| (start[v as usize], v));
    let mut slot_free: BTreeSet<u32> = BTreeSet::new();
    let mut in_slot: Vec<u32> = Vec::new();
    let mut slots = 0u32;
    for v in spilled {
        let s = start[v as usize];
        in_slot.retain(|&a| {
            if end[a as usize] < s {
                if let Loc::Slot(k) = loc[a as usize] {
                    slot_free.insert(k);
                }
                false
            } else {
                true
            }
        });
        let k = match slot_free.iter().next().copied() {
            Some(k) => {
                slot_free.remove(&k);
                k
            }
            None => {
                slots += 1;
                slots - 1
            }
        };
        loc[v as usize] = Loc::Slot(k);
        in_slot.push(v);
    }
    (loc, slots)
}

pub fn emit_asm(model: &TypedModel, map: &MemoryMap) -> Result<AsmListing, CodegenError> {
    map.validate()?;
    let mut lb = LayoutBuilder::new(map.data_b, RegionId::DataB, Endian::Big);
    let mut slot = vec![usize::MAX; model.vars.len()];
    for kind in [VarKind::Input, VarKind::Output, VarKind::State, VarKind::Loop] {
        for (id, v) in model.vars.iter().enumerate() {
            if v.kind == kind {
                slot[id] = lb.var(v)?;
            }
        }
    }
    let scratch = lb.reserve(8 * SCRATCH_SLOTS as u64, 8)?;
    let slots_layout: Vec<(u16, u8, u32)> =
        lb.vars().iter().map(|s| (s.addr, s.width, s.cells)).collect();

    let mut g = Gen {
        model,
        slot,
        layout: slots_layout,
        code: Vec::new(),
        vregs: 0,
        labels: 0,
        pool: Vec::new(),
        pool_index: HashMap::new(),
        note: Some("reset".into()),
    };
    for &id in &model.outputs {
        let v = model.var(id);
        let (addr, width, cells) = g.var(id);
        let (store, fill) = if width == 1 {
            (OpB::Sb, OpB::Fillb)
        } else {
            (OpB::Sw, OpB::Fillw)
        };
        if v.ty.is_array() {
            let count = g.constant(cells as i64)?;
            let value = g.constant(v.init)?;
            g.ins(fill, value, count, R::Zero, Imm::Raw(addr));
        } else {
            let value = g.constant(v.init)?;
            g.ins(store, value, R::Zero, R::Zero, Imm::Raw(addr));
        }
    }
    g.stmts(&model.body)?;
    g.note = None;
    g.ins(OpB::Halt, R::Zero, R::Zero, R::Zero, Imm::Raw(0));

    let (loc, slots) = allocate(&g.code, g.vregs);
    if slots > SCRATCH_SLOTS {
        return Err(CodegenError::SpillOverflow {
            needed: slots,
            slots: SCRATCH_SLOTS,
        });
    }
    let mut pool_addr = Vec::with_capacity(g.pool.len());
    for e in &g.pool {
        let bytes = match e {
            PoolEntry::Word(_) => 4,
            PoolEntry::Pair(..) => 8,
        };
        pool_addr.push(lb.reserve(bytes, 4)?);
    }
    let layout = lb.finish();
    let mut data_init = initial_data(&layout);
    for (e, &addr) in g.pool.iter().zip(&pool_addr) {
        let at = (addr - layout.base) as usize;
        match *e {
            PoolEntry::Word(w) => data_init[at..at + 4].copy_from_slice(&w.to_be_bytes()),
            PoolEntry::Pair(lo, hi) => {
                data_init[at..at + 4].copy_from_slice(&lo.to_be_bytes());
                data_init[at + 4..at + 8].copy_from_slice(&hi.to_be_bytes());
            }
        }
    }

    // Rewrite onto physical registers.
    let slot_addr = |k: u32| scratch + 8 * k as u16;
    let mut lines = Vec::new();
    let mut used = 0u16;
    for v in &g.code {
        let (op, rd, rs, rt, imm, note) = match v {
            V::Label(l) => {
                lines.push(AsmLine::Label(format!("L{l}")));
                continue;
            }
            V::Ins {
                op,
                rd,
                rs,
                rt,
                imm,
                note,
            } => (*op, *rd, *rs, *rt, *imm, note.clone()),
        };
        let use_ = op.operands();
        let mut reloads = RELOAD.iter();
        let mut phys = |r: R, read: bool, lines: &mut Vec<AsmLine>| -> u8 {
            match r {
                R::Zero => 0,
                R::V(n) => match loc[n as usize] {
                    Loc::Reg(p) => p,
                    Loc::Slot(k) if read => {
                        let p = *reloads.next().expect("at most two spilled reads");
                        lines.push(AsmLine::Instr {
                            instr: AsmInstr::plain(InstrB::i(OpB::Ld, p, 0, slot_addr(k))),
                            note: Some("reload".into()),
                        });
                        p
                    }
                    Loc::Slot(_) => RELOAD[0],
                },
            }
        };
        let prs = phys(rs, use_.reads_rs, &mut lines);
        let prt = phys(rt, use_.reads_rt, &mut lines);
        let prd = phys(rd, use_.reads_rd, &mut lines);
        for p in [prd, prs, prt] {
            used |= 1 << p;
        }
        let (ins, target) = match imm {
            Imm::Label(l) => {
                let ins = if op == OpB::J {
                    InstrB::j(op, 0)
                } else {
                    InstrB::i(op, prd, prs, 0)
                };
                (ins, Some(format!("L{l}")))
            }
            Imm::Raw(x) => (
                match op.format() {
                    super::isa::Format::R => InstrB::r(op, prd, prs, prt),
                    super::isa::Format::I => InstrB::i(op, prd, prs, x),
                    super::isa::Format::J => InstrB::j(op, x as u32),
                },
                None,
            ),
            Imm::Pool(i) => (InstrB::i(op, prd, prs, pool_addr[i]), None),
        };
        let instr = match target {
            Some(t) => AsmInstr::branch(ins, t),
            None => AsmInstr::plain(ins),
        };
        lines.push(AsmLine::Instr { instr, note });
        if let (true, R::V(n)) = (use_.writes_rd, rd) {
            if let Loc::Slot(k) = loc[n as usize] {
                lines.push(AsmLine::Instr {
                    instr: AsmInstr::plain(InstrB::i(OpB::Sd, RELOAD[0], 0, slot_addr(k))),
                    note: Some("spill".into()),
                });
            }
        }
    }

    let words = instruction_count(&lines) as u64 * 4;
    if words > map.code_b.size as u64 {
        return Err(CodegenError::RegionOverflow {
            region: RegionId::CodeB,
            needed: words,
            size: map.code_b.size,
        });
    }
    Ok(AsmListing {
        lines,
        input_cells: model.input_cells() as u32,
        layout,
        data_init,
        code_base: map.code_b.base,
        registers_used: used & !1,
    })
}
