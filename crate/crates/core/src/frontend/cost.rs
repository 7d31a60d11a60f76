//! Worst-case per-cycle work bound.
//!
//! Cost table (shared with the reference interpreter's dynamic counter):
//!
//! | construct                | cost                                   |
//! |--------------------------|----------------------------------------|
//! | literal, variable load   | 1                                      |
//! | `a(i)` element load      | cost(i) + 1                            |
//! | unary / binary operator  | operand costs + 1                      |
//! | `x := e`                 | cost(e) + 1                            |
//! | `a(i) := e`              | cost(i) + cost(e) + 1                  |
//! | `IF c THEN s1 ELSE s2`   | cost(c) + max(s1, cost of the rest)    |
//! | `FOR k FROM lo TO hi`    | (hi - lo + 1) * (cost(body) + 2)       |
//!
//! The output reset and the end-of-cycle return are not user work; they
//! are reported separately as `fixed_ops`.

use serde::Serialize;

use super::typeck::{TExpr, TExprKind, TStmt, TypedModel};

pub const LOOP_OVERHEAD: u64 = 2;

/// Margin between the static bound and the per-instance step budget.
pub const BUDGET_MARGIN: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CycleBound {
    pub max_ops: u64,
    pub max_stack_depth: u32,
    /// Output reset (one per output cell) plus the final return.
    pub fixed_ops: u64,
}

impl CycleBound {
    /// Per-instance step budget handed to the virtual machines.
    pub fn instruction_budget(&self) -> u64 {
        BUDGET_MARGIN.saturating_mul(self.max_ops.saturating_add(self.fixed_ops))
    }
}

pub fn complexity_check(model: &TypedModel) -> CycleBound {
    CycleBound {
        max_ops: stmts_cost(&model.body),
        max_stack_depth: model
            .body
            .iter()
            .map(stmt_depth)
            .max()
            .unwrap_or(0)
            .max(model.invariant.as_ref().map_or(0, expr_depth)),
        fixed_ops: model.output_cells() as u64 + 1,
    }
}

pub fn expr_cost(e: &TExpr) -> u64 {
    match &e.kind {
        TExprKind::Const(_) | TExprKind::Load(_) => 1,
        TExprKind::LoadIndex(_, i) => expr_cost(i) + 1,
        TExprKind::Unary(_, a) => expr_cost(a) + 1,
        TExprKind::Binary(_, a, b) => expr_cost(a) + expr_cost(b) + 1,
    }
}

pub fn stmts_cost(body: &[TStmt]) -> u64 {
    body.iter()
        .fold(0u64, |acc, s| acc.saturating_add(stmt_cost(s)))
}

pub fn stmt_cost(s: &TStmt) -> u64 {
    match s {
        TStmt::Assign { index, value, .. } => {
            index.as_ref().map_or(0, expr_cost) + expr_cost(value) + 1
        }
        TStmt::If {
            arms, otherwise, ..
        } => arms
            .iter()
            .rev()
            .fold(stmts_cost(otherwise), |rest, (cond, body)| {
                expr_cost(cond).saturating_add(stmts_cost(body).max(rest))
            }),
        TStmt::For { lo, hi, body, .. } => {
            trip_count(*lo, *hi).saturating_mul(stmts_cost(body).saturating_add(LOOP_OVERHEAD))
        }
    }
}

pub fn trip_count(lo: i64, hi: i64) -> u64 {
    if hi < lo {
        0
    } else {
        (hi - lo + 1) as u64
    }
}

/// Operand-stack depth needed to evaluate `e` left to right.
pub fn expr_depth(e: &TExpr) -> u32 {
    match &e.kind {
        TExprKind::Const(_) | TExprKind::Load(_) => 1,
        TExprKind::LoadIndex(_, i) => expr_depth(i),
        TExprKind::Unary(_, a) => expr_depth(a),
        TExprKind::Binary(_, a, b) => expr_depth(a).max(expr_depth(b) + 1),
    }
}

fn stmt_depth(s: &TStmt) -> u32 {
    match s {
        TStmt::Assign { index, value, .. } => match index {
            Some(i) => expr_depth(i).max(expr_depth(value) + 1),
            None => expr_depth(value),
        },
        TStmt::If {
            arms, otherwise, ..
        } => arms
            .iter()
            .map(|(c, b)| expr_depth(c).max(b.iter().map(stmt_depth).max().unwrap_or(0)))
            .chain(otherwise.iter().map(stmt_depth))
            .max()
            .unwrap_or(0),
        TStmt::For { body, .. } => body.iter().map(stmt_depth).max().unwrap_or(0),
    }
}
