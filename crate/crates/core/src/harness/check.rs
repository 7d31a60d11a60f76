//! Text rendering of the exhaustive invariant check.

use std::fmt::Write as _;

use crate::frontend::{check_exhaustive, InvariantReport, TypedModel, Violation};

pub const DEFAULT_MAX_STATES: u64 = 1_000_000;

/// Returns the verdict text and whether the invariant holds.
pub fn check_report(model: &TypedModel, max_states: u64) -> (String, InvariantReport) {
    let report = check_exhaustive(model, max_states);
    let text = match &report {
        InvariantReport::Holds { states } => format!("holds, {states} states\n"),
        InvariantReport::Violated { trace, violation } => {
            let what = match violation {
                Violation::Invariant => "invariant violated".to_string(),
                Violation::Trap { trap } => format!("trap: {trap}"),
            };
            let mut s = format!("{what}\nwitness trace of length {}:\n", trace.len());
            let names: Vec<&str> = model.inputs.iter().map(|&v| model.var(v).name.as_str()).collect();
            for (cycle, inputs) in trace.iter().enumerate() {
                if names.is_empty() {
                    let _ = writeln!(s, "  cycle {cycle}: no inputs");
                } else {
                    let _ = writeln!(s, "  cycle {cycle}: {names:?} = {inputs:?}");
                }
            }
            s
        }
        InvariantReport::TooLarge { estimate, limit } => {
            format!("state space too large: estimated {estimate} state-input pairs, limit {limit}\n")
        }
    };
    (text, report)
}
