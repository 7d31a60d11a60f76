//! Breadth-first enumeration of reachable states, a desk-scale stand-in
//! for discharging the invariant by proof.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use super::interp::{Interpreter, Trap};
use super::typeck::{TypedModel, VarId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Invariant,
    Trap { trap: Trap },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum InvariantReport {
    Holds {
        states: usize,
    },
    /// `trace` is the input sequence (flattened input cells per cycle)
    /// leading from the initial state to the violation.
    Violated {
        trace: Vec<Vec<i64>>,
        violation: Violation,
    },
    TooLarge {
        estimate: u128,
        limit: u64,
    },
}

fn domain_product(model: &TypedModel, ids: &[VarId]) -> u128 {
    ids.iter().fold(1u128, |acc, &id| {
        let v = model.var(id);
        let per_cell = v.ty.elem().cardinality();
        (0..v.ty.cells()).fold(acc, |a, _| a.saturating_mul(per_cell))
    })
}

/// |state space| x |input space| from declared ranges, saturating.
pub fn state_space_estimate(model: &TypedModel) -> u128 {
    domain_product(model, &model.state).saturating_mul(domain_product(model, &model.inputs))
}

fn input_domains(model: &TypedModel) -> Vec<(i64, i64)> {
    model
        .inputs
        .iter()
        .flat_map(|&id| {
            let v = model.var(id);
            let elem = v.ty.elem();
            let bounds = match elem {
                super::ast::ScalarType::Bool => (0, 1),
                super::ast::ScalarType::Int { lo, hi } => (lo, hi),
            };
            std::iter::repeat(bounds).take(v.ty.cells() as usize)
        })
        .collect()
}

/// Every input vector in lexicographic order.
fn all_inputs(domains: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out = vec![domains.iter().map(|d| d.0).collect::<Vec<_>>()];
    loop {
        let mut next = out.last().unwrap().clone();
        let mut carried = true;
        for (cell, &(lo, hi)) in next.iter_mut().zip(domains).rev() {
            if *cell < hi {
                *cell += 1;
                carried = false;
                break;
            }
            *cell = lo;
        }
        if carried {
            return out;
        }
        out.push(next);
    }
}

pub fn check_exhaustive(model: &TypedModel, max_states: u64) -> InvariantReport {
    let estimate = state_space_estimate(model);
    if estimate > max_states as u128 {
        return InvariantReport::TooLarge {
            estimate,
            limit: max_states,
        };
    }
    let inputs = all_inputs(&input_domains(model));
    let mut interp = Interpreter::new(model);
    let init = interp.state();
    match interp.invariant_holds() {
        Ok(true) => {}
        Ok(false) => {
            return InvariantReport::Violated {
                trace: vec![],
                violation: Violation::Invariant,
            }
        }
        Err(trap) => {
            return InvariantReport::Violated {
                trace: vec![],
                violation: Violation::Trap { trap },
            }
        }
    }

    // states[i] = (state, parent index, input vector index leading here)
    let mut states: Vec<(Vec<i64>, usize, usize)> = vec![(init.clone(), usize::MAX, 0)];
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::from([(init, 0)]);
    let mut queue = VecDeque::from([0usize]);

    let witness = |states: &[(Vec<i64>, usize, usize)], mut at: usize, last: &[i64]| {
        let mut trace = vec![last.to_vec()];
        while states[at].1 != usize::MAX {
            trace.push(inputs[states[at].2].clone());
            at = states[at].1;
        }
        trace.reverse();
        trace
    };

    while let Some(at) = queue.pop_front() {
        for (k, input) in inputs.iter().enumerate() {
            interp.set_state(&states[at].0);
            let outcome = interp.cycle(input).and_then(|_| interp.invariant_holds());
            let violation = match outcome {
                Ok(true) => None,
                Ok(false) => Some(Violation::Invariant),
                Err(trap) => Some(Violation::Trap { trap }),
            };
            if let Some(violation) = violation {
                return InvariantReport::Violated {
                    trace: witness(&states, at, input),
                    violation,
                };
            }
            let next = interp.state();
            if !seen.contains_key(&next) {
                seen.insert(next.clone(), states.len());
                queue.push_back(states.len());
                states.push((next, at, k));
            }
        }
    }
    InvariantReport::Holds {
        states: states.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, typecheck};

    fn report(src: &str, max: u64) -> InvariantReport {
        check_exhaustive(&typecheck(&parse(src).unwrap()).unwrap(), max)
    }

    #[test]
    fn trivially_true() {
        assert_eq!(
            report("MACHINE M INPUTS i:BOOL STATE s:BOOL INVARIANT TRUE OPERATION user_logic BEGIN s := i END", 100),
            InvariantReport::Holds { states: 2 }
        );
    }

    #[test]
    fn wrapping_counter_holds() {
        let r = report(
            "MACHINE C STATE c:INT(0..3) INVARIANT c < 4 OPERATION user_logic BEGIN \
             IF c = 3 THEN c := 0 ELSE c := c + 1 END END",
            100,
        );
        assert_eq!(r, InvariantReport::Holds { states: 4 });
    }

    #[test]
    fn overflowing_counter_traps_after_four_cycles() {
        let r = report(
            "MACHINE C STATE c:INT(0..3) INVARIANT c < 4 OPERATION user_logic BEGIN c := c + 1 END",
            100,
        );
        let InvariantReport::Violated { trace, violation } = r else {
            panic!("{r:?}")
        };
        assert_eq!(trace.len(), 4);
        assert!(matches!(
            violation,
            Violation::Trap {
                trap: Trap::RangeViolation { value: 4, .. }
            }
        ));
    }

    #[test]
    fn invariant_violation_found_with_shortest_trace() {
        let r = report(
            "MACHINE L INPUTS up:BOOL STATE c:INT(0..7) INVARIANT c /= 2 OPERATION user_logic BEGIN \
             IF up AND c < 7 THEN c := c + 1 END END",
            1000,
        );
        assert_eq!(
            r,
            InvariantReport::Violated {
                trace: vec![vec![1], vec![1]],
                violation: Violation::Invariant
            }
        );
    }

    #[test]
    fn wide_state_refused() {
        let r = report(
            "MACHINE W STATE x:INT(-2147483648..2147483647) OPERATION user_logic BEGIN x := 0 END",
            1_000_000,
        );
        assert_eq!(
            r,
            InvariantReport::TooLarge {
                estimate: 1 << 32,
                limit: 1_000_000
            }
        );
    }

    #[test]
    fn input_enumeration() {
        let all = all_inputs(&[(0, 1), (2, 4)]);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 2]);
        assert_eq!(all[5], vec![1, 4]);
        assert_eq!(all_inputs(&[]), vec![Vec::<i64>::new()]);
    }
}
