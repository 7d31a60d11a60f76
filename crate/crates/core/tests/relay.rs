//! Relay netlists through the whole pipeline, against a direct
//! contact-network evaluator that shares no code with the translation.

use std::collections::HashMap;
use std::sync::Arc;

use duplex_core::duplex::{run, Scenario, Sim, SimConfig};
use duplex_core::frontend::{complexity_check, typecheck, Interpreter};
use duplex_core::mcu::map::MemoryMap;
use duplex_core::mcu::Program;
use duplex_core::relay::{parse_schematic, translate, Contact, Rung, Schematic};
use proptest::prelude::*;

/// Scan-cycle semantics written straight from the rung list: every coil
/// reads last cycle's coils, every output reads this cycle's.
fn scan(sch: &Schematic, trace: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let mut coils: HashMap<String, bool> = sch.coils.iter().map(|r| (r.target.clone(), false)).collect();
    let mut out = Vec::new();
    for inputs in trace {
        let mut env: HashMap<String, bool> = sch.inputs.iter().cloned().zip(inputs.iter().copied()).collect();
        env.extend(coils.clone());
        let next: HashMap<String, bool> = sch
            .coils
            .iter()
            .map(|r| (r.target.clone(), r.network.eval(&|n| env[n])))
            .collect();
        env.extend(next.clone());
        coils = next;
        out.push(sch.outputs.iter().map(|r| r.network.eval(&|n| env[n])).collect());
    }
    out
}

fn interpret(sch: &Schematic, trace: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let m = typecheck(&translate(sch)).unwrap();
    let mut it = Interpreter::new(&m);
    trace
        .iter()
        .map(|i| {
            let cells: Vec<i64> = i.iter().map(|&b| b as i64).collect();
            it.cycle(&cells).unwrap();
            it.outputs().into_iter().map(|v| v != 0).collect()
        })
        .collect()
}

fn network(names: Vec<String>) -> impl Strategy<Value = Contact> {
    let leaf = (proptest::sample::select(names), any::<bool>())
        .prop_map(|(n, closed)| if closed { Contact::Nc(n) } else { Contact::No(n) });
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Contact::Series),
            proptest::collection::vec(inner, 2..4).prop_map(Contact::Parallel),
        ]
    })
}

fn schematic() -> impl Strategy<Value = Schematic> {
    (1usize..4, 0usize..4, 1usize..3).prop_flat_map(|(ni, nc, no)| {
        let inputs: Vec<String> = (0..ni).map(|i| format!("in{i}")).collect();
        let coils: Vec<String> = (0..nc).map(|i| format!("K{i}")).collect();
        let contacts: Vec<String> = inputs.iter().chain(&coils).cloned().collect();
        let rungs = |targets: Vec<String>| {
            let n = targets.len();
            (proptest::collection::vec(network(contacts.clone()), n), Just(targets)).prop_map(|(nets, targets)| {
                targets
                    .into_iter()
                    .zip(nets)
                    .enumerate()
                    .map(|(line, (target, network))| Rung {
                        target,
                        network,
                        line: line as u32 + 1,
                    })
                    .collect::<Vec<_>>()
            })
        };
        let outputs: Vec<String> = (0..no).map(|i| format!("lamp{i}")).collect();
        (Just(inputs), rungs(coils), rungs(outputs)).prop_map(|(inputs, coils, outputs)| Schematic {
            inputs,
            coils,
            outputs,
        })
    })
}

fn input_trace(width: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
    proptest::collection::vec(proptest::collection::vec(any::<bool>(), width), 1..12)
}

proptest! {
    #[test]
    fn translation_matches_scan_semantics(
        (sch, trace) in schematic().prop_flat_map(|s| { let w = s.inputs.len(); (Just(s), input_trace(w)) })
    ) {
        prop_assert_eq!(interpret(&sch, &trace), scan(&sch, &trace));
    }

    /// Rung order carries no meaning: coil updates are synchronous.
    #[test]
    fn rung_order_is_irrelevant(
        (sch, trace, perm) in schematic().prop_flat_map(|s| {
            let w = s.inputs.len();
            let n = s.coils.len();
            (Just(s), input_trace(w), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
    ) {
        let mut shuffled = sch.clone();
        shuffled.coils = perm.iter().map(|&i| sch.coils[i].clone()).collect();
        prop_assert_eq!(interpret(&shuffled, &trace), interpret(&sch, &trace));
    }
}

#[test]
fn schematic_without_coils() {
    let s = parse_schematic("INPUT a, b; OUTPUT both = a & b; OUTPUT either = NO(a) | NO(b)").unwrap();
    assert!(s.coils.is_empty());
    let trace = vec![vec![true, false], vec![true, true]];
    assert_eq!(interpret(&s, &trace), vec![vec![false, true], vec![true, true]]);
}

#[test]
fn seal_in_in_the_duplex_simulator() {
    let s = parse_schematic("INPUT start, stop;\nCOIL K = (start | K) & !stop;\nOUTPUT motor = K;").unwrap();
    let m = typecheck(&translate(&s)).unwrap();
    let p = Arc::new(Program::build(&m, MemoryMap::default()).unwrap());
    let sim = Sim::new(p, SimConfig::with_budget(complexity_check(&m).instruction_budget())).unwrap();
    let scenario = Scenario::parse(
        r#"{"inputs":[{"at":0,"set":{"start":1}},{"at":1,"set":{"start":0}},{"at":2,"set":{"stop":1}}],"cycles":3}"#,
    )
    .unwrap();
    let trace = run(sim, &scenario, None).unwrap();
    assert_eq!(trace.board, vec![vec![true], vec![true], vec![false]]);
}
