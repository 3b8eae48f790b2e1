//! Random-program strategies shared by property tests.

use proptest::prelude::*;

use crate::program::{Assignment, Program};
use crate::scalar::ElementalKind;

/// Structurally valid random programs over total elementals (safe at any
/// real input), with organic fan-out from reusing earlier variables.
pub fn program_strategy() -> impl Strategy<Value = Program> {
    let unary = [
        ElementalKind::Neg,
        ElementalKind::Id,
        ElementalKind::Sin,
        ElementalKind::Cos,
        ElementalKind::Exp,
        ElementalKind::Tanh,
    ];
    let binary = [ElementalKind::Add, ElementalKind::Sub, ElementalKind::Mul];
    (
        1usize..4,
        1usize..12,
        proptest::collection::vec(0usize..1_000_000, 0..40),
    )
        .prop_map(move |(n, q, picks)| {
            let input_vars: Vec<String> = (0..n).map(|i| format!("x{}", i + 1)).collect();
            let mut avail: Vec<String> = input_vars.clone();
            let mut steps = Vec::new();
            let mut pick = picks.into_iter().cycle();
            let mut next = move || pick.next().unwrap_or(0);
            for s in 0..q {
                let target = format!("v{}", s + 1);
                let use_binary = next() % 2 == 0;
                let (elemental, operands) = if use_binary {
                    let k = binary[next() % binary.len()];
                    let a = avail[next() % avail.len()].clone();
                    let b = avail[next() % avail.len()].clone();
                    (k, vec![a, b])
                } else {
                    let k = unary[next() % unary.len()];
                    let a = avail[next() % avail.len()].clone();
                    (k, vec![a])
                };
                steps.push(Assignment {
                    target: target.clone(),
                    elemental,
                    operands,
                    const_param: None,
                });
                avail.push(target);
            }
            Program {
                name: "random".into(),
                input_vars,
                output_vars: vec![format!("v{q}")],
                steps,
            }
        })
}
