//! Localize a wrong elemental derivative by stepping through the code, and
//! catch shared errors with finite differences.
//!
//! The classic bug: `d sqrt(x)` implemented as `-1/(2 sqrt(x))`. If only the
//! adjoint rule is wrong, the stepwise invariant fails at the first step
//! whose reverse path crosses the sqrt. If both rules share the error, every
//! invariant passes: only a finite-difference comparison notices.
//!
//! ```sh
//! cargo run --example fault_debugging
//! ```

use adinvar::prelude::*;

fn show(outcome: &[StepReport]) {
    for s in outcome {
        println!(
            "  step {} ({} = {:<4})  lhs {:>12.6}  rhs {:>12.6}  {:?}",
            s.step,
            s.target,
            s.elemental.keyword(),
            s.lhs,
            s.rhs,
            s.verdict
        );
    }
}

fn main() {
    let p = parse_program("inputs x1\noutputs y1\nv1 = sqrt x1\nv2 = sin v1\ny1 = mul v2 v1")
        .unwrap()
        .with_name("pipeline");
    let table = ElementalTable::standard();
    let tol = TolerancePolicy::default();
    let (x, xdot) = ([1.3], [0.7]);

    println!("clean table:");
    let out = debug_forward(&p, &table, &x, &xdot, 42, &tol).unwrap();
    show(&out.steps);
    println!("  first failure: {:?}", out.first_failure);

    println!("\nadjoint-only sqrt fault (tangent side stays correct):");
    let one_sided = inject_fault(&table, &FaultSpec::flipped_sqrt(FaultMode::AdjointOnly));
    let out = debug_forward(&p, &one_sided, &x, &xdot, 42, &tol).unwrap();
    show(&out.steps);
    println!("  first failure: {:?}  <- the sqrt step", out.first_failure);

    println!("\nshared sqrt fault (both rules wrong the same way):");
    let shared = inject_fault(&table, &FaultSpec::flipped_sqrt(FaultMode::Both));
    let out = debug_forward(&p, &shared, &x, &xdot, 42, &tol).unwrap();
    show(&out.steps);
    println!("  first failure: {:?}  <- invariants are blind here", out.first_failure);

    let fd = fd_cross_check(&p, &shared, &x, &xdot, &FdConfig::default(), 1e-6).unwrap();
    println!(
        "  fd cross-check: engine {:?} vs fd {:?} -> {:?}",
        fd.engine, fd.fd, fd.verdict
    );
    println!("  shared conceptual error suspected");

    // Registries load the same faults from JSON.
    let json = r#"[{"elemental": "sqrt", "mode": "adjoint",
                    "replacement": ["neg (div 1 (mul 2 (sqrt u1)))"]}]"#;
    let faults = load_fault_registry(json).unwrap();
    assert_eq!(faults[0], FaultSpec::flipped_sqrt(FaultMode::AdjointOnly));
    println!("\nregistry round-trip ok: {:?} on {:?}", faults[0].mode, faults[0].elemental);
}
