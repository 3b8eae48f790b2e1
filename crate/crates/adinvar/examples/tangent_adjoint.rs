//! First-order differentiation and the first-order differential invariant.
//!
//! The tangent program pushes a direction forward (`ydot = F' xdot`), the
//! adjoint program pulls one backward over a tape (`xbar = F'^T ybar`).
//! For any directions, `xbar . xdot == ybar . ydot` exactly: checking the
//! two dot products validates the consistency of both programs at once.
//!
//! ```sh
//! cargo run --example tangent_adjoint
//! ```

use adinvar::prelude::*;

fn main() {
    let p = parse_program(
        "inputs x1 x2\noutputs y1\nv1 = sqrt x1\nv2 = sin v1\ny1 = mul v2 x2",
    )
    .unwrap()
    .with_name("demo");
    let table = ElementalTable::standard();

    let x = [4.0, 3.0];
    let xdot = [1.0, 2.0];
    let ybar = [1.0];

    let (y, ydot) = jvp(&p, &table, &x, &xdot).unwrap();
    println!("y     = {y:?}");
    println!("ydot  = {ydot:?}   (tangent in direction {xdot:?})");

    let (_, xbar) = vjp(&p, &table, &x, &ybar).unwrap();
    println!("xbar  = {xbar:?}   (adjoint of {ybar:?})");

    let report = check_first_order(&p, &table, &x, &xdot, &ybar, &TolerancePolicy::default())
        .unwrap();
    println!(
        "invariant: xbar.xdot = {} vs ybar.ydot = {}  ->  {:?}",
        report.lhs, report.rhs, report.verdict
    );

    // Now break the adjoint rule for sqrt (the tangent side stays correct)
    // and watch the invariant flag it.
    let faulted = inject_fault(&table, &FaultSpec::flipped_sqrt(FaultMode::AdjointOnly));
    let report = check_first_order(&p, &faulted, &x, &xdot, &ybar, &TolerancePolicy::default())
        .unwrap();
    println!(
        "with a flipped sqrt adjoint: lhs = {} vs rhs = {}  ->  {:?}",
        report.lhs, report.rhs, report.verdict
    );
}
