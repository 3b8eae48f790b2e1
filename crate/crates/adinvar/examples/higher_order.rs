//! Derivative programs of arbitrary order by nesting tangent and adjoint
//! modes.
//!
//! A mode word over {t, a} in application order selects one of the `2^nu`
//! order-`nu` derivative programs; names read outside-in ("ta" is the
//! adjoint of tangent program). Each level contracts one slot of the
//! derivative tensor with that level's seed.
//!
//! ```sh
//! cargo run --example higher_order
//! ```

use adinvar::prelude::*;

fn main() {
    let table = ElementalTable::standard();

    // d^3/dx^3 of x^3 is 6, through all eight third derivative programs.
    let cube = parse_program("inputs x1\noutputs y1\nv1 = mul x1 x1\ny1 = mul v1 x1")
        .unwrap()
        .with_name("cube");
    println!("all eight order-3 words on x^3 at x=1 (all seeds 1):");
    for word in ModeWord::enumerate(3) {
        let (shapes, _) = infer_shapes(&cube, &word);
        let res = derive(&cube, &table, &word, &[1.0], &SeedBundle::ones(&shapes)).unwrap();
        println!(
            "  {word}  {:<40}  ->  {:?}",
            word.outside_in_name(),
            res.value
        );
    }

    // The four named second derivative programs are the length-2 words.
    let square = parse_program("inputs x1\noutputs y1\ny1 = mul x1 x1").unwrap();
    let seeds = SeedBundle::new(vec![vec![1.0], vec![1.0]]);
    for kind in [
        SecondOrderKind::Tt,
        SecondOrderKind::At,
        SecondOrderKind::Ta,
        SecondOrderKind::Aa,
    ] {
        let res = second_order(&square, &table, kind, &[3.0], &seeds).unwrap();
        println!("{kind:?} of x^2 at 3: {:?} ({})", res.value, res.shape);
    }

    // A fifth-order word on a two-input program; seed shapes follow the
    // level calculus (adjoint levels seed the previous level's shape).
    let p = parse_program("inputs x1 x2\noutputs y1\nv1 = mul x1 x2\nv2 = sin v1\ny1 = mul v2 v1")
        .unwrap()
        .with_name("waves");
    let word = ModeWord::parse("ataat").unwrap();
    println!("\nword {word} = {} program", word.outside_in_name());
    let (shapes, out_shape) = infer_shapes(&p, &word);
    for (i, s) in shapes.iter().enumerate() {
        println!("  level {} seed: {s}", i + 1);
    }
    println!("  output: {out_shape}");
    let res = derive(&p, &table, &word, &[0.9, 1.2], &SeedBundle::ones(&shapes)).unwrap();
    println!("  value at (0.9, 1.2) with unit seeds: {:?}", res.value);

    // The general invariant: tangent and adjoint extensions of any prefix
    // agree, at every order.
    let report = check_order(
        &p,
        &table,
        &ModeWord::parse("ataa").unwrap(),
        &[0.9, 1.2],
        &SeedBundle::ones(&infer_shapes(&p, &ModeWord::parse("ataa").unwrap()).0),
        &[1.0, 0.5],
        &[0.25, -1.0],
        &TolerancePolicy::default(),
    )
    .unwrap();
    println!(
        "\norder-5 invariant on prefix ataa: lhs = {:.12} vs rhs = {:.12} -> {:?}",
        report.lhs, report.rhs, report.verdict
    );
}
