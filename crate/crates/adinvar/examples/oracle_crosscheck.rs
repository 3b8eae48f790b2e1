//! Cross-check derivative programs against the finite-difference tensor
//! oracle.
//!
//! The oracle estimates the whole derivative tensor by nested central
//! differences (Richardson-extrapolated, symmetrized), then [`contract`]
//! reproduces what any mode word computes by binding one slot per seed.
//!
//! ```sh
//! cargo run --example oracle_crosscheck
//! ```

use adinvar::prelude::*;

fn main() {
    let p = parse_program("inputs x1 x2\noutputs y1\ny1 = mul x1 x2")
        .unwrap()
        .with_name("product");
    let table = ElementalTable::standard();
    let cfg = FdConfig::default();
    let x = [3.0, 5.0];

    // The Hessian of x1*x2 is the exchange matrix.
    let hessian = fd_tensor(&p, &x, 2, &cfg).unwrap();
    println!("fd Hessian of x1*x2:");
    for j1 in 0..2 {
        let row: Vec<f64> = (0..2).map(|j2| hessian.entry(0, &[j1, j2])).collect();
        println!("  {row:?}");
    }

    // Contraction order never matters beyond rounding.
    let bindings = vec![
        (Slot::K, vec![1.0]),
        (Slot::J(1), vec![0.3, -0.7]),
        (Slot::J(2), vec![1.1, 0.2]),
    ];
    let d = check_contraction_commutativity(&hessian, &bindings, &[2, 0, 1]).unwrap();
    println!("contraction reorder discrepancy: {d:.3e}");

    // Every mode word matches its contraction of the oracle tensor.
    let waves = parse_program(
        "inputs x1 x2\noutputs y1\nv1 = mul x1 x2\nv2 = sin v1\ny1 = mul v2 v1",
    )
    .unwrap()
    .with_name("waves");
    let x = [0.9, 1.2];
    for nu in 1..=3usize {
        let tensor = fd_tensor(&waves, &x, nu, &cfg).unwrap();
        let mut worst = 0.0f64;
        for word in ModeWord::enumerate(nu) {
            let (shapes, _) = infer_shapes(&waves, &word);
            let seeds = SeedBundle::ones(&shapes);
            let res = derive(&waves, &table, &word, &x, &seeds).unwrap();
            let (bound, _) = tensor_bindings(&word);
            let bindings: Vec<(Slot, Vec<f64>)> =
                bound.into_iter().zip(seeds.seeds.iter().cloned()).collect();
            let expect = contract(&tensor, &bindings).unwrap();
            for (a, b) in expect.iter().zip(&res.value) {
                worst = worst.max((a - b).abs());
            }
        }
        println!(
            "order {nu}: worst |derive - contract(fd tensor)| over all {} words = {worst:.3e}",
            1 << nu
        );
    }
}
