//! Run the randomized invariant suite over the shipped corpus.
//!
//! For each program, order, and invariant class, the suite draws seed
//! bundles inside the program's safe box and checks the order-`nu`
//! invariant. Reports stream as JSON lines; everything derives from the
//! suite seed, so reruns are byte-identical.
//!
//! ```sh
//! cargo run --example invariant_suite
//! ```

use std::path::PathBuf;

use adinvar::prelude::*;
use adinvar::invariant::run_suite_streaming;

fn main() {
    let dir = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus"));
    let corpus = load_corpus_dir(&dir).unwrap();
    let table = ElementalTable::standard();
    let tol = TolerancePolicy::default();

    // The nu classes at each order partition the 2^(nu-1) prefixes by the
    // free index of their output.
    for nu in 1..=4usize {
        let classes = enumerate_invariant_classes(nu).unwrap();
        let summary: Vec<String> = classes
            .iter()
            .map(|c| {
                format!(
                    "{}:{{{}}}",
                    c.free_index,
                    c.prefixes
                        .iter()
                        .map(|w| {
                            let s = w.to_string();
                            if s.is_empty() { "(primal)".to_string() } else { s }
                        })
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .collect();
        println!("order {nu}: {} classes  {}", classes.len(), summary.join("  "));
    }

    println!("\nsuite reports (JSON lines):");
    let mut failures = 0;
    let reports = run_suite_streaming(&corpus, &table, 3, 2, 1729, &tol, |r| {
        if !r.passed() {
            failures += 1;
        }
        println!("{}", serde_json::to_string(r).unwrap());
    })
    .unwrap();
    println!("\n{} cases, {failures} failures", reports.len());
}
