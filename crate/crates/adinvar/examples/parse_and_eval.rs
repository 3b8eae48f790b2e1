//! Parse a single-assignment-code program, validate it, and evaluate it.
//!
//! ```sh
//! cargo run --example parse_and_eval
//! ```

use adinvar::prelude::*;

fn main() {
    let text = "\
# f(x1, x2) = (sqrt(x1) * x2, log(x1))
inputs x1 x2
outputs y1 y2
v1 = sqrt x1
y1 = mul v1 x2
y2 = log x1
";
    let program = parse_program(text).unwrap().with_name("demo");
    println!("parsed {:?}: n={}, m={}, {} steps", program.name, program.n_inputs(), program.n_outputs(), program.steps.len());

    // A parsed program is already structurally valid.
    assert!(validate_program(&program).is_empty());

    let y = eval_primal(&program, &[4.0, 3.0]).unwrap();
    println!("F(4, 3) = {y:?}");

    // The canonical text round-trips.
    let round = parse_program(&program.to_sac_text()).unwrap().with_name("demo");
    assert_eq!(program, round);
    println!("canonical form:\n{}", program.to_sac_text());

    // Structural violations are reported as data, with the offending step.
    let broken = "inputs x1\noutputs y1\ny1 = sqrt x1\ny1 = sin x1";
    println!("re-assigning y1 -> {}", parse_program(broken).unwrap_err());

    // Domain errors name the step that failed.
    println!("F(-1, 3) -> {}", eval_primal(&program, &[-1.0, 3.0]).unwrap_err());
}
