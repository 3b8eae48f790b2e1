//! Derivative programs of arbitrary order over single assignment codes, with
//! a validation harness based on differential invariants.
//!
//! The library evaluates programs `F: R^n -> R^m` written as single
//! assignment codes (`.sac` files), builds their derivative programs of any
//! order by nesting tangent and adjoint mode, and validates them three ways:
//!
//! - **Differential invariants**: the tangent and adjoint extensions of the
//!   same order-`(nu-1)` derivative program must produce equal dot products
//!   ([`invariant`]).
//! - **Finite differences**: a brute-force derivative-tensor oracle
//!   cross-checks the engine and catches errors the invariants are blind to
//!   ([`oracle`]).
//! - **Stepwise debugging**: walking the code step by step localizes the
//!   first elemental whose tangent and adjoint rules disagree ([`debugger`]).
//!
//! # Example
//!
//! ```
//! use adinvar::prelude::*;
//!
//! let p = parse_program("inputs x1\noutputs y1\nv1 = mul x1 x1\ny1 = mul v1 x1").unwrap();
//! let table = ElementalTable::standard();
//!
//! // Third derivative of x^3 in tangent-of-tangent-of-tangent mode.
//! let word = ModeWord::parse("ttt").unwrap();
//! let seeds = SeedBundle::new(vec![vec![1.0]; 3]);
//! let res = derive(&p, &table, &word, &[1.0], &seeds).unwrap();
//! assert!((res.value[0] - 6.0).abs() < 1e-12);
//! ```
//!
//! The `adinvar` binary exposes the same machinery as `check`, `derive`,
//! `debug` and `oracle` subcommands; see the crate examples for library
//! walkthroughs of each capability.

pub mod cli;
pub mod corpus;
pub mod debugger;
pub mod engine;
pub mod invariant;
pub mod oracle;
pub mod program;
pub mod scalar;
#[cfg(test)]
pub(crate) mod testgen;

/// The commonly used surface in one import.
pub mod prelude {
    pub use crate::corpus::{load_corpus_dir, load_program_file, CorpusEntry, SafeBox};
    pub use crate::debugger::{
        debug_forward, fd_cross_check, inject_fault, load_fault_registry, FaultMode, FaultSpec,
        StepReport,
    };
    pub use crate::engine::{
        derive, infer_shapes, jvp, second_order, vjp, DerivResult, Mode, ModeWord,
        SecondOrderKind, SeedBundle, Shape,
    };
    pub use crate::invariant::{
        check_first_order, check_order, check_second_order, enumerate_invariant_classes,
        run_suite, FreeIndex, InvariantClass, InvariantReport, SecondOrderPair, TolerancePolicy,
        Verdict,
    };
    pub use crate::oracle::{
        check_contraction_commutativity, contract, fd_jvp, fd_tensor, tensor_bindings,
        DerivTensor, FdConfig, Slot,
    };
    pub use crate::program::{eval_primal, parse_program, validate_program, Program, Violation};
    pub use crate::scalar::{elemental_partials, elemental_value, ElementalKind, ElementalTable};
}
