//! Differential invariants of all orders, invariant-class enumeration, and
//! the randomized validation suite.
//!
//! For any order-`(nu-1)` derivative program with output `v`, its tangent
//! extension `v_t` (seeded with an input-shaped direction `xd`) and its
//! adjoint extension `xa` (seeded with a `v`-shaped direction `vb`) satisfy
//! the exact identity
//!
//! ```text
//! xa . xd  =  vb . v_t
//! ```
//!
//! [`check_order`] evaluates both extensions and compares the two dot
//! products under a [`TolerancePolicy`]; [`run_suite`] sweeps programs,
//! orders, prefix classes and random seed draws, emitting one
//! [`InvariantReport`] per case. Reports are reproducible: every random draw
//! derives from the suite seed and the case key alone.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::engine::{derive, infer_shapes, order_cap, EngineError, Mode, ModeWord, SeedBundle};
use crate::oracle::{fixed_dot, tensor_bindings, Slot};
use crate::program::Program;
use crate::scalar::ElementalTable;

pub use crate::oracle::Slot as FreeIndex;

/// Floor protecting relative error against 0/0.
const TINY_FLOOR: f64 = 1e-300;

/// Pass/fail outcome of a single check. `Inconclusive` marks checks that
/// were vacuous at the evaluation point (for example a zero tangent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Tolerance for invariant residuals.
///
/// Nesting compounds rounding, so the relative tolerance grows geometrically
/// with the order: the effective relative tolerance at order `nu` is
/// `rel_tol * order_growth^(nu-1)`. A check passes when the absolute
/// residual is below `max(abs_tol, effective_rel * max(|lhs|, |rhs|))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub order_growth: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            order_growth: 10.0,
        }
    }
}

impl TolerancePolicy {
    /// All components positive and the effective tolerance monotone in the
    /// order (growth factor at least 1).
    pub fn is_valid(&self) -> bool {
        self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.order_growth >= 1.0
            && self.abs_tol.is_finite()
            && self.rel_tol.is_finite()
            && self.order_growth.is_finite()
    }

    pub fn effective_rel(&self, nu: usize) -> f64 {
        self.rel_tol * self.order_growth.powi(nu.saturating_sub(1) as i32)
    }

    /// Residuals and verdict for one lhs/rhs pair at order `nu`.
    pub fn judge(&self, nu: usize, lhs: f64, rhs: f64) -> (f64, f64, Verdict) {
        let abs_err = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        let rel_err = abs_err / scale.max(TINY_FLOOR);
        let tol = self.abs_tol.max(self.effective_rel(nu) * scale);
        let verdict = if abs_err <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        (abs_err, rel_err, verdict)
    }
}

/// One invariant check: the lhs/rhs dot products, their discrepancy, the
/// verdict, and the RNG seed the case's draws derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub program: String,
    /// The order-`(nu-1)` prefix word, in application order (`""` for nu=1).
    pub prefix: String,
    pub nu: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub verdict: Verdict,
    pub rng_seed: u64,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Checks the order-`nu` invariant built on `prefix` (of length `nu - 1`).
///
/// `seeds` are the directions of levels `1..nu-1`; `tangent_seed` feeds the
/// tangent extension (input-shaped) and `adjoint_seed` the adjoint extension
/// (shaped like the prefix output `v`).
#[allow(clippy::too_many_arguments)]
pub fn check_order(
    p: &Program,
    table: &ElementalTable,
    prefix: &ModeWord,
    x: &[f64],
    seeds: &SeedBundle,
    tangent_seed: &[f64],
    adjoint_seed: &[f64],
    tol: &TolerancePolicy,
) -> Result<InvariantReport, EngineError> {
    let nu = prefix.order() + 1;
    let t_res = derive(
        p,
        table,
        &prefix.extended(Mode::Tangent),
        x,
        &seeds.extended(tangent_seed.to_vec()),
    )?;
    let a_res = derive(
        p,
        table,
        &prefix.extended(Mode::Adjoint),
        x,
        &seeds.extended(adjoint_seed.to_vec()),
    )?;
    let lhs = fixed_dot(&a_res.value, tangent_seed);
    let rhs = fixed_dot(adjoint_seed, &t_res.value);
    let (abs_err, rel_err, verdict) = tol.judge(nu, lhs, rhs);
    Ok(InvariantReport {
        program: p.name.clone(),
        prefix: prefix.to_string(),
        nu,
        lhs,
        rhs,
        abs_err,
        rel_err,
        verdict,
        rng_seed: 0,
    })
}

/// First-order invariant: `xbar . xdot = ybar . ydot`.
pub fn check_first_order(
    p: &Program,
    table: &ElementalTable,
    x: &[f64],
    xdot: &[f64],
    ybar: &[f64],
    tol: &TolerancePolicy,
) -> Result<InvariantReport, EngineError> {
    check_order(
        p,
        table,
        &ModeWord::empty(),
        x,
        &SeedBundle::empty(),
        xdot,
        ybar,
        tol,
    )
}

/// The two second-order pairings: the tangent program's extensions
/// (tangent-of-tangent vs adjoint-of-tangent) and the adjoint program's
/// extensions (tangent-of-adjoint vs adjoint-of-adjoint).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondOrderPair {
    TtVsAt,
    TaVsAa,
}

/// Second-order invariants over the two pairings.
///
/// `level1_seed` is `x1dot` for [`SecondOrderPair::TtVsAt`] (input-shaped)
/// and `ybar1` for [`SecondOrderPair::TaVsAa`] (output-shaped);
/// `tangent_seed`/`adjoint_seed` feed the two level-2 extensions.
#[allow(clippy::too_many_arguments)]
pub fn check_second_order(
    p: &Program,
    table: &ElementalTable,
    pair: SecondOrderPair,
    x: &[f64],
    level1_seed: &[f64],
    tangent_seed: &[f64],
    adjoint_seed: &[f64],
    tol: &TolerancePolicy,
) -> Result<InvariantReport, EngineError> {
    let prefix = match pair {
        SecondOrderPair::TtVsAt => ModeWord::new(vec![Mode::Tangent]),
        SecondOrderPair::TaVsAa => ModeWord::new(vec![Mode::Adjoint]),
    };
    check_order(
        p,
        table,
        &prefix,
        x,
        &SeedBundle::new(vec![level1_seed.to_vec()]),
        tangent_seed,
        adjoint_seed,
        tol,
    )
}

/// A class of order-`(nu-1)` prefixes whose outputs carry the same free
/// index, hence share one order-`nu` invariant form.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantClass {
    pub free_index: FreeIndex,
    pub prefixes: Vec<ModeWord>,
}

/// Groups all `2^(nu-1)` prefixes by the free index of their output.
///
/// Exactly `nu` classes result: the all-tangent prefix keeps the output slot
/// free, and a prefix whose last adjoint sits at level `i` frees slot `j_i`.
pub fn enumerate_invariant_classes(nu: usize) -> Result<Vec<InvariantClass>, EngineError> {
    let cap = order_cap();
    if nu == 0 || nu > cap {
        return Err(EngineError::OrderCap { nu, cap });
    }
    let mut classes: Vec<InvariantClass> = Vec::new();
    for prefix in ModeWord::enumerate(nu - 1) {
        let (_, free) = tensor_bindings(&prefix);
        match classes.iter_mut().find(|c| c.free_index == free) {
            Some(class) => class.prefixes.push(prefix),
            None => classes.push(InvariantClass {
                free_index: free,
                prefixes: vec![prefix],
            }),
        }
    }
    classes.sort_by_key(|c| match c.free_index {
        Slot::K => 0,
        Slot::J(i) => i,
    });
    debug_assert_eq!(classes.len(), nu);
    Ok(classes)
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Derives a per-case RNG seed from the suite seed and the case key, so any
/// single case is reproducible in isolation (FNV-1a over the key bytes).
fn case_seed(base: u64, program: &str, prefix: &str, trial: u32) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&base.to_le_bytes());
    eat(program.as_bytes());
    eat(&[0xff]);
    eat(prefix.as_bytes());
    eat(&[0xff]);
    eat(&trial.to_le_bytes());
    h
}

/// A direction with uniform components in [-1, 1], redrawn while degenerate
/// (a near-zero direction would make any invariant vacuously 0 = 0).
pub fn random_direction(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v;
        }
    }
}

/// Draws a conforming seed bundle for the given shapes.
pub fn random_bundle(rng: &mut impl Rng, shapes: &[crate::engine::Shape]) -> SeedBundle {
    SeedBundle::new(shapes.iter().map(|s| random_direction(rng, s.dim())).collect())
}

/// Runs the invariant suite: for every program, every order up to
/// `max_order`, and every invariant class representative, draws `trials`
/// random cases and streams one report per case to `on_report`.
///
/// Case errors (for example a domain failure at a drawn point) become
/// failing reports with NaN sides rather than aborting the sweep.
#[allow(clippy::too_many_arguments)]
pub fn run_suite_streaming(
    corpus: &[CorpusEntry],
    table: &ElementalTable,
    max_order: usize,
    trials: u32,
    rng_seed: u64,
    tol: &TolerancePolicy,
    mut on_report: impl FnMut(&InvariantReport),
) -> Result<Vec<InvariantReport>, SuiteError> {
    if corpus.is_empty() {
        return Err(SuiteError::EmptyCorpus);
    }
    if trials == 0 {
        return Err(SuiteError::NoTrials);
    }
    let cap = order_cap();
    if max_order == 0 || max_order > cap {
        return Err(EngineError::OrderCap {
            nu: max_order,
            cap,
        }
        .into());
    }

    let mut reports = Vec::new();
    for entry in corpus {
        let p = &entry.program;
        for nu in 1..=max_order {
            for class in enumerate_invariant_classes(nu)? {
                let prefix = &class.prefixes[0];
                for trial in 0..trials {
                    let seed = case_seed(rng_seed, &p.name, &prefix.to_string(), trial);
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let x = entry.safe_box.sample(&mut rng);
                    let (shapes, v_shape) = infer_shapes(p, prefix);
                    let bundle = random_bundle(&mut rng, &shapes);
                    let tangent_seed = random_direction(&mut rng, p.n_inputs());
                    let adjoint_seed = random_direction(&mut rng, v_shape.dim());
                    let report = match check_order(
                        p,
                        table,
                        prefix,
                        &x,
                        &bundle,
                        &tangent_seed,
                        &adjoint_seed,
                        tol,
                    ) {
                        Ok(mut r) => {
                            r.rng_seed = seed;
                            r
                        }
                        Err(_) => InvariantReport {
                            program: p.name.clone(),
                            prefix: prefix.to_string(),
                            nu,
                            lhs: f64::NAN,
                            rhs: f64::NAN,
                            abs_err: f64::NAN,
                            rel_err: f64::NAN,
                            verdict: Verdict::Fail,
                            rng_seed: seed,
                        },
                    };
                    on_report(&report);
                    reports.push(report);
                }
            }
        }
    }
    Ok(reports)
}

/// [`run_suite_streaming`] without a sink.
pub fn run_suite(
    corpus: &[CorpusEntry],
    table: &ElementalTable,
    max_order: usize,
    trials: u32,
    rng_seed: u64,
    tol: &TolerancePolicy,
) -> Result<Vec<InvariantReport>, SuiteError> {
    run_suite_streaming(corpus, table, max_order, trials, rng_seed, tol, |_| {})
}
