//! Derivative programs of arbitrary order by recursive application of
//! tangent and adjoint mode.
//!
//! A [`ModeWord`] selects one of the `2^nu` order-`nu` derivative programs.
//! Words are stored in *application* order: index 0 is the first
//! differentiation applied to the primal program. The conventional name
//! reads outside-in and is the reverse: `[Adjoint, Tangent]` is the
//! "tangent of adjoint" program (see [`ModeWord::outside_in_name`]).
//!
//! [`derive()`] evaluates a word by peeling its last mode: a trailing tangent
//! runs the remaining word in a tangent-pair context seeded with the level's
//! direction; a trailing adjoint runs it under tape recording and
//! reverse-sweeps with the level's direction. Each level differentiates with
//! respect to the program inputs only: every lower level's seed is lifted
//! as a constant.

pub mod context;

use std::fmt;

use thiserror::Error;

use crate::program::{eval_primal, EvalError, Program};
use crate::scalar::{DomainError, ElementalTable, RealCtx, ScalarCtx, ValId};
use context::{AdjointCtx, TangentCtx};

/// One differentiation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Tangent,
    Adjoint,
}

/// A sequence of modes in application order; its length is the derivative
/// order. The empty word is the primal program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ModeWord(Vec<Mode>);

/// Bad character in a mode word string.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid mode character {ch:?} (expected 't' or 'a')")]
pub struct ModeWordParseError {
    pub ch: char,
}

impl ModeWord {
    pub fn new(modes: Vec<Mode>) -> Self {
        ModeWord(modes)
    }

    pub fn empty() -> Self {
        ModeWord(Vec::new())
    }

    /// Parses a string over `{t, a}` in application order, e.g. `"ataat"`.
    pub fn parse(s: &str) -> Result<Self, ModeWordParseError> {
        s.chars()
            .map(|ch| match ch {
                't' => Ok(Mode::Tangent),
                'a' => Ok(Mode::Adjoint),
                ch => Err(ModeWordParseError { ch }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ModeWord)
    }

    /// The derivative order `nu`.
    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.0
    }

    /// A copy of this word with one more mode applied on top.
    pub fn extended(&self, mode: Mode) -> ModeWord {
        let mut modes = self.0.clone();
        modes.push(mode);
        ModeWord(modes)
    }

    /// The conventional outside-in name, e.g. `[Adjoint, Tangent, Adjoint,
    /// Adjoint, Tangent]` ("ataat") is the "tangent of adjoint of adjoint of
    /// tangent of adjoint" program.
    pub fn outside_in_name(&self) -> String {
        if self.0.is_empty() {
            return "primal".to_string();
        }
        self.0
            .iter()
            .rev()
            .map(|m| match m {
                Mode::Tangent => "tangent",
                Mode::Adjoint => "adjoint",
            })
            .collect::<Vec<_>>()
            .join(" of ")
    }

    /// All `2^len` words of the given length, in binary order (tangent
    /// before adjoint at each position, last position fastest).
    pub fn enumerate(len: usize) -> Vec<ModeWord> {
        let count = 1usize << len;
        (0..count)
            .map(|bits| {
                ModeWord(
                    (0..len)
                        .map(|i| {
                            if bits >> (len - 1 - i) & 1 == 0 {
                                Mode::Tangent
                            } else {
                                Mode::Adjoint
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }
}

impl fmt::Display for ModeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.0 {
            f.write_str(match m {
                Mode::Tangent => "t",
                Mode::Adjoint => "a",
            })?;
        }
        Ok(())
    }
}

/// Which free index a vector carries: an input-shaped value (some `j` slot)
/// or an output-shaped one (the `k` slot).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    XShaped(usize),
    YShaped(usize),
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::XShaped(n) | Shape::YShaped(n) => *n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::XShaped(n) => write!(f, "x-shaped({n})"),
            Shape::YShaped(m) => write!(f, "y-shaped({m})"),
        }
    }
}

/// The per-level direction vectors contracting the derivative tensor:
/// `seeds[i]` feeds level `i+1` (a tangent direction for tangent levels, an
/// adjoint direction matching the previous level's output shape otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SeedBundle {
    pub seeds: Vec<Vec<f64>>,
}

impl SeedBundle {
    pub fn new(seeds: Vec<Vec<f64>>) -> Self {
        SeedBundle { seeds }
    }

    pub fn empty() -> Self {
        SeedBundle { seeds: Vec::new() }
    }

    /// All-ones seeds conforming to the given shapes.
    pub fn ones(shapes: &[Shape]) -> Self {
        SeedBundle {
            seeds: shapes.iter().map(|s| vec![1.0; s.dim()]).collect(),
        }
    }

    /// This bundle with one more level's seed on top.
    pub fn extended(&self, seed: Vec<f64>) -> SeedBundle {
        let mut seeds = self.seeds.clone();
        seeds.push(seed);
        SeedBundle { seeds }
    }
}

/// Output of an order-`nu` derivative program evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivResult {
    /// The order-`nu` output: the final tangent for a trailing tangent mode,
    /// or the input-shaped adjoint for a trailing adjoint mode.
    pub value: Vec<f64>,
    pub shape: Shape,
    /// The primal `y = F(x)` carried along by every derivative program.
    pub primal_y: Vec<f64>,
    /// The value of the order-`(nu-1)` result `v` that the last level
    /// differentiated (equal to `primal_y` for the empty word).
    pub intermediate_v: Vec<f64>,
}

/// Computes each level's required seed shape and the output shape.
///
/// Level `i` of a tangent mode seeds an input-shaped direction and leaves
/// the running output shape unchanged; an adjoint level seeds a direction
/// shaped like the previous level's output and makes the output input-shaped.
/// The level-0 "output" is the primal `y`.
pub fn infer_shapes(p: &Program, w: &ModeWord) -> (Vec<Shape>, Shape) {
    let mut out = Shape::YShaped(p.n_outputs());
    let mut seed_shapes = Vec::with_capacity(w.order());
    for &m in w.modes() {
        match m {
            Mode::Tangent => seed_shapes.push(Shape::XShaped(p.n_inputs())),
            Mode::Adjoint => {
                seed_shapes.push(out);
                out = Shape::XShaped(p.n_inputs());
            }
        }
    }
    (seed_shapes, out)
}

/// Default bound on the derivative order; override with `ADINVAR_ORDER_CAP`.
pub const DEFAULT_ORDER_CAP: usize = 8;

/// The active order cap (each word level doubles work, so the cap keeps
/// accidental high-order requests from running away).
pub fn order_cap() -> usize {
    std::env::var("ADINVAR_ORDER_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_ORDER_CAP)
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("seed for level {level} must be {expected} ({shape}), got length {got}")]
    SeedShape {
        level: usize,
        shape: Shape,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} seeds for a word of order {expected}, got {got}")]
    SeedCount { expected: usize, got: usize },
    #[error("order {nu} exceeds the cap {cap} (set ADINVAR_ORDER_CAP to raise it)")]
    OrderCap { nu: usize, cap: usize },
}

struct RunOut {
    /// Output handles in the context `run_word` was given.
    out: Vec<ValId>,
    shape: Shape,
    primal_y: Vec<f64>,
    /// Plain value of the order-`(len-1)` output.
    inner_value: Vec<f64>,
}

/// Interprets the SAC in an arbitrary scalar context.
fn eval_sac(
    p: &Program,
    ctx: &mut dyn ScalarCtx,
    x_ids: &[ValId],
) -> Result<Vec<ValId>, EngineError> {
    debug_assert_eq!(x_ids.len(), p.n_inputs());
    let mut env: std::collections::HashMap<&str, ValId> =
        p.input_vars.iter().map(|v| v.as_str()).zip(x_ids.iter().copied()).collect();
    for (s, step) in p.steps.iter().enumerate() {
        let args: Vec<ValId> = step.operands.iter().map(|o| env[o.as_str()]).collect();
        let id = ctx
            .apply(step.elemental, step.const_param, &args)
            .map_err(|e: DomainError| EvalError::Domain {
                step: s,
                target: step.target.clone(),
                kind: step.elemental,
                source: e,
            })?;
        env.insert(step.target.as_str(), id);
    }
    Ok(p.output_vars.iter().map(|v| env[v.as_str()]).collect())
}

fn run_word(
    p: &Program,
    table: &ElementalTable,
    word: &[Mode],
    ctx: &mut dyn ScalarCtx,
    x_ids: &[ValId],
    seeds: &[Vec<f64>],
) -> Result<RunOut, EngineError> {
    let Some((&last, prefix)) = word.split_last() else {
        let out = eval_sac(p, ctx, x_ids)?;
        let primal_y: Vec<f64> = out.iter().map(|&id| ctx.value(id)).collect();
        return Ok(RunOut {
            out,
            shape: Shape::YShaped(p.n_outputs()),
            inner_value: primal_y.clone(),
            primal_y,
        });
    };
    let seed = &seeds[word.len() - 1];
    match last {
        Mode::Tangent => {
            debug_assert_eq!(seed.len(), x_ids.len());
            let mut tctx = TangentCtx::new(ctx, table);
            let lifted: Vec<ValId> = x_ids
                .iter()
                .zip(seed)
                .map(|(&xi, &si)| {
                    let s = tctx.inner().constant(si);
                    tctx.lift_active(xi, s)
                })
                .collect();
            let rec = run_word(p, table, prefix, &mut tctx, &lifted, &seeds[..word.len() - 1])?;
            let inner_value = rec.out.iter().map(|&id| tctx.value(id)).collect();
            let out = rec.out.iter().map(|&id| tctx.tangent_id(id)).collect();
            Ok(RunOut {
                out,
                shape: rec.shape,
                primal_y: rec.primal_y,
                inner_value,
            })
        }
        Mode::Adjoint => {
            let mut actx = AdjointCtx::new(ctx, table);
            let lifted: Vec<ValId> = x_ids.iter().map(|&xi| actx.lift_leaf(xi)).collect();
            let rec = run_word(p, table, prefix, &mut actx, &lifted, &seeds[..word.len() - 1])?;
            debug_assert_eq!(seed.len(), rec.out.len());
            let inner_value = rec.out.iter().map(|&id| actx.value(id)).collect();
            let seeded: Vec<(ValId, ValId)> = rec
                .out
                .iter()
                .zip(seed)
                .map(|(&node, &v)| {
                    let s = actx.inner().constant(v);
                    (node, s)
                })
                .collect();
            let out = actx
                .reverse_sweep(&seeded, &lifted)
                .map_err(|e| EvalError::Domain {
                    step: 0,
                    target: "<reverse sweep>".to_string(),
                    kind: crate::scalar::ElementalKind::Mul,
                    source: e,
                })?;
            Ok(RunOut {
                out,
                shape: Shape::XShaped(p.n_inputs()),
                primal_y: rec.primal_y,
                inner_value,
            })
        }
    }
}

fn check_conformance(
    p: &Program,
    w: &ModeWord,
    x: &[f64],
    seeds: &SeedBundle,
) -> Result<(Vec<Shape>, Shape), EngineError> {
    let cap = order_cap();
    if w.order() > cap {
        return Err(EngineError::OrderCap { nu: w.order(), cap });
    }
    if x.len() != p.n_inputs() {
        return Err(EvalError::Length {
            role: "inputs",
            expected: p.n_inputs(),
            got: x.len(),
        }
        .into());
    }
    let (seed_shapes, out_shape) = infer_shapes(p, w);
    if seeds.seeds.len() != seed_shapes.len() {
        return Err(EngineError::SeedCount {
            expected: seed_shapes.len(),
            got: seeds.seeds.len(),
        });
    }
    for (i, (seed, shape)) in seeds.seeds.iter().zip(&seed_shapes).enumerate() {
        if seed.len() != shape.dim() {
            return Err(EngineError::SeedShape {
                level: i + 1,
                shape: *shape,
                expected: shape.dim(),
                got: seed.len(),
            });
        }
    }
    Ok((seed_shapes, out_shape))
}

/// Evaluates the order-`nu` derivative program selected by `w` at `x` with
/// the given per-level directions.
pub fn derive(
    p: &Program,
    table: &ElementalTable,
    w: &ModeWord,
    x: &[f64],
    seeds: &SeedBundle,
) -> Result<DerivResult, EngineError> {
    let (_, out_shape) = check_conformance(p, w, x, seeds)?;
    let mut root = RealCtx::new();
    let x_ids: Vec<ValId> = x.iter().map(|&v| root.constant(v)).collect();
    let rec = run_word(p, table, w.modes(), &mut root, &x_ids, &seeds.seeds)?;
    debug_assert_eq!(rec.shape, out_shape);
    Ok(DerivResult {
        value: rec.out.iter().map(|&id| root.value(id)).collect(),
        shape: rec.shape,
        primal_y: rec.primal_y,
        intermediate_v: rec.inner_value,
    })
}

/// Tangent program: returns `(y, ydot)` with `ydot = F'(x) xdot`.
///
/// The primal output is bit-identical to [`eval_primal`].
pub fn jvp(
    p: &Program,
    table: &ElementalTable,
    x: &[f64],
    xdot: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), EngineError> {
    let w = ModeWord::new(vec![Mode::Tangent]);
    let res = derive(p, table, &w, x, &SeedBundle::new(vec![xdot.to_vec()]))?;
    Ok((res.primal_y, res.value))
}

/// Adjoint program: returns `(y, xbar)` with `xbar = F'(x)^T ybar`, via a
/// per-call tape that is discarded afterwards.
pub fn vjp(
    p: &Program,
    table: &ElementalTable,
    x: &[f64],
    ybar: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), EngineError> {
    let w = ModeWord::new(vec![Mode::Adjoint]);
    let res = derive(p, table, &w, x, &SeedBundle::new(vec![ybar.to_vec()]))?;
    Ok((res.primal_y, res.value))
}

/// The four second derivative programs, named outside-in: `At` is the
/// adjoint-of-tangent program, i.e. tangent mode applied first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondOrderKind {
    /// tangent of tangent: `F'' . x1dot . x2dot`
    Tt,
    /// adjoint of tangent: `F'' . x1dot . ybar2`
    At,
    /// tangent of adjoint: `F'' . ybar1 . x2dot`
    Ta,
    /// adjoint of adjoint: `F'' . ybar1 . xbarbar`
    Aa,
}

impl SecondOrderKind {
    /// The mode word in application order.
    pub fn word(self) -> ModeWord {
        let modes = match self {
            SecondOrderKind::Tt => vec![Mode::Tangent, Mode::Tangent],
            SecondOrderKind::At => vec![Mode::Tangent, Mode::Adjoint],
            SecondOrderKind::Ta => vec![Mode::Adjoint, Mode::Tangent],
            SecondOrderKind::Aa => vec![Mode::Adjoint, Mode::Adjoint],
        };
        ModeWord::new(modes)
    }
}

/// Evaluates one of the four named second derivative programs.
pub fn second_order(
    p: &Program,
    table: &ElementalTable,
    kind: SecondOrderKind,
    x: &[f64],
    seeds: &SeedBundle,
) -> Result<DerivResult, EngineError> {
    derive(p, table, &kind.word(), x, seeds)
}

/// Checks that the primal thread of a derivative evaluation is exactly the
/// plain evaluation (used by tests and the validation suite).
pub fn primal_preserved(p: &Program, table: &ElementalTable, w: &ModeWord, x: &[f64], seeds: &SeedBundle) -> Result<bool, EngineError> {
    let res = derive(p, table, w, x, seeds)?;
    let y = eval_primal(p, x)?;
    Ok(y.iter().zip(&res.primal_y).all(|(a, b)| a.to_bits() == b.to_bits()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;

    fn table() -> ElementalTable {
        ElementalTable::standard()
    }

    fn identity() -> Program {
        parse_program("inputs x1\noutputs y1\ny1 = id x1").unwrap()
    }

    fn product() -> Program {
        parse_program("inputs x1 x2\noutputs y1\ny1 = mul x1 x2").unwrap()
    }

    fn square() -> Program {
        parse_program("inputs x1\noutputs y1\ny1 = mul x1 x1").unwrap()
    }

    fn cube() -> Program {
        parse_program("inputs x1\noutputs y1\nv1 = mul x1 x1\ny1 = mul v1 x1").unwrap()
    }

    #[test]
    fn programs_and_results_cross_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Program>();
        assert_send_sync::<ElementalTable>();
        assert_send_sync::<DerivResult>();
        assert_send_sync::<ModeWord>();

        // Concurrent derives on one shared program agree with each other.
        let p = std::sync::Arc::new(cube());
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let p = p.clone();
                std::thread::spawn(move || {
                    let t = ElementalTable::standard();
                    let w = ModeWord::parse("tat").unwrap();
                    let seeds = SeedBundle::new(vec![vec![1.0]; 3]);
                    derive(&p, &t, &w, &[0.8], &seeds).unwrap().value
                })
            })
            .collect();
        let values: Vec<Vec<f64>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(values.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn mode_word_parsing_and_names() {
        let w = ModeWord::parse("ataat").unwrap();
        assert_eq!(w.order(), 5);
        assert_eq!(w.to_string(), "ataat");
        assert_eq!(
            w.outside_in_name(),
            "tangent of adjoint of adjoint of tangent of adjoint"
        );
        assert_eq!(ModeWord::parse("").unwrap(), ModeWord::empty());
        assert_eq!(ModeWord::empty().outside_in_name(), "primal");
        assert!(ModeWord::parse("tax").is_err());
        assert_eq!(
            ModeWord::parse("ta").unwrap().outside_in_name(),
            "adjoint of tangent"
        );
    }

    #[test]
    fn enumerate_words_covers_all_combinations() {
        let words = ModeWord::enumerate(3);
        assert_eq!(words.len(), 8);
        let set: std::collections::HashSet<String> =
            words.iter().map(|w| w.to_string()).collect();
        assert_eq!(set.len(), 8);
        assert!(set.contains("ttt") && set.contains("aaa") && set.contains("tat"));
    }

    #[test]
    fn shapes_follow_the_level_calculus() {
        let p = product(); // n=2, m=1
        let (seeds, out) = infer_shapes(&p, &ModeWord::parse("t").unwrap());
        assert_eq!(seeds, vec![Shape::XShaped(2)]);
        assert_eq!(out, Shape::YShaped(1));

        let (seeds, out) = infer_shapes(&p, &ModeWord::parse("a").unwrap());
        assert_eq!(seeds, vec![Shape::YShaped(1)]);
        assert_eq!(out, Shape::XShaped(2));

        let (seeds, out) = infer_shapes(&p, &ModeWord::parse("ta").unwrap());
        assert_eq!(seeds, vec![Shape::XShaped(2), Shape::YShaped(1)]);
        assert_eq!(out, Shape::XShaped(2));

        let (seeds, out) = infer_shapes(&p, &ModeWord::parse("at").unwrap());
        assert_eq!(seeds, vec![Shape::YShaped(1), Shape::XShaped(2)]);
        assert_eq!(out, Shape::XShaped(2));
    }

    #[test]
    fn jvp_examples() {
        let t = table();
        let (_, ydot) = jvp(&identity(), &t, &[2.0], &[3.0]).unwrap();
        assert_eq!(ydot, vec![3.0]);

        let (y, ydot) = jvp(&product(), &t, &[3.0, 5.0], &[1.0, 0.0]).unwrap();
        assert_eq!(y, vec![15.0]);
        assert_eq!(ydot, vec![5.0]);

        let sqrt = parse_program("inputs x1\noutputs y1\ny1 = sqrt x1").unwrap();
        let (_, ydot) = jvp(&sqrt, &t, &[4.0], &[1.0]).unwrap();
        assert_eq!(ydot, vec![0.25]);
    }

    #[test]
    fn vjp_examples() {
        let t = table();
        let (_, xbar) = vjp(&identity(), &t, &[2.0], &[7.0]).unwrap();
        assert_eq!(xbar, vec![7.0]);

        let (_, xbar) = vjp(&product(), &t, &[3.0, 5.0], &[1.0]).unwrap();
        assert_eq!(xbar, vec![5.0, 3.0]);

        let two_out =
            parse_program("inputs x1 x2\noutputs y1 y2\ny1 = id x1\ny2 = mul x1 x2").unwrap();
        let (_, xbar) = vjp(&two_out, &t, &[3.0, 5.0], &[1.0, 1.0]).unwrap();
        assert_eq!(xbar, vec![6.0, 3.0]);
    }

    #[test]
    fn second_order_examples() {
        let t = table();
        let ones = SeedBundle::new(vec![vec![1.0], vec![1.0]]);
        let res = second_order(&square(), &t, SecondOrderKind::Tt, &[3.0], &ones).unwrap();
        assert_eq!(res.value, vec![2.0]);

        for kind in [
            SecondOrderKind::Tt,
            SecondOrderKind::At,
            SecondOrderKind::Ta,
            SecondOrderKind::Aa,
        ] {
            let res = second_order(&identity(), &t, kind, &[1.2], &ones).unwrap();
            assert_eq!(res.value, vec![0.0], "{kind:?}");
        }

        let res = second_order(&square(), &t, SecondOrderKind::Ta, &[3.0], &ones).unwrap();
        assert_eq!(res.value, vec![2.0]);
    }

    #[test]
    fn third_tangent_of_cube_is_six() {
        let t = table();
        let w = ModeWord::parse("ttt").unwrap();
        let seeds = SeedBundle::new(vec![vec![1.0]; 3]);
        let res = derive(&cube(), &t, &w, &[1.0], &seeds).unwrap();
        assert!((res.value[0] - 6.0).abs() < 1e-12, "{}", res.value[0]);
        assert_eq!(res.shape, Shape::YShaped(1));
    }

    #[test]
    fn single_letter_words_reduce_to_jvp_and_vjp() {
        let t = table();
        let p = parse_program(
            "inputs x1 x2\noutputs y1\nv1 = sqrt x1\nv2 = sin v1\nv3 = mul v2 x2\ny1 = exp v3",
        )
        .unwrap();
        let x = [1.3, 0.4];
        let xdot = [0.2, -0.7];
        let ybar = [0.9];

        let (y1, ydot) = jvp(&p, &t, &x, &xdot).unwrap();
        let rt = derive(
            &p,
            &t,
            &ModeWord::parse("t").unwrap(),
            &x,
            &SeedBundle::new(vec![xdot.to_vec()]),
        )
        .unwrap();
        assert_eq!(y1, rt.primal_y);
        assert_eq!(ydot, rt.value);

        let (y2, xbar) = vjp(&p, &t, &x, &ybar).unwrap();
        let ra = derive(
            &p,
            &t,
            &ModeWord::parse("a").unwrap(),
            &x,
            &SeedBundle::new(vec![ybar.to_vec()]),
        )
        .unwrap();
        assert_eq!(y2, ra.primal_y);
        assert_eq!(xbar, ra.value);

        // Both carry the primal bit-identically.
        let y = eval_primal(&p, &x).unwrap();
        assert_eq!(y[0].to_bits(), y1[0].to_bits());
        assert_eq!(y[0].to_bits(), y2[0].to_bits());
    }

    #[test]
    fn primal_is_preserved_for_every_second_order_word() {
        let t = table();
        let p = parse_program(
            "inputs x1 x2\noutputs y1 y2\nv1 = mul x1 x2\nv2 = tanh v1\ny1 = exp v2\ny2 = add x1 v2",
        )
        .unwrap();
        let x = [0.7, -0.3];
        for w in ModeWord::enumerate(2) {
            let (shapes, _) = infer_shapes(&p, &w);
            let seeds = SeedBundle::ones(&shapes);
            assert!(primal_preserved(&p, &t, &w, &x, &seeds).unwrap(), "{w}");
        }
    }

    #[test]
    fn seed_scaling_is_multilinear() {
        let t = table();
        let p = cube();
        let w = ModeWord::parse("tat").unwrap();
        let (shapes, _) = infer_shapes(&p, &w);
        let base = SeedBundle::ones(&shapes);
        let r0 = derive(&p, &t, &w, &[0.9], &base).unwrap();
        for level in 0..3 {
            let alpha = 3.5;
            let mut scaled = base.clone();
            for v in &mut scaled.seeds[level] {
                *v *= alpha;
            }
            let r1 = derive(&p, &t, &w, &[0.9], &scaled).unwrap();
            for (a, b) in r0.value.iter().zip(&r1.value) {
                let rel = (alpha * a - b).abs() / b.abs().max(1e-300);
                assert!(rel < 1e-13, "level {level}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn tangent_seed_swap_leaves_tt_unchanged() {
        let t = table();
        let p = parse_program(
            "inputs x1 x2\noutputs y1\nv1 = mul x1 x2\nv2 = sin v1\ny1 = mul v2 v1",
        )
        .unwrap();
        let w = ModeWord::parse("tt").unwrap();
        let s1 = vec![0.3, -0.8];
        let s2 = vec![1.1, 0.4];
        let x = [0.9, 1.2];
        let a = derive(&p, &t, &w, &x, &SeedBundle::new(vec![s1.clone(), s2.clone()])).unwrap();
        let b = derive(&p, &t, &w, &x, &SeedBundle::new(vec![s2, s1])).unwrap();
        let rel = (a.value[0] - b.value[0]).abs() / a.value[0].abs().max(1e-300);
        assert!(rel < 1e-12);
    }

    #[test]
    fn conformance_errors() {
        let t = table();
        let p = product();
        let w = ModeWord::parse("ta").unwrap();
        // wrong seed count
        let err = derive(&p, &t, &w, &[1.0, 2.0], &SeedBundle::new(vec![vec![1.0, 0.0]]));
        assert!(matches!(err, Err(EngineError::SeedCount { .. })));
        // wrong seed shape: level 2 must be y-shaped (len 1)
        let err = derive(
            &p,
            &t,
            &w,
            &[1.0, 2.0],
            &SeedBundle::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]),
        );
        assert!(matches!(err, Err(EngineError::SeedShape { level: 2, .. })));
        // order cap
        let w9 = ModeWord::new(vec![Mode::Tangent; DEFAULT_ORDER_CAP + 1]);
        let (shapes, _) = infer_shapes(&p, &w9);
        let err = derive(&p, &t, &w9, &[1.0, 2.0], &SeedBundle::ones(&shapes));
        assert!(matches!(err, Err(EngineError::OrderCap { .. })));
    }

    #[test]
    fn empty_word_is_the_primal_program() {
        let t = table();
        let p = product();
        let res = derive(&p, &t, &ModeWord::empty(), &[3.0, 5.0], &SeedBundle::empty()).unwrap();
        assert_eq!(res.value, vec![15.0]);
        assert_eq!(res.shape, Shape::YShaped(1));
        assert_eq!(res.primal_y, vec![15.0]);
        assert_eq!(res.intermediate_v, vec![15.0]);
    }

    #[test]
    fn intermediate_v_carries_the_previous_level() {
        let t = table();
        // For [t, t] on the square, v = y^(1) = 2 x xdot1.
        let res = derive(
            &square(),
            &t,
            &ModeWord::parse("tt").unwrap(),
            &[3.0],
            &SeedBundle::new(vec![vec![0.5], vec![1.0]]),
        )
        .unwrap();
        assert_eq!(res.intermediate_v, vec![3.0]);
        assert_eq!(res.value, vec![1.0]); // F'' * 0.5 * 1 = 2 * 0.5
    }

    #[test]
    fn domain_errors_carry_the_step() {
        let t = table();
        let p = parse_program("inputs x1\noutputs y1\nv1 = sqrt x1\ny1 = sin v1").unwrap();
        let err = jvp(&p, &t, &[-1.0], &[1.0]).unwrap_err();
        match err {
            EngineError::Eval(EvalError::Domain { step: 0, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }
}
