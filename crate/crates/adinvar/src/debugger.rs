//! Stepwise derivative debugging and fault injection.
//!
//! [`debug_forward`] walks a program once, propagating both tangents and a
//! tape, then checks the first-order invariant truncated at every step: seed
//! that step's adjoint with a random scalar, sweep back to the inputs, and
//! compare `xbar . xdot` against `seed * tangent(step)`. A wrong derivative
//! rule on one side breaks the identity at the first step whose reverse path
//! crosses it, which localizes the fault.
//!
//! Rules that are wrong on *both* sides are invisible to invariants: both
//! dot products flip together. [`fd_cross_check`] closes that gap by
//! comparing the table-driven tangent against a finite difference of the
//! primal, which uses no derivative rules at all.
//!
//! Faults are injected per elemental via [`FaultSpec`]: a replacement set of
//! partial rules applied to the tangent direction, the adjoint direction, or
//! both. A registry file carries them as JSON.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::engine::{jvp, EngineError};
use crate::invariant::{TolerancePolicy, Verdict};
use crate::oracle::{fd_jvp, fixed_dot, FdConfig, OracleError};
use crate::program::{EvalError, Program};
use crate::scalar::{
    eval_rule, parse_rule_expr, DomainError, ElementalKind, ElementalTable, RealCtx, RuleExpr,
    ScalarCtx,
};

/// Which propagation direction a fault corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultMode {
    #[serde(rename = "tangent")]
    TangentOnly,
    #[serde(rename = "adjoint")]
    AdjointOnly,
    Both,
}

/// A substitute partial-rule set for one elemental.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    pub elemental: ElementalKind,
    pub mode: FaultMode,
    pub replacement: Vec<RuleExpr>,
}

#[derive(Debug, Error)]
pub enum FaultError {
    #[error("unknown elemental '{word}'")]
    UnknownElemental { word: String },
    #[error("{elemental}: replacement has {got} rules, arity is {expected}")]
    ReplacementArity {
        elemental: ElementalKind,
        expected: usize,
        got: usize,
    },
    #[error("{elemental}: replacement references operand u{operand} beyond the arity")]
    OperandOutOfRange {
        elemental: ElementalKind,
        operand: usize,
    },
    #[error("{elemental}: bad replacement rule: {msg}")]
    BadRule { elemental: ElementalKind, msg: String },
    #[error("invalid fault registry: {0}")]
    BadRegistry(#[from] serde_json::Error),
}

impl FaultSpec {
    pub fn new(
        elemental: ElementalKind,
        mode: FaultMode,
        replacement: Vec<RuleExpr>,
    ) -> Result<Self, FaultError> {
        if replacement.len() != elemental.arity() {
            return Err(FaultError::ReplacementArity {
                elemental,
                expected: elemental.arity(),
                got: replacement.len(),
            });
        }
        for rule in &replacement {
            if let Some(max) = rule.max_operand() {
                if max >= elemental.arity() {
                    return Err(FaultError::OperandOutOfRange {
                        elemental,
                        operand: max + 1,
                    });
                }
            }
        }
        Ok(FaultSpec {
            elemental,
            mode,
            replacement,
        })
    }

    /// The sign-flipped square-root rule from the classic war story:
    /// `d sqrt(u) = -1/(2 sqrt(u))`.
    pub fn flipped_sqrt(mode: FaultMode) -> Self {
        FaultSpec::new(
            ElementalKind::Sqrt,
            mode,
            vec![parse_rule_expr("neg (div 1 (mul 2 (sqrt u1)))").unwrap()],
        )
        .unwrap()
    }
}

/// Returns a table whose tangent rules, adjoint rules, or both are replaced
/// for the faulted elemental; the input table is unchanged.
pub fn inject_fault(table: &ElementalTable, fault: &FaultSpec) -> ElementalTable {
    let mut out = table.clone();
    match fault.mode {
        FaultMode::TangentOnly => out.set_tangent_rules(fault.elemental, fault.replacement.clone()),
        FaultMode::AdjointOnly => out.set_adjoint_rules(fault.elemental, fault.replacement.clone()),
        FaultMode::Both => {
            out.set_tangent_rules(fault.elemental, fault.replacement.clone());
            out.set_adjoint_rules(fault.elemental, fault.replacement.clone());
        }
    }
    out
}

#[derive(Deserialize)]
struct RawFault {
    elemental: String,
    mode: FaultMode,
    replacement: Vec<String>,
}

/// Parses a JSON fault registry: a list of
/// `{"elemental": ..., "mode": "tangent"|"adjoint"|"both", "replacement": [...]}`
/// where each replacement entry is a rule expression over `u1`, `u2`.
pub fn load_fault_registry(json: &str) -> Result<Vec<FaultSpec>, FaultError> {
    let raw: Vec<RawFault> = serde_json::from_str(json)?;
    raw.into_iter()
        .map(|r| {
            let elemental =
                ElementalKind::from_keyword(&r.elemental).ok_or(FaultError::UnknownElemental {
                    word: r.elemental.clone(),
                })?;
            let replacement = r
                .replacement
                .iter()
                .map(|text| {
                    parse_rule_expr(text).map_err(|msg| FaultError::BadRule { elemental, msg })
                })
                .collect::<Result<Vec<_>, _>>()?;
            FaultSpec::new(elemental, r.mode, replacement)
        })
        .collect()
}

/// Applies every fault in a registry to a fresh copy of the table.
pub fn apply_faults(table: &ElementalTable, faults: &[FaultSpec]) -> ElementalTable {
    let mut out = table.clone();
    for f in faults {
        out = inject_fault(&out, f);
    }
    out
}

/// The invariant check truncated at one step (0-based index into the SAC).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepReport {
    pub step: usize,
    pub target: String,
    pub elemental: ElementalKind,
    /// `xbar . xdot` after the reverse sweep from this step.
    pub lhs: f64,
    /// `seed * tangent(step)`.
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub verdict: Verdict,
}

/// Result of one stepwise debugging run.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugOutcome {
    pub steps: Vec<StepReport>,
    /// Least failing step, if any; inconclusive steps never count as failed.
    pub first_failure: Option<usize>,
}

struct FwdNode {
    value: f64,
    tangent: f64,
    operands: [usize; 2],
    partials: [f64; 2],
    arity: usize,
}

fn eval_partials_f64(
    rules: &[RuleExpr],
    operands: &[f64],
    param: Option<f64>,
) -> Result<Vec<f64>, DomainError> {
    let mut ctx = RealCtx::new();
    let ids: Vec<usize> = operands.iter().map(|&v| ctx.constant(v)).collect();
    rules
        .iter()
        .map(|r| eval_rule(&mut ctx, r, &ids, param).map(|id| ctx.value(id)))
        .collect()
}

/// Steps forward through the SAC propagating tangents and recording a tape;
/// at each step, seeds that step's adjoint with a reproducible random scalar,
/// sweeps back to the inputs, and reports the truncated first-order
/// invariant. The single forward tape is reused by every sweep.
///
/// Steps whose tangent is exactly zero are reported inconclusive: the
/// invariant is vacuous there. All steps after a failure are still checked.
pub fn debug_forward(
    p: &Program,
    table: &ElementalTable,
    x: &[f64],
    xdot: &[f64],
    rng_seed: u64,
    tol: &TolerancePolicy,
) -> Result<DebugOutcome, EngineError> {
    let n = p.n_inputs();
    if x.len() != n || xdot.len() != n {
        return Err(EvalError::Length {
            role: "inputs",
            expected: n,
            got: x.len().min(xdot.len()),
        }
        .into());
    }

    // Single forward sweep: values and tangents via the tangent rules, tape
    // partials via the adjoint rules. Nodes 0..n are the inputs.
    let mut nodes: Vec<FwdNode> = x
        .iter()
        .zip(xdot)
        .map(|(&value, &tangent)| FwdNode {
            value,
            tangent,
            operands: [0; 2],
            partials: [0.0; 2],
            arity: 0,
        })
        .collect();
    let mut index: std::collections::HashMap<&str, usize> = p
        .input_vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();

    for (s, step) in p.steps.iter().enumerate() {
        let at_step = |e: DomainError| -> EngineError {
            EvalError::Domain {
                step: s,
                target: step.target.clone(),
                kind: step.elemental,
                source: e,
            }
            .into()
        };
        let ops: Vec<usize> = step.operands.iter().map(|o| index[o.as_str()]).collect();
        let vals: Vec<f64> = ops.iter().map(|&o| nodes[o].value).collect();
        let value = crate::scalar::elemental_value(step.elemental, &vals, step.const_param)
            .map_err(at_step)?;
        let t_partials = eval_partials_f64(
            table.tangent_rules(step.elemental),
            &vals,
            step.const_param,
        )
        .map_err(at_step)?;
        let a_partials = eval_partials_f64(
            table.adjoint_rules(step.elemental),
            &vals,
            step.const_param,
        )
        .map_err(at_step)?;

        let mut tangent = 0.0;
        for (tp, &o) in t_partials.iter().zip(&ops) {
            tangent += tp * nodes[o].tangent;
        }
        let mut node = FwdNode {
            value,
            tangent,
            operands: [0; 2],
            partials: [0.0; 2],
            arity: ops.len(),
        };
        for (i, (&o, &ap)) in ops.iter().zip(&a_partials).enumerate() {
            node.operands[i] = o;
            node.partials[i] = ap;
        }
        nodes.push(node);
        index.insert(step.target.as_str(), n + s);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut steps = Vec::with_capacity(p.steps.len());
    let mut first_failure = None;
    let mut adjoints = vec![0.0f64; nodes.len()];

    for (s, step) in p.steps.iter().enumerate() {
        // Random scalar seed; tiny magnitudes invite cancellation, redraw.
        let mut seed: f64 = rng.random_range(-1.0..=1.0);
        while seed.abs() < 1e-3 {
            seed = rng.random_range(-1.0..=1.0);
        }

        let node_id = n + s;
        adjoints[..=node_id].fill(0.0);
        adjoints[node_id] = seed;
        // Reverse sweep over the shared tape, truncated at this step.
        for r in (n..=node_id).rev() {
            let adj = adjoints[r];
            if adj == 0.0 {
                continue;
            }
            for i in 0..nodes[r].arity {
                adjoints[nodes[r].operands[i]] += nodes[r].partials[i] * adj;
            }
        }
        let xbar: Vec<f64> = adjoints[..n].to_vec();
        let lhs = fixed_dot(&xbar, xdot);
        let rhs = seed * nodes[node_id].tangent;
        let (abs_err, rel_err, mut verdict) = tol.judge(1, lhs, rhs);
        if nodes[node_id].tangent == 0.0 {
            verdict = Verdict::Inconclusive;
        }
        if verdict == Verdict::Fail && first_failure.is_none() {
            first_failure = Some(s);
        }
        steps.push(StepReport {
            step: s,
            target: step.target.clone(),
            elemental: step.elemental,
            lhs,
            rhs,
            abs_err,
            rel_err,
            verdict,
        });
    }

    Ok(DebugOutcome {
        steps,
        first_failure,
    })
}

/// Outcome of the tangent-vs-finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FdCheckReport {
    /// `F'(x) xdot` through the derivative table.
    pub engine: Vec<f64>,
    /// The same directional derivative by central differences of the primal.
    pub fd: Vec<f64>,
    pub abs_err: f64,
    pub rel_err: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Error)]
pub enum FdCheckError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Compares the table-driven tangent against a finite-difference tangent,
/// which never consults the derivative table. This is the only check that
/// catches a rule that is wrong in both propagation directions.
///
/// Passes when the worst component error is below
/// `rel_tol * max(scale, 1)`; both sides exactly zero is inconclusive.
pub fn fd_cross_check(
    p: &Program,
    table: &ElementalTable,
    x: &[f64],
    xdot: &[f64],
    cfg: &FdConfig,
    rel_tol: f64,
) -> Result<FdCheckReport, FdCheckError> {
    let (_, engine) = jvp(p, table, x, xdot)?;
    let fd = fd_jvp(p, x, xdot, cfg)?;
    let abs_err = engine
        .iter()
        .zip(&fd)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    let scale = engine
        .iter()
        .chain(&fd)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let rel_err = abs_err / scale.max(1e-300);
    let verdict = if scale == 0.0 {
        Verdict::Inconclusive
    } else if abs_err <= rel_tol * scale.max(1.0) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(FdCheckReport {
        engine,
        fd,
        abs_err,
        rel_err,
        verdict,
    })
}

/// Default relative tolerance for [`fd_cross_check`]: loose enough for
/// finite-difference noise, tight enough to flag any real rule error.
pub const FD_CHECK_REL_TOL: f64 = 1e-6;
