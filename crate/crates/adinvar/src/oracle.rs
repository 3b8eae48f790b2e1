//! Brute-force derivative-tensor oracle and index contraction.
//!
//! The oracle estimates whole derivative tensors `F^[nu]` by nested central
//! finite differences with per-coordinate step scaling and Richardson
//! extrapolation, then symmetrizes over the differentiation indices. It is
//! deliberately independent of the derivative engine: the only shared code
//! is primal evaluation. [`contract`] implements index contraction with a
//! fixed left-to-right summation order, so reordering contractions is a
//! meaningful (rounding-only) experiment: see
//! [`check_contraction_commutativity`].
//!
//! Higher-order finite differences amplify rounding, which caps the oracle
//! at third order; higher orders are validated by differential invariants
//! instead, which need no oracle.

use thiserror::Error;

use crate::engine::{Mode, ModeWord};
use crate::program::{eval_primal, EvalError, Program};

/// One index slot of a derivative tensor: the output slot `k` or the
/// `i`-th differentiation slot (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    K,
    J(usize),
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Slot::K => write!(f, "k"),
            Slot::J(i) => write!(f, "j{i}"),
        }
    }
}

/// Dense `F^[order] in R^(m x n^order)`, indexed `(k, j_1, ..., j_order)`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivTensor {
    pub order: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub entries: Vec<f64>,
}

impl DerivTensor {
    pub fn len(&self) -> usize {
        self.n_outputs * self.n_inputs.pow(self.order as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat_index(&self, k: usize, js: &[usize]) -> usize {
        debug_assert_eq!(js.len(), self.order);
        let mut idx = k;
        for &j in js {
            idx = idx * self.n_inputs + j;
        }
        idx
    }

    pub fn entry(&self, k: usize, js: &[usize]) -> f64 {
        self.entries[self.flat_index(k, js)]
    }
}

/// Finite-difference configuration.
///
/// `base_step` is calibrated for first derivatives (cube root of machine
/// epsilon); [`fd_tensor`] re-exponentiates it to `eps^(1/(order+2))` so the
/// truncation/rounding trade-off stays balanced at higher orders. With
/// `relative_scaling` the per-coordinate step is `h_j = step * max(1, |x_j|)`.
/// The scheme is always central.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub base_step: f64,
    pub relative_scaling: bool,
    pub richardson_levels: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            base_step: f64::EPSILON.cbrt(),
            relative_scaling: true,
            richardson_levels: 2,
        }
    }
}

/// Supported oracle orders and the dense-size guard.
pub const MAX_ORACLE_ORDER: usize = 3;
pub const SIZE_GUARD: usize = 10_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("oracle supports orders up to {MAX_ORACLE_ORDER}, got {got}")]
    UnsupportedOrder { got: usize },
    #[error("dense tensor would have {size} entries, over the guard of {SIZE_GUARD}")]
    SizeGuard { size: usize },
    #[error("invalid finite-difference configuration: {0}")]
    BadConfig(String),
    #[error("slot {slot} bound twice")]
    DuplicateSlot { slot: Slot },
    #[error("slot {slot} is not an index of this tensor")]
    UnknownSlot { slot: Slot },
    #[error("binding for slot {slot} must have length {expected}, got {got}")]
    BindingLength {
        slot: Slot,
        expected: usize,
        got: usize,
    },
    #[error("contraction must bind all slots or all but one, {free} left free")]
    TooManyFree { free: usize },
    #[error("not a permutation of the binding sequence")]
    BadPermutation,
    #[error("expected {expected} values for {role}, got {got}")]
    Length {
        role: &'static str,
        expected: usize,
        got: usize,
    },
}

fn validate_cfg(cfg: &FdConfig) -> Result<(), OracleError> {
    if !cfg.base_step.is_finite() || cfg.base_step <= 0.0 {
        return Err(OracleError::BadConfig("base_step must be positive".into()));
    }
    if cfg.richardson_levels == 0 {
        return Err(OracleError::BadConfig(
            "richardson_levels must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Snaps a step to the nearest power of two below it. Perturbed points then
/// round less (often not at all), which makes central differences of linear
/// programs exact and generally lowers the rounding floor.
fn snap_pow2(h: f64) -> f64 {
    2f64.powi(h.log2().floor() as i32)
}

/// Richardson-extrapolates estimates taken at steps `h, h/2, h/4, ...`,
/// assuming an even-power error expansion (central differences).
fn richardson(levels: Vec<Vec<f64>>) -> Vec<f64> {
    let mut rows = levels;
    let n = rows.len();
    for k in 1..n {
        let factor = 4f64.powi(k as i32);
        for l in (k..n).rev() {
            let prev = rows[l - 1].clone();
            for (r, p) in rows[l].iter_mut().zip(prev) {
                *r = (factor * *r - p) / (factor - 1.0);
            }
        }
    }
    rows.pop().unwrap()
}

/// Directional derivative `F'(x) xdot` by central differences along `xdot`,
/// Richardson-extrapolated over step halvings.
pub fn fd_jvp(
    p: &Program,
    x: &[f64],
    xdot: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>, OracleError> {
    validate_cfg(cfg)?;
    if x.len() != p.n_inputs() || xdot.len() != p.n_inputs() {
        return Err(OracleError::Length {
            role: "inputs",
            expected: p.n_inputs(),
            got: x.len().min(xdot.len()),
        });
    }
    let scale = if cfg.relative_scaling {
        x.iter().fold(1.0f64, |acc, v| acc.max(v.abs()))
    } else {
        1.0
    };
    let h0 = snap_pow2(cfg.base_step * scale);
    let mut levels = Vec::with_capacity(cfg.richardson_levels);
    for level in 0..cfg.richardson_levels {
        let h = h0 / 2f64.powi(level as i32);
        let xp: Vec<f64> = x.iter().zip(xdot).map(|(v, d)| v + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(xdot).map(|(v, d)| v - h * d).collect();
        let fp = eval_primal(p, &xp)?;
        let fm = eval_primal(p, &xm)?;
        levels.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    Ok(richardson(levels))
}

/// One entry of the order-`js.len()` tensor by nested central differences.
fn fd_entry(
    p: &Program,
    x: &[f64],
    k: usize,
    js: &[usize],
    steps: &[f64],
) -> Result<f64, OracleError> {
    match js.split_first() {
        None => Ok(eval_primal(p, x)?[k]),
        Some((&j, rest)) => {
            let h = steps[j];
            let mut xp = x.to_vec();
            xp[j] += h;
            let mut xm = x.to_vec();
            xm[j] -= h;
            Ok((fd_entry(p, &xp, k, rest, steps)? - fd_entry(p, &xm, k, rest, steps)?) / (2.0 * h))
        }
    }
}

fn multi_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..order {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |j| {
                    let mut next = prefix.clone();
                    next.push(j);
                    next
                })
            })
            .collect();
    }
    out
}

fn permutations(js: &[usize]) -> Vec<Vec<usize>> {
    if js.len() <= 1 {
        return vec![js.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..js.len() {
        let mut rest = js.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Estimates the full derivative tensor `F^[order](x)` and symmetrizes it
/// over the differentiation indices. See [`fd_tensor_diagnostic`] for the
/// raw asymmetry.
pub fn fd_tensor(
    p: &Program,
    x: &[f64],
    order: usize,
    cfg: &FdConfig,
) -> Result<DerivTensor, OracleError> {
    Ok(fd_tensor_diagnostic(p, x, order, cfg)?.0)
}

/// Like [`fd_tensor`], additionally returning the largest deviation of a raw
/// entry from its symmetrized value (a finite-difference noise diagnostic).
pub fn fd_tensor_diagnostic(
    p: &Program,
    x: &[f64],
    order: usize,
    cfg: &FdConfig,
) -> Result<(DerivTensor, f64), OracleError> {
    validate_cfg(cfg)?;
    if order > MAX_ORACLE_ORDER {
        return Err(OracleError::UnsupportedOrder { got: order });
    }
    if x.len() != p.n_inputs() {
        return Err(OracleError::Length {
            role: "inputs",
            expected: p.n_inputs(),
            got: x.len(),
        });
    }
    let n = p.n_inputs();
    let m = p.n_outputs();
    let size = m * n.pow(order as u32);
    if size > SIZE_GUARD {
        return Err(OracleError::SizeGuard { size });
    }

    // Balance truncation against rounding for nested differences.
    let step0 = cfg.base_step.powf(3.0 / (order as f64 + 2.0));
    let base_steps: Vec<f64> = x
        .iter()
        .map(|v| {
            if cfg.relative_scaling {
                snap_pow2(step0 * v.abs().max(1.0))
            } else {
                snap_pow2(step0)
            }
        })
        .collect();

    let indices = multi_indices(n, order);
    let mut levels = Vec::with_capacity(cfg.richardson_levels);
    for level in 0..cfg.richardson_levels {
        let steps: Vec<f64> = base_steps
            .iter()
            .map(|h| h / 2f64.powi(level as i32))
            .collect();
        let mut entries = Vec::with_capacity(size);
        for k in 0..m {
            for js in &indices {
                entries.push(fd_entry(p, x, k, js, &steps)?);
            }
        }
        levels.push(entries);
    }
    let raw = richardson(levels);

    let mut tensor = DerivTensor {
        order,
        n_inputs: n,
        n_outputs: m,
        entries: raw.clone(),
    };
    // Symmetrize over the j-indices: smooth programs have symmetric
    // derivative tensors, so averaging only removes noise.
    let mut asym = 0.0f64;
    let mut symmetrized = raw.clone();
    for k in 0..m {
        for js in &indices {
            let perms = permutations(js);
            let mut acc = 0.0;
            for perm in &perms {
                acc += raw[tensor.flat_index(k, perm)];
            }
            let mean = acc / perms.len() as f64;
            let idx = tensor.flat_index(k, js);
            asym = asym.max((raw[idx] - mean).abs());
            symmetrized[idx] = mean;
        }
    }
    tensor.entries = symmetrized;
    Ok((tensor, asym))
}

/// Dot product with a fixed left-to-right summation order over ascending
/// indices. All invariant checks use this same reduction.
pub fn fixed_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Contracts tensor slots against vectors, in the given binding order, each
/// contraction summing ascending indices left to right. At most one slot may
/// remain free; its length shapes the result (a fully bound contraction
/// yields one scalar).
pub fn contract(t: &DerivTensor, bindings: &[(Slot, Vec<f64>)]) -> Result<Vec<f64>, OracleError> {
    // Current view: remaining slots and dense data, row-major in slot order.
    let mut slots: Vec<Slot> = Vec::with_capacity(t.order + 1);
    slots.push(Slot::K);
    for i in 1..=t.order {
        slots.push(Slot::J(i));
    }
    let mut dims: Vec<usize> = slots
        .iter()
        .map(|s| match s {
            Slot::K => t.n_outputs,
            Slot::J(_) => t.n_inputs,
        })
        .collect();
    let mut data = t.entries.clone();

    for (slot, vec) in bindings {
        let axis = slots
            .iter()
            .position(|s| s == slot)
            .ok_or_else(|| match slot {
                Slot::J(i) if *i >= 1 && *i <= t.order => OracleError::DuplicateSlot { slot: *slot },
                Slot::K if !slots.contains(&Slot::K) => OracleError::DuplicateSlot { slot: *slot },
                _ => OracleError::UnknownSlot { slot: *slot },
            })?;
        let len = dims[axis];
        if vec.len() != len {
            return Err(OracleError::BindingLength {
                slot: *slot,
                expected: len,
                got: vec.len(),
            });
        }
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut next = vec![0.0f64; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = 0.0;
                for s in 0..len {
                    acc += data[(o * len + s) * inner + i] * vec[s];
                }
                next[o * inner + i] = acc;
            }
        }
        data = next;
        slots.remove(axis);
        dims.remove(axis);
    }

    if slots.len() > 1 {
        return Err(OracleError::TooManyFree { free: slots.len() });
    }
    Ok(data)
}

/// Contracts under two binding orders related by `permutation` and returns
/// the largest absolute difference. The contraction value is order
/// independent in exact arithmetic; any discrepancy is rounding.
pub fn check_contraction_commutativity(
    t: &DerivTensor,
    bindings: &[(Slot, Vec<f64>)],
    permutation: &[usize],
) -> Result<f64, OracleError> {
    let mut seen = vec![false; bindings.len()];
    if permutation.len() != bindings.len() {
        return Err(OracleError::BadPermutation);
    }
    for &i in permutation {
        if i >= bindings.len() || seen[i] {
            return Err(OracleError::BadPermutation);
        }
        seen[i] = true;
    }
    let a = contract(t, bindings)?;
    let permuted: Vec<(Slot, Vec<f64>)> =
        permutation.iter().map(|&i| bindings[i].clone()).collect();
    let b = contract(t, &permuted)?;
    Ok(a.iter()
        .zip(&b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs())))
}

/// Maps a mode word to the tensor contraction it computes: which slot each
/// level's seed binds, and the free slot of the output.
///
/// A tangent level binds its own `j` slot; an adjoint level binds the free
/// slot of the program it differentiates and leaves its own `j` slot free.
pub fn tensor_bindings(w: &ModeWord) -> (Vec<Slot>, Slot) {
    let mut free = Slot::K;
    let mut bound = Vec::with_capacity(w.order());
    for (i, &m) in w.modes().iter().enumerate() {
        let level = i + 1;
        match m {
            Mode::Tangent => bound.push(Slot::J(level)),
            Mode::Adjoint => {
                bound.push(free);
                free = Slot::J(level);
            }
        }
    }
    (bound, free)
}
