//! Tangent and adjoint realizations of the scalar contract.
//!
//! Both contexts perform all of their arithmetic *through the context below
//! them*, so stacking contexts composes differentiation levels: a tangent
//! context above a tape records the whole tangent propagation on the tape,
//! and a tape above a tangent context propagates tangents through its own
//! reverse sweep. The plain `f64` arena sits at the bottom of every stack,
//! which keeps the primal value thread identical to direct evaluation.

use crate::scalar::{eval_rule, DomainError, ElementalKind, ElementalTable, RuleExpr, ScalarCtx, ValId};

/// Returns the tangent/adjoint contribution `rule(operands) * factor` with
/// exact shortcuts for the ubiquitous `±1` rules (`mul(±1, t)` is bitwise
/// `±t` in IEEE arithmetic, so this changes nothing but the op count).
fn rule_times(
    ctx: &mut dyn ScalarCtx,
    rule: &RuleExpr,
    operands: &[ValId],
    param: Option<f64>,
    factor: ValId,
) -> Result<ValId, DomainError> {
    match rule {
        RuleExpr::Lit(v) if *v == 1.0 => Ok(factor),
        RuleExpr::Lit(v) if *v == -1.0 => ctx.apply(ElementalKind::Neg, None, &[factor]),
        _ => {
            let partial = eval_rule(ctx, rule, operands, param)?;
            ctx.apply(ElementalKind::Mul, None, &[partial, factor])
        }
    }
}

/// One tangent level: values are (value, tangent) pairs of inner handles.
pub struct TangentCtx<'a> {
    inner: &'a mut dyn ScalarCtx,
    table: &'a ElementalTable,
    pairs: Vec<(ValId, ValId)>,
}

impl<'a> TangentCtx<'a> {
    pub fn new(inner: &'a mut dyn ScalarCtx, table: &'a ElementalTable) -> Self {
        TangentCtx {
            inner,
            table,
            pairs: Vec::new(),
        }
    }

    pub fn inner(&mut self) -> &mut dyn ScalarCtx {
        self.inner
    }

    /// Lifts an inner value as differentiated, with the given inner tangent.
    pub fn lift_active(&mut self, value: ValId, tangent: ValId) -> ValId {
        self.pairs.push((value, tangent));
        self.pairs.len() - 1
    }

    /// Lifts an inner value as a constant of this level (zero tangent).
    pub fn lift_passive(&mut self, value: ValId) -> ValId {
        let zero = self.inner.constant(0.0);
        self.lift_active(value, zero)
    }

    pub fn value_id(&self, id: ValId) -> ValId {
        self.pairs[id].0
    }

    pub fn tangent_id(&self, id: ValId) -> ValId {
        self.pairs[id].1
    }
}

impl ScalarCtx for TangentCtx<'_> {
    fn constant(&mut self, c: f64) -> ValId {
        let v = self.inner.constant(c);
        self.lift_passive(v)
    }

    fn apply(
        &mut self,
        kind: ElementalKind,
        param: Option<f64>,
        operands: &[ValId],
    ) -> Result<ValId, DomainError> {
        let mut vals = [0usize; 2];
        let mut tans = [0usize; 2];
        for (i, &op) in operands.iter().enumerate() {
            vals[i] = self.pairs[op].0;
            tans[i] = self.pairs[op].1;
        }
        let vals = &vals[..operands.len()];

        let value = self.inner.apply(kind, param, vals)?;
        let rules = self.table.tangent_rules(kind);
        let mut acc: Option<ValId> = None;
        for (i, rule) in rules.iter().enumerate() {
            let term = rule_times(self.inner, rule, vals, param, tans[i])?;
            acc = Some(match acc {
                None => term,
                Some(a) => self.inner.apply(ElementalKind::Add, None, &[a, term])?,
            });
        }
        let tangent = match acc {
            Some(t) => t,
            None => self.inner.constant(0.0),
        };
        Ok(self.lift_active(value, tangent))
    }

    fn value(&self, id: ValId) -> f64 {
        self.inner.value(self.pairs[id].0)
    }
}

struct TapeNode {
    /// The node's value, held in the inner context.
    value: ValId,
    /// Operand node indices.
    operands: [usize; 2],
    /// Partials w.r.t. each operand, recorded at forward time in the inner
    /// context (so that enclosing levels differentiate through them).
    partials: [ValId; 2],
    arity: u8,
}

/// One adjoint level: a per-evaluation tape recorded during the forward
/// sweep, consumed by [`AdjointCtx::reverse_sweep`].
pub struct AdjointCtx<'a> {
    inner: &'a mut dyn ScalarCtx,
    table: &'a ElementalTable,
    nodes: Vec<TapeNode>,
}

impl<'a> AdjointCtx<'a> {
    pub fn new(inner: &'a mut dyn ScalarCtx, table: &'a ElementalTable) -> Self {
        AdjointCtx {
            inner,
            table,
            nodes: Vec::new(),
        }
    }

    pub fn inner(&mut self) -> &mut dyn ScalarCtx {
        self.inner
    }

    /// Lifts an inner value as a tape leaf (an independent variable of this
    /// level, or a constant; leaves have no partials either way).
    pub fn lift_leaf(&mut self, value: ValId) -> ValId {
        self.nodes.push(TapeNode {
            value,
            operands: [0; 2],
            partials: [0; 2],
            arity: 0,
        });
        self.nodes.len() - 1
    }

    pub fn value_id(&self, id: ValId) -> ValId {
        self.nodes[id].value
    }

    /// Reverse-accumulates adjoints from the given output seeds back to the
    /// whole tape and returns the adjoints of `wanted` (inner handles; exact
    /// zero for nodes the outputs do not depend on).
    ///
    /// Nodes are processed in strictly decreasing index order and operands
    /// left to right, so the accumulation order is deterministic. When the
    /// sweep is truncated at the largest seeded node this is identical to
    /// re-taping the prefix: later nodes carry zero adjoint by construction.
    pub fn reverse_sweep(
        &mut self,
        seeds: &[(ValId, ValId)],
        wanted: &[ValId],
    ) -> Result<Vec<ValId>, DomainError> {
        let mut adjoints: Vec<Option<ValId>> = vec![None; self.nodes.len()];
        let mut top = 0usize;
        for &(node, seed) in seeds {
            adjoints[node] = Some(match adjoints[node] {
                None => seed,
                Some(a) => self.inner.apply(ElementalKind::Add, None, &[a, seed])?,
            });
            top = top.max(node);
        }
        for s in (0..=top).rev() {
            let Some(adj) = adjoints[s] else { continue };
            let arity = self.nodes[s].arity as usize;
            for i in 0..arity {
                let operand = self.nodes[s].operands[i];
                let partial = self.nodes[s].partials[i];
                let contrib = self
                    .inner
                    .apply(ElementalKind::Mul, None, &[partial, adj])?;
                adjoints[operand] = Some(match adjoints[operand] {
                    None => contrib,
                    Some(a) => self.inner.apply(ElementalKind::Add, None, &[a, contrib])?,
                });
            }
        }
        let mut out = Vec::with_capacity(wanted.len());
        for &w in wanted {
            out.push(match adjoints[w] {
                Some(a) => a,
                None => self.inner.constant(0.0),
            });
        }
        Ok(out)
    }
}

impl ScalarCtx for AdjointCtx<'_> {
    fn constant(&mut self, c: f64) -> ValId {
        let v = self.inner.constant(c);
        self.lift_leaf(v)
    }

    fn apply(
        &mut self,
        kind: ElementalKind,
        param: Option<f64>,
        operands: &[ValId],
    ) -> Result<ValId, DomainError> {
        let mut vals = [0usize; 2];
        let mut ops = [0usize; 2];
        for (i, &op) in operands.iter().enumerate() {
            vals[i] = self.nodes[op].value;
            ops[i] = op;
        }
        let vals = &vals[..operands.len()];

        let value = self.inner.apply(kind, param, vals)?;
        let rules = self.table.adjoint_rules(kind);
        let mut partials = [0usize; 2];
        for (i, rule) in rules.iter().enumerate() {
            partials[i] = eval_rule(self.inner, rule, vals, param)?;
        }
        self.nodes.push(TapeNode {
            value,
            operands: ops,
            partials,
            arity: rules.len() as u8,
        });
        Ok(self.nodes.len() - 1)
    }

    fn value(&self, id: ValId) -> f64 {
        self.inner.value(self.nodes[id].value)
    }
}
