//! Elemental scalar operations and the arithmetic contract shared by all
//! differentiation levels.
//!
//! Every program step applies one [`ElementalKind`] to scalar operands. The
//! [`ElementalTable`] tabulates the *first* partial derivative of each
//! elemental as a [`RuleExpr`]: a closed-form composition of elementals in
//! the same table. Higher derivatives are never tabulated: they arise by
//! evaluating these rules inside a nested scalar context, which differentiates
//! the partials themselves.
//!
//! A scalar context ([`ScalarCtx`]) is an arena of scalar values addressed by
//! [`ValId`] that knows how to apply elementals. The plain realization is
//! [`RealCtx`] over `f64`; the derivative engine stacks tangent-pair and tape
//! contexts on top of it (see `engine::context`). The table keeps *separate*
//! tangent and adjoint rule sets so that a fault can be injected into one
//! propagation direction without touching the other.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// The built-in differentiable elemental functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementalKind {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Id,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    /// Power by a constant exponent; the exponent is the step's `@` parameter.
    PowC,
    /// Arity-0 constant; the value is the step's `@` parameter.
    Const,
}

pub const ALL_ELEMENTALS: [ElementalKind; 14] = [
    ElementalKind::Add,
    ElementalKind::Sub,
    ElementalKind::Mul,
    ElementalKind::Div,
    ElementalKind::Neg,
    ElementalKind::Id,
    ElementalKind::Sin,
    ElementalKind::Cos,
    ElementalKind::Exp,
    ElementalKind::Log,
    ElementalKind::Sqrt,
    ElementalKind::Tanh,
    ElementalKind::PowC,
    ElementalKind::Const,
];

impl ElementalKind {
    /// Keyword used in the `.sac` text format and in rule expressions.
    pub fn keyword(self) -> &'static str {
        match self {
            ElementalKind::Add => "add",
            ElementalKind::Sub => "sub",
            ElementalKind::Mul => "mul",
            ElementalKind::Div => "div",
            ElementalKind::Neg => "neg",
            ElementalKind::Id => "id",
            ElementalKind::Sin => "sin",
            ElementalKind::Cos => "cos",
            ElementalKind::Exp => "exp",
            ElementalKind::Log => "log",
            ElementalKind::Sqrt => "sqrt",
            ElementalKind::Tanh => "tanh",
            ElementalKind::PowC => "powc",
            ElementalKind::Const => "const",
        }
    }

    pub fn from_keyword(kw: &str) -> Option<Self> {
        ALL_ELEMENTALS.iter().copied().find(|k| k.keyword() == kw)
    }

    /// Number of scalar operands.
    pub fn arity(self) -> usize {
        match self {
            ElementalKind::Add | ElementalKind::Sub | ElementalKind::Mul | ElementalKind::Div => 2,
            ElementalKind::Const => 0,
            _ => 1,
        }
    }

    /// Whether the elemental takes an `@` constant parameter.
    pub fn takes_param(self) -> bool {
        matches!(self, ElementalKind::PowC | ElementalKind::Const)
    }
}

impl fmt::Display for ElementalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Domain failure while evaluating an elemental or one of its partial rules.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DomainError {
    #[error("{kind}: {reason}")]
    Value { kind: ElementalKind, reason: String },
    #[error("{kind}: not differentiable at this point: {reason}")]
    NonDifferentiable { kind: ElementalKind, reason: String },
    #[error("{kind}: expected {expected} operands, got {got}")]
    Arity {
        kind: ElementalKind,
        expected: usize,
        got: usize,
    },
    #[error("{kind}: missing constant parameter")]
    MissingParam { kind: ElementalKind },
}

fn value_err(kind: ElementalKind, reason: impl Into<String>) -> DomainError {
    DomainError::Value {
        kind,
        reason: reason.into(),
    }
}

/// Evaluates one elemental on plain `f64` operands.
///
/// This is the single source of primal arithmetic: every context bottoms out
/// here, which keeps the primal value thread bit-identical across all
/// derivative levels.
pub fn elemental_value(
    kind: ElementalKind,
    operands: &[f64],
    param: Option<f64>,
) -> Result<f64, DomainError> {
    if operands.len() != kind.arity() {
        return Err(DomainError::Arity {
            kind,
            expected: kind.arity(),
            got: operands.len(),
        });
    }
    match kind {
        ElementalKind::Add => Ok(operands[0] + operands[1]),
        ElementalKind::Sub => Ok(operands[0] - operands[1]),
        ElementalKind::Mul => Ok(operands[0] * operands[1]),
        ElementalKind::Div => {
            if operands[1] == 0.0 {
                Err(value_err(kind, "division by zero"))
            } else {
                Ok(operands[0] / operands[1])
            }
        }
        ElementalKind::Neg => Ok(-operands[0]),
        ElementalKind::Id => Ok(operands[0]),
        ElementalKind::Sin => Ok(operands[0].sin()),
        ElementalKind::Cos => Ok(operands[0].cos()),
        ElementalKind::Exp => Ok(operands[0].exp()),
        ElementalKind::Log => {
            if operands[0] <= 0.0 {
                Err(value_err(kind, format!("log of {}", operands[0])))
            } else {
                Ok(operands[0].ln())
            }
        }
        ElementalKind::Sqrt => {
            if operands[0] < 0.0 {
                Err(value_err(kind, format!("sqrt of {}", operands[0])))
            } else {
                Ok(operands[0].sqrt())
            }
        }
        ElementalKind::Tanh => Ok(operands[0].tanh()),
        ElementalKind::PowC => {
            let c = param.ok_or(DomainError::MissingParam { kind })?;
            let u = operands[0];
            let integral = c.fract() == 0.0;
            if !integral && u <= 0.0 {
                return Err(value_err(
                    kind,
                    format!("non-integer exponent {c} requires a positive base, got {u}"),
                ));
            }
            if integral && c < 0.0 && u == 0.0 {
                return Err(value_err(kind, "zero base with negative exponent"));
            }
            Ok(u.powf(c))
        }
        ElementalKind::Const => param.ok_or(DomainError::MissingParam { kind }),
    }
}

// ---------------------------------------------------------------------------
// Partial-derivative rules
// ---------------------------------------------------------------------------

/// `@` parameter slot inside a rule application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleParam {
    Lit(f64),
    /// The parameter of the elemental being differentiated.
    Incoming,
    /// That parameter minus one (for the power rule).
    IncomingMinusOne,
}

/// Closed-form partial rule: a composition of table elementals over the
/// operands `u1, u2` of the elemental being differentiated.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleExpr {
    /// Zero-based operand reference (`u1` is `Operand(0)`).
    Operand(usize),
    Lit(f64),
    /// The `@` parameter of the elemental being differentiated, as a value.
    IncomingParam,
    Apply(ElementalKind, Vec<RuleExpr>, Option<RuleParam>),
}

impl RuleExpr {
    fn op(i: usize) -> Self {
        RuleExpr::Operand(i)
    }
    fn lit(v: f64) -> Self {
        RuleExpr::Lit(v)
    }
    fn ap(kind: ElementalKind, args: Vec<RuleExpr>) -> Self {
        RuleExpr::Apply(kind, args, None)
    }

    /// Largest operand index referenced, if any.
    pub fn max_operand(&self) -> Option<usize> {
        match self {
            RuleExpr::Operand(i) => Some(*i),
            RuleExpr::Lit(_) | RuleExpr::IncomingParam => None,
            RuleExpr::Apply(_, args, _) => args.iter().filter_map(|a| a.max_operand()).max(),
        }
    }
}

/// Parses a rule expression in prefix form, e.g.
/// `neg (div 1 (mul 2 (sqrt u1)))`. Atoms are numeric literals, operand names
/// `u1`/`u2`, or parenthesized applications; `@ <num>` supplies the constant
/// parameter of `powc`/`const`.
pub fn parse_rule_expr(text: &str) -> Result<RuleExpr, String> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let expr = parse_application(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(format!("trailing tokens after expression: {:?}", &tokens[pos..]));
    }
    Ok(expr)
}

fn tokenize(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' | '@' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if out.is_empty() {
        return Err("empty rule expression".to_string());
    }
    Ok(out)
}

/// Parses a full application (keyword plus arity-many arguments) or an atom.
fn parse_application(tokens: &[String], pos: &mut usize) -> Result<RuleExpr, String> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| "unexpected end of rule expression".to_string())?;
    if let Some(kind) = ElementalKind::from_keyword(tok) {
        *pos += 1;
        let mut args = Vec::with_capacity(kind.arity());
        for _ in 0..kind.arity() {
            args.push(parse_atom(tokens, pos)?);
        }
        let param = if tokens.get(*pos).map(String::as_str) == Some("@") {
            *pos += 1;
            let num = tokens
                .get(*pos)
                .ok_or_else(|| "expected number after '@'".to_string())?;
            let v: f64 = num.parse().map_err(|_| format!("bad number {num:?}"))?;
            *pos += 1;
            Some(RuleParam::Lit(v))
        } else if kind.takes_param() {
            return Err(format!("{} requires an '@ <num>' parameter", kind.keyword()));
        } else {
            None
        };
        Ok(RuleExpr::Apply(kind, args, param))
    } else {
        parse_atom(tokens, pos)
    }
}

fn parse_atom(tokens: &[String], pos: &mut usize) -> Result<RuleExpr, String> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| "unexpected end of rule expression".to_string())?;
    match tok.as_str() {
        "(" => {
            *pos += 1;
            let inner = parse_application(tokens, pos)?;
            if tokens.get(*pos).map(String::as_str) != Some(")") {
                return Err("expected ')'".to_string());
            }
            *pos += 1;
            Ok(inner)
        }
        ")" | "@" => Err(format!("unexpected {tok:?}")),
        "u1" => {
            *pos += 1;
            Ok(RuleExpr::Operand(0))
        }
        "u2" => {
            *pos += 1;
            Ok(RuleExpr::Operand(1))
        }
        other => {
            let v: f64 = other
                .parse()
                .map_err(|_| format!("unknown token {other:?} in rule expression"))?;
            *pos += 1;
            Ok(RuleExpr::Lit(v))
        }
    }
}

// ---------------------------------------------------------------------------
// Elemental table
// ---------------------------------------------------------------------------

/// Per-elemental first-partial rules for both propagation directions.
///
/// Tangent sweeps read `tangent_rules`, adjoint (tape) sweeps read
/// `adjoint_rules`. On a clean table the two sets are identical; fault
/// injection (see `debugger`) replaces one or both.
#[derive(Debug, Clone)]
pub struct ElementalTable {
    tangent: Vec<Vec<RuleExpr>>,
    adjoint: Vec<Vec<RuleExpr>>,
}

fn kind_index(kind: ElementalKind) -> usize {
    ALL_ELEMENTALS.iter().position(|&k| k == kind).unwrap()
}

fn standard_rules(kind: ElementalKind) -> Vec<RuleExpr> {
    use ElementalKind::*;
    use RuleExpr as E;
    match kind {
        Add => vec![E::lit(1.0), E::lit(1.0)],
        Sub => vec![E::lit(1.0), E::lit(-1.0)],
        Mul => vec![E::op(1), E::op(0)],
        // d(u1/u2) = [1/u2, -(u1/u2)/u2]
        Div => vec![
            E::ap(Div, vec![E::lit(1.0), E::op(1)]),
            E::ap(
                Neg,
                vec![E::ap(Div, vec![E::ap(Div, vec![E::op(0), E::op(1)]), E::op(1)])],
            ),
        ],
        Neg => vec![E::lit(-1.0)],
        Id => vec![E::lit(1.0)],
        Sin => vec![E::ap(Cos, vec![E::op(0)])],
        Cos => vec![E::ap(Neg, vec![E::ap(Sin, vec![E::op(0)])])],
        Exp => vec![E::ap(Exp, vec![E::op(0)])],
        Log => vec![E::ap(Div, vec![E::lit(1.0), E::op(0)])],
        Sqrt => vec![E::ap(
            Div,
            vec![
                E::lit(1.0),
                E::ap(Mul, vec![E::lit(2.0), E::ap(Sqrt, vec![E::op(0)])]),
            ],
        )],
        // 1 - tanh(u)^2
        Tanh => vec![E::ap(
            Sub,
            vec![
                E::lit(1.0),
                E::ap(Mul, vec![E::ap(Tanh, vec![E::op(0)]), E::ap(Tanh, vec![E::op(0)])]),
            ],
        )],
        // c * u^(c-1)
        PowC => vec![E::Apply(
            Mul,
            vec![
                E::IncomingParam,
                E::Apply(PowC, vec![E::op(0)], Some(RuleParam::IncomingMinusOne)),
            ],
            None,
        )],
        Const => vec![],
    }
}

impl ElementalTable {
    /// The correct derivative rules for every elemental, in both directions.
    pub fn standard() -> Self {
        let rules: Vec<Vec<RuleExpr>> = ALL_ELEMENTALS.iter().map(|&k| standard_rules(k)).collect();
        ElementalTable {
            tangent: rules.clone(),
            adjoint: rules,
        }
    }

    pub fn tangent_rules(&self, kind: ElementalKind) -> &[RuleExpr] {
        &self.tangent[kind_index(kind)]
    }

    pub fn adjoint_rules(&self, kind: ElementalKind) -> &[RuleExpr] {
        &self.adjoint[kind_index(kind)]
    }

    pub fn set_tangent_rules(&mut self, kind: ElementalKind, rules: Vec<RuleExpr>) {
        self.tangent[kind_index(kind)] = rules;
    }

    pub fn set_adjoint_rules(&mut self, kind: ElementalKind, rules: Vec<RuleExpr>) {
        self.adjoint[kind_index(kind)] = rules;
    }
}

impl Default for ElementalTable {
    fn default() -> Self {
        Self::standard()
    }
}

// ---------------------------------------------------------------------------
// Scalar contexts
// ---------------------------------------------------------------------------

/// Handle to a scalar value inside one [`ScalarCtx`].
pub type ValId = usize;

/// Arena of scalar values that can apply elementals.
///
/// Derivative levels are realized by stacking contexts: each level's context
/// performs its bookkeeping through the context below it, so applying an
/// elemental at the top records or propagates through every level at once.
/// `value` projects a handle down to its plain `f64` payload.
pub trait ScalarCtx {
    /// Lifts a constant (derivative-free at every level below).
    fn constant(&mut self, c: f64) -> ValId;
    /// Applies an elemental to operands held in this context.
    fn apply(
        &mut self,
        kind: ElementalKind,
        param: Option<f64>,
        operands: &[ValId],
    ) -> Result<ValId, DomainError>;
    /// The `f64` payload of a value (the primal slot at every level).
    fn value(&self, id: ValId) -> f64;
}

/// The root context: plain `f64` arithmetic in an arena.
pub struct RealCtx {
    vals: Vec<f64>,
}

impl RealCtx {
    pub fn new() -> Self {
        RealCtx { vals: Vec::new() }
    }
}

impl Default for RealCtx {
    fn default() -> Self {
        Self::new()
    }
}

impl ScalarCtx for RealCtx {
    fn constant(&mut self, c: f64) -> ValId {
        self.vals.push(c);
        self.vals.len() - 1
    }

    fn apply(
        &mut self,
        kind: ElementalKind,
        param: Option<f64>,
        operands: &[ValId],
    ) -> Result<ValId, DomainError> {
        let mut args = [0.0f64; 2];
        for (slot, &id) in args.iter_mut().zip(operands) {
            *slot = self.vals[id];
        }
        let v = elemental_value(kind, &args[..operands.len()], param)?;
        self.vals.push(v);
        Ok(self.vals.len() - 1)
    }

    fn value(&self, id: ValId) -> f64 {
        self.vals[id]
    }
}

/// Evaluates a partial rule in `ctx` over the given operand handles.
///
/// `incoming_param` is the `@` parameter of the elemental being
/// differentiated (consumed by `IncomingParam` / `IncomingMinusOne`).
pub fn eval_rule(
    ctx: &mut dyn ScalarCtx,
    rule: &RuleExpr,
    operands: &[ValId],
    incoming_param: Option<f64>,
) -> Result<ValId, DomainError> {
    match rule {
        RuleExpr::Operand(i) => Ok(operands[*i]),
        RuleExpr::Lit(v) => Ok(ctx.constant(*v)),
        RuleExpr::IncomingParam => {
            let p = incoming_param.expect("rule references missing incoming parameter");
            Ok(ctx.constant(p))
        }
        RuleExpr::Apply(kind, args, param) => {
            let mut ids = Vec::with_capacity(args.len());
            for a in args {
                ids.push(eval_rule(ctx, a, operands, incoming_param)?);
            }
            let p = match param {
                None => None,
                Some(RuleParam::Lit(v)) => Some(*v),
                Some(RuleParam::Incoming) => incoming_param,
                Some(RuleParam::IncomingMinusOne) => incoming_param.map(|c| c - 1.0),
            };
            ctx.apply(*kind, p, &ids)
        }
    }
}

/// Evaluates all first partials of an elemental at plain `f64` operands,
/// using the table's tangent rules.
///
/// Differentiability is stricter than evaluability: `sqrt` at 0 has a value
/// but no finite partial, so the rule evaluation fails there.
pub fn elemental_partials(
    table: &ElementalTable,
    kind: ElementalKind,
    operands: &[f64],
    param: Option<f64>,
) -> Result<Vec<f64>, DomainError> {
    if operands.len() != kind.arity() {
        return Err(DomainError::Arity {
            kind,
            expected: kind.arity(),
            got: operands.len(),
        });
    }
    if kind == ElementalKind::Sqrt && operands[0] == 0.0 {
        return Err(DomainError::NonDifferentiable {
            kind,
            reason: "sqrt has an infinite slope at 0".to_string(),
        });
    }
    let mut ctx = RealCtx::new();
    let ids: Vec<ValId> = operands.iter().map(|&v| ctx.constant(v)).collect();
    table
        .tangent_rules(kind)
        .iter()
        .map(|rule| eval_rule(&mut ctx, rule, &ids, param).map(|id| ctx.value(id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn values_match_direct_arithmetic() {
        assert_eq!(elemental_value(ElementalKind::Mul, &[3.0, 5.0], None), Ok(15.0));
        assert_eq!(elemental_value(ElementalKind::Sqrt, &[4.0], None), Ok(2.0));
        assert_eq!(elemental_value(ElementalKind::Const, &[], Some(2.5)), Ok(2.5));
        assert_eq!(
            elemental_value(ElementalKind::PowC, &[2.0], Some(3.0)),
            Ok(8.0)
        );
    }

    #[test]
    fn div_by_zero_is_a_domain_error() {
        assert!(matches!(
            elemental_value(ElementalKind::Div, &[1.0, 0.0], None),
            Err(DomainError::Value { .. })
        ));
    }

    #[test]
    fn log_and_sqrt_domains() {
        assert!(elemental_value(ElementalKind::Log, &[0.0], None).is_err());
        assert!(elemental_value(ElementalKind::Sqrt, &[-1.0], None).is_err());
        // sqrt(0) has a value but no partial
        assert_eq!(elemental_value(ElementalKind::Sqrt, &[0.0], None), Ok(0.0));
        assert!(matches!(
            elemental_partials(&ElementalTable::standard(), ElementalKind::Sqrt, &[0.0], None),
            Err(DomainError::NonDifferentiable { .. })
        ));
    }

    #[test]
    fn powc_noninteger_needs_positive_base() {
        assert!(elemental_value(ElementalKind::PowC, &[-2.0], Some(0.5)).is_err());
        assert_eq!(
            elemental_value(ElementalKind::PowC, &[-2.0], Some(3.0)),
            Ok(-8.0)
        );
    }

    #[test]
    fn partials_match_hand_derivatives() {
        let t = ElementalTable::standard();
        assert_eq!(
            elemental_partials(&t, ElementalKind::Mul, &[3.0, 5.0], None).unwrap(),
            vec![5.0, 3.0]
        );
        assert_eq!(
            elemental_partials(&t, ElementalKind::Sqrt, &[4.0], None).unwrap(),
            vec![0.25]
        );
        assert_eq!(
            elemental_partials(&t, ElementalKind::Id, &[7.0], None).unwrap(),
            vec![1.0]
        );
        assert_eq!(
            elemental_partials(&t, ElementalKind::Const, &[], Some(9.0)).unwrap(),
            Vec::<f64>::new()
        );
    }

    /// In-domain sample points per elemental for finite-difference spot checks.
    fn fd_points(kind: ElementalKind) -> Vec<f64> {
        match kind {
            ElementalKind::Log | ElementalKind::Sqrt => vec![0.3, 1.0, 2.7],
            _ => vec![-1.3, 0.4, 2.0],
        }
    }

    #[test]
    fn unary_partials_match_central_differences() {
        let t = ElementalTable::standard();
        let h_base = f64::EPSILON.cbrt();
        for kind in ALL_ELEMENTALS {
            if kind.arity() != 1 || kind == ElementalKind::PowC {
                continue;
            }
            for x in fd_points(kind) {
                let h = h_base * x.abs().max(1.0);
                let fp = elemental_value(kind, &[x + h], None).unwrap();
                let fm = elemental_value(kind, &[x - h], None).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let p = elemental_partials(&t, kind, &[x], None).unwrap()[0];
                let scale = p.abs().max(1e-12);
                assert!(
                    (fd - p).abs() / scale < 1e-6,
                    "{kind} at {x}: fd {fd} vs rule {p}"
                );
            }
        }
    }

    #[test]
    fn powc_partial_matches_central_difference() {
        let t = ElementalTable::standard();
        for c in [2.0, 3.0, -1.0, 0.5, 2.5] {
            let x = 1.7;
            let h = f64::EPSILON.cbrt() * x;
            let fp = elemental_value(ElementalKind::PowC, &[x + h], Some(c)).unwrap();
            let fm = elemental_value(ElementalKind::PowC, &[x - h], Some(c)).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let p = elemental_partials(&t, ElementalKind::PowC, &[x], Some(c)).unwrap()[0];
            assert!((fd - p).abs() / p.abs().max(1e-12) < 1e-6, "powc@{c}: {fd} vs {p}");
        }
    }

    #[test]
    fn rule_parser_round_trips_the_faulty_sqrt_rule() {
        let e = parse_rule_expr("neg (div 1 (mul 2 (sqrt u1)))").unwrap();
        let mut ctx = RealCtx::new();
        let u = ctx.constant(4.0);
        let id = eval_rule(&mut ctx, &e, &[u], None).unwrap();
        assert_eq!(ctx.value(id), -0.25);
    }

    #[test]
    fn rule_parser_rejects_garbage() {
        assert!(parse_rule_expr("").is_err());
        assert!(parse_rule_expr("frobnicate u1").is_err());
        assert!(parse_rule_expr("mul u1").is_err());
        assert!(parse_rule_expr("mul u1 u2 u1").is_err());
        assert!(parse_rule_expr("powc u1").is_err());
        assert!(parse_rule_expr("(powc u1 @ 2)").is_ok());
    }

    proptest! {
        #[test]
        fn rule_parser_never_panics(text in "[a-z0-9@()u .-]{0,60}") {
            let _ = parse_rule_expr(&text);
        }

        #[test]
        fn mul_partials_swap_with_operands(a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let t = ElementalTable::standard();
            let p1 = elemental_partials(&t, ElementalKind::Mul, &[a, b], None).unwrap();
            let p2 = elemental_partials(&t, ElementalKind::Mul, &[b, a], None).unwrap();
            prop_assert_eq!(p1[0], p2[1]);
            prop_assert_eq!(p1[1], p2[0]);
        }

        #[test]
        fn add_and_mul_commute(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let ab = elemental_value(ElementalKind::Add, &[a, b], None).unwrap();
            let ba = elemental_value(ElementalKind::Add, &[b, a], None).unwrap();
            prop_assert_eq!(ab, ba);
            let ab = elemental_value(ElementalKind::Mul, &[a, b], None).unwrap();
            let ba = elemental_value(ElementalKind::Mul, &[b, a], None).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}
