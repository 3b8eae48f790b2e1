//! Single-assignment-code programs: representation, text format, structural
//! validation and primal evaluation.
//!
//! A program implements `F: R^n -> R^m` as an ordered list of scalar
//! elemental assignments in which every variable is written exactly once and
//! every operand was written earlier (or is an input). The text format is
//! line-based:
//!
//! ```text
//! # comment
//! inputs x1 x2
//! outputs y1
//! v1 = mul x1 x2
//! y1 = id v1
//! ```
//!
//! An assignment line is `<id> = <elemental> <operand>... [@ <real>]`; the
//! `@` parameter feeds `powc` (exponent) and `const` (value).

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::scalar::{elemental_value, DomainError, ElementalKind};

/// One scalar elemental assignment `target := elemental(operands [@ param])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub target: String,
    pub elemental: ElementalKind,
    pub operands: Vec<String>,
    pub const_param: Option<f64>,
}

/// A single assignment code implementing `F: R^n -> R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub input_vars: Vec<String>,
    pub output_vars: Vec<String>,
    pub steps: Vec<Assignment>,
}

impl Program {
    pub fn n_inputs(&self) -> usize {
        self.input_vars.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_vars.len()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Canonical text form; parsing it back yields a structurally identical
    /// program (the name is not part of the format).
    pub fn to_sac_text(&self) -> String {
        let mut out = String::new();
        out.push_str("inputs ");
        out.push_str(&self.input_vars.join(" "));
        out.push_str("\noutputs ");
        out.push_str(&self.output_vars.join(" "));
        out.push('\n');
        for step in &self.steps {
            out.push_str(&step.target);
            out.push_str(" = ");
            out.push_str(step.elemental.keyword());
            for op in &step.operands {
                out.push(' ');
                out.push_str(op);
            }
            if let Some(p) = step.const_param {
                out.push_str(&format!(" @ {p}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Structural invariant violations found by [`validate_program`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyInputs,
    EmptyOutputs,
    DuplicateInput { var: String },
    DuplicateOutput { var: String },
    /// Inputs and outputs must be unaliased (disjoint id sets).
    InputOutputOverlap { var: String },
    /// A step writes a variable that was already written (or is an input).
    Reassigned { step: usize, var: String },
    InputAssigned { step: usize, var: String },
    UseBeforeDef { step: usize, var: String },
    ArityMismatch { step: usize, expected: usize, got: usize },
    MissingParam { step: usize },
    UnexpectedParam { step: usize },
    NonFiniteParam { step: usize },
    OutputNeverAssigned { var: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyInputs => write!(f, "program has no inputs"),
            Violation::EmptyOutputs => write!(f, "program has no outputs"),
            Violation::DuplicateInput { var } => write!(f, "duplicate input {var}"),
            Violation::DuplicateOutput { var } => write!(f, "duplicate output {var}"),
            Violation::InputOutputOverlap { var } => {
                write!(f, "{var} is declared both input and output")
            }
            Violation::Reassigned { step, var } => {
                write!(f, "step {step}: {var} is assigned more than once")
            }
            Violation::InputAssigned { step, var } => {
                write!(f, "step {step}: input {var} must not be assigned")
            }
            Violation::UseBeforeDef { step, var } => {
                write!(f, "step {step}: {var} used before assignment")
            }
            Violation::ArityMismatch { step, expected, got } => {
                write!(f, "step {step}: expected {expected} operands, got {got}")
            }
            Violation::MissingParam { step } => {
                write!(f, "step {step}: missing '@' constant parameter")
            }
            Violation::UnexpectedParam { step } => {
                write!(f, "step {step}: elemental takes no '@' parameter")
            }
            Violation::NonFiniteParam { step } => {
                write!(f, "step {step}: '@' parameter must be finite")
            }
            Violation::OutputNeverAssigned { var } => {
                write!(f, "output {var} is never assigned")
            }
        }
    }
}

/// Returns every violated structural invariant; empty means valid.
pub fn validate_program(p: &Program) -> Vec<Violation> {
    let mut violations = Vec::new();
    if p.input_vars.is_empty() {
        violations.push(Violation::EmptyInputs);
    }
    if p.output_vars.is_empty() {
        violations.push(Violation::EmptyOutputs);
    }

    let mut seen_inputs = HashMap::new();
    for v in &p.input_vars {
        if seen_inputs.insert(v.clone(), ()).is_some() {
            violations.push(Violation::DuplicateInput { var: v.clone() });
        }
    }
    let mut seen_outputs = HashMap::new();
    for v in &p.output_vars {
        if seen_outputs.insert(v.clone(), ()).is_some() {
            violations.push(Violation::DuplicateOutput { var: v.clone() });
        }
        if seen_inputs.contains_key(v) {
            violations.push(Violation::InputOutputOverlap { var: v.clone() });
        }
    }

    let mut defined: HashMap<&str, ()> = p.input_vars.iter().map(|v| (v.as_str(), ())).collect();
    for (s, step) in p.steps.iter().enumerate() {
        if p.input_vars.iter().any(|v| v == &step.target) {
            violations.push(Violation::InputAssigned {
                step: s,
                var: step.target.clone(),
            });
        } else if defined.contains_key(step.target.as_str()) {
            violations.push(Violation::Reassigned {
                step: s,
                var: step.target.clone(),
            });
        }
        let expected = step.elemental.arity();
        if step.operands.len() != expected {
            violations.push(Violation::ArityMismatch {
                step: s,
                expected,
                got: step.operands.len(),
            });
        }
        for op in &step.operands {
            if !defined.contains_key(op.as_str()) {
                violations.push(Violation::UseBeforeDef {
                    step: s,
                    var: op.clone(),
                });
            }
        }
        match (step.elemental.takes_param(), step.const_param) {
            (true, None) => violations.push(Violation::MissingParam { step: s }),
            (false, Some(_)) => violations.push(Violation::UnexpectedParam { step: s }),
            (true, Some(p)) if !p.is_finite() => {
                violations.push(Violation::NonFiniteParam { step: s })
            }
            _ => {}
        }
        defined.insert(step.target.as_str(), ());
    }

    for v in &p.output_vars {
        if !defined.contains_key(v.as_str()) {
            violations.push(Violation::OutputNeverAssigned { var: v.clone() });
        }
    }
    violations
}

/// Errors from [`parse_program`].
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: unknown elemental '{word}'")]
    UnknownElemental { line: usize, word: String },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn is_ident(tok: &str) -> bool {
    let mut chars = tok.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits a line into whitespace-separated tokens with their 1-based
/// character columns.
fn tokens_with_cols(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None; // (char col, byte offset)
    for (col, (byte, ch)) in line.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((c, b)) = start.take() {
                out.push((c + 1, &line[b..byte]));
            }
        } else if start.is_none() {
            start = Some((col, byte));
        }
    }
    if let Some((c, b)) = start {
        out.push((c + 1, &line[b..]));
    }
    out
}

/// Parses the `.sac` text format. The returned program has passed
/// [`validate_program`]; violations are reported against the offending line.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut input_vars: Option<Vec<String>> = None;
    let mut output_vars: Option<Vec<String>> = None;
    let mut steps = Vec::new();
    // Source line of each section, for error reporting.
    let mut step_lines = Vec::new();
    let mut header_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let tokens = tokens_with_cols(line);
        if input_vars.is_none() {
            if tokens[0].1 != "inputs" {
                return Err(syntax(
                    line_no,
                    tokens[0].0,
                    "expected 'inputs <id> ...' as the first line",
                ));
            }
            let vars = parse_ident_list(&tokens[1..], line_no)?;
            if vars.is_empty() {
                return Err(syntax(line_no, tokens[0].0, "expected at least one input id"));
            }
            input_vars = Some(vars);
            header_line = line_no;
            continue;
        }
        if output_vars.is_none() {
            if tokens[0].1 != "outputs" {
                return Err(syntax(
                    line_no,
                    tokens[0].0,
                    "expected 'outputs <id> ...' as the second line",
                ));
            }
            let vars = parse_ident_list(&tokens[1..], line_no)?;
            if vars.is_empty() {
                return Err(syntax(line_no, tokens[0].0, "expected at least one output id"));
            }
            output_vars = Some(vars);
            header_line = line_no;
            continue;
        }
        steps.push(parse_assignment(&tokens, line_no)?);
        step_lines.push(line_no);
    }

    let program = Program {
        name: "main".to_string(),
        input_vars: input_vars.ok_or_else(|| syntax(1, 1, "missing 'inputs' line"))?,
        output_vars: output_vars.ok_or_else(|| syntax(1, 1, "missing 'outputs' line"))?,
        steps,
    };

    if let Some(v) = validate_program(&program).into_iter().next() {
        let line = match &v {
            Violation::Reassigned { step, .. }
            | Violation::InputAssigned { step, .. }
            | Violation::UseBeforeDef { step, .. }
            | Violation::ArityMismatch { step, .. }
            | Violation::MissingParam { step }
            | Violation::UnexpectedParam { step }
            | Violation::NonFiniteParam { step } => step_lines[*step],
            _ => header_line,
        };
        return Err(ParseError::Invalid { line, violation: v });
    }
    Ok(program)
}

fn parse_ident_list(tokens: &[(usize, &str)], line: usize) -> Result<Vec<String>, ParseError> {
    tokens
        .iter()
        .map(|&(col, t)| {
            if is_ident(t) {
                Ok(t.to_string())
            } else {
                Err(syntax(line, col, format!("invalid identifier {t:?}")))
            }
        })
        .collect()
}

fn parse_assignment(tokens: &[(usize, &str)], line: usize) -> Result<Assignment, ParseError> {
    if tokens.len() < 3 || tokens[1].1 != "=" {
        let col = tokens.get(1).map(|&(c, _)| c).unwrap_or(tokens[0].0);
        return Err(syntax(line, col, "expected '<id> = <elemental> ...'"));
    }
    if !is_ident(tokens[0].1) {
        return Err(syntax(
            line,
            tokens[0].0,
            format!("invalid identifier {:?}", tokens[0].1),
        ));
    }
    let elemental = ElementalKind::from_keyword(tokens[2].1).ok_or_else(|| {
        ParseError::UnknownElemental {
            line,
            word: tokens[2].1.to_string(),
        }
    })?;

    let mut operands = Vec::new();
    let mut const_param = None;
    let mut rest = tokens[3..].iter().peekable();
    while let Some(&&(col, tok)) = rest.peek() {
        rest.next();
        if tok == "@" {
            let &&(num_col, num) = rest
                .peek()
                .ok_or_else(|| syntax(line, col, "expected a number after '@'"))?;
            rest.next();
            let v: f64 = num
                .parse()
                .map_err(|_| syntax(line, num_col, format!("invalid number {num:?}")))?;
            if let Some(&&(extra_col, _)) = rest.peek() {
                return Err(syntax(line, extra_col, "trailing tokens after '@ <real>'"));
            }
            const_param = Some(v);
            break;
        }
        if !is_ident(tok) {
            return Err(syntax(line, col, format!("invalid operand {tok:?}")));
        }
        operands.push(tok.to_string());
    }

    Ok(Assignment {
        target: tokens[0].1.to_string(),
        elemental,
        operands,
        const_param,
    })
}

/// Errors from primal (or derivative) evaluation of a program.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("expected {expected} values for {role}, got {got}")]
    Length {
        role: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("step {step} ({target} = {kind}): {source}")]
    Domain {
        step: usize,
        target: String,
        kind: ElementalKind,
        source: DomainError,
    },
}

/// Evaluates `y = F(x)` step by step in SAC order. Deterministic: the
/// operation order is fixed by the program text.
pub fn eval_primal(p: &Program, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    if x.len() != p.n_inputs() {
        return Err(EvalError::Length {
            role: "inputs",
            expected: p.n_inputs(),
            got: x.len(),
        });
    }
    let mut env: HashMap<&str, f64> = HashMap::new();
    for (v, &val) in p.input_vars.iter().zip(x) {
        env.insert(v.as_str(), val);
    }
    for (s, step) in p.steps.iter().enumerate() {
        let args: Vec<f64> = step.operands.iter().map(|o| env[o.as_str()]).collect();
        let v = elemental_value(step.elemental, &args, step.const_param).map_err(|e| {
            EvalError::Domain {
                step: s,
                target: step.target.clone(),
                kind: step.elemental,
                source: e,
            }
        })?;
        env.insert(step.target.as_str(), v);
    }
    Ok(p.output_vars.iter().map(|v| env[v.as_str()]).collect())
}
