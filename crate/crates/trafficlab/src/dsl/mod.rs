//! A sandboxed expression DSL for machine-written candidate models.
//!
//! Candidates are s-expressions with a fixed operator set — no loops, no
//! bindings, no side effects — so generated code can be executed safely and
//! deterministically. A candidate declares its model family, up to two extra
//! calibratable parameters with bounds, and one expression evaluated per input
//! row with batch-level statistics available (`mean`, `std`, `percentile`).
//!
//! The batch a candidate sees is the batch the evaluation layer hands it: the
//! full sample set for lane-change/flow families, a single row per simulation
//! step for car-following.

mod interp;
mod parser;
pub mod reference;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelFamily;

pub use interp::CompiledCandidate;

/// Normative grammar, embedded verbatim in the code-generation prompt.
pub const GRAMMAR: &str = r#"candidate := (defmodel FAMILY (extra-params EXTRA*) EXPR)
FAMILY    := idm | mobil | lwr
EXTRA     := (NAME NUMBER NUMBER)        ; extra parameter: name, lower bound, upper bound (lower < upper); at most 2
EXPR      := (const NUMBER)
           | (param NAME)                ; a family parameter or a declared extra parameter
           | (input NAME)                ; an input column of the family
           | (neg EXPR) | (abs EXPR) | (exp EXPR) | (log EXPR)
           | (sqrt EXPR) | (tanh EXPR) | (sigmoid EXPR)
           | (add EXPR EXPR) | (sub EXPR EXPR) | (mul EXPR EXPR) | (div EXPR EXPR)
           | (pow EXPR EXPR) | (min EXPR EXPR) | (max EXPR EXPR)
           | (clip EXPR NUMBER NUMBER)   ; clamp to [lo, hi] with lo <= hi
           | (if EXPR EXPR EXPR)         ; first argument > 0 selects the second, else the third
           | (gt EXPR EXPR) | (ge EXPR EXPR) | (lt EXPR EXPR) | (le EXPR EXPR)   ; comparisons yield 1.0 or 0.0
           | (mean EXPR) | (std EXPR)    ; statistic over the evaluation batch, broadcast back (std is the population std)
           | (percentile EXPR NUMBER)    ; linear-interpolated batch percentile, rank NUMBER in [0, 100]
NUMBER    := a finite decimal literal such as 2, -0.5, or 1e-6"#;

/// Maximum expression nesting depth accepted by the parser.
pub const MAX_DEPTH: usize = 200;

/// Maximum number of extra calibratable parameters per candidate.
pub const MAX_EXTRA_PARAMS: usize = 2;

/// Probe outputs beyond this magnitude fail validation.
pub const PROBE_MAGNITUDE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Abs,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Sigmoid,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceOp {
    Mean,
    Std,
}

impl ReduceOp {
    pub fn name(self) -> &'static str {
        match self {
            ReduceOp::Mean => "mean",
            ReduceOp::Std => "std",
        }
    }
}

/// Candidate expression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Param(String),
    Input(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Clip(Box<Expr>, f64, f64),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Reduce(ReduceOp, Box<Expr>),
    Percentile(Box<Expr>, f64),
}

/// An extra calibratable parameter declared by a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraParam {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// A parsed candidate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub family: ModelFamily,
    pub extra_params: Vec<ExtraParam>,
    pub body: Expr,
    /// The text the candidate was parsed from (fed back to refinement
    /// prompts on failure).
    pub source_text: String,
    /// How many generation attempts it took to produce this candidate.
    pub attempts: u32,
}

impl CandidateModel {
    /// Parameter names in flat-vector order: the family's canonical
    /// parameters followed by the declared extras.
    pub fn param_names(&self) -> Vec<String> {
        self.family
            .param_names()
            .iter()
            .map(|s| s.to_string())
            .chain(self.extra_params.iter().map(|e| e.name.clone()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.family.param_names().len() + self.extra_params.len()
    }

    /// Calibration bounds in flat-vector order: family defaults for the
    /// canonical parameters, declared bounds for extras.
    pub fn param_bounds(&self) -> Vec<(String, f64, f64)> {
        self.family
            .default_bounds()
            .into_iter()
            .map(|(n, lo, hi)| (n.to_string(), lo, hi))
            .chain(
                self.extra_params
                    .iter()
                    .map(|e| (e.name.clone(), e.lower, e.upper)),
            )
            .collect()
    }
}

/// Validation outcome: empty means the candidate is accepted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub errors: Vec<String>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.errors.is_empty() {
            return f.write_str("no diagnostics");
        }
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}. {e}", i + 1)?;
        }
        Ok(())
    }
}

/// Parse candidate text into a [`CandidateModel`]. Structural rules (grammar,
/// extra-parameter count and bounds, expression depth, finite literals) are
/// enforced here; name resolution and probe checks happen in
/// [`validate_candidate`].
pub fn parse_candidate(text: &str) -> Result<CandidateModel> {
    parser::parse(text)
}

/// Validate a candidate against its family signature: every `param`/`input`
/// name must resolve, and the candidate must produce finite, bounded outputs
/// on a probe grid (all-zeros, all-ones, family-typical magnitudes, and — for
/// families with gap inputs — negative gaps) with mid-bound parameters.
pub fn validate_candidate(candidate: &CandidateModel) -> Diagnostics {
    let mut diagnostics = Diagnostics::default();
    let compiled = match interp::compile(candidate) {
        Ok(c) => c,
        Err(errors) => {
            diagnostics.errors = errors;
            return diagnostics;
        }
    };

    let mid_params: Vec<f64> = candidate
        .param_bounds()
        .iter()
        .map(|(_, lo, hi)| 0.5 * (lo + hi))
        .collect();

    for (probe_name, row) in probe_rows(candidate.family) {
        let rows = vec![row.clone()];
        match compiled.eval_rows(&mid_params, &rows) {
            Ok(outputs) => {
                let y = outputs[0];
                if !y.is_finite() {
                    diagnostics.errors.push(format!(
                        "probe '{probe_name}' ({}) produced a non-finite output",
                        describe_row(candidate.family, &row)
                    ));
                } else if y.abs() > PROBE_MAGNITUDE_LIMIT {
                    diagnostics.errors.push(format!(
                        "probe '{probe_name}' ({}) produced {y:e}, beyond the magnitude limit {PROBE_MAGNITUDE_LIMIT:e}",
                        describe_row(candidate.family, &row)
                    ));
                }
            }
            Err(e) => diagnostics
                .errors
                .push(format!("probe '{probe_name}' failed: {e}")),
        }
    }
    diagnostics
}

fn describe_row(family: ModelFamily, row: &[f64]) -> String {
    family
        .input_names()
        .iter()
        .zip(row)
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Probe grid per family: `(name, input row)` pairs.
fn probe_rows(family: ModelFamily) -> Vec<(&'static str, Vec<f64>)> {
    let n = family.input_names().len();
    let mut probes = vec![
        ("all-zeros", vec![0.0; n]),
        ("all-ones", vec![1.0; n]),
    ];
    match family {
        ModelFamily::Idm => {
            // spacing, sv_spd, lv_spd
            probes.push(("typical", vec![30.0, 15.0, 12.0]));
            probes.push(("negative-spacing", vec![-1.0, 5.0, 5.0]));
        }
        ModelFamily::Mobil => {
            // v, s, of_v, or_v, tf_v, tr_v, rtf_x, rtr_x, rr_x, or_acc, tr_acc
            probes.push((
                "typical",
                vec![15.0, 30.0, 14.0, 13.0, 16.0, 12.0, 25.0, 20.0, 15.0, 0.5, -0.3],
            ));
            probes.push((
                "negative-gaps",
                vec![15.0, -1.0, 14.0, 13.0, 16.0, 12.0, -2.0, -1.5, -0.5, 0.5, -0.3],
            ));
        }
        ModelFamily::Lwr => {
            // density
            probes.push(("typical", vec![0.5]));
        }
    }
    probes
}

/// Compile a candidate for repeated evaluation. Fails with the same
/// diagnostics [`validate_candidate`] would report for unresolved names.
pub fn compile_candidate(candidate: &CandidateModel) -> Result<CompiledCandidate> {
    interp::compile(candidate).map_err(|errors| {
        Error::CandidateInvalid(Diagnostics { errors }.to_string())
    })
}

/// Evaluate a candidate over a batch of rows (row-major, columns in the
/// family's input order). `params` is the full flat vector (canonical then
/// extras). Returns one output per row; batch statistics see the whole batch.
pub fn eval_candidate(
    candidate: &CandidateModel,
    params: &[f64],
    rows: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let compiled = compile_candidate(candidate)?;
    compiled.eval_rows(params, rows)
}

/// Canonical text form: single-line, single spaces, canonical number
/// formatting (`1.0` and `1` render identically). Parsing the rendered text
/// reproduces the same structure, and rendering is idempotent.
pub fn render_candidate(candidate: &CandidateModel) -> String {
    let mut out = String::with_capacity(256);
    out.push_str("(defmodel ");
    out.push_str(candidate.family.name());
    out.push_str(" (extra-params");
    for extra in &candidate.extra_params {
        out.push_str(&format!(
            " ({} {} {})",
            extra.name,
            fmt_number(extra.lower),
            fmt_number(extra.upper)
        ));
    }
    out.push_str(") ");
    render_expr(&candidate.body, &mut out);
    out.push(')');
    out
}

pub(crate) fn fmt_number(v: f64) -> String {
    // Rust's shortest round-trip Display: "1" for 1.0, "0.1" for 0.1.
    format!("{v}")
}

fn render_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Const(v) => {
            out.push_str("(const ");
            out.push_str(&fmt_number(*v));
            out.push(')');
        }
        Expr::Param(name) => {
            out.push_str("(param ");
            out.push_str(name);
            out.push(')');
        }
        Expr::Input(name) => {
            out.push_str("(input ");
            out.push_str(name);
            out.push(')');
        }
        Expr::Unary(op, a) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            render_expr(a, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            render_expr(a, out);
            out.push(' ');
            render_expr(b, out);
            out.push(')');
        }
        Expr::Clip(a, lo, hi) => {
            out.push_str("(clip ");
            render_expr(a, out);
            out.push(' ');
            out.push_str(&fmt_number(*lo));
            out.push(' ');
            out.push_str(&fmt_number(*hi));
            out.push(')');
        }
        Expr::If(c, t, e) => {
            out.push_str("(if ");
            render_expr(c, out);
            out.push(' ');
            render_expr(t, out);
            out.push(' ');
            render_expr(e, out);
            out.push(')');
        }
        Expr::Cmp(op, a, b) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            render_expr(a, out);
            out.push(' ');
            render_expr(b, out);
            out.push(')');
        }
        Expr::Reduce(op, a) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            render_expr(a, out);
            out.push(')');
        }
        Expr::Percentile(a, q) => {
            out.push_str("(percentile ");
            render_expr(a, out);
            out.push(' ');
            out.push_str(&fmt_number(*q));
            out.push(')');
        }
    }
}

/// Extract the first ```dsl fenced block from chat output. Returns the inner
/// text with the fences stripped.
pub fn extract_dsl_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    let mut block: Vec<&str> = Vec::new();
    let mut inside = false;
    for line in lines.by_ref() {
        let trimmed = line.trim();
        if !inside {
            if trimmed == "```dsl" {
                inside = true;
            }
        } else {
            if trimmed == "```" {
                return Some(block.join("\n"));
            }
            block.push(line);
        }
    }
    None
}
