//! Name resolution and batch evaluation for candidate expressions.
//!
//! Compilation resolves `param`/`input` names to slot indices once; evaluation
//! then walks the resolved tree with vectorized values. Evaluation order is
//! deterministic (left to right, depth first), `if` selects per row without
//! letting the unselected branch contaminate the result, and batch statistics
//! (`mean`, `std`, `percentile`) collapse the current batch to a scalar that
//! broadcasts back into row-wise arithmetic.

use crate::error::{Error, Result};
use crate::models::{mean, percentile, population_std, sigmoid};

use super::{BinaryOp, CandidateModel, CmpOp, Expr, ReduceOp, UnaryOp};

/// A name-resolved expression tree ready for repeated evaluation.
#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Param(usize),
    Input(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Clip(Box<Node>, f64, f64),
    If(Box<Node>, Box<Node>, Box<Node>),
    Cmp(CmpOp, Box<Node>, Box<Node>),
    Reduce(ReduceOp, Box<Node>),
    Percentile(Box<Node>, f64),
}

#[derive(Debug, Clone)]
pub struct CompiledCandidate {
    root: Node,
    input_count: usize,
    param_count: usize,
}

/// Resolve all names in a candidate against its family signature and declared
/// extras. Returns every unresolved name as a separate diagnostic.
pub(super) fn compile(candidate: &CandidateModel) -> std::result::Result<CompiledCandidate, Vec<String>> {
    let param_names = candidate.param_names();
    let input_names = candidate.family.input_names();

    let mut errors = Vec::new();
    for extra in &candidate.extra_params {
        if candidate.family.param_names().contains(&extra.name.as_str()) {
            errors.push(format!(
                "extra parameter '{}' clashes with a canonical {} parameter",
                extra.name,
                candidate.family
            ));
        }
        if input_names.contains(&extra.name.as_str()) {
            errors.push(format!(
                "extra parameter '{}' clashes with a {} input column",
                extra.name,
                candidate.family
            ));
        }
    }

    let root = resolve(&candidate.body, &param_names, input_names, candidate.family, &mut errors);
    if errors.is_empty() {
        Ok(CompiledCandidate {
            root: root.expect("no errors implies a resolved tree"),
            input_count: input_names.len(),
            param_count: param_names.len(),
        })
    } else {
        errors.sort();
        errors.dedup();
        Err(errors)
    }
}

fn resolve(
    expr: &Expr,
    param_names: &[String],
    input_names: &[&str],
    family: crate::models::ModelFamily,
    errors: &mut Vec<String>,
) -> Option<Node> {
    let mut r = |e: &Expr| resolve(e, param_names, input_names, family, errors);
    match expr {
        Expr::Const(v) => Some(Node::Const(*v)),
        Expr::Param(name) => match param_names.iter().position(|p| p == name) {
            Some(i) => Some(Node::Param(i)),
            None => {
                errors.push(format!(
                    "unknown parameter '{name}' for family {family}; known parameters: {}",
                    param_names.join(", ")
                ));
                None
            }
        },
        Expr::Input(name) => match input_names.iter().position(|p| *p == name) {
            Some(i) => Some(Node::Input(i)),
            None => {
                errors.push(format!(
                    "unknown input '{name}' for family {family}; inputs: {}",
                    input_names.join(", ")
                ));
                None
            }
        },
        Expr::Unary(op, a) => {
            let a = r(a);
            Some(Node::Unary(*op, Box::new(a?)))
        }
        Expr::Binary(op, a, b) => {
            let a = r(a);
            let b = r(b);
            Some(Node::Binary(*op, Box::new(a?), Box::new(b?)))
        }
        Expr::Clip(a, lo, hi) => {
            let a = r(a);
            Some(Node::Clip(Box::new(a?), *lo, *hi))
        }
        Expr::If(c, t, e) => {
            let c = r(c);
            let t = r(t);
            let e = r(e);
            Some(Node::If(Box::new(c?), Box::new(t?), Box::new(e?)))
        }
        Expr::Cmp(op, a, b) => {
            let a = r(a);
            let b = r(b);
            Some(Node::Cmp(*op, Box::new(a?), Box::new(b?)))
        }
        Expr::Reduce(op, a) => {
            let a = r(a);
            Some(Node::Reduce(*op, Box::new(a?)))
        }
        Expr::Percentile(a, q) => {
            let a = r(a);
            Some(Node::Percentile(Box::new(a?), *q))
        }
    }
}

/// A batch value: either one number per row or a broadcast scalar.
enum Value {
    Scalar(f64),
    Col(Vec<f64>),
}

impl Value {
    fn at(&self, i: usize) -> f64 {
        match self {
            Value::Scalar(v) => *v,
            Value::Col(c) => c[i],
        }
    }

    fn map(self, n: usize, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::Scalar(v) => Value::Scalar(f(v)),
            Value::Col(mut c) => {
                debug_assert_eq!(c.len(), n);
                for v in &mut c {
                    *v = f(*v);
                }
                Value::Col(c)
            }
        }
    }

    fn zip(self, other: Value, n: usize, f: impl Fn(f64, f64) -> f64) -> Value {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(f(a, b)),
            (a, b) => {
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    out.push(f(a.at(i), b.at(i)));
                }
                Value::Col(out)
            }
        }
    }
}

impl CompiledCandidate {
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Evaluate over row-major input rows (columns in family input order).
    /// Returns one finite output per row or the first offending row.
    pub fn eval_rows(&self, params: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if params.len() != self.param_count {
            return Err(Error::Params(format!(
                "candidate expects {} parameters, got {}",
                self.param_count,
                params.len()
            )));
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let n = rows.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); self.input_count];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.input_count {
                return Err(Error::CandidateRuntime {
                    row: i,
                    message: format!(
                        "input row has {} columns, expected {}",
                        row.len(),
                        self.input_count
                    ),
                });
            }
            for (j, v) in row.iter().enumerate() {
                columns[j].push(*v);
            }
        }
        self.eval_columns(params, &columns, n)
    }

    /// Evaluate over pre-transposed columns of equal length `n`.
    pub fn eval_columns(&self, params: &[f64], columns: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
        if params.len() != self.param_count {
            return Err(Error::Params(format!(
                "candidate expects {} parameters, got {}",
                self.param_count,
                params.len()
            )));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let value = eval_node(&self.root, params, columns, n);
        let outputs = match value {
            Value::Scalar(v) => vec![v; n],
            Value::Col(c) => c,
        };
        if let Some(row) = outputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::CandidateRuntime {
                row,
                message: "candidate produced a non-finite output".into(),
            });
        }
        Ok(outputs)
    }
}

fn eval_node(node: &Node, params: &[f64], columns: &[Vec<f64>], n: usize) -> Value {
    match node {
        Node::Const(v) => Value::Scalar(*v),
        Node::Param(i) => Value::Scalar(params[*i]),
        Node::Input(i) => Value::Col(columns[*i].clone()),
        Node::Unary(op, a) => {
            let a = eval_node(a, params, columns, n);
            let f: fn(f64) -> f64 = match op {
                UnaryOp::Neg => |x| -x,
                UnaryOp::Abs => f64::abs,
                UnaryOp::Exp => f64::exp,
                UnaryOp::Log => f64::ln,
                UnaryOp::Sqrt => f64::sqrt,
                UnaryOp::Tanh => f64::tanh,
                UnaryOp::Sigmoid => sigmoid,
            };
            a.map(n, f)
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, params, columns, n);
            let b = eval_node(b, params, columns, n);
            let f: fn(f64, f64) -> f64 = match op {
                BinaryOp::Add => |x, y| x + y,
                BinaryOp::Sub => |x, y| x - y,
                BinaryOp::Mul => |x, y| x * y,
                BinaryOp::Div => |x, y| x / y,
                BinaryOp::Pow => f64::powf,
                BinaryOp::Min => f64::min,
                BinaryOp::Max => f64::max,
            };
            a.zip(b, n, f)
        }
        Node::Clip(a, lo, hi) => {
            let (lo, hi) = (*lo, *hi);
            eval_node(a, params, columns, n).map(n, move |x| x.clamp(lo, hi))
        }
        Node::If(c, t, e) => {
            let c = eval_node(c, params, columns, n);
            let t = eval_node(t, params, columns, n);
            let e = eval_node(e, params, columns, n);
            match c {
                Value::Scalar(cv) => {
                    if cv > 0.0 {
                        t
                    } else {
                        e
                    }
                }
                Value::Col(cc) => {
                    let mut out = Vec::with_capacity(n);
                    for (i, cv) in cc.iter().enumerate() {
                        out.push(if *cv > 0.0 { t.at(i) } else { e.at(i) });
                    }
                    Value::Col(out)
                }
            }
        }
        Node::Cmp(op, a, b) => {
            let a = eval_node(a, params, columns, n);
            let b = eval_node(b, params, columns, n);
            let f: fn(f64, f64) -> f64 = match op {
                CmpOp::Gt => |x, y| f64::from(x > y),
                CmpOp::Ge => |x, y| f64::from(x >= y),
                CmpOp::Lt => |x, y| f64::from(x < y),
                CmpOp::Le => |x, y| f64::from(x <= y),
            };
            a.zip(b, n, f)
        }
        Node::Reduce(op, a) => {
            let a = eval_node(a, params, columns, n);
            match a {
                // A scalar is its own mean; a single repeated value has zero spread.
                Value::Scalar(v) => match op {
                    ReduceOp::Mean => Value::Scalar(v),
                    ReduceOp::Std => Value::Scalar(0.0),
                },
                Value::Col(c) => Value::Scalar(match op {
                    ReduceOp::Mean => mean(&c),
                    ReduceOp::Std => population_std(&c),
                }),
            }
        }
        Node::Percentile(a, q) => {
            let a = eval_node(a, params, columns, n);
            match a {
                Value::Scalar(v) => Value::Scalar(v),
                Value::Col(c) => {
                    Value::Scalar(percentile(&c, *q).expect("rank validated at parse, batch non-empty"))
                }
            }
        }
    }
}
