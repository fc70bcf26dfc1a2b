//! S-expression parser for candidate models.
//!
//! The grammar is strict: unknown operators, arity mistakes, out-of-range
//! literals, and trailing input are all hard errors carrying line/column
//! positions so they can be echoed back into refinement prompts.

use crate::error::{Error, Result};
use crate::models::ModelFamily;

use super::{
    BinaryOp, CandidateModel, CmpOp, Expr, ExtraParam, ReduceOp, UnaryOp, MAX_DEPTH,
    MAX_EXTRA_PARAMS,
};

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    LParen,
    RParen,
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::CandidateParse {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut column = 0usize;
    let mut atom_start: Option<(usize, usize, usize)> = None; // (byte, line, col)

    let bytes = text.as_bytes();
    let flush_atom = |tokens: &mut Vec<Token>, start: Option<(usize, usize, usize)>, end: usize| {
        if let Some((s, l, c)) = start {
            tokens.push(Token {
                kind: TokenKind::Atom(text[s..end].to_string()),
                line: l,
                column: c,
            });
        }
    };

    for (i, &b) in bytes.iter().enumerate() {
        let ch = b as char;
        if ch == '\n' {
            flush_atom(&mut tokens, atom_start.take(), i);
            line += 1;
            column = 0;
            continue;
        }
        column += 1;
        match ch {
            '(' | ')' => {
                flush_atom(&mut tokens, atom_start.take(), i);
                tokens.push(Token {
                    kind: if ch == '(' { TokenKind::LParen } else { TokenKind::RParen },
                    line,
                    column,
                });
            }
            c if c.is_whitespace() => flush_atom(&mut tokens, atom_start.take(), i),
            _ => {
                if !b.is_ascii() {
                    return Err(err(line, column, "non-ASCII character in candidate text"));
                }
                if atom_start.is_none() {
                    atom_start = Some((i, line, column));
                }
            }
        }
    }
    flush_atom(&mut tokens, atom_start.take(), bytes.len());
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map(|t| (t.line, t.column))
            .unwrap_or((1, 1))
    }

    fn next(&mut self, expected: &str) -> Result<&'a Token> {
        let token = self.tokens.get(self.pos).ok_or_else(|| {
            let (l, c) = self.here();
            err(l, c, format!("unexpected end of input, expected {expected}"))
        })?;
        self.pos += 1;
        Ok(token)
    }

    fn expect_lparen(&mut self, context: &str) -> Result<&'a Token> {
        let token = self.next(&format!("'(' to start {context}"))?;
        if token.kind != TokenKind::LParen {
            return Err(err(
                token.line,
                token.column,
                format!("expected '(' to start {context}"),
            ));
        }
        Ok(token)
    }

    fn expect_rparen(&mut self, context: &str) -> Result<()> {
        let token = self.next(&format!("')' to close {context}"))?;
        if token.kind != TokenKind::RParen {
            let found = describe(&token.kind);
            return Err(err(
                token.line,
                token.column,
                format!("expected ')' to close {context}, found {found}"),
            ));
        }
        Ok(())
    }

    fn expect_atom(&mut self, expected: &str) -> Result<(&'a str, usize, usize)> {
        let token = self.next(expected)?;
        match &token.kind {
            TokenKind::Atom(s) => Ok((s, token.line, token.column)),
            other => Err(err(
                token.line,
                token.column,
                format!("expected {expected}, found {}", describe(other)),
            )),
        }
    }

    fn expect_number(&mut self, what: &str) -> Result<(f64, usize, usize)> {
        let (raw, line, column) = self.expect_atom(what)?;
        // Accept only ordinary decimal/scientific literals; f64::parse would
        // also take "inf"/"NaN", which the grammar forbids.
        let looks_numeric = raw
            .chars()
            .next()
            .map(|c| c.is_ascii_digit() || c == '-' || c == '+' || c == '.')
            .unwrap_or(false);
        let value: f64 = if looks_numeric { raw.parse().ok() } else { None }
            .ok_or_else(|| err(line, column, format!("expected {what}, found '{raw}'")))?;
        if !value.is_finite() {
            return Err(err(line, column, format!("{what} must be finite, found '{raw}'")));
        }
        Ok((value, line, column))
    }
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::LParen => "'('".to_string(),
        TokenKind::RParen => "')'".to_string(),
        TokenKind::Atom(s) => format!("'{s}'"),
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(super) fn parse(text: &str) -> Result<CandidateModel> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(err(1, 1, "empty candidate text"));
    }
    let mut parser = Parser { tokens: &tokens, pos: 0 };

    parser.expect_lparen("the candidate")?;
    let (head, line, column) = parser.expect_atom("'defmodel'")?;
    if head != "defmodel" {
        return Err(err(line, column, format!("expected 'defmodel', found '{head}'")));
    }
    let (family_name, fline, fcolumn) = parser.expect_atom("a model family (idm, mobil, or lwr)")?;
    let family = ModelFamily::parse(family_name)
        .map_err(|_| err(fline, fcolumn, format!("unknown model family '{family_name}' (expected idm, mobil, or lwr)")))?;

    // (extra-params (name lo hi)*)
    parser.expect_lparen("the extra-params list")?;
    let (kw, kline, kcolumn) = parser.expect_atom("'extra-params'")?;
    if kw != "extra-params" {
        return Err(err(kline, kcolumn, format!("expected 'extra-params', found '{kw}'")));
    }
    let mut extra_params: Vec<ExtraParam> = Vec::new();
    loop {
        match parser.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::RParen) => {
                parser.pos += 1;
                break;
            }
            Some(TokenKind::LParen) => {
                let open = parser.next("extra parameter")?;
                let (name, nline, ncolumn) = parser.expect_atom("an extra parameter name")?;
                if !valid_name(name) {
                    return Err(err(nline, ncolumn, format!("invalid parameter name '{name}'")));
                }
                let (lower, ..) = parser.expect_number("the lower bound")?;
                let (upper, uline, ucolumn) = parser.expect_number("the upper bound")?;
                parser.expect_rparen("the extra parameter")?;
                if lower >= upper {
                    return Err(err(
                        uline,
                        ucolumn,
                        format!("extra parameter '{name}' needs lower < upper, got [{lower}, {upper}]"),
                    ));
                }
                if extra_params.iter().any(|e| e.name == name) {
                    return Err(err(open.line, open.column, format!("duplicate extra parameter '{name}'")));
                }
                if extra_params.len() == MAX_EXTRA_PARAMS {
                    return Err(err(
                        open.line,
                        open.column,
                        format!("at most {MAX_EXTRA_PARAMS} extra parameters are allowed"),
                    ));
                }
                extra_params.push(ExtraParam { name: name.to_string(), lower, upper });
            }
            Some(TokenKind::Atom(a)) => {
                let (l, c) = parser.here();
                return Err(err(l, c, format!("expected '(' or ')' in extra-params, found '{a}'")));
            }
            None => {
                let (l, c) = parser.here();
                return Err(err(l, c, "unexpected end of input inside extra-params"));
            }
        }
    }

    let body = parse_expr(&mut parser, 0)?;
    parser.expect_rparen("the candidate")?;
    if let Some(extra) = parser.peek() {
        return Err(err(
            extra.line,
            extra.column,
            format!("unexpected trailing input {}", describe(&extra.kind)),
        ));
    }

    Ok(CandidateModel {
        family,
        extra_params,
        body,
        source_text: text.to_string(),
        attempts: 1,
    })
}

fn unary_op(name: &str) -> Option<UnaryOp> {
    Some(match name {
        "neg" => UnaryOp::Neg,
        "abs" => UnaryOp::Abs,
        "exp" => UnaryOp::Exp,
        "log" => UnaryOp::Log,
        "sqrt" => UnaryOp::Sqrt,
        "tanh" => UnaryOp::Tanh,
        "sigmoid" => UnaryOp::Sigmoid,
        _ => return None,
    })
}

fn binary_op(name: &str) -> Option<BinaryOp> {
    Some(match name {
        "add" => BinaryOp::Add,
        "sub" => BinaryOp::Sub,
        "mul" => BinaryOp::Mul,
        "div" => BinaryOp::Div,
        "pow" => BinaryOp::Pow,
        "min" => BinaryOp::Min,
        "max" => BinaryOp::Max,
        _ => return None,
    })
}

fn cmp_op(name: &str) -> Option<CmpOp> {
    Some(match name {
        "gt" => CmpOp::Gt,
        "ge" => CmpOp::Ge,
        "lt" => CmpOp::Lt,
        "le" => CmpOp::Le,
        _ => return None,
    })
}

fn reduce_op(name: &str) -> Option<ReduceOp> {
    Some(match name {
        "mean" => ReduceOp::Mean,
        "std" => ReduceOp::Std,
        _ => return None,
    })
}

fn parse_expr(parser: &mut Parser, depth: usize) -> Result<Expr> {
    if depth > MAX_DEPTH {
        let (l, c) = parser.here();
        return Err(err(l, c, format!("expression nesting exceeds the depth limit {MAX_DEPTH}")));
    }
    parser.expect_lparen("an expression")?;
    let (op, line, column) = parser.expect_atom("an operator")?;
    let expr = match op {
        "const" => {
            let (value, ..) = parser.expect_number("a constant value")?;
            Expr::Const(value)
        }
        "param" => {
            let (name, nline, ncolumn) = parser.expect_atom("a parameter name")?;
            if !valid_name(name) {
                return Err(err(nline, ncolumn, format!("invalid parameter name '{name}'")));
            }
            Expr::Param(name.to_string())
        }
        "input" => {
            let (name, nline, ncolumn) = parser.expect_atom("an input name")?;
            if !valid_name(name) {
                return Err(err(nline, ncolumn, format!("invalid input name '{name}'")));
            }
            Expr::Input(name.to_string())
        }
        "clip" => {
            let child = parse_expr(parser, depth + 1)?;
            let (lo, ..) = parser.expect_number("the clip lower bound")?;
            let (hi, hline, hcolumn) = parser.expect_number("the clip upper bound")?;
            if lo > hi {
                return Err(err(hline, hcolumn, format!("clip needs lo <= hi, got [{lo}, {hi}]")));
            }
            Expr::Clip(Box::new(child), lo, hi)
        }
        "if" => {
            let cond = parse_expr(parser, depth + 1)?;
            let then = parse_expr(parser, depth + 1)?;
            let otherwise = parse_expr(parser, depth + 1)?;
            Expr::If(Box::new(cond), Box::new(then), Box::new(otherwise))
        }
        "percentile" => {
            let child = parse_expr(parser, depth + 1)?;
            let (q, qline, qcolumn) = parser.expect_number("the percentile rank")?;
            if !(0.0..=100.0).contains(&q) {
                return Err(err(qline, qcolumn, format!("percentile rank must be in [0, 100], got {q}")));
            }
            Expr::Percentile(Box::new(child), q)
        }
        name => {
            if let Some(op) = unary_op(name) {
                let child = parse_expr(parser, depth + 1)?;
                Expr::Unary(op, Box::new(child))
            } else if let Some(op) = binary_op(name) {
                let a = parse_expr(parser, depth + 1)?;
                let b = parse_expr(parser, depth + 1)?;
                Expr::Binary(op, Box::new(a), Box::new(b))
            } else if let Some(op) = cmp_op(name) {
                let a = parse_expr(parser, depth + 1)?;
                let b = parse_expr(parser, depth + 1)?;
                Expr::Cmp(op, Box::new(a), Box::new(b))
            } else if let Some(op) = reduce_op(name) {
                let child = parse_expr(parser, depth + 1)?;
                Expr::Reduce(op, Box::new(child))
            } else {
                return Err(err(line, column, format!("unknown operator '{name}'")));
            }
        }
    };
    parser.expect_rparen(&format!("the '{op}' expression"))?;
    Ok(expr)
}
