//! Recursive-descent parser.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | const | var | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and associates to the right, so
//! `-2^2 = -4` and `2^3^2 = 512`. Exponents must be free of variables and are
//! folded to a single constant at parse time.

use std::fmt;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp, Var};

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at position {position}: {message}")]
pub struct SyntaxError {
    pub position: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Number(x) => write!(f, "number {x}"),
            Token::Ident(name) => write!(f, "`{name}`"),
            Token::Plus => f.write_str("`+`"),
            Token::Minus => f.write_str("`-`"),
            Token::Star => f.write_str("`*`"),
            Token::Slash => f.write_str("`/`"),
            Token::Caret => f.write_str("`^`"),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
            Token::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i)?;
                let lexeme = &text[start..i];
                let value = lexeme
                    .parse::<f64>()
                    .map_err(|_| SyntaxError::new(start, format!("malformed number `{lexeme}`")))?;
                out.push((start, Token::Number(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Token::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(SyntaxError::new(i, format!("unexpected character `{ch}`")));
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((text.len(), Token::End));
    Ok(out)
}

/// Scans `digits [. digits] [(e|E) [+|-] digits]` (or `. digits ...`) and
/// returns the end offset.
fn scan_number(bytes: &[u8], start: usize) -> Result<usize, SyntaxError> {
    let digits = |mut i: usize| {
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        i
    };
    let mut i = digits(start);
    let int_len = i - start;
    if i < bytes.len() && bytes[i] == b'.' {
        let frac_start = i + 1;
        i = digits(frac_start);
        if i == frac_start {
            return Err(SyntaxError::new(start, "malformed number: expected digits after `.`"));
        }
    } else if int_len == 0 {
        return Err(SyntaxError::new(start, "malformed number"));
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        // `2e` or `2*e`-style ambiguity: an exponent marker must be followed by digits,
        // otherwise the `e` is left for the identifier scanner.
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = digits(j);
        }
    }
    if i < bytes.len() && (bytes[i] == b'.' || bytes[i].is_ascii_digit()) {
        return Err(SyntaxError::new(start, "malformed number"));
    }
    Ok(i)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> (usize, Token) {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect_rparen(&mut self) -> Result<(), SyntaxError> {
        match self.peek() {
            Token::RParen => {
                self.bump();
                Ok(())
            }
            Token::End => Err(SyntaxError::new(self.offset(), "unbalanced parenthesis: expected `)`")),
            other => Err(SyntaxError::new(
                self.offset(),
                format!("expected `)`, found {other}"),
            )),
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Token::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if *self.peek() != Token::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.unary()?;
        if !exponent.variables().is_empty() {
            return Err(SyntaxError::new(at, "exponent must be a constant expression"));
        }
        let value = exponent
            .eval::<f64>(&super::Bindings::new())
            .map_err(|e| SyntaxError::new(at, format!("invalid exponent: {e}")))?;
        Ok(Expr::Binary(
            BinaryOp::Pow,
            Box::new(base),
            Box::new(Expr::Const(value)),
        ))
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let (at, tok) = self.bump();
        match tok {
            Token::Number(x) => Ok(Expr::Const(x)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => self.identifier(at, &name),
            Token::End => Err(SyntaxError::new(at, "unexpected end of input")),
            other => Err(SyntaxError::new(at, format!("unexpected {other}"))),
        }
    }

    fn identifier(&mut self, at: usize, name: &str) -> Result<Expr, SyntaxError> {
        if let Some(op) = UnaryOp::from_function_name(name) {
            if *self.peek() != Token::LParen {
                return Err(SyntaxError::new(
                    self.offset(),
                    format!("expected `(` after function `{name}`"),
                ));
            }
            self.bump();
            let arg = self.expr()?;
            self.expect_rparen()?;
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        let leaf = match name {
            "t" => Expr::Var(Var::T),
            "s" => Expr::Var(Var::S),
            "u" => Expr::Var(Var::U),
            "pi" => Expr::Const(std::f64::consts::PI),
            "e" => Expr::Const(std::f64::consts::E),
            _ => return Err(SyntaxError::new(at, format!("unknown identifier `{name}`"))),
        };
        if *self.peek() == Token::LParen {
            return Err(SyntaxError::new(
                self.offset(),
                format!("`{name}` is not a function"),
            ));
        }
        Ok(leaf)
    }
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(text)?;
    if tokens.len() == 1 {
        return Err(SyntaxError::new(0, "empty input"));
    }
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr()?;
    match parser.peek() {
        Token::End => Ok(e),
        Token::RParen => Err(SyntaxError::new(
            parser.offset(),
            "unbalanced parenthesis: unexpected `)`",
        )),
        other => Err(SyntaxError::new(
            parser.offset(),
            format!("unexpected {other}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Bindings;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn kernel_expression_tree() {
        let e = parse("exp(-(t+s))*atan(u)").unwrap();
        let expected = Expr::Binary(
            BinaryOp::Mul,
            b(Expr::Unary(
                UnaryOp::Exp,
                b(Expr::Unary(
                    UnaryOp::Neg,
                    b(Expr::Binary(BinaryOp::Add, b(Expr::t()), b(Expr::s()))),
                )),
            )),
            b(Expr::Unary(UnaryOp::Atan, b(Expr::u()))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn power_and_division() {
        assert_eq!(
            parse("u^2").unwrap(),
            Expr::Binary(BinaryOp::Pow, b(Expr::u()), b(Expr::Const(2.0)))
        );
        assert_eq!(
            parse("1/(1-t)").unwrap(),
            Expr::Binary(
                BinaryOp::Div,
                b(Expr::Const(1.0)),
                b(Expr::Binary(BinaryOp::Sub, b(Expr::Const(1.0)), b(Expr::t())))
            )
        );
    }

    #[test]
    fn unbalanced_parenthesis_position() {
        let err = parse("exp(-t").unwrap_err();
        assert_eq!(err.position, 6);
        let err = parse("(t+1))").unwrap_err();
        assert_eq!(err.position, 5);
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse("").unwrap_err().position, 0);
        assert_eq!(parse("   ").unwrap_err().message, "empty input");
        assert_eq!(parse("t + x").unwrap_err().position, 4);
        assert!(parse("1.2.3").unwrap_err().message.contains("malformed"));
        assert!(parse("1.").unwrap_err().message.contains("malformed"));
        assert!(parse("t^u").unwrap_err().message.contains("constant"));
        assert!(parse("exp t").is_err());
        assert!(parse("t(1)").is_err());
        assert!(parse("2 # 3").is_err());
        assert!(parse("2 3").is_err());
    }

    #[test]
    fn subtraction_is_left_associative() {
        let v = parse("10-4-3").unwrap().eval::<f64>(&Bindings::new()).unwrap();
        assert_eq!(v, 3.0);
        let v = parse("64/4/2").unwrap().eval::<f64>(&Bindings::new()).unwrap();
        assert_eq!(v, 8.0);
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_negation() {
        assert_eq!(parse("2^3^2").unwrap().eval::<f64>(&Bindings::new()).unwrap(), 512.0);
        assert_eq!(parse("-2^2").unwrap().eval::<f64>(&Bindings::new()).unwrap(), -4.0);
        assert_eq!(parse("2^-1").unwrap().eval::<f64>(&Bindings::new()).unwrap(), 0.5);
        assert_eq!(parse("-2*3+1").unwrap().eval::<f64>(&Bindings::new()).unwrap(), -5.0);
    }

    #[test]
    fn folded_exponent_is_a_constant() {
        let e = parse("u^(1/2)").unwrap();
        assert_eq!(e, Expr::Binary(BinaryOp::Pow, b(Expr::u()), b(Expr::Const(0.5))));
    }

    #[test]
    fn numbers_and_constants() {
        let v = |s: &str| parse(s).unwrap().eval::<f64>(&Bindings::new()).unwrap();
        assert_eq!(v("1.5e3"), 1500.0);
        assert_eq!(v(".25"), 0.25);
        assert_eq!(v("2E-2"), 0.02);
        assert_eq!(v("pi"), std::f64::consts::PI);
        assert_eq!(v("2*e"), 2.0 * std::f64::consts::E);
        // `2e` has no exponent digits; the `e` is a separate identifier
        assert!(parse("2e").is_err());
    }
}
