//! Recursive-descent parser for the weight-expression grammar.
//!
//! ```text
//! expr     := ('+'|'-')? term (('+'|'-') term)*
//! term     := factor (('*'|'/') factor)*
//! factor   := base ('^' exponent)?
//! exponent := signed-number | '(' signed-number ')'
//! base     := number | 'x' | '(' expr ')' | 'exp(' expr ')' | 'ln(' expr ')'
//!           | 'piecewise(' (interval ':' expr ';')+ ')'
//! interval := '[' number ',' (number|'inf') ')'
//! ```
//!
//! Whitespace is insignificant. Numbers are unsigned decimals with an
//! optional exponent part; the optional leading sign on `expr` supplies
//! negation.

use super::{Expr, Piece};
use thiserror::Error;

/// Parse failure with the byte offset into the source, a description of
/// what was expected, and an excerpt of the offending line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: expected {expected} in `{excerpt}`")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub excerpt: String,
}

/// Parse UTF-8 source text into an [`Expr`].
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: source.as_bytes(),
        text: source,
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("end of input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, expected: &str) -> ParseError {
        // one line of context around the offset
        let start = self.text[..self.pos.min(self.text.len())]
            .rfind('\n')
            .map(|i| i + 1)
            .unwrap_or(0);
        let end = self.text[start..]
            .find('\n')
            .map(|i| start + i)
            .unwrap_or(self.text.len());
        ParseError {
            offset: self.pos,
            expected: expected.to_string(),
            excerpt: self.text[start..end].to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, what: &str) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let negate = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                true
            }
            Some(b'+') => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        let mut acc = self.term()?;
        if negate {
            acc = Expr::Neg(Box::new(acc));
        }
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Add(Box::new(acc), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Add(Box::new(acc), Box::new(Expr::Neg(Box::new(rhs))));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::Mul(Box::new(acc), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::Div(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let c = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), c));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64, ParseError> {
        if self.eat(b'(') {
            let c = self.signed_number()?;
            self.expect(b')', "\")\"")?;
            Ok(c)
        } else {
            self.signed_number()
        }
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let sign = if self.eat(b'-') {
            -1.0
        } else {
            self.eat(b'+');
            1.0
        };
        Ok(sign * self.number()?)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Num(self.number()?)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "\")\"")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let word = self.ident();
                match word {
                    "x" => Ok(Expr::Var),
                    "exp" => {
                        self.expect(b'(', "\"(\" after exp")?;
                        let e = self.expr()?;
                        self.expect(b')', "\")\"")?;
                        Ok(Expr::Exp(Box::new(e)))
                    }
                    "ln" => {
                        self.expect(b'(', "\"(\" after ln")?;
                        let e = self.expr()?;
                        self.expect(b')', "\")\"")?;
                        Ok(Expr::Ln(Box::new(e)))
                    }
                    "piecewise" => {
                        self.expect(b'(', "\"(\" after piecewise")?;
                        self.piecewise_body()
                    }
                    _ => {
                        self.pos = start;
                        Err(self.err("a known identifier (x, exp, ln, piecewise)"))
                    }
                }
            }
            _ => Err(self.err("a number, \"x\", or \"(\"")),
        }
    }

    fn ident(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn piecewise_body(&mut self) -> Result<Expr, ParseError> {
        let mut pieces = Vec::new();
        loop {
            let interval_start = self.pos;
            self.expect(b'[', "\"[\" opening an interval")?;
            let lo = self.number()?;
            self.expect(b',', "\",\"")?;
            let hi = if self.peek().map(|c| c.is_ascii_alphabetic()) == Some(true) {
                let w = self.ident();
                if w != "inf" {
                    return Err(self.err("\"inf\" or a number"));
                }
                f64::INFINITY
            } else {
                self.number()?
            };
            self.expect(b')', "\")\" closing an interval")?;
            self.expect(b':', "\":\"")?;
            let body = self.expr()?;
            self.expect(b';', "\";\"")?;
            if hi <= lo {
                self.pos = interval_start;
                return Err(self.err("an interval with lo < hi"));
            }
            pieces.push(Piece { lo, hi, body });
            if self.eat(b')') {
                break;
            }
        }
        // guards must tile (0, inf): start at 0, be contiguous, end at inf
        let ok = pieces.first().map(|p| p.lo == 0.0).unwrap_or(false)
            && pieces.last().map(|p| p.hi.is_infinite()).unwrap_or(false)
            && pieces.windows(2).all(|w| w[0].hi == w[1].lo);
        if !ok {
            return Err(self.err("piecewise guards covering (0, inf) contiguously from 0"));
        }
        Ok(Expr::Piecewise(pieces))
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos == start || (self.pos == start + 1 && self.src[start] == b'.') {
            self.pos = start;
            return Err(self.err("a number"));
        }
        // optional exponent part
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                // not an exponent after all (e.g. "2*exp(x)" never reaches
                // here, but "2e" alone should fail cleanly)
                self.pos = mark;
            }
        }
        self.text[start..self.pos]
            .parse::<f64>()
            .map_err(|_| self.err("a number"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_variable() {
        assert_eq!(parse("x").unwrap(), Expr::Var);
    }

    #[test]
    fn parses_product_structure() {
        let e = parse("x^2 * exp(-x)").unwrap();
        assert!(matches!(e, Expr::Mul(_, _)));
    }

    #[test]
    fn unbalanced_paren_offset() {
        let err = parse("x^(-1").unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(err.expected.contains(')'));
        assert_eq!(err.excerpt, "x^(-1");
    }

    #[test]
    fn unbound_identifier_rejected() {
        let err = parse("y + 1").unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.expected.contains("known identifier"));
        let err = parse("sin(x)").unwrap_err();
        assert!(err.expected.contains("known identifier"));
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(parse("1.5e-3").unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse("2E4").unwrap(), Expr::Num(2e4));
        assert_eq!(parse(".5").unwrap(), Expr::Num(0.5));
    }

    #[test]
    fn precedence() {
        // 1+2*3^2 = 19
        let e = parse("1+2*3^2").unwrap();
        assert_eq!(e.eval(1.0).unwrap(), 19.0);
        // 8/2/2 = 2 (left associative)
        assert_eq!(parse("8/2/2").unwrap().eval(1.0).unwrap(), 2.0);
        // 1-2-3 = -4
        assert_eq!(parse("1-2-3").unwrap().eval(1.0).unwrap(), -4.0);
    }

    #[test]
    fn leading_sign() {
        assert_eq!(parse("-1").unwrap().eval(1.0).unwrap(), -1.0);
        assert_eq!(parse("-x^2").unwrap().eval(3.0).unwrap(), -9.0);
        assert_eq!(parse("(-x)^2").unwrap().eval(3.0).unwrap(), 9.0);
    }

    #[test]
    fn piecewise_guards_must_tile() {
        assert!(parse("piecewise([0,1):1;[1,inf):2;)").is_ok());
        assert!(parse("piecewise([0,1):1;[2,inf):2;)").is_err());
        assert!(parse("piecewise([1,inf):2;)").is_err());
        assert!(parse("piecewise([0,2):1;)").is_err());
    }

    #[test]
    fn whitespace_insignificant() {
        let a = parse("x^2*exp(-x)+1").unwrap();
        let b = parse("  x ^ 2 * exp( - x ) + 1 ").unwrap();
        for &x in &[0.1, 1.0, 5.0] {
            assert_eq!(a.eval(x).unwrap(), b.eval(x).unwrap());
        }
    }
}
