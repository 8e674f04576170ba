//! A small closed expression language for weights and coefficient functions
//! on (0, ∞).
//!
//! Expressions are built from numeric literals, the variable `x`, the four
//! arithmetic operations, powers with constant real exponents, `exp`, `ln`,
//! and piecewise definitions over half-open intervals covering (0, ∞).
//! Values are immutable after construction and all operations are pure, so
//! an [`Expr`] can be shared freely between threads.

mod deriv;
mod parse;

pub use deriv::DiffError;
pub use parse::{parse, ParseError};

use std::fmt;
use thiserror::Error;

/// One branch of a piecewise expression: applies on the half-open
/// interval `[lo, hi)`, where `hi` may be `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub body: Expr,
}

/// Abstract syntax tree of the expression language.
///
/// Powers carry a constant real exponent rather than a full sub-expression;
/// this keeps symbolic differentiation total on the piecewise-free fragment.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Piecewise(Vec<Piece>),
}

/// What went wrong while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainErrorKind {
    /// `ln` of a non-positive argument.
    LogNonPositive,
    /// Division by zero.
    DivisionByZero,
    /// Negative base raised to a non-integer exponent.
    NegativeBaseFractionalPower,
    /// Zero raised to a negative exponent.
    ZeroToNegativePower,
    /// The result is not representable as a finite f64. The sign of the
    /// overflowing value is kept so quadrature can treat it as ±∞.
    Overflow { positive: bool },
    /// A piecewise expression was evaluated outside every guard.
    OutsidePiecewise,
}

/// Evaluation failed at `x`; `subexpr` is the offending subexpression
/// printed back in source syntax.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error at x = {x}: {kind:?} in `{subexpr}`")]
pub struct DomainError {
    pub x: f64,
    pub kind: DomainErrorKind,
    pub subexpr: String,
}

impl DomainError {
    fn new(x: f64, kind: DomainErrorKind, e: &Expr) -> Self {
        DomainError {
            x,
            kind,
            subexpr: e.to_string(),
        }
    }

    /// True when the error is a floating-point overflow rather than a
    /// genuine domain violation.
    pub fn is_overflow(&self) -> bool {
        matches!(self.kind, DomainErrorKind::Overflow { .. })
    }

    /// The signed infinity an overflow stands for.
    pub fn overflow_value(&self) -> Option<f64> {
        match self.kind {
            DomainErrorKind::Overflow { positive: true } => Some(f64::INFINITY),
            DomainErrorKind::Overflow { positive: false } => Some(f64::NEG_INFINITY),
            _ => None,
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var() -> Expr {
        Expr::Var
    }

    /// Evaluate at `x`. Domain violations are reported, never silently
    /// mapped to NaN; non-finite intermediate results are reported as
    /// overflow with their sign.
    pub fn eval(&self, x: f64) -> Result<f64, DomainError> {
        let v = self.eval_inner(x)?;
        if v.is_finite() {
            Ok(v)
        } else if v.is_nan() {
            // NaN with no earlier domain error means 0·∞ or ∞−∞ slipped
            // through a fold; report it as an overflow of unknown sign.
            Err(DomainError::new(
                x,
                DomainErrorKind::Overflow { positive: true },
                self,
            ))
        } else {
            Err(DomainError::new(
                x,
                DomainErrorKind::Overflow {
                    positive: v > 0.0,
                },
                self,
            ))
        }
    }

    fn eval_inner(&self, x: f64) -> Result<f64, DomainError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var => Ok(x),
            Expr::Neg(e) => Ok(-e.eval_inner(x)?),
            Expr::Add(a, b) => Ok(a.eval_inner(x)? + b.eval_inner(x)?),
            Expr::Mul(a, b) => Ok(a.eval_inner(x)? * b.eval_inner(x)?),
            Expr::Div(a, b) => {
                let d = b.eval_inner(x)?;
                if d == 0.0 {
                    return Err(DomainError::new(x, DomainErrorKind::DivisionByZero, self));
                }
                Ok(a.eval_inner(x)? / d)
            }
            Expr::Pow(base, c) => {
                let b = base.eval_inner(x)?;
                if b == 0.0 && *c < 0.0 {
                    return Err(DomainError::new(
                        x,
                        DomainErrorKind::ZeroToNegativePower,
                        self,
                    ));
                }
                if b < 0.0 && c.fract() != 0.0 {
                    return Err(DomainError::new(
                        x,
                        DomainErrorKind::NegativeBaseFractionalPower,
                        self,
                    ));
                }
                if b < 0.0 {
                    // integer exponent of a negative base
                    Ok(b.powi(*c as i32))
                } else {
                    Ok(b.powf(*c))
                }
            }
            Expr::Exp(e) => Ok(e.eval_inner(x)?.exp()),
            Expr::Ln(e) => {
                let v = e.eval_inner(x)?;
                if v <= 0.0 {
                    return Err(DomainError::new(x, DomainErrorKind::LogNonPositive, self));
                }
                Ok(v.ln())
            }
            Expr::Piecewise(pieces) => {
                for p in pieces {
                    if x >= p.lo && x < p.hi {
                        return p.body.eval_inner(x);
                    }
                }
                Err(DomainError::new(x, DomainErrorKind::OutsidePiecewise, self))
            }
        }
    }

    /// Symbolic derivative; errs on piecewise input. The result is folded
    /// so iterated derivatives stay small.
    pub fn differentiate(&self) -> Result<Expr, DiffError> {
        deriv::differentiate(self)
    }

    /// True if any piecewise node occurs in the tree.
    pub fn has_piecewise(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var => false,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Exp(e) | Expr::Ln(e) => e.has_piecewise(),
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.has_piecewise() || b.has_piecewise()
            }
            Expr::Piecewise(_) => true,
        }
    }

    /// Interior breakpoints of every piecewise node, sorted and deduplicated.
    /// Quadrature and sampling grids seed their partitions with these.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Num(_) | Expr::Var => {}
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Exp(e) | Expr::Ln(e) => {
                e.collect_breakpoints(out)
            }
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_breakpoints(out);
                b.collect_breakpoints(out);
            }
            Expr::Piecewise(pieces) => {
                for p in pieces {
                    if p.lo > 0.0 && p.lo.is_finite() {
                        out.push(p.lo);
                    }
                    p.body.collect_breakpoints(out);
                }
            }
        }
    }
}

// Display prints grammar-valid source text: parse(e.to_string()) evaluates
// equal to e. Negative literals are parenthesized since the number token
// itself is unsigned.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Expr {
    // prec: 0 = sum context, 1 = product context, 2 = power base / atom
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || !v.is_finite() {
                    write!(f, "({})", v)
                } else {
                    write!(f, "{}", v)
                }
            }
            Expr::Var => write!(f, "x"),
            Expr::Neg(e) => {
                if prec > 0 {
                    write!(f, "(-")?;
                    e.fmt_prec(f, 1)?;
                    write!(f, ")")
                } else {
                    write!(f, "-")?;
                    e.fmt_prec(f, 1)
                }
            }
            Expr::Add(a, b) => {
                let parens = prec > 0;
                if parens {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 0)?;
                if let Expr::Neg(inner) = &**b {
                    write!(f, "-")?;
                    inner.fmt_prec(f, 1)?;
                } else {
                    write!(f, "+")?;
                    b.fmt_prec(f, 1)?;
                }
                if parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Mul(a, b) => {
                let parens = prec > 1;
                if parens {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 1)?;
                write!(f, "*")?;
                b.fmt_prec(f, 2)?;
                if parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Div(a, b) => {
                let parens = prec > 1;
                if parens {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 1)?;
                write!(f, "/")?;
                b.fmt_prec(f, 2)?;
                if parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Pow(base, c) => {
                match &**base {
                    Expr::Num(v) if *v >= 0.0 && v.is_finite() => write!(f, "{}", v)?,
                    Expr::Var => write!(f, "x")?,
                    other => {
                        write!(f, "(")?;
                        other.fmt_prec(f, 0)?;
                        write!(f, ")")?;
                    }
                }
                if *c < 0.0 {
                    write!(f, "^({})", c)
                } else {
                    write!(f, "^{}", c)
                }
            }
            Expr::Exp(e) => {
                write!(f, "exp(")?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Ln(e) => {
                write!(f, "ln(")?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Piecewise(pieces) => {
                write!(f, "piecewise(")?;
                for p in pieces {
                    write!(f, "[{},", p.lo)?;
                    if p.hi.is_infinite() {
                        write!(f, "inf")?;
                    } else {
                        write!(f, "{}", p.hi)?;
                    }
                    write!(f, "):")?;
                    p.body.fmt_prec(f, 0)?;
                    write!(f, ";")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Folding constructors. These apply constant folding and the identity
/// rules (0 + e, 1·e, 0·e, e^0, e^1, -(-e)) and nothing deeper.
pub mod build {
    use super::Expr;

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var() -> Expr {
        Expr::Var
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            (Expr::Num(z), e) | (e, Expr::Num(z)) if z == 0.0 => e,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        add(a, neg(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            (Expr::Num(z), _) | (_, Expr::Num(z)) if z == 0.0 => Expr::Num(0.0),
            (Expr::Num(o), e) | (e, Expr::Num(o)) if o == 1.0 => e,
            (Expr::Num(m), e) | (e, Expr::Num(m)) if m == -1.0 => neg(e),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) if y != 0.0 => Expr::Num(x / y),
            (Expr::Num(z), b) if z == 0.0 && !matches!(b, Expr::Num(n) if n == 0.0) => {
                Expr::Num(0.0)
            }
            (a, Expr::Num(o)) if o == 1.0 => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(base: Expr, c: f64) -> Expr {
        if c == 0.0 {
            return Expr::Num(1.0);
        }
        if c == 1.0 {
            return base;
        }
        if let Expr::Num(v) = base {
            if v > 0.0 || (v >= 0.0 && c > 0.0) {
                return Expr::Num(v.powf(c));
            }
        }
        Expr::Pow(Box::new(base), c)
    }

    pub fn exp(e: Expr) -> Expr {
        match e {
            Expr::Num(v) if v.exp().is_finite() => Expr::Num(v.exp()),
            other => Expr::Exp(Box::new(other)),
        }
    }

    pub fn ln(e: Expr) -> Expr {
        match e {
            Expr::Num(v) if v > 0.0 => Expr::Num(v.ln()),
            other => Expr::Ln(Box::new(other)),
        }
    }
}
