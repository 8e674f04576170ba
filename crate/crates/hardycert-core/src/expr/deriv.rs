//! Symbolic differentiation on the piecewise-free fragment.

use super::build::*;
use super::Expr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    /// Differentiation across piecewise breakpoints is not defined here.
    #[error("cannot differentiate a piecewise expression")]
    Piecewise,
}

pub fn differentiate(e: &Expr) -> Result<Expr, DiffError> {
    Ok(match e {
        Expr::Num(_) => num(0.0),
        Expr::Var => num(1.0),
        Expr::Neg(inner) => neg(differentiate(inner)?),
        Expr::Add(a, b) => add(differentiate(a)?, differentiate(b)?),
        Expr::Mul(a, b) => add(
            mul(differentiate(a)?, (**b).clone()),
            mul((**a).clone(), differentiate(b)?),
        ),
        Expr::Div(a, b) => div(
            sub(
                mul(differentiate(a)?, (**b).clone()),
                mul((**a).clone(), differentiate(b)?),
            ),
            pow((**b).clone(), 2.0),
        ),
        Expr::Pow(base, c) => mul(
            mul(num(*c), pow((**base).clone(), c - 1.0)),
            differentiate(base)?,
        ),
        Expr::Exp(inner) => mul(Expr::Exp(inner.clone()), differentiate(inner)?),
        Expr::Ln(inner) => div(differentiate(inner)?, (**inner).clone()),
        Expr::Piecewise(_) => return Err(DiffError::Piecewise),
    })
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn central_diff(e: &Expr, x: f64, h: f64) -> f64 {
        (e.eval(x + h).unwrap() - e.eval(x - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn power_rule() {
        let d = parse("x^3").unwrap().differentiate().unwrap();
        assert_eq!(d.to_string(), "3*x^2");
    }

    #[test]
    fn exp_chain_rule() {
        let d = parse("exp(-x)").unwrap().differentiate().unwrap();
        assert_eq!(d.to_string(), "-exp(-x)");
    }

    #[test]
    fn product_rule_matches_closed_form() {
        // d/dx [x ln x] = ln x + 1
        let d = parse("x*ln(x)").unwrap().differentiate().unwrap();
        for &x in &[0.2, 1.0, 3.7] {
            assert_relative_eq!(d.eval(x).unwrap(), x.ln() + 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn piecewise_rejected() {
        let e = parse("piecewise([0,1):x;[1,inf):1;)").unwrap();
        assert_eq!(e.differentiate(), Err(DiffError::Piecewise));
    }

    // Random expressions of depth <= 5, checked against central differences
    // at random points in (0.1, 10).
    fn random_expr(rng: &mut StdRng, depth: usize) -> Expr {
        use super::super::build;
        if depth == 0 {
            return if rng.gen_bool(0.5) {
                build::var()
            } else {
                build::num(rng.gen_range(-3.0..3.0))
            };
        }
        match rng.gen_range(0..8) {
            0 => build::var(),
            1 => build::num(rng.gen_range(-3.0..3.0)),
            2 => Expr::Neg(Box::new(random_expr(rng, depth - 1))),
            3 => Expr::Add(
                Box::new(random_expr(rng, depth - 1)),
                Box::new(random_expr(rng, depth - 1)),
            ),
            4 => Expr::Mul(
                Box::new(random_expr(rng, depth - 1)),
                Box::new(random_expr(rng, depth - 1)),
            ),
            5 => Expr::Pow(
                Box::new(random_expr(rng, depth - 1)),
                rng.gen_range(-2..=3) as f64,
            ),
            6 => Expr::Exp(Box::new(Expr::Mul(
                Box::new(build::num(rng.gen_range(-1.0..1.0))),
                Box::new(random_expr(rng, depth - 1)),
            ))),
            // keep ln arguments positive: ln(1 + e^2) shapes
            _ => Expr::Ln(Box::new(Expr::Add(
                Box::new(build::num(1.0)),
                Box::new(Expr::Pow(Box::new(random_expr(rng, depth - 1)), 2.0)),
            ))),
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(0x9e3779b9);
        let mut checked = 0;
        let mut exprs = 0;
        while exprs < 100 {
            let e = random_expr(&mut rng, 5);
            let d = match e.differentiate() {
                Ok(d) => d,
                Err(_) => continue,
            };
            exprs += 1;
            for _ in 0..10 {
                let x = rng.gen_range(0.1..10.0);
                let h = 1e-6;
                let (sym, fd) = match (d.eval(x), (e.eval(x + h), e.eval(x - h))) {
                    (Ok(s), (Ok(_), Ok(_))) => (s, central_diff(&e, x, h)),
                    _ => continue, // domain hole at this sample
                };
                // central differences lose accuracy when values are huge
                if sym.abs() > 1e8 || !fd.is_finite() {
                    continue;
                }
                assert!(
                    (sym - fd).abs() <= 1e-5 * (1.0 + sym.abs()),
                    "mismatch for {} at x={}: sym={} fd={}",
                    e,
                    x,
                    sym,
                    fd
                );
                checked += 1;
            }
        }
        assert!(checked > 500, "only {} comparisons ran", checked);
    }
}
