//! Alternating sign functions annihilating weighted monomial moments, and
//! the compactly supported flat functions built from them by iterated
//! integration: g vanishes to order l−1 at both ends of [a, b] while
//! |g^{(l)}| = w inside.

use super::ExtremalError;
use crate::expr::{DomainError, Expr};
use crate::quad::{integrate_finite, integrate_finite_split, QuadConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// A ±1 step function on [a, b] with l alternation points.
#[derive(Debug, Clone, Serialize)]
pub struct SignPattern {
    pub a: f64,
    pub b: f64,
    /// Strictly increasing breakpoints inside (a, b).
    pub breakpoints: Vec<f64>,
    /// Sign on [a, t_1).
    pub starting_sign: f64,
}

impl SignPattern {
    /// σ(x) ∈ {+1, −1}; alternates across each breakpoint.
    pub fn eval(&self, x: f64) -> f64 {
        let flips = self.breakpoints.partition_point(|&t| t <= x);
        if flips % 2 == 0 {
            self.starting_sign
        } else {
            -self.starting_sign
        }
    }

    /// Segment boundaries a = e_0 < t_1 < … < t_l < e_{l+1} = b.
    fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.breakpoints.len() + 2);
        e.push(self.a);
        e.extend_from_slice(&self.breakpoints);
        e.push(self.b);
        e
    }

    /// Normalized annihilation residuals ∫ x^k w σ dx / ∫ x^k w dx for
    /// k = 0..l−1.
    pub fn moment_residuals(&self, w: &Expr, cfg: &QuadConfig) -> Result<Vec<f64>, ExtremalError> {
        let l = self.breakpoints.len();
        let edges = self.edges();
        let mut out = Vec::with_capacity(l);
        for k in 0..l {
            let mut signed = 0.0;
            let mut absolute = 0.0;
            for (m, pair) in edges.windows(2).enumerate() {
                let seg = integrate_finite(
                    |x| Ok(x.powi(k as i32) * w.eval(x)?),
                    pair[0],
                    pair[1],
                    cfg,
                )?
                .value;
                let sign = if m % 2 == 0 {
                    self.starting_sign
                } else {
                    -self.starting_sign
                };
                signed += sign * seg;
                absolute += seg.abs();
            }
            out.push(if absolute > 0.0 { signed / absolute } else { 0.0 });
        }
        Ok(out)
    }
}

fn moments(
    w: &Expr,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    l: usize,
    cfg: &QuadConfig,
) -> Result<(Vec<f64>, Vec<f64>), ExtremalError> {
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    edges.extend_from_slice(breakpoints);
    edges.push(b);
    let mut signed = vec![0.0f64; l];
    let mut absolute = vec![0.0f64; l];
    for (m, pair) in edges.windows(2).enumerate() {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for k in 0..l {
            let seg = integrate_finite(
                |x| Ok(x.powi(k as i32) * w.eval(x)?),
                pair[0],
                pair[1],
                cfg,
            )?
            .value;
            signed[k] += sign * seg;
            absolute[k] += seg.abs();
        }
    }
    Ok((signed, absolute))
}

/// Breakpoints t_j such that the cumulative weight splits evenly,
/// the standard first guess for the alternation points.
fn quantile_init(
    w: &Expr,
    a: f64,
    b: f64,
    l: usize,
    cfg: &QuadConfig,
) -> Result<Vec<f64>, ExtremalError> {
    let total = integrate_finite(|x| w.eval(x), a, b, cfg)?.value;
    let mut out = Vec::with_capacity(l);
    for j in 1..=l {
        let target = total * j as f64 / (l + 1) as f64;
        let (mut lo, mut hi) = (a, b);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let mass = integrate_finite(|x| w.eval(x), a, mid, cfg)?.value;
            if mass < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

fn newton_on_breakpoints(
    w: &Expr,
    a: f64,
    b: f64,
    mut t: Vec<f64>,
    tol: f64,
    cfg: &QuadConfig,
) -> Result<Vec<f64>, ExtremalError> {
    let l = t.len();
    let norm = |signed: &[f64], absolute: &[f64]| -> f64 {
        signed
            .iter()
            .zip(absolute)
            .map(|(s, ab)| if *ab > 0.0 { (s / ab).abs() } else { 0.0 })
            .fold(0.0, f64::max)
    };
    let (mut signed, mut absolute) = moments(w, a, b, &t, l, cfg)?;
    for _iter in 0..120 {
        if norm(&signed, &absolute) <= tol {
            return Ok(t);
        }
        // analytic Jacobian: moving t_j transfers mass between the two
        // adjacent segments, dM_k/dt_j = 2·ε_{j-1}·t_j^k·w(t_j)
        let mut jac = DMatrix::<f64>::zeros(l, l);
        for j in 0..l {
            let eps_left = if j % 2 == 0 { 1.0 } else { -1.0 };
            let wt = w.eval(t[j])?;
            for k in 0..l {
                jac[(k, j)] = 2.0 * eps_left * t[j].powi(k as i32) * wt;
            }
        }
        let rhs = DVector::from_iterator(l, signed.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| ExtremalError::Linear("singular breakpoint system".into()))?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = t
                .iter()
                .zip(step.iter())
                .map(|(x, d)| x + lambda * d)
                .collect();
            let ordered = cand.windows(2).all(|p| p[0] < p[1])
                && cand.first().map(|&x| x > a).unwrap_or(false)
                && cand.last().map(|&x| x < b).unwrap_or(false);
            if ordered {
                let (cs, ca) = moments(w, a, b, &cand, l, cfg)?;
                if norm(&cs, &ca) < norm(&signed, &absolute) {
                    t = cand;
                    signed = cs;
                    absolute = ca;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(&signed, &absolute) <= tol {
        Ok(t)
    } else {
        Err(ExtremalError::NoConvergence {
            iterations: 120,
            residuals: signed,
        })
    }
}

/// Breakpoints t_1 < … < t_l in (a, b) such that the alternating ±1 step
/// function annihilates the moments ∫ x^k w σ dx for k = 0..l−1. Starts
/// from weight quantiles, then continuation from the (l−1)-point solution,
/// then seeded random restarts.
pub fn construct_sign_function(
    w: &Expr,
    a: f64,
    b: f64,
    l: usize,
    tol: f64,
    cfg: &QuadConfig,
) -> Result<SignPattern, ExtremalError> {
    assert!(l >= 1 && b > a && tol > 0.0);
    for i in 0..=32 {
        let x = a + (b - a) * i as f64 / 32.0;
        if let Ok(v) = w.eval(x) {
            if v < 0.0 {
                return Err(ExtremalError::InvalidWeight { x, value: v });
            }
        }
    }

    let finish = |t: Vec<f64>| SignPattern {
        a,
        b,
        breakpoints: t,
        starting_sign: 1.0,
    };

    let quantiles = quantile_init(w, a, b, l, cfg)?;
    match newton_on_breakpoints(w, a, b, quantiles.clone(), tol, cfg) {
        Ok(t) => return Ok(finish(t)),
        Err(ExtremalError::Domain(e)) => return Err(ExtremalError::Domain(e)),
        Err(_) => {}
    }

    // continuation: solve with l−1 points and insert one more near b
    if l >= 2 {
        if let Ok(prev) = construct_sign_function(w, a, b, l - 1, tol.max(1e-8), cfg) {
            let mut t = prev.breakpoints;
            let last = *t.last().unwrap();
            t.push(0.5 * (last + b));
            if let Ok(t) = newton_on_breakpoints(w, a, b, t, tol, cfg) {
                return Ok(finish(t));
            }
        }
    }

    // seeded random restarts around the quantile guess
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut last_err = None;
    for _ in 0..10 {
        let mut t: Vec<f64> = quantiles
            .iter()
            .map(|&q| {
                let jitter = rng.gen_range(-0.4..0.4) * (b - a) / (l as f64 + 1.0);
                (q + jitter).clamp(a + 1e-9 * (b - a), b - 1e-9 * (b - a))
            })
            .collect();
        t.sort_by(|x, y| x.partial_cmp(y).unwrap());
        match newton_on_breakpoints(w, a, b, t, tol, cfg) {
            Ok(t) => return Ok(finish(t)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(ExtremalError::NoConvergence {
        iterations: 0,
        residuals: vec![],
    }))
}

/// A function supported on [a, b] with |g^{(l)}| = w there and
/// g, g', …, g^{(l−1)} vanishing at both ends, realized through the
/// iterated-integral formula g(x) = 1/(l−1)!·∫_a^x (x−t)^{l−1} w σ dt.
#[derive(Debug, Clone)]
pub struct FlatFunction {
    pub l: usize,
    pub a: f64,
    pub b: f64,
    pub weight: Expr,
    pub sign: SignPattern,
    cfg: QuadConfig,
}

pub fn construct_flat_function(
    w: &Expr,
    a: f64,
    b: f64,
    l: usize,
    tol: f64,
    cfg: &QuadConfig,
) -> Result<FlatFunction, ExtremalError> {
    let sign = construct_sign_function(w, a, b, l, tol, cfg)?;
    Ok(FlatFunction {
        l,
        a,
        b,
        weight: w.clone(),
        sign,
        cfg: cfg.clone(),
    })
}

impl FlatFunction {
    pub fn eval(&self, x: f64) -> Result<f64, ExtremalError> {
        self.deriv(0, x)
    }

    /// g^{(j)}(x) for j ≤ l; zero outside [a, b].
    pub fn deriv(&self, j: usize, x: f64) -> Result<f64, ExtremalError> {
        assert!(j <= self.l);
        if x < self.a || x > self.b {
            return Ok(0.0);
        }
        if j == self.l {
            return Ok(self.weight.eval(x)? * self.sign.eval(x));
        }
        let order = self.l - 1 - j; // kernel power (x−t)^order
        let factorial: f64 = (1..=order).map(|i| i as f64).product::<f64>().max(1.0);
        if x <= self.a {
            return Ok(0.0);
        }
        let splits: Vec<f64> = self
            .sign
            .breakpoints
            .iter()
            .copied()
            .filter(|&t| t < x)
            .collect();
        let sigma = &self.sign;
        let w = &self.weight;
        let integrand = |t: f64| -> Result<f64, DomainError> {
            Ok((x - t).powi(order as i32) * w.eval(t)? * sigma.eval(t))
        };
        let val = integrate_finite_split(integrand, self.a, x, &splits, &self.cfg)?;
        Ok(val.value / factorial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn single_breakpoint_unit_weight_is_midpoint() {
        let w = parse("1").unwrap();
        let sp = construct_sign_function(&w, 0.0, 1.0, 1, 1e-12, &cfg()).unwrap();
        assert_relative_eq!(sp.breakpoints[0], 0.5, max_relative = 1e-10);
    }

    #[test]
    fn single_breakpoint_linear_weight() {
        // ∫_0^t x = ∫_t^1 x  ⇒  t = 1/√2
        let w = parse("x").unwrap();
        let sp = construct_sign_function(&w, 0.0, 1.0, 1, 1e-12, &cfg()).unwrap();
        assert_relative_eq!(
            sp.breakpoints[0],
            std::f64::consts::FRAC_1_SQRT_2,
            max_relative = 1e-10
        );
    }

    #[test]
    fn two_breakpoints_match_symmetric_ansatz_oracle() {
        // oracle: bisection on M_0 under the symmetric ansatz t2 = 1 − t1
        // for w = 1 on [0,1]; M_0(t) = 4t − 1 vanishes at t = 1/4, and the
        // symmetric pair also kills M_1.
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..60 {
            let t = 0.5 * (lo + hi);
            let m0 = 4.0 * t - 1.0;
            if m0 < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
        }
        let t1 = 0.5 * (lo + hi);
        let t2 = 1.0 - t1;
        let m1 = t1 * t1 / 2.0 - ((t2 * t2 - t1 * t1) / 2.0) + (1.0 - t2 * t2) / 2.0;
        assert_abs_diff_eq!(m1, 0.0, epsilon = 1e-12);

        let w = parse("1").unwrap();
        let sp = construct_sign_function(&w, 0.0, 1.0, 2, 1e-12, &cfg()).unwrap();
        assert_relative_eq!(sp.breakpoints[0], t1, max_relative = 1e-9);
        assert_relative_eq!(sp.breakpoints[1], t2, max_relative = 1e-9);
    }

    #[test]
    fn moments_annihilated_up_to_five() {
        for src in ["1", "x", "exp(-x)"] {
            let w = parse(src).unwrap();
            for l in 1..=5 {
                let sp = construct_sign_function(&w, 1.0, 2.0, l, 1e-10, &cfg()).unwrap();
                assert_eq!(sp.breakpoints.len(), l);
                let res = sp.moment_residuals(&w, &cfg()).unwrap();
                for (k, r) in res.iter().enumerate() {
                    assert!(
                        r.abs() < 1e-9,
                        "moment {} residual {} too large for w = {}, l = {}",
                        k,
                        r,
                        src,
                        l
                    );
                }
            }
        }
    }

    #[test]
    fn sign_alternates_and_is_unimodular() {
        let w = parse("1").unwrap();
        let sp = construct_sign_function(&w, 0.0, 1.0, 3, 1e-10, &cfg()).unwrap();
        let mut prev = sp.eval(1e-6);
        assert_eq!(prev.abs(), 1.0);
        for i in 0..3 {
            let mid = if i + 1 < 3 {
                0.5 * (sp.breakpoints[i] + sp.breakpoints[i + 1])
            } else {
                0.5 * (sp.breakpoints[i] + 1.0)
            };
            let here = sp.eval(mid);
            assert_eq!(here, -prev);
            prev = here;
        }
    }

    #[test]
    fn tent_map_from_unit_weight() {
        // l = 1, w = 1 on [0,1]: g(x) = x up to 1/2, then 1 − x
        let w = parse("1").unwrap();
        let g = construct_flat_function(&w, 0.0, 1.0, 1, 1e-12, &cfg()).unwrap();
        assert_relative_eq!(g.eval(0.25).unwrap(), 0.25, max_relative = 1e-9);
        assert_relative_eq!(g.eval(0.5).unwrap(), 0.5, max_relative = 1e-9);
        assert_relative_eq!(g.eval(0.75).unwrap(), 0.25, max_relative = 1e-8);
        assert_abs_diff_eq!(g.eval(1.0).unwrap(), 0.0, epsilon = 1e-10);
        assert_eq!(g.eval(1.5).unwrap(), 0.0);
    }

    #[test]
    fn top_derivative_reproduces_weight() {
        let w = parse("exp(-x)").unwrap();
        let g = construct_flat_function(&w, 1.0, 2.0, 3, 1e-10, &cfg()).unwrap();
        for i in 0..100 {
            let x = 1.0 + (i as f64 + 0.5) / 100.0;
            let top = g.deriv(3, x).unwrap();
            assert_relative_eq!(top.abs(), w.eval(x).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn boundary_derivatives_vanish() {
        let w = parse("x").unwrap();
        let l = 4;
        let g = construct_flat_function(&w, 1.0, 2.0, l, 1e-10, &cfg()).unwrap();
        for j in 0..l {
            assert_abs_diff_eq!(g.deriv(j, 1.0).unwrap(), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(g.deriv(j, 2.0).unwrap(), 0.0, epsilon = 1e-8);
        }
    }
}
